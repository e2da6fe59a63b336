// sfnet: two-pathway video-network workbench.
// Subcommands: describe, cost, sweep, gradcheck, synth-gen, train-toy, eval,
// lr-dump, detect-eval. Exit codes: 0 success, 1 validation failure, 2 usage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sfnet/arch.hpp"
#include "sfnet/data.hpp"
#include "sfnet/detect.hpp"
#include "sfnet/eval.hpp"
#include "sfnet/net.hpp"
#include "sfnet/train.hpp"

namespace {

using namespace sfnet;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << text;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
}

struct CommonOpts {
    std::string config_path;
    std::string out_path;
    uint64_t seed = 1;
    int spatial = 256;
    bool structured = false;
    std::vector<std::string> overrides;  // key=value, applied after config parse
};

ArchConfig resolve_config(const CommonOpts& opts) {
    ArchConfig config;
    if (!opts.config_path.empty()) config = load_arch_config(opts.config_path);
    for (const std::string& kv : opts.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_spatial = true) {
    cmd->add_option("--config", opts.config_path, "flat key=value config file");
    cmd->add_option("--seed", opts.seed, "deterministic seed");
    cmd->add_option("--out", opts.out_path, "output path (stdout when omitted)");
    if (with_spatial) cmd->add_option("--spatial", opts.spatial, "input side (default 256)");
    cmd->add_flag("--structured", opts.structured, "line-delimited structured text output");
    cmd->add_option("--set", opts.overrides, "config overrides key=value (last wins)");
}

// tiny instance used by gradcheck: T=2 tau=4 omega=2 phi=1/2, one block per
// stage, 8x8 input, 3 classes
ArchConfig tiny_config(LateralKind lateral, FusionKind fusion) {
    ArchConfig c;
    c.T = 2;
    c.tau = 4;
    c.omega = 2;
    c.phi = Rational{1, 2};
    c.blocks = {1, 1, 1, 1};
    c.base_width = 8;
    c.num_classes = 3;
    c.lateral = lateral;
    c.fusion = fusion;
    c.dropout = 0.0;
    return c;
}

PathwayInput tiny_input(const ArchConfig& config, uint64_t seed, int side, int batch) {
    Rng rng(seed, stream_id("tiny-input"));
    auto fill = [&](int channels, int frames) {
        Tensor t(Shape{batch, channels, frames, side, side});
        for (int64_t i = 0; i < t.count(); ++i) t[i] = rng.next_double();
        return t;
    };
    PathwayInput in;
    if (config.has_slow()) in.slow = fill(3, config.T);
    if (config.has_fast())
        in.fast = fill(config.fast_input_channels(), config.omega * config.T);
    return in;
}

int cmd_describe(const CommonOpts& opts, bool spatial_given) {
    ArchConfig config = resolve_config(opts);
    const int side = spatial_given ? opts.spatial : 224;  // reference table geometry
    StageGraph graph = build_graph(config);
    ShapeReport report = infer_shapes(graph, RawClipGeom{config.T * config.tau, side});
    emit(opts.structured ? shape_report_structured(report) : shape_report_tsv(report),
         opts.out_path);
    return 0;
}

int cmd_cost(const CommonOpts& opts) {
    ArchConfig config = resolve_config(opts);
    StageGraph graph = build_graph(config);
    CostReport report = count_flops(graph, RawClipGeom{config.T * config.tau, opts.spatial});
    emit(opts.structured ? cost_report_structured(report) : cost_report_tsv(report),
         opts.out_path);
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis, const std::string& values_csv) {
    ArchConfig config = resolve_config(opts);
    std::vector<std::string> values;
    std::stringstream ss(values_csv);
    std::string part;
    while (std::getline(ss, part, ',')) values.push_back(part);
    auto rows = sweep_variants(config, axis, values,
                               RawClipGeom{config.T * config.tau, opts.spatial});
    emit(sweep_tsv(rows), opts.out_path);
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
    struct Case {
        const char* name;
        LateralKind lateral;
        FusionKind fusion;
    };
    const Case cases[] = {
        {"time-strided-conv/concat", LateralKind::TimeStridedConv, FusionKind::Concat},
        {"time-strided-sample/concat", LateralKind::TimeStridedSample, FusionKind::Concat},
        {"time-to-channel/sum", LateralKind::TimeToChannel, FusionKind::Sum},
    };
    double worst = 0.0;
    int64_t coords = 0;
    std::ostringstream report;
    for (const Case& c : cases) {
        ArchConfig config = tiny_config(c.lateral, c.fusion);
        StageGraph graph = build_graph(config);
        PathwayInput input = tiny_input(config, opts.seed, 8, 2);
        NetGradCheck r = gradcheck_network(graph, opts.seed, input, {0, 2}, 1e-5, 80);
        char line[160];
        std::snprintf(line, sizeof line,
                      "lateral=%s coords=%lld skipped=%lld max_rel_error=%.3e\n", c.name,
                      static_cast<long long>(r.coords), static_cast<long long>(r.skipped),
                      r.max_rel_error);
        report << line;
        worst = std::max(worst, r.max_rel_error);
        coords += r.coords;
    }
    char line[160];
    std::snprintf(line, sizeof line, "total coords=%lld max_rel_error=%.3e\n",
                  static_cast<long long>(coords), worst);
    report << line;
    emit(report.str(), opts.out_path);
    return worst < 1e-4 ? 0 : 1;
}

int cmd_synth_gen(const CommonOpts& opts, int classes, int clips_per_class, int frames, int side,
                  int patch) {
    if (opts.out_path.empty()) throw InputError("synth-gen requires --out DIR");
    CorpusGeometry geom;
    geom.frames = frames;
    geom.side = side;
    geom.patch = patch;
    auto corpus = generate_synthetic_corpus(opts.seed, classes, clips_per_class, geom);
    // split each class block in half: first half train, second half val
    std::vector<RawVideo> train, val;
    for (int k = 0; k < classes; ++k)
        for (int j = 0; j < clips_per_class; ++j) {
            const auto& v = corpus[static_cast<size_t>(k) * clips_per_class + j];
            (j < clips_per_class / 2 ? train : val).push_back(v);
        }
    write_corpus((std::filesystem::path(opts.out_path) / "train").string(), train);
    write_corpus((std::filesystem::path(opts.out_path) / "val").string(), val);
    std::cout << "wrote " << train.size() << " train / " << val.size() << " val clips under "
              << opts.out_path << "\n";
    return 0;
}

struct TrainKeys {
    double eta = 0.1;
    int n_max = 2000;
    int warmup = 100;
    double warmup_start = 0.0;
    int batch = 8;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    int eval_every = 250;
    int checkpoint_every = 0;
    int crop = 16;
    int scale_min = 16;
    int scale_max = 16;
    bool flip = false;
};

int cmd_train_toy(const CommonOpts& opts, const std::string& data_dir, const TrainKeys& keys) {
    ArchConfig config = resolve_config(opts);
    std::vector<RawVideo> train, val;
    if (!data_dir.empty()) {
        train = load_corpus((std::filesystem::path(data_dir) / "train").string());
        val = load_corpus((std::filesystem::path(data_dir) / "val").string());
    } else {
        auto corpus = generate_synthetic_corpus(opts.seed, config.num_classes, 100);
        for (size_t i = 0; i < corpus.size(); ++i)
            (i % 100 < 50 ? train : val).push_back(corpus[i]);
    }

    StageGraph graph = build_graph(config);
    Network net(graph, init_params(graph, opts.seed), RunMode::Train);

    TrainOptions topt;
    topt.batch = keys.batch;
    topt.sched = LrSchedule{keys.eta, keys.n_max, keys.warmup, keys.warmup_start};
    topt.momentum = keys.momentum;
    topt.weight_decay = keys.weight_decay;
    topt.seed = opts.seed;
    topt.augment = AugmentParams{keys.crop, keys.scale_min, keys.scale_max, keys.flip};
    topt.eval_every = keys.eval_every;
    topt.checkpoint_every = keys.checkpoint_every;
    topt.out_dir = opts.out_path;
    TrainResult result = train_loop(net, train, val, topt);

    const std::string log = train_log_text(result.log);
    if (!opts.out_path.empty()) {
        std::filesystem::create_directories(opts.out_path);
        write_text((std::filesystem::path(opts.out_path) / "train_log.txt").string(), log);
        save_checkpoint((std::filesystem::path(opts.out_path) / "final.sfck").string(),
                        net.params());
    } else {
        std::cout << log;
    }
    char line[128];
    std::snprintf(line, sizeof line, "final train_top1=%.6g val_top1=%.6g\n",
                  result.final_train_top1, result.final_val_top1);
    std::cout << line;
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& data_dir, const std::string& ckpt,
             int clips, int crops) {
    ArchConfig config = resolve_config(opts);
    auto videos = load_corpus(data_dir);
    StageGraph graph = build_graph(config);
    Network net(graph, load_checkpoint(ckpt), RunMode::Eval);

    EvalViewParams view{clips, crops, opts.spatial};
    std::vector<std::vector<double>> video_scores;
    std::vector<int> labels;
    std::vector<std::vector<int>> label_sets;
    for (const auto& video : videos) {
        auto views = sample_test_views(video, config, view);
        ViewScores vs;
        vs.clips = clips;
        vs.crops = crops;
        for (const auto& clip : views) {
            Tensor logits = net.forward(clip_to_input(clip, config));
            Tensor scores = config.head == HeadKind::ClassifySigmoid ? sigmoid(logits)
                                                                     : softmax(logits);
            std::vector<double> row(static_cast<size_t>(scores.count()));
            for (int64_t i = 0; i < scores.count(); ++i) row[static_cast<size_t>(i)] = scores[i];
            vs.rows.push_back(std::move(row));
        }
        video_scores.push_back(aggregate_views(
            vs, config.head == HeadKind::ClassifySigmoid ? AggregationKind::SigmoidTemporalMax
                                                         : AggregationKind::SoftmaxMean));
        labels.push_back(video.labels.empty() ? 0 : video.labels[0]);
        label_sets.push_back(video.labels);
    }

    std::vector<std::pair<std::string, double>> metrics;
    metrics.emplace_back("top1", topk_accuracy(video_scores, labels, 1));
    metrics.emplace_back("top5", topk_accuracy(video_scores, labels,
                                               std::min(5, config.num_classes)));
    std::string report;
    if (config.head == HeadKind::ClassifySigmoid) {
        ApResult ap = multilabel_map(video_scores, label_sets, config.num_classes);
        report = metric_report_text(metrics, &ap);
    } else {
        report = metric_report_text(metrics, nullptr);
    }
    emit(report, opts.out_path);
    if (!opts.out_path.empty()) std::cout << report;
    return 0;
}

int cmd_lr_dump(const CommonOpts& opts, double eta, int n_max, int warmup, double warmup_start) {
    LrSchedule sched{eta, n_max, warmup, warmup_start};
    std::ostringstream os;
    char line[64];
    for (int n = 0; n <= n_max; ++n) {
        std::snprintf(line, sizeof line, "%d\t%.12g\n", n, lr_at(sched, n));
        os << line;
    }
    emit(os.str(), opts.out_path);
    return 0;
}

int cmd_detect_eval(const CommonOpts& opts, const std::string& det_path,
                    const std::string& gt_path, int classes, double iou_thresh) {
    auto frames = read_detection_frames(det_path, gt_path);
    ApResult ap = frame_map(frames, classes, iou_thresh);
    std::vector<std::pair<std::string, double>> metrics;
    metrics.emplace_back("frame_map", ap.map);
    const std::string report = metric_report_text(metrics, &ap);
    std::cout << report;
    if (!opts.out_path.empty()) write_text(opts.out_path, per_class_ap_tsv(ap));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-pathway video network workbench"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* describe = app.add_subcommand("describe", "per-stage output-size table");
    add_common(describe, opts);

    auto* cost = app.add_subcommand("cost", "multiply-add and parameter report");
    add_common(cost, opts);

    auto* sweep = app.add_subcommand("sweep", "cost tradeoff table over one config axis");
    std::string axis, values_csv;
    sweep->add_option("--axis", axis, "config field to vary")->required();
    sweep->add_option("--values", values_csv, "comma-separated values")->required();
    add_common(sweep, opts);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gradcheck, opts, false);

    auto* synth = app.add_subcommand("synth-gen", "write a synthetic motion corpus");
    int classes = 4, clips_per_class = 100, frames = 16, side = 16, patch = 6;
    synth->add_option("--classes", classes);
    synth->add_option("--clips-per-class", clips_per_class);
    synth->add_option("--frames", frames);
    synth->add_option("--side", side);
    synth->add_option("--patch", patch);
    add_common(synth, opts, false);

    auto* train = app.add_subcommand("train-toy", "desk-scale training loop");
    std::string data_dir;
    TrainKeys keys;
    train->add_option("--data", data_dir, "corpus dir with train/ and val/");
    train->add_option("--eta", keys.eta);
    train->add_option("--n-max", keys.n_max);
    train->add_option("--warmup", keys.warmup);
    train->add_option("--batch", keys.batch);
    train->add_option("--weight-decay", keys.weight_decay);
    train->add_option("--eval-every", keys.eval_every);
    train->add_option("--checkpoint-every", keys.checkpoint_every);
    train->add_option("--crop", keys.crop);
    train->add_option("--scale-min", keys.scale_min);
    train->add_option("--scale-max", keys.scale_max);
    train->add_flag("--flip", keys.flip);
    add_common(train, opts, false);

    auto* eval_cmd = app.add_subcommand("eval", "multi-view inference evaluation");
    std::string ckpt;
    int clips = 10, crops = 3;
    eval_cmd->add_option("--data", data_dir, "corpus dir of .sfv clips")->required();
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--clips", clips);
    eval_cmd->add_option("--crops", crops);
    add_common(eval_cmd, opts);

    auto* lr = app.add_subcommand("lr-dump", "print the learning-rate schedule");
    double eta = 1.6, warmup_start = 0.0;
    int n_max = 100, warmup = 0;
    lr->add_option("--eta", eta);
    lr->add_option("--n-max", n_max);
    lr->add_option("--warmup", warmup);
    lr->add_option("--warmup-start", warmup_start);
    add_common(lr, opts, false);

    auto* det = app.add_subcommand("detect-eval", "frame-level mAP from interchange files");
    std::string det_path, gt_path;
    int det_classes = 60;
    double iou_thresh = 0.5;
    det->add_option("--detections", det_path)->required();
    det->add_option("--ground-truth", gt_path)->required();
    det->add_option("--classes", det_classes);
    det->add_option("--iou", iou_thresh);
    add_common(det, opts, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;  // usage errors exit 2, help exits 0
    }

    try {
        if (app.got_subcommand(describe))
            return cmd_describe(opts, describe->count("--spatial") > 0);
        if (app.got_subcommand(cost)) return cmd_cost(opts);
        if (app.got_subcommand(sweep)) return cmd_sweep(opts, axis, values_csv);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(opts);
        if (app.got_subcommand(synth))
            return cmd_synth_gen(opts, classes, clips_per_class, frames, side, patch);
        if (app.got_subcommand(train)) return cmd_train_toy(opts, data_dir, keys);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(opts, data_dir, ckpt, clips, crops);
        if (app.got_subcommand(lr)) return cmd_lr_dump(opts, eta, n_max, warmup, warmup_start);
        if (app.got_subcommand(det))
            return cmd_detect_eval(opts, det_path, gt_path, det_classes, iou_thresh);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
