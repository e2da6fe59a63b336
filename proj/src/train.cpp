#include "sfnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sfnet {

double lr_at(const LrSchedule& sched, int n) {
    if (n < 0 || n > sched.n_max)
        throw InputError("lr_at: iteration " + std::to_string(n) + " outside [0, " +
                         std::to_string(sched.n_max) + "]");
    auto cosine = [&](int i) {
        return sched.eta * 0.5 * (std::cos(static_cast<double>(i) / sched.n_max * M_PI) + 1.0);
    };
    if (n < sched.warmup_iters) {
        const double target = cosine(sched.warmup_iters);
        const double f = static_cast<double>(n) / sched.warmup_iters;
        return sched.warmup_start_lr + (target - sched.warmup_start_lr) * f;
    }
    return cosine(n);
}

void sgd_step(ParamStore& params, const ParamStore& grads, OptimState& state, double lr) {
    for (const auto& [name, g] : grads.entries) {
        if (ParamStore::is_running_stat(name)) continue;
        Tensor& p = params.at(name);
        if (!p.same_shape(g))
            throw DimensionError("sgd_step: gradient shape mismatch for " + name);
        if (!g.all_finite()) throw NumericError("sgd_step: non-finite gradient in " + name);
        auto [it, fresh] = state.velocity.try_emplace(name, Tensor(p.shape()));
        Tensor& v = it->second;
        (void)fresh;
        const bool decay =
            state.weight_decay != 0.0 &&
            (state.decay_affine_and_bias || !ParamStore::is_affine_or_bias(name));
        const double wd = decay ? state.weight_decay : 0.0;
        for (int64_t i = 0; i < p.count(); ++i) {
            v[i] = state.momentum * v[i] + (g[i] + wd * p[i]);
            p[i] -= lr * v[i];
        }
    }
    ++state.iteration;
}

namespace {

int argmax_row(const Tensor& logits, int64_t n) {
    const int64_t k = logits.shape().c;
    int best = 0;
    for (int64_t i = 1; i < k; ++i)
        if (logits[n * k + i] > logits[n * k + best]) best = static_cast<int>(i);
    return best;
}

}  // namespace

double evaluate_top1(Network& net, const std::vector<RawVideo>& videos, int crop) {
    const RunMode saved = net.mode();
    net.set_mode(RunMode::Eval);
    const ArchConfig& config = net.graph().config;
    int hits = 0;
    const int batch = 16;
    for (size_t base = 0; base < videos.size(); base += batch) {
        const size_t hi = std::min(videos.size(), base + batch);
        std::vector<PathwayInput> clips;
        for (size_t i = base; i < hi; ++i)
            clips.push_back(clip_to_input(sample_center_clip(videos[i], config, crop), config));
        Tensor logits = net.forward(batch_inputs(clips));
        for (size_t i = base; i < hi; ++i)
            if (argmax_row(logits, static_cast<int64_t>(i - base)) == videos[i].labels.at(0))
                ++hits;
    }
    net.set_mode(saved);
    return 100.0 * hits / static_cast<double>(videos.size());
}

TrainResult train_loop(Network& net, const std::vector<RawVideo>& train_set,
                       const std::vector<RawVideo>& val_set, const TrainOptions& opt) {
    if (train_set.empty()) throw DataError("train_loop: empty corpus");
    const ArchConfig& config = net.graph().config;
    const int eval_crop = opt.eval_crop > 0 ? opt.eval_crop : opt.augment.crop;

    net.set_mode(RunMode::Train);
    net.set_dropout_seed(opt.seed);

    OptimState optim;
    optim.momentum = opt.momentum;
    optim.weight_decay = opt.weight_decay;

    Rng sample_rng(opt.seed, stream_id("train.sample"));
    Rng order_rng(opt.seed, stream_id("train.order"));
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // forces a shuffle on first use

    auto next_index = [&]() {
        if (cursor >= order.size()) {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[order_rng.next_below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

    double plateau_scale = 1.0;
    double best_val = -1.0;
    int stale_evals = 0;

    TrainResult result;
    for (int n = 0; n < opt.sched.n_max; ++n) {
        const double lr = opt.lr_policy == LrPolicy::Cosine ? lr_at(opt.sched, n)
                                                            : opt.sched.eta * plateau_scale;
        std::vector<PathwayInput> clips;
        std::vector<int> labels;
        for (int b = 0; b < opt.batch; ++b) {
            const RawVideo& video = train_set[static_cast<size_t>(next_index())];
            clips.push_back(clip_to_input(
                sample_train_clip(video, config, sample_rng, opt.augment), config));
            labels.push_back(video.labels.at(0));
        }
        PathwayInput batch = batch_inputs(clips);

        net.set_step(static_cast<uint64_t>(n));
        ParamStore grads;
        double top1 = 0.0;
        double loss = 0.0;
        try {
            loss = net.backward(
                batch,
                [&](const Tensor& logits, Tensor* g) {
                    int hits = 0;
                    for (int b = 0; b < opt.batch; ++b)
                        if (argmax_row(logits, b) == labels[static_cast<size_t>(b)]) ++hits;
                    top1 = 100.0 * hits / opt.batch;
                    return cross_entropy(logits, labels, g);
                },
                &grads);
            sgd_step(net.params(), grads, optim, lr);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at iteration " + std::to_string(n) + ": " +
                               e.what());
        }

        TrainLogEntry entry;
        entry.iter = n;
        entry.lr = lr;
        entry.loss = loss;
        entry.train_top1 = top1;
        const bool last = n + 1 == opt.sched.n_max;
        if ((opt.eval_every > 0 && (n + 1) % opt.eval_every == 0) || last) {
            entry.val_top1 = val_set.empty() ? 0.0 : evaluate_top1(net, val_set, eval_crop);
            if (last) result.final_val_top1 = *entry.val_top1;
            if (opt.lr_policy == LrPolicy::StepOnPlateau) {
                if (*entry.val_top1 > best_val) {
                    best_val = *entry.val_top1;
                    stale_evals = 0;
                } else if (++stale_evals >= opt.patience) {
                    plateau_scale *= opt.step_factor;
                    stale_evals = 0;
                }
            }
        }
        if (last) result.final_train_top1 = top1;
        result.log.push_back(entry);

        if (opt.checkpoint_every > 0 && !opt.out_dir.empty() &&
            ((n + 1) % opt.checkpoint_every == 0 || last)) {
            char name[32];
            std::snprintf(name, sizeof name, "ckpt_%06d.sfck", n + 1);
            save_checkpoint((std::filesystem::path(opt.out_dir) / name).string(), net.params());
        }
    }
    return result;
}

std::string train_log_text(const std::vector<TrainLogEntry>& log) {
    std::ostringstream os;
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "iter=%d lr=%.12g loss=%.12g train_top1=%.6g", e.iter, e.lr,
                      e.loss, e.train_top1);
        os << buf;
        if (e.val_top1) {
            std::snprintf(buf, sizeof buf, " val_top1=%.6g", *e.val_top1);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace sfnet
