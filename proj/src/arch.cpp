#include "sfnet/arch.hpp"

#include "sfnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace sfnet {

namespace {

const std::array<int, 4> kBlocksR50{3, 4, 6, 3};
const std::array<int, 4> kBlocksR101{3, 4, 23, 3};
const char* kStageNames[4] = {"res2", "res3", "res4", "res5"};
constexpr int kExpansion = 4;

}  // namespace

std::array<int, 4> ArchConfig::stage_blocks() const {
    std::array<int, 4> b = depth == 101 ? kBlocksR101 : kBlocksR50;
    for (int i = 0; i < 4; ++i)
        if (blocks[i] > 0) b[i] = blocks[i];
    return b;
}

int ArchConfig::fast_input_channels() const {
    switch (input_variant) {
        case InputVariant::Gray:
        case InputVariant::TimeDiff:
            return 1;
        default:
            return 3;
    }
}

int ArchConfig::fast_width(int slow_channels) const {
    // ceil, min 1: fractional ratios (1/6, 1/12) round the fast pathway up
    const int64_t num = static_cast<int64_t>(slow_channels) * phi.num;
    return std::max<int64_t>(1, (num + phi.den - 1) / phi.den);
}

void validate(const ArchConfig& c) {
    if (c.T < 1) throw ConfigError("invalid config: T must be >= 1");
    if (c.tau < 1) throw ConfigError("invalid config: tau must be >= 1");
    if (c.num_classes < 1) throw ConfigError("invalid config: num-classes must be >= 1");
    if (c.depth != 50 && c.depth != 101)
        throw ConfigError("invalid config: depth must be 50 or 101");
    if (c.base_width < 1) throw ConfigError("invalid config: base-width must be >= 1");
    if (c.has_fast()) {
        if (c.omega < 2) throw ConfigError("invalid config: omega must be >= 2");
        if (c.tau % c.omega != 0)
            throw ConfigError(
                "invalid config: tau must be divisible by omega (fast stride tau/omega must be an "
                "integer); tau=" +
                std::to_string(c.tau) + " omega=" + std::to_string(c.omega));
        if (c.phi.num <= 0 || c.phi.den <= 0 || c.phi.num >= c.phi.den)
            throw ConfigError("invalid config: phi must satisfy 0 < phi < 1");
    }
    if (c.mode == PathwayMode::SlowOnly && c.lateral != LateralKind::None)
        throw ConfigError("invalid config: mode=slow-only forbids lateral connections");
    if (c.mode == PathwayMode::FastOnly && c.lateral != LateralKind::None)
        throw ConfigError("invalid config: mode=fast-only forbids lateral connections");
    if (c.mode == PathwayMode::SlowFast && c.lateral == LateralKind::TimeToChannel &&
        c.fusion == FusionKind::Sum && c.omega * c.phi.num != c.phi.den)
        throw ConfigError(
            "invalid config: fusion=sum with lateral=time-to-channel requires omega*phi = 1 "
            "(channel counts must match at each fusion point)");
    if (c.dropout < 0.0 || c.dropout >= 1.0)
        throw ConfigError("invalid config: dropout must be in [0, 1)");
}

int StageGraph::tap(const std::string& stage, Pathway p) const {
    for (const auto& t : taps)
        if (t.stage == stage && t.pathway == p) return t.node;
    throw InputError("no tap for stage " + stage);
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

namespace {

class Builder {
public:
    explicit Builder(const ArchConfig& config) { graph_.config = config; }

    int add(LayerSpec spec, std::vector<int> inputs) {
        graph_.nodes.push_back(GraphNode{std::move(spec), std::move(inputs)});
        return static_cast<int>(graph_.nodes.size()) - 1;
    }

    int conv(const std::string& name, const std::string& stage, Pathway p, int in_c, int out_c,
             Dim3 kernel, Dim3 stride, Dim3 padding, Dim3 dilation, int input) {
        LayerSpec s;
        s.kind = LayerKind::Conv3d;
        s.kernel = kernel;
        s.stride = stride;
        s.padding = padding;
        s.dilation = dilation;
        s.in_channels = in_c;
        s.out_channels = out_c;
        s.pathway = p;
        s.name = name;
        s.stage = stage;
        return add(std::move(s), {input});
    }

    int bn(const std::string& name, const std::string& stage, Pathway p, int channels, int input) {
        LayerSpec s;
        s.kind = LayerKind::BatchNorm;
        s.in_channels = channels;
        s.out_channels = channels;
        s.pathway = p;
        s.name = name;
        s.stage = stage;
        return add(std::move(s), {input});
    }

    int relu(const std::string& name, const std::string& stage, Pathway p, int channels,
             int input) {
        LayerSpec s;
        s.kind = LayerKind::Relu;
        s.in_channels = channels;
        s.out_channels = channels;
        s.pathway = p;
        s.name = name;
        s.stage = stage;
        return add(std::move(s), {input});
    }

    // conv1 -> bn -> relu -> 1x3x3 max pool
    int stem(Pathway p, int in_c, int width, int kt, bool spatial_stride) {
        const std::string pw = p == Pathway::Slow ? "slow" : "fast";
        const int sp = spatial_stride ? 2 : 1;
        int n = conv(pw + ".conv1.conv", "conv1", p, in_c, width, Dim3{kt, 7, 7}, Dim3{1, sp, sp},
                     Dim3{(kt - 1) / 2, 3, 3}, Dim3{1, 1, 1},
                     p == Pathway::Slow ? graph_.slow_data : graph_.fast_data);
        n = bn(pw + ".conv1.bn", "conv1", p, width, n);
        n = relu(pw + ".conv1.relu", "conv1", p, width, n);
        tapit("conv1", p, n);
        LayerSpec s;
        s.kind = LayerKind::MaxPool3d;
        s.kernel = Dim3{1, 3, 3};
        s.stride = Dim3{1, 2, 2};
        s.padding = Dim3{0, 1, 1};
        s.in_channels = width;
        s.out_channels = width;
        s.pathway = p;
        s.name = pw + ".pool1";
        s.stage = "pool1";
        n = add(std::move(s), {n});
        tapit("pool1", p, n);
        return n;
    }

    // Bottleneck: a (ktx1x1) -> b (1x3x3, carries spatial stride/dilation) -> c (1x1x1),
    // BN+ReLU between, projection shortcut when geometry changes, add, relu.
    int block(const std::string& name, const std::string& stage, Pathway p, int input, int in_c,
              int inner, int out_c, int kt, int spatial_stride, int dilation) {
        const Dim3 bstride{1, spatial_stride, spatial_stride};
        int a = conv(name + ".a.conv", stage, p, in_c, inner, Dim3{kt, 1, 1}, Dim3{1, 1, 1},
                     Dim3{(kt - 1) / 2, 0, 0}, Dim3{1, 1, 1}, input);
        a = bn(name + ".a.bn", stage, p, inner, a);
        a = relu(name + ".a.relu", stage, p, inner, a);
        int b = conv(name + ".b.conv", stage, p, inner, inner, Dim3{1, 3, 3}, bstride,
                     Dim3{0, dilation, dilation}, Dim3{1, dilation, dilation}, a);
        b = bn(name + ".b.bn", stage, p, inner, b);
        b = relu(name + ".b.relu", stage, p, inner, b);
        int c = conv(name + ".c.conv", stage, p, inner, out_c, Dim3{1, 1, 1}, Dim3{1, 1, 1},
                     Dim3{0, 0, 0}, Dim3{1, 1, 1}, b);
        c = bn(name + ".c.bn", stage, p, out_c, c);
        int shortcut = input;
        if (in_c != out_c || spatial_stride != 1) {
            shortcut = conv(name + ".proj.conv", stage, p, in_c, out_c, Dim3{1, 1, 1}, bstride,
                            Dim3{0, 0, 0}, Dim3{1, 1, 1}, input);
            shortcut = bn(name + ".proj.bn", stage, p, out_c, shortcut);
        }
        LayerSpec s;
        s.kind = LayerKind::Add;
        s.in_channels = out_c;
        s.out_channels = out_c;
        s.pathway = p;
        s.name = name + ".add";
        s.stage = stage;
        int sum = add(std::move(s), {c, shortcut});
        return relu(name + ".relu", stage, p, out_c, sum);
    }

    void tapit(const std::string& stage, Pathway p, int node) {
        graph_.taps.push_back(StageTap{stage, p, node});
    }

    StageGraph take() { return std::move(graph_); }
    StageGraph graph_;
};

}  // namespace

StageGraph build_graph(const ArchConfig& config) {
    validate(config);
    Builder b(config);
    const auto blocks = config.stage_blocks();
    const bool detect = config.head == HeadKind::Detect;

    // data layers: temporal strides tau and tau/omega; all other strides in the
    // network are spatial only
    if (config.has_slow()) {
        LayerSpec s;
        s.kind = LayerKind::DataLayer;
        s.stride = Dim3{config.tau, 1, 1};
        s.in_channels = 3;
        s.out_channels = 3;
        s.pathway = Pathway::Slow;
        s.name = "slow.data";
        s.stage = "data";
        b.graph_.slow_data = b.add(std::move(s), {});
        b.tapit("data", Pathway::Slow, b.graph_.slow_data);
    }
    if (config.has_fast()) {
        LayerSpec s;
        s.kind = LayerKind::DataLayer;
        s.stride = Dim3{config.tau / config.omega, 1, 1};
        s.in_channels = config.fast_input_channels();
        s.out_channels = config.fast_input_channels();
        s.pathway = Pathway::Fast;
        s.name = "fast.data";
        s.stage = "data";
        b.graph_.fast_data = b.add(std::move(s), {});
        b.tapit("data", Pathway::Fast, b.graph_.fast_data);
    }

    int slow = -1, fast = -1;
    if (config.has_slow()) slow = b.stem(Pathway::Slow, 3, config.base_width, 1, true);
    if (config.has_fast()) {
        // half-res input keeps downstream sizes aligned by dropping the stem's
        // spatial stride
        const bool stride = config.input_variant != InputVariant::HalfRes;
        fast = b.stem(Pathway::Fast, config.fast_input_channels(),
                      config.fast_width(config.base_width), 5, stride);
    }

    const bool fuse = config.mode == PathwayMode::SlowFast && config.lateral != LateralKind::None;
    int slow_in_c = config.has_slow() ? config.base_width : 0;
    int fast_in_c = config.has_fast() ? config.fast_width(config.base_width) : 0;

    auto lateral_fusion = [&](const std::string& point, int slow_node, int fast_node,
                              int fast_c) -> std::pair<int, int> {
        // returns (fused node, fused channel count)
        LayerSpec t;
        t.kind = LayerKind::LateralTransform;
        t.lateral = config.lateral;
        t.pathway = Pathway::Fast;
        t.name = "lateral." + point + ".transform";
        t.stage = point;
        t.in_channels = fast_c;
        int k = 0;
        switch (config.lateral) {
            case LateralKind::TimeToChannel:
                k = config.omega * fast_c;
                t.out_channels = k;
                break;
            case LateralKind::TimeStridedSample:
                k = fast_c;
                t.out_channels = k;
                break;
            case LateralKind::TimeStridedConv:
                k = 2 * fast_c;
                t.kernel = Dim3{5, 1, 1};
                t.stride = Dim3{config.omega, 1, 1};
                t.padding = Dim3{2, 0, 0};
                t.out_channels = k;
                t.name = "lateral." + point + ".conv";
                break;
            default:
                break;
        }
        int tr = b.add(std::move(t), {fast_node});
        LayerSpec f;
        f.kind = config.fusion == FusionKind::Sum ? LayerKind::Add : LayerKind::Concat;
        f.pathway = Pathway::Slow;
        f.name = "lateral." + point + ".fuse";
        f.stage = point;
        int fused_c = config.fusion == FusionKind::Sum ? slow_in_c : slow_in_c + k;
        f.in_channels = fused_c;
        f.out_channels = fused_c;
        int fused = b.add(std::move(f), {slow_node, tr});
        return {fused, fused_c};
    };

    int slow_feed = slow;  // what the next slow stage consumes (fused when lateral present)
    int slow_feed_c = slow_in_c;
    if (fuse) {
        auto [n, c] = lateral_fusion("pool1", slow, fast, fast_in_c);
        slow_feed = n;
        slow_feed_c = c;
    }

    for (int si = 0; si < 4; ++si) {
        const std::string stage = kStageNames[si];
        const int inner = config.base_width << si;
        const int out_c = inner * kExpansion;
        const int spatial_stride = si == 0 ? 1 : (detect && si == 3 ? 1 : 2);
        const int dilation = (detect && si == 3) ? 2 : 1;

        if (config.has_slow()) {
            const int kt = si >= 2 ? 3 : 1;  // non-degenerate temporal only in res4/res5
            int x = slow_feed;
            int in_c = slow_feed_c;
            for (int bi = 0; bi < blocks[si]; ++bi) {
                x = b.block("slow." + stage + ".b" + std::to_string(bi), stage, Pathway::Slow, x,
                            in_c, inner, out_c, kt, bi == 0 ? spatial_stride : 1, dilation);
                in_c = out_c;
            }
            slow = x;
            slow_in_c = out_c;
            b.tapit(stage, Pathway::Slow, slow);
        }
        if (config.has_fast()) {
            const int kt = 3;  // every fast bottleneck is temporal
            const int f_inner = config.fast_width(inner);
            const int f_out = config.fast_width(out_c);
            int x = fast;
            int in_c = fast_in_c;
            for (int bi = 0; bi < blocks[si]; ++bi) {
                x = b.block("fast." + stage + ".b" + std::to_string(bi), stage, Pathway::Fast, x,
                            in_c, f_inner, f_out, kt, bi == 0 ? spatial_stride : 1, dilation);
                in_c = f_out;
            }
            fast = x;
            fast_in_c = f_out;
            b.tapit(stage, Pathway::Fast, fast);
        }
        slow_feed = slow;
        slow_feed_c = slow_in_c;
        if (fuse && si < 3) {  // laterals after pool1, res2, res3, res4
            auto [n, c] = lateral_fusion(stage, slow, fast, fast_in_c);
            slow_feed = n;
            slow_feed_c = c;
        }
    }

    // head: per-pathway global average pool, concat (slow, fast), dropout, fc
    std::vector<int> pooled;
    int feat = 0;
    if (config.has_slow()) {
        LayerSpec s;
        s.kind = LayerKind::GlobalAvgPool;
        s.pathway = Pathway::Slow;
        s.in_channels = slow_in_c;
        s.out_channels = slow_in_c;
        s.name = "slow.pool";
        s.stage = "head";
        pooled.push_back(b.add(std::move(s), {slow}));
        feat += slow_in_c;
    }
    if (config.has_fast()) {
        LayerSpec s;
        s.kind = LayerKind::GlobalAvgPool;
        s.pathway = Pathway::Fast;
        s.in_channels = fast_in_c;
        s.out_channels = fast_in_c;
        s.name = "fast.pool";
        s.stage = "head";
        pooled.push_back(b.add(std::move(s), {fast}));
        feat += fast_in_c;
    }
    int head = pooled[0];
    if (pooled.size() == 2) {
        LayerSpec s;
        s.kind = LayerKind::Concat;
        s.pathway = Pathway::Fused;
        s.in_channels = feat;
        s.out_channels = feat;
        s.name = "head.concat";
        s.stage = "head";
        head = b.add(std::move(s), {pooled[0], pooled[1]});
    }
    {
        LayerSpec s;
        s.kind = LayerKind::Dropout;
        s.rate = config.dropout;
        s.pathway = Pathway::Fused;
        s.in_channels = feat;
        s.out_channels = feat;
        s.name = "head.dropout";
        s.stage = "head";
        head = b.add(std::move(s), {head});
    }
    {
        LayerSpec s;
        s.kind = LayerKind::FullyConnected;
        s.pathway = Pathway::Fused;
        s.in_channels = feat;
        s.out_channels = config.num_classes;
        s.name = "head.fc";
        s.stage = "head";
        head = b.add(std::move(s), {head});
    }
    b.graph_.logits = head;
    b.tapit("head", Pathway::Fused, head);
    return b.take();
}

// ---------------------------------------------------------------------------
// Shape inference
// ---------------------------------------------------------------------------

NodeShapes infer_node_shapes(const StageGraph& graph, const RawClipGeom& raw) {
    const ArchConfig& c = graph.config;
    if (raw.frames < c.T * c.tau)
        throw DimensionError("raw clip too short: " + std::to_string(raw.frames) + " frames < T*tau = " +
                             std::to_string(c.T * c.tau));
    if (raw.side % 32 != 0)
        throw DimensionError("raw clip side " + std::to_string(raw.side) +
                             " not divisible by 32");
    NodeShapes shapes;
    shapes.chw.resize(graph.nodes.size());
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
        const GraphNode& node = graph.nodes[i];
        const LayerSpec& s = node.spec;
        auto in = [&](int k) -> const std::array<int64_t, 4>& {
            return shapes.chw[static_cast<size_t>(node.inputs[static_cast<size_t>(k)])];
        };
        std::array<int64_t, 4>& out = shapes.chw[i];
        switch (s.kind) {
            case LayerKind::DataLayer: {
                const int64_t t = s.pathway == Pathway::Slow
                                      ? c.T
                                      : static_cast<int64_t>(c.omega) * c.T;
                int64_t side = raw.side;
                if (s.pathway == Pathway::Fast && c.input_variant == InputVariant::HalfRes)
                    side = raw.side / 2;
                out = {s.out_channels, t, side, side};
                break;
            }
            case LayerKind::Conv3d:
            case LayerKind::MaxPool3d: {
                const auto& x = in(0);
                if (s.kind == LayerKind::Conv3d && x[0] != s.in_channels)
                    throw DimensionError("stage " + s.stage + " (" + s.name + "): input channels " +
                                         std::to_string(x[0]) + " != expected " +
                                         std::to_string(s.in_channels));
                out = {static_cast<int64_t>(s.out_channels),
                       conv_out_extent(x[1], s.kernel.t, s.stride.t, s.padding.t, s.dilation.t),
                       conv_out_extent(x[2], s.kernel.h, s.stride.h, s.padding.h, s.dilation.h),
                       conv_out_extent(x[3], s.kernel.w, s.stride.w, s.padding.w, s.dilation.w)};
                if (out[1] < 1 || out[2] < 1 || out[3] < 1)
                    throw DimensionError("stage " + s.stage + ": spatial extent underflow");
                break;
            }
            case LayerKind::BatchNorm:
            case LayerKind::Relu:
            case LayerKind::Dropout:
                out = in(0);
                break;
            case LayerKind::GlobalAvgPool:
                out = {in(0)[0], 1, 1, 1};
                break;
            case LayerKind::FullyConnected:
                out = {static_cast<int64_t>(s.out_channels), 1, 1, 1};
                break;
            case LayerKind::LateralTransform: {
                const auto& x = in(0);
                if (x[1] % c.omega != 0)
                    throw DimensionError("lateral at " + s.stage + ": temporal extent " +
                                         std::to_string(x[1]) + " not divisible by omega");
                if (s.lateral == LateralKind::TimeToChannel)
                    out = {x[0] * c.omega, x[1] / c.omega, x[2], x[3]};
                else if (s.lateral == LateralKind::TimeStridedSample)
                    out = {x[0], x[1] / c.omega, x[2], x[3]};
                else  // strided 5x1x1 conv
                    out = {static_cast<int64_t>(s.out_channels),
                           conv_out_extent(x[1], 5, c.omega, 2, 1), x[2], x[3]};
                break;
            }
            case LayerKind::Concat: {
                const auto& a = in(0);
                const auto& d = in(1);
                if (a[1] != d[1] || a[2] != d[2] || a[3] != d[3])
                    throw DimensionError("concat at " + s.stage + ": geometry mismatch");
                out = {a[0] + d[0], a[1], a[2], a[3]};
                break;
            }
            case LayerKind::Add: {
                const auto& a = in(0);
                const auto& d = in(1);
                if (a != d)
                    throw DimensionError("add at " + s.stage + " (" + s.name +
                                         "): shape mismatch");
                out = a;
                break;
            }
        }
    }
    return shapes;
}

ShapeReport infer_shapes(const StageGraph& graph, const RawClipGeom& raw) {
    NodeShapes shapes = infer_node_shapes(graph, raw);
    ShapeReport report;
    report.raw = raw;
    const char* order[7] = {"data", "conv1", "pool1", "res2", "res3", "res4", "res5"};
    for (const char* stage : order)
        for (Pathway p : {Pathway::Slow, Pathway::Fast}) {
            for (const auto& tap : graph.taps)
                if (tap.stage == stage && tap.pathway == p) {
                    const auto& s = shapes.chw[static_cast<size_t>(tap.node)];
                    report.rows.push_back(ShapeRow{stage, p, s[1], s[2], s[0]});
                }
        }
    return report;
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

namespace {

int64_t node_params(const LayerSpec& s) {
    switch (s.kind) {
        case LayerKind::Conv3d:
            return static_cast<int64_t>(s.out_channels) * s.in_channels * s.kernel.t * s.kernel.h *
                   s.kernel.w;
        case LayerKind::BatchNorm:
            return 2LL * s.out_channels;
        case LayerKind::FullyConnected:
            return static_cast<int64_t>(s.out_channels) * s.in_channels + s.out_channels;
        case LayerKind::LateralTransform:
            if (s.lateral == LateralKind::TimeStridedConv)
                return static_cast<int64_t>(s.out_channels) * s.in_channels * 5;
            return 0;
        default:
            return 0;
    }
}

// multiply-adds of conv and fc only; BN/activation/pool/element-wise are free
int64_t node_madds(const LayerSpec& s, const std::array<int64_t, 4>& out_shape) {
    switch (s.kind) {
        case LayerKind::Conv3d:
            return out_shape[0] * out_shape[1] * out_shape[2] * out_shape[3] *
                   static_cast<int64_t>(s.kernel.t) * s.kernel.h * s.kernel.w * s.in_channels;
        case LayerKind::FullyConnected:
            return static_cast<int64_t>(s.out_channels) * s.in_channels;
        case LayerKind::LateralTransform:
            if (s.lateral == LateralKind::TimeStridedConv)
                return out_shape[0] * out_shape[1] * out_shape[2] * out_shape[3] * 5LL *
                       s.in_channels;
            return 0;
        default:
            return 0;
    }
}

CostReport build_cost_report(const StageGraph& graph, const NodeShapes* shapes) {
    CostReport report;
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
        const LayerSpec& s = graph.nodes[i].spec;
        const int64_t params = node_params(s);
        const int64_t madds = shapes ? node_madds(s, shapes->chw[i]) : 0;
        if (params == 0 && madds == 0) continue;
        CostRow row;
        row.name = s.name;
        row.stage = s.stage;
        row.pathway = s.pathway;
        if (shapes) {
            row.t = shapes->chw[i][1];
            row.s = shapes->chw[i][2];
            row.c = shapes->chw[i][0];
        }
        row.madds = madds;
        row.params = params;
        report.layers.push_back(row);
        report.total_madds += madds;
        report.total_params += params;
        report.pathway_madds[static_cast<int>(s.pathway)] += madds;
        report.pathway_params[static_cast<int>(s.pathway)] += params;
    }
    return report;
}

}  // namespace

CostReport count_params(const StageGraph& graph) { return build_cost_report(graph, nullptr); }

CostReport count_flops(const StageGraph& graph, const RawClipGeom& raw) {
    NodeShapes shapes = infer_node_shapes(graph, raw);
    return build_cost_report(graph, &shapes);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep_variants(const ArchConfig& base, const std::string& axis,
                                     const std::vector<std::string>& values,
                                     const RawClipGeom& raw) {
    std::vector<SweepRow> rows;
    for (const std::string& value : values) {
        SweepRow row;
        row.value = value;
        row.config = base;
        try {
            apply_override(row.config, axis, value);
            // a mode sweep to a single pathway implies dropping laterals
            if (axis == "mode" && row.config.mode != PathwayMode::SlowFast)
                row.config.lateral = LateralKind::None;
            row.report = count_flops(build_graph(row.config), raw);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.error.empty() != b.error.empty()) return a.error.empty();  // errors last
        return a.report.total_madds < b.report.total_madds;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Names, parsing, serialization
// ---------------------------------------------------------------------------

std::string to_string(Pathway p) {
    switch (p) {
        case Pathway::Slow: return "slow";
        case Pathway::Fast: return "fast";
        default: return "fused";
    }
}
std::string to_string(PathwayMode m) {
    switch (m) {
        case PathwayMode::SlowFast: return "slowfast";
        case PathwayMode::SlowOnly: return "slow-only";
        default: return "fast-only";
    }
}
std::string to_string(LateralKind k) {
    switch (k) {
        case LateralKind::None: return "none";
        case LateralKind::TimeToChannel: return "time-to-channel";
        case LateralKind::TimeStridedSample: return "time-strided-sample";
        default: return "time-strided-conv";
    }
}
std::string to_string(FusionKind f) { return f == FusionKind::Sum ? "sum" : "concat"; }
std::string to_string(InputVariant v) {
    switch (v) {
        case InputVariant::Rgb: return "rgb";
        case InputVariant::Gray: return "gray";
        case InputVariant::TimeDiff: return "time-diff";
        default: return "half-res";
    }
}
std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::ClassifySoftmax: return "classify-softmax";
        case HeadKind::ClassifySigmoid: return "classify-sigmoid";
        default: return "detect";
    }
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, const std::string& key, int line) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects an integer, got '" + v + "'");
    }
}

Rational parse_rational(const std::string& v, int line) {
    size_t slash = v.find('/');
    try {
        if (slash == std::string::npos) {
            // decimal: accept a few common values exactly via scan
            double d = std::stod(v);
            for (int den = 1; den <= 64; ++den) {
                double num = d * den;
                if (std::fabs(num - std::round(num)) < 1e-9)
                    return Rational{static_cast<int>(std::round(num)), den};
            }
            throw std::invalid_argument(v);
        }
        return Rational{std::stoi(v.substr(0, slash)), std::stoi(v.substr(slash + 1))};
    } catch (...) {
        throw ConfigError("config line " + std::to_string(line) +
                          ": phi expects 'a/b' or a decimal, got '" + v + "'");
    }
}

}  // namespace

void apply_override(ArchConfig& c, const std::string& key, const std::string& value, int line) {
    const std::string v = trim(value);
    if (key == "t" || key == "T") {
        c.T = parse_int(v, key, line);
    } else if (key == "tau") {
        c.tau = parse_int(v, key, line);
    } else if (key == "omega") {
        c.omega = parse_int(v, key, line);
    } else if (key == "phi") {
        c.phi = parse_rational(v, line);
    } else if (key == "depth") {
        c.depth = parse_int(v, key, line);
    } else if (key == "num-classes") {
        c.num_classes = parse_int(v, key, line);
    } else if (key == "base-width") {
        c.base_width = parse_int(v, key, line);
    } else if (key == "dropout") {
        c.dropout = std::stod(v);
    } else if (key == "blocks") {
        std::stringstream ss(v);
        std::string part;
        int i = 0;
        while (std::getline(ss, part, ',') && i < 4) c.blocks[i++] = parse_int(trim(part), key, line);
        if (i != 4)
            throw ConfigError("config line " + std::to_string(line) +
                              ": blocks expects four comma-separated counts");
    } else if (key == "lateral") {
        if (v == "none") c.lateral = LateralKind::None;
        else if (v == "time-to-channel") c.lateral = LateralKind::TimeToChannel;
        else if (v == "time-strided-sample") c.lateral = LateralKind::TimeStridedSample;
        else if (v == "time-strided-conv") c.lateral = LateralKind::TimeStridedConv;
        else throw ConfigError("config line " + std::to_string(line) + ": unknown lateral '" + v + "'");
    } else if (key == "fusion") {
        if (v == "sum") c.fusion = FusionKind::Sum;
        else if (v == "concat") c.fusion = FusionKind::Concat;
        else throw ConfigError("config line " + std::to_string(line) + ": unknown fusion '" + v + "'");
    } else if (key == "mode") {
        if (v == "slowfast") c.mode = PathwayMode::SlowFast;
        else if (v == "slow-only") c.mode = PathwayMode::SlowOnly;
        else if (v == "fast-only") c.mode = PathwayMode::FastOnly;
        else throw ConfigError("config line " + std::to_string(line) + ": unknown mode '" + v + "'");
    } else if (key == "input-variant") {
        if (v == "rgb") c.input_variant = InputVariant::Rgb;
        else if (v == "gray") c.input_variant = InputVariant::Gray;
        else if (v == "time-diff") c.input_variant = InputVariant::TimeDiff;
        else if (v == "half-res") c.input_variant = InputVariant::HalfRes;
        else throw ConfigError("config line " + std::to_string(line) + ": unknown input-variant '" + v + "'");
    } else if (key == "head") {
        if (v == "classify-softmax") c.head = HeadKind::ClassifySoftmax;
        else if (v == "classify-sigmoid") c.head = HeadKind::ClassifySigmoid;
        else if (v == "detect") c.head = HeadKind::Detect;
        else throw ConfigError("config line " + std::to_string(line) + ": unknown head '" + v + "'");
    } else {
        throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
}

ArchConfig parse_arch_config(const std::string& text) {
    ArchConfig c;
    std::istringstream is(text);
    std::string raw_line;
    int line = 0;
    while (std::getline(is, raw_line)) {
        ++line;
        std::string s = raw_line;
        size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line) + ": expected 'key = value'");
        apply_override(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line);
    }
    return c;
}

ArchConfig load_arch_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_arch_config(buf.str());
}

std::string shape_report_tsv(const ShapeReport& r) {
    std::ostringstream os;
    os << "# stage\tpathway\tt\ts\tc\n";
    os << "raw\tshared\t" << r.raw.frames << "\t" << r.raw.side << "\t3\n";
    for (const auto& row : r.rows)
        os << row.stage << "\t" << to_string(row.pathway) << "\t" << row.t << "\t" << row.s << "\t"
           << row.c << "\n";
    return os.str();
}

std::string shape_report_structured(const ShapeReport& r) {
    std::ostringstream os;
    os << "stage=raw pathway=shared t=" << r.raw.frames << " s=" << r.raw.side << " c=3\n";
    for (const auto& row : r.rows)
        os << "stage=" << row.stage << " pathway=" << to_string(row.pathway) << " t=" << row.t
           << " s=" << row.s << " c=" << row.c << "\n";
    return os.str();
}

namespace {

struct StageAgg {
    std::string stage;
    Pathway pathway;
    int64_t t = 0, s = 0, c = 0;
    int64_t madds = 0, params = 0;
};

std::vector<StageAgg> aggregate(const CostReport& r) {
    std::vector<StageAgg> out;
    for (const auto& row : r.layers) {
        StageAgg* agg = nullptr;
        for (auto& a : out)
            if (a.stage == row.stage && a.pathway == row.pathway) agg = &a;
        if (!agg) {
            out.push_back(StageAgg{row.stage, row.pathway, 0, 0, 0, 0, 0});
            agg = &out.back();
        }
        agg->madds += row.madds;
        agg->params += row.params;
        agg->t = row.t;
        agg->s = row.s;
        agg->c = row.c;
    }
    return out;
}

}  // namespace

std::string cost_report_tsv(const CostReport& r) {
    std::ostringstream os;
    os << "# stage\tpathway\tt\ts\tc\tmadds\tparams\n";
    for (const auto& a : aggregate(r))
        os << a.stage << "\t" << to_string(a.pathway) << "\t" << a.t << "\t" << a.s << "\t" << a.c
           << "\t" << a.madds << "\t" << a.params << "\n";
    const char* names[3] = {"slow", "fast", "fused"};
    for (int p = 0; p < 3; ++p) {
        if (r.pathway_madds[p] == 0 && r.pathway_params[p] == 0) continue;
        os << "total\t" << names[p] << "\t-\t-\t-\t" << r.pathway_madds[p] << "\t"
           << r.pathway_params[p] << "\n";
    }
    os << "total\tall\t-\t-\t-\t" << r.total_madds << "\t" << r.total_params << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.gflops());
    os << "# total_gflops\t" << buf << "\n";
    return os.str();
}

std::string cost_report_structured(const CostReport& r) {
    std::ostringstream os;
    for (const auto& a : aggregate(r))
        os << "stage=" << a.stage << " pathway=" << to_string(a.pathway) << " t=" << a.t
           << " s=" << a.s << " c=" << a.c << " madds=" << a.madds << " params=" << a.params
           << "\n";
    os << "stage=total pathway=all madds=" << r.total_madds << " params=" << r.total_params
       << "\n";
    return os.str();
}

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "# value\tgflops\tmadds\tparams\terror\n";
    for (const auto& row : rows) {
        if (row.error.empty()) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", row.report.gflops());
            os << row.value << "\t" << buf << "\t" << row.report.total_madds << "\t"
               << row.report.total_params << "\t-\n";
        } else {
            os << row.value << "\t-\t-\t-\t" << row.error << "\n";
        }
    }
    return os.str();
}

}  // namespace sfnet
