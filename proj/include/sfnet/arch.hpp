#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfnet/common.hpp"

namespace sfnet {

enum class PathwayMode { SlowFast, SlowOnly, FastOnly };
enum class LateralKind { None, TimeToChannel, TimeStridedSample, TimeStridedConv };
enum class FusionKind { Sum, Concat };
enum class InputVariant { Rgb, Gray, TimeDiff, HalfRes };
enum class HeadKind { ClassifySoftmax, ClassifySigmoid, Detect };

struct Rational {
    int num = 1, den = 1;
    double value() const { return static_cast<double>(num) / den; }
    bool operator==(const Rational&) const = default;
};

/// Complete declarative description of one instantiation.
struct ArchConfig {
    int T = 4;            // frames sampled by the slow pathway
    int tau = 16;         // slow temporal stride in raw frames
    int omega = 8;        // fast/slow frame-rate ratio
    Rational phi{1, 8};   // fast/slow channel ratio
    int depth = 50;       // 50 -> blocks {3,4,6,3}, 101 -> {3,4,23,3}
    LateralKind lateral = LateralKind::TimeStridedConv;
    FusionKind fusion = FusionKind::Concat;
    PathwayMode mode = PathwayMode::SlowFast;
    InputVariant input_variant = InputVariant::Rgb;
    int num_classes = 400;
    HeadKind head = HeadKind::ClassifySoftmax;

    // desk-scale knobs; defaults reproduce the reference instantiation
    int base_width = 64;                  // slow conv1 width; stage widths scale from it
    std::array<int, 4> blocks{0, 0, 0, 0};  // per-stage override, 0 = use depth
    double dropout = 0.5;

    std::array<int, 4> stage_blocks() const;
    bool has_slow() const { return mode != PathwayMode::FastOnly; }
    bool has_fast() const { return mode != PathwayMode::SlowOnly; }
    int fast_input_channels() const;  // weak-input variants change the fast stem only
    /// ceil(c * phi), min 1 — fast pathway width at a matching slow width
    int fast_width(int slow_channels) const;
};

/// Throws ConfigError naming the violated invariant.
void validate(const ArchConfig& config);

enum class LayerKind {
    DataLayer,
    Conv3d,
    BatchNorm,
    Relu,
    MaxPool3d,
    GlobalAvgPool,
    FullyConnected,
    Dropout,
    LateralTransform,
    Concat,
    Add,
};

enum class Pathway { Slow, Fast, Fused };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv3d;
    Dim3 kernel{1, 1, 1};
    Dim3 stride{1, 1, 1};
    Dim3 padding{0, 0, 0};
    Dim3 dilation{1, 1, 1};
    int in_channels = 0;
    int out_channels = 0;
    Pathway pathway = Pathway::Slow;
    LateralKind lateral = LateralKind::None;  // set on LateralTransform nodes
    double rate = 0.0;                        // dropout probability
    std::string name;                         // unique; also the ParamStore key prefix
    std::string stage;                        // data, conv1, pool1, res2..res5, head
};

struct GraphNode {
    LayerSpec spec;
    std::vector<int> inputs;  // indices of earlier nodes
};

struct StageTap {
    std::string stage;
    Pathway pathway;
    int node = -1;
};

/// Materialized layer DAG for both pathways plus lateral edges. Nodes are in
/// topological order by construction.
struct StageGraph {
    ArchConfig config;
    std::vector<GraphNode> nodes;
    int slow_data = -1;
    int fast_data = -1;
    int logits = -1;                 // -1 for detect head (graph ends at res5 taps)
    std::vector<StageTap> taps;      // stage outputs per pathway, data..res5 (+head)

    int tap(const std::string& stage, Pathway p) const;
};

StageGraph build_graph(const ArchConfig& config);

struct RawClipGeom {
    int frames = 64;
    int side = 224;
};

struct ShapeRow {
    std::string stage;
    Pathway pathway;
    int64_t t = 0, s = 0, c = 0;
};

struct ShapeReport {
    RawClipGeom raw;
    std::vector<ShapeRow> rows;  // data..res5 per pathway, slow first per stage
};

/// Per-node output shapes for the whole graph; index-aligned with graph.nodes.
struct NodeShapes {
    std::vector<std::array<int64_t, 4>> chw;  // c, t, h, w per node
};

NodeShapes infer_node_shapes(const StageGraph& graph, const RawClipGeom& raw);
ShapeReport infer_shapes(const StageGraph& graph, const RawClipGeom& raw);

struct CostRow {
    std::string name;
    std::string stage;
    Pathway pathway;
    int64_t t = 0, s = 0, c = 0;  // output geometry (t,s,c); s=0 for fc
    int64_t madds = 0;
    int64_t params = 0;
};

struct CostReport {
    std::vector<CostRow> layers;
    int64_t total_madds = 0;
    int64_t total_params = 0;
    int64_t pathway_madds[3] = {0, 0, 0};   // slow, fast, fused
    int64_t pathway_params[3] = {0, 0, 0};
    double gflops() const { return static_cast<double>(total_madds) / 1e9; }
};

/// Learnable parameter counts only (madds left at zero).
CostReport count_params(const StageGraph& graph);
/// Multiply-adds of conv / lateral-conv / fully-connected layers at the given
/// input geometry; BN, activations, pooling and element-wise nodes are free.
CostReport count_flops(const StageGraph& graph, const RawClipGeom& raw);

struct SweepRow {
    std::string value;
    ArchConfig config;
    CostReport report;
    std::string error;  // nonempty: row records a failed config, report empty
};

/// One row per value, sorted by total GFLOPs ascending; invalid configs become
/// error rows at the end. Axis is an ArchConfig field name (phi, mode, lateral,
/// fusion, T, tau, omega, depth, input-variant, num-classes).
std::vector<SweepRow> sweep_variants(const ArchConfig& base, const std::string& axis,
                                     const std::vector<std::string>& values,
                                     const RawClipGeom& raw);

// --- external formats ------------------------------------------------------

std::string to_string(Pathway p);
std::string to_string(PathwayMode m);
std::string to_string(LateralKind k);
std::string to_string(FusionKind f);
std::string to_string(InputVariant v);
std::string to_string(HeadKind h);

/// Flat key/value text: `key = value` lines, `#` comments. Unknown keys are
/// errors; all errors echo the line number.
ArchConfig parse_arch_config(const std::string& text);
ArchConfig load_arch_config(const std::string& path);
void apply_override(ArchConfig& config, const std::string& key, const std::string& value,
                    int line = 0);

std::string shape_report_tsv(const ShapeReport& r);
std::string shape_report_structured(const ShapeReport& r);
std::string cost_report_tsv(const CostReport& r);
std::string cost_report_structured(const CostReport& r);
std::string sweep_tsv(const std::vector<SweepRow>& rows);

}  // namespace sfnet
