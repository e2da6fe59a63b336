#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfnet/arch.hpp"
#include "sfnet/kernels.hpp"
#include "sfnet/params.hpp"

namespace sfnet {

struct PathwayInput {
    Tensor slow;  // (N, C_in, T, S, S); empty for fast-only
    Tensor fast;  // (N, C_in, wT, S_f, S_f); empty for slow-only
};

enum class RunMode { Train, Eval };

/// He-style variance scaling (normal, var 2/fan_in) for conv and fc weights;
/// zero biases; BN scale 1 / shift 0; running stats mean 0 / var 1.
/// Bit-deterministic for a given seed.
ParamStore init_params(const StageGraph& graph, uint64_t seed);

/// Executable network: StageGraph + ParamStore. A single instance is not safe
/// for concurrent mutation; eval-mode forward on a frozen instance is.
class Network {
public:
    Network(StageGraph graph, ParamStore params, RunMode mode = RunMode::Eval)
        : graph_(std::move(graph)), params_(std::move(params)), mode_(mode) {}

    const StageGraph& graph() const { return graph_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    RunMode mode() const { return mode_; }
    void set_mode(RunMode m) { mode_ = m; }

    /// Dropout masks are keyed by (seed, step); bump step per training iteration.
    void set_dropout_seed(uint64_t seed) { dropout_seed_ = seed; }
    void set_step(uint64_t step) { step_ = step; }

    /// Runs both pathways with lateral fusion; returns raw logits (N, classes).
    /// Detection pipelines instead read the res5 activation taps and score
    /// regions through roi features and the head.fc parameters.
    Tensor forward(const PathwayInput& input, bool keep_activations = false);

    /// Gradients for every learnable parameter, via the given loss.
    /// loss_grad: fills d(loss)/d(logits) and returns the loss value.
    double backward(const PathwayInput& input,
                    const std::function<double(const Tensor& logits, Tensor* grad)>& loss_grad,
                    ParamStore* grads);

    /// Stage-activation tap (stage name + pathway) from the last forward with
    /// keep_activations=true.
    const Tensor& activation(const std::string& stage, Pathway p) const;
    const Tensor& node_output(int node) const;

private:
    struct NodeState {
        Tensor out;
        BatchNormCache bn;
        MaxPoolCache pool;
        uint64_t dropout_stream = 0;
    };

    Tensor run(const PathwayInput& input, bool keep, std::vector<NodeState>* states);

    StageGraph graph_;
    ParamStore params_;
    RunMode mode_ = RunMode::Eval;
    uint64_t dropout_seed_ = 0;
    uint64_t step_ = 0;
    std::vector<NodeState> saved_;
    bool have_saved_ = false;
};

/// Convenience harness for the finite-difference acceptance check: samples
/// >= coords_per_kind coordinates from every parameter-bearing layer kind and
/// compares analytic gradients with central differences.
struct NetGradCheck {
    double max_rel_error = 0.0;
    int64_t coords = 0;
    int64_t skipped = 0;
    std::string worst;
};

NetGradCheck gradcheck_network(const StageGraph& graph, uint64_t seed, const PathwayInput& input,
                               const std::vector<int>& labels, double epsilon, int min_coords);

}  // namespace sfnet
