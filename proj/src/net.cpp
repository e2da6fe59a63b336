#include "sfnet/net.hpp"

#include <algorithm>
#include <cmath>

namespace sfnet {

namespace {

ConvGeom conv_geom(const LayerSpec& s) {
    return ConvGeom{s.stride, s.padding, s.dilation};
}

uint64_t dropout_stream(const LayerSpec& s, uint64_t step) {
    return stream_id(s.name) ^ (0x9e3779b97f4a7c15ULL * (step + 1));
}

}  // namespace

ParamStore init_params(const StageGraph& graph, uint64_t seed) {
    ParamStore store;
    for (const GraphNode& node : graph.nodes) {
        const LayerSpec& s = node.spec;
        switch (s.kind) {
            case LayerKind::Conv3d:
            case LayerKind::LateralTransform: {
                if (s.kind == LayerKind::LateralTransform &&
                    s.lateral != LateralKind::TimeStridedConv)
                    break;
                Shape ws{s.out_channels, s.in_channels, s.kernel.t, s.kernel.h, s.kernel.w};
                Tensor w(ws);
                const double fan_in =
                    static_cast<double>(s.in_channels) * s.kernel.t * s.kernel.h * s.kernel.w;
                const double std_dev = std::sqrt(2.0 / fan_in);
                Rng rng(seed, stream_id(s.name));
                for (int64_t i = 0; i < w.count(); ++i) w[i] = std_dev * rng.next_normal();
                store.put(s.name + ".weight", std::move(w));
                break;
            }
            case LayerKind::BatchNorm: {
                store.put(s.name + ".scale", Tensor(Shape{1, s.out_channels, 1, 1, 1}, 1.0));
                store.put(s.name + ".shift", Tensor(Shape{1, s.out_channels, 1, 1, 1}, 0.0));
                store.put(s.name + ".running_mean", Tensor(Shape{1, s.out_channels, 1, 1, 1}, 0.0));
                store.put(s.name + ".running_var", Tensor(Shape{1, s.out_channels, 1, 1, 1}, 1.0));
                break;
            }
            case LayerKind::FullyConnected: {
                Tensor w(Shape{s.out_channels, s.in_channels, 1, 1, 1});
                const double std_dev = std::sqrt(2.0 / s.in_channels);
                Rng rng(seed, stream_id(s.name));
                for (int64_t i = 0; i < w.count(); ++i) w[i] = std_dev * rng.next_normal();
                store.put(s.name + ".weight", std::move(w));
                store.put(s.name + ".bias", Tensor(Shape{1, s.out_channels, 1, 1, 1}, 0.0));
                break;
            }
            default:
                break;
        }
    }
    return store;
}

Tensor Network::run(const PathwayInput& input, bool keep, std::vector<NodeState>* states) {
    const ArchConfig& c = graph_.config;
    states->clear();
    states->resize(graph_.nodes.size());
    const bool train = mode_ == RunMode::Train;

    for (size_t i = 0; i < graph_.nodes.size(); ++i) {
        const GraphNode& node = graph_.nodes[i];
        const LayerSpec& s = node.spec;
        NodeState& st = (*states)[i];
        auto in = [&](int k) -> const Tensor& {
            return (*states)[static_cast<size_t>(node.inputs[static_cast<size_t>(k)])].out;
        };
        switch (s.kind) {
            case LayerKind::DataLayer: {
                const Tensor& x = s.pathway == Pathway::Slow ? input.slow : input.fast;
                if (x.empty())
                    throw DimensionError("stage data: missing " + to_string(s.pathway) +
                                         " pathway input");
                const int64_t want_t =
                    s.pathway == Pathway::Slow ? c.T : static_cast<int64_t>(c.omega) * c.T;
                if (x.shape().c != s.out_channels || x.shape().t != want_t)
                    throw DimensionError("stage data (" + to_string(s.pathway) + "): got " +
                                         x.shape().str() + ", want c=" +
                                         std::to_string(s.out_channels) +
                                         " t=" + std::to_string(want_t));
                st.out = x;
                break;
            }
            case LayerKind::Conv3d:
                st.out = conv3d(in(0), params_.at(s.name + ".weight"), conv_geom(s));
                break;
            case LayerKind::BatchNorm: {
                const Tensor& scale = params_.at(s.name + ".scale");
                const Tensor& shift = params_.at(s.name + ".shift");
                if (train) {
                    st.out = batchnorm_train(in(0), scale, shift,
                                             params_.at(s.name + ".running_mean"),
                                             params_.at(s.name + ".running_var"), 0.9, 1e-5,
                                             &st.bn);
                } else {
                    st.out = batchnorm_eval(in(0), scale, shift,
                                            params_.at(s.name + ".running_mean"),
                                            params_.at(s.name + ".running_var"), 1e-5);
                }
                break;
            }
            case LayerKind::Relu:
                st.out = relu(in(0));
                break;
            case LayerKind::MaxPool3d:
                st.out = maxpool3d(in(0), s.kernel, s.stride, s.padding, train ? &st.pool : nullptr);
                break;
            case LayerKind::GlobalAvgPool:
                st.out = global_avgpool(in(0));
                break;
            case LayerKind::FullyConnected:
                st.out = fully_connected(in(0), params_.at(s.name + ".weight"),
                                         params_.at(s.name + ".bias"));
                break;
            case LayerKind::Dropout:
                st.dropout_stream = dropout_stream(s, step_);
                st.out = dropout(in(0), s.rate, dropout_seed_, st.dropout_stream, train);
                break;
            case LayerKind::LateralTransform:
                if (s.lateral == LateralKind::TimeToChannel)
                    st.out = reshape_ttoc(in(0), c.omega);
                else if (s.lateral == LateralKind::TimeStridedSample)
                    st.out = temporal_subsample(in(0), c.omega);
                else
                    st.out = conv3d(in(0), params_.at(s.name + ".weight"),
                                    ConvGeom{s.stride, s.padding, s.dilation});
                break;
            case LayerKind::Concat:
                st.out = concat_channels(in(0), in(1));
                break;
            case LayerKind::Add:
                st.out = add(in(0), in(1));
                break;
        }
    }
    Tensor logits = (*states)[static_cast<size_t>(graph_.logits)].out;
    if (!keep) {
        // free intermediates when the caller only wants logits
        for (auto& st : *states) st.out = Tensor();
    }
    return logits;
}

Tensor Network::forward(const PathwayInput& input, bool keep_activations) {
    Tensor logits = run(input, keep_activations, &saved_);
    have_saved_ = keep_activations;
    return logits;
}

const Tensor& Network::activation(const std::string& stage, Pathway p) const {
    if (!have_saved_) throw InputError("activation tap requires forward(keep_activations=true)");
    return saved_[static_cast<size_t>(graph_.tap(stage, p))].out;
}

const Tensor& Network::node_output(int node) const {
    if (!have_saved_) throw InputError("activation tap requires forward(keep_activations=true)");
    return saved_.at(static_cast<size_t>(node)).out;
}

double Network::backward(const PathwayInput& input,
                         const std::function<double(const Tensor&, Tensor*)>& loss_grad,
                         ParamStore* grads) {
    if (mode_ != RunMode::Train) throw InputError("backward requires train mode");
    std::vector<NodeState> states;
    Tensor logits = run(input, true, &states);

    Tensor dlogits;
    const double loss = loss_grad(logits, &dlogits);
    if (!std::isfinite(loss)) throw NumericError("backward: non-finite loss");

    // zero-filled gradient entry for every learnable parameter
    grads->entries.clear();
    for (const auto& [name, t] : params_.entries)
        if (!ParamStore::is_running_stat(name)) grads->put(name, Tensor(t.shape()));

    std::vector<Tensor> node_grad(graph_.nodes.size());
    auto accumulate = [&](int idx, Tensor&& g) {
        Tensor& slot = node_grad[static_cast<size_t>(idx)];
        if (slot.empty())
            slot = std::move(g);
        else
            slot.add_scaled(g, 1.0);
    };
    node_grad[static_cast<size_t>(graph_.logits)] = std::move(dlogits);

    const ArchConfig& c = graph_.config;
    for (int i = static_cast<int>(graph_.nodes.size()) - 1; i >= 0; --i) {
        Tensor& gout = node_grad[static_cast<size_t>(i)];
        if (gout.empty()) continue;
        const GraphNode& node = graph_.nodes[static_cast<size_t>(i)];
        const LayerSpec& s = node.spec;
        NodeState& st = states[static_cast<size_t>(i)];
        auto in_state = [&](int k) -> NodeState& {
            return states[static_cast<size_t>(node.inputs[static_cast<size_t>(k)])];
        };
        switch (s.kind) {
            case LayerKind::DataLayer:
                break;  // no upstream
            case LayerKind::Conv3d: {
                Tensor gin, gw;
                conv3d_backward(in_state(0).out, params_.at(s.name + ".weight"), conv_geom(s),
                                gout, &gin, &gw);
                grads->at(s.name + ".weight").add_scaled(gw, 1.0);
                accumulate(node.inputs[0], std::move(gin));
                break;
            }
            case LayerKind::BatchNorm: {
                Tensor gin, gscale, gshift;
                batchnorm_backward(st.bn, params_.at(s.name + ".scale"), gout, &gin, &gscale,
                                   &gshift);
                grads->at(s.name + ".scale").add_scaled(gscale, 1.0);
                grads->at(s.name + ".shift").add_scaled(gshift, 1.0);
                accumulate(node.inputs[0], std::move(gin));
                break;
            }
            case LayerKind::Relu:
                accumulate(node.inputs[0], relu_backward(st.out, gout));
                break;
            case LayerKind::MaxPool3d:
                accumulate(node.inputs[0],
                           maxpool3d_backward(in_state(0).out.shape(), st.pool, gout));
                break;
            case LayerKind::GlobalAvgPool:
                accumulate(node.inputs[0],
                           global_avgpool_backward(in_state(0).out.shape(), gout));
                break;
            case LayerKind::FullyConnected: {
                Tensor gin, gw, gb;
                fully_connected_backward(in_state(0).out, params_.at(s.name + ".weight"), gout,
                                         &gin, &gw, &gb);
                grads->at(s.name + ".weight").add_scaled(gw, 1.0);
                grads->at(s.name + ".bias").add_scaled(gb, 1.0);
                accumulate(node.inputs[0], std::move(gin));
                break;
            }
            case LayerKind::Dropout:
                accumulate(node.inputs[0],
                           dropout_backward(gout, s.rate, dropout_seed_, st.dropout_stream, true));
                break;
            case LayerKind::LateralTransform: {
                if (s.lateral == LateralKind::TimeToChannel) {
                    accumulate(node.inputs[0], reshape_ttoc_inverse(gout, c.omega));
                } else if (s.lateral == LateralKind::TimeStridedSample) {
                    accumulate(node.inputs[0],
                               temporal_subsample_backward(in_state(0).out.shape(), gout, c.omega));
                } else {
                    Tensor gin, gw;
                    conv3d_backward(in_state(0).out, params_.at(s.name + ".weight"),
                                    ConvGeom{s.stride, s.padding, s.dilation}, gout, &gin, &gw);
                    grads->at(s.name + ".weight").add_scaled(gw, 1.0);
                    accumulate(node.inputs[0], std::move(gin));
                }
                break;
            }
            case LayerKind::Concat: {
                Tensor ga, gb;
                split_channels_backward(gout, in_state(0).out.shape().c, &ga, &gb);
                accumulate(node.inputs[0], std::move(ga));
                accumulate(node.inputs[1], std::move(gb));
                break;
            }
            case LayerKind::Add: {
                Tensor copy = gout;
                accumulate(node.inputs[0], std::move(copy));
                accumulate(node.inputs[1], std::move(gout));
                break;
            }
        }
        if (s.kind != LayerKind::Add) gout = Tensor();  // release as we go
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Finite-difference harness over a whole network
// ---------------------------------------------------------------------------

namespace {

std::vector<double> flatten_learnable(const ParamStore& store,
                                      std::vector<std::pair<std::string, int64_t>>* layout) {
    std::vector<double> flat;
    for (const auto& [name, t] : store.entries) {
        if (ParamStore::is_running_stat(name)) continue;
        if (layout) layout->emplace_back(name, t.count());
        for (int64_t i = 0; i < t.count(); ++i) flat.push_back(t[i]);
    }
    return flat;
}

ParamStore unflatten(const ParamStore& reference, const std::vector<double>& flat) {
    ParamStore out = reference;
    size_t k = 0;
    for (auto& [name, t] : out.entries) {
        if (ParamStore::is_running_stat(name)) continue;
        for (int64_t i = 0; i < t.count(); ++i) t[i] = flat[k++];
    }
    return out;
}

}  // namespace

NetGradCheck gradcheck_network(const StageGraph& graph, uint64_t seed, const PathwayInput& input,
                               const std::vector<int>& labels, double epsilon, int min_coords) {
    ParamStore params = init_params(graph, seed);

    auto loss_of = [&](const ParamStore& p) {
        Network net(graph, p, RunMode::Train);
        net.set_dropout_seed(seed);
        Tensor logits = net.forward(input);
        return cross_entropy(logits, labels, nullptr);
    };

    Network net(graph, params, RunMode::Train);
    net.set_dropout_seed(seed);
    ParamStore grads;
    net.backward(input, [&](const Tensor& logits, Tensor* g) {
        return cross_entropy(logits, labels, g);
    }, &grads);

    std::vector<std::pair<std::string, int64_t>> layout;
    std::vector<double> theta = flatten_learnable(params, &layout);
    std::vector<double> analytic = flatten_learnable(grads, nullptr);

    // stratified sample: every parameter-bearing layer contributes coordinates
    std::vector<int64_t> coords;
    Rng rng(seed, stream_id("gradcheck"));
    // oversample: kink-straddling coordinates get skipped by the checker
    const int64_t want = min_coords + min_coords / 3 + 1;
    const int per_entry =
        std::max<int>(2, static_cast<int>((want + layout.size() - 1) / layout.size()));
    int64_t offset = 0;
    for (const auto& [name, count] : layout) {
        for (int k = 0; k < per_entry && k < count; ++k)
            coords.push_back(offset + static_cast<int64_t>(rng.next_below(count)));
        offset += count;
    }

    auto f = [&](const std::vector<double>& th) {
        ParamStore p = unflatten(params, th);
        return loss_of(p);
    };
    GradCheckReport r = finite_diff_check(f, theta, analytic, coords, epsilon);

    NetGradCheck out;
    out.max_rel_error = r.max_rel_error;
    out.coords = r.coords_checked;
    out.skipped = r.coords_skipped;
    out.worst = r.worst_coord;
    return out;
}

}  // namespace sfnet
