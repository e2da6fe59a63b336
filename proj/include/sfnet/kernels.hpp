#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "sfnet/tensor.hpp"

namespace sfnet {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct ConvGeom {
    Dim3 stride{1, 1, 1};
    Dim3 padding{0, 0, 0};
    Dim3 dilation{1, 1, 1};
};

/// Direct cross-correlation. input (N,Ci,T,H,W), weight (Co,Ci,kt,kh,kw).
/// No bias; batch norm follows every conv in this network family.
Tensor conv3d(const Tensor& input, const Tensor& weight, const ConvGeom& g);

/// Exact adjoints. Either output pointer may be null to skip that gradient.
void conv3d_backward(const Tensor& input, const Tensor& weight, const ConvGeom& g,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weight);

int64_t conv_out_extent(int64_t in, int k, int stride, int pad, int dilation);

// ---------------------------------------------------------------------------
// Batch norm
// ---------------------------------------------------------------------------

struct BatchNormCache {
    Tensor xhat;                  // normalized input, saved for backward
    std::vector<double> inv_std;  // per channel
};

/// Train mode: normalize per channel over (N,T,H,W) with biased batch variance,
/// then update running statistics in place with the given momentum.
Tensor batchnorm_train(const Tensor& input, const Tensor& scale, const Tensor& shift,
                       Tensor& running_mean, Tensor& running_var, double momentum, double eps,
                       BatchNormCache* cache);

Tensor batchnorm_eval(const Tensor& input, const Tensor& scale, const Tensor& shift,
                      const Tensor& running_mean, const Tensor& running_var, double eps);

void batchnorm_backward(const BatchNormCache& cache, const Tensor& scale, const Tensor& grad_out,
                        Tensor* grad_input, Tensor* grad_scale, Tensor* grad_shift);

// ---------------------------------------------------------------------------
// Pooling, activation, fc, dropout
// ---------------------------------------------------------------------------

struct MaxPoolCache {
    std::vector<int64_t> argmax;  // flat input index per output element
};

Tensor maxpool3d(const Tensor& input, const Dim3& kernel, const Dim3& stride, const Dim3& padding,
                 MaxPoolCache* cache = nullptr);
Tensor maxpool3d_backward(const Shape& in_shape, const MaxPoolCache& cache, const Tensor& grad_out);

Tensor global_avgpool(const Tensor& input);  // -> (N,C,1,1,1)
Tensor global_avgpool_backward(const Shape& in_shape, const Tensor& grad_out);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& output, const Tensor& grad_out);

/// input (N,Ci,1,1,1) or (N,Ci); weight (Co,Ci); bias (Co). Output (N,Co).
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);
void fully_connected_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                              Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias);

/// Train mode zeroes with probability p and scales survivors by 1/(1-p); the
/// mask is a pure function of (seed, stream) so backward replays it exactly.
Tensor dropout(const Tensor& input, double p, uint64_t seed, uint64_t stream, bool train);
Tensor dropout_backward(const Tensor& grad_out, double p, uint64_t seed, uint64_t stream,
                        bool train);

Tensor softmax(const Tensor& logits);    // rows over the channel axis
Tensor sigmoid(const Tensor& input);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels_backward(const Tensor& grad_out, int64_t c_a, Tensor* grad_a, Tensor* grad_b);

Tensor add(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Lateral transforms
// ---------------------------------------------------------------------------

/// {N, C, wT, S, S} -> {N, wC, T, S, S}; each run of `omega` consecutive frames
/// is packed into channels, frame-major (new channel = f*C + c).
Tensor reshape_ttoc(const Tensor& fast, int omega);
Tensor reshape_ttoc_inverse(const Tensor& packed, int omega);

/// keeps frame indices {0, omega, 2*omega, ...}
Tensor temporal_subsample(const Tensor& fast, int omega);
Tensor temporal_subsample_backward(const Shape& in_shape, const Tensor& grad_out, int omega);

// ---------------------------------------------------------------------------
// Losses (mean over batch, numerically stabilized)
// ---------------------------------------------------------------------------

double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* grad_logits = nullptr);
double binary_cross_entropy(const Tensor& logits, const Tensor& targets,
                            Tensor* grad_logits = nullptr);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    int64_t coords_checked = 0;
    int64_t coords_skipped = 0;  // intervals straddling a relu/pool kink
    std::string worst_coord;
};

/// Central differences on a scalar-valued function of a flat parameter vector.
/// `coords` indexes into the vector; analytic[i] is compared per coordinate.
/// Relative error uses denominator max(abs(analytic), abs(fd), 1e-4); the floor
/// sits above the rounding noise of the differences. Coordinates
/// whose difference interval crosses a non-smooth point (step-size halving
/// disagrees) are skipped and counted.
GradCheckReport finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> theta, const std::vector<double>& analytic,
                                  const std::vector<int64_t>& coords, double epsilon);

}  // namespace sfnet
