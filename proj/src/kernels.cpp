#include "sfnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <sstream>

namespace sfnet {

int64_t conv_out_extent(int64_t in, int k, int stride, int pad, int dilation) {
    return (in + 2 * static_cast<int64_t>(pad) - static_cast<int64_t>(dilation) * (k - 1) - 1) /
               stride +
           1;
}

static void check_conv_shapes(const Tensor& input, const Tensor& weight, const ConvGeom& g) {
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is.c != ws.c)
        throw DimensionError("conv3d: channel axis mismatch, input c=" + std::to_string(is.c) +
                             " weight c_in=" + std::to_string(ws.c));
    if (conv_out_extent(is.t, ws.t, g.stride.t, g.padding.t, g.dilation.t) < 1 ||
        conv_out_extent(is.h, ws.h, g.stride.h, g.padding.h, g.dilation.h) < 1 ||
        conv_out_extent(is.w, ws.w, g.stride.w, g.padding.w, g.dilation.w) < 1)
        throw DimensionError("conv3d: padded input " + is.str() +
                             " smaller than dilated kernel " + ws.str());
}

namespace {

// valid output range [lo, hi) for tap k: 0 <= o*stride - pad + k*dil < in
inline void tap_out_range(int64_t in, int64_t out, int64_t k, int stride, int pad, int dilation,
                          int64_t* lo, int64_t* hi) {
    const int64_t off = k * dilation - pad;
    const int64_t l = off < 0 ? (-off + stride - 1) / stride : 0;
    const int64_t num = in - 1 - off;  // floor(num/stride) + 1, exact for num < 0 too
    const int64_t h = num < 0 ? -((-num + stride - 1) / stride) + 1 : num / stride + 1;
    *lo = std::min(std::max<int64_t>(l, 0), out);
    *hi = std::min(std::max<int64_t>(h, *lo), out);
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const ConvGeom& g) {
    check_conv_shapes(input, weight, g);
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();  // (Co, Ci, kt, kh, kw)
    Shape os{is.n, ws.n, conv_out_extent(is.t, ws.t, g.stride.t, g.padding.t, g.dilation.t),
             conv_out_extent(is.h, ws.h, g.stride.h, g.padding.h, g.dilation.h),
             conv_out_extent(is.w, ws.w, g.stride.w, g.padding.w, g.dilation.w)};
    Tensor out(os);

    const double* in = input.data();
    const double* w = weight.data();
    double* o = out.data();
    const int64_t in_chw = is.t * is.h * is.w;
    const int64_t in_hw = is.h * is.w;
    const int64_t o_thw = os.t * os.h * os.w;
    const int64_t w_chw = ws.c * ws.t * ws.h * ws.w;
    const int64_t w_thw = ws.t * ws.h * ws.w;

    const bool pointwise = ws.t == 1 && ws.h == 1 && ws.w == 1 && g.stride == Dim3{1, 1, 1} &&
                           g.padding == Dim3{0, 0, 0};

    if (pointwise) {  // plain channel contraction, the most common layer
        parallel_for(os.n * os.c, [&](int64_t lo, int64_t hi) {
            for (int64_t nc = lo; nc < hi; ++nc) {
                const int64_t n = nc / os.c;
                const int64_t co = nc % os.c;
                const double* in_n = in + n * is.c * in_chw;
                const double* w_co = w + co * ws.c;
                double* o_p = o + nc * o_thw;
                std::fill(o_p, o_p + o_thw, 0.0);
                for (int64_t ci = 0; ci < ws.c; ++ci) {
                    const double wv = w_co[ci];
                    if (wv == 0.0) continue;
                    const double* x = in_n + ci * in_chw;
                    for (int64_t i = 0; i < o_thw; ++i) o_p[i] += wv * x[i];
                }
            }
        });
        return out;
    }

    parallel_for(os.n * os.c, [&](int64_t lo, int64_t hi) {
        std::vector<double> acc(static_cast<size_t>(os.w));
        for (int64_t nc = lo; nc < hi; ++nc) {
            const int64_t n = nc / os.c;
            const int64_t co = nc % os.c;
            const double* in_n = in + n * is.c * in_chw;
            const double* w_co = w + co * w_chw;
            double* o_p = o + nc * o_thw;
            for (int64_t to = 0; to < os.t; ++to)
                for (int64_t ho = 0; ho < os.h; ++ho) {
                    std::fill(acc.begin(), acc.end(), 0.0);
                    for (int64_t kt = 0; kt < ws.t; ++kt) {
                        const int64_t ti = to * g.stride.t - g.padding.t + kt * g.dilation.t;
                        if (ti < 0 || ti >= is.t) continue;
                        for (int64_t kh = 0; kh < ws.h; ++kh) {
                            const int64_t hi2 = ho * g.stride.h - g.padding.h + kh * g.dilation.h;
                            if (hi2 < 0 || hi2 >= is.h) continue;
                            for (int64_t kw = 0; kw < ws.w; ++kw) {
                                int64_t wlo, whi;
                                tap_out_range(is.w, os.w, kw, g.stride.w, g.padding.w,
                                              g.dilation.w, &wlo, &whi);
                                const int64_t off = kw * g.dilation.w - g.padding.w;
                                for (int64_t ci = 0; ci < ws.c; ++ci) {
                                    const double wv =
                                        w_co[ci * w_thw + (kt * ws.h + kh) * ws.w + kw];
                                    if (wv == 0.0) continue;
                                    const double* in_row =
                                        in_n + ci * in_chw + ti * in_hw + hi2 * is.w + off;
                                    for (int64_t wo = wlo; wo < whi; ++wo)
                                        acc[static_cast<size_t>(wo)] +=
                                            wv * in_row[wo * g.stride.w];
                                }
                            }
                        }
                    }
                    for (int64_t wo = 0; wo < os.w; ++wo) *o_p++ = acc[static_cast<size_t>(wo)];
                }
        }
    });
    return out;
}

void conv3d_backward(const Tensor& input, const Tensor& weight, const ConvGeom& g,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weight) {
    check_conv_shapes(input, weight, g);
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    const Shape& os = grad_out.shape();

    const double* in = input.data();
    const double* w = weight.data();
    const double* go = grad_out.data();
    const int64_t in_chw = is.t * is.h * is.w;
    const int64_t in_hw = is.h * is.w;
    const int64_t w_chw = ws.c * ws.t * ws.h * ws.w;
    const int64_t w_thw = ws.t * ws.h * ws.w;
    const int64_t o_thw = os.t * os.h * os.w;

    if (grad_input) {
        *grad_input = Tensor(is);
        double* gi = grad_input->data();
        // each batch item is owned by one thread; scatter within it is safe
        parallel_for(is.n, [&](int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n) {
                double* gi_n = gi + n * is.c * in_chw;
                for (int64_t co = 0; co < os.c; ++co) {
                    const double* go_p = go + (n * os.c + co) * o_thw;
                    const double* w_co = w + co * w_chw;
                    for (int64_t kt = 0; kt < ws.t; ++kt) {
                        int64_t tlo, thi;
                        tap_out_range(is.t, os.t, kt, g.stride.t, g.padding.t, g.dilation.t, &tlo,
                                      &thi);
                        const int64_t toff = kt * g.dilation.t - g.padding.t;
                        for (int64_t kh = 0; kh < ws.h; ++kh) {
                            int64_t hlo, hhi;
                            tap_out_range(is.h, os.h, kh, g.stride.h, g.padding.h, g.dilation.h,
                                          &hlo, &hhi);
                            const int64_t hoff = kh * g.dilation.h - g.padding.h;
                            for (int64_t kw = 0; kw < ws.w; ++kw) {
                                int64_t wlo, whi;
                                tap_out_range(is.w, os.w, kw, g.stride.w, g.padding.w,
                                              g.dilation.w, &wlo, &whi);
                                const int64_t woff = kw * g.dilation.w - g.padding.w;
                                for (int64_t ci = 0; ci < ws.c; ++ci) {
                                    const double wv =
                                        w_co[ci * w_thw + (kt * ws.h + kh) * ws.w + kw];
                                    if (wv == 0.0) continue;
                                    double* gi_c = gi_n + ci * in_chw;
                                    for (int64_t to = tlo; to < thi; ++to) {
                                        const int64_t ti = to * g.stride.t + toff;
                                        for (int64_t ho = hlo; ho < hhi; ++ho) {
                                            const int64_t hi2 = ho * g.stride.h + hoff;
                                            const double* go_row =
                                                go_p + (to * os.h + ho) * os.w;
                                            double* gi_row =
                                                gi_c + ti * in_hw + hi2 * is.w + woff;
                                            for (int64_t wo = wlo; wo < whi; ++wo)
                                                gi_row[wo * g.stride.w] += wv * go_row[wo];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    if (grad_weight) {
        *grad_weight = Tensor(ws);
        double* gw = grad_weight->data();
        // each output channel owns its weight slice
        parallel_for(ws.n, [&](int64_t lo, int64_t hi) {
            for (int64_t co = lo; co < hi; ++co) {
                double* gw_co = gw + co * w_chw;
                for (int64_t n = 0; n < is.n; ++n) {
                    const double* go_p = go + (n * os.c + co) * o_thw;
                    const double* in_n = in + n * is.c * in_chw;
                    for (int64_t kt = 0; kt < ws.t; ++kt) {
                        int64_t tlo, thi;
                        tap_out_range(is.t, os.t, kt, g.stride.t, g.padding.t, g.dilation.t, &tlo,
                                      &thi);
                        const int64_t toff = kt * g.dilation.t - g.padding.t;
                        for (int64_t kh = 0; kh < ws.h; ++kh) {
                            int64_t hlo, hhi;
                            tap_out_range(is.h, os.h, kh, g.stride.h, g.padding.h, g.dilation.h,
                                          &hlo, &hhi);
                            const int64_t hoff = kh * g.dilation.h - g.padding.h;
                            for (int64_t kw = 0; kw < ws.w; ++kw) {
                                int64_t wlo, whi;
                                tap_out_range(is.w, os.w, kw, g.stride.w, g.padding.w,
                                              g.dilation.w, &wlo, &whi);
                                const int64_t woff = kw * g.dilation.w - g.padding.w;
                                for (int64_t ci = 0; ci < ws.c; ++ci) {
                                    const double* in_c = in_n + ci * in_chw;
                                    double acc = 0.0;
                                    for (int64_t to = tlo; to < thi; ++to) {
                                        const int64_t ti = to * g.stride.t + toff;
                                        for (int64_t ho = hlo; ho < hhi; ++ho) {
                                            const int64_t hi2 = ho * g.stride.h + hoff;
                                            const double* go_row =
                                                go_p + (to * os.h + ho) * os.w;
                                            const double* in_row =
                                                in_c + ti * in_hw + hi2 * is.w + woff;
                                            for (int64_t wo = wlo; wo < whi; ++wo)
                                                acc += go_row[wo] * in_row[wo * g.stride.w];
                                        }
                                    }
                                    gw_co[ci * w_thw + (kt * ws.h + kh) * ws.w + kw] += acc;
                                }
                            }
                        }
                    }
                }
            }
        });
    }
}

// --- batch norm ---------------------------------------------------------------

static void check_bn_shapes(const Tensor& input, const Tensor& scale, const Tensor& shift) {
    if (scale.count() != input.shape().c || shift.count() != input.shape().c)
        throw DimensionError("batchnorm: affine length " + std::to_string(scale.count()) +
                             " does not match channel count " + std::to_string(input.shape().c));
}

Tensor batchnorm_train(const Tensor& input, const Tensor& scale, const Tensor& shift,
                       Tensor& running_mean, Tensor& running_var, double momentum, double eps,
                       BatchNormCache* cache) {
    check_bn_shapes(input, scale, shift);
    const Shape& is = input.shape();
    const int64_t m = is.n * is.t * is.h * is.w;
    const int64_t plane = is.t * is.h * is.w;
    Tensor out(is);
    if (cache) {
        cache->xhat = Tensor(is);
        cache->inv_std.assign(is.c, 0.0);
    }
    const double* in = input.data();
    double* o = out.data();

    parallel_for(is.c, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            double sum = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) sum += p[i];
            }
            const double mean = sum / m;
            double var = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= m;  // biased, matches running estimates and eval mode
            const double inv_std = 1.0 / std::sqrt(var + eps);
            const double g = scale[c];
            const double b = shift[c];
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + (n * is.c + c) * plane;
                double* q = o + (n * is.c + c) * plane;
                double* xh = cache ? cache->xhat.data() + (n * is.c + c) * plane : nullptr;
                for (int64_t i = 0; i < plane; ++i) {
                    const double xhat = (p[i] - mean) * inv_std;
                    if (xh) xh[i] = xhat;
                    q[i] = g * xhat + b;
                }
            }
            if (cache) cache->inv_std[c] = inv_std;
            running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean;
            running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var;
        }
    });
    return out;
}

Tensor batchnorm_eval(const Tensor& input, const Tensor& scale, const Tensor& shift,
                      const Tensor& running_mean, const Tensor& running_var, double eps) {
    check_bn_shapes(input, scale, shift);
    const Shape& is = input.shape();
    const int64_t plane = is.t * is.h * is.w;
    Tensor out(is);
    const double* in = input.data();
    double* o = out.data();
    parallel_for(is.c, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            const double inv_std = 1.0 / std::sqrt(running_var[c] + eps);
            const double a = scale[c] * inv_std;
            const double b = shift[c] - running_mean[c] * a;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + (n * is.c + c) * plane;
                double* q = o + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) q[i] = a * p[i] + b;
            }
        }
    });
    return out;
}

void batchnorm_backward(const BatchNormCache& cache, const Tensor& scale, const Tensor& grad_out,
                        Tensor* grad_input, Tensor* grad_scale, Tensor* grad_shift) {
    const Shape& is = cache.xhat.shape();
    const int64_t m = is.n * is.t * is.h * is.w;
    const int64_t plane = is.t * is.h * is.w;
    if (grad_input) *grad_input = Tensor(is);
    if (grad_scale) *grad_scale = Tensor(Shape{1, is.c, 1, 1, 1});
    if (grad_shift) *grad_shift = Tensor(Shape{1, is.c, 1, 1, 1});
    const double* go = grad_out.data();
    const double* xh = cache.xhat.data();

    parallel_for(is.c, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            double dsum = 0.0, dxhat_sum = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* g = go + (n * is.c + c) * plane;
                const double* x = xh + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    dsum += g[i];
                    dxhat_sum += g[i] * x[i];
                }
            }
            if (grad_scale) (*grad_scale)[c] = dxhat_sum;
            if (grad_shift) (*grad_shift)[c] = dsum;
            if (grad_input) {
                const double k = scale[c] * cache.inv_std[c];
                const double mean_g = dsum / m;
                const double mean_gx = dxhat_sum / m;
                for (int64_t n = 0; n < is.n; ++n) {
                    const double* g = go + (n * is.c + c) * plane;
                    const double* x = xh + (n * is.c + c) * plane;
                    double* gi = grad_input->data() + (n * is.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i)
                        gi[i] = k * (g[i] - mean_g - x[i] * mean_gx);
                }
            }
        }
    });
}

// --- pooling -------------------------------------------------------------------

Tensor maxpool3d(const Tensor& input, const Dim3& kernel, const Dim3& stride, const Dim3& padding,
                 MaxPoolCache* cache) {
    const Shape& is = input.shape();
    Shape os{is.n, is.c, conv_out_extent(is.t, kernel.t, stride.t, padding.t, 1),
             conv_out_extent(is.h, kernel.h, stride.h, padding.h, 1),
             conv_out_extent(is.w, kernel.w, stride.w, padding.w, 1)};
    if (os.t < 1 || os.h < 1 || os.w < 1)
        throw DimensionError("maxpool3d: kernel larger than padded input " + is.str());
    Tensor out(os);
    if (cache) cache->argmax.assign(static_cast<size_t>(os.count()), -1);
    const double* in = input.data();
    double* o = out.data();
    const int64_t plane = is.t * is.h * is.w;
    const int64_t o_plane = os.t * os.h * os.w;

    parallel_for(is.n * is.c, [&](int64_t lo, int64_t hi) {
        for (int64_t nc = lo; nc < hi; ++nc) {
            const double* p = in + nc * plane;
            double* q = o + nc * o_plane;
            int64_t oi = 0;
            for (int64_t to = 0; to < os.t; ++to)
                for (int64_t ho = 0; ho < os.h; ++ho)
                    for (int64_t wo = 0; wo < os.w; ++wo, ++oi) {
                        double best = -std::numeric_limits<double>::infinity();
                        int64_t best_idx = -1;
                        for (int kt = 0; kt < kernel.t; ++kt) {
                            const int64_t ti = to * stride.t - padding.t + kt;
                            if (ti < 0 || ti >= is.t) continue;
                            for (int kh = 0; kh < kernel.h; ++kh) {
                                const int64_t hi2 = ho * stride.h - padding.h + kh;
                                if (hi2 < 0 || hi2 >= is.h) continue;
                                for (int kw = 0; kw < kernel.w; ++kw) {
                                    const int64_t wi = wo * stride.w - padding.w + kw;
                                    if (wi < 0 || wi >= is.w) continue;
                                    const int64_t idx = (ti * is.h + hi2) * is.w + wi;
                                    if (p[idx] > best) {
                                        best = p[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        q[oi] = best;
                        if (cache) cache->argmax[nc * o_plane + oi] = nc * plane + best_idx;
                    }
        }
    });
    return out;
}

Tensor maxpool3d_backward(const Shape& in_shape, const MaxPoolCache& cache,
                          const Tensor& grad_out) {
    Tensor gi(in_shape);
    const int64_t o_count = grad_out.count();
    const Shape& os = grad_out.shape();
    const int64_t o_plane = os.t * os.h * os.w;
    // windows overlap inside a channel plane; planes are independent
    parallel_for(os.n * os.c, [&](int64_t lo, int64_t hi) {
        for (int64_t nc = lo; nc < hi; ++nc)
            for (int64_t i = nc * o_plane; i < (nc + 1) * o_plane && i < o_count; ++i)
                gi[cache.argmax[static_cast<size_t>(i)]] += grad_out[i];
    });
    return gi;
}

Tensor global_avgpool(const Tensor& input) {
    const Shape& is = input.shape();
    Tensor out(Shape{is.n, is.c, 1, 1, 1});
    const int64_t plane = is.t * is.h * is.w;
    const double* in = input.data();
    for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
        double sum = 0.0;
        const double* p = in + nc * plane;
        for (int64_t i = 0; i < plane; ++i) sum += p[i];
        out[nc] = sum / plane;
    }
    return out;
}

Tensor global_avgpool_backward(const Shape& in_shape, const Tensor& grad_out) {
    Tensor gi(in_shape);
    const int64_t plane = in_shape.t * in_shape.h * in_shape.w;
    for (int64_t nc = 0; nc < in_shape.n * in_shape.c; ++nc) {
        const double g = grad_out[nc] / plane;
        double* p = gi.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] = g;
    }
    return gi;
}

// --- activation / fc / dropout --------------------------------------------------

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.count(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_out) {
    Tensor gi(output.shape());
    for (int64_t i = 0; i < output.count(); ++i) gi[i] = output[i] > 0.0 ? grad_out[i] : 0.0;
    return gi;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    const Shape& is = input.shape();
    const int64_t ci = is.c * is.t * is.h * is.w;
    const Shape& ws = weight.shape();  // (Co, Ci)
    if (ws.c != ci)
        throw DimensionError("fully_connected: input features " + std::to_string(ci) +
                             " vs weight in-features " + std::to_string(ws.c));
    if (bias.count() != ws.n)
        throw DimensionError("fully_connected: bias length mismatch");
    Tensor out(Shape{is.n, ws.n, 1, 1, 1});
    for (int64_t n = 0; n < is.n; ++n) {
        const double* x = input.data() + n * ci;
        for (int64_t o = 0; o < ws.n; ++o) {
            const double* w = weight.data() + o * ci;
            double acc = bias[o];
            for (int64_t i = 0; i < ci; ++i) acc += x[i] * w[i];
            out[n * ws.n + o] = acc;
        }
    }
    return out;
}

void fully_connected_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                              Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias) {
    const Shape& is = input.shape();
    const int64_t ci = is.c * is.t * is.h * is.w;
    const Shape& ws = weight.shape();
    if (grad_input) {
        *grad_input = Tensor(is);
        for (int64_t n = 0; n < is.n; ++n) {
            double* gx = grad_input->data() + n * ci;
            for (int64_t o = 0; o < ws.n; ++o) {
                const double g = grad_out[n * ws.n + o];
                const double* w = weight.data() + o * ci;
                for (int64_t i = 0; i < ci; ++i) gx[i] += g * w[i];
            }
        }
    }
    if (grad_weight) {
        *grad_weight = Tensor(ws);
        for (int64_t n = 0; n < is.n; ++n) {
            const double* x = input.data() + n * ci;
            for (int64_t o = 0; o < ws.n; ++o) {
                const double g = grad_out[n * ws.n + o];
                double* gw = grad_weight->data() + o * ci;
                for (int64_t i = 0; i < ci; ++i) gw[i] += g * x[i];
            }
        }
    }
    if (grad_bias) {
        *grad_bias = Tensor(Shape{1, ws.n, 1, 1, 1});
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t o = 0; o < ws.n; ++o) (*grad_bias)[o] += grad_out[n * ws.n + o];
    }
}

static double dropout_keep_scale(double p) {
    if (p < 0.0 || p >= 1.0) throw InputError("dropout: p must be in [0, 1)");
    return 1.0 / (1.0 - p);
}

Tensor dropout(const Tensor& input, double p, uint64_t seed, uint64_t stream, bool train) {
    if (!train || p == 0.0) return input;
    const double scale = dropout_keep_scale(p);
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.count(); ++i) {
        const double u =
            static_cast<double>(Rng::mix(seed, stream, static_cast<uint64_t>(i)) >> 11) *
            (1.0 / 9007199254740992.0);
        out[i] = u < p ? 0.0 : input[i] * scale;
    }
    return out;
}

Tensor dropout_backward(const Tensor& grad_out, double p, uint64_t seed, uint64_t stream,
                        bool train) {
    if (!train || p == 0.0) return grad_out;
    const double scale = dropout_keep_scale(p);
    Tensor gi(grad_out.shape());
    for (int64_t i = 0; i < grad_out.count(); ++i) {
        const double u =
            static_cast<double>(Rng::mix(seed, stream, static_cast<uint64_t>(i)) >> 11) *
            (1.0 / 9007199254740992.0);
        gi[i] = u < p ? 0.0 : grad_out[i] * scale;
    }
    return gi;
}

Tensor softmax(const Tensor& logits) {
    const Shape& is = logits.shape();
    const int64_t k = is.c * is.t * is.h * is.w;
    Tensor out(is);
    for (int64_t n = 0; n < is.n; ++n) {
        const double* x = logits.data() + n * k;
        double* y = out.data() + n * k;
        double m = x[0];
        for (int64_t i = 1; i < k; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (int64_t i = 0; i < k; ++i) {
            y[i] = std::exp(x[i] - m);
            z += y[i];
        }
        for (int64_t i = 0; i < k; ++i) y[i] /= z;
    }
    return out;
}

Tensor sigmoid(const Tensor& input) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.count(); ++i) {
        const double x = input[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.n != bs.n || as.t != bs.t || as.h != bs.h || as.w != bs.w)
        throw DimensionError("concat_channels: non-channel axes differ, " + as.str() + " vs " +
                             bs.str());
    Shape os{as.n, as.c + bs.c, as.t, as.h, as.w};
    Tensor out(os);
    const int64_t plane = as.t * as.h * as.w;
    for (int64_t n = 0; n < as.n; ++n) {
        std::memcpy(out.data() + n * os.c * plane, a.data() + n * as.c * plane,
                    sizeof(double) * as.c * plane);
        std::memcpy(out.data() + (n * os.c + as.c) * plane, b.data() + n * bs.c * plane,
                    sizeof(double) * bs.c * plane);
    }
    return out;
}

void split_channels_backward(const Tensor& grad_out, int64_t c_a, Tensor* grad_a, Tensor* grad_b) {
    const Shape& os = grad_out.shape();
    const int64_t plane = os.t * os.h * os.w;
    const int64_t c_b = os.c - c_a;
    if (grad_a) *grad_a = Tensor(Shape{os.n, c_a, os.t, os.h, os.w});
    if (grad_b) *grad_b = Tensor(Shape{os.n, c_b, os.t, os.h, os.w});
    for (int64_t n = 0; n < os.n; ++n) {
        if (grad_a)
            std::memcpy(grad_a->data() + n * c_a * plane, grad_out.data() + n * os.c * plane,
                        sizeof(double) * c_a * plane);
        if (grad_b)
            std::memcpy(grad_b->data() + n * c_b * plane,
                        grad_out.data() + (n * os.c + c_a) * plane, sizeof(double) * c_b * plane);
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.count(); ++i) out[i] = a[i] + b[i];
    return out;
}

// --- lateral transforms ----------------------------------------------------------

Tensor reshape_ttoc(const Tensor& fast, int omega) {
    const Shape& is = fast.shape();
    if (is.t % omega != 0)
        throw DimensionError("reshape_ttoc: temporal extent " + std::to_string(is.t) +
                             " not divisible by omega " + std::to_string(omega));
    Shape os{is.n, is.c * omega, is.t / omega, is.h, is.w};
    Tensor out(os);
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c)
            for (int64_t t = 0; t < os.t; ++t)
                for (int f = 0; f < omega; ++f) {
                    const int64_t oc = static_cast<int64_t>(f) * is.c + c;  // frame-major
                    for (int64_t h = 0; h < is.h; ++h)
                        for (int64_t w = 0; w < is.w; ++w)
                            out.at(n, oc, t, h, w) = fast.at(n, c, t * omega + f, h, w);
                }
    return out;
}

Tensor reshape_ttoc_inverse(const Tensor& packed, int omega) {
    const Shape& os = packed.shape();
    if (os.c % omega != 0)
        throw DimensionError("reshape_ttoc_inverse: channel extent not divisible by omega");
    Shape is{os.n, os.c / omega, os.t * omega, os.h, os.w};
    Tensor out(is);
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c)
            for (int64_t t = 0; t < os.t; ++t)
                for (int f = 0; f < omega; ++f) {
                    const int64_t oc = static_cast<int64_t>(f) * is.c + c;
                    for (int64_t h = 0; h < is.h; ++h)
                        for (int64_t w = 0; w < is.w; ++w)
                            out.at(n, c, t * omega + f, h, w) = packed.at(n, oc, t, h, w);
                }
    return out;
}

Tensor temporal_subsample(const Tensor& fast, int omega) {
    const Shape& is = fast.shape();
    if (is.t % omega != 0)
        throw DimensionError("temporal_subsample: temporal extent " + std::to_string(is.t) +
                             " not divisible by omega " + std::to_string(omega));
    Shape os{is.n, is.c, is.t / omega, is.h, is.w};
    Tensor out(os);
    const int64_t hw = is.h * is.w;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c)
            for (int64_t t = 0; t < os.t; ++t)
                std::memcpy(out.data() + ((n * os.c + c) * os.t + t) * hw,
                            fast.data() + ((n * is.c + c) * is.t + t * omega) * hw,
                            sizeof(double) * hw);
    return out;
}

Tensor temporal_subsample_backward(const Shape& in_shape, const Tensor& grad_out, int omega) {
    Tensor gi(in_shape);
    const Shape& os = grad_out.shape();
    const int64_t hw = in_shape.h * in_shape.w;
    for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c)
            for (int64_t t = 0; t < os.t; ++t)
                std::memcpy(gi.data() + ((n * in_shape.c + c) * in_shape.t + t * omega) * hw,
                            grad_out.data() + ((n * os.c + c) * os.t + t) * hw,
                            sizeof(double) * hw);
    return gi;
}

// --- losses ----------------------------------------------------------------------

double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad_logits) {
    const Shape& is = logits.shape();
    const int64_t k = is.c * is.t * is.h * is.w;
    if (static_cast<int64_t>(labels.size()) != is.n)
        throw DimensionError("cross_entropy: batch " + std::to_string(is.n) + " vs " +
                             std::to_string(labels.size()) + " labels");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw InputError("cross_entropy: label " + std::to_string(label) +
                             " out of range [0," + std::to_string(k) + ")");
    if (grad_logits) *grad_logits = Tensor(is);
    double loss = 0.0;
    for (int64_t n = 0; n < is.n; ++n) {
        const double* x = logits.data() + n * k;
        double m = x[0];
        for (int64_t i = 1; i < k; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (int64_t i = 0; i < k; ++i) z += std::exp(x[i] - m);
        const double lse = m + std::log(z);
        loss += lse - x[labels[n]];
        if (grad_logits) {
            double* g = grad_logits->data() + n * k;
            for (int64_t i = 0; i < k; ++i) g[i] = std::exp(x[i] - lse) / is.n;
            g[labels[n]] -= 1.0 / is.n;
        }
    }
    return loss / is.n;
}

double binary_cross_entropy(const Tensor& logits, const Tensor& targets, Tensor* grad_logits) {
    if (!logits.same_shape(targets))
        throw DimensionError("binary_cross_entropy: logits " + logits.shape().str() +
                             " vs targets " + targets.shape().str());
    for (int64_t i = 0; i < targets.count(); ++i)
        if (targets[i] < 0.0 || targets[i] > 1.0)
            throw InputError("binary_cross_entropy: target outside [0,1]");
    if (grad_logits) *grad_logits = Tensor(logits.shape());
    const int64_t count = logits.count();
    double loss = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        const double x = logits[i];
        const double t = targets[i];
        loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
        if (grad_logits) {
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            (*grad_logits)[i] = (s - t) / count;
        }
    }
    return loss / count;
}

// --- finite differences -------------------------------------------------------------

GradCheckReport finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> theta, const std::vector<double>& analytic,
                                  const std::vector<int64_t>& coords, double epsilon) {
    if (coords.empty()) throw InputError("finite_diff_check: empty coordinate sample");
    if (epsilon <= 0.0) throw InputError("finite_diff_check: epsilon must be positive");
    GradCheckReport report;
    // denominator guard: sits above the fd rounding noise (~|f|*1e-16/eps), so
    // near-zero gradients are compared absolutely instead of against noise
    constexpr double kFloor = 1e-4;
    const double f0 = f(theta);
    if (!std::isfinite(f0)) throw NumericError("finite_diff_check: non-finite loss");
    for (int64_t idx : coords) {
        const double saved = theta[static_cast<size_t>(idx)];
        theta[static_cast<size_t>(idx)] = saved + epsilon;
        const double fp = f(theta);
        theta[static_cast<size_t>(idx)] = saved - epsilon;
        const double fm = f(theta);
        theta[static_cast<size_t>(idx)] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_check: non-finite loss at coordinate " +
                               std::to_string(idx));
        const double fd = (fp - fm) / (2.0 * epsilon);
        // the network is piecewise smooth (relu, max pool): a kink inside the
        // interval makes the one-sided differences asymmetric by exactly twice
        // the central-difference error, so such coordinates are not valid
        // measurement points and are skipped
        const double asym = ((fp - f0) - (f0 - fm)) / epsilon;
        if (std::fabs(asym) > 2e-4 * std::max(std::fabs(fd), kFloor)) {
            ++report.coords_skipped;
            continue;
        }
        const double a = analytic[static_cast<size_t>(idx)];
        const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), kFloor});
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_coord = "coord " + std::to_string(idx);
        }
        ++report.coords_checked;
    }
    return report;
}

}  // namespace sfnet
