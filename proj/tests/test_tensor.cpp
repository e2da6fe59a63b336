#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sfnet/kernels.hpp"
#include "sfnet/params.hpp"

using namespace sfnet;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (int64_t i = 0; i < t.count(); ++i) t[i] = lo + (hi - lo) * rng.next_double();
    return t;
}

// six-nested-loop direct convolution, the oracle of record
Tensor conv3d_oracle(const Tensor& in, const Tensor& w, const ConvGeom& g) {
    const Shape& is = in.shape();
    const Shape& ws = w.shape();
    Shape os{is.n, ws.n, conv_out_extent(is.t, ws.t, g.stride.t, g.padding.t, g.dilation.t),
             conv_out_extent(is.h, ws.h, g.stride.h, g.padding.h, g.dilation.h),
             conv_out_extent(is.w, ws.w, g.stride.w, g.padding.w, g.dilation.w)};
    Tensor out(os);
    for (int64_t n = 0; n < os.n; ++n)
        for (int64_t co = 0; co < os.c; ++co)
            for (int64_t to = 0; to < os.t; ++to)
                for (int64_t ho = 0; ho < os.h; ++ho)
                    for (int64_t wo = 0; wo < os.w; ++wo) {
                        double acc = 0.0;
                        for (int64_t ci = 0; ci < is.c; ++ci)
                            for (int64_t kt = 0; kt < ws.t; ++kt)
                                for (int64_t kh = 0; kh < ws.h; ++kh)
                                    for (int64_t kw = 0; kw < ws.w; ++kw) {
                                        const int64_t ti =
                                            to * g.stride.t - g.padding.t + kt * g.dilation.t;
                                        const int64_t hi =
                                            ho * g.stride.h - g.padding.h + kh * g.dilation.h;
                                        const int64_t wi =
                                            wo * g.stride.w - g.padding.w + kw * g.dilation.w;
                                        if (ti < 0 || ti >= is.t || hi < 0 || hi >= is.h ||
                                            wi < 0 || wi >= is.w)
                                            continue;
                                        acc += in.at(n, ci, ti, hi, wi) * w.at(co, ci, kt, kh, kw);
                                    }
                        out.at(n, co, to, ho, wo) = acc;
                    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (int64_t i = 0; i < a.count(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// adjoint identity: <grad_out, F(x)> differentiated against finite differences
// on a linear probe; checks dF^T exactly for smooth kernels
double probe_loss(const Tensor& out, const Tensor& probe) {
    double s = 0.0;
    for (int64_t i = 0; i < out.count(); ++i) s += out[i] * probe[i];
    return s;
}

}  // namespace

TEST_CASE("conv3d identity and zero cases") {
    // 1x1x1 kernel, single channel, weight 1 -> identity
    Rng rng(7);
    Tensor in = random_tensor(Shape{1, 1, 3, 4, 4}, rng);
    Tensor w(Shape{1, 1, 1, 1, 1}, 1.0);
    Tensor out = conv3d(in, w, ConvGeom{});
    CHECK(max_abs_diff(in, out) == 0.0);

    Tensor zeros(Shape{2, 3, 2, 5, 5}, 0.0);
    Tensor w2 = random_tensor(Shape{4, 3, 1, 3, 3}, rng);
    Tensor out2 = conv3d(zeros, w2, ConvGeom{Dim3{1, 1, 1}, Dim3{0, 1, 1}, Dim3{1, 1, 1}});
    CHECK(out2.max_abs() == 0.0);
}

TEST_CASE("conv3d matches the nested-loop oracle on random cases") {
    Rng rng(11);
    // the spec's named case: 2x3x4x4, 3x3x3 kernel, stride 1, padding 1
    {
        Tensor in = random_tensor(Shape{1, 2, 3, 4, 4}, rng);
        Tensor w = random_tensor(Shape{2, 2, 3, 3, 3}, rng);
        ConvGeom g{Dim3{1, 1, 1}, Dim3{1, 1, 1}, Dim3{1, 1, 1}};
        CHECK(max_abs_diff(conv3d(in, w, g), conv3d_oracle(in, w, g)) < 1e-12);
    }
    for (int c = 0; c < 50; ++c) {
        Shape is{rng.next_int(1, 2), rng.next_int(1, 4), rng.next_int(1, 8), rng.next_int(1, 8),
                 rng.next_int(1, 8)};
        Dim3 kernel{rng.next_int(1, std::min<int>(3, is.t)), rng.next_int(1, 3),
                    rng.next_int(1, 3)};
        ConvGeom g{Dim3{rng.next_int(1, 2), rng.next_int(1, 2), rng.next_int(1, 2)},
                   Dim3{rng.next_int(0, 1), rng.next_int(0, 1), rng.next_int(0, 1)},
                   Dim3{1, rng.next_int(1, 2), rng.next_int(1, 2)}};
        // keep the dilated kernel inside the padded input
        if (conv_out_extent(is.h, kernel.h, g.stride.h, g.padding.h, g.dilation.h) < 1 ||
            conv_out_extent(is.w, kernel.w, g.stride.w, g.padding.w, g.dilation.w) < 1)
            continue;
        Tensor in = random_tensor(is, rng);
        Tensor w = random_tensor(Shape{rng.next_int(1, 4), is.c, kernel.t, kernel.h, kernel.w},
                                 rng);
        CHECK(max_abs_diff(conv3d(in, w, g), conv3d_oracle(in, w, g)) < 1e-12);
    }
}

TEST_CASE("conv3d dimension errors name the offending axis") {
    Tensor in(Shape{1, 3, 2, 4, 4});
    Tensor w(Shape{2, 4, 1, 1, 1});
    CHECK_THROWS_AS(conv3d(in, w, ConvGeom{}), DimensionError);
    Tensor wbig(Shape{2, 3, 5, 1, 1});
    CHECK_THROWS_AS(conv3d(in, wbig, ConvGeom{}), DimensionError);
}

TEST_CASE("conv3d adjoints are exact (linear probe, central differences)") {
    Rng rng(13);
    for (int c = 0; c < 10; ++c) {
        Shape is{2, 2, 4, 5, 5};
        Dim3 kernel{3, 3, 3};
        ConvGeom g{Dim3{rng.next_int(1, 2), rng.next_int(1, 2), rng.next_int(1, 2)},
                   Dim3{1, 1, 1}, Dim3{1, rng.next_int(1, 2), rng.next_int(1, 2)}};
        Tensor in = random_tensor(is, rng);
        Tensor w = random_tensor(Shape{3, is.c, kernel.t, kernel.h, kernel.w}, rng);
        Tensor out = conv3d(in, w, g);
        Tensor probe = random_tensor(out.shape(), rng);
        Tensor gin, gw;
        conv3d_backward(in, w, g, probe, &gin, &gw);

        // conv is bilinear: directional finite differences are exact to rounding
        Rng prng(17);
        for (int k = 0; k < 20; ++k) {
            const int64_t i = static_cast<int64_t>(prng.next_below(in.count()));
            Tensor in2 = in;
            const double eps = 1e-6;
            in2[i] += eps;
            const double fp = probe_loss(conv3d(in2, w, g), probe);
            in2[i] -= 2 * eps;
            const double fm = probe_loss(conv3d(in2, w, g), probe);
            CHECK(std::fabs((fp - fm) / (2 * eps) - gin[i]) < 1e-7);
        }
        for (int k = 0; k < 20; ++k) {
            const int64_t i = static_cast<int64_t>(prng.next_below(w.count()));
            Tensor w2 = w;
            const double eps = 1e-6;
            w2[i] += eps;
            const double fp = probe_loss(conv3d(in, w2, g), probe);
            w2[i] -= 2 * eps;
            const double fm = probe_loss(conv3d(in, w2, g), probe);
            CHECK(std::fabs((fp - fm) / (2 * eps) - gw[i]) < 1e-7);
        }
    }
}

TEST_CASE("batchnorm train statistics match the direct oracle") {
    Rng rng(19);
    for (int c = 0; c < 50; ++c) {
        Shape is{rng.next_int(2, 4), rng.next_int(1, 3), rng.next_int(1, 4), rng.next_int(2, 6),
                 rng.next_int(2, 6)};
        Tensor in = random_tensor(is, rng, -2.0, 3.0);
        Tensor scale(Shape{1, is.c, 1, 1, 1}, 1.0);
        Tensor shift(Shape{1, is.c, 1, 1, 1}, 0.0);
        Tensor rm(Shape{1, is.c, 1, 1, 1}, 0.0);
        Tensor rv(Shape{1, is.c, 1, 1, 1}, 1.0);
        Tensor out = batchnorm_train(in, scale, shift, rm, rv, 0.9, 1e-5, nullptr);

        const int64_t m = is.n * is.t * is.h * is.w;
        for (int64_t ch = 0; ch < is.c; ++ch) {
            // direct mean/variance oracle over (N,T,H,W)
            double mean = 0.0, var = 0.0, omean = 0.0, ovar = 0.0;
            for (int64_t n = 0; n < is.n; ++n)
                for (int64_t t = 0; t < is.t; ++t)
                    for (int64_t h = 0; h < is.h; ++h)
                        for (int64_t w = 0; w < is.w; ++w) {
                            mean += in.at(n, ch, t, h, w);
                            omean += out.at(n, ch, t, h, w);
                        }
            mean /= m;
            omean /= m;
            for (int64_t n = 0; n < is.n; ++n)
                for (int64_t t = 0; t < is.t; ++t)
                    for (int64_t h = 0; h < is.h; ++h)
                        for (int64_t w = 0; w < is.w; ++w) {
                            var += std::pow(in.at(n, ch, t, h, w) - mean, 2);
                            ovar += std::pow(out.at(n, ch, t, h, w) - omean, 2);
                        }
            var /= m;
            ovar /= m;
            CHECK(std::fabs(omean) < 1e-10);                    // normalized mean
            if (var > 1e-3) CHECK(std::fabs(ovar - 1.0) < 1e-4);  // unit variance (eps-limited)
            // running stats updated with momentum 0.9
            CHECK(rm[ch] == doctest::Approx(0.1 * mean).epsilon(1e-12));
            CHECK(rv[ch] == doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
        }
    }
}

TEST_CASE("batchnorm constant channel collapses to shift") {
    Tensor in(Shape{2, 1, 2, 3, 3}, 4.2);
    Tensor scale(Shape{1, 1, 1, 1, 1}, 2.0);
    Tensor shift(Shape{1, 1, 1, 1, 1}, 0.7);
    Tensor rm(Shape{1, 1, 1, 1, 1}, 0.0), rv(Shape{1, 1, 1, 1, 1}, 1.0);
    Tensor out = batchnorm_train(in, scale, shift, rm, rv, 0.9, 1e-5, nullptr);
    for (int64_t i = 0; i < out.count(); ++i) CHECK(out[i] == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("batchnorm standardized input is a fixed point") {
    // build a channel with exact zero mean, unit (biased) variance
    Tensor in(Shape{1, 1, 1, 2, 2});
    in[0] = 1;
    in[1] = -1;
    in[2] = 1;
    in[3] = -1;
    Tensor scale(Shape{1, 1, 1, 1, 1}, 1.0);
    Tensor shift(Shape{1, 1, 1, 1, 1}, 0.0);
    Tensor rm(Shape{1, 1, 1, 1, 1}, 0.0), rv(Shape{1, 1, 1, 1, 1}, 1.0);
    Tensor out = batchnorm_train(in, scale, shift, rm, rv, 0.9, 1e-5, nullptr);
    CHECK(max_abs_diff(in, out) < 1e-5);  // off only by the epsilon in 1/sqrt(1+eps)
}

TEST_CASE("batchnorm eval is a deterministic affine map") {
    Rng rng(23);
    Tensor in = random_tensor(Shape{2, 3, 2, 4, 4}, rng);
    Tensor scale = random_tensor(Shape{1, 3, 1, 1, 1}, rng, 0.5, 2.0);
    Tensor shift = random_tensor(Shape{1, 3, 1, 1, 1}, rng);
    Tensor rm = random_tensor(Shape{1, 3, 1, 1, 1}, rng);
    Tensor rv = random_tensor(Shape{1, 3, 1, 1, 1}, rng, 0.1, 2.0);
    Tensor once = batchnorm_eval(in, scale, shift, rm, rv, 1e-5);
    Tensor twice = batchnorm_eval(once, scale, shift, rm, rv, 1e-5);
    // compose the affine maps per channel and apply in one shot
    Tensor composed(in.shape());
    for (int64_t c = 0; c < 3; ++c) {
        const double a = scale[c] / std::sqrt(rv[c] + 1e-5);
        const double b = shift[c] - rm[c] * a;
        const double a2 = a * a;
        const double b2 = a * b + b;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t t = 0; t < 2; ++t)
                for (int64_t h = 0; h < 4; ++h)
                    for (int64_t w = 0; w < 4; ++w)
                        composed.at(n, c, t, h, w) = a2 * in.at(n, c, t, h, w) + b2;
    }
    CHECK(max_abs_diff(twice, composed) < 1e-12);
    CHECK_THROWS_AS(batchnorm_eval(in, Tensor(Shape{1, 2, 1, 1, 1}, 1.0), shift, rm, rv, 1e-5),
                    DimensionError);
}

TEST_CASE("batchnorm backward matches central differences") {
    Rng rng(29);
    Shape is{3, 2, 2, 3, 3};
    Tensor in = random_tensor(is, rng);
    Tensor scale = random_tensor(Shape{1, 2, 1, 1, 1}, rng, 0.5, 1.5);
    Tensor shift = random_tensor(Shape{1, 2, 1, 1, 1}, rng);
    Tensor probe = random_tensor(is, rng);

    auto run = [&](const Tensor& x, const Tensor& sc, const Tensor& sh) {
        Tensor rm(Shape{1, 2, 1, 1, 1}, 0.0), rv(Shape{1, 2, 1, 1, 1}, 1.0);
        return batchnorm_train(x, sc, sh, rm, rv, 0.9, 1e-5, nullptr);
    };
    Tensor rm(Shape{1, 2, 1, 1, 1}, 0.0), rv(Shape{1, 2, 1, 1, 1}, 1.0);
    BatchNormCache cache;
    batchnorm_train(in, scale, shift, rm, rv, 0.9, 1e-5, &cache);
    Tensor gin, gscale, gshift;
    batchnorm_backward(cache, scale, probe, &gin, &gscale, &gshift);

    const double eps = 1e-6;
    Rng prng(31);
    for (int k = 0; k < 25; ++k) {
        const int64_t i = static_cast<int64_t>(prng.next_below(in.count()));
        Tensor x = in;
        x[i] += eps;
        const double fp = probe_loss(run(x, scale, shift), probe);
        x[i] -= 2 * eps;
        const double fm = probe_loss(run(x, scale, shift), probe);
        CHECK(gin[i] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-5));
    }
    for (int64_t c = 0; c < 2; ++c) {
        Tensor sc = scale;
        sc[c] += eps;
        const double fp = probe_loss(run(in, sc, shift), probe);
        sc[c] -= 2 * eps;
        const double fm = probe_loss(run(in, sc, shift), probe);
        CHECK(gscale[c] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-6));
        Tensor sh = shift;
        sh[c] += eps;
        const double gp = probe_loss(run(in, scale, sh), probe);
        sh[c] -= 2 * eps;
        const double gm = probe_loss(run(in, scale, sh), probe);
        CHECK(gshift[c] == doctest::Approx((gp - gm) / (2 * eps)).epsilon(1e-6));
    }
}

TEST_CASE("maxpool matches a sliding-window oracle") {
    Rng rng(37);
    for (int c = 0; c < 50; ++c) {
        Shape is{rng.next_int(1, 2), rng.next_int(1, 3), rng.next_int(1, 4), rng.next_int(3, 8),
                 rng.next_int(3, 8)};
        Dim3 kernel{rng.next_int(1, static_cast<int>(is.t)), rng.next_int(2, 3),
                    rng.next_int(2, 3)};
        Dim3 stride{1, rng.next_int(1, 2), rng.next_int(1, 2)};
        Dim3 pad{0, rng.next_int(0, 1), rng.next_int(0, 1)};
        Tensor in = random_tensor(is, rng);
        Tensor out = maxpool3d(in, kernel, stride, pad);
        const Shape& os = out.shape();
        for (int64_t n = 0; n < os.n; ++n)
            for (int64_t ch = 0; ch < os.c; ++ch)
                for (int64_t to = 0; to < os.t; ++to)
                    for (int64_t ho = 0; ho < os.h; ++ho)
                        for (int64_t wo = 0; wo < os.w; ++wo) {
                            double best = -1e300;
                            for (int kt = 0; kt < kernel.t; ++kt)
                                for (int kh = 0; kh < kernel.h; ++kh)
                                    for (int kw = 0; kw < kernel.w; ++kw) {
                                        const int64_t ti = to * stride.t - pad.t + kt;
                                        const int64_t hi = ho * stride.h - pad.h + kh;
                                        const int64_t wi = wo * stride.w - pad.w + kw;
                                        if (ti < 0 || ti >= is.t || hi < 0 || hi >= is.h ||
                                            wi < 0 || wi >= is.w)
                                            continue;
                                        best = std::max(best, in.at(n, ch, ti, hi, wi));
                                    }
                            CHECK(out.at(n, ch, to, ho, wo) == best);
                        }
    }
}

TEST_CASE("maxpool backward routes gradient to the argmax") {
    Rng rng(41);
    Tensor in = random_tensor(Shape{1, 1, 1, 4, 4}, rng);
    MaxPoolCache cache;
    Tensor out = maxpool3d(in, Dim3{1, 2, 2}, Dim3{1, 2, 2}, Dim3{0, 0, 0}, &cache);
    Tensor gout(out.shape(), 1.0);
    Tensor gin = maxpool3d_backward(in.shape(), cache, gout);
    double total = 0.0;
    for (int64_t i = 0; i < gin.count(); ++i) {
        CHECK((gin[i] == 0.0 || gin[i] == 1.0));
        total += gin[i];
    }
    CHECK(total == doctest::Approx(4.0));
}

TEST_CASE("global average pool of a constant is the constant") {
    Tensor in(Shape{2, 3, 4, 5, 5}, 7.0);
    Tensor out = global_avgpool(in);
    CHECK(out.shape() == Shape{2, 3, 1, 1, 1});
    for (int64_t i = 0; i < out.count(); ++i) CHECK(out[i] == doctest::Approx(7.0));
}

TEST_CASE("softmax symmetry and normalization") {
    Tensor logits(Shape{1, 4, 1, 1, 1}, 0.0);
    Tensor p = softmax(logits);
    for (int64_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(43);
    for (int c = 0; c < 20; ++c) {
        Tensor x = random_tensor(Shape{3, 7, 1, 1, 1}, rng, -30, 30);
        Tensor y = softmax(x);
        for (int64_t n = 0; n < 3; ++n) {
            double sum = 0.0;
            for (int64_t k = 0; k < 7; ++k) {
                CHECK(y.at(n, k, 0, 0, 0) > 0.0);
                sum += y.at(n, k, 0, 0, 0);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("fully connected backward matches finite differences") {
    Rng rng(47);
    Tensor in = random_tensor(Shape{3, 5, 1, 1, 1}, rng);
    Tensor w = random_tensor(Shape{4, 5, 1, 1, 1}, rng);
    Tensor b = random_tensor(Shape{1, 4, 1, 1, 1}, rng);
    Tensor probe = random_tensor(Shape{3, 4, 1, 1, 1}, rng);
    Tensor gin, gw, gb;
    fully_connected_backward(in, w, probe, &gin, &gw, &gb);
    const double eps = 1e-6;
    for (int64_t i = 0; i < w.count(); ++i) {
        Tensor w2 = w;
        w2[i] += eps;
        const double fp = probe_loss(fully_connected(in, w2, b), probe);
        w2[i] -= 2 * eps;
        const double fm = probe_loss(fully_connected(in, w2, b), probe);
        CHECK(gw[i] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-6));
    }
    for (int64_t i = 0; i < in.count(); ++i) {
        Tensor in2 = in;
        in2[i] += eps;
        const double fp = probe_loss(fully_connected(in2, w, b), probe);
        in2[i] -= 2 * eps;
        const double fm = probe_loss(fully_connected(in2, w, b), probe);
        CHECK(gin[i] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-6));
    }
}

TEST_CASE("dropout semantics and replay") {
    Rng rng(53);
    Tensor in = random_tensor(Shape{1, 1, 1, 40, 40}, rng, 1.0, 2.0);
    // eval mode is identity
    CHECK(max_abs_diff(dropout(in, 0.5, 9, 1, false), in) == 0.0);
    Tensor a = dropout(in, 0.5, 9, 1, true);
    Tensor b = dropout(in, 0.5, 9, 1, true);
    CHECK(max_abs_diff(a, b) == 0.0);  // mask replays
    int zeros = 0;
    for (int64_t i = 0; i < a.count(); ++i) {
        if (a[i] == 0.0)
            ++zeros;
        else
            CHECK(a[i] == doctest::Approx(2.0 * in[i]).epsilon(1e-12));
    }
    CHECK(zeros > 600);  // ~800 of 1600 expected
    CHECK(zeros < 1000);
    // backward uses the identical mask
    Tensor gout(in.shape(), 1.0);
    Tensor gin = dropout_backward(gout, 0.5, 9, 1, true);
    for (int64_t i = 0; i < a.count(); ++i) CHECK((a[i] == 0.0) == (gin[i] == 0.0));
    CHECK_THROWS_AS(dropout(in, 1.0, 9, 1, true), InputError);
}

TEST_CASE("lateral transforms: pack, sample, invert") {
    Rng rng(59);
    // {32, 56^2, 8} -> {4, 56^2, 64} at desk scale: use {8, 5^2, 3} -> {2, 5^2, 12}
    Tensor fast = random_tensor(Shape{2, 3, 8, 5, 5}, rng);
    Tensor packed = reshape_ttoc(fast, 4);
    CHECK(packed.shape() == Shape{2, 12, 2, 5, 5});
    // frame-major packing: new channel f*C + c holds frame t*omega+f
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t t = 0; t < 2; ++t)
                for (int f = 0; f < 4; ++f)
                    CHECK(packed.at(n, f * 3 + c, t, 2, 3) == fast.at(n, c, t * 4 + f, 2, 3));
    Tensor back = reshape_ttoc_inverse(packed, 4);
    CHECK(max_abs_diff(back, fast) == 0.0);  // bit-exact bijection

    Tensor sub = temporal_subsample(fast, 4);
    CHECK(sub.shape() == Shape{2, 3, 2, 5, 5});
    CHECK(sub.at(0, 1, 0, 1, 1) == fast.at(0, 1, 0, 1, 1));
    CHECK(sub.at(0, 1, 1, 1, 1) == fast.at(0, 1, 4, 1, 1));

    // frames numbered 0..31, omega=8 -> {0,8,16,24}
    Tensor numbered(Shape{1, 1, 32, 1, 1});
    for (int64_t t = 0; t < 32; ++t) numbered.at(0, 0, t, 0, 0) = static_cast<double>(t);
    Tensor picked = temporal_subsample(numbered, 8);
    REQUIRE(picked.shape().t == 4);
    CHECK(picked.at(0, 0, 0, 0, 0) == 0.0);
    CHECK(picked.at(0, 0, 1, 0, 0) == 8.0);
    CHECK(picked.at(0, 0, 2, 0, 0) == 16.0);
    CHECK(picked.at(0, 0, 3, 0, 0) == 24.0);

    CHECK_THROWS_AS(reshape_ttoc(fast, 3), DimensionError);
    CHECK_THROWS_AS(temporal_subsample(fast, 3), DimensionError);
}

TEST_CASE("table-1 lateral geometry: {32,56^2,8} -> {4,56^2,64}") {
    Tensor fast(Shape{1, 8, 32, 7, 7}, 0.5);  // 56 -> 7 keeps the check cheap
    Tensor packed = reshape_ttoc(fast, 8);
    CHECK(packed.shape() == Shape{1, 64, 4, 7, 7});
}

TEST_CASE("cross entropy: saturation, uniform analytic value, oracle") {
    // saturated logits stay finite and near zero loss
    Tensor logits(Shape{1, 2, 1, 1, 1});
    logits[0] = 1000.0;
    logits[1] = -1000.0;
    const double l = cross_entropy(logits, {0});
    CHECK(std::isfinite(l));
    CHECK(l < 1e-12);

    Tensor uniform(Shape{2, 5, 1, 1, 1}, 0.3);
    CHECK(cross_entropy(uniform, {1, 4}) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    // random case vs direct-formula oracle in long double
    Rng rng(61);
    Tensor x = random_tensor(Shape{4, 6, 1, 1, 1}, rng, -3, 3);
    std::vector<int> labels{0, 5, 2, 3};
    long double expected = 0.0L;
    for (int n = 0; n < 4; ++n) {
        long double z = 0.0L;
        for (int k = 0; k < 6; ++k) z += expl(static_cast<long double>(x[n * 6 + k]));
        expected += logl(z) - static_cast<long double>(x[n * 6 + labels[n]]);
    }
    expected /= 4.0L;
    CHECK(cross_entropy(x, labels) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-10));
    CHECK_THROWS_AS(cross_entropy(x, {0, 1, 2, 6}), InputError);

    // gradient vs central differences
    Tensor g;
    cross_entropy(x, labels, &g);
    for (int64_t i = 0; i < x.count(); i += 5) {
        Tensor x2 = x;
        const double eps = 1e-6;
        x2[i] += eps;
        const double fp = cross_entropy(x2, labels);
        x2[i] -= 2 * eps;
        const double fm = cross_entropy(x2, labels);
        CHECK(g[i] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("binary cross entropy matches the stable oracle") {
    Rng rng(67);
    Tensor x = random_tensor(Shape{3, 4, 1, 1, 1}, rng, -8, 8);
    Tensor t(Shape{3, 4, 1, 1, 1});
    for (int64_t i = 0; i < t.count(); ++i) t[i] = rng.next_double() < 0.5 ? 0.0 : 1.0;
    long double expected = 0.0L;
    for (int64_t i = 0; i < x.count(); ++i) {
        const long double xi = x[i];
        const long double s = 1.0L / (1.0L + expl(-xi));
        expected += -(t[i] * logl(s) + (1.0L - t[i]) * logl(1.0L - s));
    }
    expected /= x.count();
    CHECK(binary_cross_entropy(x, t) ==
          doctest::Approx(static_cast<double>(expected)).epsilon(1e-10));

    // saturation
    Tensor sat(Shape{1, 2, 1, 1, 1});
    sat[0] = 500;
    sat[1] = -500;
    Tensor tt(Shape{1, 2, 1, 1, 1});
    tt[0] = 1;
    tt[1] = 0;
    CHECK(std::isfinite(binary_cross_entropy(sat, tt)));
    CHECK(binary_cross_entropy(sat, tt) < 1e-12);
}

TEST_CASE("finite_diff_check on a linear map is exact and rejects empty samples") {
    // linear-only: f(theta) = <a, theta>
    std::vector<double> a{0.05, -0.15, 0.2, 0.35};
    auto f = [&](const std::vector<double>& th) {
        double s = 0.0;
        for (size_t i = 0; i < th.size(); ++i) s += a[i] * th[i];
        return s;
    };
    std::vector<double> theta{0.1, 0.2, 0.3, 0.4};
    GradCheckReport r = finite_diff_check(f, theta, a, {0, 1, 2, 3}, 1e-5);
    CHECK(r.max_rel_error < 1e-10);
    CHECK(r.coords_checked == 4);
    CHECK_THROWS_AS(finite_diff_check(f, theta, a, {}, 1e-5), InputError);
    CHECK_THROWS_AS(finite_diff_check(f, theta, a, {0}, 0.0), InputError);
}

TEST_CASE("concat and add reject mismatched geometry") {
    Tensor a(Shape{1, 2, 2, 4, 4});
    Tensor b(Shape{1, 3, 2, 4, 4});
    Tensor c(Shape{1, 2, 2, 4, 5});
    CHECK_THROWS_AS(concat_channels(a, c), DimensionError);
    CHECK_NOTHROW(concat_channels(a, b));
    CHECK_THROWS_AS(add(a, b), DimensionError);
}

TEST_CASE("finite_diff_check surfaces non-finite losses as numeric errors") {
    auto f = [](const std::vector<double>& th) {
        return th[0] > 0.5 ? std::numeric_limits<double>::infinity() : th[0];
    };
    std::vector<double> theta{0.4999999};
    std::vector<double> analytic{1.0};
    CHECK_THROWS_AS(finite_diff_check(f, theta, analytic, {0}, 1e-5), NumericError);
}

TEST_CASE("checkpoint round trip is exact and canonical") {
    Rng rng(71);
    ParamStore store;
    store.put("b.conv.weight", random_tensor(Shape{2, 3, 1, 3, 3}, rng));
    store.put("a.bn.scale", Tensor(Shape{1, 4, 1, 1, 1}, 1.0));
    store.put("a.bn.running_var", Tensor(Shape{1, 4, 1, 1, 1}, 1.0));
    const std::string path = (std::filesystem::temp_directory_path() / "sfnet_ckpt_test.sfck").string();
    save_checkpoint(path, store);
    ParamStore loaded = load_checkpoint(path);
    REQUIRE(loaded.entries.size() == 3);
    CHECK(max_abs_diff(loaded.at("b.conv.weight"), store.at("b.conv.weight")) == 0.0);
    // same bytes when saved again
    const std::string path2 = (std::filesystem::temp_directory_path() / "sfnet_ckpt_test2.sfck").string();
    save_checkpoint(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(s1.substr(0, 4) == "SFCK");
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
    CHECK(ParamStore::is_running_stat("a.bn.running_var"));
    CHECK(ParamStore::is_affine_or_bias("a.bn.scale"));
    CHECK(!ParamStore::is_affine_or_bias("b.conv.weight"));
}
