#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfnet/common.hpp"

namespace sfnet {

/// Dense 5-d shape (batch, channels, time, height, width). Trailing axes of a
/// lower-rank value are held at 1.
struct Shape {
    int64_t n = 1, c = 1, t = 1, h = 1, w = 1;

    int64_t count() const { return n * c * t * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense double-precision tensor in NCTHW layout, w fastest.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(const Shape& s) : shape_(s), v_(static_cast<size_t>(s.count()), 0.0) {}
    Tensor(const Shape& s, double fill) : shape_(s), v_(static_cast<size_t>(s.count()), fill) {}

    const Shape& shape() const { return shape_; }
    int64_t count() const { return shape_.count(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& at(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) {
        return v_[static_cast<size_t>(index(n, c, t, h, w))];
    }
    double at(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) const {
        return v_[static_cast<size_t>(index(n, c, t, h, w))];
    }
    double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

    int64_t index(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) const {
        return (((n * shape_.c + c) * shape_.t + t) * shape_.h + h) * shape_.w + w;
    }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // element-wise helpers used all over the training path
    void add_scaled(const Tensor& o, double alpha);
    double max_abs() const;
    bool all_finite() const;

private:
    Shape shape_{0, 0, 0, 0, 0};
    std::vector<double> v_;
};

}  // namespace sfnet
