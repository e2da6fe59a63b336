#include "sfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace sfnet {

// --- Rng ---------------------------------------------------------------------

// splitmix64 over a combined (seed, stream, counter) word
uint64_t Rng::mix(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z ^= stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

uint64_t stream_id(const std::string& label) {
    // FNV-1a
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// --- threading ----------------------------------------------------------------

int max_threads() {
    static int cached = [] {
        if (const char* env = std::getenv("SFB_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    int nt = std::min<int64_t>(max_threads(), n);
    if (nt <= 1) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    int64_t chunk = (n + nt - 1) / nt;
    for (int i = 1; i < nt; ++i) {
        int64_t lo = i * chunk;
        int64_t hi = std::min<int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    body(0, std::min<int64_t>(n, chunk));
    for (auto& th : pool) th.join();
}

// --- Tensor --------------------------------------------------------------------

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << t << "," << h << "," << w << ")";
    return os.str();
}

void Tensor::add_scaled(const Tensor& o, double alpha) {
    if (!same_shape(o)) throw DimensionError("add_scaled: shape mismatch " + shape_.str() + " vs " + o.shape().str());
    for (size_t i = 0; i < v_.size(); ++i) v_[i] += alpha * o.v_[i];
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace sfnet
