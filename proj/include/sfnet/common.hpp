#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace sfnet {

// Error taxonomy. Every throw site names what went wrong; callers catch by
// category (the CLI maps them to exit codes).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Dim3 {
    int t = 1, h = 1, w = 1;
    bool operator==(const Dim3&) const = default;
};

// Counter-based generator: every draw is a pure function of (seed, stream, counter),
// so masks and samples replay exactly regardless of call interleaving.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

    // [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // integer in [0, n)
    uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    int next_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // standard normal via Box-Muller (uniforms come from the counter stream)
    double next_normal();

    static uint64_t mix(uint64_t seed, uint64_t stream, uint64_t counter);

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives a child stream id from a label; used to give each layer / iteration
// its own independent stream of the same seed.
uint64_t stream_id(const std::string& label);

// Chunked parallel map over [0, n). Each index is visited exactly once by one
// thread, so results are bit-identical for any thread count.
// Thread count: min(SFB_THREADS or hardware_concurrency, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

int max_threads();

}  // namespace sfnet
