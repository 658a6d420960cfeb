#pragma once

// Shared plumbing: error types, deterministic RNG, seed mixing, thread cap.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace effectlab {

// Error categories map 1:1 onto CLI exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

inline constexpr int kExitGeneric = 1;
inline constexpr int kExitIo      = 2;
inline constexpr int kExitConfig  = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitShape   = 5;

// splitmix64; used to derive independent per-sample seeds from (seed, id, ...).
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

template <typename... Rest>
inline uint64_t mix_seed(uint64_t a, uint64_t b, Rest... rest) {
    return mix_seed(mix_seed(a, b), rest...);
}

// Deterministic RNG. Raw engine output is fully specified by the standard;
// uniform/normal are derived from the bits directly so streams are
// bit-identical across platforms (std distributions are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix_seed(seed)) {
        if (state_ == 0) state_ = 0x6a09e667f3bcc909ULL;
    }

    uint64_t next_u64() {
        // xorshift64* — tiny, fast, fully specified.
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normal_f() { return float(normal()); }

    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Worker cap for the few fan-out loops (eval generation). EFFECTLAB_THREADS
// overrides; results never depend on the count because work is partitioned
// per independent item with per-item seeds.
inline int worker_threads() {
    if (const char* env = std::getenv("EFFECTLAB_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

}  // namespace effectlab
