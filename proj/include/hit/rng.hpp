#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hit/common.hpp"

namespace hit {

// Deterministic sampling layer. std::mt19937_64 is fully specified by the
// standard; the distribution transforms below are ours, so identical seeds
// produce identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::int64_t index(std::int64_t n) {
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one fresh pair per call keeps the stream stateless.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Rejection-sampled truncation at two standard deviations.
    double truncated_normal(double std) {
        double v = normal();
        while (std::fabs(v) > 2.0) v = normal();
        return v * std;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace hit
