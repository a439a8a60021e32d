#pragma once

#include <cstdint>

#include "qfuse/probit.hpp"

namespace qfuse {

/// Counter-based deterministic generator: output i is a fixed 64-bit mix of
/// (seed, stream, i), so a sequence is reproducible from its seed alone and
/// independent streams never interleave state.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

    /// Uniform draw strictly inside (0,1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via the inverse CDF (one uniform per draw).
    double normal() { return probit(uniform()); }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream,
                             std::uint64_t counter) {
        // splitmix64 finalizer over the three words, applied twice.
        std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
        x ^= counter + 0x9E3779B97F4A7C15ull;
        x = scramble(x);
        x = scramble(x + counter);
        return x;
    }

private:
    static std::uint64_t scramble(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace qfuse
