#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace nh {

// Seeded RNG with distribution code of our own, so a seed yields the same
// stream regardless of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Independent stream for (seed, index), e.g. one per dataset clip.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    Rng fork(std::uint64_t stream) const { return Rng(derive(seed_hint(), stream)); }

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return (next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next() % span);
    }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t seed_hint() const {
        auto copy = engine_;
        return copy();
    }

    std::mt19937_64 engine_;
};

}  // namespace nh
