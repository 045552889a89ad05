#pragma once

// Deterministic random sources. All randomness in the library flows through
// an explicit Rng so that runs are reproducible from a single seed and
// parallel attempt schedules can be derived without shared state.

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace skillgen {

// splitmix64 step; also used to derive independent per-attempt seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Seed for sub-stream `index` of a base seed. derive_seed(s, i) != derive_seed(s, j)
// for i != j with overwhelming probability.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base ^ splitmix64(index + 0x51ed2701a1b2c3d4ull));
}

// mt19937_64 engine with hand-rolled distributions. The standard specifies the
// engine's output sequence but not the library distributions, so uniform and
// gaussian draws are implemented here to keep streams identical everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) return 0;
        const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= bound);
        return static_cast<std::size_t>(x % n);
    }

    // Standard normal via the polar method (cached second value).
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * m;
        has_cached_ = true;
        return u * m;
    }

    // Uniform direction on the unit sphere (normalized 3-D gaussian).
    Eigen::Vector3d unit_vector() {
        while (true) {
            Eigen::Vector3d v(gaussian(), gaussian(), gaussian());
            const double n = v.norm();
            if (n > 1e-12) return v / n;
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace skillgen
