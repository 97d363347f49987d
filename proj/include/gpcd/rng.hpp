#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gpcd/vec3.hpp"

namespace gpcd {

// splitmix64; used to derive independent stream seeds from (base, tag) pairs.
inline uint64_t mix_seed(uint64_t base, uint64_t tag) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. Distributions are implemented by hand on top
// of std::mt19937_64 so a fixed seed yields the same draw sequence on every
// platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n > 0. Rejection-free modulo bias is not a
    // concern at these n, but use rejection anyway to keep draws exact.
    uint64_t uniform_index(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Vec3 normal3() {
        const double a = normal();
        const double b = normal();
        const double c = normal();
        return {a, b, c};
    }

    // Uniform direction on the unit sphere.
    Vec3 direction() {
        Vec3 v = normal3();
        double n = norm(v);
        while (n < 1e-12) {
            v = normal3();
            n = norm(v);
        }
        return v / n;
    }

    Rng split(uint64_t tag) const { return Rng(mix_seed(base_view(), tag)); }

private:
    // The split base is drawn from a copy so splitting does not disturb the
    // parent stream.
    uint64_t base_view() const {
        std::mt19937_64 copy = engine_;
        return copy();
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gpcd
