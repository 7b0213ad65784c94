#pragma once

#include <cstdint>
#include <random>

namespace qsrnet {

/// Deterministic random source.  mt19937_64 is fully specified by the
/// standard and the bit-to-double mapping below is explicit, so streams are
/// reproducible across platforms and standard-library implementations.
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed) : gen(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection-free scaling (n small here).
    int uniform_int(int n) { return static_cast<int>(uniform() * n); }

    /// Standard normal via Box-Muller (both values used, cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace qsrnet
