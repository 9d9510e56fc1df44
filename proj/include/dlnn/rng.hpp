#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace dlnn {

// Deterministic random source. The generator (mt19937_64) and the mappings
// below are fully specified by the C++ standard resp. written out here, so a
// given seed produces the same stream on every platform. Distribution classes
// from <random> are deliberately not used: their output is
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on (0,1): top 53 bits, shifted into the unit interval.
    // Never returns exactly 0 or 1.
    double uniform01() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform on (lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform on (0,1) redrawn until >= floor. Used for regularization
    // weights that must stay away from zero.
    double positive_uniform(double floor_value) {
        double v = uniform01();
        while (v < floor_value) v = uniform01();
        return v;
    }

    // Standard normal via Box-Muller on two uniform01 draws; the second
    // variate of each pair is cached and returned by the next call.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [lo, hi] by rejection-free modulo on 64-bit draws.
    // The modulo bias is below 2^-50 for the ranges used here (< 2^13).
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        return lo + gen_() % (hi - lo + 1);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace dlnn
