#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gfus/errors.hpp"

namespace gfus {

/// Deterministic PRNG. Wraps std::mt19937_64 (bit-specified by the standard)
/// and derives all distributions itself, so streams are identical across
/// platforms and standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Modulo reduction; bias is irrelevant at
    /// the sizes used here and keeps the draw count fixed.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) {
            throw InternalError("Rng::below requires n > 0");
        }
        return engine_() % n;
    }

    /// Box-Muller with cached spare.
    double normal(double mean, double stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + spare_ * stddev;
        }
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return mean + radius * std::cos(angle) * stddev;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace gfus
