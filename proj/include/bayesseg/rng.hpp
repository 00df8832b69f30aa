#ifndef BAYESSEG_RNG_HPP
#define BAYESSEG_RNG_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "bayesseg/numerics.hpp"

namespace bayesseg {

// SplitMix64 (Steele et al. 2014). Chosen because its output sequence is
// fully specified by the algorithm, so seeded runs are byte-reproducible
// across platforms, unlike <random> distributions.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1]: 53-bit mantissa, never exactly zero.
    double next_double() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool next_bernoulli(double p) { return next_unit() < p; }

    // Box-Muller; consumes two uniforms per value (the sine twin is cached).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_double();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * kPi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
    double next_gamma(double shape) {
        if (!(shape > 0.0))
            throw std::domain_error("next_gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = next_gamma(shape + 1.0);
            return g * std::pow(next_double(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = next_gaussian();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = next_double();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // InverseGamma(shape, scale): 1/Gamma(shape, 1/scale).
    double next_inverse_gamma(double shape, double scale) {
        return scale / next_gamma(shape);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Derives an independent child stream from a master seed. Stream k is seeded
// with the k-th "jump" of the scrambled master, so distinct purposes
// (segmentation, parameters, noise, masks, ...) never share draws.
inline SplitMix64 split_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    SplitMix64 scrambler(master_seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
    return SplitMix64(scrambler.next_u64());
}

}  // namespace bayesseg

#endif
