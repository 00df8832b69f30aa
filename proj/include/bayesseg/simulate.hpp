#ifndef BAYESSEG_SIMULATE_HPP
#define BAYESSEG_SIMULATE_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/rng.hpp"

namespace bayesseg {

struct SimulatedSegment {
    int start = 0;
    int end = 0;
    Eigen::VectorXd mu;
    double sigma2 = 0.0;
};

struct SimulatedSeries {
    Eigen::MatrixXd y;  // n x d, all components generated (masks apply on top)
    std::vector<ObservationMask> masks;
    std::vector<int> changepoints;
    std::vector<SimulatedSegment> segments;
    std::uint64_t seed = 0;
};

// Draws from the generative model: segmentation from the length prior (the
// first gap from the residual law), per-segment sigma2 and mu ~ N(0, sigma2 D),
// observations y_t = H0 mu + eps with eps ~ N(0, sigma2 Sigma0), activations
// i.i.d. Bernoulli per component. Each purpose consumes its own RNG stream,
// so e.g. changing the activation probability leaves the signal unchanged.
inline SimulatedSeries simulate_series(const EmissionConfig& cfg, const LengthPrior& prior,
                                       int n, double activation_prob, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("simulate_series: n must be >= 1");
    if (activation_prob < 0.0 || activation_prob > 1.0)
        throw std::invalid_argument("simulate_series: activation_prob must lie in [0, 1]");

    SplitMix64 rng_lengths = split_stream(seed, 0);
    SplitMix64 rng_params = split_stream(seed, 1);
    SplitMix64 rng_noise = split_stream(seed, 2);
    SplitMix64 rng_masks = split_stream(seed, 3);

    SimulatedSeries out;
    out.seed = seed;
    const int d = cfg.d();
    const int q = cfg.q();
    out.y = Eigen::MatrixXd::Zero(n, d);

    int start = 1;
    bool first = true;
    while (start <= n) {
        const std::int64_t len = prior.sample_length(first, rng_lengths);
        const int end = static_cast<int>(std::min<std::int64_t>(n, start + len - 1));
        out.changepoints.push_back(start);
        out.segments.push_back({start, end, Eigen::VectorXd(), 0.0});
        start = end + 1;
        first = false;
    }

    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cfg.cov().matrix()).matrixL();
    for (SimulatedSegment& seg : out.segments) {
        seg.sigma2 = cfg.noise() == NoiseMode::fixed
                         ? cfg.sigma2()
                         : rng_params.next_inverse_gamma(0.5 * cfg.nu(), 0.5 * cfg.gamma());
        const double sigma = std::sqrt(seg.sigma2);
        seg.mu = Eigen::VectorXd(q);
        for (int i = 0; i < q; ++i)
            seg.mu(i) = sigma * std::sqrt(cfg.delta2()(i)) * rng_params.next_gaussian();

        const Eigen::VectorXd level = cfg.h0() * seg.mu;
        for (int t = seg.start; t <= seg.end; ++t) {
            Eigen::VectorXd z(d);
            for (int i = 0; i < d; ++i) z(i) = rng_noise.next_gaussian();
            out.y.row(t - 1) = (level + sigma * (chol * z)).transpose();
        }
    }

    out.masks.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        std::vector<bool> flags(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) flags[static_cast<std::size_t>(i)] = rng_masks.next_bernoulli(activation_prob);
        out.masks.emplace_back(std::move(flags));
    }
    return out;
}

}  // namespace bayesseg

#endif
