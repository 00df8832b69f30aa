#ifndef BAYESSEG_TESTS_TESTUTIL_HPP
#define BAYESSEG_TESTS_TESTUTIL_HPP

#include <Eigen/Dense>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/rng.hpp"

namespace testutil {

using bayesseg::EmissionConfig;
using bayesseg::NoiseMode;
using bayesseg::ObservationMask;
using bayesseg::SplitMix64;

inline Eigen::MatrixXd random_matrix(SplitMix64& rng, int rows, int cols, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.next_gaussian();
    return m;
}

inline Eigen::MatrixXd random_spd(SplitMix64& rng, int d, double ridge = 0.5) {
    const Eigen::MatrixXd b = random_matrix(rng, d, d);
    Eigen::MatrixXd s = b * b.transpose() / d + ridge * Eigen::MatrixXd::Identity(d, d);
    return 0.5 * (s + s.transpose());
}

inline ObservationMask random_mask(SplitMix64& rng, int d, double p_observed) {
    std::vector<bool> flags(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) flags[static_cast<std::size_t>(i)] = rng.next_bernoulli(p_observed);
    return ObservationMask(std::move(flags));
}

inline Eigen::VectorXd random_vector(SplitMix64& rng, int d, double scale = 1.0) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = scale * rng.next_gaussian();
    return v;
}

inline EmissionConfig random_config(SplitMix64& rng, int d, int q, NoiseMode mode) {
    const Eigen::MatrixXd h0 = random_matrix(rng, d, q);
    const Eigen::MatrixXd sigma0 = random_spd(rng, d);
    Eigen::VectorXd delta2(q);
    for (int i = 0; i < q; ++i) delta2(i) = 0.4 + 2.0 * rng.next_unit();
    if (mode == NoiseMode::fixed)
        return EmissionConfig::fixed_noise(h0, sigma0, delta2, 0.5 + 1.5 * rng.next_unit());
    return EmissionConfig::inverse_gamma_noise(h0, sigma0, delta2, 2.5 + 3.0 * rng.next_unit(),
                                               0.5 + 2.0 * rng.next_unit());
}

// Reference route for the masked pseudo-inverse: pad the unobserved diagonal
// with the identity, invert the full matrix, project back.
inline Eigen::MatrixXd padded_pinv(const Eigen::MatrixXd& sigma, const ObservationMask& mask) {
    const int d = static_cast<int>(sigma.rows());
    Eigen::MatrixXd padded = sigma;
    for (int i = 0; i < d; ++i) {
        if (mask.observed(i)) continue;
        padded.row(i).setZero();
        padded.col(i).setZero();
        padded(i, i) = 1.0;
    }
    Eigen::MatrixXd inv = padded.inverse();
    for (int i = 0; i < d; ++i) {
        if (mask.observed(i)) continue;
        inv.row(i).setZero();
        inv.col(i).setZero();
    }
    return inv;
}

inline bayesseg::SegmentStats accumulate_series(const EmissionConfig& cfg,
                                                const Eigen::MatrixXd& y,
                                                const std::vector<ObservationMask>& masks,
                                                int from = 0, int count = -1) {
    if (count < 0) count = static_cast<int>(y.rows()) - from;
    bayesseg::SegmentStats stats = cfg.empty_stats();
    for (int t = from; t < from + count; ++t)
        stats = accumulate(stats, y.row(t).transpose(), masks[static_cast<std::size_t>(t)],
                           cfg.h0(), cfg.cov());
    return stats;
}

}  // namespace testutil

#endif
