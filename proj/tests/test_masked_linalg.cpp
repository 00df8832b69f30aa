#include <catch2/catch.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/rng.hpp"
#include "testutil.hpp"

using namespace bayesseg;
using testutil::padded_pinv;

namespace {

Eigen::MatrixXd example_cov() {
    Eigen::MatrixXd s(2, 2);
    s << 4.0, 1.0, 1.0, 1.0;
    return s;
}

}  // namespace

TEST_CASE("CovarianceSpec validation") {
    CHECK_NOTHROW(CovarianceSpec(example_cov()));
    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(CovarianceSpec(asym), std::invalid_argument);
    Eigen::MatrixXd indef(2, 2);
    indef << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(CovarianceSpec(indef), std::invalid_argument);
}

TEST_CASE("masked_pseudo_inverse: full, empty and partial masks") {
    const CovarianceSpec cov(example_cov());

    const Eigen::MatrixXd full = masked_pseudo_inverse(cov, ObservationMask::all(2));
    CHECK((full - example_cov().inverse()).cwiseAbs().maxCoeff() < 1e-13);

    const Eigen::MatrixXd empty = masked_pseudo_inverse(cov, ObservationMask::none(2));
    CHECK(empty.cwiseAbs().maxCoeff() == 0.0);

    // Only the first component observed: 1x1 block [4] inverts to 1/4.
    const ObservationMask first_only(std::vector<bool>{true, false});
    const Eigen::MatrixXd partial = masked_pseudo_inverse(cov, first_only);
    CHECK(partial(0, 0) == Approx(0.25).epsilon(1e-14));
    CHECK(partial(0, 1) == 0.0);
    CHECK(partial(1, 0) == 0.0);
    CHECK(partial(1, 1) == 0.0);
}

TEST_CASE("restricted_log_det: examples") {
    CHECK(restricted_log_det(CovarianceSpec(Eigen::MatrixXd::Identity(2, 2)),
                             ObservationMask::all(2)) == 0.0);
    const CovarianceSpec cov(example_cov());
    CHECK(restricted_log_det(cov, ObservationMask::none(2)) == 0.0);
    CHECK(restricted_log_det(cov, ObservationMask(std::vector<bool>{true, false})) ==
          Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("masked pseudo-inverse equals the padded-identity reference") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 5);
        const Eigen::MatrixXd sigma = testutil::random_spd(rng, d);
        const CovarianceSpec cov(sigma);
        const ObservationMask mask = testutil::random_mask(rng, d, 0.6);
        const Eigen::MatrixXd got = masked_pseudo_inverse(cov, mask);
        const Eigen::MatrixXd ref = padded_pinv(sigma, mask);
        CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-10);

        // Restricted determinant against the padded formula.
        Eigen::MatrixXd padded = sigma;
        for (int i = 0; i < d; ++i) {
            if (mask.observed(i)) continue;
            padded.row(i).setZero();
            padded.col(i).setZero();
            padded(i, i) = 1.0;
        }
        CHECK(restricted_log_det(cov, mask) ==
              Approx(std::log(padded.determinant())).margin(1e-11));
    }
}

TEST_CASE("masked pseudo-inverse is Moore-Penrose idempotent on the observed block") {
    SplitMix64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 2 + static_cast<int>(rng.next_u64() % 4);
        const Eigen::MatrixXd sigma = testutil::random_spd(rng, d);
        const ObservationMask mask = testutil::random_mask(rng, d, 0.5);
        Eigen::MatrixXd pi_sigma_pi = sigma;
        for (int i = 0; i < d; ++i) {
            if (mask.observed(i)) continue;
            pi_sigma_pi.row(i).setZero();
            pi_sigma_pi.col(i).setZero();
        }
        const Eigen::MatrixXd plus = masked_pseudo_inverse(CovarianceSpec(sigma), mask);
        const Eigen::MatrixXd resid = plus * pi_sigma_pi * plus - plus;
        CHECK(resid.norm() < 1e-9);
    }
}

TEST_CASE("restricted_log_det is invariant under joint permutation") {
    SplitMix64 rng(13);
    const int d = 4;
    const Eigen::MatrixXd sigma = testutil::random_spd(rng, d);
    const ObservationMask mask(std::vector<bool>{true, false, true, true});
    const double base = restricted_log_det(CovarianceSpec(sigma), mask);

    std::vector<int> perm{2, 0, 3, 1};
    Eigen::MatrixXd sig_p(d, d);
    std::vector<bool> mask_p(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        mask_p[static_cast<std::size_t>(i)] = mask.observed(perm[static_cast<std::size_t>(i)]);
        for (int j = 0; j < d; ++j)
            sig_p(i, j) =
                sigma(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const double permuted = restricted_log_det(CovarianceSpec(sig_p), ObservationMask(mask_p));
    CHECK(permuted == Approx(base).margin(1e-12));
}

TEST_CASE("singular observed block raises SingularityError") {
    Eigen::MatrixXd nearly(2, 2);
    const double off = 1.0 - 5e-14;
    nearly << 1.0, off, off, 1.0;
    const CovarianceSpec cov(nearly);  // passes SPD validation
    CHECK_THROWS_AS(masked_noise(cov, ObservationMask::all(2)), SingularityError);
    // The well-conditioned 1x1 block is still fine.
    CHECK_NOTHROW(masked_noise(cov, ObservationMask(std::vector<bool>{true, false})));
}

TEST_CASE("accumulate: empty mask leaves the sums unchanged") {
    const CovarianceSpec cov(example_cov());
    const Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(2, 2);
    SegmentStats stats = SegmentStats::zero(2);
    Eigen::VectorXd y(2);
    y << 1.5, -0.5;
    stats = accumulate(stats, y, ObservationMask::none(2), h0, cov);
    CHECK(stats.a_data.cwiseAbs().maxCoeff() == 0.0);
    CHECK(stats.b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(stats.c == 0.0);
    CHECK(stats.trace_pi == 0);
    CHECK(stats.logdet_sum == 0.0);
    CHECK(stats.length == 1);
}

TEST_CASE("accumulate: scalar identity example") {
    const CovarianceSpec cov(Eigen::MatrixXd::Identity(1, 1));
    const Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(1, 1);
    Eigen::VectorXd y(1);
    y << 2.0;
    const SegmentStats stats =
        accumulate(SegmentStats::zero(1), y, ObservationMask::all(1), h0, cov);
    CHECK(stats.a_data(0, 0) == Approx(1.0).epsilon(1e-15));
    CHECK(stats.b(0) == Approx(2.0).epsilon(1e-15));
    CHECK(stats.c == Approx(4.0).epsilon(1e-15));
    CHECK(stats.trace_pi == 1);
    CHECK(stats.logdet_sum == 0.0);
}

TEST_CASE("accumulate: partially observed example") {
    const CovarianceSpec cov(example_cov());
    const Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd y(2);
    y << 3.0, std::numeric_limits<double>::quiet_NaN();  // unobserved entry ignored
    const ObservationMask mask(std::vector<bool>{true, false});
    const SegmentStats stats = accumulate(SegmentStats::zero(2), y, mask, h0, cov);
    CHECK(stats.b(0) == Approx(0.75).epsilon(1e-14));
    CHECK(stats.b(1) == 0.0);
    CHECK(stats.c == Approx(2.25).epsilon(1e-14));
    CHECK(stats.trace_pi == 1);
    CHECK(stats.logdet_sum == Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("accumulation is order-independent") {
    SplitMix64 rng(21);
    const int d = 3, q = 2, k = 8;
    const Eigen::MatrixXd h0 = testutil::random_matrix(rng, d, q);
    const CovarianceSpec cov(testutil::random_spd(rng, d));

    std::vector<Eigen::VectorXd> ys;
    std::vector<ObservationMask> masks;
    for (int t = 0; t < k; ++t) {
        ys.push_back(testutil::random_vector(rng, d));
        masks.push_back(testutil::random_mask(rng, d, 0.7));
    }

    auto run = [&](const std::vector<int>& order) {
        SegmentStats stats = SegmentStats::zero(q);
        for (int t : order)
            stats = accumulate(stats, ys[static_cast<std::size_t>(t)],
                               masks[static_cast<std::size_t>(t)], h0, cov);
        return stats;
    };

    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    const SegmentStats forward = run(order);
    std::reverse(order.begin(), order.end());
    std::swap(order[0], order[3]);
    const SegmentStats shuffled = run(order);

    const double scale = std::max(1.0, forward.a_data.cwiseAbs().maxCoeff());
    CHECK((forward.a_data - shuffled.a_data).cwiseAbs().maxCoeff() < 1e-10 * scale);
    CHECK((forward.b - shuffled.b).cwiseAbs().maxCoeff() <
          1e-10 * std::max(1.0, forward.b.cwiseAbs().maxCoeff()));
    CHECK(forward.c == Approx(shuffled.c).epsilon(1e-10));
    CHECK(forward.trace_pi == shuffled.trace_pi);
    CHECK(forward.logdet_sum == Approx(shuffled.logdet_sum).margin(1e-10));
}

TEST_CASE("accumulate rejects dimension mismatches") {
    const CovarianceSpec cov(example_cov());
    const Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd y(3);
    y << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(accumulate(SegmentStats::zero(2), y, ObservationMask::all(2), h0, cov),
                    std::invalid_argument);
    CHECK_THROWS_AS(masked_noise(cov, ObservationMask::all(3)), std::invalid_argument);
}
