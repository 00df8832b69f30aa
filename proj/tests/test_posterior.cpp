#include <catch2/catch.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bayesseg/filter.hpp"
#include "bayesseg/oracle.hpp"
#include "bayesseg/posterior.hpp"
#include "bayesseg/rng.hpp"
#include "testutil.hpp"

using namespace bayesseg;

namespace {

EmissionConfig scalar_fixed(double sigma2 = 1.0, double delta2 = 25.0) {
    return EmissionConfig::fixed_noise(Eigen::MatrixXd::Identity(1, 1),
                                       Eigen::MatrixXd::Identity(1, 1),
                                       Eigen::VectorXd::Constant(1, delta2), sigma2);
}

Eigen::VectorXd scalar(double v) {
    Eigen::VectorXd y(1);
    y << v;
    return y;
}

Filter run_series(const EmissionConfig& cfg, const LengthPrior& prior,
                  const std::vector<double>& ys) {
    Filter filter(cfg, prior, FilterOptions::exact());
    for (double v : ys) filter.step(scalar(v));
    return filter;
}

// Most probable segmentation by full enumeration, for cross-checking MAP.
std::vector<int> enumeration_argmax(const ExactPosterior& exact) {
    std::uint32_t best = 0;
    for (std::uint32_t id = 0; id < exact.log_post.size(); ++id)
        if (exact.log_post[id] > exact.log_post[best]) best = id;
    return exact.changepoints_of(best);
}

}  // namespace

TEST_CASE("map segmentation: single segment for a constant series") {
    SplitMix64 rng(901);
    std::vector<double> ys(10);
    for (double& v : ys) v = 0.05 * rng.next_gaussian();
    const auto cfg = scalar_fixed();
    const auto prior = LengthPrior::geometric(0.01);
    const Filter filter = run_series(cfg, prior, ys);

    const Segmentation seg = map_segmentation(filter);
    CHECK(seg.changepoints == std::vector<int>{1});

    Eigen::MatrixXd y(10, 1);
    for (int t = 0; t < 10; ++t) y(t, 0) = ys[static_cast<std::size_t>(t)];
    const ExactPosterior exact =
        enumerate_posterior(y, std::vector<ObservationMask>(10, ObservationMask::all(1)), cfg, prior);
    CHECK(enumeration_argmax(exact) == std::vector<int>{1});
}

TEST_CASE("map segmentation: one large jump is localized") {
    SplitMix64 rng(902);
    std::vector<double> ys;
    for (int t = 0; t < 5; ++t) ys.push_back(0.3 * rng.next_gaussian());
    for (int t = 0; t < 5; ++t) ys.push_back(8.0 + 0.3 * rng.next_gaussian());
    const auto cfg = scalar_fixed();
    const auto prior = LengthPrior::geometric(0.05);
    const Filter filter = run_series(cfg, prior, ys);

    const Segmentation seg = map_segmentation(filter);
    CHECK(seg.changepoints == std::vector<int>{1, 6});

    Eigen::MatrixXd y(10, 1);
    for (int t = 0; t < 10; ++t) y(t, 0) = ys[static_cast<std::size_t>(t)];
    const ExactPosterior exact =
        enumerate_posterior(y, std::vector<ObservationMask>(10, ObservationMask::all(1)), cfg, prior);
    CHECK(enumeration_argmax(exact) == std::vector<int>{1, 6});
}

TEST_CASE("map segmentation: single observation") {
    const Filter filter = run_series(scalar_fixed(), LengthPrior::geometric(0.3), {0.4});
    CHECK(map_segmentation(filter).changepoints == std::vector<int>{1});
    FilterTrace empty;
    CHECK_THROWS_AS(map_segmentation(empty, LengthPrior::geometric(0.3)), std::invalid_argument);
}

TEST_CASE("sampling: degenerate trace gives the unique segmentation") {
    // All mass on "segment containing 2 starts at 1" and "last segment starts
    // at 3": the unique consistent segmentation is {1, 3}.
    FilterTrace trace;
    trace.steps.push_back({{{1, 0.0}}});
    trace.steps.push_back({{{1, 0.0}, {2, kNegInf}}});
    trace.steps.push_back({{{3, 0.0}}});
    const Segmentation s = sample_segmentation(trace, LengthPrior::geometric(0.3), 42);
    CHECK(s.changepoints == std::vector<int>{1, 3});
}

TEST_CASE("sampling: deterministic per seed, varies across seeds") {
    SplitMix64 rng(903);
    std::vector<double> ys;
    for (int t = 0; t < 8; ++t) ys.push_back(rng.next_gaussian());
    const Filter filter = run_series(scalar_fixed(1.0, 4.0), LengthPrior::geometric(0.3), ys);

    const Segmentation a = sample_segmentation(filter, 7);
    const Segmentation b = sample_segmentation(filter, 7);
    CHECK(a == b);

    bool saw_different = false;
    for (std::uint64_t seed = 1; seed <= 20 && !saw_different; ++seed)
        saw_different = !(sample_segmentation(filter, seed) == a);
    CHECK(saw_different);
}

TEST_CASE("sampling frequencies match the enumeration posterior") {
    SplitMix64 rng(904);
    const int n = 6;
    std::vector<double> ys;
    for (int t = 0; t < 3; ++t) ys.push_back(0.4 * rng.next_gaussian());
    for (int t = 3; t < n; ++t) ys.push_back(3.0 + 0.4 * rng.next_gaussian());
    const auto cfg = scalar_fixed(1.0, 4.0);
    const auto prior = LengthPrior::geometric(0.2);
    const Filter filter = run_series(cfg, prior, ys);

    Eigen::MatrixXd y(n, 1);
    for (int t = 0; t < n; ++t) y(t, 0) = ys[static_cast<std::size_t>(t)];
    const ExactPosterior exact =
        enumerate_posterior(y, std::vector<ObservationMask>(n, ObservationMask::all(1)), cfg, prior);

    const int draws = 40000;
    std::map<std::vector<int>, int> counts;
    for (int i = 0; i < draws; ++i)
        counts[sample_segmentation(filter, 1000 + static_cast<std::uint64_t>(i)).changepoints]++;

    for (std::uint32_t id = 0; id < exact.log_post.size(); ++id) {
        const double prob = std::exp(exact.log_post[id]);
        if (prob < 5e-3) continue;
        const auto cps = exact.changepoints_of(id);
        const double got = counts.count(cps) ? counts.at(cps) : 0;
        const double se = std::sqrt(draws * prob * (1.0 - prob));
        CHECK(std::fabs(got - draws * prob) <= 4.0 * se);
    }
}

TEST_CASE("greedy MAP dominates sampled segmentations on small instances") {
    // The greedy backward argmax is not guaranteed to be the joint argmax,
    // but on these instances it beats 1000 posterior samples.
    SplitMix64 rng(908);
    for (int instance = 0; instance < 4; ++instance) {
        const int n = 6 + static_cast<int>(rng.next_u64() % 5);
        std::vector<double> ys;
        const int jump_at = 2 + static_cast<int>(rng.next_u64() % (n - 3));
        for (int t = 0; t < n; ++t)
            ys.push_back((t + 1 >= jump_at ? 2.5 : 0.0) + 0.5 * rng.next_gaussian());
        const auto cfg = scalar_fixed(1.0, 9.0);
        const auto prior = LengthPrior::geometric(0.15);
        const Filter filter = run_series(cfg, prior, ys);

        Eigen::MatrixXd y(n, 1);
        for (int t = 0; t < n; ++t) y(t, 0) = ys[static_cast<std::size_t>(t)];
        const ExactPosterior exact = enumerate_posterior(
            y, std::vector<ObservationMask>(n, ObservationMask::all(1)), cfg, prior);

        auto log_post_of = [&](const std::vector<int>& cps) {
            std::uint32_t id = 0;
            for (int cp : cps)
                if (cp >= 2) id |= 1u << (cp - 2);
            return exact.log_post[id];
        };

        const double map_lp = log_post_of(map_segmentation(filter).changepoints);
        for (int s = 0; s < 1000; ++s) {
            const Segmentation sampled =
                sample_segmentation(filter, 7000 + static_cast<std::uint64_t>(s));
            CHECK(map_lp >= log_post_of(sampled.changepoints) - 1e-12);
        }
    }
}

TEST_CASE("marginals: n = 1 gives an empty report") {
    const Filter filter = run_series(scalar_fixed(), LengthPrior::geometric(0.3), {0.4});
    const MarginalReport report = marginal_changepoint_probabilities(filter);
    CHECK(report.n == 1);
    CHECK(report.prob.empty());
}

TEST_CASE("marginals match the enumeration oracle on random instances") {
    SplitMix64 rng(905);
    for (int instance = 0; instance < 8; ++instance) {
        const int n = 4 + static_cast<int>(rng.next_u64() % 6);
        const int d = 1 + static_cast<int>(rng.next_u64() % 2);
        const int q = 1 + static_cast<int>(rng.next_u64() % d);
        const NoiseMode mode = instance % 2 ? NoiseMode::fixed : NoiseMode::inverse_gamma;
        const EmissionConfig cfg = testutil::random_config(rng, d, q, mode);
        const LengthPrior prior = instance % 2 == 0 ? LengthPrior::geometric(0.3)
                                                    : LengthPrior::negative_binomial(2, 0.5);
        Eigen::MatrixXd y(n, d);
        std::vector<ObservationMask> masks;
        for (int t = 0; t < n; ++t) {
            y.row(t) = testutil::random_vector(rng, d).transpose();
            masks.push_back(testutil::random_mask(rng, d, 0.8));
        }
        Filter filter(cfg, prior, FilterOptions::exact());
        for (int t = 0; t < n; ++t)
            filter.step(y.row(t).transpose(), masks[static_cast<std::size_t>(t)]);

        const ExactPosterior exact = enumerate_posterior(y, masks, cfg, prior);
        const MarginalReport report = marginal_changepoint_probabilities(filter);
        for (int t = 2; t <= n; ++t) {
            CHECK(report.at(t) == Approx(exact.marginal_at(t)).margin(1e-8));
            CHECK(report.at(t) >= 0.0);
            CHECK(report.at(t) <= 1.0);
        }
    }
}

TEST_CASE("marginal recursion is consistent when the last step is certain") {
    FilterTrace trace;
    trace.steps.push_back({{{1, 0.0}}});
    trace.steps.push_back({{{1, 0.0}}});
    trace.steps.push_back({{{3, 0.0}}});  // p_3 puts all mass on changepoint 3
    const MarginalReport report =
        marginal_changepoint_probabilities(trace, LengthPrior::geometric(0.3));
    CHECK(report.at(3) == Approx(1.0).margin(1e-12));
    CHECK(report.at(2) == Approx(0.0).margin(1e-12));
}

TEST_CASE("backward passes warn when snapshots lost mass") {
    FilterTrace trace;
    trace.steps.push_back({{{1, 0.0}}});
    trace.steps.push_back({{{1, std::log(0.5)}}});  // mass 0.5: pruned too hard
    trace.steps.push_back({{{3, 0.0}}});
    std::vector<std::string> warnings;
    map_segmentation(trace, LengthPrior::geometric(0.3), &warnings);
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings.front().find("t=2") != std::string::npos);
}

TEST_CASE("last segment risk: mixture bounds and CDF limits") {
    SplitMix64 rng(906);
    std::vector<double> ys;
    for (int t = 0; t < 7; ++t) ys.push_back(0.6 * rng.next_gaussian() + 0.4);
    const auto cfg = EmissionConfig::inverse_gamma_noise(Eigen::MatrixXd::Identity(1, 1),
                                                         Eigen::MatrixXd::Identity(1, 1),
                                                         Eigen::VectorXd::Constant(1, 2.0), 3.0, 1.0);
    const Filter filter = run_series(cfg, LengthPrior::geometric(0.2), ys);

    RiskQuery query;
    query.v = Eigen::VectorXd::Ones(1);
    query.theta = 0.4;
    const double mixed = last_segment_risk(filter, query);

    double lo = 1.0, hi = 0.0;
    for (const Particle& p : filter.particles()) {
        const double r = std::exp(risk_log_probability(cfg, p.stats, query));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    CHECK(mixed >= lo - 1e-12);
    CHECK(mixed <= hi + 1e-12);

    query.theta = 1e9;
    CHECK(last_segment_risk(filter, query) == Approx(1.0).margin(1e-10));
    query.theta = -1e9;
    CHECK(last_segment_risk(filter, query) == Approx(0.0).margin(1e-10));

    double prev = -1.0;
    for (double theta : {-2.0, -0.5, 0.0, 0.3, 1.0, 2.5}) {
        query.theta = theta;
        const double r = last_segment_risk(filter, query);
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("single-particle state reduces to the within-segment risk") {
    const auto cfg = scalar_fixed(1.0, 2.0);
    Filter filter(cfg, LengthPrior::geometric(0.3));
    filter.step(scalar(0.7));
    RiskQuery query;
    query.v = Eigen::VectorXd::Ones(1);
    query.theta = 0.2;
    const double direct = std::exp(risk_log_probability(cfg, filter.particles()[0].stats, query));
    CHECK(last_segment_risk(filter, query) == Approx(direct).margin(1e-13));
}

TEST_CASE("last segment risk matches the enumeration oracle") {
    SplitMix64 rng(907);
    for (int instance = 0; instance < 6; ++instance) {
        const int n = 6;
        const NoiseMode mode = instance % 2 ? NoiseMode::fixed : NoiseMode::inverse_gamma;
        const EmissionConfig cfg = testutil::random_config(rng, 1, 1, mode);
        const LengthPrior prior = LengthPrior::geometric(0.25);
        Eigen::MatrixXd y(n, 1);
        std::vector<ObservationMask> masks;
        for (int t = 0; t < n; ++t) {
            y(t, 0) = testutil::random_vector(rng, 1)(0);
            masks.push_back(testutil::random_mask(rng, 1, 0.85));
        }
        Filter filter(cfg, prior, FilterOptions::exact());
        for (int t = 0; t < n; ++t)
            filter.step(y.row(t).transpose(), masks[static_cast<std::size_t>(t)]);

        RiskQuery query;
        query.v = Eigen::VectorXd::Ones(1);
        query.theta = 0.25;
        const ExactPosterior exact = enumerate_posterior(y, masks, cfg, prior, &query);
        CHECK(last_segment_risk(filter, query) == Approx(exact.risk).margin(1e-8));
    }
}
