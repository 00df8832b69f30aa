#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "bayesseg/numerics.hpp"

using namespace bayesseg;

namespace {

// Independent erf via its Maclaurin series; converges fast for |x| <= 3.
double erf_series(double x) {
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
        if (std::fabs(term) < 1e-18) break;
    }
    return sum * 2.0 / std::sqrt(kPi);
}

// Adaptive Simpson of the t density, for cross-checking the CDF.
double t_density(double x, double dof) {
    return std::exp(log_gamma(0.5 * (dof + 1.0)) - log_gamma(0.5 * dof)) /
           std::sqrt(dof * kPi) * std::pow(1.0 + x * x / dof, -0.5 * (dof + 1.0));
}

double simpson(double a, double b, double dof, int n) {
    const double h = (b - a) / n;
    double s = t_density(a, dof) + t_density(b, dof);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * t_density(a + i * h, dof);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("log_gamma matches known values") {
    CHECK(log_gamma(0.5) == Approx(0.5 * std::log(kPi)).epsilon(0).margin(1e-13));
    CHECK(log_gamma(1.0) == Approx(0.0).margin(1e-14));
    CHECK(log_gamma(5.0) == Approx(std::log(24.0)).epsilon(1e-14));
    CHECK_THROWS_AS(log_gamma(0.0), std::domain_error);
    CHECK_THROWS_AS(log_gamma(-1.5), std::domain_error);
}

TEST_CASE("log_gamma tracks the standard library across the domain") {
    for (double x : {1e-3, 0.05, 0.9, 1.5, 3.0, 12.7, 101.5, 4300.0, 9.7e5}) {
        const double ref = std::lgamma(x);
        CHECK(log_gamma(x) == Approx(ref).epsilon(1e-13).margin(1e-12));
    }
}

TEST_CASE("log_sum_exp basics") {
    std::vector<double> two_zeros{0.0, 0.0};
    CHECK(log_sum_exp(two_zeros) == Approx(std::log(2.0)).epsilon(1e-15));
    std::vector<double> with_zero_prob{kNegInf, 1.25};
    CHECK(log_sum_exp(with_zero_prob) == 1.25);
    std::vector<double> huge{1000.0, 1000.0};
    CHECK(log_sum_exp(huge) == Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    std::vector<double> nothing_there{kNegInf, kNegInf};
    CHECK(log_sum_exp(nothing_there) == kNegInf);
    CHECK(log_add(kNegInf, kNegInf) == kNegInf);
}

TEST_CASE("student_t_cdf reference points") {
    CHECK(student_t_cdf(0.0, 3.7) == 0.5);
    // Cauchy closed form: 1/2 + atan(x)/pi.
    CHECK(student_t_cdf(1.0, 1.0) == Approx(0.75).epsilon(1e-12));
    CHECK(student_t_cdf(-2.5, 1.0) ==
          Approx(0.5 + std::atan(-2.5) / kPi).epsilon(1e-12));
    CHECK_THROWS_AS(student_t_cdf(0.3, 0.0), std::domain_error);
}

TEST_CASE("student_t_cdf symmetry") {
    for (double dof : {0.5, 1.0, 2.3, 7.0, 40.0}) {
        for (double x : {0.1, 0.77, 1.9, 3.4, 8.0}) {
            CHECK(student_t_cdf(-x, dof) ==
                  Approx(1.0 - student_t_cdf(x, dof)).epsilon(0).margin(1e-12));
        }
    }
}

TEST_CASE("student_t_cdf agrees with quadrature of the density") {
    for (double dof : {0.7, 1.5, 3.0, 11.0, 64.0}) {
        for (double x : {-2.4, -0.9, 0.3, 1.7, 4.1}) {
            const double tail = simpson(0.0, std::fabs(x), dof, 4000);
            const double ref = x >= 0 ? 0.5 + tail : 0.5 - tail;
            CHECK(student_t_cdf(x, dof) == Approx(ref).epsilon(0).margin(1e-9));
        }
    }
}

TEST_CASE("student_t_cdf approaches the normal for large dof") {
    for (double x : {-5.0, -2.0, -0.3, 0.0, 1.1, 3.3, 5.0}) {
        CHECK(std::fabs(student_t_cdf(x, 1e6) - normal_cdf(x)) < 1e-3);
    }
}

TEST_CASE("normal_cdf reference points") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(-std::numeric_limits<double>::infinity()) == 0.0);
    // Standard 97.5% quantile, cross-checked against an independent erf series.
    const double q = 1.959963985;
    const double ref = 0.5 * (1.0 + erf_series(q / std::sqrt(2.0)));
    CHECK(ref == Approx(0.975).margin(1e-8));
    CHECK(normal_cdf(q) == Approx(0.975).margin(1e-8));
}
