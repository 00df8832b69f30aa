#ifndef BAYESSEG_NUMERICS_HPP
#define BAYESSEG_NUMERICS_HPP

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace bayesseg {

// Log-domain probability. -inf encodes an exactly-zero probability; helpers
// below never produce NaN from valid inputs.
using LogProb = double;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

// ln Gamma(x) for x > 0, Lanczos form (g = 607/128, 14 coefficients).
inline double log_gamma(double x) {
    if (!(x > 0.0))
        throw std::domain_error("log_gamma: argument must be positive");
    static const double cof[14] = {
        57.1562356658629235,     -59.5979603554754912,
        14.1360979747417471,     -0.491913816097620199,
        0.339946499848118887e-4,  0.465236289270485756e-4,
        -0.983744753048795646e-4, 0.158088703224912494e-3,
        -0.210264441724104883e-3, 0.217439618115212643e-3,
        -0.164318106536763890e-3, 0.844182239838527433e-4,
        -0.261908384015814087e-4, 0.368991826595316234e-5};
    double y = x;
    double tmp = x + 5.24218750000000000;  // x + g + 1/2
    tmp = (x + 0.5) * std::log(tmp) - tmp;
    double ser = 0.999999999999997092;
    for (double c : cof) ser += c / ++y;
    return tmp + std::log(2.5066282746310005 * ser / x);
}

inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

// ln sum_i exp(v_i), shifted by the max. All -inf inputs yield -inf.
inline double log_sum_exp(std::span<const double> values) {
    if (values.empty())
        throw std::invalid_argument("log_sum_exp: empty input");
    double m = kNegInf;
    for (double v : values)
        if (v > m) m = v;
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cont_frac(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr double fpmin = std::numeric_limits<double>::min() / eps;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::domain_error("regularized_incomplete_beta: a, b must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::domain_error("regularized_incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double lbt = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(lbt);
    if (x < (a + 1.0) / (a + b + 2.0))
        return bt * detail::beta_cont_frac(a, b, x) / a;
    return 1.0 - bt * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// P(T <= x) for Student's t with dof > 0 degrees of freedom (fractional ok).
inline double student_t_cdf(double x, double dof) {
    if (!(dof > 0.0))
        throw std::domain_error("student_t_cdf: dof must be positive");
    if (x == 0.0) return 0.5;
    if (std::isinf(x)) return x > 0.0 ? 1.0 : 0.0;
    const double u = dof / (dof + x * x);
    const double tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, u);
    return x > 0.0 ? 1.0 - tail : tail;
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

}  // namespace bayesseg

#endif
