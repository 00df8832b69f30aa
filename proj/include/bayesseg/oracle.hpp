#ifndef BAYESSEG_ORACLE_HPP
#define BAYESSEG_ORACLE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/numerics.hpp"

// Brute-force and quadrature reference implementations, exact at desk scale.
// Everything here evaluates the model by routes independent of the streaming
// path: full enumeration of segmentations, stacked-matrix likelihoods via the
// padded-identity pseudo-inverse, and direct numerical integration.

namespace bayesseg {

// Posterior over all 2^(n-1) segmentations of [1, n]. Index bit k of a
// segmentation id corresponds to a changepoint at time k + 2.
struct ExactPosterior {
    int n = 0;
    std::vector<double> log_prior;
    std::vector<double> log_lik;
    std::vector<double> log_post;  // normalized
    double log_evidence = kNegInf;
    std::vector<double> marginal;  // marginal[t - 2] = P(t changepoint | y)
    std::map<int, double> last_changepoint;
    double risk = std::numeric_limits<double>::quiet_NaN();

    std::vector<int> changepoints_of(std::uint32_t id) const {
        std::vector<int> cps{1};
        for (int t = 2; t <= n; ++t)
            if (id & (1u << (t - 2))) cps.push_back(t);
        return cps;
    }

    double marginal_at(int t) const { return marginal[static_cast<std::size_t>(t - 2)]; }
};

namespace oracle_detail {

inline BatchModel stacked_model(const EmissionConfig& cfg, int k) {
    const int d = cfg.d();
    BatchModel model;
    model.h = Eigen::MatrixXd::Zero(k * d, cfg.q());
    model.sigma = Eigen::MatrixXd::Zero(k * d, k * d);
    for (int t = 0; t < k; ++t) {
        model.h.middleRows(t * d, d) = cfg.h0();
        model.sigma.block(t * d, t * d, d, d) = cfg.cov().matrix();
    }
    model.delta2 = cfg.delta2();
    model.noise = cfg.noise();
    model.sigma2 = cfg.sigma2();
    model.nu = cfg.nu();
    model.gamma = cfg.gamma();
    return model;
}

inline double risk_from_batch(const BatchResult& r, const EmissionConfig& cfg,
                              const RiskQuery& query, StudentForm form) {
    Eigen::VectorXd v = query.prediction_space ? Eigen::VectorXd(cfg.h0().transpose() * query.v)
                                               : query.v;
    const double center = v.dot(r.mu_hat);
    const double vmv = v.dot(r.m * v);
    if (!(vmv > 0.0)) return query.theta >= center ? 1.0 : 0.0;
    if (cfg.noise() == NoiseMode::fixed)
        return normal_cdf((query.theta - center) / std::sqrt(cfg.sigma2() * vmv));
    double dof, scale2;
    if (form == StudentForm::posterior_dof) {
        dof = cfg.nu() + r.trace_pi;
        scale2 = (cfg.gamma() + r.y_norm2) * vmv / dof;
    } else {
        dof = cfg.nu();
        scale2 = cfg.gamma() * vmv / dof;
    }
    return student_t_cdf((query.theta - center) / std::sqrt(scale2), dof);
}

}  // namespace oracle_detail

// Enumerates every segmentation of [1, n], n <= 16. Segment prior mass
// follows the renewal construction: g0 for the first gap, g for interior
// gaps, survival for the last segment; the no-changepoint case gets
// 1 - G0(n-1) by continuity of the same construction.
inline ExactPosterior enumerate_posterior(const Eigen::MatrixXd& y,
                                          const std::vector<ObservationMask>& masks,
                                          const EmissionConfig& cfg, const LengthPrior& prior,
                                          const RiskQuery* query = nullptr,
                                          StudentForm form = StudentForm::posterior_dof) {
    const int n = static_cast<int>(y.rows());
    if (n < 1 || n > 16)
        throw std::invalid_argument("enumerate_posterior: n must lie in [1, 16]");
    if (static_cast<int>(masks.size()) != n || y.cols() != cfg.d())
        throw std::invalid_argument("enumerate_posterior: dimension mismatch");

    // Segment marginal likelihoods for every [a, b], via the batch path.
    Eigen::MatrixXd lml = Eigen::MatrixXd::Zero(n + 1, n + 1);
    std::vector<double> risk_from(static_cast<std::size_t>(n + 1), 0.0);
    const int d = cfg.d();
    for (int a = 1; a <= n; ++a) {
        for (int b = a; b <= n; ++b) {
            const int k = b - a + 1;
            BatchModel model = oracle_detail::stacked_model(cfg, k);
            Eigen::VectorXd flat(k * d);
            std::vector<bool> flat_mask(static_cast<std::size_t>(k * d));
            for (int t = 0; t < k; ++t) {
                for (int i = 0; i < d; ++i) {
                    const bool obs = masks[static_cast<std::size_t>(a - 1 + t)].observed(i);
                    flat_mask[static_cast<std::size_t>(t * d + i)] = obs;
                    flat(t * d + i) = obs ? y(a - 1 + t, i) : 0.0;
                }
            }
            const BatchResult res = batch_evaluate(model, flat, flat_mask);
            lml(a, b) = res.log_marginal;
            if (b == n && query != nullptr)
                risk_from[static_cast<std::size_t>(a)] =
                    oracle_detail::risk_from_batch(res, cfg, *query, form);
        }
    }

    ExactPosterior out;
    out.n = n;
    const std::uint32_t count = 1u << (n - 1);
    out.log_prior.resize(count);
    out.log_lik.resize(count);
    out.log_post.resize(count);

    for (std::uint32_t id = 0; id < count; ++id) {
        std::vector<int> cps = out.changepoints_of(id);
        double lp;
        if (cps.size() == 1) {
            lp = std::log(prior.residual_survival(n - 1));
        } else {
            lp = std::log(prior.residual_mass(cps[1] - 1));
            for (std::size_t i = 1; i + 1 < cps.size(); ++i)
                lp += std::log(prior.mass(cps[i + 1] - cps[i]));
            lp += std::log(prior.survival(n - cps.back()));
        }
        double ll = 0.0;
        for (std::size_t i = 0; i < cps.size(); ++i) {
            const int a = cps[i];
            const int b = i + 1 < cps.size() ? cps[i + 1] - 1 : n;
            ll += lml(a, b);
        }
        out.log_prior[id] = lp;
        out.log_lik[id] = ll;
        out.log_post[id] = lp + ll;
    }

    out.log_evidence = log_sum_exp(out.log_post);
    for (std::uint32_t id = 0; id < count; ++id) out.log_post[id] -= out.log_evidence;

    out.marginal.assign(static_cast<std::size_t>(std::max(0, n - 1)), 0.0);
    double risk_acc = 0.0;
    for (std::uint32_t id = 0; id < count; ++id) {
        const double w = std::exp(out.log_post[id]);
        int last = 1;
        for (int t = 2; t <= n; ++t) {
            if (id & (1u << (t - 2))) {
                out.marginal[static_cast<std::size_t>(t - 2)] += w;
                last = t;
            }
        }
        out.last_changepoint[last] += w;
        if (query != nullptr) risk_acc += w * risk_from[static_cast<std::size_t>(last)];
    }
    if (query != nullptr) out.risk = risk_acc;
    return out;
}

// ---------------------------------------------------------------------------
// Scalar quadrature oracle (d = q = 1).
// ---------------------------------------------------------------------------

namespace oracle_detail {

// 15-point Gauss-Legendre rule on [a, b].
template <class F>
double gl15(F& f, double a, double b) {
    static const double xs[8] = {0.0,
                                 0.2011940939974345,
                                 0.3941513470775634,
                                 0.5709721726085388,
                                 0.7244177313601700,
                                 0.8482065834104272,
                                 0.9372733924007059,
                                 0.9879925180204854};
    static const double ws[8] = {0.2025782419255613, 0.1984314853271116, 0.1861610000155622,
                                 0.1662692058169939, 0.1395706779261543, 0.1071592204671719,
                                 0.0703660474881081, 0.0307532419961173};
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double total = ws[0] * f(c);
    for (int i = 1; i < 8; ++i)
        total += ws[i] * (f(c - h * xs[i]) + f(c + h * xs[i]));
    return total * h;
}

// Adaptive composite Gauss-Legendre: start from uniform panels, then bisect
// the panel with the largest bisection defect until the total defect is
// within tolerance (or the refinement budget runs out).
template <class F>
double adaptive_gauss(F&& f, double a, double b, double rel_tol, int initial_panels = 16,
                      int max_refine = 200) {
    if (!(b > a)) return 0.0;
    struct Panel {
        double a, b, value, err;
    };
    std::vector<Panel> panels;
    auto make_panel = [&](double pa, double pb) {
        const double whole = gl15(f, pa, pb);
        const double mid = 0.5 * (pa + pb);
        const double split = gl15(f, pa, mid) + gl15(f, mid, pb);
        return Panel{pa, pb, split, std::fabs(split - whole)};
    };
    const double h = (b - a) / initial_panels;
    for (int i = 0; i < initial_panels; ++i)
        panels.push_back(make_panel(a + i * h, a + (i + 1) * h));
    for (int round = 0; round < max_refine; ++round) {
        double total = 0.0, err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < panels.size(); ++i) {
            total += panels[i].value;
            err += panels[i].err;
            if (panels[i].err > panels[worst].err) worst = i;
        }
        if (err <= rel_tol * std::max(std::fabs(total), 1e-300) || panels[worst].err == 0.0)
            break;
        const Panel p = panels[static_cast<std::size_t>(worst)];
        const double mid = 0.5 * (p.a + p.b);
        panels[worst] = make_panel(p.a, mid);
        panels.push_back(make_panel(mid, p.b));
    }
    double total = 0.0;
    for (const Panel& p : panels) total += p.value;
    return total;
}

// Scans log_f on a grid and returns log integral of exp(log_f) over the
// region within `drop` nats of the peak. rel_tol must stay comfortably above
// the evaluation noise of log_f (nested quadratures are noisy integrands).
template <class F>
double log_integral_scan(F&& log_f, double lo, double hi, int npts, double drop,
                         double rel_tol,
                         double upper_cut = std::numeric_limits<double>::infinity()) {
    if (upper_cut < hi) hi = upper_cut;
    if (!(hi > lo)) return kNegInf;
    const double h = (hi - lo) / (npts - 1);
    double peak = kNegInf;
    int peak_i = 0;
    std::vector<double> vals(static_cast<std::size_t>(npts));
    for (int i = 0; i < npts; ++i) {
        vals[static_cast<std::size_t>(i)] = log_f(lo + i * h);
        if (vals[static_cast<std::size_t>(i)] > peak) {
            peak = vals[static_cast<std::size_t>(i)];
            peak_i = i;
        }
    }
    if (peak == kNegInf) return kNegInf;
    int il = peak_i, ir = peak_i;
    while (il > 0 && vals[static_cast<std::size_t>(il - 1)] > peak - drop) --il;
    while (ir + 1 < npts && vals[static_cast<std::size_t>(ir + 1)] > peak - drop) ++ir;
    const double a = lo + std::max(0, il - 1) * h;
    const double b = lo + std::min(npts - 1, ir + 1) * h;
    // The exponent is clamped: at huge |log_f| one double ULP spans many
    // nats, and exp of that rounding noise would overflow.
    auto g = [&](double x) { return std::exp(std::min(log_f(x) - peak, 30.0)); };
    const double integral = adaptive_gauss(g, a, b, rel_tol);
    if (!(integral > 0.0)) return kNegInf;
    return peak + std::log(integral);
}

inline double log_normal_pdf(double x, double mean, double var) {
    const double z = x - mean;
    return -0.5 * std::log(2.0 * kPi * var) - 0.5 * z * z / var;
}

struct ScalarProblem {
    std::vector<double> obs;
    double h0, s0, delta2;

    // log of  prod_t N(y_t; h0 mu, sigma2 s0) * N(mu; 0, sigma2 delta2)
    double log_joint_mu(double mu, double sigma2) const {
        double lf = log_normal_pdf(mu, 0.0, sigma2 * delta2);
        for (double v : obs) lf += log_normal_pdf(v, h0 * mu, sigma2 * s0);
        return lf;
    }

    // log integral over mu in (-inf, upper] at fixed sigma2. The integrand is
    // a product of Gaussians in mu; its center and width follow from
    // elementary precision bookkeeping, which locates the window. The value
    // itself still comes from the quadrature.
    double log_mu_integral(double sigma2, double upper) const {
        double precision = 1.0 / (sigma2 * delta2);
        double weighted = 0.0;
        for (double v : obs) {
            precision += h0 * h0 / (sigma2 * s0);
            weighted += h0 * v / (sigma2 * s0);
        }
        const double center = weighted / precision;
        const double width = 1.0 / std::sqrt(precision);
        auto lf = [&](double mu) { return log_joint_mu(mu, sigma2); };
        return log_integral_scan(lf, center - 12.0 * width, center + 12.0 * width, 33, 42.0,
                                 1e-12, upper);
    }

    double log_inv_gamma_pdf(double x, double shape, double scale) const {
        return shape * std::log(scale) - log_gamma(shape) - (shape + 1.0) * std::log(x) -
               scale / x;
    }

    // log of  int dsigma2 pi(sigma2) int dmu ..., mu truncated at `upper`.
    double log_full_integral(double nu, double gamma, double upper) const {
        const double shape = 0.5 * nu;
        const double scale = 0.5 * gamma;
        auto lg = [&](double s) {
            const double sigma2 = std::exp(s);
            return log_inv_gamma_pdf(sigma2, shape, scale) + s + log_mu_integral(sigma2, upper);
        };
        // The outer tolerance stays well above the inner quadrature noise.
        const double center = std::log(gamma);
        return log_integral_scan(lg, center - 60.0, center + 60.0, 481, 45.0, 1e-9);
    }
};

inline ScalarProblem scalar_problem(const EmissionConfig& cfg, const std::vector<double>& y,
                                    const std::vector<bool>& observed) {
    if (cfg.d() != 1 || cfg.q() != 1)
        throw std::invalid_argument("quadrature oracle: scalar configurations only");
    if (y.size() != observed.size())
        throw std::invalid_argument("quadrature oracle: mask length mismatch");
    ScalarProblem p;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (observed[i]) p.obs.push_back(y[i]);
    p.h0 = cfg.h0()(0, 0);
    p.s0 = cfg.cov().matrix()(0, 0);
    p.delta2 = cfg.delta2()(0);
    return p;
}

}  // namespace oracle_detail

// Adaptive quadrature of likelihood x prior for a scalar segment: 1-d over
// mu in fixed mode, 2-d over (mu, sigma2) in inverse-Gamma mode.
inline LogProb quadrature_log_marginal(const EmissionConfig& cfg, const std::vector<double>& y,
                                       const std::vector<bool>& observed) {
    const auto p = oracle_detail::scalar_problem(cfg, y, observed);
    if (p.obs.empty()) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    if (cfg.noise() == NoiseMode::fixed) return p.log_mu_integral(cfg.sigma2(), inf);
    return p.log_full_integral(cfg.nu(), cfg.gamma(), inf);
}

// P(mu <= theta | y) for a scalar segment, as a ratio of truncated to full
// quadrature. Independent of the conjugate posterior formulas.
inline double quadrature_risk(const EmissionConfig& cfg, const std::vector<double>& y,
                              const std::vector<bool>& observed, double theta) {
    const auto p = oracle_detail::scalar_problem(cfg, y, observed);
    const double inf = std::numeric_limits<double>::infinity();
    double log_num, log_den;
    if (p.obs.empty() && cfg.noise() == NoiseMode::fixed) {
        return normal_cdf(theta / std::sqrt(cfg.sigma2() * p.delta2));
    }
    if (cfg.noise() == NoiseMode::fixed) {
        log_num = p.log_mu_integral(cfg.sigma2(), theta);
        log_den = p.log_mu_integral(cfg.sigma2(), inf);
    } else {
        log_num = p.log_full_integral(cfg.nu(), cfg.gamma(), theta);
        log_den = p.log_full_integral(cfg.nu(), cfg.gamma(), inf);
    }
    if (log_num == kNegInf) return 0.0;
    return std::exp(log_num - log_den);
}

}  // namespace bayesseg

#endif
