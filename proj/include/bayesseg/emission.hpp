#ifndef BAYESSEG_EMISSION_HPP
#define BAYESSEG_EMISSION_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/numerics.hpp"

namespace bayesseg {

enum class NoiseMode { fixed, inverse_gamma };

// Segment emission model: y_t = H0 mu + eps_t with eps_t ~ N(0, sigma2 Sigma0)
// and mu ~ N(0, sigma2 D), D = Diag(delta2). sigma2 is either fixed or
// carries an InverseGamma(nu/2, gamma/2) prior.
class EmissionConfig {
  public:
    static EmissionConfig fixed_noise(Eigen::MatrixXd h0, Eigen::MatrixXd sigma0,
                                      Eigen::VectorXd delta2, double sigma2) {
        if (!(sigma2 > 0.0))
            throw std::invalid_argument("EmissionConfig: sigma2 must be positive");
        EmissionConfig cfg(std::move(h0), std::move(sigma0), std::move(delta2));
        cfg.noise_ = NoiseMode::fixed;
        cfg.sigma2_ = sigma2;
        return cfg;
    }

    static EmissionConfig inverse_gamma_noise(Eigen::MatrixXd h0, Eigen::MatrixXd sigma0,
                                              Eigen::VectorXd delta2, double nu, double gamma) {
        if (!(nu > 0.0) || !(gamma > 0.0))
            throw std::invalid_argument("EmissionConfig: nu and gamma must be positive");
        EmissionConfig cfg(std::move(h0), std::move(sigma0), std::move(delta2));
        cfg.noise_ = NoiseMode::inverse_gamma;
        cfg.nu_ = nu;
        cfg.gamma_ = gamma;
        return cfg;
    }

    int d() const { return static_cast<int>(h0_.rows()); }
    int q() const { return static_cast<int>(h0_.cols()); }
    const Eigen::MatrixXd& h0() const { return h0_; }
    const CovarianceSpec& cov() const { return cov_; }
    const Eigen::VectorXd& delta2() const { return delta2_; }
    NoiseMode noise() const { return noise_; }
    double sigma2() const { return sigma2_; }
    double nu() const { return nu_; }
    double gamma() const { return gamma_; }

    const Eigen::VectorXd& d_inv() const { return d_inv_; }
    double log_det_d() const { return log_det_d_; }

    SegmentStats empty_stats() const { return SegmentStats::zero(q()); }

  private:
    EmissionConfig(Eigen::MatrixXd h0, Eigen::MatrixXd sigma0, Eigen::VectorXd delta2)
        : h0_(std::move(h0)), cov_(std::move(sigma0)), delta2_(std::move(delta2)) {
        if (h0_.rows() < 1 || h0_.cols() < 1 || h0_.cols() > h0_.rows())
            throw std::invalid_argument("EmissionConfig: H0 must be d x q with 1 <= q <= d");
        if (cov_.dim() != d())
            throw std::invalid_argument("EmissionConfig: Sigma0 dimension mismatch");
        if (delta2_.size() != q())
            throw std::invalid_argument("EmissionConfig: delta2 must have q entries");
        if ((delta2_.array() <= 0.0).any())
            throw std::invalid_argument("EmissionConfig: delta2 entries must be positive");
        d_inv_ = delta2_.cwiseInverse();
        log_det_d_ = delta2_.array().log().sum();
    }

    Eigen::MatrixXd h0_;
    CovarianceSpec cov_;
    Eigen::VectorXd delta2_;
    NoiseMode noise_ = NoiseMode::fixed;
    double sigma2_ = 1.0;
    double nu_ = 0.0;
    double gamma_ = 0.0;
    Eigen::VectorXd d_inv_;
    double log_det_d_ = 0.0;
};

namespace detail {

// Posterior precision factorization shared by likelihood/posterior/risk paths.
struct SegmentCore {
    Eigen::LLT<Eigen::MatrixXd> llt;  // of (D^-1 + A_data)
    Eigen::VectorXd mu_hat;
    double y_norm2 = 0.0;   // c - b' M b, clamped at zero
    double logdet_m = 0.0;  // ln|M| = -ln|D^-1 + A_data|
};

inline SegmentCore segment_core(const EmissionConfig& cfg, const SegmentStats& stats) {
    SegmentCore core;
    Eigen::MatrixXd prec = stats.a_data;
    prec.diagonal() += cfg.d_inv();
    core.llt.compute(prec);
    if (core.llt.info() != Eigen::Success)
        throw std::runtime_error("emission: posterior precision not positive-definite");
    core.mu_hat = core.llt.solve(stats.b);
    double logdet_prec = 0.0;
    for (int i = 0; i < prec.rows(); ++i)
        logdet_prec += 2.0 * std::log(core.llt.matrixLLT()(i, i));
    core.logdet_m = -logdet_prec;
    double ynorm = stats.c - stats.b.dot(core.mu_hat);
    if (ynorm < 0.0) {
        if (ynorm < -1e-12 * std::max(stats.c, 1.0))
            throw std::runtime_error("emission: residual quadratic form negative");
        ynorm = 0.0;  // analytically nonnegative; rounding only
    }
    core.y_norm2 = ynorm;
    return core;
}

inline double log_marginal_from(const EmissionConfig& cfg, int trace_pi, double logdet_sum,
                                double logdet_m, double y_norm2) {
    const double base = -0.5 * logdet_sum + 0.5 * (logdet_m - cfg.log_det_d());
    if (cfg.noise() == NoiseMode::fixed) {
        return -0.5 * trace_pi * std::log(2.0 * kPi * cfg.sigma2()) + base -
               0.5 * y_norm2 / cfg.sigma2();
    }
    const double half_post = 0.5 * (trace_pi + cfg.nu());
    return -0.5 * trace_pi * std::log(kPi) + base + log_gamma(half_post) -
           log_gamma(0.5 * cfg.nu()) + 0.5 * cfg.nu() * std::log(cfg.gamma()) -
           half_post * std::log(cfg.gamma() + y_norm2);
}

}  // namespace detail

// log P(s, s+k-1): the segment observations' marginal likelihood with mu (and
// sigma2 in inverse-Gamma mode) integrated out. A segment with no observed
// cells carries no information and returns exactly 0.
inline LogProb log_marginal_likelihood(const EmissionConfig& cfg, const SegmentStats& stats) {
    if (stats.trace_pi == 0) return 0.0;
    const detail::SegmentCore core = detail::segment_core(cfg, stats);
    return detail::log_marginal_from(cfg, stats.trace_pi, stats.logdet_sum, core.logdet_m,
                                     core.y_norm2);
}

// Incremental weight w = log P(j, t) - log P(j, t-1) together with the
// updated statistics. For a fresh segment this is log P(t, t).
inline std::pair<LogProb, SegmentStats> predictive_log_weight(const EmissionConfig& cfg,
                                                              const SegmentStats& before,
                                                              const Eigen::VectorXd& y_t,
                                                              const MaskedNoise& noise) {
    SegmentStats after = accumulate(before, y_t, noise, cfg.h0());
    if (noise.observed_count == 0) return {0.0, std::move(after)};
    const double w = log_marginal_likelihood(cfg, after) - log_marginal_likelihood(cfg, before);
    return {w, std::move(after)};
}

inline std::pair<LogProb, SegmentStats> predictive_log_weight(const EmissionConfig& cfg,
                                                              const SegmentStats& before,
                                                              const Eigen::VectorXd& y_t,
                                                              const ObservationMask& mask) {
    return predictive_log_weight(cfg, before, y_t, masked_noise(cfg.cov(), mask));
}

// Posterior law of the segment parameters given the accumulated statistics.
struct SegmentPosterior {
    Eigen::VectorXd mu_hat;
    Eigen::MatrixXd m;  // mu | y, sigma2 ~ N(mu_hat, sigma2 M)
    NoiseMode noise = NoiseMode::fixed;
    double sigma2_shape = 0.0;  // (nu + trace_pi) / 2
    double sigma2_scale = 0.0;  // (gamma + |y|_P^2) / 2
    double fixed_sigma2 = 0.0;

    double sigma2_mean() const {
        if (noise == NoiseMode::fixed) return fixed_sigma2;
        if (!(sigma2_shape > 1.0))
            throw std::domain_error("sigma2_mean: requires nu + trace_pi > 2");
        return sigma2_scale / (sigma2_shape - 1.0);
    }

    double sigma2_variance() const {
        if (noise == NoiseMode::fixed) return 0.0;
        if (!(sigma2_shape > 2.0))
            throw std::domain_error("sigma2_variance: requires nu + trace_pi > 4");
        const double mean = sigma2_scale / (sigma2_shape - 1.0);
        return mean * mean / (sigma2_shape - 2.0);
    }
};

inline SegmentPosterior posterior(const EmissionConfig& cfg, const SegmentStats& stats) {
    SegmentPosterior post;
    post.noise = cfg.noise();
    post.fixed_sigma2 = cfg.noise() == NoiseMode::fixed ? cfg.sigma2() : 0.0;
    if (stats.trace_pi == 0) {
        // No observed cells: the prior is recovered exactly.
        post.mu_hat = Eigen::VectorXd::Zero(cfg.q());
        post.m = cfg.delta2().asDiagonal();
        post.sigma2_shape = 0.5 * cfg.nu();
        post.sigma2_scale = 0.5 * cfg.gamma();
        return post;
    }
    const detail::SegmentCore core = detail::segment_core(cfg, stats);
    post.mu_hat = core.mu_hat;
    post.m = core.llt.solve(Eigen::MatrixXd::Identity(cfg.q(), cfg.q()));
    post.sigma2_shape = 0.5 * (cfg.nu() + stats.trace_pi);
    post.sigma2_scale = 0.5 * (cfg.gamma() + core.y_norm2);
    return post;
}

// Tail event Omega = { v' mu <= theta } on the segment location parameter.
// v lives in parameter space (length q) unless prediction_space is set, in
// which case it is a length-d vector mapped through H0.
struct RiskQuery {
    Eigen::VectorXd v;
    double theta = 0.0;
    bool prediction_space = false;
};

// Student parameterization for inverse-Gamma risk. The posterior form uses
// dof nu + trace_pi and scale (gamma + |y|^2), matching the conjugate
// posterior; the prior-display form keeps the prior nu, gamma.
enum class StudentForm { posterior_dof, prior_display };

inline LogProb risk_log_probability(const EmissionConfig& cfg, const SegmentStats& stats,
                                    const RiskQuery& query,
                                    StudentForm form = StudentForm::posterior_dof) {
    if (query.v.size() == 0 || query.v.isZero(0.0))
        throw std::invalid_argument("risk_log_probability: v must be nonzero");
    Eigen::VectorXd v;
    if (query.prediction_space) {
        if (query.v.size() != cfg.d())
            throw std::invalid_argument("risk_log_probability: prediction-space v must have d entries");
        v = cfg.h0().transpose() * query.v;
    } else {
        if (query.v.size() != cfg.q())
            throw std::invalid_argument("risk_log_probability: v must have q entries");
        v = query.v;
    }

    double center, vmv, y_norm2;
    if (stats.trace_pi == 0) {
        center = 0.0;
        vmv = v.dot(cfg.delta2().cwiseProduct(v));
        y_norm2 = 0.0;
    } else {
        const detail::SegmentCore core = detail::segment_core(cfg, stats);
        center = v.dot(core.mu_hat);
        vmv = v.dot(core.llt.solve(v));
        y_norm2 = core.y_norm2;
    }
    if (!(vmv > 0.0)) {
        // v' mu is degenerate at its center (H0' v == 0 in prediction space).
        return query.theta >= center ? 0.0 : kNegInf;
    }

    if (cfg.noise() == NoiseMode::fixed) {
        const double scale = std::sqrt(cfg.sigma2() * vmv);
        return std::log(normal_cdf((query.theta - center) / scale));
    }
    double dof, scale2;
    if (form == StudentForm::posterior_dof) {
        dof = cfg.nu() + stats.trace_pi;
        scale2 = (cfg.gamma() + y_norm2) * vmv / dof;
    } else {
        dof = cfg.nu();
        scale2 = cfg.gamma() * vmv / dof;
    }
    return std::log(student_t_cdf((query.theta - center) / std::sqrt(scale2), dof));
}

// Law of A' mu given the segment data: multivariate t in inverse-Gamma mode
// (descriptor only; no CDF is evaluated), Gaussian (dof = inf) in fixed mode.
struct TransformLaw {
    Eigen::VectorXd mean;
    Eigen::MatrixXd scale;
    double dof = 0.0;
};

inline TransformLaw linear_transform_law(const EmissionConfig& cfg, const SegmentStats& stats,
                                         const Eigen::MatrixXd& a) {
    if (a.rows() != cfg.q())
        throw std::invalid_argument("linear_transform_law: A must have q rows");
    const SegmentPosterior post = posterior(cfg, stats);
    TransformLaw law;
    law.mean = a.transpose() * post.mu_hat;
    const Eigen::MatrixXd ama = a.transpose() * post.m * a;
    if (cfg.noise() == NoiseMode::fixed) {
        law.scale = cfg.sigma2() * ama;
        law.dof = std::numeric_limits<double>::infinity();
    } else {
        const double dof = cfg.nu() + stats.trace_pi;
        law.scale = (2.0 * post.sigma2_scale) / dof * ama;  // (gamma + |y|^2) / dof
        law.dof = dof;
    }
    return law;
}

// ---------------------------------------------------------------------------
// Batch evaluator: the reference path. Evaluates the same model from the
// stacked kd-dimensional formulas with the padded-identity pseudo-inverse,
// with no per-date block structure. Supports time-varying H and Sigma.
// ---------------------------------------------------------------------------

struct BatchModel {
    Eigen::MatrixXd h;      // N x q stacked regressors (N = k d)
    Eigen::MatrixXd sigma;  // N x N SPD noise covariance
    Eigen::VectorXd delta2;
    NoiseMode noise = NoiseMode::fixed;
    double sigma2 = 1.0;
    double nu = 0.0;
    double gamma = 0.0;
};

struct BatchResult {
    double log_marginal = 0.0;
    Eigen::VectorXd mu_hat;
    Eigen::MatrixXd m;
    double y_norm2 = 0.0;
    int trace_pi = 0;
    double logdet = 0.0;  // log |(I - Pi) + Pi Sigma Pi|
};

inline BatchResult batch_evaluate(const BatchModel& model, const Eigen::VectorXd& y,
                                  const std::vector<bool>& mask) {
    const int n = static_cast<int>(model.sigma.rows());
    const int q = static_cast<int>(model.h.cols());
    if (model.h.rows() != n || y.size() != n || static_cast<int>(mask.size()) != n)
        throw std::invalid_argument("batch_evaluate: dimension mismatch");
    if (model.delta2.size() != q)
        throw std::invalid_argument("batch_evaluate: delta2 must have q entries");

    // (I - Pi) + Pi Sigma Pi, then Sigma_Pi^+ = Pi [(I - Pi) + Pi Sigma Pi]^-1 Pi.
    Eigen::MatrixXd padded = model.sigma;
    Eigen::VectorXd ym = y;
    int trace_pi = 0;
    for (int i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
            ++trace_pi;
            continue;
        }
        padded.row(i).setZero();
        padded.col(i).setZero();
        padded(i, i) = 1.0;
        ym(i) = 0.0;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(padded);
    if (llt.info() != Eigen::Success)
        throw SingularityError("batch_evaluate: padded covariance not positive-definite");
    Eigen::MatrixXd pinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
    for (int i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        pinv.row(i).setZero();
        pinv.col(i).setZero();
    }

    Eigen::MatrixXd prec = model.h.transpose() * pinv * model.h;
    prec.diagonal() += model.delta2.cwiseInverse();
    Eigen::LLT<Eigen::MatrixXd> llt_prec(prec);
    if (llt_prec.info() != Eigen::Success)
        throw std::runtime_error("batch_evaluate: posterior precision not positive-definite");
    const Eigen::VectorXd b = model.h.transpose() * (pinv * ym);

    BatchResult out;
    out.trace_pi = trace_pi;
    out.logdet = logdet;
    out.mu_hat = llt_prec.solve(b);
    out.m = llt_prec.solve(Eigen::MatrixXd::Identity(q, q));
    out.y_norm2 = std::max(0.0, ym.dot(pinv * ym) - b.dot(out.mu_hat));

    double logdet_prec = 0.0;
    for (int i = 0; i < q; ++i) logdet_prec += 2.0 * std::log(llt_prec.matrixLLT()(i, i));
    const double logdet_d = model.delta2.array().log().sum();
    const double base = -0.5 * logdet + 0.5 * (-logdet_prec - logdet_d);
    if (model.noise == NoiseMode::fixed) {
        out.log_marginal = -0.5 * trace_pi * std::log(2.0 * kPi * model.sigma2) + base -
                           0.5 * out.y_norm2 / model.sigma2;
    } else {
        const double half_post = 0.5 * (trace_pi + model.nu);
        out.log_marginal = -0.5 * trace_pi * std::log(kPi) + base +
                           log_gamma(half_post) - log_gamma(0.5 * model.nu) +
                           0.5 * model.nu * std::log(model.gamma) -
                           half_post * std::log(model.gamma + out.y_norm2);
    }
    return out;
}

inline LogProb batch_log_marginal(const BatchModel& model, const Eigen::VectorXd& y,
                                  const std::vector<bool>& mask) {
    return batch_evaluate(model, y, mask).log_marginal;
}

}  // namespace bayesseg

#endif
