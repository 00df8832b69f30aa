#ifndef BAYESSEG_MASKED_LINALG_HPP
#define BAYESSEG_MASKED_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayesseg/errors.hpp"

namespace bayesseg {

// Per-date activation flags r_{i,t}: which signal components are observed.
struct ObservationMask {
    std::vector<bool> flags;

    ObservationMask() = default;
    explicit ObservationMask(std::vector<bool> f) : flags(std::move(f)) {}

    static ObservationMask all(int d) { return ObservationMask(std::vector<bool>(d, true)); }
    static ObservationMask none(int d) { return ObservationMask(std::vector<bool>(d, false)); }

    int size() const { return static_cast<int>(flags.size()); }
    bool observed(int i) const { return flags[static_cast<std::size_t>(i)]; }

    int observed_count() const {
        int n = 0;
        for (bool f : flags) n += f ? 1 : 0;
        return n;
    }

    std::vector<int> observed_indices() const {
        std::vector<int> idx;
        idx.reserve(flags.size());
        for (int i = 0; i < size(); ++i)
            if (flags[static_cast<std::size_t>(i)]) idx.push_back(i);
        return idx;
    }
};

// Per-date noise covariance Sigma_0: symmetric positive-definite.
class CovarianceSpec {
  public:
    explicit CovarianceSpec(Eigen::MatrixXd sigma0) : sigma0_(std::move(sigma0)) {
        if (sigma0_.rows() != sigma0_.cols() || sigma0_.rows() < 1)
            throw std::invalid_argument("CovarianceSpec: Sigma0 must be square and nonempty");
        const double scale = std::max(1.0, sigma0_.cwiseAbs().maxCoeff());
        if ((sigma0_ - sigma0_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("CovarianceSpec: Sigma0 must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(sigma0_);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("CovarianceSpec: Sigma0 must be positive-definite");
    }

    int dim() const { return static_cast<int>(sigma0_.rows()); }
    const Eigen::MatrixXd& matrix() const { return sigma0_; }

  private:
    Eigen::MatrixXd sigma0_;
};

// Projected noise quantities of one date, shared across all segment
// hypotheses touching that date.
struct MaskedNoise {
    Eigen::MatrixXd pinv;  // (Pi Sigma0 Pi)^+, zero on unobserved rows/cols
    double log_det = 0.0;  // log det of the observed submatrix
    int observed_count = 0;
    std::vector<bool> observed;
};

// (Pi Sigma0 Pi)^+ and log|(I-Pi) + Pi Sigma0 Pi| via the observed-submatrix
// route: gather observed indices, factor the small dense block, scatter back.
inline MaskedNoise masked_noise(const CovarianceSpec& cov, const ObservationMask& mask) {
    const int d = cov.dim();
    if (mask.size() != d)
        throw std::invalid_argument("masked_noise: mask dimension mismatch");
    MaskedNoise out;
    out.pinv = Eigen::MatrixXd::Zero(d, d);
    out.observed = mask.flags;
    const std::vector<int> idx = mask.observed_indices();
    const int m = static_cast<int>(idx.size());
    out.observed_count = m;
    if (m == 0) return out;

    Eigen::MatrixXd block(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) block(a, b) = cov.matrix()(idx[a], idx[b]);

    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-12)
        throw SingularityError("observed covariance block is numerically singular");

    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) out.pinv(idx[a], idx[b]) = inv(a, b);
    for (int a = 0; a < m; ++a) out.log_det += 2.0 * std::log(llt.matrixLLT()(a, a));
    return out;
}

inline Eigen::MatrixXd masked_pseudo_inverse(const CovarianceSpec& cov,
                                             const ObservationMask& mask) {
    return masked_noise(cov, mask).pinv;
}

inline double restricted_log_det(const CovarianceSpec& cov, const ObservationMask& mask) {
    return masked_noise(cov, mask).log_det;
}

// Running sums of one candidate segment. A_data = sum_t H0' (Pi Sigma0 Pi)^+ H0,
// b = sum_t H0' (Pi Sigma0 Pi)^+ y_t, c = sum_t y_t' (Pi Sigma0 Pi)^+ y_t.
struct SegmentStats {
    Eigen::MatrixXd a_data;
    Eigen::VectorXd b;
    double c = 0.0;
    int trace_pi = 0;
    double logdet_sum = 0.0;
    int length = 0;

    static SegmentStats zero(int q) {
        SegmentStats s;
        s.a_data = Eigen::MatrixXd::Zero(q, q);
        s.b = Eigen::VectorXd::Zero(q);
        return s;
    }
};

inline SegmentStats accumulate(const SegmentStats& acc, const Eigen::VectorXd& y,
                               const MaskedNoise& noise, const Eigen::MatrixXd& h0) {
    const int d = static_cast<int>(h0.rows());
    const int q = static_cast<int>(h0.cols());
    if (y.size() != d || noise.pinv.rows() != d || acc.a_data.rows() != q)
        throw std::invalid_argument("accumulate: dimension mismatch");

    SegmentStats out = acc;
    out.length += 1;
    if (noise.observed_count == 0) return out;

    // Unobserved entries of y are ignored; zero them so NaN placeholders
    // cannot leak through the (zeroed) pseudo-inverse rows.
    Eigen::VectorXd ym = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i)
        if (noise.observed[static_cast<std::size_t>(i)]) ym(i) = y(i);

    const Eigen::VectorXd py = noise.pinv * ym;
    out.a_data += h0.transpose() * noise.pinv * h0;
    out.b += h0.transpose() * py;
    out.c += ym.dot(py);
    out.trace_pi += noise.observed_count;
    out.logdet_sum += noise.log_det;
    return out;
}

inline SegmentStats accumulate(const SegmentStats& acc, const Eigen::VectorXd& y,
                               const ObservationMask& mask, const Eigen::MatrixXd& h0,
                               const CovarianceSpec& cov) {
    return accumulate(acc, y, masked_noise(cov, mask), h0);
}

}  // namespace bayesseg

#endif
