#ifndef BAYESSEG_LENGTH_PRIOR_HPP
#define BAYESSEG_LENGTH_PRIOR_HPP

#include <cmath>
#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "bayesseg/numerics.hpp"

namespace bayesseg {

enum class LengthPriorKind { geometric, negative_binomial };

// Segment-length law g/G, residual-time law g0/G0, and the hazard
// probabilities driving changepoint transitions.
//
// Tables are extended on demand by doubling, and capped once the survival
// mass drops below 1e-12; past the cap the hazard is forced to change = 1.
// Extension behaves as an internal cache: instances are safe for shared
// concurrent reads.
class LengthPrior {
  public:
    struct Hazard {
        double stay;
        double change;
    };

    static LengthPrior geometric(double p, std::int64_t horizon = 1024) {
        if (!(p > 0.0) || p > 1.0)
            throw std::domain_error("LengthPrior: geometric p must lie in (0, 1]");
        return LengthPrior(LengthPriorKind::geometric, 1, p, horizon);
    }

    static LengthPrior negative_binomial(int r, double p, std::int64_t horizon = 1024) {
        if (r < 1)
            throw std::domain_error("LengthPrior: negative binomial r must be >= 1");
        if (!(p > 0.0) || p > 1.0)
            throw std::domain_error("LengthPrior: negative binomial p must lie in (0, 1]");
        return LengthPrior(LengthPriorKind::negative_binomial, r, p, horizon);
    }

    LengthPrior(const LengthPrior& other) { copy_from(other); }
    LengthPrior& operator=(const LengthPrior& other) {
        if (this != &other) copy_from(other);
        return *this;
    }

    LengthPriorKind kind() const { return kind_; }
    double p() const { return p_; }
    int r() const { return r_; }

    // Expected segment length, which is also sum_{s>=1} (1 - G(s-1)),
    // the normalizer of the residual-time law.
    double mean_length() const { return static_cast<double>(r_) / p_; }

    // g(t): mass of a segment of length t.
    double mass(std::int64_t t) const {
        if (t < 1) throw std::domain_error("LengthPrior::mass: t must be >= 1");
        ensure(t);
        std::shared_lock lock(mutex_);
        if (t <= size_locked()) return g_[t - 1];
        return mass_closed(t);
    }

    // G(t) = sum_{s<=t} g(s); G(0) = 0.
    double cumulative(std::int64_t t) const {
        if (t < 0) throw std::domain_error("LengthPrior::cumulative: t must be >= 0");
        return 1.0 - survival(t);
    }

    // 1 - G(t).
    double survival(std::int64_t t) const {
        if (t < 0) throw std::domain_error("LengthPrior::survival: t must be >= 0");
        if (t == 0) return 1.0;
        ensure(t);
        std::shared_lock lock(mutex_);
        if (t <= size_locked()) return surv_[t - 1];
        return survival_closed(t);
    }

    // g0(d) = (1 - G(d-1)) / sum_{s>=1} (1 - G(s-1)): residual time of the
    // renewal process, i.e. the law of the first changepoint's distance from
    // the origin. Memoryless for the geometric kind, where g0 == g.
    double residual_mass(std::int64_t d) const {
        if (d < 1) throw std::domain_error("LengthPrior::residual_mass: d must be >= 1");
        if (kind_ == LengthPriorKind::geometric) return mass(d);
        ensure(d);
        std::shared_lock lock(mutex_);
        if (d <= size_locked()) return g0_[d - 1];
        return survival_closed(d - 1) / mean_length();
    }

    // G0(d) = sum_{s<=d} g0(s); G0(0) = 0.
    double residual_cumulative(std::int64_t d) const {
        return 1.0 - residual_survival(d);
    }

    // 1 - G0(d).
    double residual_survival(std::int64_t d) const {
        if (d < 0) throw std::domain_error("LengthPrior::residual_survival: d must be >= 0");
        if (kind_ == LengthPriorKind::geometric) return survival(d);
        if (d == 0) return 1.0;
        ensure(d);
        std::shared_lock lock(mutex_);
        if (d <= size_locked()) return surv0_[d - 1];
        return 0.0;  // beyond the cap
    }

    // Transition probabilities of the predecessor-changepoint chain for a
    // segment of the given age; the first segment substitutes G0 for G.
    // stay + change == 1 exactly.
    Hazard hazard(std::int64_t age, bool first_segment) const {
        if (age < 1) throw std::domain_error("LengthPrior::hazard: age must be >= 1");
        ensure(age);
        {
            std::shared_lock lock(mutex_);
            if (age > size_locked() && capped_) return {0.0, 1.0};  // negligible tail mass
        }
        const double s_prev = first_segment ? residual_survival(age - 1) : survival(age - 1);
        if (!(s_prev > 0.0)) return {0.0, 1.0};  // segment cannot extend past support
        const double m = first_segment ? residual_mass(age) : mass(age);
        double change = m / s_prev;
        if (change > 1.0) change = 1.0;
        if (change < 0.0) change = 0.0;
        return {1.0 - change, change};
    }

    // True once the tables have been truncated at the point where the
    // remaining survival mass is below 1e-12.
    bool capped() const {
        std::shared_lock lock(mutex_);
        return capped_;
    }

    std::int64_t horizon() const {
        std::shared_lock lock(mutex_);
        return size_locked();
    }

    // Draws a segment length by iterating the hazard, one age at a time.
    template <class Rng>
    std::int64_t sample_length(bool first_segment, Rng& rng) const {
        for (std::int64_t age = 1;; ++age) {
            const Hazard h = hazard(age, first_segment);
            if (h.change >= 1.0 || rng.next_unit() < h.change) return age;
        }
    }

  private:
    LengthPrior(LengthPriorKind kind, int r, double p, std::int64_t horizon)
        : kind_(kind), r_(r), p_(p) {
        if (horizon < 1) horizon = 1;
        extend_to(horizon);
    }

    void copy_from(const LengthPrior& other) {
        std::shared_lock lock(other.mutex_);
        kind_ = other.kind_;
        r_ = other.r_;
        p_ = other.p_;
        g_ = other.g_;
        surv_ = other.surv_;
        g0_ = other.g0_;
        surv0_ = other.surv0_;
        capped_ = other.capped_;
    }

    std::int64_t size_locked() const { return static_cast<std::int64_t>(g_.size()); }

    void ensure(std::int64_t t) const {
        {
            std::shared_lock lock(mutex_);
            if (t <= size_locked() || capped_) return;
        }
        std::unique_lock lock(mutex_);
        while (t > size_locked() && !capped_) {
            extend_to(2 * std::max<std::int64_t>(size_locked(), 1));
        }
    }

    // Fills tables through index `target`, truncating where survival falls
    // below the cap threshold. Caller holds the unique lock (or is the ctor).
    void extend_to(std::int64_t target) const {
        constexpr double cap_threshold = 1e-12;
        const double inv_mean = 1.0 / mean_length();
        for (std::int64_t t = size_locked() + 1; t <= target; ++t) {
            double g, s;
            if (kind_ == LengthPriorKind::geometric) {
                // Multiplicative survival: exact memorylessness, g0 == g.
                const double s_prev = t == 1 ? 1.0 : surv_[t - 2];
                g = p_ * s_prev;
                s = s_prev * (1.0 - p_);
            } else {
                g = mass_closed(t);
                s = survival_closed(t);
            }
            g_.push_back(g);
            surv_.push_back(s);
            if (kind_ == LengthPriorKind::negative_binomial) {
                const double s0_prev = t == 1 ? 1.0 : surv0_[t - 2];
                const double g0 = (t == 1 ? 1.0 : surv_[t - 2]) * inv_mean;
                g0_.push_back(g0);
                surv0_.push_back(std::max(0.0, s0_prev - g0));
            }
            if (s < cap_threshold) {
                capped_ = true;
                return;
            }
        }
    }

    double mass_closed(std::int64_t t) const {
        if (kind_ == LengthPriorKind::geometric)
            return p_ * std::pow(1.0 - p_, static_cast<double>(t - 1));
        if (t < r_) return 0.0;
        if (p_ == 1.0) return t == r_ ? 1.0 : 0.0;
        const double lc = log_gamma(static_cast<double>(t)) -
                          log_gamma(static_cast<double>(r_)) -
                          log_gamma(static_cast<double>(t - r_ + 1));
        return std::exp(lc + r_ * std::log(p_) + (t - r_) * std::log1p(-p_));
    }

    // P(T > t) = P(Binomial(t, p) <= r - 1), summed term by term.
    double survival_closed(std::int64_t t) const {
        if (kind_ == LengthPriorKind::geometric)
            return std::pow(1.0 - p_, static_cast<double>(t));
        if (t <= 0) return 1.0;
        if (p_ == 1.0) return t < r_ ? 1.0 : 0.0;
        const double lp = std::log(p_);
        const double lq = std::log1p(-p_);
        double total = 0.0;
        for (int i = 0; i < r_; ++i) {
            if (i > t) break;
            const double lc = log_gamma(static_cast<double>(t + 1)) -
                              log_gamma(static_cast<double>(i + 1)) -
                              log_gamma(static_cast<double>(t - i + 1));
            total += std::exp(lc + i * lp + (t - i) * lq);
        }
        return std::min(total, 1.0);
    }

    LengthPriorKind kind_;
    int r_;
    double p_;

    mutable std::shared_mutex mutex_;
    mutable std::vector<double> g_;
    mutable std::vector<double> surv_;
    mutable std::vector<double> g0_;    // negative binomial only
    mutable std::vector<double> surv0_; // negative binomial only
    mutable bool capped_ = false;
};

}  // namespace bayesseg

#endif
