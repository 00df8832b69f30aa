#ifndef BAYESSEG_FILTER_HPP
#define BAYESSEG_FILTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/errors.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/numerics.hpp"

namespace bayesseg {

// One candidate predecessor changepoint: the hypothesis that the current
// segment started at `changepoint`, with its normalized posterior log-weight
// p_t^{(j)} and the segment's running statistics.
struct Particle {
    int changepoint = 0;
    double log_weight = 0.0;
    SegmentStats stats;
};

struct FilterState {
    int t = 0;
    std::vector<Particle> particles;  // changepoints strictly increasing
    double log_evidence = 0.0;        // log P(y_{1:t})
};

struct FilterOptions {
    std::size_t max_particles = 256;              // 0 = unlimited
    double min_log_weight = -23.025850929940457;  // log(1e-10)
    bool record_trace = true;

    static FilterOptions exact() {
        FilterOptions o;
        o.max_particles = 0;
        o.min_log_weight = kNegInf;
        return o;
    }
};

// Per-step posterior snapshots plus a pruning audit log. Snapshots are taken
// after pruning: backward passes operate on what the filter actually believed.
struct FilterTrace {
    struct Step {
        std::vector<std::pair<int, double>> weights;  // (changepoint, log-weight)
    };
    struct PruneEvent {
        int step = 0;
        int changepoint = 0;
        double log_weight = kNegInf;  // normalized weight at the time of dropping
    };

    std::vector<Step> steps;  // steps[t - 1] is the snapshot at time t
    std::vector<PruneEvent> dropped;

    int size() const { return static_cast<int>(steps.size()); }

    // p_t^{(j)} in log domain; -inf if j was pruned away (or never existed).
    double log_weight_at(int t, int j) const {
        const auto& w = steps[static_cast<std::size_t>(t - 1)].weights;
        auto it = std::lower_bound(w.begin(), w.end(), j,
                                   [](const std::pair<int, double>& e, int v) { return e.first < v; });
        if (it == w.end() || it->first != j) return kNegInf;
        return it->second;
    }

    double weight_at(int t, int j) const {
        const double lw = log_weight_at(t, j);
        return lw == kNegInf ? 0.0 : std::exp(lw);
    }
};

// Online forward recursion over the predecessor-changepoint posterior.
// Each step costs O(particles); with pruning the particle count stays at
// max_particles, giving linear total complexity in the series length.
class Filter {
  public:
    Filter(EmissionConfig cfg, LengthPrior prior, FilterOptions options = {})
        : cfg_(std::move(cfg)), prior_(std::move(prior)), options_(options) {
        if (options_.max_particles == 1)
            throw std::invalid_argument("Filter: max_particles must be >= 2 (or 0 for unlimited)");
    }

    // Absorbs the observation of time t = state.t + 1.
    void step(const Eigen::VectorXd& y, const ObservationMask& mask) {
        const int t = state_.t + 1;
        if (y.size() != cfg_.d() || mask.size() != cfg_.d())
            throw std::invalid_argument("Filter::step: observation dimension mismatch");
        for (int i = 0; i < cfg_.d(); ++i) {
            if (mask.observed(i) && !std::isfinite(y(i)))
                throw InputError("non-finite observation at t=" + std::to_string(t) +
                                 ", component " + std::to_string(i + 1));
        }
        MaskedNoise noise;
        try {
            noise = masked_noise(cfg_.cov(), mask);
        } catch (const SingularityError& e) {
            throw SingularityError(std::string(e.what()) + " at t=" + std::to_string(t), t);
        }

        double change_acc = kNegInf;
        for (Particle& p : state_.particles) {
            const LengthPrior::Hazard hz = prior_.hazard(t - p.changepoint, p.changepoint == 1);
            change_acc = log_add(change_acc, p.log_weight + std::log(hz.change));
            auto [w, stats] = predictive_log_weight(cfg_, p.stats, y, noise);
            p.log_weight += w + std::log(hz.stay);
            p.stats = std::move(stats);
        }

        Particle fresh;
        fresh.changepoint = t;
        fresh.stats = accumulate(cfg_.empty_stats(), y, noise, cfg_.h0());
        const double lml_fresh = log_marginal_likelihood(cfg_, fresh.stats);
        fresh.log_weight = t == 1 ? lml_fresh : lml_fresh + change_acc;
        state_.particles.push_back(std::move(fresh));

        normalize();
        state_.t = t;
        if (options_.max_particles != 0 || options_.min_log_weight > kNegInf)
            prune_impl(options_.max_particles, options_.min_log_weight);
        record_snapshot();
    }

    void step(const Eigen::VectorXd& y) { step(y, ObservationMask::all(cfg_.d())); }

    // Threshold-then-top-K pruning; the newest particle always survives and
    // survivors are renormalized. Dropped mass is logged in the trace.
    void prune(std::size_t max_particles, double min_log_weight) {
        if (max_particles != 0 && max_particles < 2)
            throw std::invalid_argument("Filter::prune: max_particles must be >= 2");
        prune_impl(max_particles, min_log_weight);
        record_snapshot();
    }

    // exp(p_t^{(j)}) keyed by changepoint; sums to 1.
    std::map<int, double> last_changepoint_distribution() const {
        std::map<int, double> out;
        for (const Particle& p : state_.particles) out[p.changepoint] = std::exp(p.log_weight);
        return out;
    }

    int time() const { return state_.t; }
    double log_evidence() const { return state_.log_evidence; }
    const FilterState& state() const { return state_; }
    const std::vector<Particle>& particles() const { return state_.particles; }
    const FilterTrace& trace() const { return trace_; }
    const EmissionConfig& config() const { return cfg_; }
    const LengthPrior& length_prior() const { return prior_; }
    const FilterOptions& options() const { return options_; }

  private:
    void normalize() {
        std::vector<double> lw;
        lw.reserve(state_.particles.size());
        for (const Particle& p : state_.particles) lw.push_back(p.log_weight);
        const double lse = log_sum_exp(lw);
        if (!std::isfinite(lse))
            throw std::runtime_error("Filter: all particle weights vanished");
        for (Particle& p : state_.particles) p.log_weight -= lse;
        state_.log_evidence += lse;
    }

    void prune_impl(std::size_t max_particles, double min_log_weight) {
        auto& ps = state_.particles;
        if (ps.empty()) return;
        const int newest = ps.back().changepoint;  // == state_.t

        std::vector<char> keep(ps.size(), 0);
        keep.back() = 1;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i + 1 < ps.size(); ++i)
            if (ps[i].log_weight >= min_log_weight) candidates.push_back(i);

        std::size_t budget = max_particles == 0 ? candidates.size()
                                                : std::min(candidates.size(), max_particles - 1);
        if (budget < candidates.size()) {
            // Highest weights win; ties resolved toward the newer changepoint
            // so the outcome is deterministic.
            std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
                if (ps[a].log_weight != ps[b].log_weight)
                    return ps[a].log_weight > ps[b].log_weight;
                return ps[a].changepoint > ps[b].changepoint;
            });
            candidates.resize(budget);
        }
        for (std::size_t i : candidates) keep[i] = 1;

        std::size_t kept_count = 0;
        for (char k : keep) kept_count += static_cast<std::size_t>(k);
        if (kept_count == ps.size()) return;

        std::vector<Particle> kept;
        kept.reserve(kept_count);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (keep[i])
                kept.push_back(std::move(ps[i]));
            else
                trace_.dropped.push_back({state_.t, ps[i].changepoint, ps[i].log_weight});
        }
        ps = std::move(kept);

        std::vector<double> lw;
        lw.reserve(ps.size());
        for (const Particle& p : ps) lw.push_back(p.log_weight);
        double lse = log_sum_exp(lw);
        if (!std::isfinite(lse)) {
            // Everything but the (zero-weight) newest was dropped; fall back
            // to the only surviving hypothesis.
            for (Particle& p : ps) p.log_weight = p.changepoint == newest ? 0.0 : kNegInf;
            return;
        }
        for (Particle& p : ps) p.log_weight -= lse;
    }

    void record_snapshot() {
        if (!options_.record_trace || state_.t == 0) return;
        FilterTrace::Step snap;
        snap.weights.reserve(state_.particles.size());
        for (const Particle& p : state_.particles)
            snap.weights.emplace_back(p.changepoint, p.log_weight);
        if (static_cast<int>(trace_.steps.size()) == state_.t)
            trace_.steps.back() = std::move(snap);  // re-prune of the current step
        else
            trace_.steps.push_back(std::move(snap));
    }

    EmissionConfig cfg_;
    LengthPrior prior_;
    FilterOptions options_;
    FilterState state_;
    FilterTrace trace_;
};

}  // namespace bayesseg

#endif
