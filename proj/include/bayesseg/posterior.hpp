#ifndef BAYESSEG_POSTERIOR_HPP
#define BAYESSEG_POSTERIOR_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/filter.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/numerics.hpp"
#include "bayesseg/rng.hpp"

namespace bayesseg {

// A partition of [1, n] into contiguous segments, stored as the strictly
// increasing segment starts; the first element is always 1.
struct Segmentation {
    std::vector<int> changepoints;

    bool operator==(const Segmentation& other) const = default;
};

// P(t is a changepoint | y_{1:n}) for t = 2..n.
struct MarginalReport {
    std::vector<double> prob;  // prob[i] is the marginal for t = i + 2
    int n = 0;

    double at(int t) const { return prob[static_cast<std::size_t>(t - 2)]; }
};

namespace detail {

// Conditional law of the changepoint preceding a known changepoint at time
// tau: proportional to p_{tau-1}^{(i)} times the change hazard at age
// tau - i. The hazard factor is constant for the geometric prior (where this
// reduces to sampling from p_{tau-1} directly) but matters for the negative
// binomial, whose hazard depends on the segment age.
inline std::vector<std::pair<int, double>> predecessor_weights(const FilterTrace& trace,
                                                               const LengthPrior& prior,
                                                               int tau) {
    const auto& snap = trace.steps[static_cast<std::size_t>(tau - 2)].weights;  // p_{tau-1}
    std::vector<std::pair<int, double>> out;
    out.reserve(snap.size());
    for (const auto& [i, lw] : snap) {
        if (lw == kNegInf) continue;
        const double change = prior.hazard(tau - i, i == 1).change;
        out.emplace_back(i, std::exp(lw) * change);
    }
    return out;
}

// Pruned traces can lose the true predecessor; a snapshot whose recorded
// mass strays from 1 is reported so downstream consumers can see it.
inline void check_snapshot_mass(const FilterTrace& trace, int t,
                                std::vector<std::string>* warnings) {
    if (warnings == nullptr) return;
    double total = 0.0;
    for (const auto& [j, lw] : trace.steps[static_cast<std::size_t>(t - 1)].weights)
        total += std::exp(lw);
    if (std::fabs(total - 1.0) > 1e-6)
        warnings->push_back("backward pass: snapshot at t=" + std::to_string(t) + " has mass " +
                            std::to_string(total));
}

inline int weights_argmax(const std::vector<std::pair<int, double>>& w) {
    int best_j = 0;
    double best = -1.0;
    for (const auto& [j, v] : w) {
        if (v > best) {  // ties stay with the smaller (earlier) changepoint
            best = v;
            best_j = j;
        }
    }
    if (best_j == 0) throw std::runtime_error("backward pass: no predecessor has mass");
    return best_j;
}

template <class Rng>
int weights_sample(const std::vector<std::pair<int, double>>& w, Rng& rng) {
    double total = 0.0;
    for (const auto& [j, v] : w) total += v;
    double u = rng.next_unit() * total;
    for (const auto& [j, v] : w) {
        u -= v;
        if (u <= 0.0) return j;
    }
    return w.back().first;
}

inline std::vector<std::pair<int, double>> final_weights(const FilterTrace& trace) {
    std::vector<std::pair<int, double>> out;
    for (const auto& [j, lw] : trace.steps.back().weights)
        if (lw != kNegInf) out.emplace_back(j, std::exp(lw));
    return out;
}

}  // namespace detail

// MAP segmentation by the greedy backward argmax chain: start from the most
// probable last changepoint under p_n and repeatedly jump to the most
// probable previous one. This is not necessarily the jointly most probable
// segmentation; see the enumeration oracle for the distinction on small n.
inline Segmentation map_segmentation(const FilterTrace& trace, const LengthPrior& prior,
                                     std::vector<std::string>* warnings = nullptr) {
    if (trace.size() == 0) throw std::invalid_argument("map_segmentation: empty trace");
    std::vector<int> cps;
    detail::check_snapshot_mass(trace, trace.size(), warnings);
    int cur = detail::weights_argmax(detail::final_weights(trace));
    cps.push_back(cur);
    while (cur > 1) {
        detail::check_snapshot_mass(trace, cur - 1, warnings);
        cur = detail::weights_argmax(detail::predecessor_weights(trace, prior, cur));
        cps.push_back(cur);
    }
    std::reverse(cps.begin(), cps.end());
    return Segmentation{std::move(cps)};
}

// Draws a segmentation from its exact posterior (given the recorded trace)
// by the same backward walk with sampling instead of argmax.
inline Segmentation sample_segmentation(const FilterTrace& trace, const LengthPrior& prior,
                                        std::uint64_t seed,
                                        std::vector<std::string>* warnings = nullptr) {
    if (trace.size() == 0) throw std::invalid_argument("sample_segmentation: empty trace");
    SplitMix64 rng(seed);
    std::vector<int> cps;
    detail::check_snapshot_mass(trace, trace.size(), warnings);
    int cur = detail::weights_sample(detail::final_weights(trace), rng);
    cps.push_back(cur);
    while (cur > 1) {
        detail::check_snapshot_mass(trace, cur - 1, warnings);
        cur = detail::weights_sample(detail::predecessor_weights(trace, prior, cur), rng);
        cps.push_back(cur);
    }
    std::reverse(cps.begin(), cps.end());
    return Segmentation{std::move(cps)};
}

// Single backward pass:
//   P(i cp | y_{1:n}) = p_n^{(i)} + sum_{j > i} P(C_j = i | j cp, y) P(j cp | y_{1:n}),
// with the predecessor conditional from the same hazard-weighted law the
// sampler uses.
inline MarginalReport marginal_changepoint_probabilities(const FilterTrace& trace,
                                                         const LengthPrior& prior) {
    if (trace.size() == 0)
        throw std::invalid_argument("marginal_changepoint_probabilities: empty trace");
    const int n = trace.size();
    MarginalReport report;
    report.n = n;
    if (n == 1) return report;

    // cond[j] holds P(C_j = i | j changepoint, y_{1:j-1}) keyed by i.
    std::vector<std::vector<std::pair<int, double>>> cond(static_cast<std::size_t>(n + 1));
    for (int j = 2; j <= n; ++j) {
        auto w = detail::predecessor_weights(trace, prior, j);
        double total = 0.0;
        for (const auto& [i, v] : w) total += v;
        if (total > 0.0)
            for (auto& [i, v] : w) v /= total;
        cond[static_cast<std::size_t>(j)] = std::move(w);
    }

    // Sweep j downward: once j is reached, every contribution from later
    // changepoints has already been scattered into m[j].
    std::vector<double> m(static_cast<std::size_t>(n + 1), 0.0);
    for (int i = 2; i <= n; ++i) m[static_cast<std::size_t>(i)] = trace.weight_at(n, i);
    for (int j = n; j >= 2; --j) {
        m[static_cast<std::size_t>(j)] = std::min(1.0, m[static_cast<std::size_t>(j)]);
        const double mj = m[static_cast<std::size_t>(j)];
        if (mj == 0.0) continue;
        for (const auto& [pred, pv] : cond[static_cast<std::size_t>(j)])
            if (pred >= 2) m[static_cast<std::size_t>(pred)] += pv * mj;
    }
    report.prob.assign(m.begin() + 2, m.end());
    return report;
}

// Convenience overloads pulling the trace and prior from a filter.
inline Segmentation map_segmentation(const Filter& filter,
                                     std::vector<std::string>* warnings = nullptr) {
    return map_segmentation(filter.trace(), filter.length_prior(), warnings);
}

inline Segmentation sample_segmentation(const Filter& filter, std::uint64_t seed,
                                        std::vector<std::string>* warnings = nullptr) {
    return sample_segmentation(filter.trace(), filter.length_prior(), seed, warnings);
}

inline MarginalReport marginal_changepoint_probabilities(const Filter& filter) {
    return marginal_changepoint_probabilities(filter.trace(), filter.length_prior());
}

// P(v' mu <= theta | y_{1:n}) for the last segment's location parameter:
// mixture of the per-particle within-segment probabilities under p_n.
inline double last_segment_risk(const FilterState& state, const EmissionConfig& cfg,
                                const RiskQuery& query,
                                StudentForm form = StudentForm::posterior_dof) {
    if (state.t < 1)
        throw std::invalid_argument("last_segment_risk: no observations filtered yet");
    double total = 0.0;
    for (const Particle& p : state.particles) {
        if (p.log_weight == kNegInf) continue;
        total += std::exp(p.log_weight + risk_log_probability(cfg, p.stats, query, form));
    }
    return std::min(1.0, total);
}

inline double last_segment_risk(const Filter& filter, const RiskQuery& query,
                                StudentForm form = StudentForm::posterior_dof) {
    return last_segment_risk(filter.state(), filter.config(), query, form);
}

}  // namespace bayesseg

#endif
