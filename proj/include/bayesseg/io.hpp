#ifndef BAYESSEG_IO_HPP
#define BAYESSEG_IO_HPP

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bayesseg/emission.hpp"
#include "bayesseg/errors.hpp"
#include "bayesseg/filter.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/posterior.hpp"

namespace bayesseg {

namespace io_detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    if (t == "-inf") {
        out = kNegInf;
        return true;
    }
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

inline bool parse_long(const std::string& s, long long& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(t.c_str(), &end, 10);
    return end == t.c_str() + t.size();
}

// Days since 1970-01-01 (civil calendar).
inline long long days_from_civil(long long y, int m, int d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const long long yoe = y - era * 400;
    const long long doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const long long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

// Index cell: plain integer or ISO date YYYY-MM-DD.
inline bool parse_index(const std::string& s, long long& ordinal) {
    const std::string t = trim(s);
    if (parse_long(t, ordinal)) return true;
    if (t.size() == 10 && t[4] == '-' && t[7] == '-') {
        long long y, m, d;
        if (parse_long(t.substr(0, 4), y) && parse_long(t.substr(5, 2), m) &&
            parse_long(t.substr(8, 2), d) && m >= 1 && m <= 12 && d >= 1 && d <= 31) {
            ordinal = days_from_civil(y, static_cast<int>(m), static_cast<int>(d));
            return true;
        }
    }
    return false;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Series files: n rows of (index, d cells); empty cell = unobserved.
// ---------------------------------------------------------------------------

struct SeriesData {
    std::vector<std::string> index_labels;
    std::vector<long long> index_ordinals;
    Eigen::MatrixXd y;  // zeros at unobserved cells
    std::vector<ObservationMask> masks;

    int n() const { return static_cast<int>(y.rows()); }
    int d() const { return static_cast<int>(y.cols()); }
};

inline SeriesData read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open series file: " + path);

    std::vector<std::string> labels;
    std::vector<long long> ordinals;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<bool>> flags;
    int d = -1;

    std::string line;
    int lineno = 0;
    bool saw_data = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (io_detail::trim(line).empty()) continue;
        std::vector<std::string> cells = io_detail::split(line, ',');
        long long ordinal;
        if (!io_detail::parse_index(cells[0], ordinal)) {
            if (!saw_data) continue;  // header row
            throw InputError("line " + std::to_string(lineno) + ": unparseable index '" +
                             io_detail::trim(cells[0]) + "'");
        }
        if (static_cast<int>(cells.size()) < 2)
            throw InputError("line " + std::to_string(lineno) + ": expected at least one data column");
        if (d < 0) d = static_cast<int>(cells.size()) - 1;
        if (static_cast<int>(cells.size()) - 1 != d)
            throw InputError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(d + 1) + " columns, got " + std::to_string(cells.size()));
        if (saw_data && ordinal <= ordinals.back())
            throw InputError("line " + std::to_string(lineno) + ": index not strictly increasing");

        std::vector<double> row(static_cast<std::size_t>(d), 0.0);
        std::vector<bool> obs(static_cast<std::size_t>(d), false);
        for (int i = 0; i < d; ++i) {
            const std::string cell = io_detail::trim(cells[static_cast<std::size_t>(i + 1)]);
            if (cell.empty()) continue;
            double v;
            if (!io_detail::parse_double(cell, v) || !std::isfinite(v))
                throw InputError("line " + std::to_string(lineno) + ": bad numeric cell '" + cell +
                                 "' in column " + std::to_string(i + 2));
            row[static_cast<std::size_t>(i)] = v;
            obs[static_cast<std::size_t>(i)] = true;
        }
        saw_data = true;
        labels.push_back(io_detail::trim(cells[0]));
        ordinals.push_back(ordinal);
        values.push_back(std::move(row));
        flags.push_back(std::move(obs));
    }
    if (!saw_data) throw InputError("series file has no data rows: " + path);

    SeriesData out;
    out.index_labels = std::move(labels);
    out.index_ordinals = std::move(ordinals);
    out.y = Eigen::MatrixXd::Zero(static_cast<int>(values.size()), d);
    for (std::size_t r = 0; r < values.size(); ++r) {
        out.masks.emplace_back(flags[r]);
        for (int i = 0; i < d; ++i) out.y(static_cast<int>(r), i) = values[r][static_cast<std::size_t>(i)];
    }
    return out;
}

inline void write_series_csv(const std::string& path, const SeriesData& series) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write series file: " + path);
    out << "index";
    for (int i = 1; i <= series.d(); ++i) out << ",y" << i;
    out << "\n";
    for (int t = 0; t < series.n(); ++t) {
        out << series.index_labels[static_cast<std::size_t>(t)];
        for (int i = 0; i < series.d(); ++i) {
            out << ",";
            if (series.masks[static_cast<std::size_t>(t)].observed(i))
                out << io_detail::fmt(series.y(t, i));
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Run configuration: flat dotted keys, one `key = value` per line, `#`
// comments, matrices as row-major bracketed lists.
// ---------------------------------------------------------------------------

struct RunConfig {
    std::map<std::string, std::string> raw;

    bool has(const std::string& key) const { return raw.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = raw.find(key);
        if (it == raw.end()) throw ConfigError("missing config key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key) const {
        double v;
        if (!io_detail::parse_double(get_string(key), v))
            throw ConfigError("config key '" + key + "': bad number '" + get_string(key) + "'");
        return v;
    }

    long long get_int(const std::string& key) const {
        long long v;
        if (!io_detail::parse_long(get_string(key), v))
            throw ConfigError("config key '" + key + "': bad integer '" + get_string(key) + "'");
        return v;
    }

    std::vector<double> get_list(const std::string& key) const {
        std::string s = io_detail::trim(get_string(key));
        if (s.size() < 2 || s.front() != '[' || s.back() != ']')
            throw ConfigError("config key '" + key + "': expected bracketed list");
        s = s.substr(1, s.size() - 2);
        std::vector<double> out;
        for (const std::string& tok : io_detail::split(s, ',')) {
            const std::string t = io_detail::trim(tok);
            if (t.empty()) continue;
            double v;
            if (!io_detail::parse_double(t, v))
                throw ConfigError("config key '" + key + "': bad list entry '" + t + "'");
            out.push_back(v);
        }
        if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
        return out;
    }

    // --- typed views -------------------------------------------------------

    LengthPrior length_prior() const {
        const std::string kind = get_string("prior.kind");
        const double p = get_double("prior.p");
        if (!(p > 0.0) || p > 1.0) throw ConfigError("config key 'prior.p': must lie in (0, 1]");
        if (kind == "geometric") {
            if (has("prior.r")) throw ConfigError("config key 'prior.r': only valid for negbin");
            return LengthPrior::geometric(p);
        }
        if (kind == "negbin") {
            const long long r = get_int("prior.r");
            if (r < 1) throw ConfigError("config key 'prior.r': must be >= 1");
            return LengthPrior::negative_binomial(static_cast<int>(r), p);
        }
        throw ConfigError("config key 'prior.kind': expected 'geometric' or 'negbin'");
    }

    EmissionConfig emission() const {
        const int d = static_cast<int>(get_int("model.d"));
        if (d < 1) throw ConfigError("config key 'model.d': must be >= 1");
        const int q = has("model.q") ? static_cast<int>(get_int("model.q")) : d;
        if (q < 1 || q > d) throw ConfigError("config key 'model.q': must lie in [1, d]");

        Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(d, q);
        if (has("model.H0")) h0 = matrix_value("model.H0", d, q);
        Eigen::MatrixXd sigma0 = Eigen::MatrixXd::Identity(d, d);
        if (has("model.Sigma0")) sigma0 = matrix_value("model.Sigma0", d, d);
        Eigen::VectorXd delta2 = Eigen::VectorXd::Ones(q);
        if (has("model.delta2")) {
            const std::vector<double> v = get_list("model.delta2");
            if (static_cast<int>(v.size()) != q)
                throw ConfigError("config key 'model.delta2': expected q entries");
            delta2 = Eigen::Map<const Eigen::VectorXd>(v.data(), q);
        }

        const std::string noise = get_string("model.noise");
        try {
            if (noise == "fixed") {
                if (has("model.nu") || has("model.gamma"))
                    throw ConfigError("config keys 'model.nu'/'model.gamma': only valid for invgamma noise");
                return EmissionConfig::fixed_noise(h0, sigma0, delta2, get_double("model.sigma2"));
            }
            if (noise == "invgamma") {
                if (has("model.sigma2"))
                    throw ConfigError("config key 'model.sigma2': only valid for fixed noise");
                return EmissionConfig::inverse_gamma_noise(h0, sigma0, delta2,
                                                           get_double("model.nu"),
                                                           get_double("model.gamma"));
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("model configuration: ") + e.what());
        }
        throw ConfigError("config key 'model.noise': expected 'fixed' or 'invgamma'");
    }

    FilterOptions filter_options() const {
        FilterOptions opts;
        if (has("filter.max_particles")) {
            const long long k = get_int("filter.max_particles");
            if (k != 0 && k < 2)
                throw ConfigError("config key 'filter.max_particles': must be >= 2 (or 0 for unlimited)");
            opts.max_particles = static_cast<std::size_t>(k);
        }
        if (has("filter.min_log_weight")) opts.min_log_weight = get_double("filter.min_log_weight");
        return opts;
    }

    std::optional<RiskQuery> risk_query(const EmissionConfig& cfg) const {
        if (!has("risk.v") && !has("risk.theta")) return std::nullopt;
        if (!has("risk.v") || !has("risk.theta"))
            throw ConfigError("risk query requires both 'risk.v' and 'risk.theta'");
        RiskQuery query;
        query.theta = get_double("risk.theta");
        const std::string space = has("risk.space") ? get_string("risk.space") : "param";
        if (space == "param") {
            query.prediction_space = false;
        } else if (space == "prediction") {
            query.prediction_space = true;
        } else {
            throw ConfigError("config key 'risk.space': expected 'param' or 'prediction'");
        }
        const std::vector<double> v = get_list("risk.v");
        const int want = query.prediction_space ? cfg.d() : cfg.q();
        if (static_cast<int>(v.size()) != want)
            throw ConfigError("config key 'risk.v': expected " + std::to_string(want) + " entries");
        query.v = Eigen::Map<const Eigen::VectorXd>(v.data(), want);
        if (query.v.isZero(0.0)) throw ConfigError("config key 'risk.v': must be nonzero");
        return query;
    }

    std::uint64_t seed() const {
        if (!has("seed")) return 1;
        return static_cast<std::uint64_t>(get_int("seed"));
    }

    double activation_prob() const {
        if (!has("simulate.activation_prob")) return 1.0;
        const double p = get_double("simulate.activation_prob");
        if (p < 0.0 || p > 1.0)
            throw ConfigError("config key 'simulate.activation_prob': must lie in [0, 1]");
        return p;
    }

  private:
    Eigen::MatrixXd matrix_value(const std::string& key, int rows, int cols) const {
        const std::vector<double> v = get_list(key);
        if (static_cast<int>(v.size()) != rows * cols)
            throw ConfigError("config key '" + key + "': expected " + std::to_string(rows * cols) +
                              " entries (row-major " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ")");
        Eigen::MatrixXd m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
        return m;
    }
};

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "prior.kind", "prior.p", "prior.r",
        "model.d", "model.q", "model.H0", "model.Sigma0", "model.delta2",
        "model.noise", "model.sigma2", "model.nu", "model.gamma",
        "filter.max_particles", "filter.min_log_weight",
        "risk.v", "risk.theta", "risk.space",
        "seed", "simulate.activation_prob",
    };
    return keys;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = io_detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = io_detail::trim(line.substr(0, eq));
        const std::string value = io_detail::trim(line.substr(eq + 1));
        if (known_config_keys().count(key) == 0)
            throw ConfigError("unknown config key '" + key + "'");
        if (cfg.raw.count(key) != 0)
            throw ConfigError("duplicate config key '" + key + "'");
        if (value.empty())
            throw ConfigError("config key '" + key + "': empty value");
        cfg.raw[key] = value;
    }
    // Force full schema validation up front.
    cfg.length_prior();
    const EmissionConfig emission = cfg.emission();
    cfg.filter_options();
    cfg.risk_query(emission);
    cfg.activation_prob();
    cfg.seed();
    return cfg;
}

// ---------------------------------------------------------------------------
// Report writers.
// ---------------------------------------------------------------------------

inline void write_last_changepoint_csv(const std::string& path,
                                       const std::map<int, double>& dist) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "changepoint,probability\n";
    for (const auto& [j, p] : dist) out << j << "," << io_detail::fmt(p) << "\n";
}

inline void write_marginals_csv(const std::string& path, const MarginalReport& report) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "t,probability\n";
    for (int t = 2; t <= report.n; ++t) out << t << "," << io_detail::fmt(report.at(t)) << "\n";
}

struct SegmentRow {
    int start = 0;
    int end = 0;
    Eigen::VectorXd mu_hat;
    std::optional<double> sigma2_mean;
};

inline void write_map_segments_csv(const std::string& path, const std::vector<SegmentRow>& rows,
                                   int q) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "start,end";
    for (int i = 1; i <= q; ++i) out << ",mu" << i;
    out << ",sigma2_mean\n";
    for (const SegmentRow& r : rows) {
        out << r.start << "," << r.end;
        for (int i = 0; i < q; ++i) out << "," << io_detail::fmt(r.mu_hat(i));
        out << ",";
        if (r.sigma2_mean) out << io_detail::fmt(*r.sigma2_mean);
        out << "\n";
    }
}

inline void write_evidence_txt(const std::string& path, double log_evidence, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "log_evidence " << io_detail::fmt(log_evidence) << "\n";
    out << "seed " << seed << "\n";
}

inline void write_risk_txt(const std::string& path, double risk, const RiskQuery& query,
                           std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "risk " << io_detail::fmt(risk) << "\n";
    out << "theta " << io_detail::fmt(query.theta) << "\n";
    out << "space " << (query.prediction_space ? "prediction" : "param") << "\n";
    out << "seed " << seed << "\n";
}

// One JSON object per time step: {"t": 3, "particles": [[j, log_weight], ...]}.
inline void write_trace_jsonl(const std::string& path, const FilterTrace& trace) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    for (int t = 1; t <= trace.size(); ++t) {
        out << "{\"t\":" << t << ",\"particles\":[";
        const auto& w = trace.steps[static_cast<std::size_t>(t - 1)].weights;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (i) out << ",";
            out << "[" << w[i].first << ","
                << (w[i].second == kNegInf ? std::string("-1e308") : io_detail::fmt(w[i].second))
                << "]";
        }
        out << "]}\n";
    }
}

}  // namespace bayesseg

#endif
