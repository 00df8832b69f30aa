// bayesseg: online Bayesian changepoint detection over CSV time series.
//
// Subcommands:
//   detect    run the filter and write the report files
//   simulate  draw a synthetic series plus ground-truth sidecar
//   exact     brute-force posterior for small files (n <= 16)
//   risk      run the filter and report the tail-risk query only

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "bayesseg/bayesseg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string input_path;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::optional<long long> max_particles;
    bool compare = false;
    int n = 0;
};

bayesseg::Filter run_filter(const bayesseg::RunConfig& rc, const bayesseg::SeriesData& series,
                            const bayesseg::EmissionConfig& cfg, const CommonArgs& args,
                            bool force_exact) {
    bayesseg::FilterOptions opts =
        force_exact ? bayesseg::FilterOptions::exact() : rc.filter_options();
    if (args.max_particles) {
        if (*args.max_particles != 0 && *args.max_particles < 2)
            throw bayesseg::ConfigError("--max-particles must be >= 2 (or 0 for unlimited)");
        opts.max_particles = static_cast<std::size_t>(*args.max_particles);
    }
    bayesseg::Filter filter(cfg, rc.length_prior(), opts);
    for (int t = 0; t < series.n(); ++t)
        filter.step(series.y.row(t).transpose(), series.masks[static_cast<std::size_t>(t)]);
    return filter;
}

std::vector<bayesseg::SegmentRow> map_segment_rows(const bayesseg::EmissionConfig& cfg,
                                                   const bayesseg::SeriesData& series,
                                                   const bayesseg::Segmentation& seg) {
    std::vector<bayesseg::SegmentRow> rows;
    const auto& cps = seg.changepoints;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const int a = cps[i];
        const int b = i + 1 < cps.size() ? cps[i + 1] - 1 : series.n();
        bayesseg::SegmentStats stats = cfg.empty_stats();
        for (int t = a; t <= b; ++t)
            stats = accumulate(stats, series.y.row(t - 1).transpose(),
                               series.masks[static_cast<std::size_t>(t - 1)], cfg.h0(), cfg.cov());
        const bayesseg::SegmentPosterior post = posterior(cfg, stats);
        bayesseg::SegmentRow row;
        row.start = a;
        row.end = b;
        row.mu_hat = post.mu_hat;
        try {
            row.sigma2_mean = post.sigma2_mean();
        } catch (const std::domain_error&) {
            row.sigma2_mean = std::nullopt;  // dof condition not met
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_detect(const CommonArgs& args, bool risk_only) {
    const bayesseg::RunConfig rc = bayesseg::parse_config_file(args.config_path);
    const bayesseg::SeriesData series = bayesseg::read_series_csv(args.input_path);
    const bayesseg::EmissionConfig cfg = rc.emission();
    if (series.d() != cfg.d())
        throw bayesseg::InputError("series has " + std::to_string(series.d()) +
                                   " data columns but config expects d=" + std::to_string(cfg.d()));
    const std::uint64_t seed = args.seed.value_or(rc.seed());
    const auto query = rc.risk_query(cfg);
    if (risk_only && !query)
        throw bayesseg::ConfigError("risk subcommand requires 'risk.v' and 'risk.theta'");

    const bayesseg::Filter filter = run_filter(rc, series, cfg, args, false);

    if (risk_only) {
        const double risk = bayesseg::last_segment_risk(filter, *query);
        std::cout << "risk " << risk << "\n";
        if (!args.output.empty()) {
            fs::create_directories(args.output);
            bayesseg::write_risk_txt((fs::path(args.output) / "risk.txt").string(), risk, *query,
                                     seed);
        }
        return 0;
    }

    fs::create_directories(args.output);
    const fs::path dir(args.output);
    bayesseg::write_last_changepoint_csv((dir / "last_changepoint.csv").string(),
                                         filter.last_changepoint_distribution());
    const bayesseg::MarginalReport marginals =
        bayesseg::marginal_changepoint_probabilities(filter);
    bayesseg::write_marginals_csv((dir / "marginals.csv").string(), marginals);
    const bayesseg::Segmentation map_seg = bayesseg::map_segmentation(filter);
    bayesseg::write_map_segments_csv((dir / "map_segments.csv").string(),
                                     map_segment_rows(cfg, series, map_seg), cfg.q());
    bayesseg::write_evidence_txt((dir / "evidence.txt").string(), filter.log_evidence(), seed);
    if (query)
        bayesseg::write_risk_txt((dir / "risk.txt").string(),
                                 bayesseg::last_segment_risk(filter, *query), *query, seed);
    bayesseg::write_trace_jsonl((dir / "trace.jsonl").string(), filter.trace());
    return 0;
}

int run_simulate(const CommonArgs& args) {
    const bayesseg::RunConfig rc = bayesseg::parse_config_file(args.config_path);
    const bayesseg::EmissionConfig cfg = rc.emission();
    const std::uint64_t seed = args.seed.value_or(rc.seed());
    const bayesseg::SimulatedSeries sim =
        bayesseg::simulate_series(cfg, rc.length_prior(), args.n, rc.activation_prob(), seed);

    bayesseg::SeriesData series;
    series.y = sim.y;
    series.masks = sim.masks;
    for (int t = 1; t <= args.n; ++t) {
        series.index_labels.push_back(std::to_string(t));
        series.index_ordinals.push_back(t);
    }
    const fs::path out_path(args.output);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    bayesseg::write_series_csv(out_path.string(), series);

    json truth;
    truth["seed"] = seed;
    truth["changepoints"] = sim.changepoints;
    truth["segments"] = json::array();
    for (const auto& seg : sim.segments) {
        json jseg;
        jseg["start"] = seg.start;
        jseg["end"] = seg.end;
        jseg["sigma2"] = seg.sigma2;
        jseg["mu"] = std::vector<double>(seg.mu.data(), seg.mu.data() + seg.mu.size());
        truth["segments"].push_back(std::move(jseg));
    }
    const fs::path truth_path = out_path.parent_path() / "truth.json";
    std::ofstream truth_out(truth_path);
    if (!truth_out) throw bayesseg::InputError("cannot write " + truth_path.string());
    truth_out << truth.dump(2) << "\n";
    return 0;
}

int run_exact(const CommonArgs& args) {
    const bayesseg::RunConfig rc = bayesseg::parse_config_file(args.config_path);
    const bayesseg::SeriesData series = bayesseg::read_series_csv(args.input_path);
    const bayesseg::EmissionConfig cfg = rc.emission();
    if (series.d() != cfg.d())
        throw bayesseg::InputError("series has " + std::to_string(series.d()) +
                                   " data columns but config expects d=" + std::to_string(cfg.d()));
    if (series.n() > 16)
        throw bayesseg::InputError("exact enumeration supports n <= 16; this file has n=" +
                                   std::to_string(series.n()));
    const auto query = rc.risk_query(cfg);
    const bayesseg::ExactPosterior exact = bayesseg::enumerate_posterior(
        series.y, series.masks, cfg, rc.length_prior(), query ? &*query : nullptr);

    std::cout.precision(12);
    std::cout << "n " << exact.n << "\n";
    std::cout << "log_evidence " << exact.log_evidence << "\n";
    std::cout << "last_changepoint\n";
    for (const auto& [j, p] : exact.last_changepoint) std::cout << "  " << j << " " << p << "\n";
    std::cout << "marginals\n";
    for (int t = 2; t <= exact.n; ++t) std::cout << "  " << t << " " << exact.marginal_at(t) << "\n";
    if (query) std::cout << "risk " << exact.risk << "\n";

    if (args.compare) {
        const bayesseg::Filter filter =
            run_filter(rc, series, cfg, args, /*force_exact=*/!args.max_particles);
        double dev_last = 0.0;
        auto filter_dist = filter.last_changepoint_distribution();
        for (int j = 1; j <= exact.n; ++j) {
            const double pe = exact.last_changepoint.count(j) ? exact.last_changepoint.at(j) : 0.0;
            const double pf = filter_dist.count(j) ? filter_dist.at(j) : 0.0;
            dev_last = std::max(dev_last, std::fabs(pe - pf));
        }
        const bayesseg::MarginalReport marginals =
            bayesseg::marginal_changepoint_probabilities(filter);
        double dev_marg = 0.0;
        for (int t = 2; t <= exact.n; ++t)
            dev_marg = std::max(dev_marg, std::fabs(marginals.at(t) - exact.marginal_at(t)));
        std::cout << "compare_last_changepoint_max_abs_dev " << dev_last << "\n";
        std::cout << "compare_marginals_max_abs_dev " << dev_marg << "\n";
        std::cout << "compare_log_evidence_abs_dev "
                  << std::fabs(filter.log_evidence() - exact.log_evidence) << "\n";
        if (query) {
            const double rf = bayesseg::last_segment_risk(filter, *query);
            std::cout << "compare_risk_abs_dev " << std::fabs(rf - exact.risk) << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online Bayesian multiple-changepoint detection"};
    app.require_subcommand(1);

    CommonArgs detect_args, simulate_args, exact_args, risk_args;

    CLI::App* detect = app.add_subcommand("detect", "Filter a series and write report files");
    detect->add_option("--config", detect_args.config_path, "Config file")->required();
    detect->add_option("--input", detect_args.input_path, "Series CSV")->required();
    detect->add_option("--output", detect_args.output, "Output directory")->required();
    detect->add_option("--seed", detect_args.seed, "Seed recorded in the reports");
    detect->add_option("--max-particles", detect_args.max_particles,
                       "Override filter.max_particles (0 = unlimited)");

    CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic series");
    simulate->add_option("--config", simulate_args.config_path, "Config file")->required();
    simulate->add_option("-n,--length", simulate_args.n, "Number of time steps")
        ->required()
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", simulate_args.seed, "Master seed");
    simulate->add_option("--output", simulate_args.output, "Output CSV path")->required();

    CLI::App* exact = app.add_subcommand("exact", "Exact posterior by enumeration (n <= 16)");
    exact->add_option("--config", exact_args.config_path, "Config file")->required();
    exact->add_option("--input", exact_args.input_path, "Series CSV")->required();
    exact->add_flag("--compare", exact_args.compare, "Also run the filter and print deviations");
    exact->add_option("--max-particles", exact_args.max_particles,
                      "Filter particle cap for --compare (default: exact)");

    CLI::App* risk = app.add_subcommand("risk", "Filter a series and report the risk query only");
    risk->add_option("--config", risk_args.config_path, "Config file")->required();
    risk->add_option("--input", risk_args.input_path, "Series CSV")->required();
    risk->add_option("--output", risk_args.output, "Optional output directory for risk.txt");
    risk->add_option("--seed", risk_args.seed, "Seed recorded in the reports");
    risk->add_option("--max-particles", risk_args.max_particles,
                     "Override filter.max_particles (0 = unlimited)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (detect->parsed()) return run_detect(detect_args, false);
        if (simulate->parsed()) return run_simulate(simulate_args);
        if (exact->parsed()) return run_exact(exact_args);
        if (risk->parsed()) return run_detect(risk_args, true);
    } catch (const bayesseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const bayesseg::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
