#pragma once

// End-to-end experiment wiring and artifact writers shared by the CLI and
// the integration tests.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpm/config.hpp"
#include "fedpm/encoder.hpp"
#include "fedpm/eval.hpp"
#include "fedpm/fed.hpp"
#include "fedpm/netsim.hpp"
#include "fedpm/nn.hpp"
#include "fedpm/scenario.hpp"

namespace fedpm {

inline constexpr const char* kToolVersion = "0.1.0";

struct Experiment {
    ScenarioConfig cfg;
    TelemetryLog log;
    PartitionedData data;
};

inline Experiment prepare(const ScenarioConfig& cfg) {
    Experiment e{cfg, run(cfg), {}};
    e.data = build_datasets(e.log, cfg);
    return e;
}

inline ModelParams initial_params(const ScenarioConfig& cfg) {
    return init_params(cfg.model, derive_seed(cfg.master_seed, {stream::init}));
}

inline std::vector<Client> make_clients(const PartitionedData& data, const ScenarioConfig& cfg) {
    std::vector<Client> clients;
    for (const auto& [g, c] : data.clients) {
        clients.emplace_back(g, to_samples(c.train),
                             derive_seed(cfg.master_seed, {stream::client_train, static_cast<std::uint64_t>(g)}));
    }
    return clients;
}

inline CentralizedResult centralized_pipeline(const Experiment& e) {
    return run_centralized(initial_params(e.cfg), e.data.pooled_train, e.data.pooled_test, e.cfg.model, e.cfg.fed,
                           derive_seed(e.cfg.master_seed, {stream::central_train}));
}

inline FederatedResult federated_pipeline(const Experiment& e, Execution mode = Execution::sequential) {
    const auto clients = make_clients(e.data, e.cfg);
    return run_federated(initial_params(e.cfg), clients, e.data.pooled_test, e.cfg.model, e.cfg.fed,
                         e.cfg.master_seed, mode);
}

// --- artifact writers -------------------------------------------------------

namespace detail {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace detail

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

/// Run manifest; the only artifact that carries a timestamp.
class Manifest {
public:
    Manifest(std::string scenario, const ScenarioConfig& cfg)
        : scenario_(std::move(scenario)), hash_(config_hash(cfg)), seed_(cfg.master_seed) {}

    void add(const std::string& name, const std::filesystem::path& path) { artifacts_[name] = path.string(); }

    nlohmann::json to_json() const {
        return {{"scenario", scenario_},     {"config_hash", hash_},           {"master_seed", seed_},
                {"artifacts", artifacts_},   {"tool_version", kToolVersion}, {"created_utc", detail::utc_timestamp()}};
    }

    void write(const std::filesystem::path& dir) const { detail::write_json(dir / "manifest.json", to_json()); }

private:
    std::string scenario_;
    std::string hash_;
    std::uint64_t seed_;
    std::map<std::string, std::string> artifacts_;
};

inline void write_simulation(const Experiment& e, const std::filesystem::path& dir, Manifest& m) {
    const auto telemetry = dir / "telemetry.csv";
    const auto faults = dir / "faults.json";
    export_csv(e.log, telemetry);
    detail::write_json(faults, fault_summary(e.log));
    m.add("telemetry", telemetry);
    m.add("faults", faults);
}

inline void write_encoding(const Experiment& e, const std::filesystem::path& dir, Manifest& m) {
    const auto all = dir / "dataset.csv";
    const auto train = dir / "dataset_train.csv";
    const auto test = dir / "dataset_test.csv";
    const auto norm = dir / "normalization.json";
    export_dataset_csv(e.data.pooled, all);
    export_dataset_csv(e.data.pooled_train, train);
    export_dataset_csv(e.data.pooled_test, test);
    detail::write_json(norm, to_json(e.data.normalization));
    m.add("dataset", all);
    m.add("dataset_train", train);
    m.add("dataset_test", test);
    m.add("normalization", norm);
}

inline nlohmann::json mode_report(const std::string& scenario, const char* mode, const Metrics& metrics) {
    auto j = to_json(metrics);
    j["scenario"] = scenario;
    j["mode"] = mode;
    return j;
}

inline void write_predictions(const ModelParams& p, const Dataset& test, const std::filesystem::path& path) {
    detail::write_file(path, [&](std::ostream& os) { write_predictions_csv(p, test, os); });
}

/// Line chart of federated exact-match per round with the centralized score
/// as a dashed horizontal reference.
inline void write_convergence_svg(const RoundHistory& history, double centralized_exact_match, std::ostream& out) {
    constexpr double width = 640, height = 400, left = 60, right = 20, top = 30, bottom = 50;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const double rounds = history.empty() ? 1.0 : static_cast<double>(history.size());
    auto px = [&](double round) { return left + (rounds <= 1.0 ? 0.0 : (round - 1.0) / (rounds - 1.0)) * plot_w; };
    auto py = [&](double acc) { return top + (1.0 - acc) * plot_h; };

    char buf[160];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n", left,
                  top, plot_w, plot_h);
    out << buf;
    for (int i = 0; i <= 4; ++i) {
        const double acc = i / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n", left - 6,
                      py(acc) + 4, acc);
        out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" stroke=\"#c0392b\" stroke-dasharray=\"6 4\"/>\n",
                  left, py(centralized_exact_match), left + plot_w, py(centralized_exact_match));
    out << buf;
    out << "<polyline fill=\"none\" stroke=\"#2c7fb8\" stroke-width=\"2\" points=\"";
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(r.round), py(r.metrics.exact_match));
        out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">communication round</text>\n",
                  left + plot_w / 2, height - 15);
    out << buf;
    out << "<text x=\"60\" y=\"20\" font-size=\"12\">exact-match accuracy: federated (solid), centralized (dashed)</text>\n";
    out << "</svg>\n";
}

struct ComparisonOutcome {
    CentralizedResult centralized;
    FederatedResult federated;
    nlohmann::json report;
};

struct CompareOptions {
    bool dump_predictions = false;
    bool with_timing = false;
    Execution execution = Execution::sequential;
};

/// Runs both pipelines on one shared split and writes every compare artifact.
inline ComparisonOutcome write_comparison(const Experiment& e, const std::string& scenario,
                                          const std::filesystem::path& dir, Manifest& m,
                                          const CompareOptions& opts = {}) {
    ComparisonOutcome out;
    out.centralized = centralized_pipeline(e);
    out.federated = federated_pipeline(e, opts.execution);
    const auto& fed_metrics = out.federated.history.back().metrics;

    out.report = {
        {"scenario", scenario},
        {"centralized", mode_report(scenario, "centralized", out.centralized.metrics)},
        {"federated", mode_report(scenario, "federated", fed_metrics)},
        {"gap", out.centralized.metrics.exact_match - fed_metrics.exact_match},
        {"rounds", e.cfg.fed.rounds},
        {"local_epochs", e.cfg.fed.local_epochs},
        {"centralized_epochs", e.cfg.fed.centralized_epochs},
    };

    const auto report = dir / "report.json";
    const auto convergence = dir / "convergence.csv";
    const auto chart = dir / "convergence.svg";
    const auto model_c = dir / "model_centralized.json";
    const auto model_f = dir / "model_federated.json";
    detail::write_json(report, out.report);
    detail::write_file(convergence, [&](std::ostream& os) {
        write_round_history_csv(out.federated.history, os, opts.with_timing);
    });
    detail::write_file(chart, [&](std::ostream& os) {
        write_convergence_svg(out.federated.history, out.centralized.metrics.exact_match, os);
    });
    save_checkpoint(out.centralized.params, e.cfg.model, model_c);
    save_checkpoint(out.federated.params, e.cfg.model, model_f);
    m.add("report", report);
    m.add("convergence", convergence);
    m.add("convergence_chart", chart);
    m.add("model_centralized", model_c);
    m.add("model_federated", model_f);

    if (opts.dump_predictions) {
        const auto pc = dir / "predictions_centralized.csv";
        const auto pf = dir / "predictions_federated.csv";
        write_predictions(out.centralized.params, e.data.pooled_test, pc);
        write_predictions(out.federated.params, e.data.pooled_test, pf);
        m.add("predictions_centralized", pc);
        m.add("predictions_federated", pf);
    }
    return out;
}

inline constexpr const char* kSweepHeader =
    "scenario,mode,exact_match,prec_sinr,prec_jitter,prec_delay,prec_tbsize,mean_loss,num_windows";

inline void write_sweep_row(std::ostream& out, const std::string& scenario, const char* mode, const Metrics& m) {
    char buf[64];
    out << scenario << ',' << mode;
    std::snprintf(buf, sizeof buf, ",%.6f", m.exact_match);
    out << buf;
    for (const auto& p : m.per_label_precision) {
        out << ',';
        if (p) {
            std::snprintf(buf, sizeof buf, "%.6f", *p);
            out << buf;
        }
    }
    std::snprintf(buf, sizeof buf, ",%.6f,%zu\n", m.mean_loss, m.num_windows);
    out << buf;
}

}  // namespace fedpm
