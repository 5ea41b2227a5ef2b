#pragma once

// Synthetic per-UE KPI telemetry with gNB outage injection.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpm/config.hpp"
#include "fedpm/rng.hpp"
#include "fedpm/scenario.hpp"

namespace fedpm {

struct TelemetryRecord {
    double time = 0.0;
    int ue_id = 0;
    int gnb_id = 0;
    double sinr_db = 0.0;
    double jitter_ms = 0.0;
    double delay_ms = 0.0;
    double tb_size_bytes = 0.0;
};

struct TelemetryLog {
    std::vector<TelemetryRecord> records;  // sorted by (time, ue_id)
    std::vector<int> failed_gnbs;          // ascending
    double fault_time = 0.0;
};

/// Log-distance path loss plus Gaussian shadowing. `std_normal` is a
/// standard-normal draw scaled by the model's shadowing sigma.
inline double sinr_at(double distance_m, const ChannelModel& model, double std_normal) {
    if (!(distance_m > 0.0)) throw std::domain_error("sinr_at: distance must be positive");
    return model.ref_sinr_db -
           10.0 * model.path_loss_exponent * std::log10(distance_m / model.ref_distance_m) +
           model.shadowing_sigma_db * std_normal;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Shannon-shaped SINR to transport-block map, saturating at the model cap.
inline double tb_size_from_sinr(double sinr_db, const ChannelModel& model) {
    const double num = std::log2(1.0 + db_to_linear(sinr_db));
    const double den = std::log2(1.0 + db_to_linear(model.sinr_cap_db()));
    return model.tb_max_bytes * std::clamp(num / den, 0.0, 1.0);
}

/// Healthy-regime sample for a UE whose serving gNB is up. Draw order is
/// shadowing then delay noise.
inline TelemetryRecord sample_kpis(int ue, const Topology& topo, const ChannelModel& model, double t,
                                   std::optional<double> prev_delay_ms, Rng& rng) {
    const auto idx = static_cast<std::size_t>(ue);
    const double d = topo.link_distance_m.at(idx);
    TelemetryRecord r;
    r.time = t;
    r.ue_id = ue;
    r.gnb_id = topo.serving_gnb[idx];
    r.sinr_db = sinr_at(d, model, rng.normal());
    r.delay_ms = model.base_delay_ms + model.delay_distance_coeff * d +
                 std::abs(rng.normal(0.0, model.delay_noise_sigma_ms));
    r.jitter_ms = prev_delay_ms ? std::abs(r.delay_ms - *prev_delay_ms) : 0.0;
    r.tb_size_bytes = tb_size_from_sinr(r.sinr_db, model);
    return r;
}

/// Fault-regime sample for a UE attached to a deactivated gNB. The delay
/// alternates by fault_jitter_ms on odd sample steps so packet-arrival jitter
/// is visible through the usual successive-difference definition.
inline TelemetryRecord sample_fault_kpis(int ue, const Topology& topo, const ChannelModel& model, double t,
                                         int step, std::optional<double> prev_delay_ms, Rng& rng) {
    const auto idx = static_cast<std::size_t>(ue);
    TelemetryRecord r;
    r.time = t;
    r.ue_id = ue;
    r.gnb_id = topo.serving_gnb[idx];
    r.sinr_db = rng.normal(model.fault_sinr_db, model.shadowing_sigma_db);
    r.delay_ms = model.fault_delay_ms + (step % 2 == 1 ? model.fault_jitter_ms : 0.0) +
                 std::abs(rng.normal(0.0, model.delay_noise_sigma_ms));
    r.jitter_ms = prev_delay_ms ? std::abs(r.delay_ms - *prev_delay_ms) : 0.0;
    r.tb_size_bytes = model.fault_tb_bytes;
    return r;
}

/// Picks num_failed_gnbs distinct gNBs uniformly without replacement.
inline std::vector<int> inject_faults(const ScenarioConfig& cfg, Rng& rng) {
    if (cfg.num_failed_gnbs < 0 || cfg.num_failed_gnbs > cfg.num_gnbs) {
        throw ConfigError("num_failed_gnbs", "must lie in [0, num_gnbs]");
    }
    std::vector<int> ids(static_cast<std::size_t>(cfg.num_gnbs));
    for (int i = 0; i < cfg.num_gnbs; ++i) ids[static_cast<std::size_t>(i)] = i;
    // partial Fisher-Yates
    for (int i = 0; i < cfg.num_failed_gnbs; ++i) {
        auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(cfg.num_gnbs - i));
        std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(cfg.num_failed_gnbs));
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// First sample index at or after the fault time.
inline int fault_step(const ScenarioConfig& cfg) {
    return static_cast<int>(std::ceil(cfg.fault_time / cfg.sample_interval - 1e-9));
}

inline TelemetryLog run(const ScenarioConfig& cfg) {
    validate(cfg);
    const Topology topo = build_topology(cfg);

    Rng fault_rng(derive_seed(cfg.master_seed, {stream::faults}));
    TelemetryLog log;
    log.failed_gnbs = inject_faults(cfg, fault_rng);
    log.fault_time = cfg.fault_time;

    const int users = cfg.num_users;
    const int steps = cfg.samples_per_ue();
    const int first_fault_step = fault_step(cfg);

    std::vector<Rng> streams;
    streams.reserve(static_cast<std::size_t>(users));
    std::vector<bool> on_failed_gnb(static_cast<std::size_t>(users));
    for (int u = 0; u < users; ++u) {
        streams.emplace_back(derive_seed(cfg.master_seed, {stream::telemetry, static_cast<std::uint64_t>(u)}));
        int g = topo.serving_gnb[static_cast<std::size_t>(u)];
        on_failed_gnb[static_cast<std::size_t>(u)] =
            std::binary_search(log.failed_gnbs.begin(), log.failed_gnbs.end(), g);
    }

    std::vector<std::optional<double>> prev_delay(static_cast<std::size_t>(users));
    log.records.reserve(static_cast<std::size_t>(users) * static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        const double t = k * cfg.sample_interval;
        for (int u = 0; u < users; ++u) {
            const auto ui = static_cast<std::size_t>(u);
            const bool faulted = on_failed_gnb[ui] && k >= first_fault_step;
            TelemetryRecord rec = faulted ? sample_fault_kpis(u, topo, cfg.channel, t, k, prev_delay[ui], streams[ui])
                                          : sample_kpis(u, topo, cfg.channel, t, prev_delay[ui], streams[ui]);
            prev_delay[ui] = rec.delay_ms;
            log.records.push_back(rec);
        }
    }
    return log;
}

inline constexpr const char* kTelemetryHeader = "time,ue_id,gnb_id,sinr_db,jitter_ms,delay_ms,tb_size_bytes";

inline void write_telemetry_csv(const TelemetryLog& log, std::ostream& out) {
    out << kTelemetryHeader << '\n';
    char buf[256];
    for (const auto& r : log.records) {
        std::snprintf(buf, sizeof buf, "%.6f,%d,%d,%.6f,%.6f,%.6f,%.6f\n", r.time, r.ue_id, r.gnb_id, r.sinr_db,
                      r.jitter_ms, r.delay_ms, r.tb_size_bytes);
        out << buf;
    }
}

inline void export_csv(const TelemetryLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_telemetry_csv(log, out);
    if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a telemetry CSV back into records (fault metadata is not part of
/// the CSV and is left empty).
inline std::vector<TelemetryRecord> read_telemetry_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kTelemetryHeader) {
        throw ParseError(path.string() + ": unexpected telemetry header");
    }
    std::vector<TelemetryRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TelemetryRecord r;
        if (std::sscanf(line.c_str(), "%lf,%d,%d,%lf,%lf,%lf,%lf", &r.time, &r.ue_id, &r.gnb_id, &r.sinr_db,
                        &r.jitter_ms, &r.delay_ms, &r.tb_size_bytes) != 7) {
            throw ParseError(path.string() + ": malformed row: " + line);
        }
        out.push_back(r);
    }
    return out;
}

inline nlohmann::json fault_summary(const TelemetryLog& log) {
    return {{"fault_time", log.fault_time}, {"failed_gnbs", log.failed_gnbs}};
}

}  // namespace fedpm
