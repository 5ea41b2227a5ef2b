#pragma once

// Scenario loading (strict JSON) and deterministic deployment of gNBs and UEs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpm/config.hpp"
#include "fedpm/rng.hpp"

namespace fedpm {

/// Malformed input document (syntax, wrong types, unknown keys).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read, or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class Placement { near, far };

struct Topology {
    std::vector<Point> gnb_positions;
    std::vector<Point> user_positions;
    std::vector<int> serving_gnb;
    std::vector<Placement> placement;
    // Sampled UE to serving-gNB distance; positions are derived from it.
    std::vector<double> link_distance_m;

    int num_gnbs() const { return static_cast<int>(gnb_positions.size()); }
    int num_users() const { return static_cast<int>(user_positions.size()); }
};

namespace detail {

// Walks a JSON object, remembering which keys were consumed so leftovers can
// be rejected.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ParseError(where("") + "expected a JSON object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const nlohmann::json& at(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ParseError(where(key) + "missing required field");
        return j_.at(key);
    }

    void read(const std::string& key, double& out, bool required = false) {
        if (!required && !has(key)) return;
        const auto& v = at(key);
        if (!v.is_number()) throw ParseError(where(key) + "expected a number");
        out = v.get<double>();
    }

    void read(const std::string& key, int& out, bool required = false) {
        if (!required && !has(key)) return;
        const auto& v = at(key);
        if (!v.is_number_integer()) throw ParseError(where(key) + "expected an integer");
        auto raw = v.get<std::int64_t>();
        if (raw < INT32_MIN || raw > INT32_MAX) throw ParseError(where(key) + "integer out of range");
        out = static_cast<int>(raw);
    }

    void read(const std::string& key, std::uint64_t& out, bool required = false) {
        if (!required && !has(key)) return;
        const auto& v = at(key);
        if (!v.is_number_unsigned()) throw ParseError(where(key) + "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.contains(key)) throw ParseError(where(key) + "unknown field");
        }
    }

    std::string where(const std::string& key) const {
        std::string path = prefix_.empty() ? key : (key.empty() ? prefix_ : prefix_ + "." + key);
        return path.empty() ? "config: " : path + ": ";
    }

private:
    const nlohmann::json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Builds a config from JSON. Unknown keys and type mismatches raise
/// ParseError; invariant violations raise ConfigError.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
    ScenarioConfig cfg;
    detail::StrictObject top(j, "");
    top.read("num_gnbs", cfg.num_gnbs, true);
    top.read("num_users", cfg.num_users, true);
    top.read("duration", cfg.duration, true);
    top.read("fault_time", cfg.fault_time, true);
    top.read("num_failed_gnbs", cfg.num_failed_gnbs, true);
    top.read("master_seed", cfg.master_seed, true);
    top.read("sample_interval", cfg.sample_interval);
    top.read("area_diameter", cfg.area_diameter);
    top.read("near_range", cfg.near_range);
    top.read("far_range", cfg.far_range);
    top.read("window_len", cfg.window_len);
    top.read("train_fraction", cfg.train_fraction);

    if (top.has("layout")) {
        const auto& v = top.at("layout");
        if (v == "circular") {
            cfg.layout = Layout::circular;
        } else if (v == "grid") {
            cfg.layout = Layout::grid;
        } else {
            throw ParseError("layout: expected \"circular\" or \"grid\"");
        }
    }

    if (top.has("model")) {
        detail::StrictObject m(top.at("model"), "model");
        m.read("input_dim", cfg.model.input_dim);
        m.read("output_dim", cfg.model.output_dim);
        if (m.has("hidden_dims")) {
            const auto& h = m.at("hidden_dims");
            if (!h.is_array()) throw ParseError("model.hidden_dims: expected an array");
            cfg.model.hidden_dims.clear();
            for (const auto& e : h) {
                if (!e.is_number_integer()) throw ParseError("model.hidden_dims: expected integers");
                cfg.model.hidden_dims.push_back(e.get<int>());
            }
        }
        m.read("learning_rate", cfg.model.learning_rate);
        m.read("batch_size", cfg.model.batch_size);
        m.read("adam_beta1", cfg.model.adam_beta1);
        m.read("adam_beta2", cfg.model.adam_beta2);
        m.read("adam_eps", cfg.model.adam_eps);
        m.finish();
    }

    if (top.has("fed")) {
        detail::StrictObject f(top.at("fed"), "fed");
        f.read("rounds", cfg.fed.rounds);
        f.read("local_epochs", cfg.fed.local_epochs);
        f.read("centralized_epochs", cfg.fed.centralized_epochs);
        f.read("participation", cfg.fed.participation);
        f.finish();
    }

    if (top.has("thresholds")) {
        detail::StrictObject t(top.at("thresholds"), "thresholds");
        t.read("sinr_db_min", cfg.thresholds.sinr_db_min);
        t.read("jitter_ms_max", cfg.thresholds.jitter_ms_max);
        t.read("delay_ms_max", cfg.thresholds.delay_ms_max);
        t.read("tb_bytes_min", cfg.thresholds.tb_bytes_min);
        t.finish();
    }

    if (top.has("channel")) {
        auto& c = cfg.channel;
        detail::StrictObject o(top.at("channel"), "channel");
        o.read("ref_sinr_db", c.ref_sinr_db);
        o.read("ref_distance_m", c.ref_distance_m);
        o.read("path_loss_exponent", c.path_loss_exponent);
        o.read("shadowing_sigma_db", c.shadowing_sigma_db);
        o.read("base_delay_ms", c.base_delay_ms);
        o.read("delay_distance_coeff", c.delay_distance_coeff);
        o.read("delay_noise_sigma_ms", c.delay_noise_sigma_ms);
        o.read("tb_max_bytes", c.tb_max_bytes);
        if (o.has("tb_sinr_cap_db")) {
            double cap = 0.0;
            o.read("tb_sinr_cap_db", cap);
            c.tb_sinr_cap_db = cap;
        }
        o.read("fault_sinr_db", c.fault_sinr_db);
        o.read("fault_delay_ms", c.fault_delay_ms);
        o.read("fault_jitter_ms", c.fault_jitter_ms);
        o.read("fault_tb_bytes", c.fault_tb_bytes);
        o.finish();
    }

    top.finish();
    validate(cfg);
    return cfg;
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
    nlohmann::json channel = {
        {"ref_sinr_db", cfg.channel.ref_sinr_db},
        {"ref_distance_m", cfg.channel.ref_distance_m},
        {"path_loss_exponent", cfg.channel.path_loss_exponent},
        {"shadowing_sigma_db", cfg.channel.shadowing_sigma_db},
        {"base_delay_ms", cfg.channel.base_delay_ms},
        {"delay_distance_coeff", cfg.channel.delay_distance_coeff},
        {"delay_noise_sigma_ms", cfg.channel.delay_noise_sigma_ms},
        {"tb_max_bytes", cfg.channel.tb_max_bytes},
        {"fault_sinr_db", cfg.channel.fault_sinr_db},
        {"fault_delay_ms", cfg.channel.fault_delay_ms},
        {"fault_jitter_ms", cfg.channel.fault_jitter_ms},
        {"fault_tb_bytes", cfg.channel.fault_tb_bytes},
    };
    if (cfg.channel.tb_sinr_cap_db) channel["tb_sinr_cap_db"] = *cfg.channel.tb_sinr_cap_db;

    return {
        {"num_gnbs", cfg.num_gnbs},
        {"num_users", cfg.num_users},
        {"duration", cfg.duration},
        {"sample_interval", cfg.sample_interval},
        {"area_diameter", cfg.area_diameter},
        {"near_range", cfg.near_range},
        {"far_range", cfg.far_range},
        {"layout", cfg.layout == Layout::circular ? "circular" : "grid"},
        {"fault_time", cfg.fault_time},
        {"num_failed_gnbs", cfg.num_failed_gnbs},
        {"master_seed", cfg.master_seed},
        {"window_len", cfg.window_len},
        {"train_fraction", cfg.train_fraction},
        {"model",
         {{"input_dim", cfg.model.input_dim},
          {"hidden_dims", cfg.model.hidden_dims},
          {"output_dim", cfg.model.output_dim},
          {"learning_rate", cfg.model.learning_rate},
          {"batch_size", cfg.model.batch_size},
          {"adam_beta1", cfg.model.adam_beta1},
          {"adam_beta2", cfg.model.adam_beta2},
          {"adam_eps", cfg.model.adam_eps}}},
        {"fed",
         {{"rounds", cfg.fed.rounds},
          {"local_epochs", cfg.fed.local_epochs},
          {"centralized_epochs", cfg.fed.centralized_epochs},
          {"participation", cfg.fed.participation}}},
        {"thresholds",
         {{"sinr_db_min", cfg.thresholds.sinr_db_min},
          {"jitter_ms_max", cfg.thresholds.jitter_ms_max},
          {"delay_ms_max", cfg.thresholds.delay_ms_max},
          {"tb_bytes_min", cfg.thresholds.tb_bytes_min}}},
        {"channel", channel},
    };
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// FNV-1a over the canonical JSON form (keys sorted, shortest round-trip
/// doubles), rendered as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& cfg) {
    const std::string canonical = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

namespace detail {

inline std::vector<Point> place_gnbs(const ScenarioConfig& cfg) {
    const int b = cfg.num_gnbs;
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(b));
    if (cfg.layout == Layout::circular) {
        if (b == 1) return {Point{}};
        const double radius = cfg.area_diameter / 2.0;
        for (int k = 0; k < b; ++k) {
            double angle = 2.0 * std::numbers::pi * k / b;
            out.push_back({radius * std::cos(angle), radius * std::sin(angle)});
        }
        return out;
    }
    // Grid: smallest k x k grid with k*k >= B, cell centers inside the square
    // inscribed in the deployment circle, filled row-major.
    int side = 1;
    while (side * side < b) ++side;
    const double extent = cfg.area_diameter / std::numbers::sqrt2;
    const double cell = extent / side;
    for (int k = 0; k < b; ++k) {
        int row = k / side;
        int col = k % side;
        out.push_back({-extent / 2.0 + (col + 0.5) * cell, -extent / 2.0 + (row + 0.5) * cell});
    }
    return out;
}

}  // namespace detail

/// Deploys gNBs and UEs. UE i is served by gNB i mod B; the first ceil(U/2)
/// UEs are placed within near_range of their gNB, the rest in
/// (near_range, far_range]. Pure in (cfg, cfg.master_seed).
inline Topology build_topology(const ScenarioConfig& cfg) {
    Topology topo;
    topo.gnb_positions = detail::place_gnbs(cfg);

    Rng rng(derive_seed(cfg.master_seed, {stream::topology}));
    const auto users = static_cast<std::size_t>(cfg.num_users);
    topo.user_positions.reserve(users);
    topo.serving_gnb.reserve(users);
    topo.placement.reserve(users);
    topo.link_distance_m.reserve(users);

    for (int i = 0; i < cfg.num_users; ++i) {
        const int gnb = i % cfg.num_gnbs;
        const bool is_near = 2 * i < cfg.num_users;
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        const double frac = 1.0 - rng.uniform();  // (0, 1]
        const double r = is_near ? cfg.near_range * frac
                                 : cfg.near_range + (cfg.far_range - cfg.near_range) * frac;
        const Point g = topo.gnb_positions[static_cast<std::size_t>(gnb)];
        topo.user_positions.push_back({g.x + r * std::cos(angle), g.y + r * std::sin(angle)});
        topo.serving_gnb.push_back(gnb);
        topo.placement.push_back(is_near ? Placement::near : Placement::far);
        topo.link_distance_m.push_back(r);
    }
    return topo;
}

}  // namespace fedpm
