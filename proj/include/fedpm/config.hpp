#pragma once

// Experiment configuration types shared by every stage of the pipeline.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpm {

/// Raised when a configuration violates an invariant. `field()` names the
/// offending key using its config-file spelling.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

enum class Layout { circular, grid };

/// Table-1 style KPI thresholds. A label fires on strict violation only.
struct ThresholdSet {
    double sinr_db_min = 20.0;
    double jitter_ms_max = 0.1;
    double delay_ms_max = 0.8;
    double tb_bytes_min = 500.0;
};

struct ModelConfig {
    int input_dim = 12;
    std::vector<int> hidden_dims{64, 32};
    int output_dim = 4;
    double learning_rate = 1e-3;
    int batch_size = 32;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct FedConfig {
    int rounds = 50;
    int local_epochs = 10;
    int centralized_epochs = 10;
    double participation = 1.0;
};

/// Parametric link model standing in for a full mmWave stack.
struct ChannelModel {
    double ref_sinr_db = 50.0;
    double ref_distance_m = 10.0;
    double path_loss_exponent = 3.0;
    double shadowing_sigma_db = 2.0;
    double base_delay_ms = 0.3;
    double delay_distance_coeff = 0.0015;
    double delay_noise_sigma_ms = 0.05;
    double tb_max_bytes = 1500.0;
    // SINR at which the rate map saturates; ref_sinr_db when unset.
    std::optional<double> tb_sinr_cap_db;
    double fault_sinr_db = -5.0;
    double fault_delay_ms = 2.0;
    double fault_jitter_ms = 0.5;
    double fault_tb_bytes = 50.0;

    double sinr_cap_db() const { return tb_sinr_cap_db.value_or(ref_sinr_db); }

    /// Same model with every stochastic term switched off.
    ChannelModel noiseless() const {
        ChannelModel m = *this;
        m.shadowing_sigma_db = 0.0;
        m.delay_noise_sigma_ms = 0.0;
        return m;
    }
};

struct ScenarioConfig {
    int num_gnbs = 5;
    int num_users = 10;
    double duration = 2.0;
    double sample_interval = 0.01;
    double area_diameter = 200.0;
    double near_range = 10.0;
    double far_range = 300.0;
    Layout layout = Layout::circular;
    double fault_time = 0.5;
    int num_failed_gnbs = 1;
    std::uint64_t master_seed = 42;
    int window_len = 10;
    double train_fraction = 0.8;
    ModelConfig model;
    FedConfig fed;
    ThresholdSet thresholds;
    ChannelModel channel;

    /// Number of samples per UE on the grid t = 0, dt, 2dt, ... <= duration.
    int samples_per_ue() const {
        return static_cast<int>(std::floor(duration / sample_interval + 1e-9)) + 1;
    }
};

namespace detail {
inline void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
}
inline bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }
}  // namespace detail

inline void validate(const ThresholdSet& th) {
    using detail::require;
    require(detail::finite_positive(th.sinr_db_min), "thresholds.sinr_db_min", "must be positive");
    require(detail::finite_positive(th.jitter_ms_max), "thresholds.jitter_ms_max", "must be positive");
    require(detail::finite_positive(th.delay_ms_max), "thresholds.delay_ms_max", "must be positive");
    require(detail::finite_positive(th.tb_bytes_min), "thresholds.tb_bytes_min", "must be positive");
}

inline void validate(const ModelConfig& m) {
    using detail::require;
    require(m.input_dim > 0, "model.input_dim", "must be positive");
    require(m.output_dim > 0, "model.output_dim", "must be positive");
    for (int h : m.hidden_dims) require(h > 0, "model.hidden_dims", "every entry must be positive");
    require(detail::finite_positive(m.learning_rate), "model.learning_rate", "must be positive");
    require(m.batch_size > 0, "model.batch_size", "must be positive");
    require(m.adam_beta1 > 0.0 && m.adam_beta1 < 1.0, "model.adam_beta1", "must lie in (0, 1)");
    require(m.adam_beta2 > 0.0 && m.adam_beta2 < 1.0, "model.adam_beta2", "must lie in (0, 1)");
    require(detail::finite_positive(m.adam_eps), "model.adam_eps", "must be positive");
}

inline void validate(const FedConfig& f) {
    using detail::require;
    require(f.rounds >= 1, "fed.rounds", "must be >= 1");
    require(f.local_epochs >= 1, "fed.local_epochs", "must be >= 1");
    require(f.centralized_epochs >= 0, "fed.centralized_epochs", "must be >= 0");
    require(f.participation > 0.0 && f.participation <= 1.0, "fed.participation", "must lie in (0, 1]");
}

inline void validate(const ChannelModel& c) {
    using detail::require;
    require(detail::finite_positive(c.path_loss_exponent), "channel.path_loss_exponent", "must be positive");
    require(detail::finite_positive(c.ref_distance_m), "channel.ref_distance_m", "must be positive");
    require(c.shadowing_sigma_db >= 0.0, "channel.shadowing_sigma_db", "must be >= 0");
    require(c.delay_noise_sigma_ms >= 0.0, "channel.delay_noise_sigma_ms", "must be >= 0");
    require(detail::finite_positive(c.tb_max_bytes), "channel.tb_max_bytes", "must be positive");
    require(detail::finite_positive(c.base_delay_ms), "channel.base_delay_ms", "must be positive");
    require(c.delay_distance_coeff >= 0.0, "channel.delay_distance_coeff", "must be >= 0");
    require(detail::finite_positive(c.fault_delay_ms), "channel.fault_delay_ms", "must be positive");
    require(c.fault_jitter_ms >= 0.0, "channel.fault_jitter_ms", "must be >= 0");
    require(c.fault_tb_bytes >= 0.0, "channel.fault_tb_bytes", "must be >= 0");
}

inline void validate(const ScenarioConfig& cfg) {
    using detail::require;
    require(cfg.num_gnbs > 0, "num_gnbs", "must be positive");
    require(cfg.num_users > 0, "num_users", "must be positive");
    require(detail::finite_positive(cfg.duration), "duration", "must be positive");
    require(detail::finite_positive(cfg.sample_interval), "sample_interval", "must be positive");
    require(detail::finite_positive(cfg.area_diameter), "area_diameter", "must be positive");
    require(detail::finite_positive(cfg.near_range), "near_range", "must be positive");
    require(detail::finite_positive(cfg.far_range), "far_range", "must be positive");
    require(cfg.near_range < cfg.far_range, "near_range", "must be smaller than far_range");
    require(std::isfinite(cfg.fault_time) && cfg.fault_time >= 0.0 && cfg.fault_time <= cfg.duration,
            "fault_time", "must lie in [0, duration]");
    require(cfg.num_failed_gnbs >= 0, "num_failed_gnbs", "must be >= 0");
    require(cfg.num_failed_gnbs <= cfg.num_gnbs, "num_failed_gnbs", "must not exceed num_gnbs");
    require(cfg.window_len >= 2, "window_len", "must be >= 2");
    require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, "train_fraction", "must lie in (0, 1)");
    require(cfg.duration / cfg.sample_interval + 1e-9 >= 2.0 * cfg.window_len, "window_len",
            "duration / sample_interval must be at least 2 * window_len");
    validate(cfg.model);
    require(cfg.model.input_dim == 12, "model.input_dim", "must be 12 (window feature count)");
    require(cfg.model.output_dim == 4, "model.output_dim", "must be 4 (fault label count)");
    validate(cfg.fed);
    validate(cfg.thresholds);
    validate(cfg.channel);
}

}  // namespace fedpm
