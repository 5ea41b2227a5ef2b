#pragma once

// Dense ReLU network with sigmoid outputs, binary cross-entropy and Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpm/config.hpp"
#include "fedpm/rng.hpp"
#include "fedpm/samples.hpp"

namespace fedpm {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

    double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
    double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
};

/// Network weights. Also used as the gradient and Adam-moment container,
/// since those mirror the parameter shapes exactly.
struct ModelParams {
    std::vector<DenseLayer> layers;

    static ModelParams zeros(const ModelConfig& cfg) {
        ModelParams p;
        std::size_t prev = static_cast<std::size_t>(cfg.input_dim);
        for (int h : cfg.hidden_dims) {
            p.layers.emplace_back(prev, static_cast<std::size_t>(h));
            prev = static_cast<std::size_t>(h);
        }
        p.layers.emplace_back(prev, static_cast<std::size_t>(cfg.output_dim));
        return p;
    }

    static ModelParams zeros_like(const ModelParams& other) {
        ModelParams p;
        for (const auto& l : other.layers) p.layers.emplace_back(l.in, l.out);
        return p;
    }

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    /// Parameter tensors in a fixed order: W1, b1, W2, b2, ...
    std::vector<std::span<double>> tensors() {
        std::vector<std::span<double>> t;
        for (auto& l : layers) {
            t.emplace_back(l.weights);
            t.emplace_back(l.bias);
        }
        return t;
    }
    std::vector<std::span<const double>> tensors() const {
        std::vector<std::span<const double>> t;
        for (const auto& l : layers) {
            t.emplace_back(l.weights);
            t.emplace_back(l.bias);
        }
        return t;
    }

    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size() + l.bias.size();
        return n;
    }

    bool same_shape(const ModelParams& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].in != other.layers[i].in || layers[i].out != other.layers[i].out) return false;
        }
        return true;
    }

    bool operator==(const ModelParams& other) const {
        if (!same_shape(other)) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].weights != other.layers[i].weights || layers[i].bias != other.layers[i].bias) return false;
        }
        return true;
    }

    /// Flattened copy in tensors() order.
    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(num_parameters());
        for (auto t : tensors()) flat.insert(flat.end(), t.begin(), t.end());
        return flat;
    }
};

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;

    static AdamState fresh(const ModelParams& p) {
        return {ModelParams::zeros_like(p), ModelParams::zeros_like(p), 0};
    }
};

/// Glorot-uniform weights, zero biases.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    ModelParams p = ModelParams::zeros(cfg);
    Rng rng(seed);
    for (auto& l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        for (auto& w : l.weights) w = rng.uniform(-limit, limit);
    }
    return p;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace detail {

// Keeps probabilities strictly inside (0, 1) even when the logit saturates.
inline double open_unit(double p) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::clamp(p, lo, hi);
}

// Pre-activations and activations of every layer for one input.
struct Trace {
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> a;  // a[0] is the input
};

inline void forward_trace(const ModelParams& p, std::span<const double> x, Trace& tr) {
    const std::size_t n_layers = p.layers.size();
    tr.z.resize(n_layers);
    tr.a.resize(n_layers + 1);
    tr.a[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = p.layers[l];
        const auto& in = tr.a[l];
        auto& z = tr.z[l];
        auto& a = tr.a[l + 1];
        z.resize(layer.out);
        a.resize(layer.out);
        const bool last = l + 1 == n_layers;
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double* row = layer.weights.data() + r * layer.in;
            double s = layer.bias[r];
            for (std::size_t c = 0; c < layer.in; ++c) s += row[c] * in[c];
            z[r] = s;
            a[r] = last ? open_unit(sigmoid(s)) : std::max(s, 0.0);
        }
    }
}

}  // namespace detail

inline std::vector<double> forward(const ModelParams& p, std::span<const double> x) {
    if (p.layers.empty() || x.size() != p.input_dim()) throw std::invalid_argument("forward: dimension mismatch");
    detail::Trace tr;
    detail::forward_trace(p, x, tr);
    return tr.a.back();
}

/// Mean binary cross-entropy over the label vector, probabilities clamped to
/// [1e-12, 1 - 1e-12].
inline double bce_loss(std::span<const double> probs, std::span<const double> labels) {
    if (probs.size() != labels.size() || probs.empty()) throw std::invalid_argument("bce_loss: dimension mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double p = std::clamp(probs[j], 1e-12, 1.0 - 1e-12);
        total -= labels[j] * std::log(p) + (1.0 - labels[j]) * std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

// BCE evaluated from the logit: max(z,0) - z*y + log1p(exp(-|z|)).
inline double bce_from_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct GradientResult {
    ModelParams grad;
    double loss = 0.0;
};

/// Analytic gradient of the mean batch BCE over the selected rows.
inline GradientResult backward(const ModelParams& p, const Samples& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw std::invalid_argument("backward: empty batch");
    if (data.input_dim != p.input_dim() || data.output_dim != p.output_dim()) {
        throw std::invalid_argument("backward: dimension mismatch");
    }
    GradientResult res{ModelParams::zeros_like(p), 0.0};
    const std::size_t n_layers = p.layers.size();
    const double scale = 1.0 / (static_cast<double>(rows.size()) * static_cast<double>(p.output_dim()));

    detail::Trace tr;
    std::vector<double> delta, prev_delta;
    for (std::size_t row : rows) {
        const auto x = data.input(row);
        const auto y = data.target(row);
        detail::forward_trace(p, x, tr);

        const auto& z_out = tr.z.back();
        delta.resize(z_out.size());
        for (std::size_t j = 0; j < z_out.size(); ++j) {
            res.loss += bce_from_logit(z_out[j], y[j]) * scale;
            delta[j] = (sigmoid(z_out[j]) - y[j]) * scale;
        }

        for (std::size_t l = n_layers; l-- > 0;) {
            const auto& layer = p.layers[l];
            auto& g = res.grad.layers[l];
            const auto& in = tr.a[l];
            for (std::size_t r = 0; r < layer.out; ++r) {
                const double d = delta[r];
                if (d == 0.0) continue;
                double* grow = g.weights.data() + r * layer.in;
                for (std::size_t c = 0; c < layer.in; ++c) grow[c] += d * in[c];
                g.bias[r] += d;
            }
            if (l == 0) break;
            prev_delta.assign(layer.in, 0.0);
            for (std::size_t r = 0; r < layer.out; ++r) {
                const double d = delta[r];
                if (d == 0.0) continue;
                const double* wrow = layer.weights.data() + r * layer.in;
                for (std::size_t c = 0; c < layer.in; ++c) prev_delta[c] += wrow[c] * d;
            }
            const auto& z_prev = tr.z[l - 1];
            for (std::size_t c = 0; c < layer.in; ++c) {
                if (z_prev[c] <= 0.0) prev_delta[c] = 0.0;
            }
            std::swap(delta, prev_delta);
        }
    }
    return res;
}

inline GradientResult backward(const ModelParams& p, const Samples& data) {
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return backward(p, data, rows);
}

inline void adam_step(ModelParams& p, const ModelParams& g, AdamState& s, const ModelConfig& cfg) {
    if (!p.same_shape(g) || !p.same_shape(s.m) || !p.same_shape(s.v)) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    s.step += 1;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
    auto params = p.tensors();
    auto grads = g.tensors();
    auto m = s.m.tensors();
    auto v = s.v.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double gi = grads[t][i];
            m[t][i] = b1 * m[t][i] + (1.0 - b1) * gi;
            v[t][i] = b2 * v[t][i] + (1.0 - b2) * gi * gi;
            const double m_hat = m[t][i] / c1;
            const double v_hat = v[t][i] / c2;
            params[t][i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
        }
    }
}

/// Row visiting order for one epoch; depends only on (n, seed, epoch index).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {stream::epoch_shuffle, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

/// Mean per-sample BCE of the model on a dataset.
inline double dataset_loss(const ModelParams& p, const Samples& data) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) total += bce_loss(forward(p, data.input(i)), data.target(i));
    return total / static_cast<double>(data.size());
}

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_losses;  // sample-weighted mean batch loss per epoch

    double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

/// Mini-batch Adam from a fresh optimizer state. Epoch e uses the shuffle of
/// global epoch index (epoch_offset + e), so a run split into phases sees the
/// same row order as one continuous run.
inline TrainResult train_local(ModelParams p, const Samples& data, int epochs, const ModelConfig& cfg,
                               std::uint64_t seed, std::int64_t epoch_offset = 0) {
    if (data.empty()) throw std::invalid_argument("train_local: empty training set");
    TrainResult res;
    if (epochs <= 0) {
        res.params = std::move(p);
        return res;
    }
    AdamState state = AdamState::fresh(p);
    const std::size_t n = data.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int e = 0; e < epochs; ++e) {
        const auto order = epoch_order(n, seed, epoch_offset + e);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            std::span<const std::size_t> rows(order.data() + start, len);
            auto g = backward(p, data, rows);
            epoch_loss += g.loss * static_cast<double>(len);
            adam_step(p, g.grad, state, cfg);
        }
        res.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    res.params = std::move(p);
    return res;
}

// --- checkpoint I/O -------------------------------------------------------

inline nlohmann::json checkpoint_json(const ModelParams& p, const ModelConfig& cfg) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : p.layers) {
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
    }
    return {
        {"format", 1},
        {"config",
         {{"input_dim", cfg.input_dim},
          {"hidden_dims", cfg.hidden_dims},
          {"output_dim", cfg.output_dim},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_eps", cfg.adam_eps}}},
        {"layers", layers},
    };
}

inline ModelParams params_from_checkpoint(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != 1) throw std::runtime_error("checkpoint: unsupported format");
    ModelParams p;
    for (const auto& l : j.at("layers")) {
        DenseLayer layer(l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>());
        layer.weights = l.at("weights").get<std::vector<double>>();
        layer.bias = l.at("bias").get<std::vector<double>>();
        if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
            throw std::runtime_error("checkpoint: layer shape mismatch");
        }
        if (!p.layers.empty() && p.layers.back().out != layer.in) {
            throw std::runtime_error("checkpoint: layers do not chain");
        }
        p.layers.push_back(std::move(layer));
    }
    return p;
}

inline void save_checkpoint(const ModelParams& p, const ModelConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << checkpoint_json(p, cfg).dump(1) << '\n';
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return params_from_checkpoint(nlohmann::json::parse(in));
}

}  // namespace fedpm
