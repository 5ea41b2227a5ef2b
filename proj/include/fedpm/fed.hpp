#pragma once

// Centralized and federated (FedAvg) training pipelines.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedpm/config.hpp"
#include "fedpm/encoder.hpp"
#include "fedpm/eval.hpp"
#include "fedpm/nn.hpp"
#include "fedpm/rng.hpp"
#include "fedpm/samples.hpp"

namespace fedpm {

/// What a client hands to the server: parameters and its sample count, never data.
struct ClientUpdate {
    int client_id = 0;
    ModelParams params;
    std::size_t num_samples = 0;
};

/// A gNB holding its private training windows.
class Client {
public:
    Client(int id, Samples train, std::uint64_t seed) : id_(id), train_(std::move(train)), seed_(seed) {
        if (train_.empty()) throw std::invalid_argument("Client: empty training set");
    }

    int id() const { return id_; }
    std::size_t num_samples() const { return train_.size(); }

    /// Copies the global model and trains it for local_epochs. Round r
    /// (0-based) continues the client's epoch-shuffle sequence at r * local_epochs.
    ClientUpdate local_update(const ModelParams& global, const ModelConfig& mc, int local_epochs, int round) const {
        auto res = train_local(global, train_, local_epochs, mc, seed_,
                               static_cast<std::int64_t>(round) * local_epochs);
        return {id_, std::move(res.params), train_.size()};
    }

    // Mutable access exists for audit tests only; the server never calls it.
    Samples& private_data() { return train_; }

private:
    int id_;
    Samples train_;
    std::uint64_t seed_;
};

namespace detail {

inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 2) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline std::vector<const ClientUpdate*> sorted_updates(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw std::invalid_argument("fedavg: empty update set");
    std::vector<const ClientUpdate*> sorted;
    for (const auto& u : updates) sorted.push_back(&u);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
    for (const auto* u : sorted) {
        if (u->num_samples == 0) throw std::invalid_argument("fedavg: client with zero samples");
        if (!u->params.same_shape(sorted.front()->params)) throw std::invalid_argument("fedavg: shape mismatch");
    }
    return sorted;
}

}  // namespace detail

/// n_k / sum(n), in ascending client_id order.
inline std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates) {
    const auto sorted = detail::sorted_updates(updates);
    double total = 0.0;
    for (const auto* u : sorted) total += static_cast<double>(u->num_samples);
    std::vector<double> w;
    for (const auto* u : sorted) w.push_back(static_cast<double>(u->num_samples) / total);
    return w;
}

/// Sample-weighted average of client parameters. Terms are ordered by
/// client_id and combined with pairwise summation, so the result does not
/// depend on the order of `updates`.
inline ModelParams fedavg(std::span<const ClientUpdate> updates) {
    const auto sorted = detail::sorted_updates(updates);
    const auto weights = aggregation_weights(updates);
    ModelParams out = ModelParams::zeros_like(sorted.front()->params);

    std::vector<std::vector<std::span<const double>>> client_tensors;
    for (const auto* u : sorted) client_tensors.push_back(u->params.tensors());

    auto dst = out.tensors();
    std::vector<double> terms(sorted.size());
    for (std::size_t t = 0; t < dst.size(); ++t) {
        for (std::size_t i = 0; i < dst[t].size(); ++i) {
            for (std::size_t k = 0; k < sorted.size(); ++k) terms[k] = weights[k] * client_tensors[k][t][i];
            dst[t][i] = detail::pairwise_sum(terms);
        }
    }
    return out;
}

enum class Execution { sequential, parallel };

struct RoundResult {
    ModelParams global;
    std::vector<ClientUpdate> updates;  // ascending client_id
};

/// Clients taking part in a round. With participation < 1 a seeded subset of
/// max(1, round(participation * K)) clients is drawn.
inline std::vector<std::size_t> select_clients(std::size_t num_clients, const FedConfig& fc, int round,
                                               std::uint64_t seed) {
    std::vector<std::size_t> idx(num_clients);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (fc.participation >= 1.0) return idx;
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fc.participation * static_cast<double>(num_clients))));
    Rng rng(derive_seed(seed, {stream::participation, static_cast<std::uint64_t>(round)}));
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(std::min(m, num_clients));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline RoundResult run_round(const ModelParams& global, std::span<const Client> clients, const ModelConfig& mc,
                             const FedConfig& fc, int round, std::uint64_t selection_seed,
                             Execution mode = Execution::sequential) {
    const auto selected = select_clients(clients.size(), fc, round, selection_seed);
    if (selected.empty()) throw std::invalid_argument("run_round: no clients selected");

    RoundResult res;
    if (mode == Execution::parallel) {
        std::vector<std::future<ClientUpdate>> pending;
        for (auto i : selected) {
            pending.push_back(std::async(std::launch::async, [&, i] {
                return clients[i].local_update(global, mc, fc.local_epochs, round);
            }));
        }
        for (auto& f : pending) res.updates.push_back(f.get());
    } else {
        for (auto i : selected) res.updates.push_back(clients[i].local_update(global, mc, fc.local_epochs, round));
    }
    std::stable_sort(res.updates.begin(), res.updates.end(),
                     [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
    res.global = fedavg(res.updates);
    return res;
}

struct RoundMetrics {
    int round = 0;  // 1-based
    Metrics metrics;
    double secs = 0.0;
};

using RoundHistory = std::vector<RoundMetrics>;

struct FederatedResult {
    ModelParams params;
    RoundHistory history;
};

/// Sequential FedAvg rounds; the global model is scored on `test` after each.
inline FederatedResult run_federated(ModelParams initial, std::span<const Client> clients, const Dataset& test,
                                     const ModelConfig& mc, const FedConfig& fc, std::uint64_t selection_seed,
                                     Execution mode = Execution::sequential,
                                     const std::function<void(const RoundMetrics&)>& on_round = {}) {
    validate(fc);
    if (clients.empty()) throw std::invalid_argument("run_federated: no clients");
    FederatedResult res{std::move(initial), {}};
    for (int r = 0; r < fc.rounds; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        auto round = run_round(res.params, clients, mc, fc, r, selection_seed, mode);
        res.params = std::move(round.global);
        RoundMetrics rm;
        rm.round = r + 1;
        rm.metrics = evaluate(res.params, test);
        rm.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (on_round) on_round(rm);
        res.history.push_back(std::move(rm));
    }
    return res;
}

struct CentralizedResult {
    ModelParams params;
    Metrics metrics;
    std::vector<double> epoch_losses;
};

inline CentralizedResult run_centralized(ModelParams initial, const Dataset& train, const Dataset& test,
                                         const ModelConfig& mc, const FedConfig& fc, std::uint64_t train_seed) {
    auto trained = train_local(std::move(initial), to_samples(train), fc.centralized_epochs, mc, train_seed);
    CentralizedResult res;
    res.metrics = evaluate(trained.params, test);
    res.params = std::move(trained.params);
    res.epoch_losses = std::move(trained.epoch_losses);
    return res;
}

inline constexpr const char* kRoundHistoryHeader =
    "round,test_loss,exact_match,prec_sinr,prec_jitter,prec_delay,prec_tbsize,secs";

/// Undefined precision is written as an empty cell. Wall-clock seconds are
/// written only when `with_timing` is set; otherwise the column is 0 so the
/// file is reproducible byte for byte.
inline void write_round_history_csv(const RoundHistory& history, std::ostream& out, bool with_timing) {
    out << kRoundHistoryHeader << '\n';
    char buf[64];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f", r.round, r.metrics.mean_loss, r.metrics.exact_match);
        out << buf;
        for (const auto& p : r.metrics.per_label_precision) {
            out << ',';
            if (p) {
                std::snprintf(buf, sizeof buf, "%.6f", *p);
                out << buf;
            }
        }
        std::snprintf(buf, sizeof buf, ",%.6f\n", with_timing ? r.secs : 0.0);
        out << buf;
    }
}

}  // namespace fedpm
