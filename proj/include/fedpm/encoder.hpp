#pragma once

// Windowing, feature extraction, threshold labeling and per-gNB datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedpm/config.hpp"
#include "fedpm/netsim.hpp"
#include "fedpm/rng.hpp"
#include "fedpm/samples.hpp"

namespace fedpm {

inline constexpr std::size_t kNumKpis = 4;
inline constexpr std::size_t kNumFeatures = 12;
inline constexpr std::size_t kNumLabels = 4;

/// Label / KPI order used everywhere: sinr, jitter, delay, tbSize.
inline constexpr std::array<const char*, kNumLabels> kLabelNames{"sinr", "jitter", "delay", "tbsize"};

using FeatureVector = std::array<double, kNumFeatures>;
using LabelVector = std::array<int, kNumLabels>;

struct RawWindow {
    int ue_id = 0;
    int gnb_id = 0;
    std::vector<TelemetryRecord> records;
};

struct LabeledWindow {
    int gnb_id = 0;
    int ue_id = 0;
    double start_time = 0.0;
    FeatureVector features{};
    LabelVector labels{};
};

struct Normalization {
    FeatureVector mean{};
    FeatureVector stddev{};

    static Normalization identity() {
        Normalization n;
        n.stddev.fill(1.0);
        return n;
    }

    FeatureVector apply(const FeatureVector& f) const {
        FeatureVector out;
        for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = (f[i] - mean[i]) / stddev[i];
        return out;
    }
};

struct Dataset {
    std::vector<LabeledWindow> windows;
    Normalization normalization = Normalization::identity();

    std::size_t size() const { return windows.size(); }
    bool empty() const { return windows.empty(); }
};

/// Per UE, consecutive non-overlapping chunks of W records; a trailing
/// remainder shorter than W is dropped. Output is ordered by (ue_id, time).
inline std::vector<RawWindow> make_windows(const TelemetryLog& log, int window_len) {
    if (window_len < 2) throw std::invalid_argument("make_windows: window length must be >= 2");
    std::map<int, std::vector<TelemetryRecord>> per_ue;
    for (const auto& r : log.records) per_ue[r.ue_id].push_back(r);

    const auto w = static_cast<std::size_t>(window_len);
    std::vector<RawWindow> out;
    for (auto& [ue, recs] : per_ue) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const TelemetryRecord& a, const TelemetryRecord& b) { return a.time < b.time; });
        for (std::size_t start = 0; start + w <= recs.size(); start += w) {
            RawWindow win;
            win.ue_id = ue;
            win.gnb_id = recs[start].gnb_id;
            win.records.assign(recs.begin() + static_cast<std::ptrdiff_t>(start),
                               recs.begin() + static_cast<std::ptrdiff_t>(start + w));
            out.push_back(std::move(win));
        }
    }
    return out;
}

namespace detail {
inline double kpi(const TelemetryRecord& r, std::size_t k) {
    switch (k) {
        case 0: return r.sinr_db;
        case 1: return r.jitter_ms;
        case 2: return r.delay_ms;
        default: return r.tb_size_bytes;
    }
}

inline std::array<double, kNumKpis> kpi_means(const std::vector<TelemetryRecord>& recs) {
    std::array<double, kNumKpis> sum{};
    for (const auto& r : recs) {
        for (std::size_t k = 0; k < kNumKpis; ++k) sum[k] += kpi(r, k);
    }
    for (auto& s : sum) s /= static_cast<double>(recs.size());
    return sum;
}
}  // namespace detail

/// {mean, last, slope per second} for each KPI, KPI-major.
inline FeatureVector extract_features(const RawWindow& window) {
    const auto& recs = window.records;
    if (recs.size() < 2) throw std::invalid_argument("extract_features: window needs at least 2 records");
    const auto means = detail::kpi_means(recs);
    const double span = recs.back().time - recs.front().time;
    FeatureVector f{};
    for (std::size_t k = 0; k < kNumKpis; ++k) {
        const double first = detail::kpi(recs.front(), k);
        const double last = detail::kpi(recs.back(), k);
        f[3 * k + 0] = means[k];
        f[3 * k + 1] = last;
        f[3 * k + 2] = span > 0.0 ? (last - first) / span : 0.0;
    }
    return f;
}

/// Window-mean threshold test, strict comparisons.
inline LabelVector label_window(const RawWindow& window, const ThresholdSet& th) {
    if (window.records.empty()) throw std::invalid_argument("label_window: empty window");
    const auto m = detail::kpi_means(window.records);
    return {m[0] < th.sinr_db_min ? 1 : 0, m[1] > th.jitter_ms_max ? 1 : 0, m[2] > th.delay_ms_max ? 1 : 0,
            m[3] < th.tb_bytes_min ? 1 : 0};
}

inline std::vector<LabeledWindow> encode_windows(const TelemetryLog& log, int window_len, const ThresholdSet& th) {
    std::vector<LabeledWindow> out;
    for (const auto& w : make_windows(log, window_len)) {
        out.push_back({w.gnb_id, w.ue_id, w.records.front().time, extract_features(w), label_window(w, th)});
    }
    return out;
}

/// Population z-score statistics; std floored at 1e-9.
inline Normalization fit_normalization(const std::vector<LabeledWindow>& windows) {
    Normalization n;
    if (windows.empty()) return Normalization::identity();
    const auto count = static_cast<double>(windows.size());
    for (const auto& w : windows) {
        for (std::size_t i = 0; i < kNumFeatures; ++i) n.mean[i] += w.features[i];
    }
    for (auto& m : n.mean) m /= count;
    FeatureVector var{};
    for (const auto& w : windows) {
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            const double d = w.features[i] - n.mean[i];
            var[i] += d * d;
        }
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) n.stddev[i] = std::max(std::sqrt(var[i] / count), 1e-9);
    return n;
}

/// Seeded shuffle, then the first ceil(f*N) windows train and the rest test.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
    }
    if (ds.empty()) throw std::invalid_argument("split: empty dataset");
    const std::size_t n = ds.size();
    const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
    if (n_train == 0 || n_train >= n) {
        throw std::invalid_argument("split: train or test side would be empty (N=" + std::to_string(n) + ")");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    Dataset train, test;
    train.normalization = test.normalization = ds.normalization;
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? train : test).windows.push_back(ds.windows[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

struct ClientData {
    Dataset train;
    Dataset test;
};

struct PartitionedData {
    std::map<int, Dataset> per_gnb;      // every window of each gNB
    std::map<int, ClientData> clients;   // per-gNB train/test split
    Dataset pooled;                      // concatenation in ascending gNB order
    Dataset pooled_train;
    Dataset pooled_test;
    Normalization normalization;
};

/// Groups encoded windows by serving gNB, splits each group, and fits one
/// normalization on the pooled training windows that every dataset shares.
inline PartitionedData build_datasets(const std::vector<LabeledWindow>& windows, const ScenarioConfig& cfg) {
    PartitionedData out;
    for (int g = 0; g < cfg.num_gnbs; ++g) out.per_gnb[g];
    for (const auto& w : windows) out.per_gnb[w.gnb_id].windows.push_back(w);
    for (const auto& [g, ds] : out.per_gnb) {
        if (ds.empty()) {
            throw std::runtime_error("build_datasets: gNB " + std::to_string(g) + " has no windows");
        }
    }

    for (const auto& [g, ds] : out.per_gnb) {
        auto [train, test] = split(ds, cfg.train_fraction,
                                   derive_seed(cfg.master_seed, {stream::split, static_cast<std::uint64_t>(g)}));
        out.clients[g] = ClientData{std::move(train), std::move(test)};
    }
    for (const auto& [g, c] : out.clients) {
        out.pooled_train.windows.insert(out.pooled_train.windows.end(), c.train.windows.begin(), c.train.windows.end());
        out.pooled_test.windows.insert(out.pooled_test.windows.end(), c.test.windows.begin(), c.test.windows.end());
    }
    for (const auto& [g, ds] : out.per_gnb) {
        out.pooled.windows.insert(out.pooled.windows.end(), ds.windows.begin(), ds.windows.end());
    }

    out.normalization = fit_normalization(out.pooled_train.windows);
    auto share = [&](Dataset& d) { d.normalization = out.normalization; };
    share(out.pooled);
    share(out.pooled_train);
    share(out.pooled_test);
    for (auto& [g, d] : out.per_gnb) share(d);
    for (auto& [g, c] : out.clients) {
        share(c.train);
        share(c.test);
    }
    return out;
}

inline PartitionedData build_datasets(const TelemetryLog& log, const ScenarioConfig& cfg) {
    return build_datasets(encode_windows(log, cfg.window_len, cfg.thresholds), cfg);
}

/// Normalized inputs and {0,1} targets ready for training.
inline Samples to_samples(const Dataset& ds) {
    Samples s(kNumFeatures, kNumLabels);
    s.x.reserve(ds.size() * kNumFeatures);
    s.y.reserve(ds.size() * kNumLabels);
    for (const auto& w : ds.windows) {
        const auto x = ds.normalization.apply(w.features);
        std::array<double, kNumLabels> y{};
        for (std::size_t j = 0; j < kNumLabels; ++j) y[j] = w.labels[j];
        s.push_back(x, y);
    }
    return s;
}

inline std::string dataset_csv_header() {
    std::string h = "gnb_id,ue_id,start_time";
    for (std::size_t i = 0; i < kNumFeatures; ++i) h += ",f" + std::to_string(i);
    for (std::size_t j = 0; j < kNumLabels; ++j) h += ",y" + std::to_string(j);
    return h;
}

/// Raw (unnormalized) features, 6 decimal places.
inline void write_dataset_csv(const Dataset& ds, std::ostream& out) {
    out << dataset_csv_header() << '\n';
    char buf[64];
    for (const auto& w : ds.windows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f", w.gnb_id, w.ue_id, w.start_time);
        out << buf;
        for (double f : w.features) {
            std::snprintf(buf, sizeof buf, ",%.6f", f);
            out << buf;
        }
        for (int y : w.labels) out << ',' << y;
        out << '\n';
    }
}

inline void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_dataset_csv(ds, out);
    if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json to_json(const Normalization& n) {
    return {{"mean", n.mean}, {"std", n.stddev}};
}

}  // namespace fedpm
