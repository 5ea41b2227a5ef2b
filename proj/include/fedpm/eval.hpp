#pragma once

#include <array>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpm/encoder.hpp"
#include "fedpm/nn.hpp"

namespace fedpm {

inline constexpr double kDecisionThreshold = 0.5;

struct LabelCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;

    long total() const { return tp + fp + fn + tn; }
    double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total()); }
    std::optional<double> precision() const {
        if (tp + fp == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(tp + fp);
    }

    bool operator==(const LabelCounts&) const = default;
};

struct Metrics {
    double exact_match = 0.0;
    std::array<std::optional<double>, kNumLabels> per_label_precision{};
    std::array<LabelCounts, kNumLabels> per_label_counts{};
    double mean_loss = 0.0;
    std::size_t num_windows = 0;

    bool operator==(const Metrics&) const = default;
};

inline LabelVector threshold_probs(std::span<const double> probs) {
    if (probs.size() != kNumLabels) throw std::invalid_argument("predict: expected 4 outputs");
    LabelVector out{};
    for (std::size_t j = 0; j < kNumLabels; ++j) out[j] = probs[j] >= kDecisionThreshold ? 1 : 0;
    return out;
}

/// Expects features already normalized with the dataset's statistics.
inline LabelVector predict(const ModelParams& p, std::span<const double> features) {
    return threshold_probs(forward(p, features));
}

/// Accumulates metrics from (truth, probability) pairs.
class MetricsAccumulator {
public:
    void add(const LabelVector& truth, std::span<const double> probs) {
        const auto pred = threshold_probs(probs);
        bool all = true;
        for (std::size_t j = 0; j < kNumLabels; ++j) {
            auto& c = counts_[j];
            const bool t = truth[j] == 1;
            const bool p = pred[j] == 1;
            if (p && t) ++c.tp;
            else if (p && !t) ++c.fp;
            else if (!p && t) ++c.fn;
            else ++c.tn;
            all = all && (t == p);
        }
        if (all) ++exact_;
        std::array<double, kNumLabels> y{};
        for (std::size_t j = 0; j < kNumLabels; ++j) y[j] = truth[j];
        loss_sum_ += bce_loss(probs, y);
        ++n_;
    }

    Metrics finish() const {
        if (n_ == 0) throw std::invalid_argument("evaluate: empty test set");
        Metrics m;
        m.num_windows = n_;
        m.exact_match = static_cast<double>(exact_) / static_cast<double>(n_);
        m.per_label_counts = counts_;
        for (std::size_t j = 0; j < kNumLabels; ++j) m.per_label_precision[j] = counts_[j].precision();
        m.mean_loss = loss_sum_ / static_cast<double>(n_);
        return m;
    }

private:
    std::array<LabelCounts, kNumLabels> counts_{};
    std::size_t exact_ = 0;
    std::size_t n_ = 0;
    double loss_sum_ = 0.0;
};

inline Metrics evaluate(const ModelParams& p, const Dataset& test) {
    MetricsAccumulator acc;
    for (const auto& w : test.windows) {
        const auto x = test.normalization.apply(w.features);
        acc.add(w.labels, forward(p, x));
    }
    return acc.finish();
}

inline void write_predictions_csv(const ModelParams& p, const Dataset& ds, std::ostream& out) {
    out << "gnb_id,ue_id,start_time,y0,y1,y2,y3,p0,p1,p2,p3,yhat0,yhat1,yhat2,yhat3\n";
    char buf[64];
    for (const auto& w : ds.windows) {
        const auto probs = forward(p, ds.normalization.apply(w.features));
        const auto pred = threshold_probs(probs);
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f", w.gnb_id, w.ue_id, w.start_time);
        out << buf;
        for (int y : w.labels) out << ',' << y;
        for (double pr : probs) {
            std::snprintf(buf, sizeof buf, ",%.9f", pr);
            out << buf;
        }
        for (int y : pred) out << ',' << y;
        out << '\n';
    }
}

inline nlohmann::json to_json(const Metrics& m) {
    nlohmann::json precision = nlohmann::json::object();
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t j = 0; j < kNumLabels; ++j) {
        const auto& p = m.per_label_precision[j];
        precision[kLabelNames[j]] = p ? nlohmann::json(*p) : nlohmann::json(nullptr);
        const auto& c = m.per_label_counts[j];
        counts[kLabelNames[j]] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    }
    return {{"exact_match", m.exact_match},
            {"precision", precision},
            {"counts", counts},
            {"mean_loss", m.mean_loss},
            {"num_windows", m.num_windows}};
}

}  // namespace fedpm
