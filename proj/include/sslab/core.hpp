#pragma once

// Core domain types and contingency-table metrics.
//
// Undefined ratios (precision with no positive predictions, recall with no
// positives) are carried as empty optionals, never as 0 or NaN: downstream
// application logic treats them as a distinct state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslab {

struct Dataset {
    std::vector<double> features;  // row-major, size() * dim entries
    std::size_t dim = 0;
    std::vector<int> labels;  // {0,1}
    std::vector<int> groups;  // [0, group_count)
    int group_count = 0;

    // When group one-hot columns are appended they occupy
    // [group_onehot_start, group_onehot_start + group_count).
    std::optional<std::size_t> group_onehot_start;
    std::vector<std::size_t> numeric_columns;  // columns subject to min-max scaling
    std::vector<std::string> feature_names;    // optional, length dim when set

    std::size_t size() const { return labels.size(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }

    void validate() const {
        const std::size_t m = size();
        if (m == 0) throw std::invalid_argument("dataset: empty");
        if (groups.size() != m) throw std::invalid_argument("dataset: label/group length mismatch");
        if (features.size() != m * dim) throw std::invalid_argument("dataset: feature matrix shape mismatch");
        if (group_count < 1) throw std::invalid_argument("dataset: group_count must be >= 1");
        std::vector<std::size_t> seen(static_cast<std::size_t>(group_count), 0);
        for (std::size_t i = 0; i < m; ++i) {
            if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("dataset: labels must be 0/1");
            if (groups[i] < 0 || groups[i] >= group_count) throw std::invalid_argument("dataset: group index out of range");
            ++seen[static_cast<std::size_t>(groups[i])];
        }
        for (int z = 0; z < group_count; ++z) {
            if (seen[static_cast<std::size_t>(z)] == 0) {
                throw std::invalid_argument("dataset: group " + std::to_string(z) + " has no examples");
            }
        }
        if (group_onehot_start && *group_onehot_start + static_cast<std::size_t>(group_count) > dim) {
            throw std::invalid_argument("dataset: group one-hot block exceeds feature dim");
        }
    }

    std::vector<std::size_t> group_sizes() const {
        std::vector<std::size_t> n(static_cast<std::size_t>(group_count), 0);
        for (int z : groups) ++n[static_cast<std::size_t>(z)];
        return n;
    }

    // mu_z, exact count ratio per group
    std::vector<double> base_rates() const {
        std::vector<std::int64_t> pos(static_cast<std::size_t>(group_count), 0);
        std::vector<std::int64_t> n(static_cast<std::size_t>(group_count), 0);
        for (std::size_t i = 0; i < size(); ++i) {
            const auto z = static_cast<std::size_t>(groups[i]);
            ++n[z];
            pos[z] += labels[i];
        }
        std::vector<double> mu(static_cast<std::size_t>(group_count), 0.0);
        for (std::size_t z = 0; z < mu.size(); ++z) {
            mu[z] = static_cast<double>(pos[z]) / static_cast<double>(n[z]);
        }
        return mu;
    }

    double base_rate() const {
        std::int64_t pos = 0;
        for (int y : labels) pos += y;
        return static_cast<double>(pos) / static_cast<double>(size());
    }
};

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;

    bool finite() const {
        if (!std::isfinite(bias)) return false;
        return std::all_of(weights.begin(), weights.end(),
                           [](double w) { return std::isfinite(w); });
    }
};

inline double score(const LinearModel& m, std::span<const double> x) {
    if (x.size() != m.weights.size()) throw std::invalid_argument("score: dimension mismatch");
    double s = m.bias;
    for (std::size_t j = 0; j < x.size(); ++j) s += m.weights[j] * x[j];
    return s;
}

// hard prediction, strict inequality: ties at exactly tau predict 0
inline int predict(const LinearModel& m, std::span<const double> x, double tau) {
    return score(m, x) > tau ? 1 : 0;
}

inline std::vector<double> scores(const LinearModel& m, const Dataset& ds) {
    if (ds.dim != m.weights.size()) throw std::invalid_argument("scores: dimension mismatch");
    std::vector<double> s(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) s[i] = score(m, ds.row(i));
    return s;
}

inline std::vector<int> predictions(const LinearModel& m, const Dataset& ds, double tau) {
    std::vector<int> yhat(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) yhat[i] = predict(m, ds.row(i), tau);
    return yhat;
}

struct ContingencyTable {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
};

inline ContingencyTable contingency(std::span<const int> y, std::span<const int> yhat) {
    if (y.size() != yhat.size()) throw std::invalid_argument("contingency: length mismatch");
    if (y.empty()) throw std::invalid_argument("contingency: empty input");
    ContingencyTable t;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1) {
            (yhat[i] == 1 ? t.tp : t.fn)++;
        } else {
            (yhat[i] == 1 ? t.fp : t.tn)++;
        }
    }
    return t;
}

struct BasicMetrics {
    std::optional<double> precision;  // undefined iff tp+fp == 0
    std::optional<double> recall;     // undefined iff tp+fn == 0
    double accuracy = 0.0;
    double base_rate = 0.0;
};

inline BasicMetrics metrics(const ContingencyTable& t) {
    if (t.total() < 1) throw std::invalid_argument("metrics: empty table");
    BasicMetrics b;
    const auto n = static_cast<double>(t.total());
    if (t.tp + t.fp > 0) b.precision = static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fp);
    if (t.tp + t.fn > 0) b.recall = static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fn);
    b.accuracy = static_cast<double>(t.tp + t.tn) / n;
    b.base_rate = static_cast<double>(t.tp + t.fn) / n;
    return b;
}

// mu*rcl + (mu - err)*prc - 2*mu*rcl*prc; zero for metrics of any one table
inline double alvarez_residual(double mu, double rcl, double prc, double err) {
    return mu * rcl + (mu - err) * prc - 2.0 * mu * rcl * prc;
}

enum class ApplicationRegion { ForcedNoApply, ForcedApply, Unconstrained };

inline ApplicationRegion application_region(double acc, double mu, double c) {
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("application_region: c must be in (0,1)");
    const double ratio = 1.0 / c - 1.0;
    const double lower = 1.0 - mu * std::max(1.0, ratio);
    const double upper = 1.0 - mu * std::min(1.0, ratio);
    if (acc < lower) return ApplicationRegion::ForcedNoApply;
    if (acc >= upper) return ApplicationRegion::ForcedApply;
    return ApplicationRegion::Unconstrained;
}

struct GroupMetrics {
    std::vector<double> base_rate;                     // mu_z
    std::vector<std::optional<double>> precision;      // prc_z
    std::vector<std::optional<double>> recall;         // rcl_z
    std::vector<double> accuracy;                      // acc_z
    std::vector<double> positive_rate;                 // P(yhat=1 | z)
    double global_base_rate = 0.0;
    double global_accuracy = 0.0;
    std::optional<double> global_precision;
};

inline GroupMetrics group_metrics(const Dataset& ds, std::span<const int> yhat) {
    if (yhat.size() != ds.size()) throw std::invalid_argument("group_metrics: prediction length mismatch");
    const auto K = static_cast<std::size_t>(ds.group_count);
    std::vector<ContingencyTable> per(K);
    ContingencyTable all;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& t = per[static_cast<std::size_t>(ds.groups[i])];
        if (ds.labels[i] == 1) {
            (yhat[i] == 1 ? t.tp : t.fn)++;
            (yhat[i] == 1 ? all.tp : all.fn)++;
        } else {
            (yhat[i] == 1 ? t.fp : t.tn)++;
            (yhat[i] == 1 ? all.fp : all.tn)++;
        }
    }
    GroupMetrics g;
    g.base_rate.resize(K);
    g.precision.resize(K);
    g.recall.resize(K);
    g.accuracy.resize(K);
    g.positive_rate.resize(K);
    for (std::size_t z = 0; z < K; ++z) {
        const BasicMetrics b = metrics(per[z]);
        g.base_rate[z] = b.base_rate;
        g.precision[z] = b.precision;
        g.recall[z] = b.recall;
        g.accuracy[z] = b.accuracy;
        g.positive_rate[z] = static_cast<double>(per[z].tp + per[z].fp) /
                             static_cast<double>(per[z].total());
    }
    const BasicMetrics b = metrics(all);
    g.global_base_rate = b.base_rate;
    g.global_accuracy = b.accuracy;
    g.global_precision = b.precision;
    return g;
}

}  // namespace sslab
