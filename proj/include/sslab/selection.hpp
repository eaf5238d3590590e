#pragma once

// Candidate-side behavior: application decisions from published conditional
// precision, expected utility, induced applicant distributions, group
// orderings, subsidies, and empirical score-calibration checks.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sslab/core.hpp"

namespace sslab {

struct CostSchedule {
    double base_cost = 0.5;            // c
    std::vector<double> subsidies;     // s_z >= 0; empty means all zero

    static CostSchedule flat(double c) { return CostSchedule{c, {}}; }

    double effective(int z) const {
        const auto iz = static_cast<std::size_t>(z);
        return iz < subsidies.size() ? base_cost - subsidies[iz] : base_cost;
    }

    void validate(int group_count) const {
        if (!(base_cost > 0.0 && base_cost < 1.0)) {
            throw std::invalid_argument("cost schedule: base cost must be in (0,1)");
        }
        for (double s : subsidies) {
            if (s < 0.0) throw std::invalid_argument("cost schedule: subsidies must be >= 0");
        }
        for (int z = 0; z < group_count; ++z) {
            const double cz = effective(z);
            if (!(cz > 0.0 && cz < 1.0)) {
                throw std::invalid_argument("cost schedule: effective cost out of (0,1) for group " +
                                            std::to_string(z));
            }
        }
    }
};

// prc_z per group; empty optional where the group has no positive predictions
inline std::vector<std::optional<double>> conditional_precision(const Dataset& ds,
                                                                std::span<const int> yhat) {
    if (yhat.size() != ds.size()) throw std::invalid_argument("conditional_precision: length mismatch");
    const auto K = static_cast<std::size_t>(ds.group_count);
    std::vector<std::int64_t> tp(K, 0), pp(K, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (yhat[i] == 1) {
            const auto z = static_cast<std::size_t>(ds.groups[i]);
            ++pp[z];
            tp[z] += ds.labels[i];
        }
    }
    std::vector<std::optional<double>> prc(K);
    for (std::size_t z = 0; z < K; ++z) {
        if (pp[z] > 0) prc[z] = static_cast<double>(tp[z]) / static_cast<double>(pp[z]);
    }
    return prc;
}

struct ApplicationProfile {
    std::vector<std::optional<double>> precision;  // prc_z
    std::vector<double> positive_rate;             // P(yhat=1 | z)
    std::vector<std::uint8_t> applies;             // a*_z
    std::vector<std::size_t> applicant_indices;    // examples whose group applies
    std::size_t applicant_count = 0;               // m^f

    int applying_groups() const {
        int n = 0;
        for (auto a : applies) n += a;
        return n;
    }
};

// a*_z = 1[prc_z >= c_z]; groups with no positive predictions never apply
inline ApplicationProfile decide_applications(const Dataset& ds, std::span<const int> yhat,
                                              const CostSchedule& costs) {
    costs.validate(ds.group_count);
    ApplicationProfile p;
    p.precision = conditional_precision(ds, yhat);
    const auto K = static_cast<std::size_t>(ds.group_count);
    const auto sizes = ds.group_sizes();
    std::vector<std::int64_t> pp(K, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (yhat[i] == 1) ++pp[static_cast<std::size_t>(ds.groups[i])];
    }
    p.positive_rate.resize(K);
    p.applies.resize(K);
    for (std::size_t z = 0; z < K; ++z) {
        p.positive_rate[z] = static_cast<double>(pp[z]) / static_cast<double>(sizes[z]);
        p.applies[z] = p.precision[z] && *p.precision[z] >= costs.effective(static_cast<int>(z)) ? 1 : 0;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (p.applies[static_cast<std::size_t>(ds.groups[i])]) p.applicant_indices.push_back(i);
    }
    p.applicant_count = p.applicant_indices.size();
    return p;
}

// empirical E[yhat*(y-c)] over examples of group z
inline double expected_utility(const Dataset& ds, std::span<const int> yhat, int z, double c) {
    if (yhat.size() != ds.size()) throw std::invalid_argument("expected_utility: length mismatch");
    std::int64_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.groups[i] != z) continue;
        ++n;
        if (yhat[i] == 1) sum += static_cast<double>(ds.labels[i]) - c;
    }
    if (n == 0) throw std::invalid_argument("expected_utility: empty group");
    return sum / static_cast<double>(n);
}

// exhaustive argmax over a in {0,1} of a * E[yhat*(y-c)]; ties go to a=1
inline int brute_force_best_action(const Dataset& ds, std::span<const int> yhat, int z, double c) {
    const double u1 = expected_utility(ds, yhat, z, c);
    const double u0 = 0.0;
    return u1 >= u0 ? 1 : 0;
}

struct InducedSubset {
    std::optional<Dataset> data;  // empty optional signals an empty induced distribution
    ApplicationProfile profile;
};

inline InducedSubset induced_subset(const Dataset& ds, const LinearModel& model, double tau,
                                    const CostSchedule& costs) {
    const std::vector<int> yhat = predictions(model, ds, tau);
    InducedSubset out;
    out.profile = decide_applications(ds, yhat, costs);
    if (out.profile.applicant_count == 0) return out;
    Dataset sub;
    sub.dim = ds.dim;
    sub.group_count = ds.group_count;
    sub.group_onehot_start = ds.group_onehot_start;
    sub.numeric_columns = ds.numeric_columns;
    sub.feature_names = ds.feature_names;
    sub.features.reserve(out.profile.applicant_count * ds.dim);
    for (std::size_t i : out.profile.applicant_indices) {
        const auto r = ds.row(i);
        sub.features.insert(sub.features.end(), r.begin(), r.end());
        sub.labels.push_back(ds.labels[i]);
        sub.groups.push_back(ds.groups[i]);
    }
    out.data = std::move(sub);
    return out;
}

// 0/1 accuracy restricted to applicants; empty optional when nobody applies
inline std::optional<double> induced_accuracy(const Dataset& ds, std::span<const int> yhat,
                                              const ApplicationProfile& profile) {
    if (profile.applicant_count == 0) return std::nullopt;
    std::int64_t correct = 0;
    for (std::size_t i : profile.applicant_indices) {
        if (ds.labels[i] == yhat[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(profile.applicant_count);
}

inline std::optional<double> induced_accuracy(const Dataset& ds, const LinearModel& model, double tau,
                                              const CostSchedule& costs) {
    const std::vector<int> yhat = predictions(model, ds, tau);
    const ApplicationProfile profile = decide_applications(ds, yhat, costs);
    return induced_accuracy(ds, yhat, profile);
}

// Per-group precision along a threshold grid. Scores are given per example;
// positives at grid point t are the examples with score > t.
struct GroupThresholdStats {
    // precision[z][k]: prc_z at grid[k], empty where the group has no positives
    std::vector<std::vector<std::optional<double>>> precision;
};

inline GroupThresholdStats group_precision_over_grid(const Dataset& ds,
                                                     std::span<const double> score_values,
                                                     std::span<const double> tau_grid) {
    if (score_values.size() != ds.size()) {
        throw std::invalid_argument("group_precision_over_grid: score length mismatch");
    }
    const auto K = static_cast<std::size_t>(ds.group_count);
    // per group: scores sorted ascending with suffix counts of positives
    std::vector<std::vector<std::pair<double, int>>> by_group(K);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_group[static_cast<std::size_t>(ds.groups[i])].emplace_back(score_values[i], ds.labels[i]);
    }
    GroupThresholdStats out;
    out.precision.assign(K, std::vector<std::optional<double>>(tau_grid.size()));
    for (std::size_t z = 0; z < K; ++z) {
        auto& v = by_group[z];
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        std::vector<std::int64_t> pos_suffix(n + 1, 0);
        for (std::size_t i = n; i-- > 0;) pos_suffix[i] = pos_suffix[i + 1] + v[i].second;
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            // first index with score > tau
            const auto it = std::upper_bound(v.begin(), v.end(),
                                             std::make_pair(tau_grid[k], std::numeric_limits<int>::max()));
            const auto first = static_cast<std::size_t>(it - v.begin());
            const auto pp = static_cast<std::int64_t>(n - first);
            if (pp > 0) {
                out.precision[z][k] =
                    static_cast<double>(pos_suffix[first]) / static_cast<double>(pp);
            }
        }
    }
    return out;
}

// Evenly spaced grid over the observed score range, extended by one grid
// step on each side so the extremes give all-positive / no-positive.
inline std::vector<double> default_tau_grid(std::span<const double> score_values,
                                            std::size_t points = 201) {
    if (points < 3) throw std::invalid_argument("default_tau_grid: need at least 3 points");
    if (score_values.empty()) throw std::invalid_argument("default_tau_grid: empty scores");
    const auto [lo_it, hi_it] = std::minmax_element(score_values.begin(), score_values.end());
    const double lo = *lo_it, hi = *hi_it;
    double step = (hi - lo) / static_cast<double>(points - 3);
    if (!(step > 0.0)) step = 1e-9;
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k) {
        grid[k] = lo - step + static_cast<double>(k) * step;
    }
    return grid;
}

struct GroupOrdering {
    struct Entry {
        int group = 0;
        std::optional<double> crossing;  // c_z^cross; empty = never applies on the grid
    };
    std::vector<Entry> order;  // ascending crossing; never-applying groups last, by id
};

inline GroupOrdering threshold_ordering(const LinearModel& model, const Dataset& ds, double c,
                                        std::span<const double> tau_grid) {
    if (!std::is_sorted(tau_grid.begin(), tau_grid.end())) {
        throw std::invalid_argument("threshold_ordering: grid must be ascending");
    }
    const std::vector<double> s = scores(model, ds);
    const GroupThresholdStats stats = group_precision_over_grid(ds, s, tau_grid);
    GroupOrdering out;
    for (int z = 0; z < ds.group_count; ++z) {
        GroupOrdering::Entry e;
        e.group = z;
        const auto& curve = stats.precision[static_cast<std::size_t>(z)];
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            if (curve[k] && *curve[k] >= c) {
                e.crossing = tau_grid[k];
                break;
            }
        }
        out.order.push_back(e);
    }
    std::sort(out.order.begin(), out.order.end(),
              [](const GroupOrdering::Entry& a, const GroupOrdering::Entry& b) {
                  if (a.crossing.has_value() != b.crossing.has_value()) return a.crossing.has_value();
                  if (a.crossing && b.crossing && *a.crossing != *b.crossing) {
                      return *a.crossing < *b.crossing;
                  }
                  return a.group < b.group;
              });
    return out;
}

// groups by descending base rate, ties by ascending id
inline std::vector<int> base_rate_ordering(const Dataset& ds) {
    const std::vector<double> mu = ds.base_rates();
    std::vector<int> order(static_cast<std::size_t>(ds.group_count));
    for (int z = 0; z < ds.group_count; ++z) order[static_cast<std::size_t>(z)] = z;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ma = mu[static_cast<std::size_t>(a)], mb = mu[static_cast<std::size_t>(b)];
        if (ma != mb) return ma > mb;
        return a < b;
    });
    return order;
}

// prc_z under prediction-group independence: prc * mu_z / mu.
// May exceed 1 when the inputs violate the independence premise; the value
// is returned unclamped so callers can flag it.
inline double parity_precision(double prc, double mu, double mu_z) {
    if (!(mu > 0.0)) throw std::invalid_argument("parity_precision: mu must be positive");
    return prc * mu_z / mu;
}

// Smallest s_z >= 0 with mu_z + s_z*mu > c - s_z; 0 when mu_z already
// exceeds c. Boundary cases get a fixed delta to keep the inequality strict.
inline double minimal_guaranteeing_subsidy(double mu_z, double mu, double c) {
    if (!(mu > 0.0)) throw std::invalid_argument("minimal_guaranteeing_subsidy: mu must be positive");
    if (mu_z > c) return 0.0;
    constexpr double kDelta = 1e-9;
    return (c - mu_z) / (1.0 + mu) + kDelta;
}

struct CalibrationReport {
    // grid indices k with prc(tau_{k+1}) < prc(tau_k) - tol, over defined pairs
    std::vector<std::size_t> violations;

    bool calibrated() const { return violations.empty(); }
};

// Empirical counterpart of precision monotonicity in the threshold: scan the
// grid and report every downward step beyond tol. `subset` restricts to a
// group's examples; empty means all.
inline CalibrationReport check_score_calibration(std::span<const double> score_values,
                                                 std::span<const int> labels,
                                                 std::span<const std::size_t> subset,
                                                 std::span<const double> tau_grid,
                                                 double tol = 1e-9) {
    if (score_values.size() != labels.size()) {
        throw std::invalid_argument("check_score_calibration: length mismatch");
    }
    if (!std::is_sorted(tau_grid.begin(), tau_grid.end())) {
        throw std::invalid_argument("check_score_calibration: grid must be ascending");
    }
    std::vector<std::pair<double, int>> v;
    if (subset.empty()) {
        v.reserve(score_values.size());
        for (std::size_t i = 0; i < score_values.size(); ++i) v.emplace_back(score_values[i], labels[i]);
    } else {
        v.reserve(subset.size());
        for (std::size_t i : subset) v.emplace_back(score_values[i], labels[i]);
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    std::vector<std::int64_t> pos_suffix(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) pos_suffix[i] = pos_suffix[i + 1] + v[i].second;

    CalibrationReport report;
    std::optional<double> prev;
    std::optional<std::size_t> prev_k;
    for (std::size_t k = 0; k < tau_grid.size(); ++k) {
        const auto it = std::upper_bound(v.begin(), v.end(),
                                         std::make_pair(tau_grid[k], std::numeric_limits<int>::max()));
        const auto first = static_cast<std::size_t>(it - v.begin());
        const auto pp = static_cast<std::int64_t>(n - first);
        if (pp == 0) continue;  // precision undefined from here on
        const double prc = static_cast<double>(pos_suffix[first]) / static_cast<double>(pp);
        if (prev && prc < *prev - tol) report.violations.push_back(*prev_k);
        prev = prc;
        prev_k = k;
    }
    return report;
}

}  // namespace sslab
