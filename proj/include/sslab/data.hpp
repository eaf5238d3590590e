#pragma once

// Synthetic dataset generators, train/test splitting, min-max scaling, and
// a plain CSV round-trip format for generated datasets.
//
// Group one-hot columns are appended after the raw features, so linear
// models trained on the full matrix carry per-group offsets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslab/core.hpp"
#include "sslab/rng.hpp"

namespace sslab {

namespace detail {

inline Dataset assemble_grouped(const std::vector<std::vector<double>>& raw_features,
                                const std::vector<int>& labels, const std::vector<int>& groups,
                                int group_count) {
    Dataset ds;
    const std::size_t m = labels.size();
    const std::size_t raw_dim = raw_features.empty() ? 0 : raw_features.front().size();
    ds.dim = raw_dim + static_cast<std::size_t>(group_count);
    ds.labels = labels;
    ds.groups = groups;
    ds.group_count = group_count;
    ds.group_onehot_start = raw_dim;
    for (std::size_t j = 0; j < raw_dim; ++j) ds.numeric_columns.push_back(j);
    ds.features.assign(m * ds.dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = ds.features.data() + i * ds.dim;
        for (std::size_t j = 0; j < raw_dim; ++j) row[j] = raw_features[i][j];
        row[raw_dim + static_cast<std::size_t>(groups[i])] = 1.0;
    }
    for (std::size_t j = 0; j < raw_dim; ++j) ds.feature_names.push_back("x" + std::to_string(j));
    for (int z = 0; z < group_count; ++z) ds.feature_names.push_back("z" + std::to_string(z));
    ds.validate();
    return ds;
}

}  // namespace detail

struct GaussianGroupSpec {
    struct Group {
        double mean_neg = 0.0, mean_pos = 0.0;
        double var_neg = 1.0, var_pos = 1.0;
        double base_rate = 0.5;
        std::size_t count = 0;
    };
    std::vector<Group> groups;
    std::uint64_t seed = 0;
};

// Per-group class-conditional parameters drawn from the standard priors:
// mean- ~ U(0,0.5), mean+ ~ U(0.5,1), variances ~ U(0.2,0.5), mu ~ U(0,1).
inline GaussianGroupSpec sample_gaussian_spec(int group_count, std::size_t per_group,
                                              std::uint64_t seed) {
    if (group_count < 1 || per_group < 1) throw std::invalid_argument("sample_gaussian_spec: bad sizes");
    Rng rng(seed);
    GaussianGroupSpec spec;
    for (int z = 0; z < group_count; ++z) {
        GaussianGroupSpec::Group g;
        g.mean_neg = rng.uniform(0.0, 0.5);
        g.var_neg = rng.uniform(0.2, 0.5);
        g.mean_pos = rng.uniform(0.5, 1.0);
        g.var_pos = rng.uniform(0.2, 0.5);
        g.base_rate = rng.uniform();
        g.count = per_group;
        spec.groups.push_back(g);
    }
    spec.seed = rng.next();
    return spec;
}

// Labels are Bernoulli(mu_z); the single raw feature comes from the matching
// class-conditional Gaussian.
inline Dataset gen_gaussian_groups(const GaussianGroupSpec& spec) {
    if (spec.groups.empty()) throw std::invalid_argument("gen_gaussian_groups: no groups");
    for (const auto& g : spec.groups) {
        if (!(g.var_neg > 0.0 && g.var_pos > 0.0)) {
            throw std::invalid_argument("gen_gaussian_groups: variances must be positive");
        }
        if (g.base_rate < 0.0 || g.base_rate > 1.0 || g.count < 1) {
            throw std::invalid_argument("gen_gaussian_groups: invalid group parameters");
        }
    }
    Rng rng(spec.seed);
    std::vector<std::vector<double>> x;
    std::vector<int> y, z;
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        const auto& gs = spec.groups[g];
        const double sd_neg = std::sqrt(gs.var_neg), sd_pos = std::sqrt(gs.var_pos);
        for (std::size_t i = 0; i < gs.count; ++i) {
            const int label = rng.bernoulli(gs.base_rate);
            const double v = label == 1 ? rng.normal(gs.mean_pos, sd_pos)
                                        : rng.normal(gs.mean_neg, sd_neg);
            x.push_back({v});
            y.push_back(label);
            z.push_back(static_cast<int>(g));
        }
    }
    return detail::assemble_grouped(x, y, z, static_cast<int>(spec.groups.size()));
}

enum class NaiveDemoCondition { same, lower, higher };

inline const char* naive_demo_condition_name(NaiveDemoCondition c) {
    switch (c) {
        case NaiveDemoCondition::same: return "same";
        case NaiveDemoCondition::lower: return "lower";
        case NaiveDemoCondition::higher: return "higher";
    }
    return "?";
}

// The cost each condition is paired with in the demo experiment.
inline double naive_demo_cost(NaiveDemoCondition c) {
    return c == NaiveDemoCondition::higher ? 0.9 : 0.8;
}

// Two groups sharing class conditionals x|y=0 ~ N(-0.5, sd 0.5) and
// x|y=1 ~ N(0.5, sd 0.5); the comparison group's base rate is 0.5, 0.15 or
// 0.85 depending on the condition. 10,000 examples, equal group shares.
inline Dataset gen_naive_demo(NaiveDemoCondition cond, std::uint64_t seed) {
    constexpr std::size_t kCount = 10000;
    const double mu0 = 0.5;
    double mu1 = 0.5;
    if (cond == NaiveDemoCondition::lower) mu1 = 0.15;
    if (cond == NaiveDemoCondition::higher) mu1 = 0.85;
    Rng rng(seed);
    std::vector<std::vector<double>> x;
    std::vector<int> y, z;
    for (std::size_t i = 0; i < kCount; ++i) {
        const int g = rng.bernoulli(0.5);
        const int label = rng.bernoulli(g == 0 ? mu0 : mu1);
        const double v = rng.normal(label == 1 ? 0.5 : -0.5, 0.5);
        x.push_back({v});
        y.push_back(label);
        z.push_back(g);
    }
    return detail::assemble_grouped(x, y, z, 2);
}

// Two groups, two features. x0 is sharply informative for group 0 only and
// pure noise for group 1; x1 is mildly informative for both. Group shares
// 0.1/0.9, base rates 0.3/0.7, 10,000 examples.
inline Dataset gen_ordering_demo(std::uint64_t seed) {
    constexpr std::size_t kCount = 10000;
    Rng rng(seed);
    std::vector<std::vector<double>> x;
    std::vector<int> y, z;
    for (std::size_t i = 0; i < kCount; ++i) {
        const int g = rng.uniform() < 0.1 ? 0 : 1;
        const int label = rng.bernoulli(g == 0 ? 0.3 : 0.7);
        double x0;
        if (g == 0) {
            x0 = rng.normal(label == 1 ? 0.2 : -0.3, 0.1);
        } else {
            x0 = rng.normal(0.0, 0.2);
        }
        const double x1 = rng.normal(label == 1 ? 0.25 : -0.35, 0.3);
        x.push_back({x0, x1});
        y.push_back(label);
        z.push_back(g);
    }
    return detail::assemble_grouped(x, y, z, 2);
}

struct SplitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SplitResult {
    Dataset train, test;
    std::uint64_t seed_used = 0;
};

namespace detail {

inline Dataset take_rows(const Dataset& ds, std::span<const std::size_t> rows) {
    Dataset out;
    out.dim = ds.dim;
    out.group_count = ds.group_count;
    out.group_onehot_start = ds.group_onehot_start;
    out.numeric_columns = ds.numeric_columns;
    out.feature_names = ds.feature_names;
    out.features.reserve(rows.size() * ds.dim);
    for (std::size_t i : rows) {
        const auto r = ds.row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(ds.labels[i]);
        out.groups.push_back(ds.groups[i]);
    }
    return out;
}

}  // namespace detail

// Uniform shuffle split; retries with incremented seed until every group
// appears on both sides (at most 100 attempts).
inline SplitResult split(const Dataset& ds, double train_frac, std::uint64_t seed) {
    ds.validate();
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw std::invalid_argument("split: train_frac must be in (0,1)");
    }
    const std::size_t m = ds.size();
    const auto n_train =
        static_cast<std::size_t>(std::llround(static_cast<double>(m) * train_frac));
    if (n_train == 0 || n_train == m) throw std::invalid_argument("split: degenerate split size");

    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
        Rng rng(s);
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::vector<std::size_t> test_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

        std::vector<int> seen_train(static_cast<std::size_t>(ds.group_count), 0);
        std::vector<int> seen_test(static_cast<std::size_t>(ds.group_count), 0);
        for (std::size_t i : train_rows) seen_train[static_cast<std::size_t>(ds.groups[i])] = 1;
        for (std::size_t i : test_rows) seen_test[static_cast<std::size_t>(ds.groups[i])] = 1;
        bool ok = true;
        for (int z = 0; z < ds.group_count; ++z) {
            if (!seen_train[static_cast<std::size_t>(z)] || !seen_test[static_cast<std::size_t>(z)]) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        SplitResult out;
        out.train = detail::take_rows(ds, train_rows);
        out.test = detail::take_rows(ds, test_rows);
        out.seed_used = s;
        return out;
    }
    // identify an offending group for the error message
    const auto sizes = ds.group_sizes();
    int worst = 0;
    for (int z = 1; z < ds.group_count; ++z) {
        if (sizes[static_cast<std::size_t>(z)] < sizes[static_cast<std::size_t>(worst)]) worst = z;
    }
    throw SplitError("split: group " + std::to_string(worst) +
                     " could not be placed in both splits after 100 attempts");
}

// Min-max scaling fit on training data and applied to both splits. Columns
// with a constant value map to 0.
struct MinMaxScaler {
    std::vector<std::size_t> columns;
    std::vector<double> lo, hi;

    static MinMaxScaler fit(const Dataset& train) {
        MinMaxScaler s;
        s.columns = train.numeric_columns;
        s.lo.assign(s.columns.size(), 0.0);
        s.hi.assign(s.columns.size(), 0.0);
        for (std::size_t k = 0; k < s.columns.size(); ++k) {
            const std::size_t j = s.columns[k];
            double lo = train.features[j], hi = train.features[j];
            for (std::size_t i = 1; i < train.size(); ++i) {
                const double v = train.features[i * train.dim + j];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            s.lo[k] = lo;
            s.hi[k] = hi;
        }
        return s;
    }

    void apply(Dataset& ds) const {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const std::size_t j = columns[k];
            if (j >= ds.dim) throw std::invalid_argument("scaler: column out of range");
            const double range = hi[k] - lo[k];
            for (std::size_t i = 0; i < ds.size(); ++i) {
                double& v = ds.features[i * ds.dim + j];
                v = range > 0.0 ? (v - lo[k]) / range : 0.0;
            }
        }
    }
};

// Splits and normalizes in one step: scaler statistics come from the train
// side only.
inline SplitResult split_normalized(const Dataset& ds, double train_frac, std::uint64_t seed) {
    SplitResult r = split(ds, train_frac, seed);
    const MinMaxScaler scaler = MinMaxScaler::fit(r.train);
    scaler.apply(r.train);
    scaler.apply(r.test);
    return r;
}

// ---- dataset CSV round-trip ----
//
// Header comments carry the structural metadata:
//   # sslab-dataset dim=<d> groups=<K> onehot_start=<j|-> numeric=<j,...>
// followed by a normal header row and one row per example.

inline void write_dataset_csv(const Dataset& ds, std::ostream& os,
                              const std::string& extra_comment = "") {
    if (!extra_comment.empty()) os << "# " << extra_comment << "\n";
    os << "# sslab-dataset dim=" << ds.dim << " groups=" << ds.group_count << " onehot_start=";
    if (ds.group_onehot_start) {
        os << *ds.group_onehot_start;
    } else {
        os << "-";
    }
    os << " numeric=";
    for (std::size_t k = 0; k < ds.numeric_columns.size(); ++k) {
        if (k) os << ",";
        os << ds.numeric_columns[k];
    }
    os << "\n";
    for (std::size_t j = 0; j < ds.dim; ++j) {
        os << (j < ds.feature_names.size() ? ds.feature_names[j] : "f" + std::to_string(j)) << ",";
    }
    os << "label,group\n";
    os.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto r = ds.row(i);
        for (double v : r) os << v << ",";
        os << ds.labels[i] << "," << ds.groups[i] << "\n";
    }
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path,
                              const std::string& extra_comment = "") {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    write_dataset_csv(ds, f, extra_comment);
}

inline Dataset read_dataset_csv(std::istream& is) {
    Dataset ds;
    std::string line;
    bool have_meta = false, have_header = false;
    std::vector<std::string> header;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# sslab-dataset", 0) == 0) {
            std::istringstream ss(line.substr(15));
            std::string tok;
            while (ss >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "dim") ds.dim = std::stoul(val);
                if (key == "groups") ds.group_count = std::stoi(val);
                if (key == "onehot_start" && val != "-") ds.group_onehot_start = std::stoul(val);
                if (key == "numeric" && !val.empty()) {
                    std::istringstream cols(val);
                    std::string c;
                    while (std::getline(cols, c, ',')) ds.numeric_columns.push_back(std::stoul(c));
                }
            }
            have_meta = true;
            continue;
        }
        if (line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!have_header) {
            header = cells;
            have_header = true;
            if (!have_meta) {
                if (header.size() < 3) throw std::runtime_error("dataset csv: bad header");
                ds.dim = header.size() - 2;
            }
            for (std::size_t j = 0; j < ds.dim; ++j) ds.feature_names.push_back(header[j]);
            continue;
        }
        if (cells.size() != ds.dim + 2) throw std::runtime_error("dataset csv: bad row width");
        for (std::size_t j = 0; j < ds.dim; ++j) ds.features.push_back(std::stod(cells[j]));
        ds.labels.push_back(std::stoi(cells[ds.dim]));
        ds.groups.push_back(std::stoi(cells[ds.dim + 1]));
    }
    if (ds.group_count == 0) {
        int k = 0;
        for (int z : ds.groups) k = std::max(k, z + 1);
        ds.group_count = k;
    }
    ds.validate();
    return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    return read_dataset_csv(f);
}

}  // namespace sslab
