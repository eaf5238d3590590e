#pragma once

// Evaluation harness: a single method run on a train/test split, cost-grid
// sweeps over split seeds with mean/stderr aggregates, per-group precision
// curves, and the CSV/JSON output formats with a run manifest.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sslab/core.hpp"
#include "sslab/data.hpp"
#include "sslab/learning.hpp"
#include "sslab/selection.hpp"

namespace sslab {

inline constexpr const char* kVersion = "0.1.0";

struct RankCorrelation {
    std::optional<double> r2;
    std::optional<double> r;  // signed, to disambiguate reversed orderings
};

// Squared Pearson correlation between the rank vector of groups ordered by
// descending base rate and the rank vector ordered by descending precision.
// Undefined precisions rank last; all ties resolve by ascending group id.
// Undefined when fewer than two groups have a defined precision.
inline RankCorrelation rank_r2(std::span<const double> base_rates,
                               std::span<const std::optional<double>> precisions) {
    const std::size_t K = base_rates.size();
    if (K < 2 || precisions.size() != K) {
        throw std::invalid_argument("rank_r2: need K >= 2 with matching precision vector");
    }
    std::size_t defined = 0;
    for (const auto& p : precisions) defined += p.has_value();
    if (defined < 2) return {};

    const auto rank_of = [K](auto&& less) {
        std::vector<int> order(K);
        for (std::size_t z = 0; z < K; ++z) order[z] = static_cast<int>(z);
        std::sort(order.begin(), order.end(), less);
        std::vector<double> rank(K);
        for (std::size_t pos = 0; pos < K; ++pos) rank[static_cast<std::size_t>(order[pos])] = static_cast<double>(pos);
        return rank;
    };
    const std::vector<double> mu_rank = rank_of([&](int a, int b) {
        const double ma = base_rates[static_cast<std::size_t>(a)];
        const double mb = base_rates[static_cast<std::size_t>(b)];
        if (ma != mb) return ma > mb;
        return a < b;
    });
    const std::vector<double> prc_rank = rank_of([&](int a, int b) {
        const auto& pa = precisions[static_cast<std::size_t>(a)];
        const auto& pb = precisions[static_cast<std::size_t>(b)];
        if (pa.has_value() != pb.has_value()) return pa.has_value();
        if (pa && pb && *pa != *pb) return *pa > *pb;
        return a < b;
    });

    double mean = (static_cast<double>(K) - 1.0) / 2.0;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t z = 0; z < K; ++z) {
        const double dx = mu_rank[z] - mean, dy = prc_rank[z] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return {};
    RankCorrelation out;
    const double r = sxy / std::sqrt(sxx * syy);
    out.r = r;
    out.r2 = r * r;
    return out;
}

struct ResultRow {
    std::string dataset_id;
    Variant method = Variant::naive;
    double cost = 0.0;
    std::uint64_t seed = 0;
    std::optional<double> induced_test_accuracy;  // empty = no applicants
    int applying_group_count = 0;
    std::optional<double> rank_r2_value;
    std::optional<double> rank_r_value;
    std::vector<std::optional<double>> group_precision;
    std::vector<double> group_accuracy;
    std::vector<std::uint8_t> group_applies;
    std::optional<double> threshold;  // semi's tuned threshold
    std::string note;
};

// Trains on the train split and evaluates on the test split: test-set
// conditional precisions drive applications at the plain cost c.
inline ResultRow run_method(const Dataset& train, const Dataset& test, Variant method,
                            const TrainConfig& base, const std::string& dataset_id,
                            std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.variant = method;
    cfg.seed = seed;

    ResultRow row;
    row.dataset_id = dataset_id;
    row.method = method;
    row.cost = cfg.cost;
    row.seed = seed;

    LinearModel model;
    double tau = 0.0;
    Dataset test_view = test;
    if (method == Variant::naive) {
        TrainConfig ncfg = cfg;
        ncfg.init_count = 1;
        model = train_naive(train, ncfg);
    } else if (method == Variant::semi) {
        TrainConfig ncfg = cfg;
        ncfg.variant = Variant::naive;
        ncfg.init_count = 1;
        model = train_naive(train, ncfg);
        const auto tuned = tune_threshold_semi(model, train, CostSchedule::flat(cfg.cost));
        if (!tuned) {
            row.note = "no threshold yields applicants on the training split";
            tau = std::numeric_limits<double>::infinity();
        } else {
            tau = *tuned;
            row.threshold = tau;
        }
    } else {
        const StrategicResult r = train_strategic(train, cfg);
        model = r.model;
        test_view = variant_features(test, method);
    }

    const std::vector<int> yhat = predictions(model, test_view, tau);
    const ApplicationProfile profile =
        decide_applications(test_view, yhat, CostSchedule::flat(cfg.cost));
    const GroupMetrics gm = group_metrics(test_view, yhat);

    row.induced_test_accuracy = induced_accuracy(test_view, yhat, profile);
    row.applying_group_count = profile.applying_groups();
    row.group_precision = profile.precision;
    row.group_accuracy = gm.accuracy;
    row.group_applies = profile.applies;
    if (test_view.group_count >= 2) {
        const RankCorrelation rc = rank_r2(gm.base_rate, profile.precision);
        row.rank_r2_value = rc.r2;
        row.rank_r_value = rc.r;
    }
    return row;
}

struct MethodOverride {
    std::optional<double> lambda_app, lambda_perp, tolerance;
    std::optional<int> init_count;
    std::optional<std::size_t> epochs;

    void apply(TrainConfig& cfg) const {
        if (lambda_app) cfg.lambda_app = *lambda_app;
        if (lambda_perp) cfg.lambda_perp = *lambda_perp;
        if (tolerance) cfg.tolerance = *tolerance;
        if (init_count) cfg.init_count = *init_count;
        if (epochs) cfg.epochs = *epochs;
    }
};

struct SweepConfig {
    std::string dataset_id = "dataset";
    std::vector<double> costs;             // default 0.65 .. 0.85 step 0.025
    std::vector<Variant> methods;
    std::vector<std::uint64_t> seeds;      // split seeds, default 1..10
    double train_frac = 0.7;
    TrainConfig base;
    std::map<Variant, MethodOverride> overrides;

    void fill_defaults() {
        if (costs.empty()) {
            for (int k = 0; k <= 8; ++k) costs.push_back(0.65 + 0.025 * k);
        }
        if (methods.empty()) {
            methods = {Variant::naive, Variant::semi, Variant::strat_x, Variant::strat_no_z,
                       Variant::strat_parity};
        }
        if (seeds.empty()) {
            for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
        }
    }
};

struct Aggregate {
    Variant method = Variant::naive;
    double cost = 0.0;
    int splits = 0;
    int no_applicant_splits = 0;
    std::optional<double> induced_mean, induced_stderr;
    double applying_mean = 0.0, applying_stderr = 0.0;
    std::optional<double> rank_r2_mean, rank_r2_stderr;
};

struct SweepResult {
    std::vector<ResultRow> rows;
    std::vector<Aggregate> aggregates;
};

namespace detail {

struct MeanStderr {
    double mean = 0.0, stderr_ = 0.0;
    int n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
    MeanStderr out;
    out.n = static_cast<int>(v.size());
    if (v.empty()) return out;
    double sum = 0.0;
    for (double x : v) sum += x;
    out.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) /
                      std::sqrt(static_cast<double>(v.size()));
    }
    return out;
}

inline unsigned thread_budget(std::size_t jobs) {
    unsigned t = std::thread::hardware_concurrency();
    if (t == 0) t = 1;
    if (const char* env = std::getenv("SSLAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) t = static_cast<unsigned>(v);
    }
    return std::min<unsigned>(t, static_cast<unsigned>(std::max<std::size_t>(jobs, 1)));
}

}  // namespace detail

inline std::vector<Aggregate> aggregate_rows(const std::vector<ResultRow>& rows) {
    std::map<std::pair<int, double>, std::vector<const ResultRow*>> cells;
    for (const auto& r : rows) cells[{static_cast<int>(r.method), r.cost}].push_back(&r);
    std::vector<Aggregate> out;
    for (const auto& [key, group] : cells) {
        Aggregate a;
        a.method = static_cast<Variant>(key.first);
        a.cost = key.second;
        a.splits = static_cast<int>(group.size());
        std::vector<double> acc, applying, r2;
        for (const ResultRow* r : group) {
            applying.push_back(static_cast<double>(r->applying_group_count));
            if (r->induced_test_accuracy) {
                acc.push_back(*r->induced_test_accuracy);
            } else {
                ++a.no_applicant_splits;
            }
            if (r->rank_r2_value) r2.push_back(*r->rank_r2_value);
        }
        const auto am = detail::mean_stderr(acc);
        if (am.n > 0) {
            a.induced_mean = am.mean;
            a.induced_stderr = am.stderr_;
        }
        const auto pm = detail::mean_stderr(applying);
        a.applying_mean = pm.mean;
        a.applying_stderr = pm.stderr_;
        const auto rm = detail::mean_stderr(r2);
        if (rm.n > 0) {
            a.rank_r2_mean = rm.mean;
            a.rank_r2_stderr = rm.stderr_;
        }
        out.push_back(a);
    }
    return out;
}

// One row per (method, cost, split seed). Cells are independent and run in
// parallel up to SSLAB_THREADS; the result layout is fixed by index, so the
// output does not depend on scheduling.
inline SweepResult sweep(const Dataset& ds, SweepConfig cfg) {
    cfg.fill_defaults();
    struct Job {
        std::size_t seed_idx, method_idx, cost_idx;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
            for (std::size_t c = 0; c < cfg.costs.size(); ++c) jobs.push_back({s, m, c});
        }
    }

    std::vector<SplitResult> splits;
    splits.reserve(cfg.seeds.size());
    for (std::uint64_t seed : cfg.seeds) splits.push_back(split_normalized(ds, cfg.train_frac, seed));

    std::vector<ResultRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const unsigned threads = detail::thread_budget(jobs.size());
    const auto worker = [&]() {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            try {
                const Job& job = jobs[j];
                TrainConfig tc = cfg.base;
                tc.cost = cfg.costs[job.cost_idx];
                const Variant method = cfg.methods[job.method_idx];
                if (const auto it = cfg.overrides.find(method); it != cfg.overrides.end()) {
                    it->second.apply(tc);
                }
                rows[j] = run_method(splits[job.seed_idx].train, splits[job.seed_idx].test, method,
                                     tc, cfg.dataset_id, cfg.seeds[job.seed_idx]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    SweepResult out;
    out.rows = std::move(rows);
    out.aggregates = aggregate_rows(out.rows);
    return out;
}

struct PrecisionCurves {
    std::vector<double> grid;
    // [group][grid point]; precision empty where the group has no positives
    std::vector<std::vector<std::optional<double>>> precision;
    std::vector<std::vector<std::uint8_t>> applies;
};

inline PrecisionCurves precision_curves(const LinearModel& model, const Dataset& ds, double c,
                                        std::span<const double> grid) {
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw std::invalid_argument("precision_curves: grid must be ascending");
    }
    const std::vector<double> s = scores(model, ds);
    const GroupThresholdStats stats = group_precision_over_grid(ds, s, grid);
    PrecisionCurves out;
    out.grid.assign(grid.begin(), grid.end());
    out.precision = stats.precision;
    out.applies.assign(out.precision.size(), std::vector<std::uint8_t>(grid.size(), 0));
    for (std::size_t z = 0; z < out.precision.size(); ++z) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            out.applies[z][k] = out.precision[z][k] && *out.precision[z][k] >= c ? 1 : 0;
        }
    }
    return out;
}

// ---- output formats ----

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const nlohmann::json& config) {
    std::ostringstream ss;
    ss << std::hex << fnv1a64(config.dump());
    return ss.str();
}

namespace detail {

inline std::string opt_str(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream ss;
    ss.precision(17);
    ss << *v;
    return ss.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, const F& fmt, char sep = '|') {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(sep);
        out += fmt(v[i]);
    }
    return out;
}

}  // namespace detail

inline void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& os,
                              const std::string& hash) {
    os << "# config_hash=" << hash << "\n";
    os << "dataset,method,cost,seed,induced_test_accuracy,applying_group_count,rank_r2,rank_r,"
          "threshold,group_precisions,group_accuracies,group_applies,note\n";
    os.precision(17);
    for (const auto& r : rows) {
        os << r.dataset_id << "," << variant_name(r.method) << "," << r.cost << "," << r.seed << ","
           << detail::opt_str(r.induced_test_accuracy) << "," << r.applying_group_count << ","
           << detail::opt_str(r.rank_r2_value) << "," << detail::opt_str(r.rank_r_value) << ","
           << detail::opt_str(r.threshold) << ","
           << detail::join(r.group_precision, [](const std::optional<double>& p) { return detail::opt_str(p); }) << ","
           << detail::join(r.group_accuracy,
                           [](double a) {
                               std::ostringstream ss;
                               ss.precision(17);
                               ss << a;
                               return ss.str();
                           })
           << ","
           << detail::join(r.group_applies, [](std::uint8_t a) { return std::string(a ? "1" : "0"); })
           << "," << r.note << "\n";
    }
}

inline void write_aggregates_csv(const std::vector<Aggregate>& aggs, std::ostream& os,
                                 const std::string& hash) {
    os << "# config_hash=" << hash << "\n";
    os << "method,cost,splits,no_applicant_splits,induced_acc_mean,induced_acc_stderr,"
          "applying_mean,applying_stderr,rank_r2_mean,rank_r2_stderr\n";
    os.precision(17);
    for (const auto& a : aggs) {
        os << variant_name(a.method) << "," << a.cost << "," << a.splits << ","
           << a.no_applicant_splits << "," << detail::opt_str(a.induced_mean) << ","
           << detail::opt_str(a.induced_stderr) << "," << a.applying_mean << "," << a.applying_stderr
           << "," << detail::opt_str(a.rank_r2_mean) << "," << detail::opt_str(a.rank_r2_stderr)
           << "\n";
    }
}

inline void write_curves_csv(const PrecisionCurves& curves, std::ostream& os,
                             const std::string& hash) {
    os << "# config_hash=" << hash << "\n";
    os << "group,tau,precision,applies\n";
    os.precision(17);
    for (std::size_t z = 0; z < curves.precision.size(); ++z) {
        for (std::size_t k = 0; k < curves.grid.size(); ++k) {
            os << z << "," << curves.grid[k] << "," << detail::opt_str(curves.precision[z][k]) << ","
               << static_cast<int>(curves.applies[z][k]) << "\n";
        }
    }
}

inline nlohmann::json curves_to_json(const PrecisionCurves& curves) {
    nlohmann::json j;
    j["grid"] = curves.grid;
    j["groups"] = nlohmann::json::array();
    for (std::size_t z = 0; z < curves.precision.size(); ++z) {
        nlohmann::json g;
        g["group"] = z;
        nlohmann::json prc = nlohmann::json::array();
        for (const auto& p : curves.precision[z]) {
            if (p) {
                prc.push_back(*p);
            } else {
                prc.push_back(nullptr);
            }
        }
        g["precision"] = prc;
        g["applies"] = curves.applies[z];
        j["groups"].push_back(g);
    }
    return j;
}

// Run manifest: enough to reproduce every output file from scratch.
inline nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                                    const std::vector<std::string>& outputs) {
    nlohmann::json m;
    m["tool"] = "sslab";
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = config;
    m["config_hash"] = config_hash(config);
    m["outputs"] = outputs;
    return m;
}

inline void write_manifest(const nlohmann::json& manifest, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << manifest.dump(2) << "\n";
}

}  // namespace sslab
