#pragma once

// The three training regimes: naive log-loss descent, semi-strategic
// threshold tuning, and the fully differentiable strategic objective with
// smoothed applications, a de-biased soft precision proxy, and penalties.
//
// Hard predictions used inside the precision correction are frozen once per
// gradient step and treated as constants in differentiation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslab/core.hpp"
#include "sslab/rng.hpp"
#include "sslab/selection.hpp"

namespace sslab {

enum class Variant { naive, semi, strat_x, strat_no_z, strat_parity };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::naive: return "naive";
        case Variant::semi: return "semi";
        case Variant::strat_x: return "strat_x";
        case Variant::strat_no_z: return "strat_no_z";
        case Variant::strat_parity: return "strat_parity";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "naive") return Variant::naive;
    if (s == "semi") return Variant::semi;
    if (s == "strat_x") return Variant::strat_x;
    if (s == "strat_no_z") return Variant::strat_no_z;
    if (s == "strat_parity") return Variant::strat_parity;
    throw std::invalid_argument("unknown method: " + s);
}

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 30000;
    double cost = 0.7;          // c
    double tolerance = 0.02;    // eps; training smooths applications at c + eps
    double tau_app = 5.0;       // application sigmoid temperature
    double tau_pred = 2.0;      // soft-prediction sigmoid temperature
    double lambda_app = 1.0 / 6.0;
    double lambda_perp = 0.0;   // used by strat_parity
    int init_count = 5;
    std::uint64_t seed = 0;
    Variant variant = Variant::strat_x;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (!(cost > 0.0 && cost < 1.0)) throw std::invalid_argument("config: cost must be in (0,1)");
        if (!(cost + tolerance < 1.0)) throw std::invalid_argument("config: c + eps must be < 1");
        if (tolerance < 0.0) throw std::invalid_argument("config: tolerance must be >= 0");
        if (!(tau_app >= 1.0)) throw std::invalid_argument("config: tau_app must be >= 1");
        if (!(tau_pred > 0.0)) throw std::invalid_argument("config: tau_pred must be > 0");
        if (lambda_app < 0.0 || lambda_perp < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
        if (init_count < 1) throw std::invalid_argument("config: init_count must be >= 1");
    }
};

struct TrainingError : std::runtime_error {
    std::size_t epoch;

    TrainingError(std::size_t e, const std::string& what)
        : std::runtime_error(what + " at epoch " + std::to_string(e)), epoch(e) {}
};

namespace detail {

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log-loss of sigmoid(t) against y, computed from the logit
inline double logloss_from_logit(double t, int y) {
    return softplus(t) - static_cast<double>(y) * t;
}

}  // namespace detail

// Bounded-domain sigmoid for smoothed applications: maps r in [-c, 1-c] to
// [0,1] with value 0.5 at r = 0. r + c is clamped to [delta, 1 - delta].
inline double smooth_sigmoid(double r, double c, double tau_app) {
    constexpr double kDelta = 1e-6;
    const double p = std::clamp(r + c, kDelta, 1.0 - kDelta);
    const double logit = std::log(p * (1.0 - c)) - std::log(c * (1.0 - p));
    return detail::stable_sigmoid(tau_app * logit);
}

// d smooth_sigmoid / dr; zero where the clamp is active
inline double smooth_sigmoid_grad(double r, double c, double tau_app) {
    constexpr double kDelta = 1e-6;
    const double p = r + c;
    if (!(p > kDelta && p < 1.0 - kDelta)) return 0.0;
    const double s = smooth_sigmoid(r, c, tau_app);
    return s * (1.0 - s) * tau_app / (p * (1.0 - p));
}

struct SoftPrecision {
    double value = 0.0;        // clipped to [0,1]
    double numerator = 0.0;    // sum_{j in z} y_j * ytilde_j
    double denominator = 0.0;  // sum_{j in z} ytilde_j - B_z
    bool clipped = false;
    bool degenerate = false;   // denominator <= 0
};

// De-biased soft precision for group z. B_z makes the threshold decision of
// the unclipped ratio coincide with the hard-precision decision; hard
// predictions enter only through B_z and carry no gradient.
inline SoftPrecision soft_precision(const Dataset& ds, int z, std::span<const double> ytilde,
                                    std::span<const int> yhat_frozen, double c) {
    if (ytilde.size() != ds.size() || yhat_frozen.size() != ds.size()) {
        throw std::invalid_argument("soft_precision: length mismatch");
    }
    SoftPrecision out;
    double soft_sum = 0.0, correction = 0.0;
    bool seen = false;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.groups[j] != z) continue;
        seen = true;
        const double yt = ytilde[j];
        soft_sum += yt;
        if (ds.labels[j] == 1) out.numerator += yt;
        correction += (static_cast<double>(ds.labels[j]) - c) *
                      (static_cast<double>(yhat_frozen[j]) - yt);
    }
    if (!seen) throw std::invalid_argument("soft_precision: empty group");
    out.denominator = soft_sum - correction / c;
    if (out.denominator <= 0.0) {
        out.degenerate = true;
        out.clipped = true;
        out.value = out.numerator > 0.0 ? 1.0 : 0.0;
        return out;
    }
    const double raw = out.numerator / out.denominator;
    out.value = std::clamp(raw, 0.0, 1.0);
    out.clipped = raw != out.value;
    return out;
}

struct SoftState {
    std::vector<double> ytilde;                 // soft predictions
    std::vector<int> yhat;                      // frozen hard predictions
    std::vector<SoftPrecision> group_precision; // prc~_z
    std::vector<double> group_application;      // a~_z
    std::vector<double> weights;                // w_i^f, sum 1 when mass > 0
    double applicant_mass = 0.0;                // m~^f
    double weighted_loss = 0.0;
    double app_penalty = 0.0;                   // R_app
    double parity_penalty = 0.0;                // R_perp
};

struct Objective {
    double loss = 0.0;
    SoftState state;
};

namespace detail {

// Shared evaluation for the strategic objective; when grad_w is non-null the
// analytic gradient is accumulated into (*grad_w, *grad_b).
inline Objective strategic_objective_impl(const LinearModel& model, const Dataset& ds,
                                          const TrainConfig& cfg, std::span<const int> yhat_frozen,
                                          std::vector<double>* grad_w, double* grad_b) {
    cfg.validate();
    if (model.weights.size() != ds.dim) throw std::invalid_argument("strategic_objective: dimension mismatch");
    if (yhat_frozen.size() != ds.size()) throw std::invalid_argument("strategic_objective: frozen predictions length mismatch");

    const std::size_t m = ds.size();
    const auto K = static_cast<std::size_t>(ds.group_count);
    const double ce = cfg.cost + cfg.tolerance;
    const double lam_perp = cfg.variant == Variant::strat_parity ? cfg.lambda_perp : 0.0;
    constexpr double kNoApplicantLoss = 1e6;

    Objective out;
    SoftState& st = out.state;
    st.yhat.assign(yhat_frozen.begin(), yhat_frozen.end());
    st.ytilde.resize(m);

    std::vector<double> logit(m), ell(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double phi = score(model, ds.row(i));
        logit[i] = cfg.tau_pred * phi;
        st.ytilde[i] = stable_sigmoid(logit[i]);
        ell[i] = logloss_from_logit(logit[i], ds.labels[i]);
    }

    st.group_precision.resize(K);
    st.group_application.resize(K);
    for (std::size_t z = 0; z < K; ++z) {
        st.group_precision[z] =
            soft_precision(ds, static_cast<int>(z), st.ytilde, st.yhat, cfg.cost);
        st.group_application[z] =
            smooth_sigmoid(st.group_precision[z].value - ce, ce, cfg.tau_app);
    }

    const auto sizes = ds.group_sizes();
    std::vector<double> group_loss_sum(K, 0.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto z = static_cast<std::size_t>(ds.groups[i]);
        group_loss_sum[z] += ell[i];
        mass += st.group_application[z];
    }
    st.applicant_mass = mass;

    st.weights.assign(m, 0.0);
    if (mass > 0.0) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto z = static_cast<std::size_t>(ds.groups[i]);
            st.weights[i] = st.group_application[z] / mass;
            wsum += st.weights[i] * ell[i];
        }
        st.weighted_loss = wsum;
    } else {
        st.weighted_loss = kNoApplicantLoss;
    }

    // R_app: per-group max soft prediction, plus max smoothed application
    std::vector<std::size_t> argmax_yt(K, 0);
    std::vector<double> max_yt(K, -1.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto z = static_cast<std::size_t>(ds.groups[i]);
        if (st.ytilde[i] > max_yt[z]) {
            max_yt[z] = st.ytilde[i];
            argmax_yt[z] = i;
        }
    }
    std::size_t argmax_app = 0;
    for (std::size_t z = 1; z < K; ++z) {
        if (st.group_application[z] > st.group_application[argmax_app]) argmax_app = z;
    }
    double r_app = -std::log(st.group_application[argmax_app]);
    for (std::size_t z = 0; z < K; ++z) r_app -= std::log(max_yt[z]) / static_cast<double>(K);
    st.app_penalty = r_app;

    // R_perp: squared gap between group mean and global mean soft prediction
    std::vector<double> group_mean(K, 0.0);
    double global_mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        group_mean[static_cast<std::size_t>(ds.groups[i])] += st.ytilde[i];
        global_mean += st.ytilde[i];
    }
    global_mean /= static_cast<double>(m);
    std::vector<double> gap(K, 0.0);
    double r_perp = 0.0, gap_sum = 0.0;
    for (std::size_t z = 0; z < K; ++z) {
        group_mean[z] /= static_cast<double>(sizes[z]);
        gap[z] = group_mean[z] - global_mean;
        r_perp += gap[z] * gap[z];
        gap_sum += gap[z];
    }
    r_perp /= static_cast<double>(K);
    st.parity_penalty = r_perp;

    out.loss = st.weighted_loss + cfg.lambda_app * st.app_penalty + lam_perp * st.parity_penalty;

    if (!grad_w) return out;

    grad_w->assign(ds.dim, 0.0);
    *grad_b = 0.0;

    // dL/da~_z: weighted-loss term plus the max-application penalty
    std::vector<double> d_app(K, 0.0);
    if (mass > 0.0) {
        for (std::size_t z = 0; z < K; ++z) {
            d_app[z] = (group_loss_sum[z] - static_cast<double>(sizes[z]) * st.weighted_loss) / mass;
        }
    }
    d_app[argmax_app] += -cfg.lambda_app / st.group_application[argmax_app];

    // dL/dprc~_z through the application sigmoid; zero when the clip is active
    std::vector<double> d_prc(K, 0.0);
    for (std::size_t z = 0; z < K; ++z) {
        if (st.group_precision[z].clipped) continue;
        d_prc[z] = d_app[z] *
                   smooth_sigmoid_grad(st.group_precision[z].value - ce, ce, cfg.tau_app);
    }

    for (std::size_t i = 0; i < m; ++i) {
        const auto z = static_cast<std::size_t>(ds.groups[i]);
        double d_yt = 0.0;
        if (d_prc[z] != 0.0 && ds.labels[i] == 1) {
            const double N = st.group_precision[z].numerator;
            const double D = st.group_precision[z].denominator;
            d_yt += d_prc[z] * (D - N / cfg.cost) / (D * D);
        }
        if (i == argmax_yt[z]) {
            d_yt += -cfg.lambda_app / (static_cast<double>(K) * max_yt[z]);
        }
        if (lam_perp > 0.0) {
            d_yt += lam_perp * (2.0 / static_cast<double>(K)) *
                    (gap[z] / static_cast<double>(sizes[z]) - gap_sum / static_cast<double>(m));
        }
        double d_phi = d_yt * cfg.tau_pred * st.ytilde[i] * (1.0 - st.ytilde[i]);
        if (mass > 0.0) {
            d_phi += st.weights[i] * cfg.tau_pred * (st.ytilde[i] - static_cast<double>(ds.labels[i]));
        }
        const auto x = ds.row(i);
        for (std::size_t j = 0; j < ds.dim; ++j) (*grad_w)[j] += d_phi * x[j];
        *grad_b += d_phi;
    }
    return out;
}

}  // namespace detail

inline Objective strategic_objective(const LinearModel& model, const Dataset& ds,
                                     const TrainConfig& cfg, std::span<const int> yhat_frozen) {
    return detail::strategic_objective_impl(model, ds, cfg, yhat_frozen, nullptr, nullptr);
}

inline Objective strategic_objective_grad(const LinearModel& model, const Dataset& ds,
                                          const TrainConfig& cfg, std::span<const int> yhat_frozen,
                                          std::vector<double>& grad_w, double& grad_b) {
    return detail::strategic_objective_impl(model, ds, cfg, yhat_frozen, &grad_w, &grad_b);
}

// Full-batch gradient descent on mean log-loss of sigmoid(phi(x)) against y.
inline LinearModel train_naive(const Dataset& ds, const TrainConfig& cfg) {
    ds.validate();
    cfg.validate();
    const std::size_t m = ds.size();
    Rng rng(cfg.seed);
    LinearModel model;
    model.weights.resize(ds.dim);
    for (auto& w : model.weights) w = 0.01 * rng.normal();
    model.bias = 0.01 * rng.normal();

    std::vector<double> grad(ds.dim);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0, loss = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto x = ds.row(i);
            const double phi = score(model, x);
            loss += detail::logloss_from_logit(phi, ds.labels[i]);
            const double g = detail::stable_sigmoid(phi) - static_cast<double>(ds.labels[i]);
            for (std::size_t j = 0; j < ds.dim; ++j) grad[j] += g * x[j];
            grad_b += g;
        }
        loss /= static_cast<double>(m);
        if (!std::isfinite(loss)) throw TrainingError(epoch, "naive training: non-finite loss");
        const double step = cfg.learning_rate / static_cast<double>(m);
        for (std::size_t j = 0; j < ds.dim; ++j) model.weights[j] -= step * grad[j];
        model.bias -= step * grad_b;
    }
    return model;
}

// Exhaustive line search over candidate thresholds (midpoints between
// consecutive distinct scores plus +-inf sentinels), maximizing hard induced
// accuracy on the given set. Ties resolve to the smallest threshold. Empty
// optional when every threshold yields no applicants.
inline std::optional<double> tune_threshold_semi(const LinearModel& model, const Dataset& ds,
                                                 const CostSchedule& costs) {
    ds.validate();
    costs.validate(ds.group_count);
    const std::vector<double> s = scores(model, ds);
    const auto K = static_cast<std::size_t>(ds.group_count);
    const auto sizes = ds.group_sizes();

    // examples sorted ascending by score; sweep removes them from the
    // positive set as the threshold rises
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

    std::vector<std::int64_t> pos_pred(K), tp(K), correct(K);
    for (std::size_t z = 0; z < K; ++z) pos_pred[z] = static_cast<std::int64_t>(sizes[z]);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto z = static_cast<std::size_t>(ds.groups[i]);
        tp[z] += ds.labels[i];
        correct[z] += ds.labels[i];  // yhat = 1 everywhere at tau = -inf
    }

    std::optional<double> best_tau;
    std::int64_t best_correct = 0, best_count = 0;

    const auto consider = [&](double tau) {
        std::int64_t csum = 0, nsum = 0;
        for (std::size_t z = 0; z < K; ++z) {
            if (pos_pred[z] <= 0) continue;
            const double prc = static_cast<double>(tp[z]) / static_cast<double>(pos_pred[z]);
            if (prc >= costs.effective(static_cast<int>(z))) {
                csum += correct[z];
                nsum += static_cast<std::int64_t>(sizes[z]);
            }
        }
        if (nsum == 0) return;
        // exact fraction comparison; strict improvement keeps the smallest tau
        if (!best_tau || csum * best_count > best_correct * nsum) {
            best_tau = tau;
            best_correct = csum;
            best_count = nsum;
        }
    };

    consider(-std::numeric_limits<double>::infinity());
    std::size_t i = 0;
    while (i < ds.size()) {
        const double v = s[idx[i]];
        while (i < ds.size() && s[idx[i]] == v) {
            const std::size_t e = idx[i];
            const auto z = static_cast<std::size_t>(ds.groups[e]);
            --pos_pred[z];
            tp[z] -= ds.labels[e];
            correct[z] += ds.labels[e] == 1 ? -1 : 1;
            ++i;
        }
        const double tau = i < ds.size() ? 0.5 * (v + s[idx[i]])
                                         : std::numeric_limits<double>::infinity();
        consider(tau);
    }
    return best_tau;
}

struct InitSummary {
    int init = 0;
    double final_loss = 0.0;
    std::optional<double> induced_train_accuracy;
    int applying_groups = 0;
};

struct TrainingLog {
    std::vector<InitSummary> inits;
    int chosen = -1;
    std::vector<double> loss_samples;  // chosen initialization
};

struct StrategicResult {
    LinearModel model;
    TrainingLog log;
};

// Drops the group one-hot block for the variants that must not see it.
inline Dataset variant_features(const Dataset& ds, Variant v) {
    const bool strip = v == Variant::strat_no_z || v == Variant::strat_parity;
    if (!strip || !ds.group_onehot_start) return ds;
    const std::size_t start = *ds.group_onehot_start;
    const auto K = static_cast<std::size_t>(ds.group_count);
    Dataset out;
    out.dim = ds.dim - K;
    out.labels = ds.labels;
    out.groups = ds.groups;
    out.group_count = ds.group_count;
    out.features.reserve(ds.size() * out.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto r = ds.row(i);
        for (std::size_t j = 0; j < ds.dim; ++j) {
            if (j >= start && j < start + K) continue;
            out.features.push_back(r[j]);
        }
    }
    for (std::size_t c : ds.numeric_columns) {
        if (c < start) {
            out.numeric_columns.push_back(c);
        } else if (c >= start + K) {
            out.numeric_columns.push_back(c - K);
        }
    }
    if (!ds.feature_names.empty()) {
        for (std::size_t j = 0; j < ds.dim; ++j) {
            if (j >= start && j < start + K) continue;
            out.feature_names.push_back(ds.feature_names[j]);
        }
    }
    return out;
}

using StepObserver = std::function<void(std::size_t epoch, double loss, const SoftState&)>;

// Strategic training: init_count Gaussian initializations, full-batch descent
// with frozen hard predictions refreshed every step, best model picked by
// hard induced training accuracy at threshold 0 and plain cost.
inline StrategicResult train_strategic(const Dataset& input, const TrainConfig& cfg,
                                       const StepObserver& observer = {}) {
    input.validate();
    cfg.validate();
    const Dataset ds = variant_features(input, cfg.variant);
    const std::size_t m = ds.size();
    const std::size_t sample_every = std::max<std::size_t>(1, cfg.epochs / 200);

    Rng rng(cfg.seed);
    StrategicResult best;
    TrainingLog log;
    bool best_has_applicants = false;
    double best_acc = -1.0;

    std::vector<double> grad_w(ds.dim);
    std::vector<int> frozen(m);
    for (int init = 0; init < cfg.init_count; ++init) {
        LinearModel model;
        model.weights.resize(ds.dim);
        for (auto& w : model.weights) w = 0.01 * rng.normal();
        model.bias = 0.01 * rng.normal();

        std::vector<double> samples;
        double last_loss = 0.0;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (std::size_t i = 0; i < m; ++i) frozen[i] = score(model, ds.row(i)) > 0.0 ? 1 : 0;
            double grad_b = 0.0;
            const Objective obj = strategic_objective_grad(model, ds, cfg, frozen, grad_w, grad_b);
            if (!std::isfinite(obj.loss)) throw TrainingError(epoch, "strategic training: non-finite loss");
            if (observer) observer(epoch, obj.loss, obj.state);
            if (epoch % sample_every == 0) samples.push_back(obj.loss);
            for (std::size_t j = 0; j < ds.dim; ++j) model.weights[j] -= cfg.learning_rate * grad_w[j];
            model.bias -= cfg.learning_rate * grad_b;
            last_loss = obj.loss;
        }
        if (!model.finite()) throw TrainingError(cfg.epochs, "strategic training: non-finite parameters");

        const std::vector<int> yhat = predictions(model, ds, 0.0);
        const ApplicationProfile profile =
            decide_applications(ds, yhat, CostSchedule::flat(cfg.cost));
        const std::optional<double> acc = induced_accuracy(ds, yhat, profile);

        InitSummary summary;
        summary.init = init;
        summary.final_loss = last_loss;
        summary.induced_train_accuracy = acc;
        summary.applying_groups = profile.applying_groups();
        log.inits.push_back(summary);

        const bool has_app = acc.has_value();
        const double acc_v = acc.value_or(-1.0);
        const bool better = log.chosen < 0 || (has_app && !best_has_applicants) ||
                            (has_app == best_has_applicants && acc_v > best_acc);
        if (better) {
            best.model = std::move(model);
            best_has_applicants = has_app;
            best_acc = acc_v;
            log.chosen = init;
            log.loss_samples = std::move(samples);
        }
    }
    best.log = std::move(log);
    return best;
}

// Hard induced accuracy at a fixed threshold and flat cost; empty optional
// when no group applies.
inline std::optional<double> hard_induced_accuracy(const Dataset& ds, const LinearModel& model,
                                                   double tau, double c) {
    return induced_accuracy(ds, model, tau, CostSchedule::flat(c));
}

}  // namespace sslab
