#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/loss.hpp"
#include "drgnn/matrix.hpp"
#include "drgnn/nn.hpp"
#include "drgnn/parallel.hpp"

namespace drgnn {

struct RobustConfig {
    double rho = 10.0;
    /// Unset: twice the floor.
    std::optional<double> gamma_init;
    /// Unset: taken from curvature_probe on the initial model.
    std::optional<double> gamma_floor;
    std::size_t ascent_steps = 15;
    double ascent_step_size = 0.1;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    LossSpec loss_spec;
    std::uint64_t seed = 0;
    /// Worker threads for the per-sample inner problems (0 = hardware).
    std::size_t threads = 0;
};

inline void validate(const RobustConfig& c) {
    if (!(c.rho >= 0.0)) throw ConfigError("rho must be >= 0");
    if (c.gamma_floor && !(*c.gamma_floor > 0.0)) throw ConfigError("gamma_floor must be > 0");
    if (c.gamma_floor && c.gamma_init && !(*c.gamma_init > *c.gamma_floor))
        throw ConfigError("gamma_init must exceed gamma_floor");
    if (c.ascent_steps < 1) throw ConfigError("ascent_steps must be >= 1");
    if (!(c.ascent_step_size > 0.0)) throw ConfigError("ascent_step_size must be > 0");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.loss_spec.kind == LossKind::huber && !(c.loss_spec.huber_delta > 0.0))
        throw ConfigError("huber_delta must be > 0");
    if (!(c.loss_spec.lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be >= 0");
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step = 0;

    static AdamState zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

struct AdamResult {
    AdamState state;
    Vector params;
};

inline constexpr double adam_beta1 = 0.9;
inline constexpr double adam_beta2 = 0.999;
inline constexpr double adam_epsilon = 1e-8;

inline AdamResult adam_step(const AdamState& state, const Vector& params, const Vector& grads, double lr) {
    detail::require_shape(params.size() == grads.size() && state.first_moment.size() == params.size() &&
                              state.second_moment.size() == params.size(),
                          "adam_step: parameter/gradient/state sizes disagree");
    AdamResult r;
    r.state.step = state.step + 1;
    r.state.first_moment = adam_beta1 * state.first_moment + (1.0 - adam_beta1) * grads;
    r.state.second_moment = adam_beta2 * state.second_moment + (1.0 - adam_beta2) * grads.cwiseAbs2();
    const double t = static_cast<double>(r.state.step);
    const double c1 = 1.0 - std::pow(adam_beta1, t);
    const double c2 = 1.0 - std::pow(adam_beta2, t);
    const Vector m_hat = r.state.first_moment / c1;
    const Vector v_hat = r.state.second_moment / c2;
    r.params = params - lr * (m_hat.array() / (v_hat.array().sqrt() + adam_epsilon)).matrix();
    return r;
}

// ---------------------------------------------------------------------------
// Inner maximization over xi

struct InnerResult {
    SignalMatrix xi;
    double value = 0.0;
    /// psi at the start point followed by every accepted iterate.
    std::vector<double> trace;
};

/// Backtracking gradient ascent on psi starting from the sample's features.
/// A step is taken only if psi strictly increases; otherwise the step size
/// halves (at most 20 times per iteration, after which ascent stops). The
/// reduced step size carries over to later iterations.
inline InnerResult inner_maximize(const GnnModel& model, const Graph& g, const Sample& sample, double gamma,
                                  double rho, const LossSpec& spec, std::size_t steps, double step_size) {
    if (!(gamma > 0.0)) throw InvalidArgument("inner_maximize: gamma must be > 0");
    if (!(step_size > 0.0)) throw InvalidArgument("inner_maximize: step size must be > 0");
    constexpr int max_halvings = 20;

    InnerResult r;
    r.xi = sample.features;
    auto current = psi(model, g, r.xi, sample, gamma, rho, spec);
    if (!std::isfinite(current.value)) throw NumericalFailure("inner_maximize: non-finite psi at start point");
    r.trace.push_back(current.value);

    double eta = step_size;
    for (std::size_t t = 0; t < steps; ++t) {
        if (current.grad.squaredNorm() == 0.0) break;
        bool accepted = false;
        for (int h = 0; h <= max_halvings; ++h) {
            SignalMatrix candidate = r.xi + eta * current.grad;
            auto next = psi(model, g, candidate, sample, gamma, rho, spec);
            if (!std::isfinite(next.value))
                throw NumericalFailure("inner_maximize: psi became non-finite (gamma=" + std::to_string(gamma) +
                                       " may be below the concavity threshold)");
            if (next.value > current.value) {
                r.xi = std::move(candidate);
                current = std::move(next);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;
        r.trace.push_back(current.value);
    }
    r.value = current.value;
    return r;
}

inline bool is_nondecreasing(const std::vector<double>& trace) {
    return std::adjacent_find(trace.begin(), trace.end(), [](double a, double b) { return b < a; }) == trace.end();
}

/// (1/|batch|) sum_s psi(xi_s*), each xi_s* from inner_maximize.
inline double dual_objective(const GnnModel& model, const Graph& g, const std::vector<Sample>& batch, double gamma,
                             double rho, const LossSpec& spec, std::size_t steps, double step_size) {
    if (batch.empty()) throw InvalidArgument("dual_objective: empty batch");
    std::vector<double> values(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        values[i] = inner_maximize(model, g, batch[i], gamma, rho, spec, steps, step_size).value;
    });
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Curvature estimate for gamma_floor

/// Largest observed ||grad L(x + h v) - grad L(x)|| / h over random unit
/// directions v (h = 1e-3), cycling through the given samples.
inline double curvature_probe(const GnnModel& model, const Graph& g, const std::vector<Sample>& samples,
                              const LossSpec& spec, std::size_t probes, std::uint64_t seed) {
    if (probes < 1) throw InvalidArgument("curvature_probe: probes must be >= 1");
    if (samples.empty()) throw InvalidArgument("curvature_probe: no samples");
    constexpr double h = 1e-3;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double best = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        const Sample& s = samples[p % samples.size()];
        SignalMatrix v(s.features.rows(), s.features.cols());
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);
        const double norm = v.norm();
        if (norm == 0.0) continue;
        v /= norm;
        const auto g0 = evaluate_loss(model, g, s.features, s, spec).grad_input;
        const auto g1 = evaluate_loss(model, g, s.features + h * v, s, spec).grad_input;
        best = std::max(best, (g1 - g0).norm() / h);
    }
    return best;
}

/// gamma_floor actually used when the config leaves it unset.
inline double suggest_gamma_floor(double curvature_estimate) { return std::max(curvature_estimate, 1e-3); }

struct ResolvedGamma {
    double floor = 0.0;
    double init = 0.0;
};

inline ResolvedGamma resolve_gamma(const RobustConfig& cfg, const GnnModel& model, const Graph& g,
                                   const std::vector<Sample>& samples) {
    ResolvedGamma r;
    r.floor = cfg.gamma_floor ? *cfg.gamma_floor
                              : suggest_gamma_floor(curvature_probe(model, g, samples, cfg.loss_spec, 32, cfg.seed));
    r.init = cfg.gamma_init ? *cfg.gamma_init : 2.0 * r.floor;
    if (!(r.init > r.floor)) throw ConfigError("gamma_init must exceed gamma_floor");
    return r;
}

// ---------------------------------------------------------------------------
// Training loops

struct EpochRecord {
    std::size_t epoch = 0;
    /// Robust: mean dual objective over batches. ERM: mean batch loss.
    double objective = 0.0;
    double gamma = 0.0;
    /// Mean psi(xi*) - psi(X_s) over the epoch's inner problems.
    double ascent_improvement = 0.0;
    /// Mean transport cost of the inner maximizers.
    double mean_cost = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::string mode;
    std::vector<EpochRecord> epochs;
    double gamma_floor = 0.0;
    double final_gamma = 0.0;
    /// Mean clean training loss after the last update.
    double final_train_loss = 0.0;
    std::size_t steps = 0;
    std::size_t traces_checked = 0;
    std::size_t nonmonotone_traces = 0;
    std::size_t gamma_violations = 0;
};

struct RobustTrainResult {
    GnnModel model;
    double gamma = 0.0;
    TrainReport report;
};

struct ErmTrainResult {
    GnnModel model;
    TrainReport report;
};

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

inline double mean_clean_loss(const GnnModel& model, const Graph& g, const std::vector<Sample>& data,
                              const LossSpec& spec, std::size_t threads) {
    std::vector<double> values(data.size());
    parallel_for(data.size(), [&](std::size_t i) { values[i] = loss_value(model, g, data[i].features, data[i], spec); },
                 threads);
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(data.size());
}

inline void check_training_inputs(const std::vector<Sample>& data, const Graph& g, const GnnModel& model) {
    if (data.empty()) throw InvalidArgument("training: empty dataset");
    check_model(model);
    for (const auto& s : data) {
        validate_sample(s);
        require_shape(s.n_nodes() == g.n_nodes(), "training: sample/graph node count mismatch");
        require_shape(static_cast<std::size_t>(s.features.cols()) == model.input_dim(),
                      "training: sample features do not match model input");
    }
    require_shape(model.output_dim() == 1, "training: model must output one value per node");
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

} // namespace detail

/// Empirical risk minimization with mini-batch Adam.
inline ErmTrainResult erm_train(const std::vector<Sample>& data, const Graph& g, const GnnModel& model_init,
                                const RobustConfig& cfg, const std::string& mode = "erm") {
    validate(cfg);
    detail::check_training_inputs(data, g, model_init);

    ErmTrainResult out{model_init, {}};
    out.report.mode = mode;
    std::mt19937_64 rng(cfg.seed);
    Vector theta = flatten(out.model.coefficients);
    AdamState adam = AdamState::zeros(theta.size());

    struct PerSample {
        double loss = 0.0;
        Vector grad;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const auto order = detail::shuffled(data.size(), rng);
        double objective_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t m = std::min(cfg.batch_size, order.size() - b);
            std::vector<PerSample> per(m);
            parallel_for(m, [&](std::size_t i) {
                const Sample& s = data[order[b + i]];
                auto ev = evaluate_loss(out.model, g, s.features, s, cfg.loss_spec);
                per[i] = {ev.value, flatten(ev.grad_params)};
            }, cfg.threads);

            double loss = 0.0;
            Vector grad = Vector::Zero(theta.size());
            for (const auto& p : per) {
                loss += p.loss;
                grad += p.grad;
            }
            loss /= static_cast<double>(m);
            grad /= static_cast<double>(m);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalFailure("erm_train: non-finite loss/gradient at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(n_batches));
            auto step = adam_step(adam, theta, grad, cfg.learning_rate);
            adam = std::move(step.state);
            theta = std::move(step.params);
            unflatten(theta, out.model.coefficients);
            objective_sum += loss;
            ++n_batches;
            ++out.report.steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.objective = objective_sum / static_cast<double>(n_batches);
        rec.seconds = detail::elapsed_seconds(start);
        out.report.epochs.push_back(rec);
    }
    out.report.final_train_loss = detail::mean_clean_loss(out.model, g, data, cfg.loss_spec, cfg.threads);
    return out;
}

/// Distributionally robust training: per mini-batch, solve each sample's
/// inner maximization, then take one Adam step on [theta, gamma] using the
/// gradients at the maximizers (Danskin), and project gamma above the floor.
inline RobustTrainResult robust_train(const std::vector<Sample>& data, const Graph& g, const GnnModel& model_init,
                                      const RobustConfig& cfg) {
    validate(cfg);
    detail::check_training_inputs(data, g, model_init);
    const auto gamma_cfg = resolve_gamma(cfg, model_init, g, data);
    const double gamma_min = gamma_cfg.floor * (1.0 + 1e-6);

    RobustTrainResult out{model_init, gamma_cfg.init, {}};
    out.report.mode = "robust";
    out.report.gamma_floor = gamma_cfg.floor;
    std::mt19937_64 rng(cfg.seed);

    const Vector theta0 = flatten(out.model.coefficients);
    const Eigen::Index n_theta = theta0.size();
    Vector params(n_theta + 1);
    params << theta0, out.gamma;
    AdamState adam = AdamState::zeros(params.size());

    struct PerSample {
        double psi = 0.0;
        double improvement = 0.0;
        double cost = 0.0;
        bool monotone = true;
        Vector grad;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const auto order = detail::shuffled(data.size(), rng);
        double objective_sum = 0.0, improvement_sum = 0.0, cost_sum = 0.0;
        std::size_t n_batches = 0, n_inner = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t m = std::min(cfg.batch_size, order.size() - b);
            const double gamma = out.gamma;
            std::vector<PerSample> per(m);
            parallel_for(m, [&](std::size_t i) {
                const Sample& s = data[order[b + i]];
                auto inner = inner_maximize(out.model, g, s, gamma, cfg.rho, cfg.loss_spec, cfg.ascent_steps,
                                            cfg.ascent_step_size);
                auto ev = evaluate_loss(out.model, g, inner.xi, s, cfg.loss_spec);
                per[i].psi = inner.value;
                per[i].improvement = inner.value - inner.trace.front();
                per[i].cost = (inner.xi - s.features).squaredNorm();
                per[i].monotone = is_nondecreasing(inner.trace);
                per[i].grad = flatten(ev.grad_params);
            }, cfg.threads);

            double objective = 0.0, improvement = 0.0, cost = 0.0;
            Vector grad = Vector::Zero(params.size());
            for (const auto& p : per) {
                objective += p.psi;
                improvement += p.improvement;
                cost += p.cost;
                grad.head(n_theta) += p.grad;
                ++out.report.traces_checked;
                if (!p.monotone) ++out.report.nonmonotone_traces;
            }
            const double inv_m = 1.0 / static_cast<double>(m);
            objective *= inv_m;
            grad.head(n_theta) *= inv_m;
            // d psi / d gamma = rho - c(X_s, xi_s*)
            grad(n_theta) = cfg.rho - cost * inv_m;
            if (!std::isfinite(objective) || !grad.allFinite())
                throw NumericalFailure("robust_train: non-finite objective at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(n_batches) + " (gamma=" +
                                       std::to_string(gamma) + ")");

            auto step = adam_step(adam, params, grad, cfg.learning_rate);
            adam = std::move(step.state);
            params = std::move(step.params);
            params(n_theta) = std::max(params(n_theta), gamma_min);
            out.gamma = params(n_theta);
            if (!(out.gamma > gamma_cfg.floor)) ++out.report.gamma_violations;
            unflatten(params.head(n_theta), out.model.coefficients);

            objective_sum += objective;
            improvement_sum += improvement;
            cost_sum += cost;
            n_inner += m;
            ++n_batches;
            ++out.report.steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.objective = objective_sum / static_cast<double>(n_batches);
        rec.gamma = out.gamma;
        rec.ascent_improvement = improvement_sum / static_cast<double>(n_inner);
        rec.mean_cost = cost_sum / static_cast<double>(n_inner);
        rec.seconds = detail::elapsed_seconds(start);
        out.report.epochs.push_back(rec);
    }
    out.report.final_gamma = out.gamma;
    out.report.final_train_loss = detail::mean_clean_loss(out.model, g, data, cfg.loss_spec, cfg.threads);
    return out;
}

} // namespace drgnn
