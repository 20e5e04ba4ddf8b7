#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
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
#include "drgnn/robust.hpp"

namespace drgnn::verify {

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    Eigen::Index worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = true;
};

/// Objective returning its value and analytic gradient at a point.
using ValueAndGradient = std::function<ValueGrad(const Vector&)>;

inline constexpr double gradient_abs_floor = 1e-7;

/// Central differences on every coordinate. A coordinate whose analytic and
/// numeric values differ by at most 1e-7 counts as exact; otherwise the
/// error is |a - n| / max(|a|, |n|).
inline GradCheckReport finite_diff_grad_check(const ValueAndGradient& f, const Vector& point, double h, double tol) {
    if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad_check: h must be > 0");
    const auto analytic = f(point).grad;
    detail::require_shape(analytic.size() == point.size(), "finite_diff_grad_check: gradient length mismatch");

    GradCheckReport rep;
    Vector probe = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        probe(i) = point(i) + h;
        const double up = f(probe).value;
        probe(i) = point(i) - h;
        const double down = f(probe).value;
        probe(i) = point(i);
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericalFailure("finite_diff_grad_check: non-finite evaluation at coordinate " + std::to_string(i));
        const double numeric = (up - down) / (2.0 * h);
        const double diff = std::abs(numeric - analytic(i));
        rep.max_abs_error = std::max(rep.max_abs_error, diff);
        const double err = diff <= gradient_abs_floor ? 0.0 : diff / std::max(std::abs(numeric), std::abs(analytic(i)));
        if (err > rep.max_rel_error || rep.worst_index < 0) {
            rep.max_rel_error = std::max(rep.max_rel_error, err);
            rep.worst_index = i;
            rep.analytic_at_worst = analytic(i);
            rep.numeric_at_worst = numeric;
        }
    }
    rep.pass = rep.max_rel_error <= tol;
    return rep;
}

/// Smallest |pre-activation| over relu layers; finite differences are only
/// meaningful when this is well above the step size.
inline double min_relu_margin(const GnnModel& model, const ForwardTape& tape) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (model.layers[l].activation == Activation::relu)
            margin = std::min(margin, tape.pre_activation[l].cwiseAbs().minCoeff());
    return margin;
}

/// Largest ||grad L(a) - grad L(b)|| / ||a - b|| over random pairs: a is
/// uniform in the box X_s +- radius and b = a + r u with u a random unit
/// direction and r log-uniform in [1e-3, radius]. Unlike curvature_probe this
/// sees gradient jumps at relu kinks between the pair.
inline double secant_curvature(const GnnModel& model, const Graph& g, const Sample& sample, const LossSpec& spec,
                               double radius, std::size_t pairs, std::mt19937_64& rng) {
    if (!(radius > 1e-3)) throw InvalidArgument("secant_curvature: radius must exceed 1e-3");
    std::uniform_real_distribution<double> offset(-radius, radius), log_r(std::log(1e-3), std::log(radius));
    std::normal_distribution<double> normal(0.0, 1.0);
    double best = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        SignalMatrix a = sample.features, u(a.rows(), a.cols());
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a.data()[i] += offset(rng);
            u.data()[i] = normal(rng);
        }
        const double norm = u.norm();
        if (norm == 0.0) continue;
        const double r = std::exp(log_r(rng));
        const SignalMatrix b = a + (r / norm) * u;
        const auto ga = evaluate_loss(model, g, a, sample, spec).grad_input;
        const auto gb = evaluate_loss(model, g, b, sample, spec).grad_input;
        best = std::max(best, (ga - gb).norm() / r);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Exhaustive inner maximization on tiny instances

struct GridResult {
    SignalMatrix xi;
    double value = -std::numeric_limits<double>::infinity();
};

inline constexpr std::size_t max_grid_points = 1'000'000;

/// Evaluates psi on a uniform grid of `resolution` points per coordinate over
/// [X_s - radius, X_s + radius]; only defined for N*F <= 2.
inline GridResult grid_inner_max(const GnnModel& model, const Graph& g, const Sample& sample, double gamma,
                                 double rho, const LossSpec& spec, double radius, std::size_t resolution) {
    const auto dims = static_cast<std::size_t>(sample.features.size());
    if (dims > 2) throw InvalidArgument("grid_inner_max: instance too large (N*F must be <= 2)");
    if (resolution < 2) throw InvalidArgument("grid_inner_max: resolution must be >= 2");
    if (!(radius > 0.0)) throw InvalidArgument("grid_inner_max: radius must be > 0");
    std::size_t total = 1;
    for (std::size_t d = 0; d < dims; ++d) total *= resolution;
    if (total > max_grid_points) throw InvalidArgument("grid_inner_max: more than 1e6 grid points");

    const double spacing = 2.0 * radius / static_cast<double>(resolution - 1);
    GridResult best;
    SignalMatrix xi = sample.features;
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t d = 0; d < dims; ++d) {
            const auto step = rem % resolution;
            rem /= resolution;
            xi.data()[d] = sample.features.data()[d] - radius + spacing * static_cast<double>(step);
        }
        const double v = psi_value(model, g, xi, sample, gamma, rho, spec);
        if (v > best.value) {
            best.value = v;
            best.xi = xi;
        }
    }
    return best;
}

struct InnerComparison {
    double ascent_value = 0.0;
    double grid_value = 0.0;
    double gap = 0.0;
    SignalMatrix grid_xi;
    double curvature = 0.0;
    /// gamma does not exceed the curvature estimate: psi may not be concave,
    /// so disagreement is expected rather than a defect.
    bool concavity_warning = false;
};

/// Runs ascent and grid search on the same instance. The grid radius covers
/// the ascent's displacement and the gradient-based bound on the maximizer
/// unless given explicitly.
inline InnerComparison compare_inner_with_grid(const GnnModel& model, const Graph& g, const Sample& sample,
                                               double gamma, double rho, const LossSpec& spec, std::size_t steps,
                                               double step_size, std::size_t resolution, double curvature,
                                               std::optional<double> radius_override = std::nullopt) {
    InnerComparison c;
    c.curvature = curvature;
    c.concavity_warning = !(gamma > curvature);
    const auto ascent = inner_maximize(model, g, sample, gamma, rho, spec, steps, step_size);
    c.ascent_value = ascent.value;
    const double grad_norm = evaluate_loss(model, g, sample.features, sample, spec).grad_input.norm();
    const double radius =
        radius_override ? *radius_override
                        : std::max({grad_norm / gamma, 1.5 * (ascent.xi - sample.features).cwiseAbs().maxCoeff(), 0.05});
    auto grid = grid_inner_max(model, g, sample, gamma, rho, spec, radius, resolution);
    c.grid_value = grid.value;
    c.grid_xi = std::move(grid.xi);
    c.gap = std::abs(c.ascent_value - c.grid_value);
    return c;
}

// ---------------------------------------------------------------------------
// Weak duality

struct WeakDualityResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

inline constexpr double weak_duality_tol = 1e-9;

/// lhs = mean loss at a feasible perturbation set (mean cost <= rho);
/// rhs = dual objective at gamma. Weak duality demands lhs <= rhs.
inline WeakDualityResult weak_duality_check(const GnnModel& model, const Graph& g, const std::vector<Sample>& samples,
                                            double gamma, double rho, const LossSpec& spec,
                                            const std::vector<SignalMatrix>& perturbations, std::size_t steps,
                                            double step_size) {
    if (samples.empty()) throw InvalidArgument("weak_duality_check: no samples");
    detail::require_shape(perturbations.size() == samples.size(), "weak_duality_check: one perturbation per sample");
    double mean_cost = 0.0, lhs = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        mean_cost += transport_cost(samples[s].features, perturbations[s]).value;
        lhs += loss_value(model, g, perturbations[s], samples[s], spec);
    }
    mean_cost /= static_cast<double>(samples.size());
    lhs /= static_cast<double>(samples.size());
    if (mean_cost > rho * (1.0 + 1e-12) + 1e-15)
        throw InvalidArgument("weak_duality_check: perturbation set is infeasible (mean cost " +
                              std::to_string(mean_cost) + " > rho " + std::to_string(rho) + ")");
    WeakDualityResult r;
    r.lhs = lhs;
    r.rhs = dual_objective(model, g, samples, gamma, rho, spec, steps, step_size);
    r.pass = r.lhs <= r.rhs + weak_duality_tol;
    return r;
}

// ---------------------------------------------------------------------------
// Random instances shared by the suite and the tests

struct Instance {
    Graph graph;
    GnnModel model;
    SignalMatrix input;
};

inline Graph random_graph(std::size_t n, std::mt19937_64& rng, double edge_prob = 0.6) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (unif(rng) < edge_prob) edges.push_back({i, j, 0.1 + 0.9 * unif(rng)});
    return from_edge_list(n, edges);
}

inline SignalMatrix random_signal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    SignalMatrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    return x;
}

/// Random GNN with N <= max_nodes, L <= max_layers, K <= max_taps; resampled
/// until every relu pre-activation is at least `margin` away from zero.
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_nodes = 6, std::size_t max_layers = 2,
                                std::size_t max_taps = 3, std::size_t out_dim = 1, double margin = 1e-3) {
    std::uniform_int_distribution<std::size_t> nodes(2, max_nodes), layers(1, max_layers), taps(1, max_taps),
        width(1, 3);
    for (;;) {
        Instance inst;
        inst.graph = random_graph(nodes(rng), rng);
        const std::size_t n_layers = layers(rng);
        std::vector<LayerSpec> specs;
        std::size_t in = width(rng);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const bool last = l + 1 == n_layers;
            const std::size_t out = last ? out_dim : width(rng) + 1;
            specs.push_back({taps(rng), in, out, last ? Activation::identity : Activation::relu});
            in = out;
        }
        inst.model = init_model(specs, rng());
        inst.input = random_signal(static_cast<Eigen::Index>(inst.graph.n_nodes()),
                                   static_cast<Eigen::Index>(specs.front().in_features), rng);
        const auto fwd = forward(inst.model, inst.graph, inst.input);
        if (min_relu_margin(inst.model, fwd.tape) >= margin) return inst;
    }
}

/// Gradient check of <D, f(X; theta)> jointly in theta and X.
inline GradCheckReport check_network_gradients(const Instance& inst, const SignalMatrix& d_output, double h,
                                               double tol) {
    const Vector theta = flatten(inst.model.coefficients);
    const auto n_theta = theta.size();
    const auto n_x = inst.input.size();
    Vector point(n_theta + n_x);
    point << theta, Eigen::Map<const Vector>(inst.input.data(), n_x);

    auto objective = [&](const Vector& p) {
        GnnModel m = inst.model;
        unflatten(p.head(n_theta), m.coefficients);
        SignalMatrix x = inst.input;
        Eigen::Map<Vector>(x.data(), n_x) = p.tail(n_x);
        auto fwd = forward(m, inst.graph, x);
        const double value = frobenius_dot(d_output, fwd.output);
        const auto grads = backward(m, inst.graph, fwd.tape, d_output);
        Vector grad(p.size());
        grad << flatten(grads.params), Eigen::Map<const Vector>(grads.input.data(), n_x);
        return ValueGrad{value, std::move(grad)};
    };
    return finite_diff_grad_check(objective, point, h, tol);
}

/// Sample with every node observed and random labels.
inline Sample random_sample(const SignalMatrix& features, std::mt19937_64& rng, double label_scale = 1.0) {
    Sample s;
    s.features = features;
    std::normal_distribution<double> normal(0.0, label_scale);
    s.labels.resize(features.rows());
    for (Eigen::Index i = 0; i < s.labels.size(); ++i) s.labels(i) = normal(rng);
    s.observed.assign(static_cast<std::size_t>(features.rows()), true);
    return s;
}

/// f(xi) = xi on a single node with a single feature.
inline GnnModel identity_model() {
    GnnModel m;
    m.layers = {{1, 1, 1, Activation::identity}};
    m.coefficients = {{Matrix::Constant(1, 1, 1.0)}};
    return m;
}

inline Graph single_node_graph() { return Graph(Matrix::Zero(1, 1)); }

inline Sample scalar_sample(double x, double y) {
    return {Matrix::Constant(1, 1, x), Vector::Constant(1, y), {true}};
}

} // namespace drgnn::verify
