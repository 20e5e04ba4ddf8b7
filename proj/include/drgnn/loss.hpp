#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/matrix.hpp"
#include "drgnn/nn.hpp"

namespace drgnn {

/// One graph snapshot: features at every node, labels at every node (only
/// trusted where observed), and the observed-node mask.
struct Sample {
    SignalMatrix features;
    Vector labels;
    std::vector<bool> observed;

    std::size_t n_nodes() const { return static_cast<std::size_t>(features.rows()); }

    bool operator==(const Sample& o) const {
        return features == o.features && labels == o.labels && observed == o.observed;
    }
};

inline void validate_sample(const Sample& s) {
    const auto n = s.features.rows();
    detail::require_shape(s.labels.size() == n && static_cast<Eigen::Index>(s.observed.size()) == n,
                          "sample: features/labels/mask lengths disagree");
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!s.observed[static_cast<std::size_t>(i)]) continue;
        any = true;
        if (!std::isfinite(s.labels(i))) throw InvalidArgument("sample: non-finite label at observed node");
    }
    if (!any) throw InvalidArgument("sample: no observed nodes");
    if (!all_finite(s.features)) throw InvalidArgument("sample: non-finite features");
}

enum class LossKind { squared, huber };

inline std::string to_string(LossKind k) { return k == LossKind::squared ? "squared" : "huber"; }

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "squared") return LossKind::squared;
    if (s == "huber") return LossKind::huber;
    throw InvalidArgument("unknown loss kind '" + s + "'");
}

struct LossSpec {
    LossKind kind = LossKind::huber;
    double huber_delta = 1.0;
    double lambda_reg = 0.0;
};

struct ValueGrad {
    double value = 0.0;
    Vector grad;
};

struct ValueGradMatrix {
    double value = 0.0;
    Matrix grad;
};

/// Masked supervised loss summed over observed nodes.
inline ValueGrad supervised_loss(const Vector& pred, const Sample& sample, const LossSpec& spec) {
    const auto n = sample.labels.size();
    detail::require_shape(pred.size() == n && static_cast<Eigen::Index>(sample.observed.size()) == n,
                          "supervised_loss: prediction length " + std::to_string(pred.size()) +
                              " vs labels " + std::to_string(n));
    if (spec.kind == LossKind::huber && !(spec.huber_delta > 0.0))
        throw InvalidArgument("supervised_loss: huber_delta must be positive");

    ValueGrad out{0.0, Vector::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!sample.observed[static_cast<std::size_t>(i)]) continue;
        const double r = pred(i) - sample.labels(i);
        if (spec.kind == LossKind::squared) {
            out.value += r * r;
            out.grad(i) = 2.0 * r;
        } else {
            const double d = spec.huber_delta;
            if (std::abs(r) <= d) {
                out.value += 0.5 * r * r;
                out.grad(i) = r;
            } else {
                out.value += d * std::abs(r) - 0.5 * d * d;
                out.grad(i) = r > 0.0 ? d : -d;
            }
        }
    }
    return out;
}

/// sum_{n,n'} W_{nn'} (p_n - p_n')^2 over ordered pairs, i.e. 2 p^T L p.
inline ValueGrad laplacian_reg(const Graph& g, const Vector& pred) {
    detail::require_shape(static_cast<std::size_t>(pred.size()) == g.n_nodes(),
                          "laplacian_reg: prediction length mismatch");
    const Vector lp = g.laplacian() * pred;
    return {2.0 * pred.dot(lp), 4.0 * lp};
}

/// ||X - xi||_F^2 and its gradient in xi.
inline ValueGradMatrix transport_cost(const SignalMatrix& x, const SignalMatrix& xi) {
    detail::require_shape(x.rows() == xi.rows() && x.cols() == xi.cols(),
                          "transport_cost: " + shape_str(x) + " vs " + shape_str(xi));
    const Matrix diff = xi - x;
    return {diff.squaredNorm(), 2.0 * diff};
}

/// Training loss at input x (supervised + lambda * regularizer) together with
/// its gradients in the coefficients and in x.
struct LossEvaluation {
    double value = 0.0;
    Coefficients grad_params;
    SignalMatrix grad_input;
};

inline LossEvaluation evaluate_loss(const GnnModel& model, const Graph& g, const SignalMatrix& x,
                                    const Sample& sample, const LossSpec& spec) {
    auto fwd = forward(model, g, x);
    detail::require_shape(fwd.output.cols() == 1, "loss: model must output one value per node");
    const Vector pred = fwd.output.col(0);
    auto sup = supervised_loss(pred, sample, spec);
    double value = sup.value;
    Vector d_pred = std::move(sup.grad);
    if (spec.lambda_reg > 0.0) {
        const auto reg = laplacian_reg(g, pred);
        value += spec.lambda_reg * reg.value;
        d_pred += spec.lambda_reg * reg.grad;
    }
    auto grads = backward(model, g, fwd.tape, SignalMatrix(d_pred));
    return {value, std::move(grads.params), std::move(grads.input)};
}

/// Loss value only (no backward pass).
inline double loss_value(const GnnModel& model, const Graph& g, const SignalMatrix& x, const Sample& sample,
                         const LossSpec& spec) {
    const Vector pred = predict(model, g, x);
    double value = supervised_loss(pred, sample, spec).value;
    if (spec.lambda_reg > 0.0) value += spec.lambda_reg * laplacian_reg(g, pred).value;
    return value;
}

/// psi(xi) = L0(f(xi)) + gamma * (rho - ||X_s - xi||_F^2), with gradient in xi.
inline ValueGradMatrix psi(const GnnModel& model, const Graph& g, const SignalMatrix& xi, const Sample& sample,
                           double gamma, double rho, const LossSpec& spec) {
    if (gamma < 0.0 || rho < 0.0) throw InvalidArgument("psi: gamma and rho must be nonnegative");
    auto loss = evaluate_loss(model, g, xi, sample, spec);
    const auto cost = transport_cost(sample.features, xi);
    return {loss.value + gamma * (rho - cost.value), loss.grad_input - gamma * cost.grad};
}

inline double psi_value(const GnnModel& model, const Graph& g, const SignalMatrix& xi, const Sample& sample,
                        double gamma, double rho, const LossSpec& spec) {
    if (gamma < 0.0 || rho < 0.0) throw InvalidArgument("psi: gamma and rho must be nonnegative");
    detail::require_shape(xi.rows() == sample.features.rows() && xi.cols() == sample.features.cols(),
                          "psi: perturbation " + shape_str(xi) + " vs features " + shape_str(sample.features));
    return loss_value(model, g, xi, sample, spec) + gamma * (rho - (xi - sample.features).squaredNorm());
}

} // namespace drgnn
