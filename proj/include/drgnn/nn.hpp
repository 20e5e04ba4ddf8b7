#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/matrix.hpp"

namespace drgnn {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw InvalidArgument("unknown activation '" + s + "'");
}

struct LayerSpec {
    std::size_t k_taps = 1;
    std::size_t in_features = 1;
    std::size_t out_features = 1;
    Activation activation = Activation::relu;

    bool operator==(const LayerSpec&) const = default;
};

/// Per layer, one F_in x F_out coefficient matrix per filter tap.
using Coefficients = std::vector<std::vector<Matrix>>;

/// Stack of polynomial graph filters, X_l = act_l(sum_k W^k X_{l-1} H_{lk}).
/// No bias terms. With every k_taps == 1 this is a per-node MLP.
struct GnnModel {
    std::vector<LayerSpec> layers;
    Coefficients coefficients;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_features; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_features; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.k_taps * l.in_features * l.out_features;
        return n;
    }

    bool operator==(const GnnModel& o) const {
        if (layers != o.layers || coefficients.size() != o.coefficients.size()) return false;
        for (std::size_t l = 0; l < coefficients.size(); ++l) {
            if (coefficients[l].size() != o.coefficients[l].size()) return false;
            for (std::size_t k = 0; k < coefficients[l].size(); ++k)
                if (coefficients[l][k] != o.coefficients[l][k]) return false;
        }
        return true;
    }
};

namespace detail {

inline void check_layer_chain(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw InvalidArgument("model needs at least one layer");
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const auto& s = specs[l];
        if (s.k_taps < 1 || s.in_features < 1 || s.out_features < 1)
            throw InvalidArgument("layer " + std::to_string(l) + ": k_taps and dimensions must be >= 1");
        if (l > 0 && s.in_features != specs[l - 1].out_features)
            throw DimensionMismatch("layer " + std::to_string(l) + " expects " +
                                    std::to_string(s.in_features) + " inputs but layer " +
                                    std::to_string(l - 1) + " produces " +
                                    std::to_string(specs[l - 1].out_features));
    }
}

inline void check_model(const GnnModel& m) {
    check_layer_chain(m.layers);
    require_shape(m.coefficients.size() == m.layers.size(), "model: coefficient/layer count mismatch");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& s = m.layers[l];
        require_shape(m.coefficients[l].size() == s.k_taps,
                      "model: layer " + std::to_string(l) + " tap count mismatch");
        for (const auto& h : m.coefficients[l])
            require_shape(static_cast<std::size_t>(h.rows()) == s.in_features &&
                              static_cast<std::size_t>(h.cols()) == s.out_features,
                          "model: layer " + std::to_string(l) + " coefficient shape " + shape_str(h));
    }
}

} // namespace detail

/// Uniform fan-based init on [-a, a], a = sqrt(6 / (K * F_in + F_out)).
inline GnnModel init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    detail::check_layer_chain(specs);
    std::mt19937_64 rng(seed);
    GnnModel m;
    m.layers = specs;
    for (const auto& s : specs) {
        const double a = std::sqrt(6.0 / static_cast<double>(s.k_taps * s.in_features + s.out_features));
        std::uniform_real_distribution<double> dist(-a, a);
        std::vector<Matrix> taps;
        for (std::size_t k = 0; k < s.k_taps; ++k) {
            Matrix h(s.in_features, s.out_features);
            for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = dist(rng);
            taps.push_back(std::move(h));
        }
        m.coefficients.push_back(std::move(taps));
    }
    return m;
}

/// Spec list for a K-tap GNN with `n_layers` layers: relu hidden layers of
/// width `hidden`, identity output of width `out`.
inline std::vector<LayerSpec> make_layer_specs(std::size_t n_layers, std::size_t k_taps, std::size_t in,
                                               std::size_t hidden, std::size_t out) {
    if (n_layers < 1) throw InvalidArgument("make_layer_specs: need at least one layer");
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const bool last = l + 1 == n_layers;
        specs.push_back({k_taps, l == 0 ? in : hidden, last ? out : hidden,
                         last ? Activation::identity : Activation::relu});
    }
    return specs;
}

/// Y = sum_{k<K} W^k X H_k.
inline SignalMatrix graph_conv(const Graph& g, const SignalMatrix& x, const std::vector<Matrix>& h) {
    detail::require_shape(static_cast<std::size_t>(x.rows()) == g.n_nodes(),
                          "graph_conv: signal rows " + std::to_string(x.rows()) + " != nodes " +
                              std::to_string(g.n_nodes()));
    detail::require_shape(!h.empty(), "graph_conv: need at least one tap");
    for (const auto& hk : h)
        detail::require_shape(hk.rows() == x.cols() && hk.cols() == h.front().cols(),
                              "graph_conv: tap shape " + shape_str(hk) + " vs signal " + shape_str(x));
    SignalMatrix y = x * h[0];
    SignalMatrix shifted = x;
    for (std::size_t k = 1; k < h.size(); ++k) {
        shifted = g.weights() * shifted;
        y.noalias() += shifted * h[k];
    }
    return y;
}

/// Intermediates of one forward pass.
struct ForwardTape {
    SignalMatrix input;
    /// shifted[l][k] = W^k X_{l-1}
    std::vector<std::vector<SignalMatrix>> shifted;
    std::vector<SignalMatrix> pre_activation;
    /// relu layers: 1 where pre-activation > 0, else 0. Empty for identity.
    std::vector<Matrix> relu_mask;
    std::vector<SignalMatrix> post_activation;
};

struct ForwardResult {
    SignalMatrix output;
    ForwardTape tape;
};

inline ForwardResult forward(const GnnModel& model, const Graph& g, const SignalMatrix& x0) {
    detail::check_model(model);
    detail::require_shape(static_cast<std::size_t>(x0.rows()) == g.n_nodes(),
                          "forward: input rows " + std::to_string(x0.rows()) + " != nodes " +
                              std::to_string(g.n_nodes()));
    detail::require_shape(static_cast<std::size_t>(x0.cols()) == model.input_dim(),
                          "forward: input has " + std::to_string(x0.cols()) + " features, model expects " +
                              std::to_string(model.input_dim()));

    ForwardTape tape;
    tape.input = x0;
    const SignalMatrix* current = &tape.input;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& spec = model.layers[l];
        const auto& taps = model.coefficients[l];

        std::vector<SignalMatrix> powers;
        powers.reserve(spec.k_taps);
        powers.push_back(*current);
        for (std::size_t k = 1; k < spec.k_taps; ++k) powers.push_back(g.weights() * powers.back());

        SignalMatrix y = powers[0] * taps[0];
        for (std::size_t k = 1; k < spec.k_taps; ++k) y.noalias() += powers[k] * taps[k];
        if (!all_finite(y)) throw NumericalFailure("forward: non-finite pre-activation at layer " + std::to_string(l));

        Matrix mask;
        SignalMatrix out;
        if (spec.activation == Activation::relu) {
            mask = (y.array() > 0.0).cast<double>().matrix();
            out = y.cwiseProduct(mask);
        } else {
            out = y;
        }
        tape.shifted.push_back(std::move(powers));
        tape.pre_activation.push_back(std::move(y));
        tape.relu_mask.push_back(std::move(mask));
        tape.post_activation.push_back(std::move(out));
        current = &tape.post_activation.back();
    }
    return {tape.post_activation.back(), std::move(tape)};
}

struct Gradients {
    Coefficients params;
    SignalMatrix input;
};

/// Reverse-mode pass for the scalar <d_output, X_L>. W is symmetric, so the
/// adjoint of W^k is W^k.
inline Gradients backward(const GnnModel& model, const Graph& g, const ForwardTape& tape,
                          const SignalMatrix& d_output) {
    detail::check_model(model);
    const std::size_t n_layers = model.layers.size();
    detail::require_shape(tape.post_activation.size() == n_layers && tape.shifted.size() == n_layers,
                          "backward: tape does not match model depth");
    detail::require_shape(d_output.rows() == tape.post_activation.back().rows() &&
                              d_output.cols() == tape.post_activation.back().cols(),
                          "backward: d_output " + shape_str(d_output) + " vs output " +
                              shape_str(tape.post_activation.back()));

    Gradients grads;
    grads.params.resize(n_layers);
    SignalMatrix upstream = d_output;
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& spec = model.layers[l];
        const auto& taps = model.coefficients[l];
        detail::require_shape(tape.shifted[l].size() == spec.k_taps, "backward: tape tap count mismatch");

        const SignalMatrix d_pre =
            spec.activation == Activation::relu ? SignalMatrix(upstream.cwiseProduct(tape.relu_mask[l])) : upstream;

        grads.params[l].resize(spec.k_taps);
        for (std::size_t k = 0; k < spec.k_taps; ++k)
            grads.params[l][k] = tape.shifted[l][k].transpose() * d_pre;

        // sum_k W^k (d_pre H_k^T), Horner form.
        SignalMatrix d_in = d_pre * taps[spec.k_taps - 1].transpose();
        for (std::size_t k = spec.k_taps - 1; k-- > 0;) {
            d_in = g.weights() * d_in;
            d_in.noalias() += d_pre * taps[k].transpose();
        }
        upstream = std::move(d_in);
    }
#ifdef DRGNN_INJECT_GRADIENT_FAULT
    // Negative control for the verification suite.
    upstream *= 1.01;
#endif
    grads.input = std::move(upstream);
    return grads;
}

/// Node predictions for a scalar-output model: column 0 of the output.
inline Vector predict(const GnnModel& model, const Graph& g, const SignalMatrix& x) {
    const auto out = forward(model, g, x).output;
    detail::require_shape(out.cols() == 1, "predict: model output is not scalar per node");
    return out.col(0);
}

/// Flattens all coefficients layer by layer, tap by tap, row-major.
inline Vector flatten(const Coefficients& c) {
    std::size_t n = 0;
    for (const auto& layer : c)
        for (const auto& h : layer) n += static_cast<std::size_t>(h.size());
    Vector v(static_cast<Eigen::Index>(n));
    Eigen::Index at = 0;
    for (const auto& layer : c)
        for (const auto& h : layer) {
            v.segment(at, h.size()) = Eigen::Map<const Vector>(h.data(), h.size());
            at += h.size();
        }
    return v;
}

inline void unflatten(const Vector& v, Coefficients& c) {
    Eigen::Index at = 0;
    for (auto& layer : c)
        for (auto& h : layer) {
            detail::require_shape(at + h.size() <= v.size(), "unflatten: vector too short");
            Eigen::Map<Vector>(h.data(), h.size()) = v.segment(at, h.size());
            at += h.size();
        }
    detail::require_shape(at == v.size(), "unflatten: vector too long");
}

} // namespace drgnn
