#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/io.hpp"
#include "drgnn/loss.hpp"
#include "drgnn/nn.hpp"
#include "drgnn/parallel.hpp"
#include "drgnn/robust.hpp"

// Test-time evaluation: clean metrics and worst-case perturbations at a
// fixed mean transport budget.

namespace drgnn {

struct AttackOptions {
    double rho = 10.0;
    /// Unset: the attacked model's curvature estimate.
    std::optional<double> gamma;
    std::size_t steps = 50;
    double step_size = 0.1;
    LossSpec loss_spec;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

struct AttackResult {
    std::vector<Sample> perturbed;
    double gamma = 0.0;
    double mean_cost = 0.0;
    /// Common factor applied to every ascent displacement.
    double scale = 0.0;
};

/// The evaluator knows the full ground truth, so the attack targets the loss
/// over every node rather than only the observed ones.
inline Sample with_full_truth(const Sample& s) {
    Sample out = s;
    out.observed.assign(s.observed.size(), true);
    return out;
}

/// Runs the inner maximization against a frozen model for each sample, then
/// rescales all displacements by one common factor so the mean transport
/// cost equals rho.
inline AttackResult attack(const GnnModel& model, const Graph& g, const std::vector<Sample>& samples,
                           const AttackOptions& opt) {
    if (samples.empty()) throw InvalidArgument("attack: no samples");
    if (!(opt.rho >= 0.0)) throw InvalidArgument("attack: rho must be >= 0");

    AttackResult r;
    r.perturbed = samples;
    if (opt.rho == 0.0) return r;

    std::vector<Sample> targets;
    targets.reserve(samples.size());
    for (const auto& s : samples) targets.push_back(with_full_truth(s));

    r.gamma = opt.gamma ? *opt.gamma
                        : suggest_gamma_floor(curvature_probe(model, g, targets, opt.loss_spec, 32, opt.seed));
    if (!(r.gamma > 0.0)) throw InvalidArgument("attack: gamma must be > 0");

    std::vector<SignalMatrix> displacement(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto inner = inner_maximize(model, g, targets[i], r.gamma, opt.rho, opt.loss_spec, opt.steps,
                                          opt.step_size);
        displacement[i] = inner.xi - samples[i].features;
    }, opt.threads);

    auto mean_sq = [&] {
        double total = 0.0;
        for (const auto& d : displacement) total += d.squaredNorm();
        return total / static_cast<double>(displacement.size());
    };
    double mean = mean_sq();
    if (mean == 0.0) {
        // Ascent never moved (e.g. zero gradients): fall back to the loss
        // gradient, then to a uniform shift.
        for (std::size_t i = 0; i < samples.size(); ++i)
            displacement[i] = evaluate_loss(model, g, samples[i].features, targets[i], opt.loss_spec).grad_input;
        mean = mean_sq();
        if (mean == 0.0) {
            for (auto& d : displacement) d.setOnes();
            mean = mean_sq();
        }
    }
    r.scale = std::sqrt(opt.rho / mean);
    double cost = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        r.perturbed[i].features = samples[i].features + r.scale * displacement[i];
        cost += (r.perturbed[i].features - samples[i].features).squaredNorm();
    }
    r.mean_cost = cost / static_cast<double>(samples.size());
    return r;
}

struct NodePrediction {
    std::size_t sample = 0;
    std::size_t node = 0;
    double truth = 0.0;
    double prediction = 0.0;
    bool observed = false;
};

struct EvalResult {
    std::vector<NodePrediction> rows;
    /// RMSE over unobserved nodes; over all nodes when nothing is unobserved.
    double rmse_unobserved = 0.0;
    double rmse_all = 0.0;
};

inline EvalResult evaluate(const GnnModel& model, const Graph& g, const std::vector<Sample>& samples,
                           std::size_t threads = 0) {
    std::vector<Vector> preds(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) { preds[i] = predict(model, g, samples[i].features); }, threads);
    EvalResult r;
    double sq_unobs = 0.0, sq_all = 0.0;
    std::size_t n_unobs = 0, n_all = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        detail::require_shape(preds[s].size() == samples[s].labels.size(), "evaluate: prediction/label mismatch");
        for (std::size_t n = 0; n < samples[s].n_nodes(); ++n) {
            const auto idx = static_cast<Eigen::Index>(n);
            NodePrediction p{s, n, samples[s].labels(idx), preds[s](idx), samples[s].observed[n]};
            const double e = p.prediction - p.truth;
            sq_all += e * e;
            ++n_all;
            if (!p.observed) {
                sq_unobs += e * e;
                ++n_unobs;
            }
            r.rows.push_back(p);
        }
    }
    r.rmse_all = n_all ? std::sqrt(sq_all / static_cast<double>(n_all)) : 0.0;
    r.rmse_unobserved = n_unobs ? std::sqrt(sq_unobs / static_cast<double>(n_unobs)) : r.rmse_all;
    return r;
}

/// sample_index,node_index,truth,prediction,observed_flag rows followed by a
/// RMSE_unobserved summary row.
inline std::string format_eval_csv(const EvalResult& r) {
    std::string out = "sample_index,node_index,truth,prediction,observed_flag\n";
    for (const auto& p : r.rows)
        out += std::to_string(p.sample) + "," + std::to_string(p.node) + "," + io::format_double(p.truth) + "," +
               io::format_double(p.prediction) + "," + (p.observed ? "1" : "0") + "\n";
    out += "RMSE_unobserved," + io::format_double(r.rmse_unobserved) + ",,,\n";
    return out;
}

/// Per-node series for the selected nodes (plot input).
inline std::string format_series_csv(const EvalResult& r, const std::vector<std::size_t>& nodes) {
    std::string out = "node_index,sample_index,truth,prediction\n";
    for (auto node : nodes)
        for (const auto& p : r.rows)
            if (p.node == node)
                out += std::to_string(p.node) + "," + std::to_string(p.sample) + "," + io::format_double(p.truth) +
                       "," + io::format_double(p.prediction) + "\n";
    return out;
}

inline std::string format_attack_csv(const EvalResult& r, double mean_cost) {
    std::string out = "sample_index,node_index,squared_error,observed_flag\n";
    for (const auto& p : r.rows) {
        const double e = p.prediction - p.truth;
        out += std::to_string(p.sample) + "," + std::to_string(p.node) + "," + io::format_double(e * e) + "," +
               (p.observed ? "1" : "0") + "\n";
    }
    out += "RMSE_unobserved," + io::format_double(r.rmse_unobserved) + ",,\n";
    out += "mean_cost," + io::format_double(mean_cost) + ",,\n";
    return out;
}

} // namespace drgnn
