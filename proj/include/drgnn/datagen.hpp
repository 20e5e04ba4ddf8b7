#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/loss.hpp"
#include "drgnn/matrix.hpp"

// Synthetic graph-regression task: a lattice or random geometric graph,
// low-pass graph signals as node labels, and noisy diffused copies of the
// labels as node features.

namespace drgnn {

using Rng = std::mt19937_64;

enum class GraphKind { grid2d, geometric };

inline std::string to_string(GraphKind k) { return k == GraphKind::grid2d ? "grid2d" : "geometric"; }

inline GraphKind graph_kind_from_string(const std::string& s) {
    if (s == "grid2d") return GraphKind::grid2d;
    if (s == "geometric") return GraphKind::geometric;
    throw InvalidArgument("unknown graph kind '" + s + "'");
}

inline bool is_connected(const Graph& g) {
    const std::size_t n = g.n_nodes();
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (std::size_t v = 0; v < n; ++v) {
            if (!seen[v] && g.weights()(u, v) > 0.0) {
                seen[v] = true;
                ++count;
                frontier.push(v);
            }
        }
    }
    return count == n;
}

/// grid2d: sqrt(N) x sqrt(N) lattice with unit weights (param unused).
/// geometric: uniform points in the unit square, edge when distance < param
/// with weight exp(-d^2 / param^2); resampled until connected (100 tries).
inline Graph gen_graph(GraphKind kind, std::size_t n_nodes, double param, Rng& rng) {
    if (n_nodes < 2) throw InvalidArgument("gen_graph: need at least 2 nodes");
    if (kind == GraphKind::grid2d) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_nodes))));
        if (side * side != n_nodes) throw InvalidArgument("gen_graph: grid2d needs a square node count");
        std::vector<Edge> edges;
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c) {
                const std::size_t i = r * side + c;
                if (c + 1 < side) edges.push_back({i, i + 1, 1.0});
                if (r + 1 < side) edges.push_back({i, i + side, 1.0});
            }
        return from_edge_list(n_nodes, edges);
    }

    if (!(param > 0.0)) throw InvalidArgument("gen_graph: geometric radius must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::pair<double, double>> pts(n_nodes);
        for (auto& p : pts) {
            p.first = unif(rng);
            p.second = unif(rng);
        }
        std::vector<Edge> edges;
        for (std::size_t i = 0; i < n_nodes; ++i)
            for (std::size_t j = i + 1; j < n_nodes; ++j) {
                const double dx = pts[i].first - pts[j].first;
                const double dy = pts[i].second - pts[j].second;
                const double d2 = dx * dx + dy * dy;
                if (std::sqrt(d2) < param) edges.push_back({i, j, std::exp(-d2 / (param * param))});
            }
        Graph g = from_edge_list(n_nodes, edges);
        if (is_connected(g)) return g;
    }
    throw InvalidArgument("gen_graph: geometric graph still disconnected after 100 draws; increase the radius");
}

inline Graph gen_graph(GraphKind kind, std::size_t n_nodes, double param, std::uint64_t seed) {
    Rng rng(seed);
    return gen_graph(kind, n_nodes, param, rng);
}

inline const std::vector<double>& default_filter_taps() {
    static const std::vector<double> taps{1.0, 0.7, 0.4, 0.2};
    return taps;
}

struct SampleOptions {
    std::size_t n_samples = 1000;
    std::size_t n_features = 2;
    double noise_sigma = 0.05;
    double observed_fraction = 0.5;
    /// Same observed set for every sample instead of a fresh draw each time.
    bool fixed_mask = false;
    std::vector<double> filter_taps = default_filter_taps();
};

inline std::size_t observed_count(double fraction, std::size_t n_nodes) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("observed_fraction must be in (0, 1]");
    const auto raw = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_nodes) - 1e-9));
    return std::clamp<std::size_t>(raw, 1, n_nodes);
}

/// Stream order: all label signals, then all feature noise, then all masks.
inline std::vector<Sample> gen_samples(const Graph& g, const SampleOptions& opt, Rng& rng) {
    if (opt.n_features < 1) throw InvalidArgument("gen_samples: n_features must be >= 1");
    if (opt.noise_sigma < 0.0) throw InvalidArgument("gen_samples: noise_sigma must be >= 0");
    const std::size_t n = g.n_nodes();
    const auto rows = static_cast<Eigen::Index>(n);
    const std::size_t n_obs = observed_count(opt.observed_fraction, n);

    const double radius = spectral_radius_estimate(g, 500, 0);
    const Matrix shift = radius > 0.0 ? Matrix(g.weights() / radius) : Matrix::Zero(rows, rows);

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Sample> samples(opt.n_samples);

    for (auto& s : samples) {
        Vector z(rows);
        for (Eigen::Index i = 0; i < rows; ++i) z(i) = normal(rng);
        Vector y = Vector::Zero(rows);
        Vector power = z;
        for (std::size_t k = 0; k < opt.filter_taps.size(); ++k) {
            if (k > 0) power = shift * power;
            y += opt.filter_taps[k] * power;
        }
        s.labels = std::move(y);
    }

    for (auto& s : samples) {
        s.features.resize(rows, static_cast<Eigen::Index>(opt.n_features));
        Vector column = s.labels;
        for (std::size_t j = 0; j < opt.n_features; ++j) {
            if (j > 0) column = shift * column;
            s.features.col(static_cast<Eigen::Index>(j)) = column;
        }
        if (opt.noise_sigma > 0.0)
            for (Eigen::Index i = 0; i < s.features.size(); ++i)
                s.features.data()[i] += opt.noise_sigma * normal(rng);
    }

    auto draw_mask = [&] {
        std::vector<std::size_t> nodes(n);
        std::iota(nodes.begin(), nodes.end(), std::size_t{0});
        std::shuffle(nodes.begin(), nodes.end(), rng);
        std::vector<bool> mask(n, false);
        for (std::size_t i = 0; i < n_obs; ++i) mask[nodes[i]] = true;
        return mask;
    };
    if (opt.fixed_mask) {
        const auto mask = draw_mask();
        for (auto& s : samples) s.observed = mask;
    } else {
        for (auto& s : samples) s.observed = draw_mask();
    }
    return samples;
}

inline std::vector<Sample> gen_samples(const Graph& g, const SampleOptions& opt, std::uint64_t seed) {
    Rng rng(seed);
    return gen_samples(g, opt, rng);
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Shuffled split with floor(fraction * S) training samples.
inline Split split_indices(std::size_t n_samples, double train_fraction, Rng& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("split: train_fraction must be in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples) + 1e-9));
    if (n_train == 0 || n_train == n_samples) throw InvalidArgument("split: one side would be empty");
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)},
            {order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end()}};
}

inline std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    std::vector<Sample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(samples.at(i));
    return out;
}

struct SplitSamples {
    std::vector<Sample> train;
    std::vector<Sample> test;
    Split indices;
};

inline SplitSamples split_dataset(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
    Rng rng(seed);
    auto idx = split_indices(samples.size(), train_fraction, rng);
    return {select(samples, idx.train), select(samples, idx.test), std::move(idx)};
}

struct DatagenConfig {
    GraphKind graph_kind = GraphKind::grid2d;
    std::size_t n_nodes = 100;
    double graph_param = 0.3;
    SampleOptions samples;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct Dataset {
    Graph graph;
    std::vector<Sample> samples;
    Split split;

    std::vector<Sample> train() const { return select(samples, split.train); }
    std::vector<Sample> test() const { return select(samples, split.test); }
};

/// Whole pipeline from one generator: graph, signals, noise, masks, split.
inline Dataset generate_dataset(const DatagenConfig& cfg) {
    Rng rng(cfg.seed);
    Dataset d;
    d.graph = gen_graph(cfg.graph_kind, cfg.n_nodes, cfg.graph_param, rng);
    d.samples = gen_samples(d.graph, cfg.samples, rng);
    d.split = split_indices(d.samples.size(), cfg.train_fraction, rng);
    return d;
}

} // namespace drgnn
