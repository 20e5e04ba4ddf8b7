#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "drgnn/error.hpp"
#include "drgnn/matrix.hpp"

namespace drgnn {

struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 0.0;
};

/// Dense undirected weighted graph. Immutable once built; the Laplacian is
/// computed at construction.
class Graph {
public:
    Graph() = default;

    /// Adopts a weighted adjacency matrix. Throws unless it is square,
    /// symmetric, nonnegative, finite and has a zero diagonal.
    explicit Graph(Matrix weights) : weights_(std::move(weights)) {
        if (weights_.rows() != weights_.cols() || weights_.rows() == 0)
            throw DimensionMismatch("Graph: adjacency must be square and nonempty, got " +
                                    shape_str(weights_));
        const auto n = weights_.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (weights_(i, i) != 0.0) throw InvalidArgument("Graph: self-loop at node " + std::to_string(i));
            for (Eigen::Index j = 0; j < n; ++j) {
                const double w = weights_(i, j);
                if (!std::isfinite(w) || w < 0.0)
                    throw InvalidArgument("Graph: weight must be finite and nonnegative");
                if (w != weights_(j, i)) throw InvalidArgument("Graph: adjacency is not symmetric");
            }
        }
        const Vector deg = weights_.rowwise().sum();
        laplacian_ = -weights_;
        laplacian_.diagonal() += deg;
    }

    std::size_t n_nodes() const { return static_cast<std::size_t>(weights_.rows()); }
    const Matrix& weights() const { return weights_; }
    const Matrix& laplacian() const { return laplacian_; }

    Matrix degree_matrix() const {
        return Matrix(weights_.rowwise().sum().asDiagonal());
    }

    /// Upper-triangular list of nonzero edges, row-major order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (std::size_t i = 0; i < n_nodes(); ++i)
            for (std::size_t j = i + 1; j < n_nodes(); ++j)
                if (weights_(i, j) != 0.0) out.push_back({i, j, weights_(i, j)});
        return out;
    }

    bool operator==(const Graph& other) const { return weights_ == other.weights_; }

private:
    Matrix weights_;
    Matrix laplacian_;
};

/// Builds a graph from an undirected edge list. Rejects out-of-range
/// endpoints, self-loops, negative weights and repeated node pairs.
inline Graph from_edge_list(std::size_t n_nodes, const std::vector<Edge>& edges) {
    if (n_nodes == 0) throw InvalidArgument("from_edge_list: n_nodes must be positive");
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n_nodes));
    std::vector<bool> seen(n_nodes * n_nodes, false);
    for (const auto& e : edges) {
        if (e.u >= n_nodes || e.v >= n_nodes)
            throw InvalidArgument("from_edge_list: node index out of range (" + std::to_string(e.u) +
                                  ", " + std::to_string(e.v) + ")");
        if (e.u == e.v) throw InvalidArgument("from_edge_list: self-loop at node " + std::to_string(e.u));
        if (!std::isfinite(e.weight) || e.weight < 0.0)
            throw InvalidArgument("from_edge_list: negative or non-finite weight");
        if (seen[e.u * n_nodes + e.v])
            throw InvalidArgument("from_edge_list: duplicate edge (" + std::to_string(e.u) + ", " +
                                  std::to_string(e.v) + ")");
        seen[e.u * n_nodes + e.v] = seen[e.v * n_nodes + e.u] = true;
        w(e.u, e.v) = w(e.v, e.u) = e.weight;
    }
    return Graph(std::move(w));
}

inline Matrix degree_matrix(const Graph& g) { return g.degree_matrix(); }
inline const Matrix& laplacian(const Graph& g) { return g.laplacian(); }

/// W^k X by k successive multiplications; k = 0 returns X.
inline SignalMatrix diffuse(const Graph& g, const SignalMatrix& x, std::size_t k) {
    detail::require_shape(static_cast<std::size_t>(x.rows()) == g.n_nodes(),
                          "diffuse: signal has " + std::to_string(x.rows()) + " rows, graph has " +
                              std::to_string(g.n_nodes()) + " nodes");
    SignalMatrix out = x;
    for (std::size_t i = 0; i < k; ++i) out = g.weights() * out;
    return out;
}

/// Power-iteration estimate of max |eigenvalue| of W. The norm ratio
/// ||W v|| / ||v|| is used so that bipartite graphs (eigenvalues +-lambda)
/// still converge.
inline double spectral_radius_estimate(const Graph& g, int iterations, std::uint64_t seed) {
    if (iterations < 1) throw InvalidArgument("spectral_radius_estimate: iterations must be >= 1");
    const auto n = static_cast<Eigen::Index>(g.n_nodes());
    if (g.weights().isZero(0.0)) return 0.0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = unif(rng);
    v.normalize();

    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vector next = g.weights() * v;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        estimate = norm;
        v = next / norm;
    }
    return estimate;
}

} // namespace drgnn
