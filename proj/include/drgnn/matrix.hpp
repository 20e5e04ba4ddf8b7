#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

#include "drgnn/error.hpp"

namespace drgnn {

// Row-major so that a matrix's storage order matches the on-disk layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Nodal signal: one row per node, one column per feature.
using SignalMatrix = Matrix;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Frobenius inner product <a, b>.
inline double frobenius_dot(const Matrix& a, const Matrix& b) {
    detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(),
                          "frobenius_dot: " + shape_str(a) + " vs " + shape_str(b));
    return (a.array() * b.array()).sum();
}

} // namespace drgnn
