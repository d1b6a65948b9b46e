#pragma once

#include <Eigen/Dense>

namespace oid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetrize in place: (M + M^T) / 2.
inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace oid
