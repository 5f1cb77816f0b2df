#pragma once

#include <Eigen/Core>

namespace flode {

/// B-spline basis evaluated on a fixed grid, together with the blended
/// smoothness penalty shared by fixed and random effect coefficients.
struct BasisSystem {
  Eigen::VectorXd grid;          // J sorted times in [0, 1]
  int K = 0;                     // basis dimension
  int degree = 3;                // spline degree
  Eigen::MatrixXd basis_matrix;  // J x K evaluations, rows sum to 1
  Eigen::MatrixXd penalty;       // K x K symmetric positive definite
  double lambda = 0.0;           // blend weight in (0, 1]

  int n_times() const { return static_cast<int>(grid.size()); }
};

/// Evaluates a clamped B-spline basis with equally spaced interior knots on
/// the given grid. The penalty is left empty; attach one with
/// build_penalty/make_basis_system.
BasisSystem build_basis(const Eigen::VectorXd& grid, int K, int degree = 3);

/// Blended penalty lambda * I_K + (1 - lambda) * D2' D2, where D2 is the
/// (K-2) x K second-order difference operator. Positive definite for
/// lambda in (0, 1].
Eigen::MatrixXd build_penalty(int K, double lambda);

/// build_basis plus an attached penalty.
BasisSystem make_basis_system(const Eigen::VectorXd& grid, int K,
                              double lambda, int degree = 3);

}  // namespace flode
