#include "flode/splines.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace flode {

namespace {

// Knot vector for a clamped basis: degree+1 copies of each boundary and
// K - degree - 1 equally spaced interior knots.
std::vector<double> clamped_knots(double lo, double hi, int K, int degree) {
  const int n_interior = K - degree - 1;
  std::vector<double> knots;
  knots.reserve(K + degree + 1);
  for (int i = 0; i <= degree; ++i) knots.push_back(lo);
  for (int i = 1; i <= n_interior; ++i) {
    knots.push_back(lo + (hi - lo) * i / (n_interior + 1));
  }
  for (int i = 0; i <= degree; ++i) knots.push_back(hi);
  return knots;
}

// de Boor evaluation of the degree+1 basis functions that are non-zero at x.
// Writes them into row `row` of `out`, columns span..span+degree.
void eval_basis_row(const std::vector<double>& knots, int degree, double x,
                    Eigen::MatrixXd& out, Eigen::Index row) {
  const int n_basis = static_cast<int>(knots.size()) - degree - 1;
  // Locate the knot span [knots[i], knots[i+1]) containing x; the right
  // boundary belongs to the last non-empty span.
  int i;
  if (x >= knots[n_basis]) {
    i = n_basis - 1;
  } else {
    i = static_cast<int>(std::upper_bound(knots.begin() + degree,
                                          knots.begin() + n_basis + 1, x) -
                         knots.begin()) -
        1;
  }
  std::vector<double> vals(degree + 1, 0.0), left(degree + 1), right(degree + 1);
  vals[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[i + 1 - j];
    right[j] = knots[i + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = vals[r] / (right[r + 1] + left[j - r]);
      vals[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    vals[j] = saved;
  }
  const int first = i - degree;
  for (int j = 0; j <= degree; ++j) out(row, first + j) = vals[j];
}

}  // namespace

BasisSystem build_basis(const Eigen::VectorXd& grid, int K, int degree) {
  if (degree < 1) throw std::invalid_argument("build_basis: degree must be >= 1");
  if (K < degree + 2) {
    throw std::invalid_argument("build_basis: K = " + std::to_string(K) +
                                " is too small for degree " +
                                std::to_string(degree) +
                                " (need K >= degree + 2)");
  }
  const Eigen::Index J = grid.size();
  if (J < 2) throw std::invalid_argument("build_basis: grid needs at least 2 points");
  for (Eigen::Index j = 0; j < J; ++j) {
    if (grid[j] < 0.0 || grid[j] > 1.0) {
      throw std::invalid_argument("build_basis: grid points must lie in [0, 1]");
    }
    if (j > 0 && grid[j] <= grid[j - 1]) {
      throw std::invalid_argument(
          "build_basis: grid must be strictly increasing");
    }
  }

  BasisSystem basis;
  basis.grid = grid;
  basis.K = K;
  basis.degree = degree;
  basis.basis_matrix = Eigen::MatrixXd::Zero(J, K);
  const auto knots = clamped_knots(grid[0], grid[J - 1], K, degree);
  for (Eigen::Index j = 0; j < J; ++j) {
    eval_basis_row(knots, degree, grid[j], basis.basis_matrix, j);
  }
  return basis;
}

Eigen::MatrixXd build_penalty(int K, double lambda) {
  if (K < 3) throw std::invalid_argument("build_penalty: K must be >= 3");
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("build_penalty: lambda must be in (0, 1]");
  }
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(K - 2, K);
  for (int r = 0; r < K - 2; ++r) {
    d2(r, r) = 1.0;
    d2(r, r + 1) = -2.0;
    d2(r, r + 2) = 1.0;
  }
  Eigen::MatrixXd p = lambda * Eigen::MatrixXd::Identity(K, K) +
                      (1.0 - lambda) * (d2.transpose() * d2);
  // Symmetrize against rounding so downstream Cholesky factorizations see an
  // exactly symmetric matrix.
  return 0.5 * (p + p.transpose());
}

BasisSystem make_basis_system(const Eigen::VectorXd& grid, int K,
                              double lambda, int degree) {
  BasisSystem basis = build_basis(grid, K, degree);
  if (K > grid.size()) {
    throw std::invalid_argument("make_basis_system: K must not exceed the grid size");
  }
  basis.penalty = build_penalty(K, lambda);
  basis.lambda = lambda;
  return basis;
}

}  // namespace flode
