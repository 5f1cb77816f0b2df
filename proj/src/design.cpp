#include "flode/design.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flode {

namespace {

void check_inputs(const Eigen::VectorXd& grid, Eigen::Index n_values,
                  double alpha, const char* who) {
  if (grid.size() != n_values) {
    throw std::invalid_argument(std::string(who) + ": values length " +
                                std::to_string(n_values) +
                                " does not match grid length " +
                                std::to_string(grid.size()));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument(std::string(who) +
                                ": alpha must be finite and >= 0");
  }
}

}  // namespace

Eigen::MatrixXd exp_kernel_integral_cols(const Eigen::VectorXd& grid,
                                         const Eigen::MatrixXd& values,
                                         double alpha) {
  check_inputs(grid, values.rows(), alpha, "exp_kernel_integral");
  if (!values.allFinite()) {
    throw std::invalid_argument("exp_kernel_integral: non-finite integrand");
  }
  const Eigen::Index J = grid.size();
  Eigen::MatrixXd out(J, values.cols());
  if (J == 0) return out;
  out.row(0).setZero();
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(values.cols());
  for (Eigen::Index j = 1; j < J; ++j) {
    const double dt = grid[j] - grid[j - 1];
    if (dt < 0) {
      throw std::invalid_argument("exp_kernel_integral: grid not sorted");
    }
    const double decay = std::exp(-alpha * dt);
    acc = decay * (acc + (0.5 * dt) * values.row(j - 1)) +
          (0.5 * dt) * values.row(j);
    out.row(j) = acc;
  }
  return out;
}

Eigen::VectorXd exp_kernel_integral(const Eigen::VectorXd& grid,
                                    const Eigen::VectorXd& values,
                                    double alpha) {
  return exp_kernel_integral_cols(grid, values, alpha);
}

Eigen::MatrixXd build_xstar_block(const Eigen::VectorXd& forcing, double alpha,
                                  const BasisSystem& basis) {
  check_inputs(basis.grid, forcing.size(), alpha, "build_xstar_block");
  Eigen::MatrixXd weighted =
      basis.basis_matrix.array().colwise() * forcing.array();
  return exp_kernel_integral_cols(basis.grid, weighted, alpha);
}

Eigen::MatrixXd build_dstar(double alpha, const BasisSystem& basis) {
  return exp_kernel_integral_cols(basis.grid, basis.basis_matrix, alpha);
}

Eigen::VectorXd build_y0star(double y0, double alpha,
                             const Eigen::VectorXd& grid) {
  if (!std::isfinite(y0)) {
    throw std::invalid_argument("build_y0star: y0 must be finite");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("build_y0star: alpha must be finite and >= 0");
  }
  return y0 * (-alpha * grid.array()).exp();
}

DesignBundle assemble_bundle(const FunctionalDataset& data, double alpha,
                             const BasisSystem& basis,
                             const Eigen::VectorXd& y0) {
  if (y0.size() != data.n_trials()) {
    throw std::invalid_argument("assemble_bundle: y0 must have one entry per trial");
  }
  if (basis.grid.size() != data.grid.size()) {
    throw std::invalid_argument("assemble_bundle: basis and dataset grids differ");
  }
  const int N = data.n_trials();
  const int J = data.n_times();
  const int P = data.n_forcings();
  const int K = basis.K;

  DesignBundle bundle;
  bundle.alpha = alpha;
  bundle.decay = (-alpha * data.grid.array()).exp();
  bundle.dstar = build_dstar(alpha, basis);

  // Intercept block (constant-one forcing) is shared across trials.
  const Eigen::MatrixXd intercept_block = bundle.dstar;
  bundle.xstar.assign(N, Eigen::MatrixXd(J, K * (P + 1)));
  for (int i = 0; i < N; ++i) {
    bundle.xstar[i].leftCols(K) = intercept_block;
    for (int p = 0; p < P; ++p) {
      bundle.xstar[i].middleCols(K * (p + 1), K) =
          build_xstar_block(data.forcings[p].row(i).transpose(), alpha, basis);
    }
  }

  bundle.y0star.resize(N);
  for (int i = 0; i < N; ++i) bundle.y0star[i] = y0[i] * bundle.decay;
  return bundle;
}

void refresh_y0star(DesignBundle& bundle, const Eigen::VectorXd& y0,
                    const Eigen::VectorXd& grid) {
  if (y0.size() != bundle.n_trials()) {
    throw std::invalid_argument("refresh_y0star: y0 size mismatch");
  }
  (void)grid;
  for (int i = 0; i < bundle.n_trials(); ++i) {
    bundle.y0star[i] = y0[i] * bundle.decay;
  }
}

}  // namespace flode
