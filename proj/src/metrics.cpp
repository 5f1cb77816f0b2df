#include "flode/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "flode/quadrature.hpp"

namespace flode {

Surface flode_surface(double alpha, const Eigen::VectorXd& grid,
                      const Eigen::VectorXd& coef_fn) {
  if (!(alpha >= 0.0)) {
    throw std::invalid_argument("flode_surface: alpha must be >= 0");
  }
  if (coef_fn.size() != grid.size()) {
    throw std::invalid_argument("flode_surface: coef_fn length must match grid");
  }
  const Eigen::Index J = grid.size();
  Surface surf;
  surf.grid = grid;
  surf.values = Eigen::MatrixXd::Zero(J, J);
  for (Eigen::Index s = 0; s < J; ++s) {
    for (Eigen::Index t = s + 1; t < J; ++t) {
      surf.values(s, t) = std::exp(-alpha * (grid[t] - grid[s])) * coef_fn[s];
    }
  }
  return surf;
}

double surface_ise(const Surface& estimate, const Surface& truth) {
  if (estimate.grid.size() != truth.grid.size() ||
      (estimate.grid - truth.grid).cwiseAbs().maxCoeff() > 0.0) {
    throw std::invalid_argument("surface_ise: surfaces live on different grids");
  }
  const Eigen::Index J = truth.grid.size();
  Eigen::VectorXd inner(J);
  for (Eigen::Index t = 0; t < J; ++t) {
    const Eigen::VectorXd diff2 =
        (truth.values.col(t) - estimate.values.col(t)).array().square();
    inner[t] = trapezoid(truth.grid, diff2);
  }
  return trapezoid(truth.grid, inner);
}

double integrated_error(const Eigen::VectorXd& truth,
                        const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& grid) {
  return trapezoid(grid, truth - estimate);
}

Eigen::MatrixXd predict(const FlodeParams& params, const BasisSystem& basis,
                        const std::vector<Eigen::MatrixXd>& new_forcings,
                        const Eigen::VectorXd& new_initial_positions) {
  FunctionalDataset pseudo;
  pseudo.grid = basis.grid;
  pseudo.responses = Eigen::MatrixXd::Zero(new_initial_positions.size(),
                                           basis.grid.size());
  pseudo.forcings = new_forcings;
  for (const auto& f : new_forcings) {
    if (f.rows() != new_initial_positions.size() ||
        f.cols() != basis.grid.size()) {
      throw std::invalid_argument(
          "predict: forcings must be N_new x J on the training grid");
    }
  }
  const DesignBundle bundle =
      assemble_bundle(pseudo, params.alpha, basis, new_initial_positions);
  Eigen::MatrixXd out(new_initial_positions.size(), basis.grid.size());
  for (int i = 0; i < out.rows(); ++i) {
    out.row(i) = (bundle.y0star[i] + bundle.xstar[i] * params.b).transpose();
  }
  return out;
}

double mape(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths,
            const Eigen::VectorXd& grid) {
  if (predictions.rows() != truths.rows() ||
      predictions.cols() != truths.cols() ||
      predictions.cols() != grid.size()) {
    throw std::invalid_argument("mape: shape mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    const Eigen::VectorXd abs_err =
        (predictions.row(i) - truths.row(i)).cwiseAbs().transpose();
    acc += trapezoid(grid, abs_err);
  }
  return acc / predictions.rows();
}

}  // namespace flode
