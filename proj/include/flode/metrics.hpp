#pragma once

#include <vector>

#include <Eigen/Core>

#include "flode/em.hpp"

namespace flode {

/// Discretized coefficient surface beta(s, t) on the shared grid; values are
/// indexed (s_index, t_index).
struct Surface {
  Eigen::VectorXd grid;
  Eigen::MatrixXd values;  // J x J
};

/// Surface induced by the integrated model: e^{-alpha (t - s)} B(s) for
/// s < t, zero on and below the diagonal.
Surface flode_surface(double alpha, const Eigen::VectorXd& grid,
                      const Eigen::VectorXd& coef_fn);

/// Double trapezoidal integral of (truth - estimate)^2 over s and t.
double surface_ise(const Surface& estimate, const Surface& truth);

/// Signed integrated error int (truth - estimate) dt.
double integrated_error(const Eigen::VectorXd& truth,
                        const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& grid);

inline double alpha_error(double truth, double estimate) {
  return truth - estimate;
}

/// Fixed-effect predictions for unseen trials: y0 e^{-alpha t} + xstar b with
/// random effects set to zero. Forcings must live on the training grid.
Eigen::MatrixXd predict(const FlodeParams& params, const BasisSystem& basis,
                        const std::vector<Eigen::MatrixXd>& new_forcings,
                        const Eigen::VectorXd& new_initial_positions);

/// Mean absolute prediction error (1/n) sum_i int |pred_i - truth_i| dt.
double mape(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths,
            const Eigen::VectorXd& grid);

}  // namespace flode
