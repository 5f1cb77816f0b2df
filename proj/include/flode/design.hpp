#pragma once

#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/splines.hpp"

namespace flode {

/// Exponential-kernel integrals I(t_j) = int_0^{t_j} e^{-alpha (t_j - s)} f(s) ds
/// evaluated by the trapezoidal rule over grid points s <= t_j. Computed by a
/// single forward pass using the interval recurrence
///   I(t_{j}) = e^{-alpha dt} I(t_{j-1}) + dt/2 (e^{-alpha dt} f_{j-1} + f_j),
/// which only ever multiplies by e^{-alpha dt} <= 1 and so is stable for any
/// alpha >= 0. Entry 0 is 0.
Eigen::VectorXd exp_kernel_integral(const Eigen::VectorXd& grid,
                                    const Eigen::VectorXd& values,
                                    double alpha);

/// Column-wise exp_kernel_integral over a J x m matrix of integrand values.
Eigen::MatrixXd exp_kernel_integral_cols(const Eigen::VectorXd& grid,
                                         const Eigen::MatrixXd& values,
                                         double alpha);

/// Alpha-dependent transformed design objects that make the integrated model
/// linear in the spline coefficients.
struct DesignBundle {
  double alpha = 0.0;
  std::vector<Eigen::MatrixXd> xstar;   // per trial, J x K(P+1); block 0 is the intercept
  Eigen::MatrixXd dstar;                // J x K, shared across trials
  std::vector<Eigen::VectorXd> y0star;  // per trial, length J
  Eigen::VectorXd decay;                // e^{-alpha t_j}

  int n_trials() const { return static_cast<int>(xstar.size()); }
};

/// One design block: entry (j, k) = int_0^{t_j} e^{-alpha (t_j - s)} forcing(s) theta_k(s) ds.
Eigen::MatrixXd build_xstar_block(const Eigen::VectorXd& forcing, double alpha,
                                  const BasisSystem& basis);

/// Design block for the random intercept; equals build_xstar_block with a
/// constant-one forcing.
Eigen::MatrixXd build_dstar(double alpha, const BasisSystem& basis);

/// y0 * e^{-alpha t_j}.
Eigen::VectorXd build_y0star(double y0, double alpha,
                             const Eigen::VectorXd& grid);

/// Builds all design objects at the given alpha. xstar gets P+1 blocks: block
/// 0 from the constant-one forcing (population intercept), blocks 1..P from
/// the dataset forcings.
DesignBundle assemble_bundle(const FunctionalDataset& data, double alpha,
                             const BasisSystem& basis,
                             const Eigen::VectorXd& y0);

/// Recomputes only the y0star vectors of an existing bundle (used after
/// updating the initial-position estimates).
void refresh_y0star(DesignBundle& bundle, const Eigen::VectorXd& y0,
                    const Eigen::VectorXd& grid);

}  // namespace flode
