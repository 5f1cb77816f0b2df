#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/metrics.hpp"

namespace flode {

/// Penalized least-squares fit of the functional historical model (no
/// trial-specific random intercepts).
struct HistFit {
  std::vector<Surface> surfaces;  // one per forcing, zero for s > t
  Eigen::VectorXd intercept_fn;   // J
  Eigen::VectorXd grid;
  double ridge_weight = 1.0;

  const Surface& surface() const { return surfaces.front(); }
};

/// Penalized least-squares fit of the functional concurrent model (no
/// trial-specific random intercepts).
struct ConcFit {
  std::vector<Eigen::VectorXd> coef_fns;  // one per forcing, length J
  Eigen::VectorXd intercept_fn;           // J
  Eigen::VectorXd grid;
  double ridge_weight = 1.0;
};

/// Coefficient surfaces in a tensor product of two marginal B-spline bases
/// (size basis_marginal_size each) restricted to s <= t, with second-order
/// difference penalties on both margins blended with a small identity, all
/// scaled by ridge_weight.
HistFit fit_historical(const FunctionalDataset& data, int basis_marginal_size,
                       double ridge_weight);

/// Pointwise model Y_i(t) ~ beta_0(t) + sum_p beta_p(t) x_ip(t) with the
/// coefficient functions in a K-dimensional B-spline basis.
ConcFit fit_concurrent(const FunctionalDataset& data, int K,
                       double ridge_weight);

Eigen::MatrixXd predict_historical(const HistFit& fit,
                                   const std::vector<Eigen::MatrixXd>& forcings);

Eigen::MatrixXd predict_concurrent(const ConcFit& fit,
                                   const std::vector<Eigen::MatrixXd>& forcings);

/// Penalty-weight grid used for cross-validated smoothing selection.
std::vector<double> default_ridge_grid();

/// Ridge weight minimizing k-fold cross-validated MAPE.
double select_ridge_historical(const FunctionalDataset& data,
                               int basis_marginal_size, int folds,
                               std::uint64_t seed);
double select_ridge_concurrent(const FunctionalDataset& data, int K, int folds,
                               std::uint64_t seed);

/// Deterministic fold assignment: a seeded shuffle of trial indices split
/// into `folds` near-equal test sets that partition the trials.
std::vector<std::vector<int>> cv_folds(int n_trials, int folds,
                                       std::uint64_t seed);

namespace detail {
/// Per-trial historical design block (exposed for direct testing against the
/// definition-level quadrature oracle).
Eigen::MatrixXd historical_design(const FunctionalDataset& data, int trial,
                                  int basis_marginal_size);
}  // namespace detail

}  // namespace flode
