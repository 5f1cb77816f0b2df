#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/design.hpp"
#include "flode/splines.hpp"

namespace flode {

/// Experiment-wide parameters: buffering, fixed-effect spline coefficients,
/// per-trial true initial positions, and variance components.
struct FlodeParams {
  double alpha = 1.0;
  Eigen::VectorXd b;   // K(P+1), blocks b_0 .. b_P
  Eigen::VectorXd y0;  // N
  double sigma2 = 1.0;
  double sigma2_d = 100.0;
  double sigma2_b = 100.0;
};

/// Posterior moments of the random-intercept spline coefficients. The
/// covariance C is shared across trials because dstar is.
struct PosteriorMoments {
  Eigen::MatrixXd m;  // N x K posterior means
  Eigen::MatrixXd C;  // K x K posterior covariance

  static PosteriorMoments zero(int n_trials, int K);
};

struct FitOptions {
  double tol = 1e-6;                  // absolute change of marginal loglik
  int max_iter = 200;
  double alpha_lo = 1e-6;
  double alpha_hi = 40.0;
  bool random_effects = true;
  bool estimate_alpha = true;         // disabled during bootstrap refits
  int init_grid_points = 41;          // alpha_0 grid on [0, 20]
  std::optional<FlodeParams> initial; // warm start; skips the grid search
};

struct FlodeFit {
  FlodeParams params;
  PosteriorMoments moments;
  BasisSystem basis;
  std::vector<double> loglik_trace;  // one entry per iteration
  int n_iter = 0;
  bool converged = false;
  // Expected residual sum of squares checkpoints per iteration:
  // {before M-step, after alpha, after b, after y0}.
  std::vector<std::array<double, 4>> rss_checkpoints;

  /// Estimated coefficient function B_p on the grid (p in 0..P).
  Eigen::VectorXd coefficient_function(int p) const;
};

/// Expected residual sum of squares <eps' eps> over d_i ~ N(m_i, C),
/// including the N * tr(dstar' dstar C) term.
double expected_rss(const FunctionalDataset& data, const DesignBundle& bundle,
                    const Eigen::VectorXd& b, const PosteriorMoments& moments);

/// Posterior moments of the random-intercept coefficients given current
/// parameters: C = (P/sigma2_d + dstar'dstar/sigma2)^-1,
/// m_i = C dstar'(Y_i - y0star_i - xstar_i b)/sigma2.
PosteriorMoments estep(const FunctionalDataset& data,
                       const DesignBundle& bundle, const BasisSystem& basis,
                       const FlodeParams& params);

/// Penalized normal-equation update of the stacked fixed-effect coefficients;
/// the penalty enters block-diagonally, one basis penalty per coefficient
/// function.
Eigen::VectorXd mstep_b(const FunctionalDataset& data,
                        const DesignBundle& bundle, const BasisSystem& basis,
                        const PosteriorMoments& moments,
                        const FlodeParams& params);

/// Line-search update of alpha minimizing the expected residual sum of
/// squares, with the fitted random-intercept curves dstar * m_i held fixed
/// while y0star and xstar are rebuilt at each candidate (re_bundle supplies
/// the dstar used to freeze those curves; with zero moments this is exactly
/// the expected-RSS minimizer). Never returns a value whose rebuilt-design
/// expected RSS exceeds the incumbent's.
double mstep_alpha(const FunctionalDataset& data, const BasisSystem& basis,
                   const DesignBundle& re_bundle,
                   const PosteriorMoments& moments, const FlodeParams& params,
                   double alpha_lo, double alpha_hi, bool full_scan);

/// Joint penalized generalized-least-squares update of (b, y0) under the
/// marginal covariance sigma2_d dstar P^-1 dstar' + sigma2 I. Solves, in one
/// step, the fixed-point equations of the conditional b and y0 updates
/// combined with the E-step. When b_posterior_cov is non-null it receives
/// the posterior covariance of b (y0 profiled out).
void gls_mean_update(const FunctionalDataset& data, const DesignBundle& bundle,
                     const BasisSystem& basis, FlodeParams& params,
                     Eigen::MatrixXd* b_posterior_cov = nullptr);

/// Per-trial projection of the partial residual onto e^{-alpha t}.
Eigen::VectorXd mstep_y0(const FunctionalDataset& data,
                         const DesignBundle& bundle,
                         const PosteriorMoments& moments,
                         const FlodeParams& params);

struct VarianceUpdate {
  double sigma2;
  double sigma2_d;
  double sigma2_b;
};

/// Variance updates sigma2 = <eps'eps>/(NJ), sigma2_d = sum <d'Pd>/(NK),
/// sigma2_b = sum_p b_p'P b_p / ((P+1)K). When b_posterior_cov is non-null
/// the sigma2_b numerator gains the posterior-uncertainty term tr(P C_b),
/// the exact EM update for the Gaussian prior on b (without it the point
/// estimate spirals sigma2_b to the floor).
VarianceUpdate mstep_variances(const FunctionalDataset& data,
                               const DesignBundle& bundle,
                               const BasisSystem& basis,
                               const PosteriorMoments& moments,
                               const FlodeParams& params,
                               const Eigen::MatrixXd* b_posterior_cov = nullptr);

/// Marginal log-likelihood of the observed data with the random intercepts
/// integrated out: sum_i log N(Y_i; y0star_i + xstar_i b,
/// sigma2_d dstar P^-1 dstar' + sigma2 I).
double marginal_loglik(const FunctionalDataset& data,
                       const DesignBundle& bundle, const BasisSystem& basis,
                       const FlodeParams& params);

/// Grid-search initialization: alpha_0 minimizing the OLS loss with zero
/// random effects and y0 = observed Y_i(0); sigma2 from the OLS residuals;
/// sigma2_b = sigma2_d = 100.
FlodeParams init_params(const FunctionalDataset& data,
                        const BasisSystem& basis, int grid_points,
                        const FitOptions& options = {});

/// Full EM fit. Iterates E-step then M-step (alpha, b, y0, variances) until
/// the marginal log-likelihood change drops below tol or max_iter is hit.
FlodeFit fit(const FunctionalDataset& data, const BasisSystem& basis,
             const FitOptions& options = {});

}  // namespace flode
