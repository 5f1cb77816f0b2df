#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/metrics.hpp"

namespace flode {

struct GaussianBump {
  double height = 1.0;
  double center = 0.5;
  double width = 0.15;
};

enum class TruthKind { kFlode, kFhist };

struct SimConfig {
  int n_trials = 100;
  int grid_size = 50;          // equally spaced on [0, 1]
  double alpha = 4.0;
  double sigma2 = 0.1;         // measurement noise variance
  double sigma2_d = 50.0;      // random-intercept coefficient variance
  double y0_variance = 5.0;    // initial positions ~ N(0, y0_variance)
  std::uint64_t seed = 1;
  TruthKind truth_kind = TruthKind::kFlode;
  int delta_df = 10;           // basis dimension for the random intercepts

  // Coefficient functions as sums of Gaussian bumps.
  std::vector<GaussianBump> b0_spec{{2.0, 0.2, 0.14}, {-1.5, 0.65, 0.15}};
  std::vector<GaussianBump> b1_spec{{4.0, 0.3, 0.16}, {2.0, 0.75, 0.12}};

  // Forcing-function draws: x_i(t) = scale_i * sin(pi t + shift_i).
  double scale_lo = 0.5, scale_hi = 2.0;
  double shift_lo = 0.0, shift_hi = 1.5707963267948966;

  // Historical truth surface: Gaussian bump restricted to s <= t.
  double bump_s_center = 0.25, bump_t_center = 0.75;
  double bump_sd = 0.1, bump_height = 5.0;
};

/// Ground truth stored alongside a simulated dataset for metric computation.
struct SimTruth {
  TruthKind kind = TruthKind::kFlode;
  double alpha = 0.0;           // flode only
  Eigen::VectorXd b0_fn;        // coefficient functions on the grid
  Eigen::VectorXd b1_fn;
  Surface surface;              // induced (flode) or bump (fhist) surface
  Eigen::VectorXd y0;           // true initial positions
  Eigen::MatrixXd random_intercepts;  // N x J curves (delta_i or gamma_i)
};

struct SimResult {
  FunctionalDataset data;
  SimTruth truth;
};

/// Evaluates a sum of Gaussian bumps on the grid.
Eigen::VectorXd bump_sum(const std::vector<GaussianBump>& bumps,
                         const Eigen::VectorXd& grid);

/// Trial-specific forcing curves x_i(t) = scale_i * sin(pi t + shift_i).
/// Optionally reports the drawn scale and shift parameters.
Eigen::MatrixXd gen_forcings(int n_trials, const Eigen::VectorXd& grid,
                             std::uint64_t seed, double scale_lo = 0.5,
                             double scale_hi = 2.0, double shift_lo = 0.0,
                             double shift_hi = 1.5707963267948966,
                             Eigen::VectorXd* scales = nullptr,
                             Eigen::VectorXd* shifts = nullptr);

/// Trajectories from the integrated first-order ODE with exponential decay
/// kernel, built with the same trapezoidal integrals the fitter uses.
SimResult gen_flode_dataset(const SimConfig& config);

/// Trajectories from the functional historical model with the bump surface.
SimResult gen_fhist_dataset(const SimConfig& config);

/// Dispatches on config.truth_kind.
SimResult gen_dataset(const SimConfig& config);

/// Deterministic per-replicate seed stream (splitmix64 over the master seed).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace flode
