#include "flode/simulate.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "flode/design.hpp"
#include "flode/quadrature.hpp"
#include "flode/splines.hpp"

namespace flode {

namespace {

Eigen::VectorXd equally_spaced_grid(int J) {
  if (J < 3) throw std::invalid_argument("simulate: grid_size must be >= 3");
  Eigen::VectorXd grid(J);
  for (int j = 0; j < J; ++j) grid[j] = static_cast<double>(j) / (J - 1);
  return grid;
}

// Smooth per-trial curves from a df-dimensional cubic spline basis with iid
// N(0, sigma2_d) coefficients.
Eigen::MatrixXd gen_random_intercepts(int n_trials,
                                      const Eigen::VectorXd& grid,
                                      double sigma2_d, int df,
                                      std::uint64_t seed) {
  const BasisSystem basis = build_basis(grid, df, 3);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2_d));
  Eigen::MatrixXd curves(n_trials, grid.size());
  Eigen::VectorXd coef(df);
  for (int i = 0; i < n_trials; ++i) {
    for (int k = 0; k < df; ++k) coef[k] = normal(rng);
    curves.row(i) = (basis.basis_matrix * coef).transpose();
  }
  return curves;
}

Eigen::MatrixXd gen_noise(int n_trials, int J, double sigma2,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2));
  Eigen::MatrixXd noise(n_trials, J);
  for (int i = 0; i < n_trials; ++i) {
    for (int j = 0; j < J; ++j) noise(i, j) = sigma2 > 0.0 ? normal(rng) : 0.0;
  }
  return noise;
}

Eigen::VectorXd gen_initial_positions(int n_trials, double variance,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  Eigen::VectorXd y0(n_trials);
  for (int i = 0; i < n_trials; ++i) y0[i] = variance > 0.0 ? normal(rng) : 0.0;
  return y0;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 step over master + index.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd bump_sum(const std::vector<GaussianBump>& bumps,
                         const Eigen::VectorXd& grid) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.size());
  for (const auto& bump : bumps) {
    out.array() += bump.height *
                   (-0.5 * ((grid.array() - bump.center) / bump.width).square())
                       .exp();
  }
  return out;
}

Eigen::MatrixXd gen_forcings(int n_trials, const Eigen::VectorXd& grid,
                             std::uint64_t seed, double scale_lo,
                             double scale_hi, double shift_lo, double shift_hi,
                             Eigen::VectorXd* scales, Eigen::VectorXd* shifts) {
  if (n_trials < 1) throw std::invalid_argument("gen_forcings: n_trials >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale_dist(scale_lo, scale_hi);
  std::uniform_real_distribution<double> shift_dist(shift_lo, shift_hi);
  Eigen::MatrixXd x(n_trials, grid.size());
  if (scales) scales->resize(n_trials);
  if (shifts) shifts->resize(n_trials);
  constexpr double pi = 3.141592653589793;
  for (int i = 0; i < n_trials; ++i) {
    const double scale = scale_dist(rng);
    const double shift = shift_dist(rng);
    if (scales) (*scales)[i] = scale;
    if (shifts) (*shifts)[i] = shift;
    x.row(i) = (scale * (pi * grid.array() + shift).sin()).transpose();
  }
  return x;
}

SimResult gen_flode_dataset(const SimConfig& config) {
  const Eigen::VectorXd grid = equally_spaced_grid(config.grid_size);
  const int N = config.n_trials;
  const int J = config.grid_size;

  const Eigen::VectorXd y0 =
      gen_initial_positions(N, config.y0_variance, derive_seed(config.seed, 0));
  const Eigen::MatrixXd x = gen_forcings(
      N, grid, derive_seed(config.seed, 1), config.scale_lo, config.scale_hi,
      config.shift_lo, config.shift_hi);
  const Eigen::MatrixXd delta =
      config.sigma2_d > 0.0
          ? gen_random_intercepts(N, grid, config.sigma2_d, config.delta_df,
                                  derive_seed(config.seed, 2))
          : Eigen::MatrixXd::Zero(N, J);
  const Eigen::MatrixXd noise =
      gen_noise(N, J, config.sigma2, derive_seed(config.seed, 3));

  const Eigen::VectorXd b0 = bump_sum(config.b0_spec, grid);
  const Eigen::VectorXd b1 = bump_sum(config.b1_spec, grid);
  const Eigen::VectorXd decay = (-config.alpha * grid.array()).exp();
  const Eigen::VectorXd intercept_term =
      exp_kernel_integral(grid, b0, config.alpha);

  SimResult result;
  result.data.grid = grid;
  result.data.responses.resize(N, J);
  result.data.forcings = {x};
  result.data.trial_ids.reserve(N);
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd forcing_term = exp_kernel_integral(
        grid, (b1.array() * x.row(i).transpose().array()).matrix(),
        config.alpha);
    const Eigen::VectorXd delta_term =
        exp_kernel_integral(grid, delta.row(i).transpose(), config.alpha);
    result.data.responses.row(i) =
        (y0[i] * decay + delta_term + intercept_term + forcing_term +
         noise.row(i).transpose())
            .transpose();
    result.data.trial_ids.push_back(std::to_string(i + 1));
  }

  result.truth.kind = TruthKind::kFlode;
  result.truth.alpha = config.alpha;
  result.truth.b0_fn = b0;
  result.truth.b1_fn = b1;
  result.truth.surface = flode_surface(config.alpha, grid, b1);
  result.truth.y0 = y0;
  result.truth.random_intercepts = delta;
  return result;
}

SimResult gen_fhist_dataset(const SimConfig& config) {
  const Eigen::VectorXd grid = equally_spaced_grid(config.grid_size);
  const int N = config.n_trials;
  const int J = config.grid_size;

  const Eigen::MatrixXd x = gen_forcings(
      N, grid, derive_seed(config.seed, 1), config.scale_lo, config.scale_hi,
      config.shift_lo, config.shift_hi);
  const Eigen::MatrixXd gamma =
      config.sigma2_d > 0.0
          ? gen_random_intercepts(N, grid, config.sigma2_d, config.delta_df,
                                  derive_seed(config.seed, 2))
          : Eigen::MatrixXd::Zero(N, J);
  const Eigen::MatrixXd noise =
      gen_noise(N, J, config.sigma2, derive_seed(config.seed, 3));

  const Eigen::VectorXd beta0 = bump_sum(config.b0_spec, grid);

  // Bump surface restricted to s <= t.
  Surface surface;
  surface.grid = grid;
  surface.values = Eigen::MatrixXd::Zero(J, J);
  for (int s = 0; s < J; ++s) {
    for (int t = s; t < J; ++t) {
      const double ds = (grid[s] - config.bump_s_center) / config.bump_sd;
      const double dt = (grid[t] - config.bump_t_center) / config.bump_sd;
      surface.values(s, t) =
          config.bump_height * std::exp(-0.5 * (ds * ds + dt * dt));
    }
  }

  SimResult result;
  result.data.grid = grid;
  result.data.responses.resize(N, J);
  result.data.forcings = {x};
  result.data.trial_ids.reserve(N);
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd integral(J);
    for (int t = 0; t < J; ++t) {
      // int_0^{t} beta(s, t) x_i(s) ds over grid points s <= t.
      const Eigen::VectorXd integrand =
          surface.values.col(t).head(t + 1).array() *
          x.row(i).head(t + 1).transpose().array();
      integral[t] = trapezoid(grid.head(t + 1), integrand);
    }
    result.data.responses.row(i) =
        (gamma.row(i).transpose() + beta0 + integral +
         noise.row(i).transpose())
            .transpose();
    result.data.trial_ids.push_back(std::to_string(i + 1));
  }

  result.truth.kind = TruthKind::kFhist;
  result.truth.alpha = 0.0;
  result.truth.b0_fn = beta0;
  result.truth.b1_fn = Eigen::VectorXd::Zero(J);
  result.truth.surface = surface;
  result.truth.y0 = result.data.responses.col(0);
  result.truth.random_intercepts = gamma;
  return result;
}

SimResult gen_dataset(const SimConfig& config) {
  return config.truth_kind == TruthKind::kFlode ? gen_flode_dataset(config)
                                                : gen_fhist_dataset(config);
}

}  // namespace flode
