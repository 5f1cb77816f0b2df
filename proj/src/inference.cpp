#include "flode/inference.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "flode/parallel.hpp"
#include "flode/simulate.hpp"

namespace flode {

std::vector<CoefficientBand> bootstrap_bands(
    const FunctionalDataset& data, const BasisSystem& basis,
    const FlodeFit& fit, int n_boot, std::uint64_t seed, int n_threads,
    std::vector<Eigen::MatrixXd>* replicate_curves) {
  if (n_boot < 2) {
    throw std::invalid_argument("bootstrap_bands: n_boot must be >= 2");
  }
  const int N = data.n_trials();
  const int J = data.n_times();
  const int K = basis.K;
  const int n_fns = static_cast<int>(fit.params.b.size()) / K;

  // One refit per replicate, alpha optimizer disabled, warm-started from the
  // full-data parameters with y0 re-indexed by the resample.
  std::vector<Eigen::MatrixXd> curves(n_boot);  // n_fns x J each
  std::vector<char> ok(n_boot, 0);
  parallel_for(
      n_boot,
      [&](int rep) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
        std::uniform_int_distribution<int> pick(0, N - 1);
        std::vector<int> indices(N);
        for (int i = 0; i < N; ++i) indices[i] = pick(rng);

        FitOptions opts;
        opts.random_effects = true;
        opts.estimate_alpha = false;
        FlodeParams warm = fit.params;
        Eigen::VectorXd y0(N);
        for (int i = 0; i < N; ++i) y0[i] = fit.params.y0[indices[i]];
        warm.y0 = y0;
        opts.initial = warm;

        try {
          const FlodeFit refit =
              flode::fit(data.select_trials(indices), basis, opts);
          Eigen::MatrixXd c(n_fns, J);
          for (int p = 0; p < n_fns; ++p) {
            c.row(p) = refit.coefficient_function(p).transpose();
          }
          curves[rep] = std::move(c);
          ok[rep] = 1;
        } catch (const std::exception&) {
          ok[rep] = 0;  // recorded as a failed replicate
        }
      },
      n_threads);

  int n_ok = 0;
  for (char flag : ok) n_ok += flag;
  if (n_ok < n_boot - n_boot / 10) {
    throw std::runtime_error("bootstrap_bands: more than 10% of replicates failed");
  }
  if (replicate_curves) {
    replicate_curves->clear();
    for (int rep = 0; rep < n_boot; ++rep) {
      if (ok[rep]) replicate_curves->push_back(curves[rep]);
    }
  }

  std::vector<CoefficientBand> bands(n_fns);
  for (int p = 0; p < n_fns; ++p) {
    Eigen::MatrixXd stack(n_ok, J);
    int r = 0;
    for (int rep = 0; rep < n_boot; ++rep) {
      if (ok[rep]) stack.row(r++) = curves[rep].row(p);
    }
    CoefficientBand band;
    band.grid = data.grid;
    band.estimate = fit.coefficient_function(p);
    band.n_boot = n_ok;
    const Eigen::RowVectorXd mean = stack.colwise().mean();
    band.se = ((stack.rowwise() - mean).colwise().squaredNorm() / (n_ok - 1))
                  .cwiseSqrt()
                  .transpose();
    band.lower = band.estimate - 1.96 * band.se;
    band.upper = band.estimate + 1.96 * band.se;
    bands[p] = std::move(band);
  }
  return bands;
}

}  // namespace flode
