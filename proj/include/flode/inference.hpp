#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/em.hpp"

namespace flode {

/// Pointwise Wald band for one coefficient function.
struct CoefficientBand {
  Eigen::VectorXd grid;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  Eigen::VectorXd lower;  // estimate - 1.96 se
  Eigen::VectorXd upper;  // estimate + 1.96 se
  int n_boot = 0;
};

/// Trial-resampling bootstrap with alpha held fixed at the full-data
/// estimate. Returns one band per coefficient function (p = 0..P), centered
/// at the full-data estimates with se the pointwise standard deviation of the
/// bootstrap coefficient curves. Replicates whose refit fails are skipped;
/// more than 10% failures is an error. When replicate_curves is non-null it
/// receives the per-replicate coefficient curves (one n_fns x J matrix per
/// successful replicate).
std::vector<CoefficientBand> bootstrap_bands(
    const FunctionalDataset& data, const BasisSystem& basis,
    const FlodeFit& fit, int n_boot, std::uint64_t seed, int n_threads = 0,
    std::vector<Eigen::MatrixXd>* replicate_curves = nullptr);

}  // namespace flode
