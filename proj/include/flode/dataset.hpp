#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace flode {

/// Repeated trajectory data on a shared grid: N response curves and P
/// forcing-function curves per trial.
struct FunctionalDataset {
  Eigen::VectorXd grid;                   // J sorted times in [0, 1]
  Eigen::MatrixXd responses;              // N x J
  std::vector<Eigen::MatrixXd> forcings;  // P matrices, each N x J
  std::vector<std::string> trial_ids;     // N labels

  int n_trials() const { return static_cast<int>(responses.rows()); }
  int n_times() const { return static_cast<int>(grid.size()); }
  int n_forcings() const { return static_cast<int>(forcings.size()); }

  /// Throws std::invalid_argument when an invariant is broken (shape
  /// mismatches, unsorted grid, non-finite values).
  void validate() const;

  /// New dataset holding the given trials, in order, possibly with
  /// repetition (bootstrap resamples) or as a subset (CV folds).
  FunctionalDataset select_trials(const std::vector<int>& indices) const;
};

}  // namespace flode
