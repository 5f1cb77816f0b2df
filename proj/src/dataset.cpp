#include "flode/dataset.hpp"

#include <stdexcept>
#include <string>

namespace flode {

void FunctionalDataset::validate() const {
  const Eigen::Index n = responses.rows();
  const Eigen::Index j = grid.size();
  if (n < 1) throw std::invalid_argument("dataset: needs at least one trial");
  if (j < 3) throw std::invalid_argument("dataset: grid needs at least 3 points");
  if (responses.cols() != j) {
    throw std::invalid_argument("dataset: responses must be N x J");
  }
  for (Eigen::Index t = 0; t < j; ++t) {
    if (grid[t] < 0.0 || grid[t] > 1.0) {
      throw std::invalid_argument("dataset: grid points must lie in [0, 1]");
    }
    if (t > 0 && grid[t] <= grid[t - 1]) {
      throw std::invalid_argument("dataset: grid must be strictly increasing");
    }
  }
  if (!responses.allFinite()) {
    throw std::invalid_argument("dataset: responses contain non-finite values");
  }
  for (std::size_t p = 0; p < forcings.size(); ++p) {
    if (forcings[p].rows() != n || forcings[p].cols() != j) {
      throw std::invalid_argument("dataset: forcing " + std::to_string(p + 1) +
                                  " must be N x J");
    }
    if (!forcings[p].allFinite()) {
      throw std::invalid_argument("dataset: forcing " + std::to_string(p + 1) +
                                  " contains non-finite values");
    }
  }
  if (!trial_ids.empty() && static_cast<Eigen::Index>(trial_ids.size()) != n) {
    throw std::invalid_argument("dataset: trial_ids size must match N");
  }
}

FunctionalDataset FunctionalDataset::select_trials(
    const std::vector<int>& indices) const {
  FunctionalDataset out;
  out.grid = grid;
  const Eigen::Index j = grid.size();
  out.responses.resize(indices.size(), j);
  out.forcings.assign(forcings.size(), Eigen::MatrixXd(indices.size(), j));
  out.trial_ids.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int i = indices[r];
    if (i < 0 || i >= n_trials()) {
      throw std::invalid_argument("select_trials: index out of range");
    }
    out.responses.row(r) = responses.row(i);
    for (std::size_t p = 0; p < forcings.size(); ++p) {
      out.forcings[p].row(r) = forcings[p].row(i);
    }
    out.trial_ids.push_back(trial_ids.empty() ? std::to_string(i)
                                              : trial_ids[i]);
  }
  return out;
}

}  // namespace flode
