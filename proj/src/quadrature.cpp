#include "flode/quadrature.hpp"

#include <stdexcept>
#include <string>

namespace flode {

namespace {

void check_grid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
  if (grid.size() != values.size()) {
    throw std::invalid_argument(
        "trapezoid: grid has " + std::to_string(grid.size()) +
        " points but values has " + std::to_string(values.size()));
  }
  for (Eigen::Index j = 1; j < grid.size(); ++j) {
    if (grid[j] < grid[j - 1]) {
      throw std::invalid_argument("trapezoid: grid is not sorted ascending");
    }
  }
}

}  // namespace

double trapezoid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
  check_grid(grid, values);
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < grid.size(); ++j) {
    acc += 0.5 * (grid[j + 1] - grid[j]) * (values[j] + values[j + 1]);
  }
  return acc;
}

Eigen::VectorXd cumulative_trapezoid(const Eigen::VectorXd& grid,
                                     const Eigen::VectorXd& values) {
  check_grid(grid, values);
  Eigen::VectorXd out(grid.size());
  if (grid.size() == 0) return out;
  double acc = 0.0;
  out[0] = 0.0;
  for (Eigen::Index j = 1; j < grid.size(); ++j) {
    acc += 0.5 * (grid[j] - grid[j - 1]) * (values[j - 1] + values[j]);
    out[j] = acc;
  }
  return out;
}

}  // namespace flode
