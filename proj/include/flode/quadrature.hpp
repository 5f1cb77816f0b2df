#pragma once

#include <Eigen/Core>

namespace flode {

/// Composite trapezoidal rule over a sorted grid. Returns 0 for fewer than
/// two points.
double trapezoid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values);

/// Running trapezoidal integral: entry j holds the integral over
/// grid[0..j]. Entry 0 is always 0, and the last entry equals
/// trapezoid(grid, values) exactly.
Eigen::VectorXd cumulative_trapezoid(const Eigen::VectorXd& grid,
                                     const Eigen::VectorXd& values);

}  // namespace flode
