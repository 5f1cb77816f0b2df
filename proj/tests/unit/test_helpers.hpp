#pragma once

#include <random>

#include <Eigen/Core>

namespace flode_test {

inline Eigen::VectorXd linspace01(int n) {
  Eigen::VectorXd grid(n);
  for (int i = 0; i < n; ++i) grid[i] = static_cast<double>(i) / (n - 1);
  return grid;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

// Sorted random grid in [0, 1] with distinct points, endpoints included.
inline Eigen::VectorXd random_grid(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  v[0] = 0.0;
  v[n - 1] = 1.0;
  for (int i = 1; i + 1 < n; ++i) v[i] = dist(rng);
  std::sort(v.data(), v.data() + n);
  for (int i = 1; i < n; ++i) {
    if (v[i] <= v[i - 1]) v[i] = v[i - 1] + 1e-6;
  }
  return v / v[n - 1];
}

}  // namespace flode_test
