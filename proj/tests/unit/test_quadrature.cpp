#include <cmath>
#include <random>

#include "doctest.h"
#include "flode/quadrature.hpp"
#include "test_helpers.hpp"

using namespace flode;
using flode_test::linspace01;
using flode_test::random_vector;

TEST_CASE("trapezoid integrates a constant exactly") {
  Eigen::VectorXd grid(3), values(3);
  grid << 0.0, 0.5, 1.0;
  values << 1.0, 1.0, 1.0;
  CHECK(trapezoid(grid, values) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("trapezoid of a single point is zero") {
  Eigen::VectorXd one(1);
  one << 0.3;
  CHECK(trapezoid(one, one) == 0.0);
  CHECK(trapezoid(Eigen::VectorXd(), Eigen::VectorXd()) == 0.0);
}

TEST_CASE("trapezoid matches the analytic integral of sin(pi t)") {
  const Eigen::VectorXd grid = linspace01(50);
  const Eigen::VectorXd values = (M_PI * grid.array()).sin();
  const double exact = 2.0 / M_PI;
  CHECK(std::abs(trapezoid(grid, values) - exact) < 2e-3);

  // O(h^2): doubling the resolution shrinks the error by about 4.
  const Eigen::VectorXd grid2 = linspace01(99);  // h exactly halved
  const Eigen::VectorXd values2 = (M_PI * grid2.array()).sin();
  const double err1 = std::abs(trapezoid(grid, values) - exact);
  const double err2 = std::abs(trapezoid(grid2, values2) - exact);
  CHECK(err1 / err2 > 3.5);
  CHECK(err1 / err2 < 4.5);
}

TEST_CASE("trapezoid is linear in the integrand") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd grid = flode_test::random_grid(31, rng);
    const Eigen::VectorXd f = random_vector(31, rng);
    const Eigen::VectorXd g = random_vector(31, rng);
    const double a = 2.25, b = -0.75;
    const double lhs = trapezoid(grid, a * f + b * g);
    const double rhs = a * trapezoid(grid, f) + b * trapezoid(grid, g);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("cumulative_trapezoid basics") {
  Eigen::VectorXd grid(3), ones(3);
  grid << 0.0, 0.5, 1.0;
  ones << 1.0, 1.0, 1.0;
  const Eigen::VectorXd cum = cumulative_trapezoid(grid, ones);
  CHECK(cum[0] == 0.0);
  CHECK(cum[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cum[2] == doctest::Approx(1.0).epsilon(1e-15));

  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(3);
  CHECK(cumulative_trapezoid(grid, zeros).isZero(0.0));
}

TEST_CASE("cumulative_trapezoid matches prefix trapezoid calls") {
  std::mt19937_64 rng(11);
  const Eigen::VectorXd grid = flode_test::random_grid(25, rng);
  const Eigen::VectorXd values = random_vector(25, rng);
  const Eigen::VectorXd cum = cumulative_trapezoid(grid, values);
  for (int m = 1; m <= 25; ++m) {
    const double prefix = trapezoid(grid.head(m), values.head(m));
    CHECK(std::abs(cum[m - 1] - prefix) < 1e-13);
  }
  // Last entry agrees with the full integral exactly (same summation order).
  CHECK(cum[24] == trapezoid(grid, values));
}

TEST_CASE("quadrature input validation") {
  Eigen::VectorXd grid(3), values(2);
  grid << 0.0, 0.5, 1.0;
  values << 1.0, 2.0;
  CHECK_THROWS_AS(trapezoid(grid, values), std::invalid_argument);

  Eigen::VectorXd bad(3), v3(3);
  bad << 0.0, 0.7, 0.5;
  v3 << 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(trapezoid(bad, v3), std::invalid_argument);
  CHECK_THROWS_AS(cumulative_trapezoid(bad, v3), std::invalid_argument);
}
