#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "flode/splines.hpp"
#include "test_helpers.hpp"

using namespace flode;
using flode_test::linspace01;

namespace {

// Independent Cox-de Boor recursion oracle. Knots replicate the clamped
// construction: degree+1 copies of each boundary, equally spaced interior.
std::vector<double> oracle_knots(double lo, double hi, int K, int degree) {
  std::vector<double> knots;
  for (int i = 0; i <= degree; ++i) knots.push_back(lo);
  const int n_interior = K - degree - 1;
  for (int i = 1; i <= n_interior; ++i) {
    knots.push_back(lo + (hi - lo) * i / (n_interior + 1));
  }
  for (int i = 0; i <= degree; ++i) knots.push_back(hi);
  return knots;
}

double cox_de_boor(const std::vector<double>& knots, int i, int degree,
                   double x, double domain_hi) {
  if (degree == 0) {
    if (x >= knots[i] && x < knots[i + 1]) return 1.0;
    // Close the right end of the domain.
    if (x == domain_hi && knots[i] < knots[i + 1] && knots[i + 1] == domain_hi) {
      return 1.0;
    }
    return 0.0;
  }
  double left = 0.0, right = 0.0;
  const double dl = knots[i + degree] - knots[i];
  if (dl > 0.0) {
    left = (x - knots[i]) / dl * cox_de_boor(knots, i, degree - 1, x, domain_hi);
  }
  const double dr = knots[i + degree + 1] - knots[i + 1];
  if (dr > 0.0) {
    right = (knots[i + degree + 1] - x) / dr *
            cox_de_boor(knots, i + 1, degree - 1, x, domain_hi);
  }
  return left + right;
}

}  // namespace

TEST_CASE("basis rows form a partition of unity with nonnegative entries") {
  const BasisSystem basis = build_basis(linspace01(50), 20, 3);
  CHECK(basis.basis_matrix.rows() == 50);
  CHECK(basis.basis_matrix.cols() == 20);
  for (int j = 0; j < 50; ++j) {
    CHECK(std::abs(basis.basis_matrix.row(j).sum() - 1.0) < 1e-10);
  }
  CHECK(basis.basis_matrix.minCoeff() >= 0.0);
}

TEST_CASE("minimal legal basis K = degree + 2 still sums to one") {
  for (int degree : {1, 2, 3}) {
    const BasisSystem basis = build_basis(linspace01(20), degree + 2, degree);
    for (int j = 0; j < 20; ++j) {
      CHECK(std::abs(basis.basis_matrix.row(j).sum() - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("basis evaluations agree with the Cox-de Boor recursion oracle") {
  Eigen::VectorXd grid5(5);
  grid5 << 0.0, 0.25, 0.5, 0.75, 1.0;
  const BasisSystem basis = build_basis(grid5, 6, 3);
  const auto knots = oracle_knots(0.0, 1.0, 6, 3);
  for (int j = 0; j < 5; ++j) {
    for (int k = 0; k < 6; ++k) {
      const double expected = cox_de_boor(knots, k, 3, grid5[j], 1.0);
      CHECK(std::abs(basis.basis_matrix(j, k) - expected) < 1e-12);
    }
  }
}

TEST_CASE("oracle agreement holds on random grids and dimensions") {
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> k_dist(6, 24);
  std::uniform_int_distribution<int> deg_dist(1, 3);
  for (int rep = 0; rep < 15; ++rep) {
    const int K = k_dist(rng);
    const int degree = deg_dist(rng);
    const Eigen::VectorXd grid = flode_test::random_grid(30, rng);
    const BasisSystem basis = build_basis(grid, K, degree);
    const auto knots = oracle_knots(grid[0], grid[29], K, degree);
    for (int j = 0; j < 30; ++j) {
      for (int k = 0; k < K; ++k) {
        const double expected = cox_de_boor(knots, k, degree, grid[j], grid[29]);
        CHECK(std::abs(basis.basis_matrix(j, k) - expected) < 1e-12);
      }
    }
  }
}

TEST_CASE("penalty at lambda = 1 is the identity") {
  CHECK(build_penalty(12, 1.0).isApprox(Eigen::MatrixXd::Identity(12, 12), 1e-15));
}

TEST_CASE("penalty eigenstructure at small lambda") {
  const int K = 20;
  const double lambda = 0.001;
  const Eigen::MatrixXd p = build_penalty(K, lambda);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  CHECK(eig.eigenvalues().minCoeff() >= lambda * (1.0 - 1e-12));
  // P - lambda I is the pure difference penalty with rank K - 2.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(
      p - lambda * Eigen::MatrixXd::Identity(K, K));
  int rank = 0;
  for (int i = 0; i < K; ++i) {
    if (eig2.eigenvalues()[i] > 1e-9) ++rank;
  }
  CHECK(rank == K - 2);
}

TEST_CASE("second differences annihilate linear coefficient sequences") {
  const int K = 15;
  const Eigen::MatrixXd p = build_penalty(K, 0.001);
  Eigen::VectorXd linear(K);
  for (int k = 0; k < K; ++k) linear[k] = 0.3 + 1.7 * k;
  const Eigen::MatrixXd diff_part =
      (p - 0.001 * Eigen::MatrixXd::Identity(K, K)) / (1.0 - 0.001);
  CHECK(std::abs(linear.dot(diff_part * linear)) < 1e-9);
}

TEST_CASE("penalty is positive definite across lambda") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lam(1e-6, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd p = build_penalty(17, lam(rng));
    Eigen::LLT<Eigen::MatrixXd> llt(p);
    CHECK(llt.info() == Eigen::Success);
    CHECK(p.isApprox(p.transpose(), 1e-14));
  }
}

TEST_CASE("spline input validation") {
  CHECK_THROWS_AS(build_basis(linspace01(10), 4, 3), std::invalid_argument);
  Eigen::VectorXd bad(3);
  bad << 0.0, 0.5, 0.5;
  CHECK_THROWS_AS(build_basis(bad, 5, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_penalty(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_penalty(10, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(build_penalty(2, 0.5), std::invalid_argument);
  // K may not exceed the number of grid points when a penalty is attached.
  CHECK_THROWS_AS(make_basis_system(linspace01(8), 12, 0.001), std::invalid_argument);
}
