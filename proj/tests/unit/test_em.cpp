#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "doctest.h"
#include "flode/brent.hpp"
#include "flode/em.hpp"
#include "flode/simulate.hpp"
#include "test_helpers.hpp"

using namespace flode;
using flode_test::linspace01;
using flode_test::random_vector;

namespace {

struct SmallProblem {
  FunctionalDataset data;
  BasisSystem basis;
  FlodeParams params;
  DesignBundle bundle;
};

SmallProblem make_problem(int N, int J, int K, double alpha,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SmallProblem prob;
  prob.data.grid = linspace01(J);
  prob.data.responses.resize(N, J);
  prob.data.forcings = {Eigen::MatrixXd(N, J)};
  for (int i = 0; i < N; ++i) {
    prob.data.responses.row(i) = random_vector(J, rng).transpose();
    prob.data.forcings[0].row(i) = random_vector(J, rng, -2.0, 2.0).transpose();
  }
  prob.basis = make_basis_system(prob.data.grid, K, 0.001);
  prob.params.alpha = alpha;
  prob.params.b = random_vector(2 * K, rng, -0.5, 0.5);
  prob.params.y0 = random_vector(N, rng);
  prob.params.sigma2 = 0.3;
  prob.params.sigma2_d = 2.0;
  prob.params.sigma2_b = 5.0;
  prob.bundle = assemble_bundle(prob.data, alpha, prob.basis, prob.params.y0);
  return prob;
}

Eigen::VectorXd project_onto_basis(const BasisSystem& basis,
                                   const Eigen::VectorXd& fn) {
  return basis.basis_matrix.colPivHouseholderQr().solve(fn);
}

}  // namespace

TEST_CASE("estep: tiny prior variance collapses the posterior") {
  SmallProblem prob = make_problem(4, 12, 6, 2.0, 1);
  prob.params.sigma2_d = 1e-12;
  const PosteriorMoments moments =
      estep(prob.data, prob.bundle, prob.basis, prob.params);
  CHECK(moments.m.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(moments.C.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("estep: zero residuals give zero posterior means") {
  SmallProblem prob = make_problem(4, 12, 6, 2.0, 2);
  for (int i = 0; i < 4; ++i) {
    prob.data.responses.row(i) =
        (prob.bundle.y0star[i] + prob.bundle.xstar[i] * prob.params.b)
            .transpose();
  }
  const PosteriorMoments moments =
      estep(prob.data, prob.bundle, prob.basis, prob.params);
  // Zero up to the rounding of the residual construction itself.
  CHECK(moments.m.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estep matches the dense posterior oracle on small instances") {
  for (std::uint64_t seed : {3, 4, 5}) {
    SmallProblem prob = make_problem(3, 10, 5, 1.5, seed);
    const PosteriorMoments moments =
        estep(prob.data, prob.bundle, prob.basis, prob.params);
    const Eigen::MatrixXd precision =
        prob.basis.penalty / prob.params.sigma2_d +
        prob.bundle.dstar.transpose() * prob.bundle.dstar / prob.params.sigma2;
    const Eigen::MatrixXd c_oracle = precision.inverse();
    CHECK((moments.C - c_oracle).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd resid = prob.data.responses.row(i).transpose() -
                                    prob.bundle.y0star[i] -
                                    prob.bundle.xstar[i] * prob.params.b;
      const Eigen::VectorXd m_oracle =
          c_oracle * prob.bundle.dstar.transpose() * resid / prob.params.sigma2;
      CHECK((moments.m.row(i).transpose() - m_oracle).cwiseAbs().maxCoeff() <
            1e-8);
    }
  }
}

TEST_CASE("mstep_b: zero partial residual gives b = 0") {
  SmallProblem prob = make_problem(4, 15, 6, 2.0, 6);
  PosteriorMoments moments = PosteriorMoments::zero(4, 6);
  std::mt19937_64 rng(99);
  moments.m = Eigen::MatrixXd::Random(4, 6);
  for (int i = 0; i < 4; ++i) {
    prob.data.responses.row(i) =
        (prob.bundle.y0star[i] +
         prob.bundle.dstar * moments.m.row(i).transpose())
            .transpose();
  }
  const Eigen::VectorXd b =
      mstep_b(prob.data, prob.bundle, prob.basis, moments, prob.params);
  CHECK(b.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mstep_b matches unpenalized least squares when the ridge vanishes") {
  SmallProblem prob = make_problem(4, 25, 6, 1.0, 7);
  prob.params.sigma2 = 0.5;
  prob.params.sigma2_b = 1e12;
  PosteriorMoments moments = PosteriorMoments::zero(4, 6);
  moments.m = Eigen::MatrixXd::Random(4, 6) * 0.3;

  const Eigen::VectorXd b =
      mstep_b(prob.data, prob.bundle, prob.basis, moments, prob.params);

  Eigen::MatrixXd stacked(4 * 25, 12);
  Eigen::VectorXd target(4 * 25);
  for (int i = 0; i < 4; ++i) {
    stacked.middleRows(i * 25, 25) = prob.bundle.xstar[i];
    target.segment(i * 25, 25) = prob.data.responses.row(i).transpose() -
                                 prob.bundle.y0star[i] -
                                 prob.bundle.dstar * moments.m.row(i).transpose();
  }
  const Eigen::VectorXd b_qr = stacked.colPivHouseholderQr().solve(target);
  CHECK((b - b_qr).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("mstep_b: infinite ridge shrinks b to zero") {
  SmallProblem prob = make_problem(4, 15, 6, 2.0, 8);
  prob.params.sigma2 = 1.0;
  prob.params.sigma2_b = 1e-12;
  const PosteriorMoments moments = PosteriorMoments::zero(4, 6);
  const Eigen::VectorXd b =
      mstep_b(prob.data, prob.bundle, prob.basis, moments, prob.params);
  CHECK(b.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("brent recovers the vertex of a quadratic") {
  const auto f = [](double x) { return (x - 2.3) * (x - 2.3); };
  const BrentResult res = brent_minimize(f, 0.0, 10.0, 1e-10);
  CHECK(std::abs(res.x - 2.3) < 1e-8);
  CHECK(res.converged);
}

TEST_CASE("mstep_alpha recovers the generating alpha on noise-free data") {
  SimConfig config;
  config.n_trials = 15;
  config.grid_size = 50;
  config.alpha = 3.0;
  config.sigma2 = 0.0;
  config.sigma2_d = 0.0;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 20, 0.001);

  FlodeParams params;
  params.alpha = 1.0;  // incumbent away from the truth
  params.b.resize(40);
  params.b.head(20) = project_onto_basis(basis, sim.truth.b0_fn);
  params.b.tail(20) = project_onto_basis(basis, sim.truth.b1_fn);
  params.y0 = sim.truth.y0;
  const PosteriorMoments moments = PosteriorMoments::zero(15, 20);
  const DesignBundle bundle =
      assemble_bundle(sim.data, params.alpha, basis, params.y0);

  const double alpha_hat =
      mstep_alpha(sim.data, basis, bundle, moments, params, 1e-6, 40.0, true);
  CHECK(std::abs(alpha_hat - 3.0) < 1e-3);

  // Optimality against a coarse grid of the same loss.
  const auto loss = [&](double a) {
    const DesignBundle cand = assemble_bundle(sim.data, a, basis, params.y0);
    return expected_rss(sim.data, cand, params.b, moments);
  };
  const double best = loss(alpha_hat);
  for (int g = 0; g < 9; ++g) {
    CHECK(best <= loss(1e-6 + (40.0 - 1e-6) * g / 8.0) + 1e-12);
  }
}

TEST_CASE("mstep_y0 projects partial residuals exactly") {
  SmallProblem prob = make_problem(3, 20, 5, 2.0, 9);
  PosteriorMoments moments = PosteriorMoments::zero(3, 5);
  moments.m = Eigen::MatrixXd::Random(3, 5) * 0.2;
  Eigen::VectorXd c(3);
  c << 1.7, -0.4, 0.0;
  for (int i = 0; i < 3; ++i) {
    prob.data.responses.row(i) =
        (c[i] * prob.bundle.decay + prob.bundle.xstar[i] * prob.params.b +
         prob.bundle.dstar * moments.m.row(i).transpose())
            .transpose();
  }
  const Eigen::VectorXd y0 =
      mstep_y0(prob.data, prob.bundle, moments, prob.params);
  CHECK((y0 - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mstep_y0: residual orthogonal to the decay vector gives zero") {
  SmallProblem prob = make_problem(1, 20, 5, 1.0, 10);
  const PosteriorMoments moments = PosteriorMoments::zero(1, 5);
  std::mt19937_64 rng(42);
  Eigen::VectorXd r = random_vector(20, rng);
  r -= (prob.bundle.decay.dot(r) / prob.bundle.decay.squaredNorm()) *
       prob.bundle.decay;
  prob.data.responses.row(0) =
      (r + prob.bundle.xstar[0] * prob.params.b).transpose();
  const Eigen::VectorXd y0 =
      mstep_y0(prob.data, prob.bundle, moments, prob.params);
  CHECK(std::abs(y0[0]) < 1e-13);
}

TEST_CASE("mstep_y0 matches a one-dimensional least-squares oracle") {
  SmallProblem prob = make_problem(5, 18, 5, 2.5, 11);
  PosteriorMoments moments = PosteriorMoments::zero(5, 5);
  moments.m = Eigen::MatrixXd::Random(5, 5) * 0.1;
  const Eigen::VectorXd y0 =
      mstep_y0(prob.data, prob.bundle, moments, prob.params);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd r = prob.data.responses.row(i).transpose() -
                              prob.bundle.xstar[i] * prob.params.b -
                              prob.bundle.dstar * moments.m.row(i).transpose();
    Eigen::MatrixXd d(18, 1);
    d.col(0) = prob.bundle.decay;
    const double oracle = d.colPivHouseholderQr().solve(r)[0];
    CHECK(std::abs(y0[i] - oracle) < 1e-10);
  }
}

TEST_CASE("mstep_variances floors degenerate components") {
  SmallProblem prob = make_problem(3, 15, 5, 2.0, 12);
  prob.params.b.setZero();
  for (int i = 0; i < 3; ++i) {
    prob.data.responses.row(i) = prob.bundle.y0star[i].transpose();
  }
  const PosteriorMoments moments = PosteriorMoments::zero(3, 5);
  const VarianceUpdate v =
      mstep_variances(prob.data, prob.bundle, prob.basis, moments, prob.params);
  CHECK(v.sigma2 == 1e-10);
  CHECK(v.sigma2_d == 1e-10);
  CHECK(v.sigma2_b == 1e-10);
}

TEST_CASE("expected RSS matches a Monte Carlo oracle") {
  const int K = 5;
  SmallProblem prob = make_problem(2, 8, K, 1.0, 13);
  PosteriorMoments moments;
  moments.m = Eigen::MatrixXd::Random(2, K) * 0.5;
  Eigen::MatrixXd half = Eigen::MatrixXd::Random(K, K) * 0.3;
  moments.C = half * half.transpose() + 0.05 * Eigen::MatrixXd::Identity(K, K);

  const double expected =
      expected_rss(prob.data, prob.bundle, prob.params.b, moments);

  const Eigen::LLT<Eigen::MatrixXd> llt(moments.C);
  const Eigen::MatrixXd chol = llt.matrixL();
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n_draws = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int draw = 0; draw < n_draws; ++draw) {
    double value = 0.0;
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXd z(K);
      for (int k = 0; k < K; ++k) z[k] = normal(rng);
      const Eigen::VectorXd d = moments.m.row(i).transpose() + chol * z;
      value += (prob.data.responses.row(i).transpose() - prob.bundle.y0star[i] -
                prob.bundle.xstar[i] * prob.params.b - prob.bundle.dstar * d)
                   .squaredNorm();
    }
    sum += value;
    sum2 += value * value;
  }
  const double mc_mean = sum / n_draws;
  const double mc_se =
      std::sqrt((sum2 / n_draws - mc_mean * mc_mean) / n_draws);
  CHECK(std::abs(expected - mc_mean) < 3.0 * mc_se);
}

TEST_CASE("marginal loglik reduces to iid Gaussian when sigma2_d -> 0") {
  SmallProblem prob = make_problem(3, 12, 5, 2.0, 14);
  prob.params.sigma2_d = 0.0;
  const double ll =
      marginal_loglik(prob.data, prob.bundle, prob.basis, prob.params);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd r = prob.data.responses.row(i).transpose() -
                              prob.bundle.y0star[i] -
                              prob.bundle.xstar[i] * prob.params.b;
    expected += -0.5 * (12 * std::log(2.0 * M_PI * prob.params.sigma2) +
                        r.squaredNorm() / prob.params.sigma2);
  }
  CHECK(std::abs(ll - expected) < 1e-10);
}

TEST_CASE("marginal loglik matches a dense multivariate normal oracle") {
  SmallProblem prob = make_problem(2, 8, 5, 1.5, 15);
  const double ll =
      marginal_loglik(prob.data, prob.bundle, prob.basis, prob.params);
  const Eigen::MatrixXd cov =
      prob.params.sigma2_d * prob.bundle.dstar *
          prob.basis.penalty.inverse() * prob.bundle.dstar.transpose() +
      prob.params.sigma2 * Eigen::MatrixXd::Identity(8, 8);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const Eigen::VectorXd r = prob.data.responses.row(i).transpose() -
                              prob.bundle.y0star[i] -
                              prob.bundle.xstar[i] * prob.params.b;
    expected += -0.5 * (8 * std::log(2.0 * M_PI) +
                        std::log(lu.determinant()) + r.dot(lu.solve(r)));
  }
  CHECK(std::abs(ll - expected) < 1e-8);
}

TEST_CASE("marginal loglik doubles when every trial is duplicated") {
  SmallProblem prob = make_problem(3, 10, 5, 2.0, 16);
  const double ll =
      marginal_loglik(prob.data, prob.bundle, prob.basis, prob.params);

  std::vector<int> twice = {0, 1, 2, 0, 1, 2};
  const FunctionalDataset doubled = prob.data.select_trials(twice);
  Eigen::VectorXd y0(6);
  y0 << prob.params.y0, prob.params.y0;
  FlodeParams params2 = prob.params;
  params2.y0 = y0;
  const DesignBundle bundle2 =
      assemble_bundle(doubled, prob.params.alpha, prob.basis, y0);
  const double ll2 = marginal_loglik(doubled, bundle2, prob.basis, params2);
  CHECK(std::abs(ll2 - 2.0 * ll) < 1e-9);
}

TEST_CASE("init recovers the generating alpha within one grid step") {
  SimConfig config;
  config.n_trials = 20;
  config.grid_size = 50;
  config.alpha = 4.0;
  config.sigma2 = 0.0;
  config.sigma2_d = 0.0;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 20, 0.001);
  const FlodeParams params = init_params(sim.data, basis, 41);
  CHECK(std::abs(params.alpha - 4.0) <= 0.5 + 1e-12);
  CHECK(params.sigma2_b == 100.0);
  CHECK(params.sigma2_d == 100.0);
  CHECK((params.y0 - sim.data.responses.col(0)).isZero(0.0));

  // Single-point grid returns that point (clamped into the alpha bounds).
  const FlodeParams single = init_params(sim.data, basis, 1);
  CHECK(single.alpha == 1e-6);
}

TEST_CASE("fit with infinite tolerance stops after one iteration") {
  SimConfig config;
  config.n_trials = 6;
  config.grid_size = 30;
  config.alpha = 2.0;
  config.seed = 5;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 10, 0.001);
  FitOptions opts;
  opts.tol = std::numeric_limits<double>::infinity();
  const FlodeFit result = fit(sim.data, basis, opts);
  CHECK(result.n_iter == 1);
  CHECK(result.loglik_trace.size() == 1);
  CHECK(result.converged);
}

TEST_CASE("fit recovers noise-free data without random effects") {
  SimConfig config;
  config.n_trials = 20;
  config.grid_size = 40;
  config.alpha = 4.0;
  config.sigma2 = 1e-8;
  config.sigma2_d = 0.0;
  config.seed = 21;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 15, 0.001);
  FitOptions opts;
  opts.random_effects = false;
  const FlodeFit result = fit(sim.data, basis, opts);

  CHECK(std::abs(result.params.alpha - 4.0) < 0.05);
  const DesignBundle bundle = assemble_bundle(sim.data, result.params.alpha,
                                              basis, result.params.y0);
  double sup_err = 0.0, sup_val = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd fitted =
        bundle.y0star[i] + bundle.xstar[i] * result.params.b;
    sup_err = std::max(
        sup_err,
        (fitted - sim.data.responses.row(i).transpose()).cwiseAbs().maxCoeff());
    sup_val =
        std::max(sup_val, sim.data.responses.row(i).cwiseAbs().maxCoeff());
  }
  CHECK(sup_err / sup_val < 1e-2);

  // Expected RSS is non-increasing across the alpha/b/y0 sub-updates.
  for (const auto& q : result.rss_checkpoints) {
    CHECK(q[1] <= q[0] * (1.0 + 1e-9) + 1e-12);
    CHECK(q[2] <= q[1] * (1.0 + 1e-9) + 1e-12);
    CHECK(q[3] <= q[2] * (1.0 + 1e-9) + 1e-12);
  }
}

TEST_CASE("fit with random effects: checkpoints monotone, then converges") {
  SimConfig config;
  config.n_trials = 15;
  config.grid_size = 30;
  config.alpha = 2.0;
  config.sigma2 = 0.05;
  config.sigma2_d = 25.0;
  config.seed = 31;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 10, 0.001);
  const FlodeFit result = fit(sim.data, basis, {});
  CHECK(result.converged);
  for (const auto& q : result.rss_checkpoints) {
    CHECK(q[1] <= q[0] * (1.0 + 1e-9) + 1e-12);
    CHECK(q[2] <= q[1] * (1.0 + 1e-9) + 1e-12);
    CHECK(q[3] <= q[2] * (1.0 + 1e-9) + 1e-12);
  }
  // Converged means the last loglik step is below tolerance.
  const auto& trace = result.loglik_trace;
  REQUIRE(trace.size() >= 2);
  CHECK(std::abs(trace.back() - trace[trace.size() - 2]) < 1e-6);
}

TEST_CASE("fit is bitwise deterministic") {
  SimConfig config;
  config.n_trials = 8;
  config.grid_size = 25;
  config.alpha = 3.0;
  config.seed = 77;
  const SimResult sim = gen_flode_dataset(config);
  const BasisSystem basis = make_basis_system(sim.data.grid, 8, 0.001);
  const FlodeFit a = fit(sim.data, basis, {});
  const FlodeFit b = fit(sim.data, basis, {});
  CHECK(a.params.alpha == b.params.alpha);
  CHECK(a.params.b == b.params.b);
  CHECK(a.params.y0 == b.params.y0);
  CHECK(a.loglik_trace == b.loglik_trace);
}
