#include "flode/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "flode/quadrature.hpp"
#include "flode/splines.hpp"

namespace flode {

namespace {

constexpr double kBlend = 0.001;  // identity share of the margin penalties

// Second-order difference penalty blended with a small identity, as in the
// basis-system penalty.
Eigen::MatrixXd margin_penalty(int m) { return build_penalty(m, kBlend); }

Eigen::MatrixXd surface_block_penalty(int m) {
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(m - 2, m);
  for (int r = 0; r < m - 2; ++r) {
    d2(r, r) = 1.0;
    d2(r, r + 1) = -2.0;
    d2(r, r + 2) = 1.0;
  }
  const Eigen::MatrixXd pen2 = d2.transpose() * d2;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m * m, m * m);
  // vec index k*m + l: k indexes the t margin, l the s margin.
  for (int k = 0; k < m; ++k) {
    for (int k2 = 0; k2 < m; ++k2) {
      for (int l = 0; l < m; ++l) {
        for (int l2 = 0; l2 < m; ++l2) {
          out(k * m + l, k2 * m + l2) =
              pen2(k, k2) * eye(l, l2) + eye(k, k2) * pen2(l, l2);
        }
      }
    }
  }
  out *= (1.0 - kBlend);
  out.diagonal().array() += kBlend;
  return out;
}

// Per-trial historical design: [intercept | per forcing: theta_k(t_j) *
// int_0^{t_j} theta_l(s) x_ip(s) ds].
Eigen::MatrixXd historical_design_row_block(const FunctionalDataset& data,
                                            int trial,
                                            const BasisSystem& basis) {
  const int J = data.n_times();
  const int M = basis.K;
  const int P = data.n_forcings();
  Eigen::MatrixXd design(J, M + P * M * M);
  design.leftCols(M) = basis.basis_matrix;
  for (int p = 0; p < P; ++p) {
    Eigen::MatrixXd hist(J, M);  // hist(j, l) = cumtrapz of theta_l * x at t_j
    for (int l = 0; l < M; ++l) {
      hist.col(l) = cumulative_trapezoid(
          data.grid, (basis.basis_matrix.col(l).array() *
                      data.forcings[p].row(trial).transpose().array())
                         .matrix());
    }
    for (int j = 0; j < J; ++j) {
      for (int k = 0; k < M; ++k) {
        design.block(j, M + p * M * M + k * M, 1, M) =
            basis.basis_matrix(j, k) * hist.row(j);
      }
    }
  }
  return design;
}

struct NormalEquations {
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
};

NormalEquations accumulate_historical(const FunctionalDataset& data,
                                      const BasisSystem& basis) {
  const int M = basis.K;
  const int P = data.n_forcings();
  const int q = M + P * M * M;
  NormalEquations ne{Eigen::MatrixXd::Zero(q, q), Eigen::VectorXd::Zero(q)};
  for (int i = 0; i < data.n_trials(); ++i) {
    const Eigen::MatrixXd design = historical_design_row_block(data, i, basis);
    ne.xtx.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
    ne.xty.noalias() += design.transpose() * data.responses.row(i).transpose();
  }
  ne.xtx.triangularView<Eigen::Upper>() = ne.xtx.transpose();
  return ne;
}

HistFit historical_from_coefficients(const FunctionalDataset& data,
                                     const BasisSystem& basis,
                                     const Eigen::VectorXd& coef,
                                     double ridge_weight) {
  const int J = data.n_times();
  const int M = basis.K;
  const int P = data.n_forcings();
  HistFit fit;
  fit.grid = data.grid;
  fit.ridge_weight = ridge_weight;
  fit.intercept_fn = basis.basis_matrix * coef.head(M);
  fit.surfaces.resize(P);
  for (int p = 0; p < P; ++p) {
    Eigen::MatrixXd cmat(M, M);  // (l, k): theta_l(s) theta_k(t) weight
    for (int k = 0; k < M; ++k) {
      cmat.col(k) = coef.segment(M + p * M * M + k * M, M);
    }
    Surface surf;
    surf.grid = data.grid;
    surf.values = basis.basis_matrix * cmat * basis.basis_matrix.transpose();
    for (int s = 0; s < J; ++s) {
      for (int t = 0; t < s; ++t) surf.values(s, t) = 0.0;
    }
    fit.surfaces[p] = std::move(surf);
  }
  return fit;
}

Eigen::MatrixXd concurrent_design_row_block(const FunctionalDataset& data,
                                            int trial,
                                            const BasisSystem& basis) {
  const int J = data.n_times();
  const int K = basis.K;
  const int P = data.n_forcings();
  Eigen::MatrixXd design(J, K * (P + 1));
  design.leftCols(K) = basis.basis_matrix;
  for (int p = 0; p < P; ++p) {
    design.middleCols(K * (p + 1), K) =
        basis.basis_matrix.array().colwise() *
        data.forcings[p].row(trial).transpose().array();
  }
  return design;
}

Eigen::VectorXd ridge_solve(const NormalEquations& ne,
                            const Eigen::MatrixXd& penalty, double weight,
                            const char* who) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ne.xtx + weight * penalty);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error(std::string(who) + ": singular normal equations");
  }
  Eigen::VectorXd coef = ldlt.solve(ne.xty);
  if (!coef.allFinite()) {
    throw std::runtime_error(std::string(who) + ": non-finite solution");
  }
  return coef;
}

Eigen::MatrixXd full_penalty_historical(int M, int P) {
  const int q = M + P * M * M;
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(q, q);
  pen.topLeftCorner(M, M) = margin_penalty(M);
  const Eigen::MatrixXd block = surface_block_penalty(M);
  for (int p = 0; p < P; ++p) {
    pen.block(M + p * M * M, M + p * M * M, M * M, M * M) = block;
  }
  return pen;
}

Eigen::MatrixXd full_penalty_concurrent(int K, int P) {
  const int q = K * (P + 1);
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(q, q);
  const Eigen::MatrixXd block = margin_penalty(K);
  for (int p = 0; p <= P; ++p) {
    pen.block(p * K, p * K, K, K) = block;
  }
  return pen;
}

std::vector<int> fold_complement(int n_trials, const std::vector<int>& test) {
  std::vector<char> in_test(n_trials, 0);
  for (int i : test) in_test[i] = 1;
  std::vector<int> train;
  for (int i = 0; i < n_trials; ++i) {
    if (!in_test[i]) train.push_back(i);
  }
  return train;
}

}  // namespace

namespace detail {

Eigen::MatrixXd historical_design(const FunctionalDataset& data, int trial,
                                  int basis_marginal_size) {
  const BasisSystem basis = build_basis(data.grid, basis_marginal_size, 3);
  return historical_design_row_block(data, trial, basis);
}

}  // namespace detail

std::vector<std::vector<int>> cv_folds(int n_trials, int folds,
                                       std::uint64_t seed) {
  if (folds < 2 || folds > n_trials) {
    throw std::invalid_argument("cv_folds: need 2 <= folds <= n_trials");
  }
  std::vector<int> order(n_trials);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> sets(folds);
  for (int i = 0; i < n_trials; ++i) sets[i % folds].push_back(order[i]);
  return sets;
}

HistFit fit_historical(const FunctionalDataset& data, int basis_marginal_size,
                       double ridge_weight) {
  data.validate();
  if (basis_marginal_size < 5) {
    throw std::invalid_argument("fit_historical: marginal basis must have >= 5 functions");
  }
  const BasisSystem basis = build_basis(data.grid, basis_marginal_size, 3);
  const NormalEquations ne = accumulate_historical(data, basis);
  const Eigen::MatrixXd penalty =
      full_penalty_historical(basis_marginal_size, data.n_forcings());
  const Eigen::VectorXd coef =
      ridge_solve(ne, penalty, ridge_weight, "fit_historical");
  return historical_from_coefficients(data, basis, coef, ridge_weight);
}

ConcFit fit_concurrent(const FunctionalDataset& data, int K,
                       double ridge_weight) {
  data.validate();
  const BasisSystem basis = build_basis(data.grid, K, 3);
  const int P = data.n_forcings();
  const int q = K * (P + 1);
  NormalEquations ne{Eigen::MatrixXd::Zero(q, q), Eigen::VectorXd::Zero(q)};
  for (int i = 0; i < data.n_trials(); ++i) {
    const Eigen::MatrixXd design = concurrent_design_row_block(data, i, basis);
    ne.xtx.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
    ne.xty.noalias() += design.transpose() * data.responses.row(i).transpose();
  }
  ne.xtx.triangularView<Eigen::Upper>() = ne.xtx.transpose();
  const Eigen::VectorXd coef = ridge_solve(
      ne, full_penalty_concurrent(K, P), ridge_weight, "fit_concurrent");

  ConcFit fit;
  fit.grid = data.grid;
  fit.ridge_weight = ridge_weight;
  fit.intercept_fn = basis.basis_matrix * coef.head(K);
  fit.coef_fns.resize(P);
  for (int p = 0; p < P; ++p) {
    fit.coef_fns[p] = basis.basis_matrix * coef.segment(K * (p + 1), K);
  }
  return fit;
}

Eigen::MatrixXd predict_historical(
    const HistFit& fit, const std::vector<Eigen::MatrixXd>& forcings) {
  if (forcings.size() != fit.surfaces.size()) {
    throw std::invalid_argument("predict_historical: forcing count mismatch");
  }
  const int J = static_cast<int>(fit.grid.size());
  const int n = forcings.empty() ? 0 : static_cast<int>(forcings[0].rows());
  Eigen::MatrixXd out(n, J);
  for (int i = 0; i < n; ++i) {
    out.row(i) = fit.intercept_fn.transpose();
    for (std::size_t p = 0; p < forcings.size(); ++p) {
      if (forcings[p].cols() != J) {
        throw std::invalid_argument("predict_historical: grid mismatch");
      }
      for (int t = 0; t < J; ++t) {
        const Eigen::VectorXd integrand =
            fit.surfaces[p].values.col(t).head(t + 1).array() *
            forcings[p].row(i).head(t + 1).transpose().array();
        out(i, t) += trapezoid(fit.grid.head(t + 1), integrand);
      }
    }
  }
  return out;
}

Eigen::MatrixXd predict_concurrent(
    const ConcFit& fit, const std::vector<Eigen::MatrixXd>& forcings) {
  if (forcings.size() != fit.coef_fns.size()) {
    throw std::invalid_argument("predict_concurrent: forcing count mismatch");
  }
  const int J = static_cast<int>(fit.grid.size());
  const int n = forcings.empty() ? 0 : static_cast<int>(forcings[0].rows());
  Eigen::MatrixXd out(n, J);
  for (int i = 0; i < n; ++i) {
    out.row(i) = fit.intercept_fn.transpose();
    for (std::size_t p = 0; p < forcings.size(); ++p) {
      if (forcings[p].cols() != J) {
        throw std::invalid_argument("predict_concurrent: grid mismatch");
      }
      out.row(i).array() +=
          fit.coef_fns[p].transpose().array() * forcings[p].row(i).array();
    }
  }
  return out;
}

std::vector<double> default_ridge_grid() {
  return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
}

double select_ridge_historical(const FunctionalDataset& data,
                               int basis_marginal_size, int folds,
                               std::uint64_t seed) {
  const auto grid_w = default_ridge_grid();
  const auto fold_sets = cv_folds(data.n_trials(), folds, seed);
  const BasisSystem basis = build_basis(data.grid, basis_marginal_size, 3);
  const Eigen::MatrixXd penalty =
      full_penalty_historical(basis_marginal_size, data.n_forcings());
  std::vector<double> score(grid_w.size(), 0.0);
  for (const auto& test : fold_sets) {
    const auto train = fold_complement(data.n_trials(), test);
    const FunctionalDataset train_data = data.select_trials(train);
    const FunctionalDataset test_data = data.select_trials(test);
    // The normal equations are shared across penalty weights.
    const NormalEquations ne = accumulate_historical(train_data, basis);
    for (std::size_t w = 0; w < grid_w.size(); ++w) {
      const Eigen::VectorXd coef =
          ridge_solve(ne, penalty, grid_w[w], "select_ridge_historical");
      const HistFit fit =
          historical_from_coefficients(train_data, basis, coef, grid_w[w]);
      score[w] += mape(predict_historical(fit, test_data.forcings),
                       test_data.responses, data.grid);
    }
  }
  return grid_w[std::min_element(score.begin(), score.end()) - score.begin()];
}

double select_ridge_concurrent(const FunctionalDataset& data, int K, int folds,
                               std::uint64_t seed) {
  const auto grid_w = default_ridge_grid();
  const auto fold_sets = cv_folds(data.n_trials(), folds, seed);
  std::vector<double> score(grid_w.size(), 0.0);
  for (const auto& test : fold_sets) {
    const auto train = fold_complement(data.n_trials(), test);
    const FunctionalDataset train_data = data.select_trials(train);
    const FunctionalDataset test_data = data.select_trials(test);
    for (std::size_t w = 0; w < grid_w.size(); ++w) {
      const ConcFit fit = fit_concurrent(train_data, K, grid_w[w]);
      score[w] += mape(predict_concurrent(fit, test_data.forcings),
                       test_data.responses, data.grid);
    }
  }
  return grid_w[std::min_element(score.begin(), score.end()) - score.begin()];
}

}  // namespace flode
