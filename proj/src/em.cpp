#include "flode/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "flode/brent.hpp"

namespace flode {

namespace {

constexpr double kVarianceFloor = 1e-10;

Eigen::MatrixXd accumulate_xtx(const DesignBundle& bundle) {
  const Eigen::Index q = bundle.xstar.empty() ? 0 : bundle.xstar[0].cols();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(q, q);
  for (const auto& x : bundle.xstar) {
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  }
  xtx.triangularView<Eigen::Upper>() = xtx.transpose();
  return xtx;
}

Eigen::MatrixXd block_penalty(const Eigen::MatrixXd& penalty, int n_blocks) {
  const Eigen::Index k = penalty.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k * n_blocks, k * n_blocks);
  for (int p = 0; p < n_blocks; ++p) {
    out.block(p * k, p * k, k, k) = penalty;
  }
  return out;
}

Eigen::VectorXd solve_penalized(const Eigen::MatrixXd& xtx,
                                const Eigen::MatrixXd& ridge,
                                const Eigen::VectorXd& rhs, const char* who) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx + ridge);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error(std::string(who) + ": normal equations are not factorizable");
  }
  Eigen::VectorXd sol = ldlt.solve(rhs);
  if (!sol.allFinite()) {
    throw std::runtime_error(std::string(who) + ": non-finite solution (ill-conditioned system)");
  }
  return sol;
}

Eigen::VectorXd mstep_b_with_gram(const FunctionalDataset& data,
                                  const DesignBundle& bundle,
                                  const BasisSystem& basis,
                                  const PosteriorMoments& moments,
                                  const FlodeParams& params,
                                  const Eigen::MatrixXd& xtx) {
  const int N = data.n_trials();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(xtx.rows());
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd resid = data.responses.row(i).transpose() - bundle.y0star[i];
    if (moments.m.size() > 0) {
      resid.noalias() -= bundle.dstar * moments.m.row(i).transpose();
    }
    rhs.noalias() += bundle.xstar[i].transpose() * resid;
  }
  const int n_blocks = static_cast<int>(xtx.rows() / basis.K);
  const double ratio = params.sigma2 / params.sigma2_b;
  return solve_penalized(xtx, ratio * block_penalty(basis.penalty, n_blocks),
                         rhs, "mstep_b");
}

}  // namespace

PosteriorMoments PosteriorMoments::zero(int n_trials, int K) {
  PosteriorMoments moments;
  moments.m = Eigen::MatrixXd::Zero(n_trials, K);
  moments.C = Eigen::MatrixXd::Zero(K, K);
  return moments;
}

Eigen::VectorXd FlodeFit::coefficient_function(int p) const {
  return basis.basis_matrix * params.b.segment(p * basis.K, basis.K);
}

double expected_rss(const FunctionalDataset& data, const DesignBundle& bundle,
                    const Eigen::VectorXd& b, const PosteriorMoments& moments) {
  const int N = data.n_trials();
  double q = 0.0;
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd resid = data.responses.row(i).transpose() - bundle.y0star[i];
    resid.noalias() -= bundle.xstar[i] * b;
    if (moments.m.size() > 0) {
      resid.noalias() -= bundle.dstar * moments.m.row(i).transpose();
    }
    q += resid.squaredNorm();
  }
  if (moments.C.size() > 0 && (moments.C.array() != 0.0).any()) {
    const Eigen::MatrixXd dtd = bundle.dstar.transpose() * bundle.dstar;
    q += N * (dtd * moments.C).trace();
  }
  return q;
}

PosteriorMoments estep(const FunctionalDataset& data,
                       const DesignBundle& bundle, const BasisSystem& basis,
                       const FlodeParams& params) {
  if (!(params.sigma2 > 0.0) || !(params.sigma2_d > 0.0)) {
    throw std::invalid_argument("estep: variances must be positive");
  }
  const int N = data.n_trials();
  const int K = basis.K;
  const Eigen::MatrixXd dtd = bundle.dstar.transpose() * bundle.dstar;
  Eigen::MatrixXd precision =
      basis.penalty / params.sigma2_d + dtd / params.sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(
        "estep: posterior precision is not positive definite "
        "(degenerate penalty/variance combination)");
  }
  PosteriorMoments moments;
  moments.C = llt.solve(Eigen::MatrixXd::Identity(K, K));
  moments.m.resize(N, K);
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd resid = data.responses.row(i).transpose() -
                            bundle.y0star[i] - bundle.xstar[i] * params.b;
    moments.m.row(i) =
        (moments.C * (bundle.dstar.transpose() * resid) / params.sigma2)
            .transpose();
  }
  return moments;
}

Eigen::VectorXd mstep_b(const FunctionalDataset& data,
                        const DesignBundle& bundle, const BasisSystem& basis,
                        const PosteriorMoments& moments,
                        const FlodeParams& params) {
  return mstep_b_with_gram(data, bundle, basis, moments, params,
                           accumulate_xtx(bundle));
}

double mstep_alpha(const FunctionalDataset& data, const BasisSystem& basis,
                   const DesignBundle& re_bundle,
                   const PosteriorMoments& moments, const FlodeParams& params,
                   double alpha_lo, double alpha_hi, bool full_scan) {
  const int N = data.n_trials();
  // Fitted random-intercept curves, frozen during the line search. Freezing
  // the curves rather than the coefficients keeps the search from trading
  // alpha against a rescaled random-effect representation.
  Eigen::MatrixXd re_curves;
  const bool has_re = moments.m.size() > 0 && (moments.m.array() != 0.0).any();
  if (has_re) {
    re_curves.resize(N, data.n_times());
    for (int i = 0; i < N; ++i) {
      re_curves.row(i) =
          (re_bundle.dstar * moments.m.row(i).transpose()).transpose();
    }
  }
  auto loss = [&](double a) {
    const DesignBundle cand = assemble_bundle(data, a, basis, params.y0);
    double q = 0.0;
    for (int i = 0; i < N; ++i) {
      Eigen::VectorXd resid = data.responses.row(i).transpose() -
                              cand.y0star[i] - cand.xstar[i] * params.b;
      if (has_re) resid -= re_curves.row(i).transpose();
      q += resid.squaredNorm();
    }
    return q;
  };

  // Candidate scan: a coarse global grid on the first pass, a window around
  // the incumbent afterwards. Brent then refines inside the best bracket.
  std::vector<double> grid;
  if (full_scan) {
    const int n = 17;
    for (int i = 0; i < n; ++i) {
      grid.push_back(alpha_lo + (alpha_hi - alpha_lo) * i / (n - 1));
    }
  } else {
    const double w = std::max(0.25, 0.1 * params.alpha);
    for (int i = -2; i <= 2; ++i) {
      grid.push_back(std::clamp(params.alpha + w * i, alpha_lo, alpha_hi));
    }
  }
  grid.push_back(std::clamp(params.alpha, alpha_lo, alpha_hi));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double best_x = grid.front();
  double best_f = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f = loss(grid[i]);
    if (f < best_f) {
      best_f = f;
      best_x = grid[i];
      best_idx = i;
    }
  }
  if (!std::isfinite(best_f)) return params.alpha;  // flat/degenerate loss

  const double lo = (best_idx == 0) ? alpha_lo : grid[best_idx - 1];
  const double hi =
      (best_idx + 1 == grid.size()) ? alpha_hi : grid[best_idx + 1];
  if (hi > lo) {
    const BrentResult brent = brent_minimize(loss, lo, hi, 1e-7);
    if (std::isfinite(brent.fx) && brent.fx < best_f) {
      best_f = brent.fx;
      best_x = brent.x;
    }
  }

  // Guard with the full expected RSS at rebuilt designs: accept the proposal
  // only if it does not increase the spec objective over the incumbent.
  if (best_x != params.alpha) {
    const DesignBundle cand = assemble_bundle(data, best_x, basis, params.y0);
    const DesignBundle inc =
        assemble_bundle(data, params.alpha, basis, params.y0);
    if (expected_rss(data, cand, params.b, moments) >
        expected_rss(data, inc, params.b, moments)) {
      return params.alpha;
    }
  }
  return best_x;
}

void gls_mean_update(const FunctionalDataset& data, const DesignBundle& bundle,
                     const BasisSystem& basis, FlodeParams& params,
                     Eigen::MatrixXd* b_posterior_cov) {
  const int N = data.n_trials();
  const Eigen::Index q = bundle.xstar.empty() ? 0 : bundle.xstar[0].cols();
  const int n_blocks = static_cast<int>(q / basis.K);

  // Marginal covariance Sigma = sigma2_d dstar P^-1 dstar' + sigma2 I.
  Eigen::LLT<Eigen::MatrixXd> pen_llt(basis.penalty);
  if (pen_llt.info() != Eigen::Success) {
    throw std::runtime_error("gls_mean_update: penalty is not positive definite");
  }
  Eigen::MatrixXd a_t = pen_llt.matrixL().solve(bundle.dstar.transpose());
  Eigen::MatrixXd sigma = params.sigma2_d * (a_t.transpose() * a_t);
  sigma.diagonal().array() += params.sigma2;
  Eigen::LLT<Eigen::MatrixXd> sig_llt(sigma);
  if (sig_llt.info() != Eigen::Success) {
    throw std::runtime_error("gls_mean_update: covariance factorization failed");
  }

  // Normal equations for (b, y0_1..y0_N); the per-trial y0 block is diagonal
  // (decay' Sigma^-1 decay, shared across trials) and is eliminated by a
  // Schur complement.
  const Eigen::VectorXd w_decay = sig_llt.solve(bundle.decay);
  const double a_yy = bundle.decay.dot(w_decay);
  Eigen::MatrixXd s = block_penalty(basis.penalty, n_blocks) / params.sigma2_b;
  Eigen::VectorXd rs = Eigen::VectorXd::Zero(q);
  std::vector<Eigen::VectorXd> a_by(N);
  Eigen::VectorXd r_y(N);
  for (int i = 0; i < N; ++i) {
    const Eigen::MatrixXd wx = sig_llt.solve(bundle.xstar[i]);
    s.noalias() += bundle.xstar[i].transpose() * wx;
    rs.noalias() += wx.transpose() * data.responses.row(i).transpose();
    a_by[i] = bundle.xstar[i].transpose() * w_decay;
    r_y[i] = w_decay.dot(data.responses.row(i).transpose());
  }
  for (int i = 0; i < N; ++i) {
    s.noalias() -= a_by[i] * a_by[i].transpose() / a_yy;
    rs.noalias() -= a_by[i] * (r_y[i] / a_yy);
  }
  Eigen::LDLT<Eigen::MatrixXd> s_ldlt(s);
  if (s_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("gls_mean_update: singular mean-structure system");
  }
  params.b = s_ldlt.solve(rs);
  if (!params.b.allFinite()) {
    throw std::runtime_error("gls_mean_update: non-finite solution");
  }
  if (params.y0.size() != N) params.y0.resize(N);
  for (int i = 0; i < N; ++i) {
    params.y0[i] = (r_y[i] - a_by[i].dot(params.b)) / a_yy;
  }
  if (b_posterior_cov) {
    *b_posterior_cov = s_ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  }
}

Eigen::VectorXd mstep_y0(const FunctionalDataset& data,
                         const DesignBundle& bundle,
                         const PosteriorMoments& moments,
                         const FlodeParams& params) {
  const int N = data.n_trials();
  const double denom = bundle.decay.squaredNorm();
  Eigen::VectorXd y0(N);
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd resid =
        data.responses.row(i).transpose() - bundle.xstar[i] * params.b;
    if (moments.m.size() > 0) {
      resid.noalias() -= bundle.dstar * moments.m.row(i).transpose();
    }
    y0[i] = bundle.decay.dot(resid) / denom;
  }
  return y0;
}

VarianceUpdate mstep_variances(const FunctionalDataset& data,
                               const DesignBundle& bundle,
                               const BasisSystem& basis,
                               const PosteriorMoments& moments,
                               const FlodeParams& params,
                               const Eigen::MatrixXd* b_posterior_cov) {
  const int N = data.n_trials();
  const int J = data.n_times();
  const int K = basis.K;
  VarianceUpdate update{};
  update.sigma2 = std::max(
      expected_rss(data, bundle, params.b, moments) / (N * J), kVarianceFloor);

  double sum_d = 0.0;
  if (moments.m.size() > 0) {
    sum_d += N * (basis.penalty * moments.C).trace();
    for (int i = 0; i < N; ++i) {
      const Eigen::VectorXd mi = moments.m.row(i).transpose();
      sum_d += mi.dot(basis.penalty * mi);
    }
  }
  update.sigma2_d = std::max(sum_d / (N * K), kVarianceFloor);

  const int n_blocks = static_cast<int>(params.b.size() / K);
  double sum_b = 0.0;
  for (int p = 0; p < n_blocks; ++p) {
    const Eigen::VectorXd bp = params.b.segment(p * K, K);
    sum_b += bp.dot(basis.penalty * bp);
    if (b_posterior_cov) {
      sum_b +=
          (basis.penalty * b_posterior_cov->block(p * K, p * K, K, K)).trace();
    }
  }
  update.sigma2_b = std::max(sum_b / (n_blocks * K), kVarianceFloor);
  return update;
}

double marginal_loglik(const FunctionalDataset& data,
                       const DesignBundle& bundle, const BasisSystem& basis,
                       const FlodeParams& params) {
  const int N = data.n_trials();
  const int J = data.n_times();
  // Sigma = sigma2_d * dstar P^-1 dstar' + sigma2 I, via P = L L'.
  Eigen::LLT<Eigen::MatrixXd> pen_llt(basis.penalty);
  if (pen_llt.info() != Eigen::Success) {
    throw std::runtime_error("marginal_loglik: penalty is not positive definite");
  }
  Eigen::MatrixXd a_t = pen_llt.matrixL().solve(bundle.dstar.transpose());
  Eigen::MatrixXd sigma = params.sigma2_d * (a_t.transpose() * a_t);
  sigma.diagonal().array() += params.sigma2;
  Eigen::LLT<Eigen::MatrixXd> sig_llt(sigma);
  if (sig_llt.info() != Eigen::Success) {
    throw std::runtime_error("marginal_loglik: covariance factorization failed");
  }
  double logdet = 0.0;
  for (int j = 0; j < J; ++j) {
    logdet += 2.0 * std::log(sig_llt.matrixLLT()(j, j));
  }
  constexpr double log2pi = 1.8378770664093453;
  double ll = 0.0;
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd resid = data.responses.row(i).transpose() -
                            bundle.y0star[i] - bundle.xstar[i] * params.b;
    ll += -0.5 * (J * log2pi + logdet + resid.dot(sig_llt.solve(resid)));
  }
  return ll;
}

FlodeParams init_params(const FunctionalDataset& data,
                        const BasisSystem& basis, int grid_points,
                        const FitOptions& options) {
  if (grid_points < 1) {
    throw std::invalid_argument("init_params: grid_points must be >= 1");
  }
  const int N = data.n_trials();
  const int J = data.n_times();
  const Eigen::VectorXd y0_obs = data.responses.col(0);

  double best_loss = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0;
  Eigen::VectorXd best_b;
  for (int g = 0; g < grid_points; ++g) {
    const double alpha0 =
        grid_points == 1 ? 0.0 : 20.0 * g / (grid_points - 1);
    DesignBundle bundle = assemble_bundle(data, alpha0, basis, y0_obs);
    const Eigen::MatrixXd xtx = accumulate_xtx(bundle);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(xtx.rows());
    for (int i = 0; i < N; ++i) {
      rhs.noalias() += bundle.xstar[i].transpose() *
                       (data.responses.row(i).transpose() - bundle.y0star[i]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd b_ols = ldlt.solve(rhs);
    if (!b_ols.allFinite()) continue;
    double loss = 0.0;
    for (int i = 0; i < N; ++i) {
      loss += (data.responses.row(i).transpose() - bundle.y0star[i] -
               bundle.xstar[i] * b_ols)
                  .squaredNorm();
    }
    if (std::isfinite(loss) && loss < best_loss) {
      best_loss = loss;
      best_alpha = alpha0;
      best_b = b_ols;
    }
  }
  if (!std::isfinite(best_loss)) {
    throw std::runtime_error("init_params: OLS loss non-finite at every grid point");
  }

  FlodeParams params;
  params.alpha = std::clamp(best_alpha, options.alpha_lo, options.alpha_hi);
  params.b = best_b;
  params.y0 = y0_obs;
  params.sigma2 = std::max(best_loss / (N * J), kVarianceFloor);
  params.sigma2_d = 100.0;
  params.sigma2_b = 100.0;
  return params;
}

FlodeFit fit(const FunctionalDataset& data, const BasisSystem& basis,
             const FitOptions& options) {
  data.validate();
  if (basis.penalty.size() == 0) {
    throw std::invalid_argument("fit: basis has no penalty attached");
  }
  const int N = data.n_trials();
  const int K = basis.K;

  FlodeParams params = options.initial
                           ? *options.initial
                           : init_params(data, basis,
                                         options.init_grid_points, options);
  params.alpha = std::clamp(params.alpha, options.alpha_lo, options.alpha_hi);
  if (params.y0.size() != N || params.b.size() % K != 0) {
    throw std::invalid_argument("fit: initial parameter shapes do not match data");
  }

  DesignBundle bundle = assemble_bundle(data, params.alpha, basis, params.y0);
  PosteriorMoments moments = PosteriorMoments::zero(N, K);

  FlodeFit out;
  out.basis = basis;
  double ll_prev = marginal_loglik(data, bundle, basis, params);

  for (int it = 1; it <= options.max_iter; ++it) {
    if (options.random_effects) {
      moments = estep(data, bundle, basis, params);
    }
    std::array<double, 4> q{};
    q[0] = expected_rss(data, bundle, params.b, moments);

    if (options.estimate_alpha) {
      const double alpha_new =
          mstep_alpha(data, basis, bundle, moments, params, options.alpha_lo,
                      options.alpha_hi, /*full_scan=*/it == 1);
      if (alpha_new != params.alpha) {
        params.alpha = alpha_new;
        bundle = assemble_bundle(data, params.alpha, basis, params.y0);
      }
    }
    q[1] = expected_rss(data, bundle, params.b, moments);

    // Joint (b, y0) update under the marginal covariance; this solves the
    // fixed-point equations of the conditional b and y0 updates combined
    // with the E-step in one pass, which removes the slow exchange between
    // the collinear intercept block and the random-intercept means.
    Eigen::MatrixXd b_cov;
    if (options.random_effects) {
      gls_mean_update(data, bundle, basis, params, &b_cov);
    } else {
      const Eigen::MatrixXd xtx = accumulate_xtx(bundle);
      params.b = mstep_b_with_gram(data, bundle, basis, moments, params, xtx);
      const Eigen::MatrixXd ridge =
          (params.sigma2 / params.sigma2_b) *
          block_penalty(basis.penalty, static_cast<int>(xtx.rows()) / K);
      b_cov = (xtx / params.sigma2 + ridge / params.sigma2)
                  .ldlt()
                  .solve(Eigen::MatrixXd::Identity(xtx.rows(), xtx.rows()));
      params.y0 = mstep_y0(data, bundle, moments, params);
    }
    refresh_y0star(bundle, params.y0, data.grid);
    q[2] = expected_rss(data, bundle, params.b, moments);
    q[3] = q[2];

    const VarianceUpdate v =
        mstep_variances(data, bundle, basis, moments, params, &b_cov);
    params.sigma2 = v.sigma2;
    params.sigma2_d = v.sigma2_d;
    params.sigma2_b = v.sigma2_b;

    const double ll = marginal_loglik(data, bundle, basis, params);
    out.loglik_trace.push_back(ll);
    out.rss_checkpoints.push_back(q);
    out.n_iter = it;
    if (std::abs(ll - ll_prev) < options.tol) {
      out.converged = true;
      break;
    }
    ll_prev = ll;
  }

  out.moments = options.random_effects ? estep(data, bundle, basis, params)
                                       : PosteriorMoments::zero(N, K);
  out.params = std::move(params);
  return out;
}

}  // namespace flode
