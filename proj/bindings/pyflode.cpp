#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flode/baselines.hpp"
#include "flode/em.hpp"
#include "flode/inference.hpp"
#include "flode/io.hpp"
#include "flode/metrics.hpp"
#include "flode/simulate.hpp"
#include "flode/splines.hpp"

namespace py = pybind11;
using namespace flode;

namespace {

SimConfig config_from_kwargs(int n_trials, int grid_size, double alpha,
                             double sigma2, double sigma2_d, double y0_variance,
                             std::uint64_t seed, const std::string& truth_kind,
                             int delta_df) {
  SimConfig config;
  config.n_trials = n_trials;
  config.grid_size = grid_size;
  config.alpha = alpha;
  config.sigma2 = sigma2;
  config.sigma2_d = sigma2_d;
  config.y0_variance = y0_variance;
  config.seed = seed;
  config.delta_df = delta_df;
  if (truth_kind == "fhist") {
    config.truth_kind = TruthKind::kFhist;
  } else if (truth_kind == "flode") {
    config.truth_kind = TruthKind::kFlode;
  } else {
    throw std::invalid_argument("truth_kind must be 'flode' or 'fhist'");
  }
  return config;
}

FunctionalDataset dataset_from_py(const Eigen::VectorXd& grid,
                                  const Eigen::MatrixXd& responses,
                                  const std::vector<Eigen::MatrixXd>& forcings) {
  FunctionalDataset data;
  data.grid = grid;
  data.responses = responses;
  data.forcings = forcings;
  data.validate();
  return data;
}

py::dict dataset_to_py(const FunctionalDataset& data) {
  py::dict out;
  out["grid"] = data.grid;
  out["responses"] = data.responses;
  py::list forcings;
  for (const auto& f : data.forcings) forcings.append(f);
  out["forcings"] = forcings;
  py::list ids;
  for (const auto& id : data.trial_ids) ids.append(id);
  out["trial_ids"] = ids;
  return out;
}

py::dict fit_to_py(const FlodeFit& fit) {
  py::dict out;
  out["alpha"] = fit.params.alpha;
  out["b"] = fit.params.b;
  out["y0"] = fit.params.y0;
  out["sigma2"] = fit.params.sigma2;
  out["sigma2_d"] = fit.params.sigma2_d;
  out["sigma2_b"] = fit.params.sigma2_b;
  out["loglik_trace"] = fit.loglik_trace;
  out["n_iter"] = fit.n_iter;
  out["converged"] = fit.converged;
  out["grid"] = fit.basis.grid;
  out["K"] = fit.basis.K;
  out["degree"] = fit.basis.degree;
  out["lam"] = fit.basis.lambda;
  const int n_fns = static_cast<int>(fit.params.b.size()) / fit.basis.K;
  py::list coef;
  for (int p = 0; p < n_fns; ++p) coef.append(fit.coefficient_function(p));
  out["coefficient_functions"] = coef;
  return out;
}

FlodeParams params_from_py(const py::dict& fit) {
  FlodeParams params;
  params.alpha = fit["alpha"].cast<double>();
  params.b = fit["b"].cast<Eigen::VectorXd>();
  params.y0 = fit["y0"].cast<Eigen::VectorXd>();
  params.sigma2 = fit["sigma2"].cast<double>();
  params.sigma2_d = fit["sigma2_d"].cast<double>();
  params.sigma2_b = fit["sigma2_b"].cast<double>();
  return params;
}

BasisSystem basis_from_py(const py::dict& fit) {
  return make_basis_system(fit["grid"].cast<Eigen::VectorXd>(),
                           fit["K"].cast<int>(), fit["lam"].cast<double>(),
                           fit["degree"].cast<int>());
}

}  // namespace

PYBIND11_MODULE(pyflode, m) {
  m.doc() = "ODE-driven functional regression for repeated trajectories";

  m.def(
      "basis_matrix",
      [](const Eigen::VectorXd& grid, int K, int degree) {
        return build_basis(grid, K, degree).basis_matrix;
      },
      py::arg("grid"), py::arg("K"), py::arg("degree") = 3,
      "Clamped B-spline basis evaluated on the grid (J x K).");

  m.def("penalty_matrix", &build_penalty, py::arg("K"), py::arg("lam"),
        "Blended second-difference penalty lam*I + (1-lam)*D2'D2.");

  m.def(
      "simulate",
      [](int n_trials, int grid_size, double alpha, double sigma2,
         double sigma2_d, double y0_variance, std::uint64_t seed,
         const std::string& truth_kind, int delta_df) {
        const SimResult sim = gen_dataset(
            config_from_kwargs(n_trials, grid_size, alpha, sigma2, sigma2_d,
                               y0_variance, seed, truth_kind, delta_df));
        py::dict out = dataset_to_py(sim.data);
        out["alpha"] = sim.truth.alpha;
        out["b0_fn"] = sim.truth.b0_fn;
        out["b1_fn"] = sim.truth.b1_fn;
        out["y0"] = sim.truth.y0;
        out["truth_surface"] = sim.truth.surface.values;
        return out;
      },
      py::arg("n_trials") = 100, py::arg("grid_size") = 50,
      py::arg("alpha") = 4.0, py::arg("sigma2") = 0.1,
      py::arg("sigma2_d") = 50.0, py::arg("y0_variance") = 5.0,
      py::arg("seed") = 1, py::arg("truth_kind") = "flode",
      py::arg("delta_df") = 10,
      "Generate a synthetic dataset plus its ground truth.");

  m.def(
      "fit",
      [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& responses,
         const std::vector<Eigen::MatrixXd>& forcings, int K, double lam,
         double tol, int max_iter, std::pair<double, double> alpha_bounds,
         bool random_effects) {
        const FunctionalDataset data =
            dataset_from_py(grid, responses, forcings);
        const BasisSystem basis = make_basis_system(grid, K, lam);
        FitOptions opts;
        opts.tol = tol;
        opts.max_iter = max_iter;
        opts.alpha_lo = alpha_bounds.first;
        opts.alpha_hi = alpha_bounds.second;
        opts.random_effects = random_effects;
        return fit_to_py(fit(data, basis, opts));
      },
      py::arg("grid"), py::arg("responses"), py::arg("forcings"),
      py::arg("K") = 20, py::arg("lam") = 0.001, py::arg("tol") = 1e-6,
      py::arg("max_iter") = 200,
      py::arg("alpha_bounds") = std::pair<double, double>(1e-6, 40.0),
      py::arg("random_effects") = true,
      "EM fit; returns a dict with parameters, trace and coefficient curves.");

  m.def(
      "predict",
      [](const py::dict& fit, const std::vector<Eigen::MatrixXd>& forcings,
         const Eigen::VectorXd& initial_positions) {
        return predict(params_from_py(fit), basis_from_py(fit), forcings,
                       initial_positions);
      },
      py::arg("fit"), py::arg("forcings"), py::arg("initial_positions"),
      "Fixed-effect predictions for new trials.");

  m.def(
      "bootstrap",
      [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& responses,
         const std::vector<Eigen::MatrixXd>& forcings, int K, double lam,
         int n_boot, std::uint64_t seed) {
        const FunctionalDataset data =
            dataset_from_py(grid, responses, forcings);
        const BasisSystem basis = make_basis_system(grid, K, lam);
        const FlodeFit full = fit(data, basis, {});
        const auto bands = bootstrap_bands(data, basis, full, n_boot, seed);
        py::list out;
        for (const auto& band : bands) {
          py::dict d;
          d["grid"] = band.grid;
          d["estimate"] = band.estimate;
          d["se"] = band.se;
          d["lower"] = band.lower;
          d["upper"] = band.upper;
          d["n_boot"] = band.n_boot;
          out.append(d);
        }
        return out;
      },
      py::arg("grid"), py::arg("responses"), py::arg("forcings"),
      py::arg("K") = 20, py::arg("lam") = 0.001, py::arg("n_boot") = 200,
      py::arg("seed") = 1,
      "Full fit plus trial-resampling bootstrap bands (one dict per "
      "coefficient function).");

  m.def(
      "surface",
      [](const py::dict& fit, int coefficient) {
        const BasisSystem basis = basis_from_py(fit);
        const FlodeParams params = params_from_py(fit);
        const Eigen::VectorXd fn =
            basis.basis_matrix *
            params.b.segment(coefficient * basis.K, basis.K);
        return flode_surface(params.alpha, basis.grid, fn).values;
      },
      py::arg("fit"), py::arg("coefficient") = 1,
      "Induced coefficient surface e^{-alpha (t-s)} B(s) I(s < t).");

  m.def(
      "surface_ise",
      [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& estimate,
         const Eigen::MatrixXd& truth) {
        Surface a{grid, estimate}, b{grid, truth};
        return surface_ise(a, b);
      },
      py::arg("grid"), py::arg("estimate"), py::arg("truth"));

  m.def("integrated_error", &integrated_error, py::arg("truth"),
        py::arg("estimate"), py::arg("grid"));
  m.def("alpha_error", &alpha_error, py::arg("truth"), py::arg("estimate"));
  m.def("mape", &mape, py::arg("predictions"), py::arg("truths"),
        py::arg("grid"));

  m.def(
      "ingest_csv",
      [](const std::string& path, int target_j) {
        return dataset_to_py(ingest(path, target_j));
      },
      py::arg("path"), py::arg("target_j") = 0,
      "Read long-format CSV (trial_id,time,y,x1[,...]) onto a shared grid.");

  m.def(
      "fit_historical",
      [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& responses,
         const std::vector<Eigen::MatrixXd>& forcings, int basis_size,
         double ridge_weight) {
        const HistFit fit = fit_historical(
            dataset_from_py(grid, responses, forcings), basis_size,
            ridge_weight);
        py::dict out;
        out["intercept_fn"] = fit.intercept_fn;
        py::list surfaces;
        for (const auto& s : fit.surfaces) surfaces.append(s.values);
        out["surfaces"] = surfaces;
        out["ridge_weight"] = fit.ridge_weight;
        return out;
      },
      py::arg("grid"), py::arg("responses"), py::arg("forcings"),
      py::arg("basis_size") = 15, py::arg("ridge_weight") = 1.0,
      "Penalized tensor-product historical regression baseline.");

  m.def(
      "fit_concurrent",
      [](const Eigen::VectorXd& grid, const Eigen::MatrixXd& responses,
         const std::vector<Eigen::MatrixXd>& forcings, int K,
         double ridge_weight) {
        const ConcFit fit = fit_concurrent(
            dataset_from_py(grid, responses, forcings), K, ridge_weight);
        py::dict out;
        out["intercept_fn"] = fit.intercept_fn;
        py::list fns;
        for (const auto& f : fit.coef_fns) fns.append(f);
        out["coef_fns"] = fns;
        out["ridge_weight"] = fit.ridge_weight;
        return out;
      },
      py::arg("grid"), py::arg("responses"), py::arg("forcings"),
      py::arg("K") = 20, py::arg("ridge_weight") = 1.0,
      "Penalized concurrent regression baseline.");

  m.attr("__version__") = kVersion;
}
