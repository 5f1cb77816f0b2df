#include "flode/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "flode/baselines.hpp"
#include "flode/metrics.hpp"
#include "flode/parallel.hpp"
#include "flode/quadrature.hpp"

namespace flode {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

double get_number(const json& j, const std::string& key) {
  require(j.is_number(), "config field '" + key + "': expected a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& key) {
  require(j.is_number_integer(), "config field '" + key + "': expected an integer");
  return j.get<int>();
}

std::vector<GaussianBump> parse_bumps(const json& j, const std::string& key) {
  require(j.is_array(), "config field '" + key + "': expected an array of bumps");
  std::vector<GaussianBump> bumps;
  for (const auto& item : j) {
    require(item.is_object() && item.contains("height") &&
                item.contains("center") && item.contains("width"),
            "config field '" + key + "': each bump needs height/center/width");
    GaussianBump bump;
    bump.height = item.at("height").get<double>();
    bump.center = item.at("center").get<double>();
    bump.width = item.at("width").get<double>();
    require(bump.width > 0.0, "config field '" + key + "': bump width must be > 0");
    bumps.push_back(bump);
  }
  return bumps;
}

json bumps_to_json(const std::vector<GaussianBump>& bumps) {
  json arr = json::array();
  for (const auto& b : bumps) {
    arr.push_back({{"height", b.height}, {"center", b.center}, {"width", b.width}});
  }
  return arr;
}

std::filesystem::path prepare_out_dir(const std::string& out_dir) {
  std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
  std::filesystem::create_directories(dir);
  return dir;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open output file: " + path.string());
  }
  return out;
}

json config_to_json_object(const RunConfig& config);

RunConfig load_config(const CommandPaths& paths) {
  require(!paths.config_file.empty(), "missing --config file");
  RunConfig config = RunConfig::from_file(paths.config_file);
  if (paths.seed_override) {
    config.seed = *paths.seed_override;
  }
  config.sim.seed = config.seed;
  return config;
}

FunctionalDataset load_dataset(const CommandPaths& paths,
                               const RunConfig& config) {
  require(!paths.data_file.empty(), "this command requires --data <csv>");
  return ingest(paths.data_file, config.target_j);
}

FitOptions options_from_config(const RunConfig& config) {
  FitOptions opts;
  opts.tol = config.tol;
  opts.max_iter = config.max_iter;
  opts.alpha_lo = config.alpha_lo;
  opts.alpha_hi = config.alpha_hi;
  opts.random_effects = config.random_effects;
  return opts;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");

  static const std::set<std::string> known = {
      "K", "lambda", "tol", "max_iter", "alpha_bounds", "random_effects",
      "target_j", "n_boot", "cv_folds", "seed", "methods", "hist_basis",
      "n_replicates", "alphas", "eval_n", "truth_kind", "coefficient", "fit",
      "n_trials", "grid_size", "alpha", "sigma2", "sigma2_d", "y0_variance",
      "delta_df", "b0_bumps", "b1_bumps", "fhist_bump", "scale_range",
      "shift_range"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("unknown config field '" + key + "'");
    }
  }

  RunConfig config;
  if (j.contains("K")) config.K = get_int(j["K"], "K");
  require(config.K >= 5, "config field 'K': must be >= 5 (cubic splines)");
  if (j.contains("lambda")) config.lambda = get_number(j["lambda"], "lambda");
  require(config.lambda > 0.0 && config.lambda <= 1.0,
          "config field 'lambda': must be in (0, 1]");
  if (j.contains("tol")) config.tol = get_number(j["tol"], "tol");
  require(config.tol > 0.0, "config field 'tol': must be > 0");
  if (j.contains("max_iter")) config.max_iter = get_int(j["max_iter"], "max_iter");
  require(config.max_iter >= 1, "config field 'max_iter': must be >= 1");
  if (j.contains("alpha_bounds")) {
    const auto& bounds = j["alpha_bounds"];
    require(bounds.is_array() && bounds.size() == 2,
            "config field 'alpha_bounds': expected [lo, hi]");
    config.alpha_lo = bounds[0].get<double>();
    config.alpha_hi = bounds[1].get<double>();
    require(config.alpha_lo > 0.0 && config.alpha_lo < config.alpha_hi,
            "config field 'alpha_bounds': need 0 < lo < hi");
  }
  if (j.contains("random_effects")) {
    require(j["random_effects"].is_boolean(),
            "config field 'random_effects': expected true/false");
    config.random_effects = j["random_effects"].get<bool>();
  }
  if (j.contains("target_j")) config.target_j = get_int(j["target_j"], "target_j");
  require(config.target_j == 0 || config.target_j >= 3,
          "config field 'target_j': must be 0 (auto) or >= 3");
  if (j.contains("n_boot")) config.n_boot = get_int(j["n_boot"], "n_boot");
  require(config.n_boot >= 2, "config field 'n_boot': must be >= 2");
  if (j.contains("cv_folds")) config.cv_folds = get_int(j["cv_folds"], "cv_folds");
  require(config.cv_folds >= 2, "config field 'cv_folds': must be >= 2");
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned() || j["seed"].is_number_integer(),
            "config field 'seed': expected a non-negative integer");
    config.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("methods")) {
    require(j["methods"].is_array() && !j["methods"].empty(),
            "config field 'methods': expected a non-empty array");
    config.methods.clear();
    for (const auto& m : j["methods"]) {
      const std::string name = m.get<std::string>();
      require(name == "flode" || name == "fhist" || name == "fconc",
              "config field 'methods': unknown method '" + name + "'");
      config.methods.push_back(name);
    }
  }
  if (j.contains("hist_basis")) config.hist_basis = get_int(j["hist_basis"], "hist_basis");
  require(config.hist_basis >= 5, "config field 'hist_basis': must be >= 5");
  if (j.contains("n_replicates")) {
    config.n_replicates = get_int(j["n_replicates"], "n_replicates");
  }
  require(config.n_replicates >= 1, "config field 'n_replicates': must be >= 1");
  if (j.contains("alphas")) {
    require(j["alphas"].is_array() && !j["alphas"].empty(),
            "config field 'alphas': expected a non-empty array");
    config.alphas.clear();
    for (const auto& a : j["alphas"]) {
      config.alphas.push_back(a.get<double>());
      require(config.alphas.back() > 0.0, "config field 'alphas': must be > 0");
    }
  }
  if (j.contains("eval_n")) config.eval_n = get_int(j["eval_n"], "eval_n");
  require(config.eval_n >= 1, "config field 'eval_n': must be >= 1");
  if (j.contains("truth_kind")) {
    config.truth_kind = j["truth_kind"].get<std::string>();
    require(config.truth_kind == "flode" || config.truth_kind == "fhist",
            "config field 'truth_kind': must be 'flode' or 'fhist'");
  }
  if (j.contains("coefficient")) {
    config.coefficient = get_int(j["coefficient"], "coefficient");
    require(config.coefficient >= 0, "config field 'coefficient': must be >= 0");
  }
  if (j.contains("fit")) config.fit_file = j["fit"].get<std::string>();

  // Simulation block.
  if (j.contains("n_trials")) config.sim.n_trials = get_int(j["n_trials"], "n_trials");
  require(config.sim.n_trials >= 1, "config field 'n_trials': must be >= 1");
  if (j.contains("grid_size")) config.sim.grid_size = get_int(j["grid_size"], "grid_size");
  require(config.sim.grid_size >= 3, "config field 'grid_size': must be >= 3");
  if (j.contains("alpha")) config.sim.alpha = get_number(j["alpha"], "alpha");
  require(config.sim.alpha > 0.0, "config field 'alpha': must be > 0");
  if (j.contains("sigma2")) config.sim.sigma2 = get_number(j["sigma2"], "sigma2");
  require(config.sim.sigma2 >= 0.0, "config field 'sigma2': must be >= 0");
  if (j.contains("sigma2_d")) config.sim.sigma2_d = get_number(j["sigma2_d"], "sigma2_d");
  require(config.sim.sigma2_d >= 0.0, "config field 'sigma2_d': must be >= 0");
  if (j.contains("y0_variance")) {
    config.sim.y0_variance = get_number(j["y0_variance"], "y0_variance");
  }
  require(config.sim.y0_variance >= 0.0, "config field 'y0_variance': must be >= 0");
  if (j.contains("delta_df")) config.sim.delta_df = get_int(j["delta_df"], "delta_df");
  require(config.sim.delta_df >= 5, "config field 'delta_df': must be >= 5");
  if (j.contains("b0_bumps")) config.sim.b0_spec = parse_bumps(j["b0_bumps"], "b0_bumps");
  if (j.contains("b1_bumps")) config.sim.b1_spec = parse_bumps(j["b1_bumps"], "b1_bumps");
  if (j.contains("fhist_bump")) {
    const auto& bump = j["fhist_bump"];
    require(bump.is_object(), "config field 'fhist_bump': expected an object");
    for (const auto& [key, value] : bump.items()) {
      require(key == "s_center" || key == "t_center" || key == "sd" || key == "height",
              "config field 'fhist_bump': unknown key '" + key + "'");
    }
    if (bump.contains("s_center")) config.sim.bump_s_center = bump["s_center"].get<double>();
    if (bump.contains("t_center")) config.sim.bump_t_center = bump["t_center"].get<double>();
    if (bump.contains("sd")) config.sim.bump_sd = bump["sd"].get<double>();
    if (bump.contains("height")) config.sim.bump_height = bump["height"].get<double>();
    require(config.sim.bump_sd > 0.0, "config field 'fhist_bump': sd must be > 0");
  }
  if (j.contains("scale_range")) {
    const auto& r = j["scale_range"];
    require(r.is_array() && r.size() == 2, "config field 'scale_range': expected [lo, hi]");
    config.sim.scale_lo = r[0].get<double>();
    config.sim.scale_hi = r[1].get<double>();
    require(config.sim.scale_lo <= config.sim.scale_hi,
            "config field 'scale_range': lo must be <= hi");
  }
  if (j.contains("shift_range")) {
    const auto& r = j["shift_range"];
    require(r.is_array() && r.size() == 2, "config field 'shift_range': expected [lo, hi]");
    config.sim.shift_lo = r[0].get<double>();
    config.sim.shift_hi = r[1].get<double>();
    require(config.sim.shift_lo <= config.sim.shift_hi,
            "config field 'shift_range': lo must be <= hi");
  }
  config.sim.truth_kind =
      config.truth_kind == "fhist" ? TruthKind::kFhist : TruthKind::kFlode;
  config.sim.seed = config.seed;
  return config;
}

namespace {

json config_to_json_object(const RunConfig& config) {
  json j;
  j["K"] = config.K;
  j["lambda"] = config.lambda;
  j["tol"] = config.tol;
  j["max_iter"] = config.max_iter;
  j["alpha_bounds"] = {config.alpha_lo, config.alpha_hi};
  j["random_effects"] = config.random_effects;
  j["target_j"] = config.target_j;
  j["n_boot"] = config.n_boot;
  j["cv_folds"] = config.cv_folds;
  j["seed"] = config.seed;
  j["methods"] = config.methods;
  j["hist_basis"] = config.hist_basis;
  j["n_replicates"] = config.n_replicates;
  j["alphas"] = config.alphas;
  j["eval_n"] = config.eval_n;
  j["truth_kind"] = config.truth_kind;
  j["coefficient"] = config.coefficient;
  j["fit"] = config.fit_file;
  j["n_trials"] = config.sim.n_trials;
  j["grid_size"] = config.sim.grid_size;
  j["alpha"] = config.sim.alpha;
  j["sigma2"] = config.sim.sigma2;
  j["sigma2_d"] = config.sim.sigma2_d;
  j["y0_variance"] = config.sim.y0_variance;
  j["delta_df"] = config.sim.delta_df;
  j["b0_bumps"] = bumps_to_json(config.sim.b0_spec);
  j["b1_bumps"] = bumps_to_json(config.sim.b1_spec);
  j["fhist_bump"] = {{"s_center", config.sim.bump_s_center},
                     {"t_center", config.sim.bump_t_center},
                     {"sd", config.sim.bump_sd},
                     {"height", config.sim.bump_height}};
  j["scale_range"] = {config.sim.scale_lo, config.sim.scale_hi};
  j["shift_range"] = {config.sim.shift_lo, config.sim.shift_hi};
  return j;
}

}  // namespace

std::string RunConfig::to_json() const {
  return config_to_json_object(*this).dump(2);
}

FunctionalDataset ingest(const std::string& path, int target_j) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument(path + ": empty file");
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(s);
    while (std::getline(ss, field, ',')) {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) {
        field.pop_back();
      }
      std::size_t start = 0;
      while (start < field.size() && field[start] == ' ') ++start;
      fields.push_back(field.substr(start));
    }
    if (!s.empty() && s.back() == ',') fields.push_back("");
    return fields;
  };

  const auto header = split(line);
  if (header.size() < 4 || header[0] != "trial_id" || header[1] != "time" ||
      header[2] != "y") {
    throw std::invalid_argument(
        path + ": header must be trial_id,time,y,x1[,x2,...]");
  }
  const int P = static_cast<int>(header.size()) - 3;
  for (int p = 0; p < P; ++p) {
    if (header[3 + p] != "x" + std::to_string(p + 1)) {
      throw std::invalid_argument(path + ": forcing columns must be named x1..x" +
                                  std::to_string(P));
    }
  }

  struct TrialRows {
    std::vector<double> time;
    std::vector<double> y;
    std::vector<std::vector<double>> x;  // P inner vectors
  };
  std::map<std::string, TrialRows> trials;
  std::vector<std::string> order;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (static_cast<int>(fields.size()) != 3 + P) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected " + std::to_string(3 + P) +
                                  " fields, got " + std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": empty trial_id");
    }
    auto parse = [&](const std::string& s, const char* what) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": malformed " + what + " value '" + s + "'");
      }
    };
    auto it = trials.find(id);
    if (it == trials.end()) {
      it = trials.emplace(id, TrialRows{}).first;
      it->second.x.resize(P);
      order.push_back(id);
    }
    it->second.time.push_back(parse(fields[1], "time"));
    it->second.y.push_back(parse(fields[2], "y"));
    for (int p = 0; p < P; ++p) {
      it->second.x[p].push_back(parse(fields[3 + p], header[3 + p].c_str()));
    }
  }
  if (order.empty()) throw std::invalid_argument(path + ": no data rows");

  // Choose the target grid size.
  int J = target_j;
  if (J == 0) J = static_cast<int>(trials[order.front()].time.size());
  if (J < 3) throw std::invalid_argument(path + ": target grid needs >= 3 points");

  FunctionalDataset data;
  data.grid.resize(J);
  for (int j = 0; j < J; ++j) data.grid[j] = static_cast<double>(j) / (J - 1);
  data.responses.resize(order.size(), J);
  data.forcings.assign(P, Eigen::MatrixXd(order.size(), J));
  data.trial_ids = order;

  auto interp = [&](const std::vector<double>& t, const std::vector<double>& v) {
    Eigen::VectorXd out(J);
    for (int j = 0; j < J; ++j) {
      const double tj = data.grid[j];
      if (tj <= t.front()) {
        out[j] = v.front();
      } else if (tj >= t.back()) {
        out[j] = v.back();
      } else {
        const auto upper = std::upper_bound(t.begin(), t.end(), tj);
        const std::size_t hi = upper - t.begin();
        const double w = (tj - t[hi - 1]) / (t[hi] - t[hi - 1]);
        out[j] = (1.0 - w) * v[hi - 1] + w * v[hi];
      }
    }
    return out;
  };

  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& rows = trials[order[i]];
    if (rows.time.size() < 3) {
      throw std::invalid_argument(path + ": trial '" + order[i] +
                                  "' has fewer than 3 observations");
    }
    for (std::size_t r = 1; r < rows.time.size(); ++r) {
      if (rows.time[r] <= rows.time[r - 1]) {
        throw std::invalid_argument(path + ": trial '" + order[i] +
                                    "' has non-monotone times");
      }
    }
    // Per-trial rescale to [0, 1].
    const double t0 = rows.time.front();
    const double t1 = rows.time.back();
    std::vector<double> scaled(rows.time.size());
    for (std::size_t r = 0; r < rows.time.size(); ++r) {
      scaled[r] = (rows.time[r] - t0) / (t1 - t0);
    }
    data.responses.row(i) = interp(scaled, rows.y).transpose();
    for (int p = 0; p < P; ++p) {
      data.forcings[p].row(i) = interp(scaled, rows.x[p]).transpose();
    }
  }
  data.validate();
  return data;
}

void write_dataset_csv(const std::string& path, const FunctionalDataset& data) {
  auto out = open_output(path);
  out << "trial_id,time,y";
  for (int p = 1; p <= data.n_forcings(); ++p) out << ",x" << p;
  out << "\n";
  for (int i = 0; i < data.n_trials(); ++i) {
    const std::string id =
        data.trial_ids.empty() ? std::to_string(i + 1) : data.trial_ids[i];
    for (int j = 0; j < data.n_times(); ++j) {
      out << id << ',' << fmt(data.grid[j]) << ',' << fmt(data.responses(i, j));
      for (int p = 0; p < data.n_forcings(); ++p) {
        out << ',' << fmt(data.forcings[p](i, j));
      }
      out << "\n";
    }
  }
}

void write_fit_json(const std::string& path, const FlodeFit& fit) {
  json j;
  j["version"] = kVersion;
  j["alpha"] = fit.params.alpha;
  j["K"] = fit.basis.K;
  j["degree"] = fit.basis.degree;
  j["lambda"] = fit.basis.lambda;
  j["grid"] = std::vector<double>(fit.basis.grid.begin(), fit.basis.grid.end());
  const int K = fit.basis.K;
  const int n_blocks = static_cast<int>(fit.params.b.size()) / K;
  json blocks = json::array();
  for (int p = 0; p < n_blocks; ++p) {
    blocks.push_back(std::vector<double>(fit.params.b.begin() + p * K,
                                         fit.params.b.begin() + (p + 1) * K));
  }
  j["b_blocks"] = blocks;
  j["y0"] = std::vector<double>(fit.params.y0.begin(), fit.params.y0.end());
  j["sigma2"] = fit.params.sigma2;
  j["sigma2_d"] = fit.params.sigma2_d;
  j["sigma2_b"] = fit.params.sigma2_b;
  j["loglik_trace"] = fit.loglik_trace;
  j["n_iter"] = fit.n_iter;
  j["converged"] = fit.converged;
  json coef = json::array();
  for (int p = 0; p < n_blocks; ++p) {
    const Eigen::VectorXd fn = fit.coefficient_function(p);
    coef.push_back(std::vector<double>(fn.begin(), fn.end()));
  }
  j["coefficient_functions"] = coef;
  auto out = open_output(path);
  out << j.dump(2) << "\n";
}

FlodeFit read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open fit file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": not valid JSON: " + e.what());
  }
  FlodeFit fit;
  const auto grid_vec = j.at("grid").get<std::vector<double>>();
  Eigen::VectorXd grid =
      Eigen::Map<const Eigen::VectorXd>(grid_vec.data(), grid_vec.size());
  fit.basis = make_basis_system(grid, j.at("K").get<int>(),
                                j.at("lambda").get<double>(),
                                j.at("degree").get<int>());
  fit.params.alpha = j.at("alpha").get<double>();
  const auto blocks = j.at("b_blocks").get<std::vector<std::vector<double>>>();
  const int K = fit.basis.K;
  fit.params.b.resize(static_cast<Eigen::Index>(blocks.size()) * K);
  for (std::size_t p = 0; p < blocks.size(); ++p) {
    if (static_cast<int>(blocks[p].size()) != K) {
      throw std::invalid_argument(path + ": b block size does not match K");
    }
    for (int k = 0; k < K; ++k) fit.params.b[p * K + k] = blocks[p][k];
  }
  const auto y0 = j.at("y0").get<std::vector<double>>();
  fit.params.y0 = Eigen::Map<const Eigen::VectorXd>(y0.data(), y0.size());
  fit.params.sigma2 = j.at("sigma2").get<double>();
  fit.params.sigma2_d = j.at("sigma2_d").get<double>();
  fit.params.sigma2_b = j.at("sigma2_b").get<double>();
  fit.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
  fit.n_iter = j.at("n_iter").get<int>();
  fit.converged = j.at("converged").get<bool>();
  return fit;
}

void write_sidecar(const std::string& path, const std::string& command,
                   const RunConfig& config) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = config_to_json_object(config);
  auto out = open_output(path + ".meta.json");
  out << j.dump(2) << "\n";
}

namespace {

void write_truth_json(const std::string& path, const SimTruth& truth,
                      const Eigen::VectorXd& grid) {
  json j;
  j["kind"] = truth.kind == TruthKind::kFlode ? "flode" : "fhist";
  j["alpha"] = truth.alpha;
  j["grid"] = std::vector<double>(grid.begin(), grid.end());
  j["b0_fn"] = std::vector<double>(truth.b0_fn.begin(), truth.b0_fn.end());
  j["b1_fn"] = std::vector<double>(truth.b1_fn.begin(), truth.b1_fn.end());
  j["y0"] = std::vector<double>(truth.y0.begin(), truth.y0.end());
  json surface = json::array();
  for (Eigen::Index s = 0; s < truth.surface.values.rows(); ++s) {
    surface.push_back(std::vector<double>(
        truth.surface.values.row(s).begin(), truth.surface.values.row(s).end()));
  }
  j["surface"] = surface;
  auto out = open_output(path);
  out << j.dump() << "\n";
}

void write_band_csv(const std::string& path, const CoefficientBand& band) {
  auto out = open_output(path);
  out << "t,estimate,se,lower,upper\n";
  for (Eigen::Index j = 0; j < band.grid.size(); ++j) {
    out << fmt(band.grid[j]) << ',' << fmt(band.estimate[j]) << ','
        << fmt(band.se[j]) << ',' << fmt(band.lower[j]) << ','
        << fmt(band.upper[j]) << "\n";
  }
}

}  // namespace

int cmd_simulate(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  const auto dir = prepare_out_dir(paths.out_dir);
  const SimResult sim = gen_dataset(config.sim);

  const std::string data_path = (dir / "dataset.csv").string();
  write_dataset_csv(data_path, sim.data);
  write_sidecar(data_path, "simulate", config);

  const std::string truth_path = (dir / "truth.json").string();
  write_truth_json(truth_path, sim.truth, sim.data.grid);
  write_sidecar(truth_path, "simulate", config);
  return 0;
}

int cmd_fit(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  const auto dir = prepare_out_dir(paths.out_dir);
  const FunctionalDataset data = load_dataset(paths, config);
  const BasisSystem basis =
      make_basis_system(data.grid, config.K, config.lambda);
  const FlodeFit fit = flode::fit(data, basis, options_from_config(config));

  const std::string fit_path = (dir / "fit.json").string();
  write_fit_json(fit_path, fit);
  write_sidecar(fit_path, "fit", config);

  const std::string coef_path = (dir / "coefficients.csv").string();
  auto out = open_output(coef_path);
  const int n_blocks = static_cast<int>(fit.params.b.size()) / basis.K;
  out << "t";
  for (int p = 0; p < n_blocks; ++p) out << ",B" << p;
  out << "\n";
  std::vector<Eigen::VectorXd> fns;
  for (int p = 0; p < n_blocks; ++p) fns.push_back(fit.coefficient_function(p));
  for (int j = 0; j < data.n_times(); ++j) {
    out << fmt(data.grid[j]);
    for (int p = 0; p < n_blocks; ++p) out << ',' << fmt(fns[p][j]);
    out << "\n";
  }
  out.close();
  write_sidecar(coef_path, "fit", config);

  std::printf("fit: alpha=%.6g sigma2=%.6g iterations=%d converged=%s\n",
              fit.params.alpha, fit.params.sigma2, fit.n_iter,
              fit.converged ? "true" : "false");
  return 0;
}

int cmd_bootstrap(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  require(!config.fit_file.empty(),
          "bootstrap requires config field 'fit' (path to fit.json)");
  const auto dir = prepare_out_dir(paths.out_dir);
  const FunctionalDataset data = load_dataset(paths, config);
  const FlodeFit fit = read_fit_json(config.fit_file);
  const auto bands =
      bootstrap_bands(data, fit.basis, fit, config.n_boot, config.seed);
  for (std::size_t p = 0; p < bands.size(); ++p) {
    const std::string path =
        (dir / ("band_b" + std::to_string(p) + ".csv")).string();
    write_band_csv(path, bands[p]);
    write_sidecar(path, "bootstrap", config);
  }
  return 0;
}

int cmd_surface(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  require(!config.fit_file.empty(),
          "surface requires config field 'fit' (path to fit.json)");
  const auto dir = prepare_out_dir(paths.out_dir);
  const FlodeFit fit = read_fit_json(config.fit_file);
  const int n_blocks = static_cast<int>(fit.params.b.size()) / fit.basis.K;
  require(config.coefficient >= 0 && config.coefficient < n_blocks,
          "config field 'coefficient': fit has blocks 0.." +
              std::to_string(n_blocks - 1));
  const Surface surf =
      flode_surface(fit.params.alpha, fit.basis.grid,
                    fit.coefficient_function(config.coefficient));
  const std::string path = (dir / "surface.csv").string();
  auto out = open_output(path);
  out << "s,t,value\n";
  for (Eigen::Index s = 0; s < surf.grid.size(); ++s) {
    for (Eigen::Index t = 0; t < surf.grid.size(); ++t) {
      out << fmt(surf.grid[s]) << ',' << fmt(surf.grid[t]) << ','
          << fmt(surf.values(s, t)) << "\n";
    }
  }
  out.close();
  write_sidecar(path, "surface", config);
  return 0;
}

int cmd_cv(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  const auto dir = prepare_out_dir(paths.out_dir);
  const FunctionalDataset data = load_dataset(paths, config);
  const auto folds = cv_folds(data.n_trials(), config.cv_folds, config.seed);

  struct Row {
    std::string method;
    int fold;
    double mape_value;
  };
  std::vector<std::vector<Row>> rows(folds.size());

  parallel_for(static_cast<int>(folds.size()), [&](int f) {
    const auto& test = folds[f];
    std::vector<char> in_test(data.n_trials(), 0);
    for (int i : test) in_test[i] = 1;
    std::vector<int> train_idx;
    for (int i = 0; i < data.n_trials(); ++i) {
      if (!in_test[i]) train_idx.push_back(i);
    }
    const FunctionalDataset train = data.select_trials(train_idx);
    const FunctionalDataset test_data = data.select_trials(test);
    const Eigen::VectorXd test_y0 = test_data.responses.col(0);

    for (const auto& method : config.methods) {
      double value = 0.0;
      if (method == "flode") {
        const BasisSystem basis =
            make_basis_system(train.grid, config.K, config.lambda);
        const FlodeFit fit =
            flode::fit(train, basis, options_from_config(config));
        value = mape(predict(fit.params, basis, test_data.forcings, test_y0),
                     test_data.responses, data.grid);
      } else if (method == "fhist") {
        const double w = select_ridge_historical(
            train, config.hist_basis, 5, derive_seed(config.seed, 100 + f));
        const HistFit fit = fit_historical(train, config.hist_basis, w);
        value = mape(predict_historical(fit, test_data.forcings),
                     test_data.responses, data.grid);
      } else {
        const double w = select_ridge_concurrent(
            train, config.K, 5, derive_seed(config.seed, 200 + f));
        const ConcFit fit = fit_concurrent(train, config.K, w);
        value = mape(predict_concurrent(fit, test_data.forcings),
                     test_data.responses, data.grid);
      }
      rows[f].push_back({method, f, value});
    }
  });

  const std::string path = (dir / "mape.csv").string();
  auto out = open_output(path);
  out << "method,fold,mape\n";
  for (const auto& fold_rows : rows) {
    for (const auto& row : fold_rows) {
      out << row.method << ',' << row.fold << ',' << fmt(row.mape_value) << "\n";
    }
  }
  out.close();
  write_sidecar(path, "cv", config);
  return 0;
}

int cmd_compare(const CommandPaths& paths) {
  const RunConfig config = load_config(paths);
  const auto dir = prepare_out_dir(paths.out_dir);
  const bool is_flode_truth = config.truth_kind == "flode";
  const std::vector<double> alphas =
      is_flode_truth ? config.alphas : std::vector<double>{config.sim.alpha};

  struct Row {
    int replicate;
    std::string method;
    std::string alpha_truth, alpha_err, ie_b0, ie_b1, ise, mape_value;
  };
  const int n_tasks = static_cast<int>(alphas.size()) * config.n_replicates;
  std::vector<std::vector<Row>> rows(n_tasks);

  parallel_for(n_tasks, [&](int task) {
    const int a_idx = task / config.n_replicates;
    const int rep = task % config.n_replicates;

    SimConfig sim = config.sim;
    sim.alpha = alphas[a_idx];
    sim.truth_kind = is_flode_truth ? TruthKind::kFlode : TruthKind::kFhist;
    sim.seed = derive_seed(config.seed, 2 * task);
    const SimResult train = gen_dataset(sim);

    SimConfig eval_sim = sim;
    eval_sim.n_trials = config.eval_n;
    eval_sim.seed = derive_seed(config.seed, 2 * task + 1);
    const SimResult eval = gen_dataset(eval_sim);
    const Eigen::VectorXd eval_y0 = eval.data.responses.col(0);

    for (const auto& method : config.methods) {
      Row row;
      row.replicate = rep;
      row.method = method;
      row.alpha_truth = is_flode_truth ? fmt(sim.alpha) : "";
      if (method == "flode") {
        const BasisSystem basis =
            make_basis_system(train.data.grid, config.K, config.lambda);
        const FlodeFit fit =
            flode::fit(train.data, basis, options_from_config(config));
        if (is_flode_truth) {
          row.alpha_err = fmt(alpha_error(sim.alpha, fit.params.alpha));
          row.ie_b0 = fmt(integrated_error(train.truth.b0_fn,
                                           fit.coefficient_function(0),
                                           train.data.grid));
          row.ie_b1 = fmt(integrated_error(train.truth.b1_fn,
                                           fit.coefficient_function(1),
                                           train.data.grid));
        }
        const Surface surf = flode_surface(fit.params.alpha, train.data.grid,
                                           fit.coefficient_function(1));
        row.ise = fmt(surface_ise(surf, train.truth.surface));
        row.mape_value =
            fmt(mape(predict(fit.params, basis, eval.data.forcings, eval_y0),
                     eval.data.responses, train.data.grid));
      } else if (method == "fhist") {
        const double w =
            select_ridge_historical(train.data, config.hist_basis, 5,
                                    derive_seed(config.seed, 3000 + task));
        const HistFit fit = fit_historical(train.data, config.hist_basis, w);
        row.ise = fmt(surface_ise(fit.surface(), train.truth.surface));
        row.mape_value = fmt(mape(predict_historical(fit, eval.data.forcings),
                                  eval.data.responses, train.data.grid));
      } else {
        const double w = select_ridge_concurrent(
            train.data, config.K, 5, derive_seed(config.seed, 4000 + task));
        const ConcFit fit = fit_concurrent(train.data, config.K, w);
        row.mape_value = fmt(mape(predict_concurrent(fit, eval.data.forcings),
                                  eval.data.responses, train.data.grid));
      }
      rows[task].push_back(row);
    }
  });

  const std::string path = (dir / "report.csv").string();
  auto out = open_output(path);
  out << "replicate,method,alpha_truth,alpha_error,ie_b0,ie_b1,ise,mape\n";
  for (const auto& task_rows : rows) {
    for (const auto& row : task_rows) {
      out << row.replicate << ',' << row.method << ',' << row.alpha_truth << ','
          << row.alpha_err << ',' << row.ie_b0 << ',' << row.ie_b1 << ','
          << row.ise << ',' << row.mape_value << "\n";
    }
  }
  out.close();
  write_sidecar(path, "compare", config);
  return 0;
}

}  // namespace flode
