#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flode/dataset.hpp"
#include "flode/em.hpp"
#include "flode/inference.hpp"
#include "flode/simulate.hpp"

namespace flode {

inline constexpr const char* kVersion = "0.1.0";

/// Run configuration parsed from a JSON config file. Unknown keys are
/// rejected; values are range-checked with field-level messages.
struct RunConfig {
  // Model / fitting.
  int K = 20;
  double lambda = 0.001;
  double tol = 1e-6;
  int max_iter = 200;
  double alpha_lo = 1e-6;
  double alpha_hi = 40.0;
  bool random_effects = true;
  int target_j = 0;  // ingestion grid size; 0 = use the first trial's length

  // Bootstrap / CV / compare.
  int n_boot = 200;
  int cv_folds = 10;
  std::uint64_t seed = 1;
  std::vector<std::string> methods{"flode", "fhist", "fconc"};
  int hist_basis = 15;
  int n_replicates = 10;
  std::vector<double> alphas{4.0};
  int eval_n = 1000;
  std::string truth_kind = "flode";
  int coefficient = 1;       // surface command: forcing index
  std::string fit_file;      // bootstrap/surface commands

  // Simulation.
  SimConfig sim;

  /// Parses the file, rejecting unknown keys. Throws std::invalid_argument
  /// with a field-level message on any violation.
  static RunConfig from_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);

  /// Canonical JSON echo (used for metadata sidecars).
  std::string to_json() const;
};

/// Reads long-format CSV (trial_id,time,y,x1[,x2,...]), rescales each
/// trial's times to [0, 1], and linearly interpolates onto an equally spaced
/// grid of target_j points. Malformed rows are reported with line numbers.
FunctionalDataset ingest(const std::string& path, int target_j);

void write_dataset_csv(const std::string& path, const FunctionalDataset& data);

/// Fit serialization (JSON schema documented in the README).
void write_fit_json(const std::string& path, const FlodeFit& fit);
FlodeFit read_fit_json(const std::string& path);

/// Metadata sidecar `<path>.meta.json` recording command, config and version.
void write_sidecar(const std::string& path, const std::string& command,
                   const RunConfig& config);

struct CommandPaths {
  std::string config_file;
  std::string data_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
};

int cmd_simulate(const CommandPaths& paths);
int cmd_fit(const CommandPaths& paths);
int cmd_bootstrap(const CommandPaths& paths);
int cmd_surface(const CommandPaths& paths);
int cmd_cv(const CommandPaths& paths);
int cmd_compare(const CommandPaths& paths);

}  // namespace flode
