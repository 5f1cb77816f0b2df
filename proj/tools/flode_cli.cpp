#include <cstdio>
#include <exception>
#include <functional>
#include <string>

#include "CLI11.hpp"

#include "flode/io.hpp"

namespace {

void add_command(CLI::App& app, const std::string& name,
                 const std::string& description, bool needs_data,
                 const std::function<int(const flode::CommandPaths&)>& run,
                 int& exit_code) {
  auto* cmd = app.add_subcommand(name, description);
  auto paths = std::make_shared<flode::CommandPaths>();
  auto seed = std::make_shared<std::uint64_t>(0);
  cmd->add_option("--config", paths->config_file, "JSON config file")
      ->required();
  auto* data_opt =
      cmd->add_option("--data", paths->data_file, "dataset CSV (long format)");
  if (needs_data) data_opt->required();
  cmd->add_option("--out", paths->out_dir, "output directory")
      ->default_val(".");
  auto* seed_opt =
      cmd->add_option("--seed", *seed, "seed override (replaces config seed)");
  cmd->callback([&exit_code, paths, seed, seed_opt, run]() {
    if (seed_opt->count() > 0) paths->seed_override = *seed;
    exit_code = run(*paths);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flode: ODE-driven functional regression for repeated trajectories"};
  app.require_subcommand(1);
  int exit_code = 0;

  add_command(app, "simulate", "generate a synthetic dataset plus ground truth",
              false, flode::cmd_simulate, exit_code);
  add_command(app, "fit", "fit the model to a dataset CSV", true,
              flode::cmd_fit, exit_code);
  add_command(app, "bootstrap", "bootstrap confidence bands for a saved fit",
              true, flode::cmd_bootstrap, exit_code);
  add_command(app, "surface", "induced coefficient surface of a saved fit",
              false, flode::cmd_surface, exit_code);
  add_command(app, "cv", "cross-validated prediction error for each method",
              true, flode::cmd_cv, exit_code);
  add_command(app, "compare", "simulation study report across replicates",
              false, flode::cmd_compare, exit_code);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}
