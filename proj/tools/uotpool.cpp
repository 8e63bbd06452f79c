// uotpool <approx|stability|convergence|bench|train> [--config path.json] [--seed u64] [--out dir]

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "uotpool/experiments.hpp"

namespace {

const char* kCsvSchemas = R"(Outputs (CSV, comma-separated, '.' decimal, 17 significant digits):
  approx       approx_plan_<target>_<solver>.csv   row,col,truth,solved
               approx_summary.csv                  target,solver,max_abs_plan_error,max_abs_pooled_error,has_nan,total_mass
  stability    stability.csv                       solver,regularizer,alpha0,alpha12,has_nan,total_mass
  convergence  convergence.csv                     solver,regularizer,k,objective
  bench        bench.csv                           method,k,mean_ms,std_ms,median_ms,min_ms   (k empty for non-UOT methods)
  train        train.csv                           epoch,loss,status   (an aborted run ends with a row: loss=nan, status=aborted: <reason>)
Every command also writes manifest.json (files, config echo, version, notes).
Files are written to a temporary name and renamed when complete.
)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbalanced optimal transport pooling experiments"};
  app.footer(kCsvSchemas);
  app.set_version_flag("--version", std::string(uotpool::kVersion));

  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  app.add_option("command", command, "approx | stability | convergence | bench | train")
      ->required()
      ->check(CLI::IsMember(uotpool::command_names()));
  app.add_option("--config", config_path, "JSON config; unknown keys are rejected")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "output directory (default: results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    uotpool::ExperimentConfig config =
        config_path.empty() ? uotpool::parse_config(nlohmann::json::object())
                            : uotpool::load_config(config_path);
    if (seed) config.seed = *seed;
    if (out_dir) config.out = *out_dir;

    const uotpool::CommandOutput output = uotpool::run_command(command, config);
    for (const auto& path : uotpool::write_outputs(config.out, command, config, output)) {
      std::cout << path.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "uotpool " << command << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
