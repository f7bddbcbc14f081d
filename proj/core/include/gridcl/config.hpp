#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcl/data.hpp"
#include "gridcl/strategies.hpp"

namespace gridcl {

// Full experiment description. Defaults reproduce the reference setup, so an
// empty override block runs the standard benchmark.
struct RunConfig {
  // dataset
  std::string csv_path;  // empty -> synthetic
  SyntheticConfig synthetic;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 99;

  // run grid
  std::vector<int> scenarios = {1, 2, 3, 4};
  std::vector<Method> methods = all_methods();
  std::vector<std::uint64_t> seeds = {1};
  bool fast = false;  // fifth-size data, epochs capped at 40
  int workers = 0;    // 0 -> hardware concurrency
  std::string out_dir = "results";

  // strategy defaults; per-scenario ProDER beta/rho apply unless overridden
  StrategyConfig strategy;
  std::optional<double> proder_beta_override;
  std::optional<double> proder_rho_override;

  void validate() const;
};

// beta 5 for scenario 1 / 7.2 for 2-4, rho 0.45 / 0.50 for scenario 4,
// unless the config pinned explicit values; fast mode switches to 15 epochs
StrategyConfig effective_strategy(const RunConfig& cfg, int scenario, Method method);

// synthetic sizing actually used (fast mode quarters the per-cell rows,
// keeping a multiple of 12)
SyntheticConfig effective_synthetic(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);  // config echo

// default output root: GRIDCL_OUT env var, else "results"
std::string default_out_dir();

}  // namespace gridcl
