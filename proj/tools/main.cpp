// gridcl: continual-learning benchmark runner for windowed sensor fault
// prediction. Subcommands: generate, run, report, sweep.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridcl/config.hpp"
#include "gridcl/runner.hpp"

using namespace gridcl;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<int> scenarios;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  bool fast = false;
  int workers = 0;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  cfg.out_dir = default_out_dir();
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (!o.scenarios.empty()) cfg.scenarios = o.scenarios;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& name : o.methods) {
      if (name == "all") {
        cfg.methods = all_methods();
        break;
      }
      cfg.methods.push_back(method_from_name(name));
    }
  }
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.fast) cfg.fast = true;
  if (o.workers > 0) cfg.workers = o.workers;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run config file");
  cmd->add_option("--scenario", o.scenarios, "scenario ids (1..4)");
  cmd->add_option("--method", o.methods, "methods, or 'all'");
  cmd->add_option("--seed", o.seeds, "run seeds");
  cmd->add_option("--out", o.out_dir, "output directory (default $GRIDCL_OUT or ./results)");
  cmd->add_flag("--fast", o.fast, "fifth-size data, epochs capped at 40");
  cmd->add_option("--workers", o.workers, "parallel cell workers (default: cores)");
}

int cmd_generate(const CommonOpts& o, const std::string& out_csv) {
  RunConfig cfg = resolve_config(o);
  std::vector<SampleRow> rows = generate_synthetic(effective_synthetic(cfg));
  write_csv(out_csv, rows);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& r : rows) counts[{r.fault_type, r.zone}]++;
  std::printf("wrote %zu rows to %s\n", rows.size(), out_csv.c_str());
  for (const auto& [cell, n] : counts)
    std::printf("  fault_type=%d zone=%d: %d rows\n", cell.first, cell.second, n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning fault-prediction benchmark"};
  app.require_subcommand(1);

  CommonOpts gen_opts, run_opts, sweep_opts;
  std::string gen_out = "dataset.csv";
  std::string report_dir;
  std::vector<double> sweep_beta, sweep_gamma, sweep_alpha, sweep_rho;

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic CSV dataset");
  add_common(generate, gen_opts);
  generate->add_option("--csv", gen_out, "output CSV path");

  CLI::App* run = app.add_subcommand("run", "execute (scenario x method x seed) cells");
  add_common(run, run_opts);

  CLI::App* report = app.add_subcommand("report", "aggregate result JSONs into CSV tables");
  report->add_option("--dir", report_dir, "results directory")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "cartesian expansion over seeds/weights");
  add_common(sweep, sweep_opts);
  sweep->add_option("--proder-alpha", sweep_alpha, "ProDER alpha values");
  sweep->add_option("--proder-beta", sweep_beta, "ProDER beta values");
  sweep->add_option("--proder-gamma", sweep_gamma, "ProDER gamma values");
  sweep->add_option("--proder-rho", sweep_rho, "ProDER rho values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(gen_opts, gen_out);
    if (run->parsed()) {
      run_all(resolve_config(run_opts));
      return 0;
    }
    if (report->parsed()) {
      write_report(report_dir);
      std::printf("wrote %s/summary.csv\n", report_dir.c_str());
      return 0;
    }
    if (sweep->parsed()) {
      RunConfig base = resolve_config(sweep_opts);
      auto one = [](std::vector<double> v) {
        return v.empty() ? std::vector<double>{-1.0} : v;
      };
      for (double a : one(sweep_alpha))
        for (double b : one(sweep_beta))
          for (double g : one(sweep_gamma))
            for (double rho : one(sweep_rho)) {
              RunConfig cfg = base;
              std::string tag = "sweep";
              if (a >= 0) { cfg.strategy.proder_alpha = a; tag += "-a" + std::to_string(a); }
              if (b >= 0) { cfg.proder_beta_override = b; tag += "-b" + std::to_string(b); }
              if (g >= 0) { cfg.strategy.proder_gamma = g; tag += "-g" + std::to_string(g); }
              if (rho >= 0) { cfg.proder_rho_override = rho; tag += "-r" + std::to_string(rho); }
              cfg.out_dir = base.out_dir + "/" + tag;
              run_all(cfg);
            }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
