#include "gridcl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gridcl {

using nlohmann::json;

void RunConfig::validate() const {
  strategy.validate();
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("config: train_fraction must be in (0,1)");
  if (scenarios.empty() || methods.empty() || seeds.empty())
    throw std::invalid_argument("config: scenarios, methods and seeds must be nonempty");
  for (int s : scenarios)
    if (s < 1 || s > 4)
      throw std::invalid_argument("config: scenario " + std::to_string(s) +
                                  " outside 1..4");
}

StrategyConfig effective_strategy(const RunConfig& cfg, int scenario, Method method) {
  StrategyConfig s = cfg.strategy;
  s.method = method;
  s.proder_beta = cfg.proder_beta_override.value_or(scenario == 1 ? 5.0 : 7.2);
  s.proder_rho = cfg.proder_rho_override.value_or(scenario == 4 ? 0.50 : 0.45);
  // fast tier shrinks the dataset but keeps most of the epoch budget: the
  // prototype losses need the bulk of the schedule to converge
  if (cfg.fast) s.epochs = std::min(s.epochs, 40);
  return s;
}

SyntheticConfig effective_synthetic(const RunConfig& cfg) {
  SyntheticConfig s = cfg.synthetic;
  if (cfg.fast) {
    int fifth = s.rows_per_cell / 5;
    s.rows_per_cell = std::max(24, (fifth + 11) / 12 * 12);
  }
  return s;
}

std::string default_out_dir() {
  const char* env = std::getenv("GRIDCL_OUT");
  return env && *env ? env : "results";
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: parse error in " + path + ": " + e.what());
  }
  int version = j.value("version", 1);
  if (version != 1)
    throw std::runtime_error("config: unsupported version " + std::to_string(version));

  RunConfig cfg;
  cfg.out_dir = default_out_dir();
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    read_if(d, "csv_path", cfg.csv_path);
    read_if(d, "rows_per_cell", cfg.synthetic.rows_per_cell);
    read_if(d, "seed", cfg.synthetic.seed);
    read_if(d, "noise_scale", cfg.synthetic.noise_scale);
    read_if(d, "class_sep", cfg.synthetic.class_sep);
    read_if(d, "zone_sep", cfg.synthetic.zone_sep);
    read_if(d, "train_fraction", cfg.train_fraction);
    read_if(d, "split_seed", cfg.split_seed);
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    read_if(r, "scenarios", cfg.scenarios);
    read_if(r, "seeds", cfg.seeds);
    read_if(r, "fast", cfg.fast);
    read_if(r, "workers", cfg.workers);
    read_if(r, "out_dir", cfg.out_dir);
    if (r.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : r.at("methods")) {
        std::string name = m.get<std::string>();
        if (name == "all") {
          cfg.methods = all_methods();
          break;
        }
        cfg.methods.push_back(method_from_name(name));
      }
    }
  }
  if (j.contains("strategy")) {
    const json& s = j.at("strategy");
    read_if(s, "epochs", cfg.strategy.epochs);
    read_if(s, "batch_size", cfg.strategy.batch_size);
    read_if(s, "lr", cfg.strategy.lr);
    read_if(s, "ewc_lambda", cfg.strategy.ewc_lambda);
    read_if(s, "lwf_lambda", cfg.strategy.lwf_lambda);
    read_if(s, "replay_ratio", cfg.strategy.replay_ratio);
    read_if(s, "derpp_alpha", cfg.strategy.derpp_alpha);
    read_if(s, "derpp_beta", cfg.strategy.derpp_beta);
    read_if(s, "buffer_capacity", cfg.strategy.buffer_capacity);
    read_if(s, "fisher_max_samples", cfg.strategy.fisher_max_samples);
    read_if(s, "proder_alpha", cfg.strategy.proder_alpha);
    read_if(s, "proder_gamma", cfg.strategy.proder_gamma);
    read_if(s, "kd_temperature", cfg.strategy.kd_temperature);
    if (s.contains("proder_beta")) cfg.proder_beta_override = s.at("proder_beta").get<double>();
    if (s.contains("proder_rho")) cfg.proder_rho_override = s.at("proder_rho").get<double>();
  }
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = 1;
  json d;
  d["csv_path"] = cfg.csv_path;
  d["rows_per_cell"] = cfg.synthetic.rows_per_cell;
  d["seed"] = cfg.synthetic.seed;
  d["noise_scale"] = cfg.synthetic.noise_scale;
  d["class_sep"] = cfg.synthetic.class_sep;
  d["zone_sep"] = cfg.synthetic.zone_sep;
  d["train_fraction"] = cfg.train_fraction;
  d["split_seed"] = cfg.split_seed;
  j["dataset"] = d;
  json r;
  r["scenarios"] = cfg.scenarios;
  std::vector<std::string> names;
  for (Method m : cfg.methods) names.push_back(method_name(m));
  r["methods"] = names;
  r["seeds"] = cfg.seeds;
  r["fast"] = cfg.fast;
  r["workers"] = cfg.workers;
  r["out_dir"] = cfg.out_dir;
  j["run"] = r;
  json s;
  s["epochs"] = cfg.strategy.epochs;
  s["batch_size"] = cfg.strategy.batch_size;
  s["lr"] = cfg.strategy.lr;
  s["ewc_lambda"] = cfg.strategy.ewc_lambda;
  s["lwf_lambda"] = cfg.strategy.lwf_lambda;
  s["replay_ratio"] = cfg.strategy.replay_ratio;
  s["derpp_alpha"] = cfg.strategy.derpp_alpha;
  s["derpp_beta"] = cfg.strategy.derpp_beta;
  s["buffer_capacity"] = cfg.strategy.buffer_capacity;
  s["fisher_max_samples"] = cfg.strategy.fisher_max_samples;
  s["proder_alpha"] = cfg.strategy.proder_alpha;
  s["proder_gamma"] = cfg.strategy.proder_gamma;
  s["kd_temperature"] = cfg.strategy.kd_temperature;
  if (cfg.proder_beta_override) s["proder_beta"] = *cfg.proder_beta_override;
  if (cfg.proder_rho_override) s["proder_rho"] = *cfg.proder_rho_override;
  j["strategy"] = s;
  return j.dump(2);
}

}  // namespace gridcl
