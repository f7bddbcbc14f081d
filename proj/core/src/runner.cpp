#include "gridcl/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "gridcl/trainer.hpp"

namespace gridcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hash_split(const DatasetSplit& split) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& wlist : {&split.train, &split.test})
    for (const auto& w : *wlist) {
      feed(w.matrix.data(), w.matrix.size() * sizeof(float));
      feed(&w.fault_type, sizeof(int));
      feed(&w.zone, sizeof(int));
    }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int total_classes(const ScenarioPlan& plan) {
  std::set<int> all;
  for (const auto& t : plan.tasks) all.insert(t.class_set.begin(), t.class_set.end());
  return static_cast<int>(all.size());
}

std::vector<StreamItem> stream_items(const DatasetSplit& split, const ScenarioPlan& plan,
                                     const std::vector<int>& stream) {
  std::vector<StreamItem> items;
  items.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const TimeWindow& w = split.train[stream[i]];
    items.push_back({&w, window_label(w, plan), static_cast<int>(i)});
  }
  return items;
}

// seen-so-far accuracy, weighted by subset size
double weighted_row_accuracy(const std::vector<double>& row,
                             const TaskStreams& test_partition) {
  double hits = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    hits += row[j] * static_cast<double>(test_partition[j].size());
    n += test_partition[j].size();
  }
  return n ? hits / static_cast<double>(n) : 0.0;
}

}  // namespace

Dataset prepare_dataset(const RunConfig& cfg) {
  std::vector<SampleRow> rows = cfg.csv_path.empty()
                                    ? generate_synthetic(effective_synthetic(cfg))
                                    : load_csv(cfg.csv_path);
  Dataset d;
  d.split = make_split(rows, cfg.train_fraction, cfg.split_seed);
  d.hash = hash_split(d.split);
  return d;
}

RunResult run_cell(const Dataset& data, const RunConfig& cfg, int scenario,
                   Method method, std::uint64_t seed, double joint_acc) {
  auto t0 = std::chrono::steady_clock::now();
  const ScenarioPlan plan = scenario_plan(scenario);
  const TaskStreams streams = build_scenario(data.split, plan);
  const TaskStreams test_partition = build_test_partition(data.split, plan);
  const StrategyConfig scfg = effective_strategy(cfg, scenario, method);
  const int n_tasks = static_cast<int>(plan.tasks.size());

  std::uint64_t cell_seed = derive_seed(
      seed, "cell", static_cast<std::uint64_t>(scenario) * 100 +
                        static_cast<std::uint64_t>(method));
  Rng init_rng(derive_seed(cell_seed, "init"));
  ModelF model(kNumFeatures, 150, 0.3, init_rng);
  TrainContext ctx(std::move(model), scfg, cell_seed);

  RunResult r;
  r.method = method;
  r.scenario = scenario;
  r.seed = seed;
  r.dataset_hash = data.hash;
  r.config_echo = run_config_to_json(cfg);

  if (method == Method::Joint) {
    ctx.model.expand_head(total_classes(plan), init_rng);
    ctx.opt.attach(ctx.model.params());
    std::vector<int> all;
    for (const auto& s : streams) all.insert(all.end(), s.begin(), s.end());
    train_task(ctx, stream_items(data.split, plan, all), 0);
    std::vector<double> row =
        evaluate_matrix_row(ctx.model, data.split, test_partition, plan, n_tasks - 1);
    r.matrix.rows.push_back(row);
    double acc = weighted_row_accuracy(row, test_partition);
    r.task_accuracy.assign(n_tasks, acc);
  } else {
    bool attached = false;
    for (int t = 0; t < n_tasks; ++t) {
      int top = 0;
      for (int c : plan.tasks[t].class_set) top = std::max(top, c + 1);
      if (top > ctx.model.classes()) {
        ctx.model.expand_head(top - ctx.model.classes(), init_rng);
        if (!attached) {
          ctx.opt.attach(ctx.model.params());
          attached = true;
        }
      }
      std::vector<StreamItem> items;
      if (method == Method::Cumulative) {
        std::vector<int> all;
        for (int u = 0; u <= t; ++u)
          all.insert(all.end(), streams[u].begin(), streams[u].end());
        items = stream_items(data.split, plan, all);
      } else {
        items = stream_items(data.split, plan, streams[t]);
      }
      train_task(ctx, items, t);

      switch (method) {
        case Method::ER:
          update_uniform(ctx.buffer, items, ctx.model, false, t, ctx.buffer_rng);
          break;
        case Method::DERpp:
          update_uniform(ctx.buffer, items, ctx.model, true, t, ctx.buffer_rng);
          break;
        case Method::ProDER:
          // selection distances use post-task features
          refresh_prototypes(ctx.bank, ctx.model, items, ctx.buffer, scfg.epochs);
          update_prototype_aware(ctx.buffer, items, ctx.model, ctx.bank,
                                 scfg.proder_rho, t);
          break;
        case Method::EWC:
          ctx.fishers.push_back(
              fisher_update(ctx.model, items, scfg.fisher_max_samples, ctx.fisher_rng));
          break;
        case Method::LwF:
          ctx.teacher = ctx.model.clone();
          break;
        default:
          break;
      }
      std::vector<double> row =
          evaluate_matrix_row(ctx.model, data.split, test_partition, plan, t);
      r.task_accuracy.push_back(weighted_row_accuracy(row, test_partition));
      r.matrix.rows.push_back(std::move(row));
    }
  }

  r.final_acc = evaluate_full(ctx.model, data.split.test, plan);
  r.joint_acc = method == Method::Joint ? r.final_acc : joint_acc;
  r.gap = compute_gap(r.final_acc, r.joint_acc);
  bool replay = method == Method::ER || method == Method::DERpp || method == Method::ProDER;
  r.memory = memory_bytes(ctx.buffer,
                          method == Method::ProDER ? static_cast<int>(ctx.bank.size()) : 0);
  if (!replay) r.memory = MemoryAccounting{};
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string result_filename(int scenario, Method method, std::uint64_t seed) {
  return method_name(method) + "-s" + std::to_string(scenario) + "-seed" +
         std::to_string(seed) + ".json";
}

void write_result_json(const RunResult& r, const std::string& path) {
  json j;
  j["version"] = 1;
  j["method"] = method_name(r.method);
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["accuracy_matrix"] = r.matrix.rows;
  j["task_accuracy"] = r.task_accuracy;
  j["final_acc"] = r.final_acc;
  j["joint_acc"] = r.joint_acc;
  j["gap"] = r.gap;
  json m;
  m["entry_count"] = r.memory.entry_count;
  m["window_bytes"] = r.memory.window_bytes;
  m["label_bytes"] = r.memory.label_bytes;
  m["logits_bytes"] = r.memory.logits_bytes;
  m["buffer_bytes"] = r.memory.buffer_bytes;
  m["prototype_bytes"] = r.memory.prototype_bytes;
  m["total_bytes"] = r.memory.total_bytes;
  m["total_kib"] = r.memory.total_kib;
  j["memory"] = m;
  j["wall_seconds"] = r.wall_seconds;
  j["dataset_hash"] = r.dataset_hash;
  j["config"] = json::parse(r.config_echo);

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("results: cannot open " + tmp + " for write");
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("results: write failed for " + tmp);
  }
  fs::rename(tmp, path);  // readers never see a partial file
}

RunResult read_result_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("results: cannot open " + path);
  json j;
  f >> j;
  RunResult r;
  r.method = method_from_name(j.at("method").get<std::string>());
  r.scenario = j.at("scenario").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.matrix.rows = j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
  r.task_accuracy = j.at("task_accuracy").get<std::vector<double>>();
  r.final_acc = j.at("final_acc").get<double>();
  r.joint_acc = j.at("joint_acc").get<double>();
  r.gap = j.at("gap").get<double>();
  const json& m = j.at("memory");
  r.memory.entry_count = m.at("entry_count").get<std::size_t>();
  r.memory.window_bytes = m.at("window_bytes").get<std::size_t>();
  r.memory.label_bytes = m.at("label_bytes").get<std::size_t>();
  r.memory.logits_bytes = m.at("logits_bytes").get<std::size_t>();
  r.memory.buffer_bytes = m.at("buffer_bytes").get<std::size_t>();
  r.memory.prototype_bytes = m.at("prototype_bytes").get<std::size_t>();
  r.memory.total_bytes = m.at("total_bytes").get<std::size_t>();
  r.memory.total_kib = m.at("total_kib").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.dataset_hash = j.at("dataset_hash").get<std::string>();
  r.config_echo = j.at("config").dump(2);
  return r;
}

void run_all(const RunConfig& cfg) {
  cfg.validate();
  Dataset data = prepare_dataset(cfg);
  fs::create_directories(cfg.out_dir);

  bool wants_joint =
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::Joint) != cfg.methods.end();
  bool needs_joint = cfg.methods.size() > (wants_joint ? 1u : 0u);

  struct Group {
    int scenario;
    std::uint64_t seed;
  };
  std::vector<Group> groups;
  for (int s : cfg.scenarios)
    for (std::uint64_t seed : cfg.seeds) groups.push_back({s, seed});

  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::size_t next = 0;
  std::mutex next_mutex;

  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next >= groups.size()) return;
        i = next++;
      }
      try {
        const Group& g = groups[i];
        std::string joint_path =
            (fs::path(cfg.out_dir) / result_filename(g.scenario, Method::Joint, g.seed))
                .string();
        double joint_acc = 0.0;
        bool have_joint = false;
        if (fs::exists(joint_path)) {
          RunResult cached = read_result_json(joint_path);
          if (cached.dataset_hash == data.hash) {
            joint_acc = cached.final_acc;
            have_joint = true;
          }
        }
        if (!have_joint) {
          if (!wants_joint && needs_joint)
            throw std::runtime_error(
                "run: no cached Joint baseline for scenario " +
                std::to_string(g.scenario) + " seed " + std::to_string(g.seed) +
                "; include method 'joint' (gap needs the paired Joint run)");
          if (wants_joint || needs_joint) {
            RunResult jr = run_cell(data, cfg, g.scenario, Method::Joint, g.seed, 0.0);
            write_result_json(jr, joint_path);
            joint_acc = jr.final_acc;
            have_joint = true;
          }
        }
        for (Method m : cfg.methods) {
          if (m == Method::Joint) continue;  // handled above
          std::string path =
              (fs::path(cfg.out_dir) / result_filename(g.scenario, m, g.seed)).string();
          if (fs::exists(path)) {
            // interrupted runs restart where they left off; a cached cell is
            // trusted only if it came from this exact dataset and config
            RunResult cached = read_result_json(path);
            if (cached.dataset_hash == data.hash &&
                cached.config_echo == run_config_to_json(cfg))
              continue;
          }
          RunResult r = run_cell(data, cfg, g.scenario, m, g.seed, joint_acc);
          write_result_json(r, path);
        }
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  unsigned n_workers = cfg.workers > 0
                           ? static_cast<unsigned>(cfg.workers)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, groups.size());
  std::vector<std::thread> threads;
  for (unsigned i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  write_report(cfg.out_dir);
}

void write_report(const std::string& results_dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  if (files.empty()) throw std::runtime_error("report: no result files in " + results_dir);
  std::sort(files.begin(), files.end());

  std::vector<RunResult> results;
  for (const auto& f : files) results.push_back(read_result_json(f));

  // all results must come from one dataset and one strategy setup
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].dataset_hash != results[0].dataset_hash)
      throw std::runtime_error("report: dataset mismatch between " + files[0] + " and " +
                               files[i]);
    json a = json::parse(results[0].config_echo);
    json b = json::parse(results[i].config_echo);
    if (a.value("strategy", json::object()) != b.value("strategy", json::object()) ||
        a.value("dataset", json::object()) != b.value("dataset", json::object()))
      throw std::runtime_error("report: config mismatch between " + files[0] + " and " +
                               files[i]);
  }

  // (scenario, method) -> per-seed results
  std::map<std::pair<int, Method>, std::vector<const RunResult*>> cells;
  std::set<int> scenarios;
  for (const auto& r : results) {
    cells[{r.scenario, r.method}].push_back(&r);
    scenarios.insert(r.scenario);
  }
  for (auto& [key, rs] : cells)
    std::sort(rs.begin(), rs.end(),
              [](const RunResult* a, const RunResult* b) { return a->seed < b->seed; });

  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };

  // summary grid
  {
    std::ofstream f(fs::path(results_dir) / "summary.csv");
    f << "scenario,method,seeds,acc_mean,gap_mean,best\n";
    for (int s : scenarios) {
      double best_acc = -1.0;
      for (Method m : all_methods()) {
        auto it = cells.find({s, m});
        if (it == cells.end()) continue;
        double acc = 0.0;
        for (const auto* r : it->second) acc += r->final_acc;
        best_acc = std::max(best_acc, acc / static_cast<double>(it->second.size()));
      }
      for (Method m : all_methods()) {
        auto it = cells.find({s, m});
        if (it == cells.end()) continue;
        double acc = 0.0, gap = 0.0;
        for (const auto* r : it->second) {
          acc += r->final_acc;
          gap += r->gap;
        }
        std::size_t n = it->second.size();
        acc /= static_cast<double>(n);
        gap /= static_cast<double>(n);
        f << s << ',' << method_name(m) << ',' << n << ',' << fmt(acc) << ','
          << fmt(gap) << ',' << (acc == best_acc ? "yes" : "no") << '\n';
      }
    }
  }

  // per-task accuracy curves, one file per scenario, one column per method
  for (int s : scenarios) {
    std::vector<Method> present;
    std::size_t n_tasks = 0;
    for (Method m : all_methods()) {
      auto it = cells.find({s, m});
      if (it == cells.end()) continue;
      present.push_back(m);
      n_tasks = std::max(n_tasks, it->second[0]->task_accuracy.size());
    }
    std::ofstream f(fs::path(results_dir) / ("curves-s" + std::to_string(s) + ".csv"));
    f << "task";
    for (Method m : present) f << ',' << method_name(m);
    f << '\n';
    for (std::size_t t = 0; t < n_tasks; ++t) {
      f << (t + 1);
      for (Method m : present) {
        const auto& rs = cells[{s, m}];
        double v = 0.0;
        for (const auto* r : rs)
          v += t < r->task_accuracy.size() ? r->task_accuracy[t] : r->task_accuracy.back();
        f << ',' << fmt(v / static_cast<double>(rs.size()));
      }
      f << '\n';
    }
  }
}

}  // namespace gridcl
