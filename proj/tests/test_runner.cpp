#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridcl/runner.hpp"
#include "gridcl/trainer.hpp"

using namespace gridcl;
namespace fs = std::filesystem;

namespace {

// small but real training setup: full window schema, narrow recurrent state
struct Fixture {
  DatasetSplit split;
  ScenarioPlan plan;
  TaskStreams streams;

  explicit Fixture(int scenario = 1, int rows_per_cell = 36) {
    SyntheticConfig cfg;
    cfg.rows_per_cell = rows_per_cell;
    split = make_split(generate_synthetic(cfg), 0.8, 5);
    plan = scenario_plan(scenario);
    streams = build_scenario(split, plan);
  }

  std::vector<StreamItem> items(int task) const {
    std::vector<StreamItem> out;
    for (std::size_t i = 0; i < streams[task].size(); ++i) {
      const TimeWindow& w = split.train[streams[task][i]];
      out.push_back({&w, window_label(w, plan), static_cast<int>(i)});
    }
    return out;
  }
};

TrainContext make_ctx(Method method, std::uint64_t seed, int classes, int epochs = 1) {
  Rng rng(derive_seed(seed, "model"));
  ModelF m(kNumFeatures, 6, 0.3, rng);
  m.expand_head(classes, rng);
  StrategyConfig cfg;
  cfg.method = method;
  cfg.epochs = epochs;
  TrainContext ctx(std::move(m), cfg, seed);
  return ctx;
}

std::vector<float> flat_params(ModelF& m) {
  std::vector<float> out;
  for (auto& p : m.params()) out.insert(out.end(), p.v().begin(), p.v().end());
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("training is deterministic for a fixed seed") {
  Fixture fx(4, 24);
  auto run = [&](std::uint64_t seed) {
    auto ctx = make_ctx(Method::FineTuning, seed, 2);
    train_task(ctx, fx.items(0), 0);
    return flat_params(ctx.model);
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("training reduces loss on the task") {
  Fixture fx(4, 24);
  auto ctx = make_ctx(Method::FineTuning, 3, 2, 4);
  auto items = fx.items(0);
  std::vector<const TimeWindow*> ws;
  std::vector<int> labels;
  for (const auto& it : items) {
    ws.push_back(it.window);
    labels.push_back(it.label);
  }
  auto batch = make_batch(ws);
  auto loss_now = [&] {
    ctx.model.set_train_mode(false);
    auto out = ctx.model.forward(nullptr, batch, nullptr);
    return cross_entropy<float>(nullptr, out.logits, labels).item();
  };
  float before = loss_now();
  train_task(ctx, items, 0);
  CHECK(loss_now() < before);
  CHECK(!ctx.model.train_mode());  // eval mode restored
}

TEST_CASE("uniform buffer update balances classes within capacity") {
  Fixture fx(1, 36);
  auto ctx = make_ctx(Method::ER, 11, 3);
  ctx.buffer.capacity = 20;

  auto items0 = fx.items(0);  // classes 0,1,2
  update_uniform(ctx.buffer, items0, ctx.model, false, 0, ctx.buffer_rng);
  CHECK(ctx.buffer.entries.size() == 20);
  CHECK(ctx.buffer.present_labels() == std::vector<int>{0, 1, 2});
  auto counts = ctx.buffer.class_counts();
  CHECK(counts == std::vector<int>{7, 7, 6});
  for (const auto& e : ctx.buffer.entries) CHECK(e.logits.empty());

  // after task 1 five classes share the same capacity
  ctx.model.expand_head(2, ctx.buffer_rng);
  auto items1 = fx.items(1);  // classes 3,4
  update_uniform(ctx.buffer, items1, ctx.model, false, 1, ctx.buffer_rng);
  CHECK(ctx.buffer.entries.size() == 20);
  CHECK(ctx.buffer.present_labels() == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(ctx.buffer.class_counts() == std::vector<int>{4, 4, 4, 4, 4});

  // stored windows really belong to their class
  for (const auto& e : ctx.buffer.entries) CHECK(e.window.fault_type == e.label);
}

TEST_CASE("uniform update with logits snapshots the current head") {
  Fixture fx(1, 24);
  auto ctx = make_ctx(Method::DERpp, 13, 3);
  ctx.buffer.capacity = 9;
  update_uniform(ctx.buffer, fx.items(0), ctx.model, true, 0, ctx.buffer_rng);
  REQUIRE(ctx.buffer.entries.size() == 9);
  for (const auto& e : ctx.buffer.entries) {
    REQUIRE(e.logits.size() == 3);
    // logit snapshot must equal a fresh eval forward on the same window
    std::vector<const TimeWindow*> one{&e.window};
    auto out = ctx.model.forward(nullptr, make_batch(one), nullptr);
    for (int j = 0; j < 3; ++j)
      CHECK(e.logits[j] == doctest::Approx(out.logits.v()[j]).epsilon(1e-6));
  }
}

TEST_CASE("prototype-aware update needs prototypes and records distances") {
  Fixture fx(1, 36);
  auto ctx = make_ctx(Method::ProDER, 17, 3);
  ctx.buffer.capacity = 12;
  auto items = fx.items(0);
  CHECK_THROWS_AS(
      update_prototype_aware(ctx.buffer, items, ctx.model, ctx.bank, 0.45, 0),
      std::runtime_error);

  refresh_prototypes(ctx.bank, ctx.model, items, ctx.buffer, 0);
  CHECK(ctx.bank.size() == 3);
  update_prototype_aware(ctx.buffer, items, ctx.model, ctx.bank, 0.45, 0);
  CHECK(ctx.buffer.entries.size() == 12);
  CHECK(ctx.buffer.class_counts() == std::vector<int>{4, 4, 4});
  for (const auto& e : ctx.buffer.entries) {
    CHECK(e.logits.size() == 3);
    CHECK(e.sel_distance >= 0.0f);
  }
}

TEST_CASE("prototypes are feature centroids of stream plus buffer") {
  Fixture fx(1, 24);
  auto ctx = make_ctx(Method::ProDER, 19, 3);
  auto items = fx.items(0);
  refresh_prototypes(ctx.bank, ctx.model, items, ctx.buffer, 2);
  for (auto& [cls, proto] : ctx.bank) {
    std::vector<const TimeWindow*> ws;
    for (const auto& it : items)
      if (it.label == cls) ws.push_back(it.window);
    REQUIRE(!ws.empty());
    auto feats = features_of(ctx.model, ws);
    int d = ctx.model.feature_dim();
    REQUIRE(proto.centroid.size() == static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < ws.size(); ++i) mean += feats[i * d + j];
      mean /= ws.size();
      CHECK(proto.centroid[j] == doctest::Approx(mean).epsilon(1e-4));
    }
    CHECK(proto.count == static_cast<int>(ws.size()));
    CHECK(!proto.stale);
    CHECK(proto.last_refresh_epoch == 2);
  }
}

TEST_CASE("fisher importance is nonnegative and anchored at current weights") {
  Fixture fx(4, 24);
  auto ctx = make_ctx(Method::EWC, 23, 2);
  auto st = fisher_update(ctx.model, fx.items(0), 16, ctx.fisher_rng);
  auto params = ctx.model.params();
  REQUIRE(st.importance.size() == params.size());
  double total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(st.importance[i].size() == params[i].size());
    CHECK(st.anchor[i] == std::vector<float>(params[i].v().begin(), params[i].v().end()));
    for (float f : st.importance[i]) {
      CHECK(f >= 0.0f);
      total += f;
    }
  }
  CHECK(total > 0.0);
}

TEST_CASE("run config json round trip and effective strategy") {
  const char* path = "cfg.json";
  {
    std::ofstream f(path);
    f << R"({
      "version": 1,
      "dataset": {"rows_per_cell": 48, "seed": 3},
      "run": {"scenarios": [1, 4], "methods": ["all"], "seeds": [1, 2, 3]},
      "strategy": {"epochs": 5, "proder_alpha": 2.0}
    })";
  }
  auto cfg = load_run_config(path);
  std::remove(path);
  CHECK(cfg.synthetic.rows_per_cell == 48);
  CHECK(cfg.scenarios == std::vector<int>{1, 4});
  CHECK(cfg.methods.size() == 8);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.strategy.epochs == 5);

  auto s1 = effective_strategy(cfg, 1, Method::ProDER);
  CHECK(s1.proder_beta == doctest::Approx(5.0));
  CHECK(s1.proder_rho == doctest::Approx(0.45));
  auto s2 = effective_strategy(cfg, 2, Method::ProDER);
  CHECK(s2.proder_beta == doctest::Approx(7.2));
  CHECK(s2.proder_rho == doctest::Approx(0.45));
  auto s4 = effective_strategy(cfg, 4, Method::ProDER);
  CHECK(s4.proder_beta == doctest::Approx(7.2));
  CHECK(s4.proder_rho == doctest::Approx(0.50));

  cfg.proder_beta_override = 9.0;
  CHECK(effective_strategy(cfg, 1, Method::ProDER).proder_beta == doctest::Approx(9.0));

  cfg.fast = true;
  CHECK(effective_strategy(cfg, 1, Method::ER).epochs == cfg.strategy.epochs);
  auto syn = effective_synthetic(cfg);
  CHECK(syn.rows_per_cell % 12 == 0);
  CHECK(syn.rows_per_cell < 48);
}

TEST_CASE("config validation catches impossible grids") {
  RunConfig cfg;
  cfg.scenarios = {9};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.seeds = {};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.train_fraction = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("result json round trip") {
  RunResult r;
  r.method = Method::DERpp;
  r.scenario = 2;
  r.seed = 5;
  r.matrix.rows = {{0.5}, {0.25, 0.75}};
  r.task_accuracy = {0.5, 0.6};
  r.final_acc = 0.6;
  r.joint_acc = 0.9;
  r.gap = 0.3;
  r.memory.entry_count = 363;
  r.memory.buffer_bytes = 907500;
  r.memory.total_bytes = 907500;
  r.wall_seconds = 1.5;
  r.dataset_hash = "abc123";
  r.config_echo = "{}";
  const std::string path = "res.json";
  write_result_json(r, path);
  auto back = read_result_json(path);
  std::remove(path.c_str());
  CHECK(back.method == Method::DERpp);
  CHECK(back.scenario == 2);
  CHECK(back.seed == 5);
  CHECK(back.matrix.rows == r.matrix.rows);
  CHECK(back.task_accuracy == r.task_accuracy);
  CHECK(back.final_acc == doctest::Approx(0.6));
  CHECK(back.gap == doctest::Approx(0.3));
  CHECK(back.memory.buffer_bytes == 907500);
  CHECK(back.dataset_hash == "abc123");

  CHECK(result_filename(2, Method::DERpp, 5) == "derpp-s2-seed5.json");
}

TEST_CASE("a small full run is reproducible byte for byte") {
  RunConfig cfg;
  cfg.synthetic.rows_per_cell = 24;
  cfg.scenarios = {4};
  cfg.methods = {Method::Joint, Method::FineTuning};
  cfg.seeds = {1};
  cfg.strategy.epochs = 1;
  cfg.workers = 1;

  auto run_into = [&](const std::string& dir) {
    fs::remove_all(dir);
    cfg.out_dir = dir;
    run_all(cfg);
  };
  run_into("run_a");
  run_into("run_b");

  for (const char* name : {"summary.csv", "curves-s4.csv"}) {
    auto a = slurp(std::string("run_a/") + name);
    auto b = slurp(std::string("run_b/") + name);
    CHECK(!a.empty());
    CHECK(a == b);
  }
  auto ra = read_result_json("run_a/" + result_filename(4, Method::FineTuning, 1));
  auto rb = read_result_json("run_b/" + result_filename(4, Method::FineTuning, 1));
  CHECK(ra.matrix.rows == rb.matrix.rows);
  CHECK(ra.final_acc == rb.final_acc);
  CHECK(ra.gap == doctest::Approx(ra.joint_acc - ra.final_acc));
  REQUIRE(ra.matrix.rows.size() == 3);
  CHECK(ra.matrix.rows[2].size() == 3);

  // the aggregate means in summary.csv must equal the per-cell files
  std::ifstream sf("run_a/summary.csv");
  std::string line;
  std::getline(sf, line);  // header
  bool saw_ft = false;
  while (std::getline(sf, line)) {
    std::stringstream ss(line);
    std::string scenario, method, seeds, acc, gap, best;
    std::getline(ss, scenario, ',');
    std::getline(ss, method, ',');
    std::getline(ss, seeds, ',');
    std::getline(ss, acc, ',');
    std::getline(ss, gap, ',');
    if (method == "finetune") {
      saw_ft = true;
      CHECK(std::stod(acc) == doctest::Approx(ra.final_acc).epsilon(1e-6));
      CHECK(std::stod(gap) == doctest::Approx(ra.gap).epsilon(1e-6));
    }
  }
  CHECK(saw_ft);
  fs::remove_all("run_a");
  fs::remove_all("run_b");
}
