#include <benchmark/benchmark.h>

#include "gridcl/model.hpp"
#include "gridcl/ops.hpp"
#include "gridcl/strategies.hpp"
#include "gridcl/trainer.hpp"

using namespace gridcl;

static void BM_Matmul(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(1);
  TensorF a = TensorF::zeros({n, n});
  TensorF b = TensorF::zeros({n, n});
  for (auto& x : a.v()) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : b.v()) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    auto c = matmul<float>(nullptr, a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(150)->Arg(300);

static TensorF sample_batch(int b, Rng& rng) {
  TensorF batch = TensorF::zeros({b, kWindowLen, kNumFeatures});
  for (auto& x : batch.v()) x = static_cast<float>(rng.uniform(-1, 1));
  return batch;
}

static void BM_Forward(benchmark::State& state) {
  Rng rng(2);
  ModelF m(kNumFeatures, 150, 0.3, rng);
  m.expand_head(11, rng);
  auto batch = sample_batch(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    auto out = m.forward(nullptr, batch, nullptr);
    benchmark::DoNotOptimize(out.logits.data());
  }
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(4)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
  Rng rng(3);
  ModelF m(kNumFeatures, 150, 0.3, rng);
  m.expand_head(11, rng);
  m.set_train_mode(true);
  Adam<float> opt(1e-3);
  opt.attach(m.params());
  Rng drng(4);
  auto batch = sample_batch(4, rng);
  std::vector<int> labels{0, 3, 7, 10};
  for (auto _ : state) {
    Tape<float> tape;
    auto out = m.forward(&tape, batch, &drng);
    auto loss = cross_entropy(&tape, out.logits, labels);
    m.zero_grads();
    tape.backward(loss);
    opt.step();
  }
}
BENCHMARK(BM_TrainStep);

static void BM_ProderLoss(benchmark::State& state) {
  Rng rng(5);
  ProderBatch<float> b;
  b.logits = TensorF::zeros({4, 11}, true);
  b.features = TensorF::zeros({4, 300}, true);
  for (auto& x : b.logits.v()) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : b.features.v()) x = static_cast<float>(rng.uniform(-1, 1));
  b.labels = {0, 2, 5, 9};
  b.replay_begin = 2;
  b.stored_logits = {std::vector<float>(11, 0.1f), std::vector<float>(11, -0.1f)};
  PrototypeBank<float> bank;
  for (int c = 0; c < 11; ++c) {
    bank[c].centroid.resize(300);
    for (auto& x : bank[c].centroid) x = static_cast<float>(rng.uniform(-1, 1));
  }
  StrategyConfig cfg;
  for (auto _ : state) {
    Tape<float> tape;
    auto loss = proder_step_loss<float>(&tape, b, bank, cfg);
    b.logits.zero_grad();
    b.features.zero_grad();
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ProderLoss);

BENCHMARK_MAIN();
