#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gridcl/rng.hpp"
#include "gridcl/strategies.hpp"

using namespace gridcl;

TEST_CASE("method names round-trip") {
  for (Method m : all_methods()) CHECK(method_from_name(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_name("sgd"), std::invalid_argument);
  CHECK(all_methods().size() == 8);
}

TEST_CASE("config validation rejects bad hyperparameters") {
  StrategyConfig cfg;
  cfg.validate();  // defaults are legal
  cfg.replay_ratio = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.kd_temperature = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.proder_beta = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ewc penalty is zero at the anchor and quadratic away from it") {
  auto p = TensorD::from({2, 2}, {1, 2, 3, 4}, true);
  FisherState<double> st;
  st.importance = {{0.5, 1.0, 2.0, 4.0}};
  st.anchor = {{1, 2, 3, 4}};
  CHECK(loss_ewc<double>(nullptr, {p}, {st}, 10.0).item() == doctest::Approx(0.0));

  p.v()[1] = 2.5;  // delta 0.5 on the F=1.0 coordinate
  double expect = 10.0 / 2 * (1.0 * 0.25);
  CHECK(loss_ewc<double>(nullptr, {p}, {st}, 10.0).item() == doctest::Approx(expect));

  // anchored prefix narrower than the grown parameter: extra rows are free
  auto grown = TensorD::from({3, 2}, {1, 2.5, 3, 4, 99, 99}, true);
  CHECK(loss_ewc<double>(nullptr, {grown}, {st}, 10.0).item() == doctest::Approx(expect));

  // a grown 1xC bias extends along columns instead
  FisherState<double> bias_st;
  bias_st.importance = {{1.0, 1.0}};
  bias_st.anchor = {{0.5, 0.5}};
  auto grown_bias = TensorD::from({1, 5}, {0.5, 1.5, 9, 9, 9}, true);
  CHECK(loss_ewc<double>(nullptr, {grown_bias}, {bias_st}, 2.0).item() ==
        doctest::Approx(1.0));

  // two anchors accumulate
  CHECK(loss_ewc<double>(nullptr, {p}, {st, st}, 10.0).item() ==
        doctest::Approx(2 * expect));

  // unanchored parameter (empty fisher) contributes nothing
  FisherState<double> empty;
  empty.importance = {{}};
  empty.anchor = {{}};
  CHECK(loss_ewc<double>(nullptr, {p}, {empty}, 10.0).item() == doctest::Approx(0.0));
}

TEST_CASE("lwf distillation is zero when student matches teacher") {
  auto teacher = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto same = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  CHECK(loss_lwf<double>(nullptr, same, teacher, 1.0).item() == doctest::Approx(0.0));

  // grown head: only the teacher-width prefix is compared
  auto grown = TensorD::from({2, 5}, {1, 2, 3, 9, 9, 4, 5, 6, 9, 9}, true);
  CHECK(loss_lwf<double>(nullptr, grown, teacher, 1.0).item() == doctest::Approx(0.0));

  auto off = TensorD::from({2, 3}, {2, 2, 3, 4, 5, 6}, true);
  CHECK(loss_lwf<double>(nullptr, off, teacher, 3.0).item() ==
        doctest::Approx(3.0 * 1.0 / 6.0));
}

TEST_CASE("derpp loss at its fixed point reduces to the ce term") {
  auto logits = TensorD::from({2, 3}, {1, 2, 3, 3, 2, 1}, true);
  std::vector<std::vector<double>> stored{{1, 2, 3}, {3, 2, 1}};
  std::vector<int> labels{2, 0};
  double ce = cross_entropy<double>(nullptr, logits, labels).item();
  double got = loss_derpp<double>(nullptr, logits, stored, labels, 2.0, 1.0).item();
  CHECK(got == doctest::Approx(ce));

  // alpha scales the quadratic term
  std::vector<std::vector<double>> off{{1, 2, 4}, {3, 2, 1}};
  double base = loss_derpp<double>(nullptr, logits, off, labels, 1.0, 0.0).item();
  double twice = loss_derpp<double>(nullptr, logits, off, labels, 2.0, 0.0).item();
  CHECK(twice == doctest::Approx(2 * base));
  CHECK(base == doctest::Approx(0.5 * (1.0 / 3.0)));  // mean over 2 rows of mse 1/3, 0

  std::vector<std::vector<double>> missing{{1, 2, 3}, {}};
  CHECK_THROWS_AS(loss_derpp<double>(nullptr, logits, missing, labels, 2.0, 1.0),
                  std::runtime_error);
}

TEST_CASE("tempered distillation is zero iff distributions match") {
  auto logits = TensorD::from({1, 4}, {0.5, 1.5, -1.0, 2.0}, true);
  std::vector<std::vector<double>> same{{0.5, 1.5, -1.0, 2.0}};
  CHECK(loss_proder_distill<double>(nullptr, logits, 0, same, 2.0).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  // logit shift leaves softmax unchanged
  std::vector<std::vector<double>> shifted{{10.5, 11.5, 9.0, 12.0}};
  CHECK(loss_proder_distill<double>(nullptr, logits, 0, shifted, 2.0).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  std::vector<std::vector<double>> off{{2.0, 1.5, -1.0, 0.5}};
  CHECK(loss_proder_distill<double>(nullptr, logits, 0, off, 2.0).item() > 0.01);
}

namespace {

PrototypeBank<double> bank_at(const std::vector<std::pair<int, std::vector<double>>>& cs) {
  PrototypeBank<double> bank;
  for (const auto& [cls, c] : cs) {
    bank[cls].centroid = c;
    bank[cls].count = 1;
  }
  return bank;
}

}  // namespace

TEST_CASE("attraction is zero on centroids and grows quadratically") {
  auto bank = bank_at({{0, {1, 0}}, {1, {0, 1}}});
  auto feats = TensorD::from({2, 2}, {1, 0, 0, 1}, true);
  CHECK(loss_attraction<double>(nullptr, feats, {0, 1}, bank).item() ==
        doctest::Approx(0.0));
  auto moved = TensorD::from({2, 2}, {1, 2, 0, 1}, true);
  CHECK(loss_attraction<double>(nullptr, moved, {0, 1}, bank).item() ==
        doctest::Approx(4.0 / 2));
  CHECK_THROWS_AS(loss_attraction<double>(nullptr, feats, {0, 5}, bank),
                  std::runtime_error);
}

TEST_CASE("repulsion matches the pairwise formula and decays with spread") {
  // two absent classes: pure constant evaluation, exp(-distance)
  auto feats = TensorD::from({1, 2}, {0, 0}, true);
  auto bank = bank_at({{0, {0, 0}}, {1, {3, 4}}});
  double got = loss_repulsion<double>(nullptr, feats, {5}, bank).item();
  // classes {0,1} absent from batch (label 5 has no bank entry): wait, label 5 missing
  CHECK(got == doctest::Approx(std::exp(-5.0)));

  // coincident prototypes: maximal penalty 1
  auto bank2 = bank_at({{0, {1, 1}}, {1, {1, 1}}});
  CHECK(loss_repulsion<double>(nullptr, feats, {7}, bank2).item() == doctest::Approx(1.0));

  // single class: no pairs, zero loss
  auto bank3 = bank_at({{0, {1, 1}}});
  CHECK(loss_repulsion<double>(nullptr, feats, {0}, bank3).item() == doctest::Approx(0.0));

  // three classes, known geometry: ordered-pair average over C(C-1)=6 with
  // both orders counted equals the unordered mean
  auto bank4 = bank_at({{0, {0, 0}}, {1, {1, 0}}, {2, {0, 2}}});
  double expect = (std::exp(-1.0) + std::exp(-2.0) + std::exp(-std::sqrt(5.0))) * 2 / 6;
  CHECK(loss_repulsion<double>(nullptr, feats, {9}, bank4).item() ==
        doctest::Approx(expect));

  // batch-present class uses batch-mean features, not the stored centroid
  auto batch_feats = TensorD::from({2, 2}, {2, 0, 4, 0}, true);  // mean (3, 0)
  auto bank5 = bank_at({{0, {-100, -100}}, {1, {0, 0}}});
  double present = loss_repulsion<double>(nullptr, batch_feats, {0, 0}, bank5).item();
  CHECK(present == doctest::Approx(std::exp(-3.0)));
}

TEST_CASE("repulsion gradients push prototypes apart") {
  auto feats = TensorD::from({2, 2}, {1.0, 0.5, 0.5, 1.0}, true);
  auto bank = bank_at({{0, {0, 0}}, {1, {2, 2}}});
  Tape<double> tape;
  auto loss = loss_repulsion<double>(&tape, feats, {0, 1}, bank);
  feats.zero_grad();
  tape.backward(loss);
  // row 0 sits at (1, 0.5), row 1 at (0.5, 1): the ascent direction points
  // toward the other prototype, so descent pushes them apart
  CHECK(feats.grad()[0] < 0.0);
  CHECK(feats.grad()[1] > 0.0);
  CHECK(feats.grad()[2] > 0.0);
  CHECK(feats.grad()[3] < 0.0);
}

TEST_CASE("proder step loss with zero weights collapses to cross-entropy") {
  Rng rng(3);
  ProderBatch<double> b;
  b.logits = TensorD::from({2, 3}, {1, 0, -1, 0.5, 0.5, 2}, true);
  b.features = TensorD::from({2, 2}, {1, 0, 0, 1}, true);
  b.labels = {0, 2};
  b.replay_begin = 1;
  b.stored_logits = {{0.4, 0.4, 2.1}};
  auto bank = bank_at({{0, {0.9, 0.1}}, {2, {0.1, 0.9}}});

  StrategyConfig cfg;
  cfg.proder_alpha = 0;
  cfg.proder_beta = 0;
  cfg.proder_gamma = 0;
  double plain = cross_entropy<double>(nullptr, b.logits, b.labels).item();
  CHECK(proder_step_loss<double>(nullptr, b, bank, cfg).item() == doctest::Approx(plain));

  // each term strictly adds when enabled with off-target inputs
  cfg.proder_alpha = 2;
  double with_kd = proder_step_loss<double>(nullptr, b, bank, cfg).item();
  CHECK(with_kd > plain);
  cfg.proder_beta = 5;
  double with_att = proder_step_loss<double>(nullptr, b, bank, cfg).item();
  CHECK(with_att > with_kd);
  cfg.proder_gamma = 0.5;
  CHECK(proder_step_loss<double>(nullptr, b, bank, cfg).item() > with_att);
}

TEST_CASE("proder loss is finite-difference consistent end to end") {
  Rng rng(8);
  ProderBatch<double> b;
  b.logits = TensorD::zeros({3, 4}, true);
  b.features = TensorD::zeros({3, 2}, true);
  for (auto& x : b.logits.v()) x = rng.uniform(-1, 1);
  for (auto& x : b.features.v()) x = rng.uniform(-1, 1);
  b.labels = {0, 1, 3};
  b.replay_begin = 2;
  b.stored_logits = {{0.3, -0.2, 0.8}};
  auto bank = bank_at({{0, {0.5, 0.5}}, {1, {-0.5, 0.5}}, {3, {0, -0.7}}});
  StrategyConfig cfg;  // scenario-1 weights

  auto loss_of = [&](Tape<double>* t) { return proder_step_loss<double>(t, b, bank, cfg); };
  Tape<double> tape;
  auto loss = loss_of(&tape);
  b.logits.zero_grad();
  b.features.zero_grad();
  tape.backward(loss);

  const double h = 1e-5;
  for (auto* t : {&b.logits, &b.features}) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      double saved = t->v()[i];
      t->v()[i] = saved + h;
      double up = loss_of(nullptr).item();
      t->v()[i] = saved - h;
      double down = loss_of(nullptr).item();
      t->v()[i] = saved;
      double fd = (up - down) / (2 * h);
      CHECK(std::abs(t->grad()[i] - fd) <=
            1e-4 * std::max({std::abs(fd), std::abs(t->grad()[i]), 1e-2}));
    }
  }
}
