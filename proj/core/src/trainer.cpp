#include "gridcl/trainer.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace gridcl {

Tensor<float> make_batch(const std::vector<const TimeWindow*>& windows) {
  int b = static_cast<int>(windows.size());
  if (b == 0) throw std::invalid_argument("make_batch: empty batch");
  Tensor<float> t = Tensor<float>::zeros({b, kWindowLen, kNumFeatures});
  for (int i = 0; i < b; ++i)
    std::copy_n(windows[i]->matrix.data(), kWindowLen * kNumFeatures,
                t.data() + static_cast<std::size_t>(i) * kWindowLen * kNumFeatures);
  return t;
}

std::vector<float> features_of(ModelF& model, const std::vector<const TimeWindow*>& windows,
                               int batch) {
  std::vector<float> out;
  out.reserve(windows.size() * model.feature_dim());
  for (std::size_t i = 0; i < windows.size(); i += batch) {
    std::vector<const TimeWindow*> chunk(
        windows.begin() + i,
        windows.begin() + std::min(windows.size(), i + batch));
    Tensor<float> f = model.extract_features(make_batch(chunk));
    out.insert(out.end(), f.v().begin(), f.v().end());
  }
  return out;
}

namespace {

// pool of per-class candidates: retained buffer entries first, then stream items
struct PoolItem {
  bool from_buffer;
  int index;         // into buffer.entries or stream
  int stream_index;  // tie-break order for selection
};

std::map<int, std::vector<PoolItem>> class_pools(const ReplayBuffer& buffer,
                                                 const std::vector<StreamItem>& stream) {
  std::map<int, std::vector<PoolItem>> pools;
  for (std::size_t i = 0; i < buffer.entries.size(); ++i)
    pools[buffer.entries[i].label].push_back(
        {true, static_cast<int>(i), buffer.entries[i].stream_index});
  for (std::size_t i = 0; i < stream.size(); ++i)
    pools[stream[i].label].push_back({false, static_cast<int>(i), stream[i].stream_index});
  return pools;
}

std::vector<float> capture_logits(ModelF& model, const TimeWindow& w) {
  Tensor<float> batch = make_batch({&w});
  bool was_train = model.train_mode();
  model.set_train_mode(false);
  auto out = model.forward(nullptr, batch, nullptr);
  model.set_train_mode(was_train);
  return out.logits.v();
}

}  // namespace

void update_uniform(ReplayBuffer& buffer, const std::vector<StreamItem>& stream,
                    ModelF& model, bool store_logits, int task_index, Rng& rng) {
  auto pools = class_pools(buffer, stream);
  std::vector<int> avail;
  for (auto& [cls, pool] : pools) avail.push_back(static_cast<int>(pool.size()));
  std::vector<int> targets = quota_with_availability(buffer.capacity, avail);

  std::vector<ReplayEntry> next;
  int ci = 0;
  for (auto& [cls, pool] : pools) {
    int take = targets[ci++];
    // uniform sample without replacement: partial Fisher-Yates
    std::vector<int> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = 0; i < take; ++i) {
      int j = i + static_cast<int>(rng.below(order.size() - i));
      std::swap(order[i], order[j]);
    }
    for (int i = 0; i < take; ++i) {
      const PoolItem& item = pool[order[i]];
      if (item.from_buffer) {
        next.push_back(buffer.entries[item.index]);
      } else {
        const StreamItem& s = stream[item.index];
        ReplayEntry e;
        e.window = *s.window;
        e.label = s.label;
        e.stream_index = s.stream_index;
        e.inserted_task = task_index;
        if (store_logits) e.logits = capture_logits(model, *s.window);
        next.push_back(std::move(e));
      }
    }
  }
  buffer.entries = std::move(next);
}

void update_prototype_aware(ReplayBuffer& buffer, const std::vector<StreamItem>& stream,
                            ModelF& model, const PrototypeBank<float>& bank, double rho,
                            int task_index) {
  auto pools = class_pools(buffer, stream);
  std::vector<int> avail;
  for (auto& [cls, pool] : pools) avail.push_back(static_cast<int>(pool.size()));
  std::vector<int> targets = quota_with_availability(buffer.capacity, avail);

  std::vector<ReplayEntry> next;
  int ci = 0;
  for (auto& [cls, pool] : pools) {
    int take = targets[ci++];
    auto proto_it = bank.find(cls);
    if (proto_it == bank.end())
      throw std::runtime_error("update_prototype_aware: no prototype for class " +
                               std::to_string(cls));
    std::vector<const TimeWindow*> windows;
    for (const PoolItem& item : pool)
      windows.push_back(item.from_buffer ? &buffer.entries[item.index].window
                                         : stream[item.index].window);
    std::vector<float> feats = features_of(model, windows);
    std::vector<float> dist = prototype_distances(feats, static_cast<int>(windows.size()),
                                                  proto_it->second.centroid);
    std::vector<Candidate> cands(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      cands[i] = {static_cast<int>(i), dist[i], pool[i].stream_index};
    HybridSelection sel = select_hybrid(cands, take, rho);
    for (int id : sel.chosen) {
      const PoolItem& item = pool[id];
      if (item.from_buffer) {
        ReplayEntry e = buffer.entries[item.index];
        e.sel_distance = dist[id];
        next.push_back(std::move(e));
      } else {
        const StreamItem& s = stream[item.index];
        ReplayEntry e;
        e.window = *s.window;
        e.label = s.label;
        e.stream_index = s.stream_index;
        e.inserted_task = task_index;
        e.sel_distance = dist[id];
        e.logits = capture_logits(model, *s.window);
        next.push_back(std::move(e));
      }
    }
  }
  buffer.entries = std::move(next);
}

FisherState<float> fisher_update(ModelF& model, const std::vector<StreamItem>& stream,
                                 int max_samples, Rng& rng) {
  auto params = model.params();
  FisherState<float> state;
  state.importance.resize(params.size());
  state.anchor.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.importance[i].assign(params[i].size(), 0.0f);
    state.anchor[i] = params[i].v();
  }
  std::vector<int> order(stream.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  int n = std::min<int>(max_samples, static_cast<int>(order.size()));

  bool was_train = model.train_mode();
  model.set_train_mode(false);
  for (int s = 0; s < n; ++s) {
    const StreamItem& item = stream[order[s]];
    Tape<float> tape;
    auto out = model.forward(&tape, make_batch({item.window}), nullptr);
    Tensor<float> nll = cross_entropy(&tape, out.logits, {item.label});
    model.zero_grads();
    tape.backward(nll);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad()) continue;
      const auto& g = params[i].grad();
      for (std::size_t j = 0; j < g.size(); ++j) state.importance[i][j] += g[j] * g[j];
    }
  }
  model.set_train_mode(was_train);
  model.zero_grads();
  for (auto& buf : state.importance)
    for (auto& x : buf) x /= static_cast<float>(std::max(1, n));
  return state;
}

void refresh_prototypes(PrototypeBank<float>& bank, ModelF& model,
                        const std::vector<StreamItem>& stream, const ReplayBuffer& buffer,
                        int epoch) {
  std::map<int, std::vector<const TimeWindow*>> by_class;
  for (const auto& s : stream) by_class[s.label].push_back(s.window);
  for (const auto& e : buffer.entries) by_class[e.label].push_back(&e.window);

  for (auto& [cls, proto] : bank)
    if (by_class.find(cls) == by_class.end()) proto.stale = true;

  int d = model.feature_dim();
  for (auto& [cls, windows] : by_class) {
    std::vector<float> feats = features_of(model, windows);
    Prototype<float>& p = bank[cls];
    p.centroid.assign(d, 0.0f);
    for (std::size_t i = 0; i < windows.size(); ++i)
      for (int j = 0; j < d; ++j) p.centroid[j] += feats[i * d + j];
    for (int j = 0; j < d; ++j) p.centroid[j] /= static_cast<float>(windows.size());
    p.count = static_cast<int>(windows.size());
    p.stale = false;
    p.last_refresh_epoch = epoch;
  }
}

namespace {

bool uses_replay(Method m) {
  return m == Method::ER || m == Method::DERpp || m == Method::ProDER;
}

}  // namespace

void train_task(TrainContext& ctx, const std::vector<StreamItem>& items, int task_index) {
  if (items.empty()) throw std::runtime_error("train_task: empty task stream");
  const StrategyConfig& cfg = ctx.cfg;
  cfg.validate();
  ctx.opt.refresh(ctx.model.params());

  int replay_count = 0;
  if (uses_replay(cfg.method) && !ctx.buffer.entries.empty())
    replay_count = std::min(
        cfg.batch_size - 1,
        static_cast<int>(std::lround(cfg.replay_ratio * cfg.batch_size)));
  int task_chunk = cfg.batch_size - replay_count;

  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.method == Method::ProDER)
      refresh_prototypes(ctx.bank, ctx.model, items, ctx.buffer, epoch);
    ctx.shuffle_rng.shuffle(order);
    ctx.model.set_train_mode(true);
    ctx.model.set_in_epoch(true);

    for (std::size_t pos = 0; pos < order.size(); pos += task_chunk) {
      std::size_t end = std::min(order.size(), pos + task_chunk);
      std::vector<const TimeWindow*> windows;
      std::vector<int> labels;
      for (std::size_t i = pos; i < end; ++i) {
        windows.push_back(items[order[i]].window);
        labels.push_back(items[order[i]].label);
      }
      int task_rows = static_cast<int>(windows.size());

      std::vector<std::vector<float>> stored;
      if (replay_count > 0) {
        // uniform draws without replacement within the step
        std::vector<int> picks;
        int nbuf = static_cast<int>(ctx.buffer.entries.size());
        int want = std::min(replay_count, nbuf);
        while (static_cast<int>(picks.size()) < want) {
          int j = static_cast<int>(ctx.replay_rng.below(nbuf));
          if (std::find(picks.begin(), picks.end(), j) == picks.end()) picks.push_back(j);
        }
        for (int j : picks) {
          const ReplayEntry& e = ctx.buffer.entries[j];
          windows.push_back(&e.window);
          labels.push_back(e.label);
          stored.push_back(e.logits);
        }
      }

      Tape<float> tape;
      auto out = ctx.model.forward(&tape, make_batch(windows), &ctx.dropout_rng);
      Tensor<float> loss;
      switch (cfg.method) {
        case Method::Joint:
        case Method::Cumulative:
        case Method::FineTuning:
        case Method::ER:
          loss = cross_entropy(&tape, out.logits, labels);
          break;
        case Method::EWC:
          loss = cross_entropy(&tape, out.logits, labels);
          if (!ctx.fishers.empty())
            loss = add(&tape, loss,
                       loss_ewc(&tape, ctx.model.params(), ctx.fishers,
                                static_cast<float>(cfg.ewc_lambda)));
          break;
        case Method::LwF: {
          loss = cross_entropy(&tape, out.logits, labels);
          if (ctx.teacher) {
            ctx.teacher->set_train_mode(false);
            Tensor<float> tlog =
                ctx.teacher->forward(nullptr, make_batch(windows), nullptr).logits;
            loss = add(&tape, loss,
                       loss_lwf(&tape, out.logits, tlog,
                                static_cast<float>(cfg.lwf_lambda)));
          }
          break;
        }
        case Method::DERpp: {
          std::vector<int> task_labels(labels.begin(), labels.begin() + task_rows);
          Tensor<float> task_logits =
              task_rows == out.logits.rows()
                  ? out.logits
                  : slice_rows(&tape, out.logits, 0, task_rows);
          loss = cross_entropy(&tape, task_logits, task_labels);
          if (!stored.empty()) {
            Tensor<float> rep_logits =
                slice_rows(&tape, out.logits, task_rows, out.logits.rows());
            std::vector<int> rep_labels(labels.begin() + task_rows, labels.end());
            loss = add(&tape, loss,
                       loss_derpp(&tape, rep_logits, stored, rep_labels,
                                  static_cast<float>(cfg.derpp_alpha),
                                  static_cast<float>(cfg.derpp_beta)));
          }
          break;
        }
        case Method::ProDER: {
          ProderBatch<float> b;
          b.logits = out.logits;
          // SPA terms measure against eval-mode centroids, so the features
          // they see must not carry the dropout mask
          b.features = ctx.model.clean_features(&tape, make_batch(windows));
          b.labels = labels;
          b.replay_begin = task_rows;
          b.stored_logits = stored;
          loss = proder_step_loss(&tape, b, ctx.bank, cfg);
          break;
        }
      }
      ctx.model.zero_grads();
      tape.backward(loss);
      ctx.opt.step();
    }
    ctx.model.set_in_epoch(false);
  }
  ctx.model.set_train_mode(false);
}

}  // namespace gridcl
