#pragma once

#include <optional>
#include <vector>

#include "gridcl/data.hpp"
#include "gridcl/model.hpp"
#include "gridcl/replay.hpp"
#include "gridcl/strategies.hpp"

namespace gridcl {

using ModelF = BiGruClassifier<float>;

// One labelled training item as the trainer sees it.
struct StreamItem {
  const TimeWindow* window;
  int label;
  int stream_index;
};

// B x 12 x 51 batch tensor from windows
Tensor<float> make_batch(const std::vector<const TimeWindow*>& windows);

// eval-mode pooled features, row-major rows x feature_dim
std::vector<float> features_of(ModelF& model, const std::vector<const TimeWindow*>& windows,
                               int batch = 64);

// Mutable training state for one (scenario, method, seed) cell.
struct TrainContext {
  ModelF model;
  Adam<float> opt;
  StrategyConfig cfg;
  ReplayBuffer buffer;
  PrototypeBank<float> bank;
  std::vector<FisherState<float>> fishers;
  std::optional<ModelF> teacher;
  Rng shuffle_rng, dropout_rng, replay_rng, buffer_rng, fisher_rng;

  TrainContext(ModelF m, const StrategyConfig& c, std::uint64_t seed)
      : model(std::move(m)),
        opt(c.lr),
        cfg(c),
        shuffle_rng(derive_seed(seed, "shuffle")),
        dropout_rng(derive_seed(seed, "dropout")),
        replay_rng(derive_seed(seed, "replay")),
        buffer_rng(derive_seed(seed, "buffer")),
        fisher_rng(derive_seed(seed, "fisher")) {
    buffer.capacity = c.buffer_capacity;
    buffer.policy = c.method == Method::ProDER ? ReplayPolicy::PrototypeAware
                                               : ReplayPolicy::Uniform;
  }
};

// 50-epoch Adam loop over one task stream; per-step loss assembled by the
// active strategy. `items` must be nonempty.
void train_task(TrainContext& ctx, const std::vector<StreamItem>& items, int task_index);

// end-of-task buffer updates
void update_uniform(ReplayBuffer& buffer, const std::vector<StreamItem>& stream,
                    ModelF& model, bool store_logits, int task_index, Rng& rng);
void update_prototype_aware(ReplayBuffer& buffer, const std::vector<StreamItem>& stream,
                            ModelF& model, const PrototypeBank<float>& bank, double rho,
                            int task_index);

// diagonal empirical Fisher over (up to max_samples of) the task stream
FisherState<float> fisher_update(ModelF& model, const std::vector<StreamItem>& stream,
                                 int max_samples, Rng& rng);

// recompute per-class centroids from current task stream plus buffer
void refresh_prototypes(PrototypeBank<float>& bank, ModelF& model,
                        const std::vector<StreamItem>& stream, const ReplayBuffer& buffer,
                        int epoch);

}  // namespace gridcl
