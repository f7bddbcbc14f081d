#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridcl/model.hpp"
#include "gridcl/ops.hpp"
#include "gridcl/replay.hpp"

namespace gridcl {

enum class Method { Joint, Cumulative, FineTuning, EWC, LwF, ER, DERpp, ProDER };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m = {Method::Joint,  Method::Cumulative,
                                        Method::FineTuning, Method::EWC,
                                        Method::LwF,    Method::ER,
                                        Method::DERpp,  Method::ProDER};
  return m;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Joint: return "joint";
    case Method::Cumulative: return "cumulative";
    case Method::FineTuning: return "finetune";
    case Method::EWC: return "ewc";
    case Method::LwF: return "lwf";
    case Method::ER: return "er";
    case Method::DERpp: return "derpp";
    case Method::ProDER: return "proder";
  }
  throw std::logic_error("unknown method");
}

inline Method method_from_name(const std::string& s) {
  for (Method m : all_methods())
    if (method_name(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct StrategyConfig {
  Method method = Method::ProDER;
  // training loop
  int epochs = 50;
  int batch_size = 4;
  double lr = 1e-3;
  // baselines
  double ewc_lambda = 10.0;
  double lwf_lambda = 1.0;
  double replay_ratio = 0.5;
  double derpp_alpha = 2.0;
  double derpp_beta = 1.0;
  int buffer_capacity = kDefaultBufferCapacity;
  int fisher_max_samples = 512;
  // proder; beta is 5 for scenario 1 and 7.2 for 2-4, rho 0.45 / 0.50 (scenario 4)
  double proder_alpha = 2.0;
  double proder_beta = 5.0;
  double proder_gamma = 0.5;
  double proder_rho = 0.45;
  double kd_temperature = 2.0;

  void validate() const {
    if (replay_ratio < 0.0 || replay_ratio > 1.0)
      throw std::invalid_argument("config: replay_ratio outside [0,1]");
    if (kd_temperature <= 0.0)
      throw std::invalid_argument("config: kd_temperature must be positive");
    if (ewc_lambda < 0 || lwf_lambda < 0 || derpp_alpha < 0 || derpp_beta < 0 ||
        proder_alpha < 0 || proder_beta < 0 || proder_gamma < 0)
      throw std::invalid_argument("config: loss weights must be >= 0");
    if (proder_rho < 0.0 || proder_rho > 1.0)
      throw std::invalid_argument("config: proder_rho outside [0,1]");
    if (epochs < 1 || batch_size < 1)
      throw std::invalid_argument("config: epochs and batch_size must be >= 1");
  }
};

template <typename T>
struct Prototype {
  std::vector<T> centroid;
  int count = 0;
  bool stale = false;
  int last_refresh_epoch = -1;
};

// Per-class feature centroids; a class has an entry iff it was seen in
// training or resides in the buffer.
template <typename T>
using PrototypeBank = std::map<int, Prototype<T>>;

// Diagonal empirical Fisher for one completed task: importance and anchor
// buffers aligned with the model's params() order, sized at anchor time.
template <typename T>
struct FisherState {
  std::vector<std::vector<T>> importance;
  std::vector<std::vector<T>> anchor;
};

// ---- losses ----------------------------------------------------------------

template <typename T>
Tensor<T> loss_ce(Tape<T>* tape, Tensor<T> logits, const std::vector<int>& labels) {
  return cross_entropy(tape, logits, labels);
}

// (lambda/2) * sum over anchored tasks of sum_i F_i (theta_i - theta*_i)^2.
// Anchored buffers may cover only a prefix of the current head (old classes);
// penalties never index beyond the recorded widths.
template <typename T>
Tensor<T> loss_ewc(Tape<T>* tape, std::vector<Tensor<T>> params,
                   const std::vector<FisherState<T>>& anchors, T lambda) {
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (const auto& state : anchors) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& fisher = state.importance[i];
      if (fisher.empty()) continue;
      Tensor<T> p = params[i];
      if (fisher.size() != p.size()) {
        // grown head: weights add rows, the 1xC bias adds columns
        if (p.rows() == 1) {
          p = slice_cols(tape, p, 0, static_cast<int>(fisher.size()));
        } else {
          p = slice_rows(tape, p, 0, static_cast<int>(fisher.size()) / p.cols());
        }
      }
      std::vector<int> shape = p.shape();
      Tensor<T> f = Tensor<T>::from(shape, fisher);
      Tensor<T> a = Tensor<T>::from(shape, state.anchor[i]);
      Tensor<T> d = sub(tape, p, a);
      total = add(tape, total, sum_all(tape, mul(tape, f, mul(tape, d, d))));
    }
  }
  return scale(tape, total, lambda / T(2));
}

// lambda * MSE between current and teacher logits over the teacher's head
// width (old columns only); teacher logits are constants.
template <typename T>
Tensor<T> loss_lwf(Tape<T>* tape, Tensor<T> current_logits,
                   const Tensor<T>& teacher_logits, T lambda) {
  int w = teacher_logits.cols();
  Tensor<T> cur = current_logits.cols() == w
                      ? current_logits
                      : slice_cols(tape, current_logits, 0, w);
  return scale(tape, mse(tape, cur, teacher_logits), lambda);
}

// mean over replay rows of the squared logit error against each entry's
// stored logits, restricted to the entry's stored width
template <typename T>
Tensor<T> replay_logit_mse(Tape<T>* tape, Tensor<T> logits, int row_begin,
                           const std::vector<std::vector<T>>& stored) {
  int n = static_cast<int>(stored.size());
  if (n == 0) return Tensor<T>::scalar(T(0));
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (int i = 0; i < n; ++i) {
    int w = static_cast<int>(stored[i].size());
    if (w > logits.cols())
      throw std::runtime_error("replay_logit_mse: stored width exceeds head");
    Tensor<T> row = slice_rows(tape, logits, row_begin + i, row_begin + i + 1);
    if (w < logits.cols()) row = slice_cols(tape, row, 0, w);
    Tensor<T> ref = Tensor<T>::from({1, w}, stored[i]);
    total = add(tape, total, mse(tape, row, ref));
  }
  return scale(tape, total, T(1) / static_cast<T>(n));
}

// alpha * replay logit MSE + beta * cross-entropy on replay labels
template <typename T>
Tensor<T> loss_derpp(Tape<T>* tape, Tensor<T> replay_logits,
                     const std::vector<std::vector<T>>& stored,
                     const std::vector<int>& replay_labels, T alpha, T beta) {
  for (const auto& s : stored)
    if (s.empty()) throw std::runtime_error("loss_derpp: replay entry missing logits");
  Tensor<T> l = scale(tape, replay_logit_mse(tape, replay_logits, 0, stored), alpha);
  return add(tape, l, scale(tape, cross_entropy(tape, replay_logits, replay_labels), beta));
}

// Eq-1 style distillation: mean over replay rows of
// KL(softmax(z/T) || softmax(z_stored/T)) over each entry's stored width
template <typename T>
Tensor<T> loss_proder_distill(Tape<T>* tape, Tensor<T> logits, int row_begin,
                              const std::vector<std::vector<T>>& stored, T temperature) {
  int n = static_cast<int>(stored.size());
  if (n == 0) return Tensor<T>::scalar(T(0));
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (int i = 0; i < n; ++i) {
    int w = static_cast<int>(stored[i].size());
    Tensor<T> row = slice_rows(tape, logits, row_begin + i, row_begin + i + 1);
    if (w < logits.cols()) row = slice_cols(tape, row, 0, w);
    Tensor<T> ref = Tensor<T>::from({1, w}, stored[i]);
    total = add(tape, total, kl_tempered(tape, row, ref, temperature));
  }
  return scale(tape, total, T(1) / static_cast<T>(n));
}

// mean squared distance of each feature to its own class centroid;
// centroids are constants (no gradient into the bank)
template <typename T>
Tensor<T> loss_attraction(Tape<T>* tape, Tensor<T> features,
                          const std::vector<int>& labels, const PrototypeBank<T>& bank) {
  int b = features.rows(), d = features.cols();
  std::vector<T> anchors(static_cast<std::size_t>(b) * d);
  for (int i = 0; i < b; ++i) {
    auto it = bank.find(labels[i]);
    if (it == bank.end())
      throw std::runtime_error("loss_attraction: no prototype for class " +
                               std::to_string(labels[i]));
    std::copy_n(it->second.centroid.data(), d, anchors.data() + static_cast<std::size_t>(i) * d);
  }
  Tensor<T> p = Tensor<T>::from(features.shape(), std::move(anchors));
  return scale(tape, sqnorm(tape, sub(tape, features, p)), T(1) / static_cast<T>(b));
}

// ordered-pair average of exp(-||p_i - p_j||) over the C seen classes;
// classes present in the batch use their batch-mean features (differentiable),
// absent classes use the bank centroid as a constant
template <typename T>
Tensor<T> loss_repulsion(Tape<T>* tape, Tensor<T> features,
                         const std::vector<int>& labels, const PrototypeBank<T>& bank) {
  int d = features.cols();
  std::map<int, std::vector<int>> rows_by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    rows_by_class[labels[i]].push_back(static_cast<int>(i));

  std::vector<Tensor<T>> protos;
  for (const auto& [cls, proto] : bank) {
    auto it = rows_by_class.find(cls);
    if (it != rows_by_class.end()) {
      protos.push_back(mean_rows(tape, features, it->second));
    } else {
      std::vector<T> c(proto.centroid.begin(), proto.centroid.end());
      protos.push_back(Tensor<T>::from({1, d}, std::move(c)));
    }
  }
  int c = static_cast<int>(protos.size());
  if (c < 2) return Tensor<T>::scalar(T(0));
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (int i = 0; i < c; ++i)
    for (int j = i + 1; j < c; ++j) {
      Tensor<T> dist = sqrt_(tape, sqnorm(tape, sub(tape, protos[i], protos[j])));
      total = add(tape, total, exp_(tape, scale(tape, dist, T(-1))));
    }
  // both (i,j) and (j,i) count, matching the C(C-1) normalizer
  return scale(tape, total, T(2) / (static_cast<T>(c) * static_cast<T>(c - 1)));
}

// One ProDER step's batch: task rows first, replay rows from replay_begin.
template <typename T>
struct ProderBatch {
  Tensor<T> logits;    // B x C
  Tensor<T> features;  // B x feature_dim
  std::vector<int> labels;
  int replay_begin = 0;  // == B on the first task (no replay rows)
  std::vector<std::vector<T>> stored_logits;  // one per replay row
};

// L_CE(task+replay) + alpha L_distill + beta L_att + gamma L_rep
template <typename T>
Tensor<T> proder_step_loss(Tape<T>* tape, const ProderBatch<T>& b,
                           const PrototypeBank<T>& bank, const StrategyConfig& cfg) {
  Tensor<T> loss = cross_entropy(tape, b.logits, b.labels);
  if (!b.stored_logits.empty())
    loss = add(tape, loss,
               scale(tape,
                     loss_proder_distill(tape, b.logits, b.replay_begin, b.stored_logits,
                                         static_cast<T>(cfg.kd_temperature)),
                     static_cast<T>(cfg.proder_alpha)));
  loss = add(tape, loss,
             scale(tape, loss_attraction(tape, b.features, b.labels, bank),
                   static_cast<T>(cfg.proder_beta)));
  loss = add(tape, loss,
             scale(tape, loss_repulsion(tape, b.features, b.labels, bank),
                   static_cast<T>(cfg.proder_gamma)));
  return loss;
}

}  // namespace gridcl
