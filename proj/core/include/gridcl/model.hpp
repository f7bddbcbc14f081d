#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridcl/ops.hpp"
#include "gridcl/rng.hpp"
#include "gridcl/tensor.hpp"

namespace gridcl {

// One direction's GRU cell parameters. Gate convention (single bias per gate,
// reset applied before the recurrent matmul of the candidate):
//   u  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   n  = tanh(x Wn + r (.) (h Un) + bn)
//   h' = (1 - u) (.) n + u (.) h
template <typename T>
struct GruDirection {
  Tensor<T> Wz, Wr, Wn;  // input_dim x hidden
  Tensor<T> Uz, Ur, Un;  // hidden x hidden
  Tensor<T> bz, br, bn;  // 1 x hidden
};

template <typename T>
struct ForwardOutput {
  Tensor<T> features;  // B x 2*hidden, post-dropout pooled representation
  Tensor<T> logits;    // B x C
};

// Bidirectional GRU encoder with an expandable linear head. The head stores
// one row per class (logits = features * W_head^T + b_head), so adding a
// class appends a contiguous row and leaves old parameters byte-identical.
template <typename T>
class BiGruClassifier {
 public:
  BiGruClassifier(int input_dim, int hidden, double dropout_p, Rng& rng)
      : input_dim_(input_dim), hidden_(hidden), dropout_p_(dropout_p) {
    init_direction(fwd_, rng);
    init_direction(bwd_, rng);
    head_w_ = Tensor<T>::zeros({1, 2 * hidden_}, true);  // replaced on first expand
    head_b_ = Tensor<T>::zeros({1, 1}, true);
    classes_ = 0;
  }

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int feature_dim() const { return 2 * hidden_; }
  int classes() const { return classes_; }
  double dropout_p() const { return dropout_p_; }

  bool train_mode() const { return train_mode_; }
  void set_train_mode(bool m) { train_mode_ = m; }
  void set_in_epoch(bool e) { in_epoch_ = e; }

  // batch: {B, W, F} tensor, batch-first
  ForwardOutput<T> forward(Tape<T>* tape, const Tensor<T>& batch, Rng* dropout_rng) {
    if (classes_ == 0) throw std::runtime_error("forward: head is empty, expand first");
    Tensor<T> feat = encode(tape, batch);
    if (train_mode_) {
      if (dropout_rng == nullptr)
        throw std::runtime_error("forward: train mode needs a dropout rng");
      feat = dropout(tape, feat, dropout_p_, *dropout_rng);
    }
    Tensor<T> logits = add_row(tape, matmul_nt(tape, feat, head_w_), head_b_);
    return {feat, logits};
  }

  // pooled representation with dropout disabled, regardless of the mode flag
  Tensor<T> extract_features(const Tensor<T>& batch) { return encode(nullptr, batch); }

  // same dropout-free representation, but on the tape: the prototype losses
  // compare features against eval-mode centroids, so they use this view
  Tensor<T> clean_features(Tape<T>* tape, const Tensor<T>& batch) {
    return encode(tape, batch);
  }

  void expand_head(int new_class_count, Rng& rng) {
    if (new_class_count < 1)
      throw std::invalid_argument("expand_head: new_class_count must be >= 1");
    if (in_epoch_)
      throw std::runtime_error("expand_head: expansion only at task boundaries");
    int d = 2 * hidden_;
    int new_c = classes_ + new_class_count;
    Tensor<T> w = Tensor<T>::zeros({new_c, d}, true);
    Tensor<T> b = Tensor<T>::zeros({1, new_c}, true);
    if (classes_ > 0) {
      std::copy_n(head_w_.data(), static_cast<std::size_t>(classes_) * d, w.data());
      std::copy_n(head_b_.data(), classes_, b.data());
    }
    // new rows drawn in row-major order from the run generator; biases zero
    T bound = T(1) / std::sqrt(static_cast<T>(hidden_));
    for (int i = classes_ * d; i < new_c * d; ++i)
      w.v()[i] = static_cast<T>(rng.uniform(-bound, bound));
    head_w_ = w;
    head_b_ = b;
    classes_ = new_c;
  }

  // all trainable parameters; order is stable and is also the checkpoint order
  std::vector<Tensor<T>> params() {
    return {fwd_.Wz, fwd_.Wr, fwd_.Wn, fwd_.Uz, fwd_.Ur, fwd_.Un,
            fwd_.bz, fwd_.br, fwd_.bn, bwd_.Wz, bwd_.Wr, bwd_.Wn,
            bwd_.Uz, bwd_.Ur, bwd_.Un, bwd_.bz, bwd_.br, bwd_.bn,
            head_w_, head_b_};
  }
  static constexpr int kHeadWParam = 18;
  static constexpr int kHeadBParam = 19;

  Tensor<T>& head_w() { return head_w_; }
  Tensor<T>& head_b() { return head_b_; }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& p : params()) n += p.size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params()) p.zero_grad();
  }

  BiGruClassifier clone() const {
    BiGruClassifier m = *this;
    auto deep = [](Tensor<T>& t) { t = t.clone(); };
    deep(m.fwd_.Wz); deep(m.fwd_.Wr); deep(m.fwd_.Wn);
    deep(m.fwd_.Uz); deep(m.fwd_.Ur); deep(m.fwd_.Un);
    deep(m.fwd_.bz); deep(m.fwd_.br); deep(m.fwd_.bn);
    deep(m.bwd_.Wz); deep(m.bwd_.Wr); deep(m.bwd_.Wn);
    deep(m.bwd_.Uz); deep(m.bwd_.Ur); deep(m.bwd_.Un);
    deep(m.bwd_.bz); deep(m.bwd_.br); deep(m.bwd_.bn);
    deep(m.head_w_); deep(m.head_b_);
    return m;
  }

  template <typename U>
  BiGruClassifier<U> cast() const {
    Rng dummy(0);
    BiGruClassifier<U> m(input_dim_, hidden_, dropout_p_, dummy);
    if (classes_ > 0) m.expand_head(classes_, dummy);
    auto src = const_cast<BiGruClassifier*>(this)->params();
    auto dst = m.params();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t j = 0; j < src[i].size(); ++j)
        dst[i].v()[j] = static_cast<U>(src[i].v()[j]);
    m.set_train_mode(train_mode_);
    return m;
  }

  void save(const std::string& path) const;
  static BiGruClassifier load(const std::string& path);

 private:
  template <typename U>
  friend class BiGruClassifier;

  void init_direction(GruDirection<T>& d, Rng& rng) {
    T bound = T(1) / std::sqrt(static_cast<T>(hidden_));
    auto mat = [&](int r, int c) {
      Tensor<T> t = Tensor<T>::zeros({r, c}, true);
      for (auto& x : t.v()) x = static_cast<T>(rng.uniform(-bound, bound));
      return t;
    };
    d.Wz = mat(input_dim_, hidden_);
    d.Wr = mat(input_dim_, hidden_);
    d.Wn = mat(input_dim_, hidden_);
    d.Uz = mat(hidden_, hidden_);
    d.Ur = mat(hidden_, hidden_);
    d.Un = mat(hidden_, hidden_);
    d.bz = Tensor<T>::zeros({1, hidden_}, true);
    d.br = Tensor<T>::zeros({1, hidden_}, true);
    d.bn = Tensor<T>::zeros({1, hidden_}, true);
  }

  Tensor<T> timestep(const Tensor<T>& batch, int t) const {
    int b = batch.shape()[0], w = batch.shape()[1], f = batch.shape()[2];
    if (f != input_dim_)
      throw std::invalid_argument("forward: batch has " + std::to_string(f) +
                                  " features, model expects " + std::to_string(input_dim_));
    Tensor<T> x = Tensor<T>::zeros({b, f});
    for (int i = 0; i < b; ++i)
      std::copy_n(batch.data() + (static_cast<std::size_t>(i) * w + t) * f, f,
                  x.data() + static_cast<std::size_t>(i) * f);
    return x;
  }

  Tensor<T> cell(Tape<T>* tape, GruDirection<T>& d, Tensor<T> x, Tensor<T> h) {
    Tensor<T> u = sigmoid(tape, add_row(tape, add(tape, matmul(tape, x, d.Wz),
                                                  matmul(tape, h, d.Uz)), d.bz));
    Tensor<T> r = sigmoid(tape, add_row(tape, add(tape, matmul(tape, x, d.Wr),
                                                  matmul(tape, h, d.Ur)), d.br));
    Tensor<T> n = tanh_(tape, add_row(tape, add(tape, matmul(tape, x, d.Wn),
                                                mul(tape, r, matmul(tape, h, d.Un))), d.bn));
    // h' = (1-u) (.) n + u (.) h  ==  n + u (.) (h - n)
    return add(tape, n, mul(tape, u, sub(tape, h, n)));
  }

  // final forward state concatenated with final backward state
  Tensor<T> encode(Tape<T>* tape, const Tensor<T>& batch) {
    if (batch.shape().size() != 3)
      throw std::invalid_argument("forward: batch must be BxWxF, got " +
                                  shape_str(batch.shape()));
    int b = batch.shape()[0], w = batch.shape()[1];
    Tensor<T> hf = Tensor<T>::zeros({b, hidden_});
    for (int t = 0; t < w; ++t) hf = cell(tape, fwd_, timestep(batch, t), hf);
    Tensor<T> hb = Tensor<T>::zeros({b, hidden_});
    for (int t = w - 1; t >= 0; --t) hb = cell(tape, bwd_, timestep(batch, t), hb);
    return concat_cols(tape, hf, hb);
  }

  int input_dim_;
  int hidden_;
  double dropout_p_;
  int classes_;
  bool train_mode_ = false;
  bool in_epoch_ = false;
  GruDirection<T> fwd_, bwd_;
  Tensor<T> head_w_;  // C x 2*hidden
  Tensor<T> head_b_;  // 1 x C
};

// Adam with per-parameter moment buffers. Moment state survives head
// expansion: new rows get zero moments, old entries are untouched.
template <typename T>
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(std::vector<Tensor<T>> params) {
    params_ = std::move(params);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), T(0));
      v_[i].assign(params_[i].size(), T(0));
    }
  }

  // re-point at the model's (possibly expanded) parameter list, preserving
  // moments for the prefix of each buffer
  void refresh(std::vector<Tensor<T>> params) {
    if (params_.empty()) {
      attach(std::move(params));
      return;
    }
    if (params.size() != params_.size())
      throw std::runtime_error("adam: parameter list changed size");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].size() != params_[i].size()) {
        m_[i].resize(params[i].size(), T(0));
        v_[i].resize(params[i].size(), T(0));
      }
      params_[i] = params[i];
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m_[i][j] = T(beta1_) * m_[i][j] + T(1.0 - beta1_) * g[j];
        v_[i][j] = T(beta2_) * v_[i][j] + T(1.0 - beta2_) * g[j] * g[j];
        double mh = m_[i][j] / bc1;
        double vh = v_[i][j] / bc2;
        p.v()[j] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
};

// ---- checkpoint ------------------------------------------------------------
// Layout: magic "GCLM", u32 version, u32 input_dim, u32 hidden, u32 classes,
// f64 dropout_p, then each parameter buffer in params() order as raw
// little-endian scalars. Round-trips byte-identically.

template <typename T>
void BiGruClassifier<T>::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for write");
  auto w32 = [&](std::uint32_t x) { f.write(reinterpret_cast<const char*>(&x), 4); };
  f.write("GCLM", 4);
  w32(1);
  w32(static_cast<std::uint32_t>(input_dim_));
  w32(static_cast<std::uint32_t>(hidden_));
  w32(static_cast<std::uint32_t>(classes_));
  f.write(reinterpret_cast<const char*>(&dropout_p_), 8);
  auto ps = const_cast<BiGruClassifier*>(this)->params();
  for (auto& p : ps)
    f.write(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <typename T>
BiGruClassifier<T> BiGruClassifier<T>::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "GCLM", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  auto r32 = [&]() {
    std::uint32_t x;
    f.read(reinterpret_cast<char*>(&x), 4);
    return x;
  };
  std::uint32_t version = r32();
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  int input_dim = static_cast<int>(r32());
  int hidden = static_cast<int>(r32());
  int classes = static_cast<int>(r32());
  double dropout_p;
  f.read(reinterpret_cast<char*>(&dropout_p), 8);
  Rng dummy(0);
  BiGruClassifier m(input_dim, hidden, dropout_p, dummy);
  if (classes > 0) m.expand_head(classes, dummy);
  for (auto& p : m.params()) {
    f.read(reinterpret_cast<char*>(p.data()), p.size() * sizeof(T));
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
  }
  return m;
}

}  // namespace gridcl
