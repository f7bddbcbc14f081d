#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridcl {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
struct TensorData {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated lazily, same length as v
  bool requires_grad = false;
};

// Shared-buffer dense tensor, row-major. Copying a Tensor aliases the storage;
// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->v.assign(numel(t.d_->shape), T(0));
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const { return d_->shape; }
  std::size_t size() const { return d_->v.size(); }
  int rows() const { return d_->shape.size() > 0 ? d_->shape[0] : 1; }
  int cols() const { return d_->shape.size() > 1 ? d_->shape[1] : 1; }

  std::vector<T>& v() { return d_->v; }
  const std::vector<T>& v() const { return d_->v; }
  T* data() { return d_->v.data(); }
  const T* data() const { return d_->v.data(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  std::vector<T>& grad() {
    ensure_grad();
    return d_->g;
  }
  const std::vector<T>& grad() const { return d_->g; }
  bool has_grad() const { return !d_->g.empty(); }
  void ensure_grad() {
    if (d_->g.empty()) d_->g.assign(d_->v.size(), T(0));
  }
  void zero_grad() {
    if (!d_->g.empty()) std::fill(d_->g.begin(), d_->g.end(), T(0));
  }

  T item() const {
    if (d_->v.size() != 1)
      throw std::runtime_error("item(): tensor has shape " + shape_str(d_->shape));
    return d_->v[0];
  }

  Tensor clone() const {
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>(*d_);
    return t;
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

  static std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: nonpositive dim in " + shape_str(shape));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

// Reverse-mode tape: nodes replayed strictly in reverse execution order.
// One tape per training step; not shareable across threads.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays backward. Gradients accumulate
  // additively, so backward of L1 then L2 equals backward of L1 + L2.
  void backward(Tensor<T> loss) {
    if (loss.size() != 1)
      throw std::runtime_error("backward: loss must be scalar, got " +
                               shape_str(loss.shape()));
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gridcl
