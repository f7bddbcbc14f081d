#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridcl/rng.hpp"
#include "gridcl/tensor.hpp"

namespace gridcl {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

namespace detail {

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
  for (T x : t.v())
    if (!std::isfinite(x))
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
}

template <typename T>
inline bool track(Tape<T>* tape, const Tensor<T>& a) {
  return tape != nullptr && a.requires_grad();
}
template <typename T>
inline bool track(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace detail

// ---- matrix products -------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dims disagree, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int m = a.rows(), k = a.cols(), n = b.cols();
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros({m, n}, rec);
  EMap<T>(out.data(), m, n).noalias() =
      ECMap<T>(a.data(), m, k) * ECMap<T>(b.data(), k, n);
  detail::check_finite(out, "matmul");
  if (rec) {
    tape->record([a, b, out, m, k, n]() mutable {
      ECMap<T> go(out.grad().data(), m, n);
      if (a.requires_grad())
        EMap<T>(a.grad().data(), m, k).noalias() +=
            go * ECMap<T>(b.data(), k, n).transpose();
      if (b.requires_grad())
        EMap<T>(b.grad().data(), k, n).noalias() +=
            ECMap<T>(a.data(), m, k).transpose() * go;
    });
  }
  return out;
}

// a [m x k] times b[n x k] transposed -> [m x n]; used by the class head,
// which stores one row per class so head growth appends contiguous rows.
template <typename T>
Tensor<T> matmul_nt(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dims disagree, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int m = a.rows(), k = a.cols(), n = b.rows();
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros({m, n}, rec);
  EMap<T>(out.data(), m, n).noalias() =
      ECMap<T>(a.data(), m, k) * ECMap<T>(b.data(), n, k).transpose();
  detail::check_finite(out, "matmul_nt");
  if (rec) {
    tape->record([a, b, out, m, k, n]() mutable {
      ECMap<T> go(out.grad().data(), m, n);
      if (a.requires_grad())
        EMap<T>(a.grad().data(), m, k).noalias() += go * ECMap<T>(b.data(), n, k);
      if (b.requires_grad())
        EMap<T>(b.grad().data(), n, k).noalias() +=
            go.transpose() * ECMap<T>(a.data(), m, k);
    });
  }
  return out;
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = a.v()[i] + b.v()[i];
  detail::check_finite(out, "add");
  if (rec) {
    tape->record([a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) b.grad()[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = a.v()[i] - b.v()[i];
  detail::check_finite(out, "sub");
  if (rec) {
    tape->record([a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) b.grad()[i] -= go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = a.v()[i] * b.v()[i];
  detail::check_finite(out, "mul");
  if (rec) {
    tape->record([a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] * b.v()[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) b.grad()[i] += go[i] * a.v()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, Tensor<T> a, T s) {
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = a.v()[i] * s;
  detail::check_finite(out, "scale");
  if (rec) {
    tape->record([a, out, s]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] * s;
    });
  }
  return out;
}

// broadcast a length-C row vector over an R x C matrix
template <typename T>
Tensor<T> add_row(Tape<T>* tape, Tensor<T> m, Tensor<T> row) {
  int r = m.rows(), c = m.cols();
  if (static_cast<int>(row.size()) != c)
    throw std::invalid_argument("add_row: row length " + shape_str(row.shape()) +
                                " vs matrix " + shape_str(m.shape()));
  bool rec = detail::track(tape, m, row);
  Tensor<T> out = Tensor<T>::zeros(m.shape(), rec);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.v()[i * c + j] = m.v()[i * c + j] + row.v()[j];
  detail::check_finite(out, "add_row");
  if (rec) {
    tape->record([m, row, out, r, c]() mutable {
      const auto& go = out.grad();
      if (m.requires_grad())
        for (std::size_t i = 0; i < go.size(); ++i) m.grad()[i] += go[i];
      if (row.requires_grad())
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) row.grad()[j] += go[i * c + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.v()[i] = T(1) / (T(1) + std::exp(-a.v()[i]));
  detail::check_finite(out, "sigmoid");
  if (rec) {
    tape->record([a, out]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        T y = out.v()[i];
        a.grad()[i] += go[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = std::tanh(a.v()[i]);
  detail::check_finite(out, "tanh");
  if (rec) {
    tape->record([a, out]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        T y = out.v()[i];
        a.grad()[i] += go[i] * (T(1) - y * y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> exp_(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) out.v()[i] = std::exp(a.v()[i]);
  detail::check_finite(out, "exp");
  if (rec) {
    tape->record([a, out]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] * out.v()[i];
    });
  }
  return out;
}

// scalar sqrt; gradient clamped to 0 at the origin where sqrt is not
// differentiable (coincident prototypes in the repulsion loss)
template <typename T>
Tensor<T> sqrt_(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.v()[i] < T(0)) throw std::runtime_error("sqrt: negative input");
    out.v()[i] = std::sqrt(a.v()[i]);
  }
  if (rec) {
    tape->record([a, out]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i)
        if (out.v()[i] > T(1e-8))
          a.grad()[i] += go[i] * T(0.5) / out.v()[i];
    });
  }
  return out;
}

// ---- structure -------------------------------------------------------------

template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  int r = a.rows(), ca = a.cols(), cb = b.cols();
  bool rec = detail::track(tape, a, b);
  Tensor<T> out = Tensor<T>::zeros({r, ca + cb}, rec);
  for (int i = 0; i < r; ++i) {
    std::copy_n(a.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  if (rec) {
    tape->record([a, b, out, r, ca, cb]() mutable {
      const auto& go = out.grad();
      for (int i = 0; i < r; ++i) {
        if (a.requires_grad())
          for (int j = 0; j < ca; ++j) a.grad()[i * ca + j] += go[i * (ca + cb) + j];
        if (b.requires_grad())
          for (int j = 0; j < cb; ++j)
            b.grad()[i * cb + j] += go[i * (ca + cb) + ca + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>* tape, Tensor<T> a, int c0, int c1) {
  int r = a.rows(), c = a.cols();
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) +
                                "," + std::to_string(c1) + ") for " + shape_str(a.shape()));
  int w = c1 - c0;
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros({r, w}, rec);
  for (int i = 0; i < r; ++i) std::copy_n(a.data() + i * c + c0, w, out.data() + i * w);
  if (rec) {
    tape->record([a, out, r, c, c0, w]() mutable {
      const auto& go = out.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) a.grad()[i * c + c0 + j] += go[i * w + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(Tape<T>* tape, Tensor<T> a, int r0, int r1) {
  int r = a.rows(), c = a.cols();
  if (r0 < 0 || r1 > r || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) +
                                "," + std::to_string(r1) + ") for " + shape_str(a.shape()));
  int h = r1 - r0;
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros({h, c}, rec);
  std::copy_n(a.data() + r0 * c, static_cast<std::size_t>(h) * c, out.data());
  if (rec) {
    tape->record([a, out, c, r0, h]() mutable {
      const auto& go = out.grad();
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < c; ++j) a.grad()[(r0 + i) * c + j] += go[i * c + j];
    });
  }
  return out;
}

// mean of a subset of rows -> 1 x C row
template <typename T>
Tensor<T> mean_rows(Tape<T>* tape, Tensor<T> a, std::vector<int> rows) {
  if (rows.empty()) throw std::invalid_argument("mean_rows: empty row set");
  int c = a.cols();
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros({1, c}, rec);
  for (int i : rows)
    for (int j = 0; j < c; ++j) out.v()[j] += a.v()[i * c + j];
  T inv = T(1) / static_cast<T>(rows.size());
  for (int j = 0; j < c; ++j) out.v()[j] *= inv;
  detail::check_finite(out, "mean_rows");
  if (rec) {
    tape->record([a, out, rows, c, inv]() mutable {
      const auto& go = out.grad();
      for (int i : rows)
        for (int j = 0; j < c; ++j) a.grad()[i * c + j] += go[j] * inv;
    });
  }
  return out;
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  T s = T(0);
  for (T x : a.v()) s += x;
  Tensor<T> out = Tensor<T>::from({1}, {s}, rec);
  detail::check_finite(out, "sum_all");
  if (rec) {
    tape->record([a, out]() mutable {
      T go = out.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>* tape, Tensor<T> a) {
  return scale(tape, sum_all(tape, a), T(1) / static_cast<T>(a.size()));
}

// sum of squares over all elements
template <typename T>
Tensor<T> sqnorm(Tape<T>* tape, Tensor<T> a) {
  bool rec = detail::track(tape, a);
  T s = T(0);
  for (T x : a.v()) s += x * x;
  Tensor<T> out = Tensor<T>::from({1}, {s}, rec);
  detail::check_finite(out, "sqnorm");
  if (rec) {
    tape->record([a, out]() mutable {
      T go = out.grad()[0];
      for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += go * T(2) * a.v()[i];
    });
  }
  return out;
}

// ---- probability ops -------------------------------------------------------

// rowwise tempered softmax: softmax(z / temperature), max-subtracted
template <typename T>
Tensor<T> softmax_t(Tape<T>* tape, Tensor<T> z, T temperature) {
  if (temperature <= T(0))
    throw std::invalid_argument("softmax_t: temperature must be positive");
  int r = z.rows(), c = z.cols();
  bool rec = detail::track(tape, z);
  Tensor<T> out = Tensor<T>::zeros(z.shape(), rec);
  for (int i = 0; i < r; ++i) {
    const T* zi = z.data() + i * c;
    T* oi = out.data() + i * c;
    T mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    T s = T(0);
    for (int j = 0; j < c; ++j) {
      oi[j] = std::exp((zi[j] - mx) / temperature);
      s += oi[j];
    }
    for (int j = 0; j < c; ++j) oi[j] /= s;
  }
  detail::check_finite(out, "softmax_t");
  if (rec) {
    tape->record([z, out, r, c, temperature]() mutable {
      for (int i = 0; i < r; ++i) {
        const T* p = out.data() + i * c;
        const T* go = out.grad().data() + i * c;
        T dot = T(0);
        for (int j = 0; j < c; ++j) dot += go[j] * p[j];
        for (int j = 0; j < c; ++j)
          z.grad()[i * c + j] += p[j] * (go[j] - dot) / temperature;
      }
    });
  }
  return out;
}

// plain KL(p || q) on probability vectors; 0 ln 0 = 0, q clamped at 1e-12
template <typename T>
T kl_divergence(const std::vector<T>& p, const std::vector<T>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch " +
                                std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  T s = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= T(0)) continue;
    T qi = std::max(q[i], T(1e-12));
    s += p[i] * std::log(p[i] / qi);
  }
  return s;
}

// batch mean of KL(softmax(z/T) || softmax(z_ref/T)); gradient flows only
// through z, z_ref is treated as a constant
template <typename T>
Tensor<T> kl_tempered(Tape<T>* tape, Tensor<T> z, const Tensor<T>& z_ref,
                      T temperature) {
  if (z.shape() != z_ref.shape())
    throw std::invalid_argument("kl_tempered: shape mismatch " + shape_str(z.shape()) +
                                " vs " + shape_str(z_ref.shape()));
  if (temperature <= T(0))
    throw std::invalid_argument("kl_tempered: temperature must be positive");
  int r = z.rows(), c = z.cols();
  bool rec = detail::track(tape, z);

  auto row_softmax = [c, temperature](const T* zi, T* oi) {
    T mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    T s = T(0);
    for (int j = 0; j < c; ++j) {
      oi[j] = std::exp((zi[j] - mx) / temperature);
      s += oi[j];
    }
    for (int j = 0; j < c; ++j) oi[j] /= s;
  };

  std::vector<T> p(static_cast<std::size_t>(r) * c), q(p.size());
  T total = T(0);
  std::vector<T> row_kl(r);
  for (int i = 0; i < r; ++i) {
    row_softmax(z.data() + i * c, p.data() + i * c);
    row_softmax(z_ref.data() + i * c, q.data() + i * c);
    T s = T(0);
    for (int j = 0; j < c; ++j) {
      T pj = p[i * c + j];
      if (pj <= T(0)) continue;
      s += pj * std::log(pj / std::max(q[i * c + j], T(1e-12)));
    }
    row_kl[i] = s;
    total += s;
  }
  Tensor<T> out = Tensor<T>::from({1}, {total / static_cast<T>(r)}, rec);
  detail::check_finite(out, "kl_tempered");
  if (rec) {
    tape->record([z, out, p = std::move(p), q = std::move(q),
                  row_kl = std::move(row_kl), r, c, temperature]() mutable {
      T go = out.grad()[0] / static_cast<T>(r);
      // d/dz_k of sum_j p_j ln(p_j/q_j) with p = softmax(z/T):
      //   (p_k / T) * (ln(p_k/q_k) - KL_row)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          T pj = p[i * c + j];
          T lr = std::log(std::max(pj, T(1e-30)) / std::max(q[i * c + j], T(1e-12)));
          z.grad()[i * c + j] += go * pj * (lr - row_kl[i]) / temperature;
        }
    });
  }
  return out;
}

// mean over batch of -log softmax(logits)[label], over all columns
template <typename T>
Tensor<T> cross_entropy(Tape<T>* tape, Tensor<T> logits, const std::vector<int>& labels) {
  int r = logits.rows(), c = logits.cols();
  if (static_cast<int>(labels.size()) != r)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(r) + " rows");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(c) + " classes");
  bool rec = detail::track(tape, logits);
  std::vector<T> probs(static_cast<std::size_t>(r) * c);
  T total = T(0);
  for (int i = 0; i < r; ++i) {
    const T* zi = logits.data() + i * c;
    T mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    T s = T(0);
    for (int j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(zi[j] - mx);
      s += probs[i * c + j];
    }
    for (int j = 0; j < c; ++j) probs[i * c + j] /= s;
    total -= std::log(std::max(probs[i * c + labels[i]], T(1e-30)));
  }
  Tensor<T> out = Tensor<T>::from({1}, {total / static_cast<T>(r)}, rec);
  detail::check_finite(out, "cross_entropy");
  if (rec) {
    tape->record([logits, out, probs = std::move(probs), labels, r, c]() mutable {
      T go = out.grad()[0] / static_cast<T>(r);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          T d = probs[i * c + j] - (j == labels[i] ? T(1) : T(0));
          logits.grad()[i * c + j] += go * d;
        }
    });
  }
  return out;
}

// mean squared error over all elements
template <typename T>
Tensor<T> mse(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mse: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  return scale(tape, sqnorm(tape, sub(tape, a, b)), T(1) / static_cast<T>(a.size()));
}

// inverted dropout: train-time scaling by 1/(1-p), identity in eval
template <typename T>
Tensor<T> dropout(Tape<T>* tape, Tensor<T> a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (p == 0.0) return a;
  bool rec = detail::track(tape, a);
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rec);
  std::vector<T> mask(a.size());
  T keep_scale = T(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < a.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : T(0);
    out.v()[i] = a.v()[i] * mask[i];
  }
  detail::check_finite(out, "dropout");
  if (rec) {
    tape->record([a, out, mask = std::move(mask)]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i] * mask[i];
    });
  }
  return out;
}

}  // namespace gridcl
