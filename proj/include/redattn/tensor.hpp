#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage; ops are free functions that
// execute eagerly and, when a Tape is active and an input requires gradients,
// append a pullback record. Records are appended in execution order, so the
// tape is topologically ordered by construction and one backward() replays it
// exactly once in reverse.
//
// Backward uses a scratch adjoint buffer per tensor and flushes adjoints into
// the persistent grad buffers at the end of the sweep, so grads accumulate
// across backward calls and two sweeps without zeroing double them exactly.
//
// A tape and everything it references belong to one thread for the duration
// of a forward/backward pass; independent passes may run on other threads.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redattn/errors.hpp"

namespace redattn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <typename T>
class Tape;

namespace detail {

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;     // persistent; accumulates across backward passes
  std::vector<T> adjoint;  // scratch for one backward sweep
  bool requires_grad = false;
  Tape<T>* producer = nullptr;   // tape that recorded the producing op
  std::uint64_t touch_tag = 0;   // id of the last tape this node was seen on
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode<T>>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value.assign(detail::numel(t.node_->shape), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->value) v = fill;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (detail::numel(shape) != values.size())
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values do not fill shape " + shape_str(shape));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows,
                          bool requires_grad = false) {
    std::size_t m = rows.size();
    std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<T> values;
    values.reserve(m * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionError("tensor: ragged row list");
      values.insert(values.end(), r.begin(), r.end());
    }
    return from({m, n}, std::move(values), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = T(1);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.size() > 0 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
  bool is_scalar() const { return size() == 1; }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T& at(std::size_t i, std::size_t j) { return node_->value[i * cols() + j]; }
  T at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }
  T& at(std::size_t i) { return node_->value[i]; }
  T at(std::size_t i) const { return node_->value[i]; }

  T item() const {
    if (!is_scalar()) throw UsageError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }

  std::span<const T> grad() const {
    if (node_->grad.empty()) throw UsageError("grad: no gradient has been accumulated yet");
    return node_->grad;
  }

  std::span<T> grad() {
    if (node_->grad.empty()) throw UsageError("grad: no gradient has been accumulated yet");
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  // Deep copy of values only; grad/tape state is not carried over.
  Tensor clone() const {
    Tensor t;
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  detail::TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode<T>>& handle() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode<T>> node_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class Tape {
 public:
  Tape() : prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  std::size_t size() const { return records_.size(); }

  void record(const Tensor<T>& out, std::initializer_list<Tensor<T>> inputs,
              std::function<void()> pullback) {
    touch(out);
    for (const auto& in : inputs) touch(in);
    out.node()->producer = this;
    records_.push_back(std::move(pullback));
  }

  void backward(const Tensor<T>& loss) {
    if (!loss.is_scalar())
      throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (loss.node()->producer != this)
      throw UsageError("backward: tensor was not produced on this tape");
    for (auto& n : touched_) n->adjoint.assign(n->value.size(), T(0));
    loss.node()->adjoint[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    for (auto& n : touched_) {
      if (!n->requires_grad) continue;
      if (n->grad.empty()) n->grad.assign(n->value.size(), T(0));
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->adjoint[i];
    }
  }

 private:
  void touch(const Tensor<T>& t) {
    if (t.node()->touch_tag == id_) return;
    t.node()->touch_tag = id_;
    touched_.push_back(t.handle());
  }

  std::vector<std::function<void()>> records_;
  std::vector<std::shared_ptr<detail::TensorNode<T>>> touched_;
  Tape* prev_;
  // Never reused, so a node tagged by a dead tape can't be mistaken for ours.
  std::uint64_t id_ = next_id_.fetch_add(1, std::memory_order_relaxed);
  static inline std::atomic<std::uint64_t> next_id_{1};
  static inline thread_local Tape* current_ = nullptr;
};

// Runs the reverse sweep of the tape that produced `loss`.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.node()->producer == nullptr)
    throw UsageError("backward: tensor was not produced by any recorded tape");
  loss.node()->producer->backward(loss);
}

// ---------------------------------------------------------------------------
// Matrix kernels (row-major, accumulate into c)

namespace detail {

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = a[i * k + p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <typename T>
bool tracing(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations

// Standard matrix product a[m x k] * b[k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm_nn(a.data(), b.data(), out.data(), m, k, n);
  if (detail::tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a, b}, [a, b, out, m, k, n] {
      const auto* no = out.node();
      if (a.requires_grad())
        detail::gemm_nt(no->adjoint.data(), b.data(), a.node()->adjoint.data(), m, n, k);
      if (b.requires_grad())
        detail::gemm_tn(a.data(), no->adjoint.data(), b.node()->adjoint.data(), m, k, n);
    });
  }
  return out;
}

// a[m x k] * b[n x k]^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: cannot multiply " + shape_str(a.shape()) +
                         " by transpose of " + shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm_nt(a.data(), b.data(), out.data(), m, k, n);
  if (detail::tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a, b}, [a, b, out, m, k, n] {
      const auto* no = out.node();
      if (a.requires_grad())
        detail::gemm_nn(no->adjoint.data(), b.data(), a.node()->adjoint.data(), m, n, k);
      if (b.requires_grad())
        detail::gemm_tn(no->adjoint.data(), a.data(), b.node()->adjoint.data(), m, n, k);
    });
  }
  return out;
}

// Pointwise a + b. Also accepts a 1 x n row against an m x n matrix (either
// argument order); the row is broadcast over the rows of the matrix.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const bool same = a.shape() == b.shape();
  const bool a_row = !same && a.rank() == 2 && b.rank() == 2 && a.rows() == 1 &&
                     a.cols() == b.cols();
  const bool b_row = !same && a.rank() == 2 && b.rank() == 2 && b.rows() == 1 &&
                     b.cols() == a.cols();
  if (!same && !a_row && !b_row)
    throw DimensionError("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const Tensor<T>& big = a_row ? b : a;
  const Tensor<T>& row = a_row ? a : b;
  Tensor<T> out = Tensor<T>::zeros(big.shape());
  const std::size_t n = out.size();
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  } else {
    const std::size_t w = big.cols();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = big.data()[i] + row.data()[i % w];
  }
  if (detail::tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a, b}, [big, row, out, same] {
      const auto& oadj = out.node()->adjoint;
      if (big.requires_grad()) {
        auto& g = big.node()->adjoint;
        for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i];
      }
      if (row.requires_grad()) {
        auto& g = row.node()->adjoint;
        if (same) {
          for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i];
        } else {
          const std::size_t w = row.size();
          for (std::size_t i = 0; i < oadj.size(); ++i) g[i % w] += oadj[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a, b}, [a, b, out] {
      const auto& oadj = out.node()->adjoint;
      if (a.requires_grad()) {
        auto& g = a.node()->adjoint;
        for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i];
      }
      if (b.requires_grad()) {
        auto& g = b.node()->adjoint;
        for (std::size_t i = 0; i < oadj.size(); ++i) g[i] -= oadj[i];
      }
    });
  }
  return out;
}

// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a, b}, [a, b, out] {
      const auto& oadj = out.node()->adjoint;
      if (a.requires_grad()) {
        auto& g = a.node()->adjoint;
        for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& g = b.node()->adjoint;
        for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * s;
  if (detail::tracing<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a}, [a, out, s] {
      const auto& oadj = out.node()->adjoint;
      auto& g = a.node()->adjoint;
      for (std::size_t i = 0; i < oadj.size(); ++i) g[i] += oadj[i] * s;
    });
  }
  return out;
}

// Scalar sum of all entries.
template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::tracing<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a}, [a, out] {
      const T seed = out.node()->adjoint[0];
      auto& g = a.node()->adjoint;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;
    });
  }
  return out;
}

// Row-wise softmax with max subtraction. Finite input gives finite output
// rows that are non-negative and sum to one.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  detail::require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = a.data() + i * n;
    T* y = out.data() + i * n;
    T mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
    T denom = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      denom += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= denom;
  }
  if (detail::tracing<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {a}, [a, out, m, n] {
      const auto& oadj = out.node()->adjoint;
      auto& g = a.node()->adjoint;
      for (std::size_t i = 0; i < m; ++i) {
        const T* y = out.data() + i * n;
        const T* dy = oadj.data() + i * n;
        T dot = T(0);
        for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
        T* gi = g.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gi[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

// Mean over rows of -log softmax(logits)[i, target_i], computed via
// log-sum-exp so large logits cannot overflow.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int32_t>& targets) {
  detail::require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " logit rows");
  if (m == 0) throw UsageError("cross_entropy: no rows");
  for (std::size_t i = 0; i < m; ++i)
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " outside vocabulary of size " + std::to_string(v));

  std::vector<T> probs(m * v);
  T total = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = logits.data() + i * v;
    T* p = probs.data() + i * v;
    T mx = x[0];
    for (std::size_t j = 1; j < v; ++j) mx = x[j] > mx ? x[j] : mx;
    T denom = T(0);
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(x[j] - mx);
      denom += p[j];
    }
    for (std::size_t j = 0; j < v; ++j) p[j] /= denom;
    const T lse = mx + std::log(denom);
    total += lse - x[static_cast<std::size_t>(targets[i])];
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(m));
  if (detail::tracing<T>({&logits})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {logits},
                               [logits, out, targets, probs = std::move(probs), m, v] {
      const T seed = out.node()->adjoint[0] / static_cast<T>(m);
      auto& g = logits.node()->adjoint;
      for (std::size_t i = 0; i < m; ++i) {
        const T* p = probs.data() + i * v;
        T* gi = g.data() + i * v;
        for (std::size_t j = 0; j < v; ++j) gi[j] += seed * p[j];
        gi[static_cast<std::size_t>(targets[i])] -= seed;
      }
    });
  }
  return out;
}

// Gathers table rows by id; backward scatters adjoint rows into the table.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::int32_t>& ids) {
  detail::require_matrix(table, "embedding_lookup");
  const std::size_t v = table.rows(), d = table.cols();
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " outside table of " + std::to_string(v) + " rows");
  Tensor<T> out = Tensor<T>::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* src = table.data() + static_cast<std::size_t>(ids[i]) * d;
    T* dst = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (detail::tracing<T>({&table})) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(out, {table}, [table, out, ids, d] {
      const auto& oadj = out.node()->adjoint;
      auto& g = table.node()->adjoint;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        T* dst = g.data() + static_cast<std::size_t>(ids[i]) * d;
        const T* src = oadj.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

}  // namespace redattn
