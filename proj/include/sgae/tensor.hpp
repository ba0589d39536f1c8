#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to its storage node, so copies alias the same
// buffer (parameters are passed around by handle). Operations record onto the
// thread's active Tape only when a tape is active and at least one operand
// requires a gradient; with no active tape they are plain numeric kernels.
//
// Broadcasting is limited to two cases: identical shapes, and a one-element
// tensor combined with any tensor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgae/errors.hpp"

namespace sgae {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<TensorNode>()) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("tensor buffer of length " + std::to_string(values.size()) +
                           " does not fit shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }
  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    auto n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  std::vector<double> values() const { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t row, std::size_t col) const { return node_->data[row * dim(1) + col]; }

  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Deep copy of the values as a fresh leaf.
  Tensor detach(bool requires_grad = false) const {
    return Tensor(node_->shape, node_->data, requires_grad);
  }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Ordered record of differentiable operations. Backward replays the records in
/// exact reverse order, which is a valid reverse topological order because
/// every op records after its inputs exist.
class Tape {
 public:
  struct Record {
    std::string_view op;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void push(Record record) { records_.push_back(std::move(record)); }
  std::size_t size() const { return records_.size(); }
  const Record& record(std::size_t i) const { return records_.at(i); }
  void clear() { records_.clear(); }

  /// Accumulates d(output)/d(leaf) into every leaf that requires a gradient.
  /// Intermediate gradients are reset on each call, leaf gradients are not.
  void backward(const Tensor& output) {
    if (!output.defined() || output.numel() != 1) {
      throw ContractError("backward() needs a scalar output");
    }
    TensorNode* out = output.node();
    if (!out->requires_grad) return;
    if (out->is_leaf) {
      out->ensure_grad()[0] += 1.0;
      return;
    }
    std::size_t last = records_.size();
    for (std::size_t i = records_.size(); i-- > 0;) {
      if (records_[i].output.get() == out) {
        last = i;
        break;
      }
    }
    if (last == records_.size()) {
      throw ContractError("backward(): output was not recorded on this tape");
    }
    for (std::size_t i = 0; i <= last; ++i) {
      auto& grad = records_[i].output->grad;
      grad.assign(records_[i].output->data.size(), 0.0);
    }
    out->grad[0] = 1.0;
    for (std::size_t i = last + 1; i-- > 0;) records_[i].backward();
  }

  static Tape* active() { return active_slot(); }

  /// Makes `tape` the active tape for the current thread until destruction.
  /// Passing nullptr suspends recording.
  class Scope {
   public:
    explicit Scope(Tape* tape) : previous_(active_slot()) { active_slot() = tape; }
    explicit Scope(Tape& tape) : Scope(&tape) {}
    ~Scope() { active_slot() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  static Tape*& active_slot() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  std::vector<Record> records_;
};

/// Suspends recording for the enclosing scope.
class NoTapeScope {
 public:
  NoTapeScope() : scope_(nullptr) {}

 private:
  Tape::Scope scope_;
};

inline void backward(const Tensor& output, Tape& tape) { tape.backward(output); }

namespace detail {

inline void require_finite(const Tensor& t, std::string_view op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by " + std::string(op));
  }
}

template <class Fn>
void record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& out,
            Fn&& fn) {
  require_finite(out, op);
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (!any) return;
  out.node()->requires_grad = true;
  out.node()->is_leaf = false;
  Tape::Record rec;
  rec.op = op;
  for (const Tensor* in : inputs) rec.inputs.push_back(in->shared());
  rec.output = out.shared();
  rec.backward = std::forward<Fn>(fn);
  tape->push(std::move(rec));
}

template <class Fn>
void record_many(std::string_view op, const std::vector<Tensor>& inputs, const Tensor& out, Fn&& fn) {
  require_finite(out, op);
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return;
  out.node()->requires_grad = true;
  out.node()->is_leaf = false;
  Tape::Record rec;
  rec.op = op;
  for (const auto& in : inputs) rec.inputs.push_back(in.shared());
  rec.output = out.shared();
  rec.backward = std::forward<Fn>(fn);
  tape->push(std::move(rec));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

// Elementwise map with derivative expressed through input x and output y.
template <class F, class D>
Tensor unary(const Tensor& a, std::string_view op, F f, D dfdx) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  Tensor y(a.shape(), std::move(out));
  record(op, {&a}, y, [an = a.node(), yn = y.node(), dfdx] {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += yn->grad[i] * dfdx(an->data[i], yn->data[i]);
  });
  return y;
}

// Binary map over identical shapes or scalar-with-tensor.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view op, F f, DA dfda, DB dfdb) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar) require_same_shape(a, b, op);
  const Shape& shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  auto xa = a.data();
  auto xb = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xa[a_scalar ? 0 : i], xb[b_scalar ? 0 : i]);
  Tensor y(shape, std::move(out));
  record(op, {&a, &b}, y, [an = a.node(), bn = b.node(), yn = y.node(), a_scalar, b_scalar, dfda, dfdb] {
    const std::size_t count = yn->data.size();
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < count; ++i) {
        double xa_i = an->data[a_scalar ? 0 : i];
        double xb_i = bn->data[b_scalar ? 0 : i];
        ga[a_scalar ? 0 : i] += yn->grad[i] * dfda(xa_i, xb_i);
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < count; ++i) {
        double xa_i = an->data[a_scalar ? 0 : i];
        double xb_i = bn->data[b_scalar ? 0 : i];
        gb[b_scalar ? 0 : i] += yn->grad[i] * dfdb(xa_i, xb_i);
      }
    }
  });
  return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// [m x k] * [k x n] -> [m x n], or [m x k] * [k] -> [m].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  if (b.rank() != 1 && b.rank() != 2) throw DimensionError("matmul: rhs must be a vector or matrix");
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor y = b.rank() == 2 ? Tensor({m, n}, std::move(out)) : Tensor({m}, std::move(out));
  detail::record("matmul", {&a, &b}, y, [an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
    const auto& g = yn->grad;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->data[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an->data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
  return y;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  auto A = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  Tensor y({c, r}, std::move(out));
  detail::record("transpose", {&a}, y, [an = a.node(), yn = y.node(), r, c] {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yn->grad[j * r + i];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

/// Subgradient at exactly zero is 0.
inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Reductions and normalisation

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor y = Tensor::scalar(total);
  detail::record("sum", {&a}, y, [an = a.node(), yn = y.node()] {
    if (!an->requires_grad) return;
    auto& ga = an->ensure_grad();
    for (auto& g : ga) g += yn->grad[0];
  });
  return y;
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "dot");
  return sum(mul(a, b));
}

/// Max-subtracted softmax over a vector.
inline Tensor softmax(const Tensor& x) {
  detail::require_rank(x, 1, "softmax");
  auto v = x.data();
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) z += (out[i] = std::exp(v[i] - peak));
  for (auto& o : out) o /= z;
  Tensor y({v.size()}, std::move(out));
  detail::record("softmax", {&x}, y, [xn = x.node(), yn = y.node()] {
    if (!xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    double inner = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) inner += yn->grad[i] * yn->data[i];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->data[i] * (yn->grad[i] - inner);
  });
  return y;
}

inline Tensor log_softmax(const Tensor& x) {
  detail::require_rank(x, 1, "log_softmax");
  auto v = x.data();
  const double peak = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double e : v) z += std::exp(e - peak);
  const double log_z = peak + std::log(z);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - log_z;
  Tensor y({v.size()}, std::move(out));
  detail::record("log_softmax", {&x}, y, [xn = x.node(), yn = y.node()] {
    if (!xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    double total = 0.0;
    for (double g : yn->grad) total += g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i] - std::exp(yn->data[i]) * total;
  });
  return y;
}

/// Arithmetic mean of equally shaped tensors.
inline Tensor mean_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("mean_rows: empty input list");
  for (const auto& x : xs) detail::require_same_shape(xs.front(), x, "mean_rows");
  const std::size_t n = xs.front().numel();
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> out(n, 0.0);
  for (const auto& x : xs) {
    auto v = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] += v[i];
  }
  for (auto& o : out) o *= inv;
  Tensor y(xs.front().shape(), std::move(out));
  std::vector<TensorNode*> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  detail::record_many("mean_rows", xs, y, [nodes, yn = y.node(), inv] {
    for (TensorNode* xn : nodes) {
      if (!xn->requires_grad) continue;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += inv * yn->grad[i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenates vectors end to end, or matrices with equal column counts row-wise.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: empty input list");
  const std::size_t rank = parts.front().rank();
  if (rank != 1 && rank != 2) throw DimensionError("concat: only vectors or matrices");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: mixed ranks");
    if (rank == 2 && p.dim(1) != parts.front().dim(1)) throw DimensionError("concat: column count mismatch");
    rows += p.dim(0);
  }
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Tensor y = rank == 1 ? Tensor({rows}, std::move(out)) : Tensor({rows, parts.front().dim(1)}, std::move(out));
  std::vector<TensorNode*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  detail::record_many("concat", parts, y, [nodes, offsets, yn = y.node()] {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (!nodes[k]->requires_grad) continue;
      auto& g = nodes[k]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[offsets[k] + i];
    }
  });
  return y;
}

/// Stacks M equal-length vectors into an [M x d] matrix.
inline Tensor stack(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack: empty input list");
  for (const auto& r : rows) {
    detail::require_rank(r, 1, "stack");
    detail::require_same_shape(rows.front(), r, "stack");
  }
  Tensor flat = concat(rows);
  // Reshape shares no storage with `flat`; route gradients through a copy op.
  Tensor y({rows.size(), rows.front().numel()}, flat.values());
  detail::record("stack", {&flat}, y, [fn = flat.node(), yn = y.node()] {
    if (!fn->requires_grad) return;
    auto& g = fn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
  });
  return y;
}

inline Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  detail::require_rank(x, 1, "slice");
  if (length == 0 || offset + length > x.numel()) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") outside vector of length " + std::to_string(x.numel()));
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  Tensor y({length}, std::move(out));
  detail::record("slice", {&x}, y, [xn = x.node(), yn = y.node(), offset] {
    if (!xn->requires_grad) return;
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < yn->grad.size(); ++i) g[offset + i] += yn->grad[i];
  });
  return y;
}

inline std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes) {
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (x.rank() != 1 || total != x.numel()) throw DimensionError("split: sizes do not cover the vector");
  std::vector<Tensor> parts;
  std::size_t offset = 0;
  for (auto s : sizes) {
    parts.push_back(slice(x, offset, s));
    offset += s;
  }
  return parts;
}

/// Column j of a matrix; the lookup form of multiplying by a one-hot vector.
inline Tensor column(const Tensor& w, std::size_t j) {
  detail::require_rank(w, 2, "column");
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  if (j >= cols) {
    throw DimensionError("column: index " + std::to_string(j) + " out of range for " + shape_str(w.shape()));
  }
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = w.data()[i * cols + j];
  Tensor y({rows}, std::move(out));
  detail::record("column", {&w}, y, [wn = w.node(), yn = y.node(), j, rows, cols] {
    if (!wn->requires_grad) return;
    auto& g = wn->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i) g[i * cols + j] += yn->grad[i];
  });
  return y;
}

/// Element i of a vector as a one-element tensor.
inline Tensor pick(const Tensor& x, std::size_t i) {
  detail::require_rank(x, 1, "pick");
  if (i >= x.numel()) throw DimensionError("pick: index out of range");
  Tensor y = Tensor::scalar(x.data()[i]);
  detail::record("pick", {&x}, y, [xn = x.node(), yn = y.node(), i] {
    if (!xn->requires_grad) return;
    xn->ensure_grad()[i] += yn->grad[0];
  });
  return y;
}

/// Adds a length-n vector to every row of an [M x n] matrix.
inline Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  detail::require_rank(m, 2, "add_rowwise");
  detail::require_rank(v, 1, "add_rowwise");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.numel() != cols) throw DimensionError("add_rowwise: vector length differs from column count");
  std::vector<double> out(m.data().begin(), m.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += v.data()[c];
  Tensor y({rows, cols}, std::move(out));
  detail::record("add_rowwise", {&m, &v}, y, [mn = m.node(), vn = v.node(), yn = y.node(), rows, cols] {
    if (mn->requires_grad) {
      auto& g = mn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
    }
    if (vn->requires_grad) {
      auto& g = vn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += yn->grad[r * cols + c];
    }
  });
  return y;
}

}  // namespace sgae
