#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msbridge/errors.hpp"
#include "msbridge/rng.hpp"

namespace msbridge {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

/// Dense row-major array of 32-bit reals. The universal value carrier:
/// samples, velocities, parameters, gradients.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::optional<std::vector<float>> grad;

  Tensor() = default;

  Tensor(std::vector<int> shape_, std::vector<float> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shape) {
    int64_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
  }

  static Tensor full(std::vector<int> shape, float v) {
    int64_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), v));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f) {
    Tensor t = zeros(std::move(shape));
    for (float& x : t.data) x = rng.normal(0.0f, stddev);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  int rows() const {
    require_2d();
    return shape[0];
  }
  int cols() const {
    require_2d();
    return shape[1];
  }

  float at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  float& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float x : data) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void require_2d() const {
    if (shape.size() != 2) {
      throw DimensionError("expected 2-d tensor, got shape " + shape_str(shape));
    }
  }

  /// Row i of a 2-d tensor as a fresh {1, cols} tensor.
  Tensor row(int i) const {
    require_2d();
    std::vector<float> out(data.begin() + static_cast<size_t>(i) * shape[1],
                           data.begin() + static_cast<size_t>(i + 1) * shape[1]);
    return Tensor({1, shape[1]}, std::move(out));
  }
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape) + " differ");
  }
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace detail

// Raw kernels. The autodiff tape and the plain inference path both call
// these, so a recorded forward and a plain forward are bitwise identical.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  a.require_2d();
  b.require_2d();
  if (a.shape[1] != b.shape[0]) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c = Tensor::zeros({m, n});
  const float* pa = a.data.data();
  const float* pb = b.data.data();
  float* pc = c.data.data();
  for (int i = 0; i < m; ++i) {
    const float* arow = pa + static_cast<size_t>(i) * k;
    float* crow = pc + static_cast<size_t>(i) * n;
    for (int q = 0; q < k; ++q) {
      const float av = arow[q];
      const float* brow = pb + static_cast<size_t>(q) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (float& x : c.data) x *= s;
  return c;
}

/// silu(x) = x * sigmoid(x)
inline Tensor silu(const Tensor& a) {
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (float& x : c.data) x = x * detail::sigmoid(x);
  return c;
}

inline Tensor tanh(const Tensor& a) {
  Tensor c = a;
  c.requires_grad = false;
  c.grad.reset();
  for (float& x : c.data) x = std::tanh(x);
  return c;
}

/// Adds a length-n row vector to every row of an m x n matrix.
inline Tensor add_rowvec(const Tensor& m, const Tensor& r) {
  m.require_2d();
  if (static_cast<int64_t>(m.shape[1]) != r.numel()) {
    throw DimensionError("add_rowvec: matrix " + shape_str(m.shape) + " vs row vector " +
                         shape_str(r.shape));
  }
  Tensor c = m;
  c.requires_grad = false;
  c.grad.reset();
  for (int i = 0; i < m.shape[0]; ++i) {
    float* crow = c.data.data() + static_cast<size_t>(i) * m.shape[1];
    for (int j = 0; j < m.shape[1]; ++j) crow[j] += r.data[j];
  }
  return c;
}

/// Column-wise concatenation of 2-d tensors with a shared row count.
inline Tensor concat_cols(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  int rows = parts[0]->rows();
  int total_cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " + shape_str(parts[0]->shape) +
                           " vs " + shape_str(p->shape));
    }
    total_cols += p->cols();
  }
  Tensor c = Tensor::zeros({rows, total_cols});
  int col0 = 0;
  for (const Tensor* p : parts) {
    const int pc = p->cols();
    for (int i = 0; i < rows; ++i) {
      const float* src = p->data.data() + static_cast<size_t>(i) * pc;
      float* dst = c.data.data() + static_cast<size_t>(i) * total_cols + col0;
      for (int j = 0; j < pc; ++j) dst[j] = src[j];
    }
    col0 += pc;
  }
  return c;
}

/// Gathers rows of a table: out.row(i) = table.row(ids[i]).
inline Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  table.require_2d();
  const int n = static_cast<int>(ids.size());
  const int d = table.shape[1];
  Tensor c = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= table.shape[0]) {
      throw LabelError("embed_rows: row id " + std::to_string(ids[i]) + " outside table with " +
                       std::to_string(table.shape[0]) + " rows");
    }
    const float* src = table.data.data() + static_cast<size_t>(ids[i]) * d;
    float* dst = c.data.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  return c;
}

/// Mean of squared differences over all elements.
inline float mse(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mse_loss");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return static_cast<float>(acc / static_cast<double>(a.data.size()));
}

}  // namespace msbridge
