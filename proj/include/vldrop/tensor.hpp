// Copyright 2026 The vldrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vldrop/error.hpp"

namespace vldrop {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

// Dense row-major array of doubles with an optional gradient slot.
//
// Invariants: values().size() == product of shape; grad, when present, has the
// same length. Tensors of rank 0 are not used; scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.size() != shape_size(shape_)) {
      throw DimensionError(detail::concat("tensor of shape ", to_string(shape_), " needs ", shape_size(shape_),
                                          " values, got ", values_.size()));
    }
  }

  // 2-D tensor from nested rows.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(m * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionError("ragged rows in Tensor::from_rows");
      v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(v));
  }

  static Tensor vector(std::initializer_list<double> v) { return Tensor({v.size()}, std::vector<double>(v)); }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.values_[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  Tensor& set_requires_grad(bool on) noexcept {
    requires_grad_ = on;
    return *this;
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }
  std::optional<std::vector<double>>& grad() noexcept { return grad_; }

  // Drops the gradient slot. Required before the next backward pass.
  void zero_grad() noexcept { grad_.reset(); }

  void set_grad(std::vector<double> g) {
    if (g.size() != values_.size()) {
      throw DimensionError(detail::concat("gradient length ", g.size(), " does not match tensor ", to_string(shape_)));
    }
    grad_ = std::move(g);
  }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    }
  }

  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

using ParamRefs = std::vector<std::reference_wrapper<Tensor>>;

// Numeric kernels shared by the differentiable graph and the plain evaluation
// path. Both call exactly these loops, so the two paths agree to the bit.
namespace kernels {

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(detail::concat(what, " expects a matrix, got shape ", to_string(t.shape())));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(
        detail::concat(what, ": shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape())));
  }
}

// C = A * B with A [m,k], B [k,n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError(detail::concat("matmul: inner dimensions disagree for ", to_string(a.shape()), " x ",
                                        to_string(b.shape())));
  }
  Tensor c({m, n});
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// G * B^T, G [m,n], B [k,n] -> [m,k].
inline std::vector<double> matmul_nt(std::span<const double> g, const Tensor& b, std::size_t m) {
  const std::size_t k = b.dim(0), n = b.dim(1);
  std::vector<double> out(m * k, 0.0);
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      out[i * k + p] = s;
    }
  }
  return out;
}

// A^T * G, A [m,k], G [m,n] -> [k,n].
inline std::vector<double> matmul_tn(const Tensor& a, std::span<const double> g, std::size_t n) {
  const std::size_t m = a.dim(0), k = a.dim(1);
  std::vector<double> out(k * n, 0.0);
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* orow = out.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "elementwise_mul");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
  return c;
}

inline Tensor relu(const Tensor& a) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
  return c;
}

// Row-wise bias: X [m,n] + b [n]. This is a named operation, not implicit
// broadcasting; shapes are checked explicitly.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_matrix(x, "add_bias");
  if (b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw DimensionError(
        detail::concat("add_bias: bias ", to_string(b.shape()), " does not match matrix ", to_string(x.shape())));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor c(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = x[i * n + j] + b[j];
  return c;
}

// Row-wise max-stabilized softmax.
inline Tensor softmax_rows(const Tensor& logits) {
  require_matrix(logits, "softmax");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = logits.values().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      p[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= z;
  }
  return p;
}

// Index of the largest entry of each row; ties go to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& t) {
  require_matrix(t, "argmax");
  const std::size_t m = t.dim(0), n = t.dim(1);
  std::vector<int> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (t[i * n + j] > t[i * n + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace kernels

}  // namespace vldrop
