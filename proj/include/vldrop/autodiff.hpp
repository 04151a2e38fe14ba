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

// Tape-based reverse-mode differentiation over Tensor.
//
// A Graph is a ComputationRecord: an append-only list of entries in
// topological order. Leaves reference caller-owned tensors (parameters) or
// own a constant (inputs, masks). backward() walks the list once in reverse
// and writes d(loss)/d(leaf) into the grad slot of every leaf tensor that
// has requires_grad set.
//
// Conventions:
//   * relu'(0) = 0.
//   * backward refuses to run if any target leaf already holds a gradient;
//     call Tensor::zero_grad() between passes. Nothing accumulates silently.
//   * no broadcasting: binary ops need identical shapes; bias addition is its
//     own op (add_bias) with an explicit [m,n] + [n] contract.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vldrop/error.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

enum class OpTag { leaf, constant, matmul, add, add_bias, mul, scale, relu, sum, sum_squares, softmax_xent };

inline const char* op_name(OpTag t) {
  switch (t) {
    case OpTag::leaf: return "leaf";
    case OpTag::constant: return "constant";
    case OpTag::matmul: return "matmul";
    case OpTag::add: return "add";
    case OpTag::add_bias: return "add_bias";
    case OpTag::mul: return "elementwise_mul";
    case OpTag::scale: return "scale";
    case OpTag::relu: return "relu";
    case OpTag::sum: return "sum";
    case OpTag::sum_squares: return "sum_squares";
    case OpTag::softmax_xent: return "softmax_cross_entropy";
  }
  return "?";
}

// Handle to a graph entry. Only meaningful for the Graph that produced it.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

class Graph {
 public:
  struct Entry {
    OpTag op = OpTag::constant;
    std::size_t lhs = npos;
    std::size_t rhs = npos;
    Tensor value;              // owned result (empty for leaves)
    Tensor* leaf = nullptr;    // caller-owned tensor for OpTag::leaf
    double scalar = 0.0;       // scale factor
    std::vector<double> saved; // softmax probabilities
    std::vector<int> labels;   // cross-entropy targets
    bool needs_grad = false;
  };

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Registers a caller-owned tensor. The tensor must outlive the graph.
  // Registering the same tensor twice returns the same handle.
  Var leaf(Tensor& t) {
    if (auto it = leaf_index_.find(&t); it != leaf_index_.end()) return Var{it->second};
    Entry e;
    e.op = OpTag::leaf;
    e.leaf = &t;
    e.needs_grad = t.requires_grad();
    leaf_index_.emplace(&t, entries_.size());
    return push(std::move(e));
  }

  Var constant(Tensor t) {
    Entry e;
    e.op = OpTag::constant;
    e.value = std::move(t);
    return push(std::move(e));
  }

  const Tensor& value(Var v) const {
    const Entry& e = entries_.at(v.id);
    return e.op == OpTag::leaf ? *e.leaf : e.value;
  }

  Var matmul(Var a, Var b) { return binary(OpTag::matmul, a, b, kernels::matmul(value(a), value(b))); }
  Var add(Var a, Var b) { return binary(OpTag::add, a, b, kernels::add(value(a), value(b))); }
  Var add_bias(Var x, Var bias) { return binary(OpTag::add_bias, x, bias, kernels::add_bias(value(x), value(bias))); }
  Var mul(Var a, Var b) { return binary(OpTag::mul, a, b, kernels::mul(value(a), value(b))); }
  Var relu(Var a) { return unary(OpTag::relu, a, kernels::relu(value(a))); }

  Var scale(Var a, double c) {
    Var out = unary(OpTag::scale, a, kernels::scale(value(a), c));
    entries_[out.id].scalar = c;
    return out;
  }

  Var sum(Var a) {
    double s = 0.0;
    for (double v : value(a).values()) s += v;
    return unary(OpTag::sum, a, Tensor({1}, {s}));
  }

  Var sum_squares(Var a) {
    double s = 0.0;
    for (double v : value(a).values()) s += v * v;
    return unary(OpTag::sum_squares, a, Tensor({1}, {s}));
  }

  // Mean over the batch of -log softmax(logits)[label].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& z = value(logits);
    kernels::require_matrix(z, "softmax_cross_entropy");
    const std::size_t m = z.dim(0), n = z.dim(1);
    if (labels.size() != m) {
      throw DimensionError(detail::concat("softmax_cross_entropy: ", labels.size(), " labels for ", m, " rows"));
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= n) {
        throw ValidationError(detail::concat("softmax_cross_entropy: label ", y, " outside [0, ", n, ")"));
      }
    }
    // log-sum-exp with max subtraction; the loss is computed from the shifted
    // logits directly so huge margins give exactly 0 instead of overflowing.
    std::vector<double> probs(m * n);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = z.values().data() + i * n;
      double mx = row[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double zsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) zsum += std::exp(row[j] - mx);
      const double lse = std::log(zsum);
      for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(row[j] - mx - lse);
      total += lse - (row[labels[i]] - mx);
    }
    Var out = unary(OpTag::softmax_xent, logits, Tensor({1}, {total / static_cast<double>(m)}));
    Entry& e = entries_[out.id];
    e.saved = std::move(probs);
    e.labels.assign(labels.begin(), labels.end());
    return out;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  void backward(Var loss) {
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
      throw UsageError("backward: loss must be a scalar, got shape " + to_string(lv.shape()));
    }
    for (const Entry& e : entries_) {
      if (e.op == OpTag::leaf && e.needs_grad && e.leaf->has_grad()) {
        throw UsageError("backward: a leaf already holds a gradient; call zero_grad() before the next pass");
      }
    }

    std::vector<std::vector<double>> adj(entries_.size());
    adj[loss.id].assign(1, 1.0);

    for (std::size_t idx = loss.id + 1; idx-- > 0;) {
      Entry& e = entries_[idx];
      if (!e.needs_grad || adj[idx].empty()) continue;
      const std::vector<double>& g = adj[idx];
      switch (e.op) {
        case OpTag::leaf:
          e.leaf->set_grad(g);
          break;
        case OpTag::constant:
          break;
        case OpTag::matmul: {
          const Tensor& a = value(Var{e.lhs});
          const Tensor& b = value(Var{e.rhs});
          const std::size_t m = a.dim(0), n = b.dim(1);
          if (wants(e.lhs)) accumulate(adj[e.lhs], kernels::matmul_nt(g, b, m));
          if (wants(e.rhs)) accumulate(adj[e.rhs], kernels::matmul_tn(a, g, n));
          break;
        }
        case OpTag::add:
          if (wants(e.lhs)) accumulate(adj[e.lhs], g);
          if (wants(e.rhs)) accumulate(adj[e.rhs], g);
          break;
        case OpTag::add_bias: {
          if (wants(e.lhs)) accumulate(adj[e.lhs], g);
          if (wants(e.rhs)) {
            const std::size_t n = value(Var{e.rhs}).dim(0);
            const std::size_t m = g.size() / n;
            std::vector<double> gb(n, 0.0);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            accumulate(adj[e.rhs], gb);
          }
          break;
        }
        case OpTag::mul: {
          const Tensor& a = value(Var{e.lhs});
          const Tensor& b = value(Var{e.rhs});
          if (wants(e.lhs)) {
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b[i];
            accumulate(adj[e.lhs], ga);
          }
          if (wants(e.rhs)) {
            std::vector<double> gb(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a[i];
            accumulate(adj[e.rhs], gb);
          }
          break;
        }
        case OpTag::scale: {
          std::vector<double> ga(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * e.scalar;
          accumulate(adj[e.lhs], ga);
          break;
        }
        case OpTag::relu: {
          const Tensor& a = value(Var{e.lhs});
          std::vector<double> ga(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = a[i] > 0.0 ? g[i] : 0.0;
          accumulate(adj[e.lhs], ga);
          break;
        }
        case OpTag::sum: {
          accumulate(adj[e.lhs], std::vector<double>(value(Var{e.lhs}).size(), g[0]));
          break;
        }
        case OpTag::sum_squares: {
          const Tensor& a = value(Var{e.lhs});
          std::vector<double> ga(a.size());
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] = 2.0 * a[i] * g[0];
          accumulate(adj[e.lhs], ga);
          break;
        }
        case OpTag::softmax_xent: {
          const std::size_t m = e.labels.size();
          const std::size_t n = e.saved.size() / m;
          std::vector<double> gz(e.saved);
          const double inv = g[0] / static_cast<double>(m);
          for (std::size_t i = 0; i < m; ++i) gz[i * n + e.labels[i]] -= 1.0;
          for (double& v : gz) v *= inv;
          accumulate(adj[e.lhs], gz);
          break;
        }
      }
      if (idx != loss.id) std::vector<double>().swap(adj[idx]);
    }
  }

 private:
  Var push(Entry e) {
    entries_.push_back(std::move(e));
    return Var{entries_.size() - 1};
  }

  void check_var(Var v) const {
    if (v.id >= entries_.size()) throw UsageError("graph: handle does not belong to this graph");
  }

  Var unary(OpTag op, Var a, Tensor out) {
    check_var(a);
    Entry e;
    e.op = op;
    e.lhs = a.id;
    e.value = std::move(out);
    e.needs_grad = entries_[a.id].needs_grad;
    return push(std::move(e));
  }

  Var binary(OpTag op, Var a, Var b, Tensor out) {
    check_var(a);
    check_var(b);
    Entry e;
    e.op = op;
    e.lhs = a.id;
    e.rhs = b.id;
    e.value = std::move(out);
    e.needs_grad = entries_[a.id].needs_grad || entries_[b.id].needs_grad;
    return push(std::move(e));
  }

  bool wants(std::size_t id) const { return entries_[id].needs_grad; }

  static void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
    if (dst.empty()) {
      dst = src;
      return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  std::vector<Entry> entries_;
  std::unordered_map<const Tensor*, std::size_t> leaf_index_;
};

// Central finite differences, one coordinate at a time, perturbing the
// parameter tensors in place and restoring them afterwards.
//
// `loss` reads the current parameter values and returns a scalar.
template <typename Loss>
std::vector<std::vector<double>> finite_diff_grad(Loss&& loss, const ParamRefs& params, double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_grad: eps must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (Tensor& t : params) {
    std::vector<double> g(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = loss();
      t[i] = orig - eps;
      const double fm = loss();
      t[i] = orig;
      g[i] = (fp - fm) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Flat-vector variant: f maps a point to a scalar.
template <typename Fn>
std::vector<double> finite_diff_grad(Fn&& f, std::vector<double> point, double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite_diff_grad: eps must be positive");
  std::vector<double> g(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + eps;
    const double fp = f(std::as_const(point));
    point[i] = orig - eps;
    const double fm = f(std::as_const(point));
    point[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace vldrop
