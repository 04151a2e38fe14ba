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

// L2 penalty and the linear-model dropout oracles.
//
// For a linear predictor w.x and squared loss, marginalizing the inverted
// dropout mask gives
//
//   E_m[(y - w.(m (*) x)/(1-rate))^2] = (y - w.x)^2 + rate/(1-rate) * sum_i w_i^2 x_i^2
//
// expected_dropout_loss_enumerated() computes the left side by summing over
// all 2^n masks; expected_dropout_loss_closed_form() computes the right side.
// The two are independent routes and are checked against each other.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vldrop/dropout.hpp"
#include "vldrop/error.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

inline double l2_penalty(std::span<const double> params, double coeff) {
  if (coeff < 0.0) throw ValidationError(detail::concat("l2_penalty: coefficient must be >= 0, got ", coeff));
  double s = 0.0;
  for (double w : params) s += w * w;
  return coeff * s;
}

inline std::vector<double> l2_penalty_grad(std::span<const double> params, double coeff) {
  if (coeff < 0.0) throw ValidationError(detail::concat("l2_penalty: coefficient must be >= 0, got ", coeff));
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g[i] = 2.0 * coeff * params[i];
  return g;
}

// Sum over the whole parameter list.
inline double l2_penalty(const ParamRefs& params, double coeff) {
  double s = 0.0;
  for (const Tensor& t : params) s += l2_penalty(t.values(), coeff);
  return s;
}

inline constexpr std::size_t kMaxEnumeratedFeatures = 20;

namespace detail {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void check_linear_instance(std::span<const double> w, std::span<const double> x, double rate) {
  if (w.size() != x.size()) {
    throw DimensionError(concat("linear instance: ", w.size(), " weights for ", x.size(), " features"));
  }
  validate_dropout_rate(rate);
}

// Calls visit(probability, masked_score) for every mask, where masked_score
// is w.(m (*) x)/(1-rate). Masks enumerate as the bits of a counter.
template <typename Visit>
void for_each_mask(std::span<const double> w, std::span<const double> x, double rate, Visit&& visit) {
  const std::size_t n = w.size();
  if (n > kMaxEnumeratedFeatures) {
    throw CapacityError(concat("exact mask enumeration supports at most ", kMaxEnumeratedFeatures,
                               " features, got ", n));
  }
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t bits = 0; bits < count; ++bits) {
    double p = 1.0;
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((bits >> i) & 1U) {
        p *= keep;
        score += w[i] * x[i];
      } else {
        p *= rate;
      }
    }
    if (p == 0.0) continue;
    visit(p, score * inv_keep);
  }
}

}  // namespace detail

inline double expected_dropout_loss_enumerated(std::span<const double> w, std::span<const double> x, double y,
                                               double rate) {
  detail::check_linear_instance(w, x, rate);
  detail::CompensatedSum acc;
  detail::for_each_mask(w, x, rate, [&](double p, double score) {
    const double r = y - score;
    acc.add(p * r * r);
  });
  return acc.value();
}

inline double expected_dropout_loss_closed_form(std::span<const double> w, std::span<const double> x, double y,
                                                double rate) {
  detail::check_linear_instance(w, x, rate);
  double dot = 0.0, penalty = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    dot += w[i] * x[i];
    penalty += w[i] * w[i] * x[i] * x[i];
  }
  const double r = y - dot;
  return r * r + rate / (1.0 - rate) * penalty;
}

// Logistic loss log(1 + exp(-s * score)) with s = +-1. No closed form; only
// the enumeration is provided.
inline double expected_dropout_logistic_loss_enumerated(std::span<const double> w, std::span<const double> x,
                                                        int sign, double rate) {
  detail::check_linear_instance(w, x, rate);
  if (sign != 1 && sign != -1) throw ValidationError("logistic loss expects a label in {-1, +1}");
  detail::CompensatedSum acc;
  detail::for_each_mask(w, x, rate, [&](double p, double score) {
    const double margin = sign * score;
    // log1p(exp(-margin)) without overflow.
    const double l = margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    acc.add(p * l);
  });
  return acc.value();
}

// Linear scorer w.x + b.
struct LinearPredictor {
  std::vector<double> weights;
  double bias = 0.0;

  double score(std::span<const double> x) const {
    double s = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x[i];
    return s;
  }
};

// Trains a linear predictor on a [n_samples, n_features] design with binary
// labels. Features outside a member's bag arrive zeroed.
using LinearTrainFn = std::function<LinearPredictor(const Tensor& features, std::span<const int> labels)>;

class FeatureBaggingEnsemble {
 public:
  struct Member {
    std::vector<std::size_t> bag;  // selected feature indices, ascending
    LinearPredictor predictor;
  };

  explicit FeatureBaggingEnsemble(std::vector<Member> members) : members_(std::move(members)) {}

  const std::vector<Member>& members() const noexcept { return members_; }

  // Mean of member scores; each member sees only its own bag.
  double score(std::span<const double> x) const {
    double total = 0.0;
    std::vector<double> masked(x.size());
    for (const Member& m : members_) {
      std::fill(masked.begin(), masked.end(), 0.0);
      for (std::size_t i : m.bag) masked[i] = x[i];
      total += m.predictor.score(masked);
    }
    return total / static_cast<double>(members_.size());
  }

  // Mean over members of their effective weight on each feature (zero when a
  // feature is outside the member's bag).
  std::vector<double> aggregate_weights() const {
    const std::size_t n = members_.front().predictor.weights.size();
    std::vector<double> agg(n, 0.0);
    for (const Member& m : members_)
      for (std::size_t i : m.bag) agg[i] += m.predictor.weights[i];
    for (double& a : agg) a /= static_cast<double>(members_.size());
    return agg;
  }

 private:
  std::vector<Member> members_;
};

inline FeatureBaggingEnsemble feature_bagging_ensemble(const LinearTrainFn& train_fn, const Tensor& features,
                                                       std::span<const int> labels, std::size_t bag_size,
                                                       std::size_t num_bags, Rng& rng) {
  kernels::require_matrix(features, "feature_bagging_ensemble");
  const std::size_t n = features.dim(1);
  if (bag_size < 1 || bag_size > n) {
    throw ValidationError(detail::concat("bag size must lie in [1, ", n, "], got ", bag_size));
  }
  if (num_bags < 1) throw ValidationError("feature_bagging_ensemble: need at least one bag");
  if (labels.size() != features.dim(0)) throw DimensionError("feature_bagging_ensemble: label count mismatch");

  std::vector<FeatureBaggingEnsemble::Member> members;
  members.reserve(num_bags);
  std::vector<std::size_t> perm(n);
  for (std::size_t b = 0; b < num_bags; ++b) {
    // Partial Fisher-Yates: the first bag_size entries are a uniform subset.
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < bag_size; ++i) std::swap(perm[i], perm[i + rng.index(n - i)]);
    std::vector<std::size_t> bag(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(bag_size));
    std::sort(bag.begin(), bag.end());

    Tensor masked(features.shape());
    const std::size_t rows = features.dim(0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i : bag) masked[r * n + i] = features[r * n + i];

    LinearPredictor p = train_fn(masked, labels);
    for (std::size_t i = 0; i < n; ++i)
      if (!std::binary_search(bag.begin(), bag.end(), i)) p.weights[i] = 0.0;
    members.push_back({std::move(bag), std::move(p)});
  }
  return FeatureBaggingEnsemble(std::move(members));
}

struct LogisticTrainConfig {
  std::size_t iterations = 2000;
  double learning_rate = 0.5;
  double l2 = 0.0;
  double dropout_rate = 0.0;  // inverted dropout on the inputs
  std::uint64_t seed = 0;     // mask stream when dropout_rate > 0
};

// Full-batch gradient descent on the mean logistic loss from a zero start.
// Labels are {0, 1}.
inline LinearPredictor train_logistic_regression(const Tensor& features, std::span<const int> labels,
                                                 const LogisticTrainConfig& cfg = {}) {
  kernels::require_matrix(features, "train_logistic_regression");
  validate_dropout_rate(cfg.dropout_rate);
  const std::size_t rows = features.dim(0), n = features.dim(1);
  LinearPredictor p{std::vector<double>(n, 0.0), 0.0};
  Rng rng(cfg.seed);
  const double inv_keep = 1.0 / (1.0 - cfg.dropout_rate);
  std::vector<double> gw(n), row(n);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        row[i] = features[r * n + i];
        if (cfg.dropout_rate > 0.0) row[i] *= rng.uniform() < cfg.dropout_rate ? 0.0 : inv_keep;
      }
      const double z = p.score(row);
      const double sigma = 1.0 / (1.0 + std::exp(-z));
      const double err = sigma - static_cast<double>(labels[r]);
      for (std::size_t i = 0; i < n; ++i) gw[i] += err * row[i];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t i = 0; i < n; ++i) p.weights[i] -= cfg.learning_rate * (gw[i] * inv + 2.0 * cfg.l2 * p.weights[i]);
    p.bias -= cfg.learning_rate * gb * inv;
  }
  return p;
}

}  // namespace vldrop
