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
#include <span>
#include <utility>
#include <vector>

#include "vldrop/error.hpp"

namespace vldrop::stats {

// Pairwise (cascade) summation. Error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 4) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of an empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// Quantile with linear interpolation between order statistics, inclusive
// of the extremes: position h = (n - 1) * p in the sorted sample.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(detail::concat("quantile level must lie in [0, 1], got ", p));
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct FiveNumber {
  double min, q25, median, q75, max;
};

inline FiveNumber five_number_summary(const std::vector<double>& v) {
  return {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

inline double log_binomial_pmf(std::size_t k, std::size_t n, double p) {
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  return std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * std::log(p) +
         (nn - kk) * std::log1p(-p);
}

// P(X <= k) for X ~ Binomial(n, p), 0 < p < 1.
inline double binomial_cdf(std::size_t k, std::size_t n, double p) {
  if (k >= n) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i <= k; ++i) s += std::exp(log_binomial_pmf(i, n, p));
  return std::min(s, 1.0);
}

// Smallest k with P(X <= k) >= q.
inline std::size_t binomial_quantile(double q, std::size_t n, double p) {
  double s = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    s += std::exp(log_binomial_pmf(k, n, p));
    if (s >= q) return k;
  }
  return n;
}

// Central interval holding at least `coverage` of the mass: the
// (1-coverage)/2 and (1+coverage)/2 quantiles.
inline std::pair<std::size_t, std::size_t> binomial_central_interval(std::size_t n, double p, double coverage) {
  const double tail = (1.0 - coverage) / 2.0;
  return {binomial_quantile(tail, n, p), binomial_quantile(1.0 - tail, n, p)};
}

struct SignTest {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // two-sided, ties dropped
};

// Exact two-sided sign test on paired differences.
inline SignTest sign_test(std::span<const double> differences) {
  SignTest t;
  for (double d : differences) {
    if (d > 0) ++t.positive;
    else if (d < 0) ++t.negative;
    else ++t.ties;
  }
  const std::size_t n = t.positive + t.negative;
  if (n == 0) return t;
  const std::size_t k = std::min(t.positive, t.negative);
  t.p_value = std::min(1.0, 2.0 * binomial_cdf(k, n, 0.5));
  return t;
}

// Shannon entropy of |v| / sum|v|, divided by log(n). 1 means uniform mass.
inline double normalized_entropy(std::span<const double> v) {
  if (v.size() < 2) throw ValidationError("normalized entropy needs at least two entries");
  double total = 0.0;
  for (double x : v) total += std::abs(x);
  if (total == 0.0) return 1.0;
  double h = 0.0;
  for (double x : v) {
    const double p = std::abs(x) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(v.size()));
}

}  // namespace vldrop::stats
