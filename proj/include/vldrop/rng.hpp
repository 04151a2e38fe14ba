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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace vldrop {

// SplitMix64 finalizer. Used to derive independent child seeds so that
// parallel runs get reproducible, non-overlapping streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept {
  return mix_seed(parent ^ mix_seed(salt + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept {
  // FNV-1a over the tag, then mixed with the parent.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(parent, h);
}

// Seedable 64-bit stream with draw accounting.
//
// Every sampling helper consumes a documented, fixed number of raw draws, so
// reproducibility does not depend on the standard library's distribution
// implementations:
//   uniform()    1 draw
//   bernoulli()  1 draw
//   normal()     2 draws (Box-Muller, second variate discarded)
//   index(n)     1 draw
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  result_type operator()() {
    ++draws_;
    return engine_();
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Multiply-shift; bias is below 2^-40 for the
  // sizes used here.
  std::size_t index(std::size_t n) {
    __extension__ using u128 = unsigned __int128;
    const auto r = static_cast<u128>((*this)()) * n;
    return static_cast<std::size_t>(r >> 64);
  }

  std::uint64_t draws() const noexcept { return draws_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Textual engine state (the standard's stream format) plus draw counter.
  std::string state() const {
    std::ostringstream oss;
    oss << draws_ << ' ' << engine_;
    return oss.str();
  }

  void restore(const std::string& state) {
    std::istringstream iss(state);
    iss >> draws_ >> engine_;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
};

}  // namespace vldrop
