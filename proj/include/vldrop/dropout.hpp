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

// Inverted dropout on the penultimate representation:
//
//   out = m / (1 - rate) (*) phi,   m_i ~ Bernoulli(1 - rate) (0 with prob. rate)
//
// Survivors are rescaled at train time so evaluation is the identity.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vldrop/autodiff.hpp"
#include "vldrop/error.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

enum class DropoutMode { train, eval };

// Per-example draws a fresh mask for every row of a batch; per-batch draws
// one mask and reuses it for all rows.
enum class MaskGranularity { per_example, per_batch };

inline void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError(detail::concat("dropout rate must lie in [0, 1), got ", rate));
  }
}

class DropoutSpec {
 public:
  DropoutSpec() = default;
  DropoutSpec(double rate, DropoutMode mode, std::uint64_t seed = 0,
              MaskGranularity granularity = MaskGranularity::per_example)
      : rate_(rate), mode_(mode), granularity_(granularity), rng_(seed) {
    validate_dropout_rate(rate);
  }

  static DropoutSpec eval() { return DropoutSpec(0.0, DropoutMode::eval); }

  double rate() const noexcept { return rate_; }
  DropoutMode mode() const noexcept { return mode_; }
  MaskGranularity granularity() const noexcept { return granularity_; }
  void set_mode(DropoutMode m) noexcept { mode_ = m; }

  // True when a call will draw masks (train mode, positive rate).
  bool active() const noexcept { return mode_ == DropoutMode::train && rate_ > 0.0; }

  Rng& rng() noexcept { return rng_; }
  const Rng& rng() const noexcept { return rng_; }

 private:
  double rate_ = 0.0;
  DropoutMode mode_ = DropoutMode::eval;
  MaskGranularity granularity_ = MaskGranularity::per_example;
  Rng rng_{0};
};

// Binary keep-mask of length dim. Consumes exactly dim draws, in index order.
inline std::vector<double> dropout_mask(std::size_t dim, double rate, Rng& rng) {
  validate_dropout_rate(rate);
  if (dim == 0) throw ValidationError("dropout_mask: dim must be at least 1");
  std::vector<double> m(dim);
  for (std::size_t i = 0; i < dim; ++i) m[i] = rng.uniform() < rate ? 0.0 : 1.0;
  return m;
}

// Mask tensor shaped like a [batch, width] representation. Per-example masks
// are drawn row by row (batch * width draws); per-batch draws width values.
inline Tensor dropout_mask_for(const Shape& shape, DropoutSpec& spec) {
  if (shape.size() != 2) throw DimensionError("dropout expects a [batch, width] representation");
  const std::size_t rows = shape[0], width = shape[1];
  Tensor mask(shape);
  if (spec.granularity() == MaskGranularity::per_example) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto m = dropout_mask(width, spec.rate(), spec.rng());
      std::copy(m.begin(), m.end(), mask.values().begin() + static_cast<std::ptrdiff_t>(r * width));
    }
  } else {
    const auto m = dropout_mask(width, spec.rate(), spec.rng());
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(m.begin(), m.end(), mask.values().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return mask;
}

// Applies an explicit mask: mask (*) phi * 1/(1-rate).
inline Tensor apply_mask(const Tensor& phi, const Tensor& mask, double rate) {
  validate_dropout_rate(rate);
  return kernels::scale(kernels::mul(phi, mask), 1.0 / (1.0 - rate));
}

// Eval mode and rate 0 return phi unchanged and draw nothing from the stream.
inline Tensor apply_inverted_dropout(const Tensor& phi, DropoutSpec& spec) {
  if (!spec.active()) return phi;
  return apply_mask(phi, dropout_mask_for(phi.shape(), spec), spec.rate());
}

// Differentiable version. The mask enters the graph as a constant.
inline Var apply_inverted_dropout(Graph& g, Var phi, DropoutSpec& spec) {
  if (!spec.active()) return phi;
  Var mask = g.constant(dropout_mask_for(g.value(phi).shape(), spec));
  return g.scale(g.mul(phi, mask), 1.0 / (1.0 - spec.rate()));
}

}  // namespace vldrop
