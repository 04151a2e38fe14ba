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

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
//
//   v <- mu * v + (g + wd * w)
//   w <- w - lr(t) * mult * v
//
// lr(t) = base for t < T/2 and base * decay_factor afterwards.

#include <cstddef>
#include <string>
#include <vector>

#include "vldrop/error.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t total_iterations = 10000;
  double decay_factor = 0.1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError(detail::concat("learning rate must be > 0, got ", learning_rate));
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError(detail::concat("momentum must lie in [0, 1), got ", momentum));
    if (!(weight_decay >= 0.0)) throw ValidationError(detail::concat("weight decay must be >= 0, got ", weight_decay));
  }
};

struct ParamGroup {
  std::string name;
  double lr_multiplier = 1.0;
  ParamRefs params;
};

class OptimizerState {
 public:
  OptimizerState(SgdConfig cfg, std::vector<ParamGroup> groups) : cfg_(cfg), groups_(std::move(groups)) {
    cfg_.validate();
    for (const auto& g : groups_) {
      if (!(g.lr_multiplier > 0.0)) throw ValidationError("parameter group '" + g.name + "' needs a positive multiplier");
      auto& bufs = velocity_.emplace_back();
      for (const Tensor& t : g.params) bufs.emplace_back(t.size(), 0.0);
    }
  }

  const SgdConfig& config() const noexcept { return cfg_; }
  const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
  std::vector<ParamGroup>& groups() noexcept { return groups_; }
  std::size_t iteration() const noexcept { return iteration_; }
  const std::vector<std::vector<double>>& velocity(std::size_t group) const { return velocity_.at(group); }

  // Learning rate of the base schedule at an iteration, before multipliers.
  double base_lr_at(std::size_t iteration) const {
    return iteration < cfg_.total_iterations / 2 ? cfg_.learning_rate : cfg_.learning_rate * cfg_.decay_factor;
  }

  double lr_at(std::size_t iteration, std::size_t group) const {
    return base_lr_at(iteration) * groups_.at(group).lr_multiplier;
  }

  // One update at the current iteration. Gradients are consumed: the grad
  // slot of every updated tensor is cleared so the next backward can run.
  void step() {
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      for (const Tensor& t : groups_[gi].params) {
        if (!t.has_grad()) {
          throw UsageError(detail::concat("sgd_step: parameter of shape ", to_string(t.shape()), " in group '",
                                          groups_[gi].name, "' has no gradient"));
        }
      }
    }
    const double mu = cfg_.momentum, wd = cfg_.weight_decay;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const double lr = lr_at(iteration_, gi);
      for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
        Tensor& t = groups_[gi].params[pi];
        std::vector<double>& v = velocity_[gi][pi];
        const std::vector<double>& g = *t.grad();
        auto w = t.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] + (g[i] + wd * w[i]);
          w[i] -= lr * v[i];
        }
        t.zero_grad();
      }
    }
    ++iteration_;
  }

 private:
  SgdConfig cfg_;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<std::vector<double>>> velocity_;
  std::size_t iteration_ = 0;
};

inline void sgd_step(OptimizerState& state) { state.step(); }

inline double lr_at(const OptimizerState& state, std::size_t iteration, std::size_t group = 0) {
  return state.lr_at(iteration, group);
}

}  // namespace vldrop
