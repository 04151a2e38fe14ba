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

// Residual MLP whose penultimate representation is an explicit sum of block
// contributions:
//
//   phi_0 = x P + p                      (input projection)
//   h_i   = phi_0 + ... + phi_i
//   phi_i = relu(h_{i-1} W1_i + b1_i) W2_i + b2_i
//   Phi   = h_l,  logits = Phi W + c
//
// Inputs are row-major [batch, input_dim].

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vldrop/autodiff.hpp"
#include "vldrop/dropout.hpp"
#include "vldrop/error.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

enum class Provenance { scratch, pretrained_plain, pretrained_rich };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::scratch: return "scratch";
    case Provenance::pretrained_plain: return "pretrained-plain";
    case Provenance::pretrained_rich: return "pretrained-rich";
  }
  return "scratch";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "scratch") return Provenance::scratch;
  if (s == "pretrained-plain") return Provenance::pretrained_plain;
  if (s == "pretrained-rich") return Provenance::pretrained_rich;
  throw ValidationError(detail::concat("unknown provenance tag '", s, "'"));
}

// hidden is the inner width of every residual block.
struct ArchSpec {
  std::size_t input_dim = 1;
  std::size_t width = 1;
  std::size_t hidden = 1;
  std::size_t depth = 0;
  std::size_t num_classes = 2;

  bool operator==(const ArchSpec&) const = default;

  void validate() const {
    if (input_dim < 1 || width < 1 || hidden < 1 || num_classes < 1) {
      throw ValidationError("architecture dims must be >= 1, got " + describe());
    }
  }

  std::size_t trunk_param_count() const {
    return input_dim * width + width + depth * (width * hidden + hidden + hidden * width + width);
  }
  std::size_t param_count() const { return trunk_param_count() + width * num_classes + num_classes; }

  std::string describe() const {
    return detail::concat("{input_dim=", input_dim, ", width=", width, ", hidden=", hidden, ", depth=", depth,
                          ", num_classes=", num_classes, "}");
  }
};

inline void to_json(nlohmann::json& j, const ArchSpec& a) {
  j = nlohmann::json{{"input_dim", a.input_dim}, {"width", a.width},   {"hidden", a.hidden},
                     {"depth", a.depth},         {"num_classes", a.num_classes}};
}

inline void from_json(const nlohmann::json& j, ArchSpec& a) {
  j.at("input_dim").get_to(a.input_dim);
  j.at("width").get_to(a.width);
  j.at("hidden").get_to(a.hidden);
  j.at("depth").get_to(a.depth);
  j.at("num_classes").get_to(a.num_classes);
}

struct ResidualBlock {
  Tensor w1, b1, w2, b2;
};

class ResidualModel {
 public:
  ArchSpec arch;
  std::uint64_t seed = 0;
  Provenance provenance = Provenance::scratch;

  Tensor proj_w, proj_b;
  std::vector<ResidualBlock> blocks;
  Tensor head_w, head_b;

  // Parameters in canonical order: projection, blocks in order, head.
  ParamRefs trunk_params() {
    ParamRefs out{proj_w, proj_b};
    for (auto& b : blocks) {
      out.push_back(b.w1);
      out.push_back(b.b1);
      out.push_back(b.w2);
      out.push_back(b.b2);
    }
    return out;
  }
  ParamRefs head_params() { return {head_w, head_b}; }
  ParamRefs params() {
    ParamRefs out = trunk_params();
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
  }

  // (name, shape) for every parameter, in canonical order.
  std::vector<std::pair<std::string, Shape>> shape_manifest() const {
    std::vector<std::pair<std::string, Shape>> m{{"proj.w", proj_w.shape()}, {"proj.b", proj_b.shape()}};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      m.emplace_back(p + "w1", blocks[i].w1.shape());
      m.emplace_back(p + "b1", blocks[i].b1.shape());
      m.emplace_back(p + "w2", blocks[i].w2.shape());
      m.emplace_back(p + "b2", blocks[i].b2.shape());
    }
    m.emplace_back("head.w", head_w.shape());
    m.emplace_back("head.b", head_b.shape());
    return m;
  }

  std::vector<double> flat_params() const {
    std::vector<double> out;
    out.reserve(arch.param_count());
    for_each_tensor([&](const Tensor& t) { out.insert(out.end(), t.values().begin(), t.values().end()); });
    return out;
  }

  std::vector<double> flat_trunk_params() const {
    auto all = flat_params();
    all.resize(arch.trunk_param_count());
    return all;
  }

  void set_flat_params(std::span<const double> flat) {
    if (flat.size() != arch.param_count()) {
      throw DimensionError(detail::concat("parameter vector of length ", flat.size(), " does not fit architecture ",
                                          arch.describe(), " (", arch.param_count(), " parameters)"));
    }
    std::size_t off = 0;
    for (Tensor& t : params()) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.values().begin());
      off += t.size();
    }
  }

  void set_trunk_trainable(bool on) {
    for (Tensor& t : trunk_params()) t.set_requires_grad(on);
  }
  void set_head_trainable(bool on) {
    for (Tensor& t : head_params()) t.set_requires_grad(on);
  }
  void zero_grad() {
    for (Tensor& t : params()) t.zero_grad();
  }

 private:
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(proj_w);
    f(proj_b);
    for (const auto& b : blocks) {
      f(b.w1);
      f(b.b1);
      f(b.w2);
      f(b.b2);
    }
    f(head_w);
    f(head_b);
  }
};

namespace detail {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn in row-major order.
inline Tensor fan_in_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t({fan_in, fan_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

inline void init_head(ResidualModel& m, std::size_t num_classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "head"));
  m.head_w = fan_in_uniform(m.arch.width, num_classes, rng);
  m.head_b = Tensor({num_classes});
  m.arch.num_classes = num_classes;
}

}  // namespace detail

// Deterministic initialization: fan-in uniform weights, zero biases, and a
// zero second layer in every block so a fresh model is projection-only.
// The trunk and the head draw from separate streams derived from seed.
inline ResidualModel new_residual_model(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  ResidualModel m;
  m.arch = arch;
  m.seed = seed;
  Rng rng(derive_seed(seed, "trunk"));
  m.proj_w = detail::fan_in_uniform(arch.input_dim, arch.width, rng);
  m.proj_b = Tensor({arch.width});
  m.blocks.resize(arch.depth);
  for (auto& b : m.blocks) {
    b.w1 = detail::fan_in_uniform(arch.width, arch.hidden, rng);
    b.b1 = Tensor({arch.hidden});
    b.w2 = Tensor({arch.hidden, arch.width});
    b.b2 = Tensor({arch.width});
  }
  detail::init_head(m, arch.num_classes, seed);
  m.set_trunk_trainable(true);
  m.set_head_trainable(true);
  return m;
}

// Trunk untouched; head replaced by a fresh draw from seed.
inline ResidualModel reinit_head(const ResidualModel& model, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ValidationError("reinit_head: num_classes must be >= 1");
  ResidualModel m = model;
  detail::init_head(m, num_classes, seed);
  m.zero_grad();
  m.set_head_trainable(true);
  return m;
}

// Depth-0 model whose projection is the identity, so Phi is the raw input.
// Used for linear-head experiments on fixed features.
inline ResidualModel identity_trunk_model(std::size_t n_features, std::size_t num_classes, std::uint64_t seed) {
  ResidualModel m = new_residual_model({n_features, n_features, 1, 0, num_classes}, seed);
  m.proj_w = Tensor::identity(n_features);
  m.set_trunk_trainable(true);
  return m;
}

struct ForwardResult {
  Tensor logits;
  Tensor phi;  // before dropout
};

namespace detail {

inline void check_input(const ResidualModel& m, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != m.arch.input_dim) {
    throw ValidationError(detail::concat("model expects inputs of shape [batch,", m.arch.input_dim, "], got ",
                                         to_string(x.shape())));
  }
}

inline Tensor block_forward(const ResidualBlock& b, const Tensor& h) {
  const Tensor a = kernels::relu(kernels::add_bias(kernels::matmul(h, b.w1), b.b1));
  return kernels::add_bias(kernels::matmul(a, b.w2), b.b2);
}

}  // namespace detail

// [phi_0, phi_1, ..., phi_l] for a batch.
inline std::vector<Tensor> block_contributions(const ResidualModel& m, const Tensor& x) {
  detail::check_input(m, x);
  std::vector<Tensor> out;
  out.reserve(m.blocks.size() + 1);
  out.push_back(kernels::add_bias(kernels::matmul(x, m.proj_w), m.proj_b));
  Tensor h = out.front();
  for (const auto& b : m.blocks) {
    out.push_back(detail::block_forward(b, h));
    h = kernels::add(h, out.back());
  }
  return out;
}

// Phi accumulated in index order, matching forward().
inline Tensor sum_contributions(const std::vector<Tensor>& parts) {
  Tensor acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = kernels::add(acc, parts[i]);
  return acc;
}

inline Tensor penultimate(const ResidualModel& m, const Tensor& x) {
  detail::check_input(m, x);
  Tensor h = kernels::add_bias(kernels::matmul(x, m.proj_w), m.proj_b);
  for (const auto& b : m.blocks) h = kernels::add(h, detail::block_forward(b, h));
  return h;
}

inline Tensor head_forward(const ResidualModel& m, const Tensor& phi) {
  return kernels::add_bias(kernels::matmul(phi, m.head_w), m.head_b);
}

// Non-differentiable forward. Dropout applies to Phi in train mode only.
inline ForwardResult forward(const ResidualModel& m, const Tensor& x, DropoutSpec& dropout) {
  Tensor phi = penultimate(m, x);
  Tensor logits = head_forward(m, apply_inverted_dropout(phi, dropout));
  return {std::move(logits), std::move(phi)};
}

inline ForwardResult forward(const ResidualModel& m, const Tensor& x) {
  DropoutSpec eval = DropoutSpec::eval();
  return forward(m, x, eval);
}

struct GraphForward {
  Var logits;
  Var phi;
};

// Differentiable forward. Parameters enter as leaves, so their
// requires_grad flags decide which gradients backward() fills.
inline GraphForward forward(Graph& g, ResidualModel& m, const Tensor& x, DropoutSpec& dropout) {
  detail::check_input(m, x);
  Var in = g.constant(x);
  Var h = g.add_bias(g.matmul(in, g.leaf(m.proj_w)), g.leaf(m.proj_b));
  for (auto& b : m.blocks) {
    Var a = g.relu(g.add_bias(g.matmul(h, g.leaf(b.w1)), g.leaf(b.b1)));
    Var f = g.add_bias(g.matmul(a, g.leaf(b.w2)), g.leaf(b.b2));
    h = g.add(h, f);
  }
  Var dropped = apply_inverted_dropout(g, h, dropout);
  Var logits = g.add_bias(g.matmul(dropped, g.leaf(m.head_w)), g.leaf(m.head_b));
  return {logits, h};
}

// Per-input-feature weight magnitude of a depth-0 model: for the effective
// linear map E = P W, entry i is sum_c |E_ic - mean_c E_i.|. With two
// classes this is the absolute difference of the two class weights.
inline std::vector<double> feature_weight_profile(const ResidualModel& m) {
  if (m.arch.depth != 0) throw ValidationError("feature_weight_profile needs a depth-0 model");
  const Tensor eff = kernels::matmul(m.proj_w, m.head_w);
  const std::size_t d = eff.dim(0), c = eff.dim(1);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < c; ++k) mean += eff.at(i, k);
    mean /= static_cast<double>(c);
    for (std::size_t k = 0; k < c; ++k) out[i] += std::abs(eff.at(i, k) - mean);
  }
  return out;
}

}  // namespace vldrop
