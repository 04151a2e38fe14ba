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

// Synthetic environment datasets and their on-disk form.
//
// Directory layout:
//   manifest.json    task, feature names, classes, seed, generator
//                    parameters and the environment list
//   env_<id>.csv     header "f0,...,f{d-1},label,env", one example per line,
//                    values printed with 17 significant digits
//
// All generators are pure functions of their arguments.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vldrop/error.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

struct EnvInfo {
  int id = 0;
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct EnvDataset {
  std::string task;
  std::size_t num_features = 0;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;
  nlohmann::json generator = nlohmann::json::object();
  std::vector<EnvInfo> envs;

  std::vector<double> features;  // row-major [size, num_features]
  std::vector<int> labels;
  std::vector<int> env_ids;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * num_features, num_features);
  }

  void push(std::span<const double> x, int label, int env) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    env_ids.push_back(env);
  }

  const EnvInfo* find_env(int id) const {
    for (const auto& e : envs)
      if (e.id == id) return &e;
    return nullptr;
  }

  std::size_t count_env(int id) const { return static_cast<std::size_t>(std::count(env_ids.begin(), env_ids.end(), id)); }

  void validate() const {
    if (features.size() != labels.size() * num_features || env_ids.size() != labels.size()) {
      throw ValidationError("dataset arrays disagree in length");
    }
    for (std::size_t i = 0; i < size(); ++i) {
      if (!find_env(env_ids[i])) throw ValidationError(detail::concat("example ", i, " has unknown env id ", env_ids[i]));
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
        throw ValidationError(detail::concat("example ", i, " has label ", labels[i], " outside [0, ", num_classes, ")"));
      }
    }
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < num_features; ++i) n.push_back("f" + std::to_string(i));
    return n;
  }

  // Examples of the listed environments, in dataset order.
  EnvDataset select_envs(const std::vector<int>& ids) const {
    EnvDataset out = header_copy();
    out.envs.clear();
    for (int id : ids) {
      const EnvInfo* e = find_env(id);
      if (!e) throw ValidationError(detail::concat("no environment with id ", id));
      out.envs.push_back(*e);
    }
    const std::set<int> keep(ids.begin(), ids.end());
    for (std::size_t i = 0; i < size(); ++i)
      if (keep.count(env_ids[i])) out.push(row(i), labels[i], env_ids[i]);
    return out;
  }

  EnvDataset select_rows(const std::vector<std::size_t>& rows) const {
    EnvDataset out = header_copy();
    for (std::size_t r : rows) out.push(row(r), labels[r], env_ids[r]);
    return out;
  }

  Tensor feature_tensor() const {
    if (size() == 0) throw ValidationError("empty dataset");
    return Tensor({size(), num_features}, features);
  }

 private:
  EnvDataset header_copy() const {
    EnvDataset out;
    out.task = task;
    out.num_features = num_features;
    out.num_classes = num_classes;
    out.seed = seed;
    out.generator = generator;
    out.envs = envs;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Redundant features: every feature alone separates the classes.

struct RedundantOptions {
  double scale_decay = 0.5;    // scale_i = scale_decay^i
  double jitter = 0.5;         // uniform noise of half-width jitter * scale_i
  double positive_rate = 0.5;  // P(Y = 1)
};

inline EnvDataset gen_redundant_features(std::size_t n_features, std::size_t n_samples, double label_noise,
                                         std::uint64_t seed, const RedundantOptions& opt = {}) {
  if (n_features < 2) throw ValidationError(detail::concat("redundant task needs >= 2 features, got ", n_features));
  if (n_samples < 1) throw ValidationError("redundant task needs >= 1 sample");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ValidationError("label noise must lie in [0, 0.5)");
  if (!(opt.jitter >= 0.0 && opt.jitter < 1.0)) throw ValidationError("jitter must lie in [0, 1)");
  if (!(opt.scale_decay > 0.0 && opt.scale_decay <= 1.0)) throw ValidationError("scale decay must lie in (0, 1]");
  if (!(opt.positive_rate > 0.0 && opt.positive_rate < 1.0)) throw ValidationError("positive rate must lie in (0, 1)");

  EnvDataset ds;
  ds.task = "redundant";
  ds.num_features = n_features;
  ds.num_classes = 2;
  ds.seed = seed;
  ds.generator = {{"n_features", n_features}, {"n_samples", n_samples},         {"label_noise", label_noise},
                  {"scale_decay", opt.scale_decay}, {"jitter", opt.jitter}, {"positive_rate", opt.positive_rate}};
  ds.envs.push_back({0, "train", {{"missing", nlohmann::json::array()}}});

  Rng rng(seed);
  std::vector<double> x(n_features);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const int y = rng.bernoulli(opt.positive_rate) ? 1 : 0;
    const double sign = 2.0 * y - 1.0;
    double scale = 1.0;
    for (std::size_t i = 0; i < n_features; ++i) {
      x[i] = sign * scale + rng.uniform(-opt.jitter, opt.jitter) * scale;
      scale *= opt.scale_decay;
    }
    const int label = rng.bernoulli(label_noise) ? 1 - y : y;
    ds.push(x, label, 0);
  }
  return ds;
}

// Copy with the listed feature columns set to zero, relabelled as a new
// environment.
inline EnvDataset make_missing_feature_env(const EnvDataset& ds, const std::vector<std::size_t>& missing) {
  if (missing.empty()) throw ValidationError("missing-feature environment must name at least one feature");
  const std::set<std::size_t> cols(missing.begin(), missing.end());
  if (*cols.rbegin() >= ds.num_features) throw ValidationError("missing feature index out of range");
  if (cols.size() >= ds.num_features) throw ValidationError("cannot remove every feature");

  int new_id = 0;
  for (const auto& e : ds.envs) new_id = std::max(new_id, e.id + 1);
  EnvDataset out = ds;
  out.envs = {{new_id, "missing", {{"missing", std::vector<std::size_t>(cols.begin(), cols.end())}}}};
  for (int& id : out.env_ids) id = new_id;
  for (std::size_t r = 0; r < out.size(); ++r)
    for (std::size_t c : cols) out.features[r * out.num_features + c] = 0.0;
  return out;
}

// Environment 0 is a redundant-features sample; environment 1 is an
// independent sample with the listed features zeroed.
inline EnvDataset gen_redundant_task(std::size_t n_features, std::size_t n_samples, double label_noise,
                                     std::uint64_t seed, const std::vector<std::size_t>& missing,
                                     const RedundantOptions& opt = {}) {
  EnvDataset ds = gen_redundant_features(n_features, n_samples, label_noise, seed, opt);
  const EnvDataset ood =
      make_missing_feature_env(gen_redundant_features(n_features, n_samples, label_noise, derive_seed(seed, "ood"), opt), missing);
  ds.generator["missing"] = ood.envs.front().params["missing"];
  ds.envs.push_back(ood.envs.front());
  for (std::size_t i = 0; i < ood.size(); ++i) ds.push(ood.row(i), ood.labels[i], ood.env_ids[i]);
  return ds;
}

// ---------------------------------------------------------------------------
// Multi-environment task.
//
// Label Y in {0,1} with P(Y=1) = positive_rate. Feature layout:
//
//   core k     (n_core)      carries Y. core_mode "linear":
//                              x = (2Y-1) * core_amplitude + core_noise * e
//                            core_mode "magnitude": x = s_Y * e with
//                              s_1 = core_spread, s_0 = core_spread / 2,
//                            invisible to a linear read-out.
//   spurious j (n_spurious)  x = a_env * (+-(2Y-1)) + spurious_noise * e,
//                            agreeing with Y w.p. spurious_agreement.
//   nuisance j (n_nuisance)  core coding of an unrelated uniform bit Z.
//
// a_env = spurious_amplitude in every environment except the last, where it
// is spurious_amplitude * (1 - spurious_flip). flip = 0 makes every
// environment identical; flip = 1 removes the cue from the last one.
//
// The pretraining corpus shares the generative process with uniform Y and
// label 2Y + Z (four classes). Each example passes through one random
// transformation: "core scramble" redraws the core block from an independent
// label, "spurious erasure" zeroes the spurious block. The plain corpus
// always scrambles the cores. The rich corpus scrambles with probability
// rich_scramble and erases the spurious block with probability
// rich_spurious_erasure, a family that contains the plain transformation.

struct MultiEnvOptions {
  std::size_t num_envs = 4;
  std::size_t n_core = 8;
  std::size_t n_spurious = 1;
  double spurious_flip = 1.0;
  std::size_t n_per_env = 2000;
  std::size_t n_nuisance = 4;
  std::string core_mode = "linear";
  double positive_rate = 0.7;
  double core_amplitude = 0.1;
  double core_noise = 0.15;
  double core_spread = 1.0;
  double spurious_amplitude = 1.0;
  double spurious_noise = 0.01;
  double spurious_agreement = 1.0;
  double rich_scramble = 0.5;
  double rich_spurious_erasure = 0.02;

  std::size_t num_features() const { return n_core + n_spurious + n_nuisance; }
  bool magnitude() const { return core_mode == "magnitude"; }

  void validate() const {
    if (num_envs < 2) throw ValidationError(detail::concat("multi-environment task needs >= 2 environments, got ", num_envs));
    if (n_core < 1) throw ValidationError("multi-environment task needs >= 1 core feature");
    if (n_per_env < 1) throw ValidationError("multi-environment task needs >= 1 example per environment");
    if (core_mode != "linear" && core_mode != "magnitude") {
      throw ValidationError("core mode must be linear or magnitude, got '" + core_mode + "'");
    }
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(detail::concat(what, " must lie in [0, 1], got ", p));
    };
    prob(spurious_flip, "spurious flip");
    prob(positive_rate, "positive rate");
    prob(spurious_agreement, "spurious agreement");
    prob(rich_scramble, "rich scramble rate");
    prob(rich_spurious_erasure, "rich spurious erasure rate");
    if (!(core_amplitude >= 0.0 && core_noise >= 0.0 && core_spread > 0.0)) {
      throw ValidationError("core scales must be >= 0 and core spread > 0");
    }
    if (!(spurious_amplitude >= 0.0 && spurious_noise >= 0.0)) throw ValidationError("spurious scales must be >= 0");
  }

  double spurious_amplitude_in(std::size_t env) const {
    return env + 1 == num_envs ? spurious_amplitude * (1.0 - spurious_flip) : spurious_amplitude;
  }

  // Calls f(name, field) for every knob, in manifest order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("num_envs", self.num_envs);
    f("n_core", self.n_core);
    f("n_spurious", self.n_spurious);
    f("spurious_flip", self.spurious_flip);
    f("n_per_env", self.n_per_env);
    f("n_nuisance", self.n_nuisance);
    f("core_mode", self.core_mode);
    f("positive_rate", self.positive_rate);
    f("core_amplitude", self.core_amplitude);
    f("core_noise", self.core_noise);
    f("core_spread", self.core_spread);
    f("spurious_amplitude", self.spurious_amplitude);
    f("spurious_noise", self.spurious_noise);
    f("spurious_agreement", self.spurious_agreement);
    f("rich_scramble", self.rich_scramble);
    f("rich_spurious_erasure", self.rich_spurious_erasure);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    visit(*this, [&](const char* k, const auto& v) { j[k] = v; });
    return j;
  }

  // Starts from the defaults; unknown keys are rejected.
  static MultiEnvOptions from_json(const nlohmann::json& j) {
    MultiEnvOptions o;
    std::size_t used = 0;
    visit(o, [&](const char* k, auto& v) {
      if (!j.contains(k)) return;
      try {
        j.at(k).get_to(v);
      } catch (const nlohmann::json::exception&) {
        throw ValidationError(std::string("generator option '") + k + "' has the wrong type");
      }
      ++used;
    });
    if (used != j.size()) {
      for (const auto& [k, v] : j.items()) {
        bool found = false;
        visit(o, [&](const char* name, auto&) { found = found || k == name; });
        if (!found) throw ValidationError("unknown generator option '" + k + "'");
      }
    }
    return o;
  }
};

namespace detail {

inline double core_code(const MultiEnvOptions& o, int bit, Rng& rng) {
  if (o.magnitude()) return (bit ? o.core_spread : 0.5 * o.core_spread) * rng.normal();
  return (2.0 * bit - 1.0) * o.core_amplitude + o.core_noise * rng.normal();
}

// Writes one example; the number of draws does not depend on the options'
// probabilities.
inline void multienv_example(const MultiEnvOptions& o, int y, int z, int core_label, double spurious_amp, Rng& rng,
                             std::vector<double>& x) {
  std::size_t col = 0;
  for (std::size_t k = 0; k < o.n_core; ++k) x[col++] = core_code(o, core_label, rng);
  const double ys = 2.0 * y - 1.0;
  for (std::size_t j = 0; j < o.n_spurious; ++j) {
    const double s = rng.bernoulli(o.spurious_agreement) ? ys : -ys;
    x[col++] = spurious_amp * s + o.spurious_noise * rng.normal();
  }
  for (std::size_t j = 0; j < o.n_nuisance; ++j) x[col++] = core_code(o, z, rng);
}

}  // namespace detail

inline EnvDataset gen_multienv_task(const MultiEnvOptions& opt, std::uint64_t seed) {
  opt.validate();
  EnvDataset ds;
  ds.task = "multienv";
  ds.num_features = opt.num_features();
  ds.num_classes = 2;
  ds.seed = seed;
  ds.generator = opt.to_json();
  std::vector<double> x(ds.num_features);
  for (std::size_t e = 0; e < opt.num_envs; ++e) {
    const double amp = opt.spurious_amplitude_in(e);
    ds.envs.push_back({static_cast<int>(e), "env" + std::to_string(e),
                       {{"spurious_amplitude", amp}, {"spurious_agreement", opt.spurious_agreement}}});
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    for (std::size_t i = 0; i < opt.n_per_env; ++i) {
      const int y = rng.bernoulli(opt.positive_rate) ? 1 : 0;
      const int z = rng.bernoulli(0.5) ? 1 : 0;
      detail::multienv_example(opt, y, z, y, amp, rng, x);
      ds.push(x, y, static_cast<int>(e));
    }
  }
  return ds;
}

inline EnvDataset gen_multienv_task(std::size_t num_envs, std::size_t n_core, std::size_t n_spurious,
                                    double spurious_flip_per_env, std::size_t n_per_env, std::uint64_t seed) {
  MultiEnvOptions o;
  o.num_envs = num_envs;
  o.n_core = n_core;
  o.n_spurious = n_spurious;
  o.spurious_flip = spurious_flip_per_env;
  o.n_per_env = n_per_env;
  return gen_multienv_task(o, seed);
}

inline EnvDataset gen_pretrain_corpus(bool rich, std::size_t size, std::uint64_t seed, const MultiEnvOptions& opt = {}) {
  opt.validate();
  if (size < 1) throw ValidationError("pretraining corpus needs >= 1 example");
  const double scramble = rich ? opt.rich_scramble : 1.0;
  const double erase = rich ? opt.rich_spurious_erasure : 0.0;
  EnvDataset ds;
  ds.task = "pretrain";
  ds.num_features = opt.num_features();
  ds.num_classes = 4;
  ds.seed = seed;
  ds.generator = opt.to_json();
  ds.generator["rich"] = rich;
  ds.generator["size"] = size;
  ds.generator["transformations"] = {{"core_scramble", scramble}, {"spurious_erasure", erase}};
  ds.envs.push_back({0, rich ? "pretrain-rich" : "pretrain-plain", ds.generator["transformations"]});
  Rng rng(derive_seed(seed, "pretrain"));
  std::vector<double> x(ds.num_features);
  for (std::size_t i = 0; i < size; ++i) {
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const int other = rng.bernoulli(0.5) ? 1 : 0;
    const bool scrambled = rng.uniform() < scramble;
    const bool erased = rng.uniform() < erase;
    detail::multienv_example(opt, y, z, scrambled ? other : y, erased ? 0.0 : opt.spurious_amplitude, rng, x);
    ds.push(x, 2 * y + z, 0);
  }
  return ds;
}

// Accuracy in one environment of the analytic rule that reads only the core
// block: sum of x_k > 0 for linear cores, sum of x_k^2 above its midpoint
// between the classes for magnitude cores.
inline double core_only_accuracy(const EnvDataset& ds, const MultiEnvOptions& opt, int env) {
  const double s1 = opt.core_spread * opt.core_spread;
  const double cut = static_cast<double>(opt.n_core) * 0.5 * (s1 + 0.25 * s1);
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.env_ids[i] != env) continue;
    const auto x = ds.row(i);
    double stat = 0.0;
    for (std::size_t k = 0; k < opt.n_core; ++k) stat += opt.magnitude() ? x[k] * x[k] : x[k];
    const int pred = stat > (opt.magnitude() ? cut : 0.0) ? 1 : 0;
    correct += pred == ds.labels[i];
    ++n;
  }
  if (n == 0) throw ValidationError(detail::concat("no examples in environment ", env));
  return static_cast<double>(correct) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Persistence.

inline std::string format_double(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

inline nlohmann::json dataset_manifest(const EnvDataset& ds) {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : ds.envs) {
    envs.push_back({{"id", e.id}, {"name", e.name}, {"params", e.params}, {"count", ds.count_env(e.id)},
                    {"file", "env_" + std::to_string(e.id) + ".csv"}});
  }
  return {{"format", "vldrop-dataset"}, {"version", 1},          {"task", ds.task},
          {"num_features", ds.num_features}, {"num_classes", ds.num_classes}, {"seed", ds.seed},
          {"feature_names", ds.feature_names()}, {"generator", ds.generator}, {"environments", envs}};
}

inline void save_dataset(const EnvDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!m) throw Error("cannot write " + (dir / "manifest.json").string());
    m << dataset_manifest(ds).dump(2) << '\n';
  }
  for (const auto& e : ds.envs) {
    const auto path = dir / ("env_" + std::to_string(e.id) + ".csv");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    for (std::size_t c = 0; c < ds.num_features; ++c) f << 'f' << c << ',';
    f << "label,env\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.env_ids[i] != e.id) continue;
      for (double v : ds.row(i)) f << format_double(v) << ',';
      f << ds.labels[i] << ',' << ds.env_ids[i] << '\n';
    }
  }
}

namespace detail {

inline double parse_double(std::string_view s, const std::string& file, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(concat(file, " line ", line, ": cannot parse number '", s, "'"));
  }
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace detail

inline EnvDataset load_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  std::ifstream m(mpath, std::ios::binary);
  if (!m) throw FormatError("missing dataset manifest " + mpath.string());
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(m);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("dataset manifest is not valid JSON: ") + e.what(), e.byte);
  }

  EnvDataset ds;
  std::vector<std::pair<EnvInfo, std::pair<std::string, std::size_t>>> listed;
  try {
    if (man.at("format") != "vldrop-dataset") throw FormatError("not a vldrop dataset manifest");
    ds.task = man.at("task").get<std::string>();
    ds.num_features = man.at("num_features").get<std::size_t>();
    ds.num_classes = man.at("num_classes").get<std::size_t>();
    ds.seed = man.at("seed").get<std::uint64_t>();
    ds.generator = man.at("generator");
    for (const auto& e : man.at("environments")) {
      EnvInfo info{e.at("id").get<int>(), e.at("name").get<std::string>(), e.at("params")};
      listed.push_back({info, {e.at("file").get<std::string>(), e.at("count").get<std::size_t>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }

  std::string expected_header;
  for (std::size_t c = 0; c < ds.num_features; ++c) expected_header += "f" + std::to_string(c) + ",";
  expected_header += "label,env";

  std::vector<double> x(ds.num_features);
  for (const auto& [info, file] : listed) {
    ds.envs.push_back(info);
    const auto path = dir / file.first;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("missing environment file " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != expected_header) {
      throw FormatError(path.string() + ": header does not match the manifest's feature count");
    }
    std::size_t rows = 0, lineno = 1;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto cells = detail::split_csv(line);
      if (cells.size() != ds.num_features + 2) {
        throw FormatError(detail::concat(path.string(), " line ", lineno, ": expected ", ds.num_features + 2,
                                         " fields, got ", cells.size()));
      }
      for (std::size_t c = 0; c < ds.num_features; ++c) x[c] = detail::parse_double(cells[c], path.string(), lineno);
      const double label = detail::parse_double(cells[ds.num_features], path.string(), lineno);
      const double env = detail::parse_double(cells[ds.num_features + 1], path.string(), lineno);
      if (static_cast<int>(env) != info.id) {
        throw FormatError(detail::concat(path.string(), " line ", lineno, ": env id ", env, " but file belongs to ", info.id));
      }
      ds.push(x, static_cast<int>(label), info.id);
      ++rows;
    }
    if (rows != file.second) {
      throw FormatError(detail::concat(path.string(), ": manifest lists ", file.second, " examples, file has ", rows));
    }
  }
  try {
    ds.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("dataset disagrees with its manifest: ") + e.what());
  }
  return ds;
}

}  // namespace vldrop
