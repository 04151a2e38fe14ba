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

// Flat key=value experiment files.
//
// Grammar, one entry per line:
//   line    := blank | comment | entry
//   comment := optional spaces, '#', anything
//   entry   := key '=' value      (spaces around key and value are trimmed)
//   key     := [a-z0-9_]+
// Lists are comma-separated values. Keys outside the schema, repeated keys
// and malformed lines are rejected with the line number.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vldrop/error.hpp"

namespace vldrop {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

class ConfigFile {
 public:
  explicit ConfigFile(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
    for (const auto& k : schema_) values_[k.name] = k.default_value;
  }

  static ConfigFile parse(const std::string& text, std::vector<ConfigKey> schema) {
    ConfigFile cfg(std::move(schema));
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ValidationError(detail::concat("config line ", lineno, ": expected key = value"));
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty() || key.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_") != std::string::npos) {
        throw ValidationError(detail::concat("config line ", lineno, ": invalid key '", key, "'"));
      }
      if (!cfg.known(key)) throw ValidationError(detail::concat("config line ", lineno, ": unknown key '", key, "'"));
      if (auto it = seen.find(key); it != seen.end()) {
        throw ValidationError(detail::concat("config line ", lineno, ": key '", key, "' already set on line ", it->second));
      }
      seen[key] = lineno;
      cfg.values_[key] = value;
      cfg.explicit_.push_back(key);
    }
    return cfg;
  }

  bool known(const std::string& key) const { return values_.count(key) != 0; }

  // Overrides one value, as a command-line flag does.
  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ValidationError("unknown config key '" + key + "'");
    values_[key] = value;
    if (!is_set(key)) explicit_.push_back(key);
  }
  bool is_set(const std::string& key) const {
    return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
  }
  const std::vector<ConfigKey>& schema() const noexcept { return schema_; }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const { return to_real(key, str(key)); }

  std::uint64_t uint(const std::string& key) const { return to_uint(key, str(key)); }

  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key '" + key + "' expects true or false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(str(key));
    while (std::getline(in, cur, ',')) {
      cur = trim(cur);
      if (!cur.empty()) out.push_back(cur);
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& v : list(key)) out.push_back(to_real(key, v));
    return out;
  }

  std::vector<std::uint64_t> uints(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& v : list(key)) out.push_back(to_uint(key, v));
    return out;
  }

  // "key = default  # help" for every key, in schema order.
  std::string documentation() const {
    std::ostringstream out;
    for (const auto& k : schema_) out << k.name << " = " << k.default_value << "    # " << k.help << '\n';
    return out.str();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  static double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
  }

  static std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::vector<ConfigKey> schema_;
  std::map<std::string, std::string> values_;
  std::vector<std::string> explicit_;
};

// Keys accepted by `vldrop sweep --config`.
inline std::vector<ConfigKey> sweep_config_schema() {
  return {
      {"data", "", "dataset directory (required)"},
      {"start", "", "starting checkpoint; empty starts from a fresh model"},
      {"out", "results", "output directory"},
      {"recipes", "erm,dropout90", "comma-separated recipes"},
      {"lrs", "1e-3,5e-4", "learning-rate grid"},
      {"wds", "1e-4,5e-5,1e-5", "weight-decay grid"},
      {"seeds", "0", "fine-tuning seeds"},
      {"iterations", "1000", "fine-tuning iterations T"},
      {"batch_size", "32", "batch size"},
      {"checkpoint_interval", "0", "iterations between checkpoints; 0 means T/33"},
      {"patience", "0", "checkpoints without IID improvement before halting; 0 never halts"},
      {"holdout", "0.2", "IID validation fraction"},
      {"momentum", "0.9", "SGD momentum"},
      {"freeze_trunk", "false", "train the head only"},
      {"mask_granularity", "per-example", "per-example or per-batch dropout masks"},
      {"pool_seeds", "false", "pool seeds as well as grid points in multi-run arms"},
      {"split_seed", "0", "seed of the IID holdout split"},
      {"width", "64", "trunk width for a fresh model"},
      {"hidden", "32", "block inner width for a fresh model"},
      {"depth", "2", "number of residual blocks for a fresh model"},
      {"model_seed", "0", "initialization seed for a fresh model"},
      {"parallel", "1", "worker threads"},
  };
}

}  // namespace vldrop
