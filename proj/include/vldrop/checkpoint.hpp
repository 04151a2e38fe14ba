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

// Checkpoint file layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "VLDCKPT1"
//   offset 8   8 bytes   uint64 manifest length L
//   offset 16  L bytes   UTF-8 JSON manifest
//   then       8*N bytes N parameters as IEEE-754 binary64, canonical order
//
// The manifest holds the architecture, per-tensor shapes, parameter count N,
// iteration, run id, seed, provenance and the rng state at save time.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vldrop/error.hpp"
#include "vldrop/model.hpp"

namespace vldrop {

inline constexpr char kCheckpointMagic[8] = {'V', 'L', 'D', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

// In-memory checkpoint. Trails along a run are kept in this form; files are
// written only on request.
struct Checkpoint {
  ArchSpec arch;
  std::uint64_t seed = 0;
  Provenance provenance = Provenance::scratch;
  std::vector<double> params;
  std::size_t iteration = 0;
  std::string run_id;
  std::string rng_state;

  static Checkpoint capture(const ResidualModel& m, std::size_t iteration, std::string run_id,
                            std::string rng_state = {}) {
    return {m.arch, m.seed, m.provenance, m.flat_params(), iteration, std::move(run_id), std::move(rng_state)};
  }

  ResidualModel model() const {
    ResidualModel m = new_residual_model(arch, seed);
    m.provenance = provenance;
    m.set_flat_params(params);
    return m;
  }

  nlohmann::json manifest() const {
    nlohmann::json tensors = nlohmann::json::array();
    const ResidualModel shape_only = new_residual_model(arch, 0);
    for (const auto& [name, shape] : shape_only.shape_manifest()) tensors.push_back({{"name", name}, {"shape", shape}});
    return {{"format", "vldrop-checkpoint"},
            {"version", kCheckpointVersion},
            {"arch", arch},
            {"tensors", std::move(tensors)},
            {"param_count", params.size()},
            {"iteration", iteration},
            {"run_id", run_id},
            {"seed", seed},
            {"provenance", to_string(provenance)},
            {"rng_state", rng_state}};
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  const std::string manifest = ck.manifest().dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u64(out, manifest.size());
  out += manifest;
  out.reserve(out.size() + 8 * ck.params.size());
  for (double v : ck.params) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

// Parses a checkpoint. When expected is given the stored architecture must
// match it.
inline Checkpoint decode_checkpoint(const std::string& bytes, const ArchSpec* expected = nullptr) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 16) throw FormatError("checkpoint header truncated", n);
  if (std::memcmp(p, kCheckpointMagic, 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint64_t mlen = detail::get_u64(p + 8);
  if (mlen > n - 16) throw FormatError(detail::concat("manifest of ", mlen, " bytes runs past end of file"), 16);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what(), 16 + e.byte);
  }

  Checkpoint ck;
  std::size_t count = 0;
  try {
    if (manifest.at("format") != "vldrop-checkpoint") throw FormatError("not a vldrop checkpoint manifest", 16);
    if (manifest.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError(detail::concat("unsupported checkpoint version ", manifest.at("version").dump()), 16);
    }
    ck.arch = manifest.at("arch").get<ArchSpec>();
    ck.arch.validate();
    count = manifest.at("param_count").get<std::size_t>();
    ck.iteration = manifest.at("iteration").get<std::size_t>();
    ck.run_id = manifest.at("run_id").get<std::string>();
    ck.seed = manifest.at("seed").get<std::uint64_t>();
    ck.provenance = parse_provenance(manifest.at("provenance").get<std::string>());
    ck.rng_state = manifest.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 16);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 16);
  }
  if (count != ck.arch.param_count()) {
    throw FormatError(detail::concat("manifest declares ", count, " parameters but the architecture has ",
                                     ck.arch.param_count()),
                      16);
  }
  if (expected && !(*expected == ck.arch)) {
    throw ValidationError("checkpoint architecture " + ck.arch.describe() + " does not match requested " +
                          expected->describe());
  }

  const std::size_t body = 16 + mlen;
  if ((n - body) / 8 < count || (n - body) % 8 != 0 || (n - body) / 8 != count) {
    const std::size_t have = (n - body) / 8;
    throw FormatError(detail::concat("parameter block holds ", have, " of ", count, " values"), body + 8 * have);
  }
  ck.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) ck.params[i] = std::bit_cast<double>(detail::get_u64(p + body + 8 * i));
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

inline void save_checkpoint(const ResidualModel& m, std::size_t iteration, const std::string& run_id,
                            const std::filesystem::path& path) {
  save_checkpoint(Checkpoint::capture(m, iteration, run_id), path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchSpec* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected);
}

}  // namespace vldrop
