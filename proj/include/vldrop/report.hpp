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

// Reports computed from sweep JSON-lines files alone.
//
// Arms: every recipe R yields R itself (early-stopped checkpoint) and
// R/wa-single, R/ensemble-single, R/wa-multi, R/ensemble-multi.
//
// Selection, per (split, arm): the grid point with the highest IID accuracy
// averaged over seeds; ties go to the lowest grid index. The reported OOD
// value is that grid point's seed-averaged OOD accuracy. Multi-run arms pool
// the grid, so they have one value per split. The across-split figure is
// the arithmetic mean over splits.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vldrop/error.hpp"
#include "vldrop/stats.hpp"

namespace vldrop {

inline const std::vector<std::string>& single_variant_suffixes() {
  static const std::vector<std::string> s{"wa-single", "ensemble-single"};
  return s;
}
inline const std::vector<std::string>& multi_variant_suffixes() {
  static const std::vector<std::string> s{"wa-multi", "ensemble-multi"};
  return s;
}

struct ReportCell {
  double iid = 0.0;
  double ood = 0.0;
  std::vector<std::string> run_ids;  // records the value was computed from
  std::optional<std::size_t> grid_index;
};

struct RecipeInfo {
  std::string name;
  double dropout_rate = 0.0;
  double head_lr_multiplier = 1.0;
};

struct SweepSummary {
  std::string source;
  std::string provenance;
  std::vector<RecipeInfo> recipes;
  std::vector<int> test_envs;                     // one per split, in split order
  std::vector<std::string> arms;                  // display order
  std::map<std::string, std::vector<ReportCell>> per_split;
  std::map<std::string, ReportCell> average;
  std::map<std::string, std::vector<double>> grid_ood;  // selected arms only: per grid point, mean over splits and seeds
};

namespace detail {

inline std::vector<nlohmann::json> parse_jsonl(const std::string& text, const std::string& source) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(concat(source, " line ", lineno, ": ", e.what()));
    }
  }
  return out;
}

struct GridAcc {
  std::vector<double> iid, ood;
  std::vector<std::string> ids;
};

}  // namespace detail

inline SweepSummary summarize_sweep(const std::vector<nlohmann::json>& lines, const std::string& source) {
  SweepSummary sum;
  sum.source = source;
  const nlohmann::json* header = nullptr;
  for (const auto& l : lines)
    if (l.value("kind", "") == "sweep") header = &l;
  if (!header) throw FormatError(source + ": no sweep header line");
  try {
    sum.provenance = header->at("provenance").get<std::string>();
    for (const auto& r : header->at("recipes"))
      sum.recipes.push_back({r.at("name"), r.at("dropout_rate"), r.at("head_lr_multiplier")});
    for (const auto& s : header->at("splits")) sum.test_envs.push_back(s.at("test_env").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": malformed sweep header: " + e.what());
  }
  const std::size_t S = sum.test_envs.size();
  const std::size_t G = header->at("grid").size();

  for (const auto& r : sum.recipes) {
    sum.arms.push_back(r.name);
    for (const auto& s : single_variant_suffixes()) sum.arms.push_back(r.name + "/" + s);
    for (const auto& s : multi_variant_suffixes()) sum.arms.push_back(r.name + "/" + s);
  }

  // (arm, split, grid) -> seed values
  std::map<std::string, std::vector<std::vector<detail::GridAcc>>> acc;
  std::map<std::string, std::vector<detail::GridAcc>> multi;
  auto slot = [&](const std::string& arm) -> std::vector<std::vector<detail::GridAcc>>& {
    auto& v = acc[arm];
    if (v.empty()) v.assign(S, std::vector<detail::GridAcc>(G));
    return v;
  };

  // Canonical order so the summary does not depend on line order in the file.
  std::vector<const nlohmann::json*> ordered;
  for (const auto& l : lines) ordered.push_back(&l);
  std::stable_sort(ordered.begin(), ordered.end(), [](const nlohmann::json* a, const nlohmann::json* b) {
    return a->dump() < b->dump();
  });

  for (const nlohmann::json* lp : ordered) {
    const nlohmann::json& l = *lp;
    const std::string kind = l.value("kind", "");
    if (kind == "run") {
      if (l.at("status") != "ok") continue;
      const std::string recipe = l.at("recipe");
      const auto s = l.at("split").get<std::size_t>();
      const auto g = l.at("grid_index").get<std::size_t>();
      const std::string id = l.at("run_id");
      auto add = [&](const std::string& arm, const nlohmann::json& a) {
        auto& cell = slot(arm)[s][g];
        cell.iid.push_back(a.at("iid"));
        cell.ood.push_back(a.at("ood"));
        cell.ids.push_back(id);
      };
      add(recipe, l.at("selected"));
      for (const auto& suf : single_variant_suffixes()) {
        const std::string key = suf == "wa-single" ? "wa_single" : "ensemble_single";
        if (l.contains(key)) add(recipe + "/" + suf, l.at(key));
      }
    } else if (kind == "multi") {
      if (l.at("members").get<std::size_t>() == 0) continue;
      const std::string recipe = l.at("recipe");
      const auto s = l.at("split").get<std::size_t>();
      const std::string id = detail::concat("s", s, "-", recipe, "-multi",
                                            l.at("seed_index").is_null() ? std::string("") : "-r" + l.at("seed_index").dump());
      for (const auto& suf : multi_variant_suffixes()) {
        auto& v = multi[recipe + "/" + suf];
        if (v.empty()) v.resize(S);
        const auto& a = l.at(suf == "wa-multi" ? "wa_multi" : "ensemble_multi");
        v[s].iid.push_back(a.at("iid"));
        v[s].ood.push_back(a.at("ood"));
        v[s].ids.push_back(id);
      }
    }
  }

  std::vector<std::string> present;
  for (const auto& arm : sum.arms) {
    std::vector<ReportCell> cells;
    if (auto it = acc.find(arm); it != acc.end()) {
      for (std::size_t s = 0; s < S; ++s) {
        std::optional<std::size_t> best;
        double best_iid = -1.0;
        for (std::size_t g = 0; g < G; ++g) {
          const auto& c = it->second[s][g];
          if (c.iid.empty()) continue;
          const double m = stats::mean(c.iid);
          if (!best || m > best_iid) {
            best = g;
            best_iid = m;
          }
        }
        if (!best) {
          cells.clear();
          break;
        }
        const auto& c = it->second[s][*best];
        cells.push_back({best_iid, stats::mean(c.ood), c.ids, best});
      }
      if (arm.find('/') == std::string::npos && cells.size() == S) {
        std::vector<double> per_grid;
        for (std::size_t g = 0; g < G; ++g) {
          std::vector<double> v;
          for (std::size_t s = 0; s < S; ++s) v.insert(v.end(), it->second[s][g].ood.begin(), it->second[s][g].ood.end());
          if (!v.empty()) per_grid.push_back(stats::mean(v));
        }
        sum.grid_ood[arm] = per_grid;
      }
    } else if (auto mt = multi.find(arm); mt != multi.end()) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto& c = mt->second[s];
        if (c.iid.empty()) {
          cells.clear();
          break;
        }
        cells.push_back({stats::mean(c.iid), stats::mean(c.ood), c.ids, std::nullopt});
      }
    }
    if (cells.size() != S) continue;
    ReportCell avg;
    std::vector<double> iid, ood;
    for (const auto& c : cells) {
      iid.push_back(c.iid);
      ood.push_back(c.ood);
      avg.run_ids.insert(avg.run_ids.end(), c.run_ids.begin(), c.run_ids.end());
    }
    avg.iid = stats::mean(iid);
    avg.ood = stats::mean(ood);
    sum.per_split[arm] = std::move(cells);
    sum.average[arm] = std::move(avg);
    present.push_back(arm);
  }
  sum.arms = present;
  return sum;
}

inline SweepSummary summarize_sweep_text(const std::string& text, const std::string& source) {
  return summarize_sweep(detail::parse_jsonl(text, source), source);
}

inline nlohmann::json summary_json(const SweepSummary& s) {
  nlohmann::json arms = nlohmann::json::object();
  for (const auto& arm : s.arms) {
    nlohmann::json splits = nlohmann::json::array();
    for (std::size_t i = 0; i < s.test_envs.size(); ++i) {
      const auto& c = s.per_split.at(arm)[i];
      nlohmann::json cell = {{"test_env", s.test_envs[i]}, {"iid", c.iid}, {"ood", c.ood}, {"run_ids", c.run_ids}};
      if (c.grid_index) cell["grid_index"] = *c.grid_index;
      splits.push_back(cell);
    }
    nlohmann::json a = {{"splits", splits}, {"mean_iid", s.average.at(arm).iid}, {"mean_ood", s.average.at(arm).ood}};
    if (auto it = s.grid_ood.find(arm); it != s.grid_ood.end()) {
      const auto f = stats::five_number_summary(it->second);
      a["grid_ood"] = it->second;
      a["grid_quartiles"] = {{"min", f.min}, {"q25", f.q25}, {"median", f.median}, {"q75", f.q75}, {"max", f.max}};
    }
    arms[arm] = a;
  }
  return {{"schema", "vldrop.summary/1"}, {"source", s.source}, {"provenance", s.provenance}, {"arms", arms}};
}

// ---------------------------------------------------------------------------
// Rendering.

namespace detail {

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// The erm / wa-single / ensemble-single / dropout / wa-multi / ensemble-multi
// column layout. Missing arms are skipped.
inline std::vector<std::pair<std::string, std::string>> table1_columns(const SweepSummary& s) {
  std::string dropout;
  for (const auto& r : s.recipes)
    if (r.name == "dropout90") dropout = r.name;
  if (dropout.empty())
    for (const auto& r : s.recipes)
      if (r.dropout_rate > 0.0 && r.head_lr_multiplier == 1.0) {
        dropout = r.name;
        break;
      }
  std::vector<std::pair<std::string, std::string>> cols{{"erm", "erm"},
                                                        {"erm/wa-single", "wa-single"},
                                                        {"erm/ensemble-single", "ensemble-single"},
                                                        {dropout, dropout},
                                                        {"erm/wa-multi", "wa-multi"},
                                                        {"erm/ensemble-multi", "ensemble-multi"}};
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& c : cols)
    if (!c.first.empty() && s.average.count(c.first)) out.push_back(c);
  return out;
}

}  // namespace detail

struct ReportFiles {
  std::string markdown;
  std::string table_csv;        // main OOD table
  std::string rates_csv;        // dropout-rate sweep
  std::string composition_csv;  // recipe x variant
  std::string quartiles_csv;    // grid robustness
  std::string cells_csv;        // every cell with its source run ids
};

inline ReportFiles render_report(const std::vector<SweepSummary>& sums) {
  using detail::join;
  using detail::num;
  using detail::pct;
  ReportFiles f;
  std::ostringstream md, table, rates, comp, quart, cells;
  md << "# Sweep report\n";
  table << "source,test_env,arm,iid,ood\n";
  rates << "source,provenance,recipe,dropout_rate,iid,ood\n";
  comp << "source,recipe,variant,iid,ood\n";
  quart << "source,arm,min,q25,median,q75,max,grid_points\n";
  cells << "source,arm,test_env,iid,ood,run_ids\n";

  for (const auto& s : sums) {
    md << "\n## " << s.source << "\n\nStarting point: " << s.provenance << ".\n";

    const auto cols = detail::table1_columns(s);
    if (!cols.empty()) {
      md << "\n### OOD accuracy (%) by held-out environment\n\n| test env |";
      for (const auto& c : cols) md << ' ' << c.second << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
      md << '\n';
      for (std::size_t i = 0; i < s.test_envs.size(); ++i) {
        md << "| " << s.test_envs[i] << " |";
        for (const auto& c : cols) md << ' ' << pct(s.per_split.at(c.first)[i].ood) << " |";
        md << '\n';
      }
      md << "| mean |";
      for (const auto& c : cols) md << ' ' << pct(s.average.at(c.first).ood) << " |";
      md << '\n';
    }
    for (const auto& arm : s.arms) {
      for (std::size_t i = 0; i < s.test_envs.size(); ++i) {
        const auto& c = s.per_split.at(arm)[i];
        table << s.source << ',' << s.test_envs[i] << ',' << arm << ',' << num(c.iid) << ',' << num(c.ood) << '\n';
        cells << s.source << ',' << arm << ',' << s.test_envs[i] << ',' << num(c.iid) << ',' << num(c.ood) << ','
              << join(c.run_ids, ";") << '\n';
      }
      table << s.source << ",mean," << arm << ',' << num(s.average.at(arm).iid) << ',' << num(s.average.at(arm).ood) << '\n';
      cells << s.source << ',' << arm << ",mean," << num(s.average.at(arm).iid) << ',' << num(s.average.at(arm).ood) << ','
            << join(s.average.at(arm).run_ids, ";") << '\n';
    }

    std::vector<RecipeInfo> by_rate;
    for (const auto& r : s.recipes)
      if (r.head_lr_multiplier == 1.0 && s.average.count(r.name)) by_rate.push_back(r);
    std::stable_sort(by_rate.begin(), by_rate.end(),
                     [](const RecipeInfo& a, const RecipeInfo& b) { return a.dropout_rate < b.dropout_rate; });
    if (!by_rate.empty()) {
      md << "\n### Dropout rate\n\n| rate | IID | OOD |\n|---|---|---|\n";
      for (const auto& r : by_rate) {
        const auto& a = s.average.at(r.name);
        md << "| " << r.dropout_rate << " | " << pct(a.iid) << " | " << pct(a.ood) << " |\n";
        rates << s.source << ',' << s.provenance << ',' << r.name << ',' << r.dropout_rate << ',' << num(a.iid) << ','
              << num(a.ood) << '\n';
      }
    }

    md << "\n### Recipe composition (OOD %)\n\n| recipe | selected | wa-single | ensemble-single | wa-multi | "
          "ensemble-multi |\n|---|---|---|---|---|---|\n";
    for (const auto& r : s.recipes) {
      if (!s.average.count(r.name)) continue;
      md << "| " << r.name << " |";
      std::vector<std::string> variants{""};
      for (const auto& v : single_variant_suffixes()) variants.push_back(v);
      for (const auto& v : multi_variant_suffixes()) variants.push_back(v);
      for (const auto& v : variants) {
        const std::string arm = v.empty() ? r.name : r.name + "/" + v;
        if (auto it = s.average.find(arm); it != s.average.end()) {
          md << ' ' << pct(it->second.ood) << " |";
          comp << s.source << ',' << r.name << ',' << (v.empty() ? "selected" : v) << ',' << num(it->second.iid) << ','
               << num(it->second.ood) << '\n';
        } else {
          md << " - |";
        }
      }
      md << '\n';
    }

    if (!s.grid_ood.empty()) {
      md << "\n### OOD accuracy (%) across grid points\n\n| recipe | min | q25 | median | q75 | max |\n"
            "|---|---|---|---|---|---|\n";
      for (const auto& r : s.recipes) {
        auto it = s.grid_ood.find(r.name);
        if (it == s.grid_ood.end()) continue;
        const auto q = stats::five_number_summary(it->second);
        md << "| " << r.name << " | " << pct(q.min) << " | " << pct(q.q25) << " | " << pct(q.median) << " | "
           << pct(q.q75) << " | " << pct(q.max) << " |\n";
        quart << s.source << ',' << r.name << ',' << num(q.min) << ',' << num(q.q25) << ',' << num(q.median) << ','
              << num(q.q75) << ',' << num(q.max) << ',' << it->second.size() << '\n';
      }
    }
  }
  f.markdown = md.str();
  f.table_csv = table.str();
  f.rates_csv = rates.str();
  f.composition_csv = comp.str();
  f.quartiles_csv = quart.str();
  f.cells_csv = cells.str();
  return f;
}

// Every *.jsonl file in dir, in file-name order.
inline std::vector<SweepSummary> summarize_results_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("results directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no sweep results (*.jsonl) in " + dir.string());
  std::vector<SweepSummary> out;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.push_back(summarize_sweep_text(ss.str(), p.filename().string()));
  }
  return out;
}

inline void write_report(const ReportFiles& f, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream o(out / name, std::ios::binary | std::ios::trunc);
    if (!o) throw Error("cannot write " + (out / name).string());
    o << text;
  };
  put("report.md", f.markdown);
  put("ood_table.csv", f.table_csv);
  put("dropout_rates.csv", f.rates_csv);
  put("composition.csv", f.composition_csv);
  put("quartiles.csv", f.quartiles_csv);
  put("cells.csv", f.cells_csv);
}

}  // namespace vldrop
