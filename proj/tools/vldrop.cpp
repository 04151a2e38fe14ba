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

// vldrop: dataset generation, pretraining, fine-tuning, sweeps and reports.
//
// Exit codes: 0 success, 2 usage or validation error, 3 run failure.
// Relative output paths are resolved under $VLDROP_OUTPUT_ROOT when set.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vldrop/vldrop.hpp"

namespace fs = std::filesystem;
using vldrop::ConfigFile;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRun = 3;

fs::path output_path(const std::string& p) {
  const fs::path path(p);
  const char* root = std::getenv("VLDROP_OUTPUT_ROOT");
  if (path.is_relative() && root && *root) return fs::path(root) / path;
  return path;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw vldrop::ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw vldrop::Error("cannot write " + p.string());
  out << text;
  if (!out.flush()) throw vldrop::Error("cannot write " + p.string());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw vldrop::Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// "key=value" pairs into a JSON object; values parse as JSON when they can.
nlohmann::json parse_options(const std::vector<std::string>& kvs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw vldrop::ValidationError("expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    j[key] = nlohmann::json::accept(value) ? nlohmann::json::parse(value) : nlohmann::json(value);
  }
  return j;
}

vldrop::MaskGranularity parse_granularity(const std::string& s) {
  if (s == "per-example") return vldrop::MaskGranularity::per_example;
  if (s == "per-batch") return vldrop::MaskGranularity::per_batch;
  throw vldrop::ValidationError("mask granularity must be per-example or per-batch, got '" + s + "'");
}

// Starting point: a saved checkpoint, or a fresh model sized to the data.
vldrop::Checkpoint starting_point(const std::string& start, const vldrop::EnvDataset& ds, std::size_t width,
                                  std::size_t hidden, std::size_t depth, std::uint64_t model_seed) {
  if (!start.empty()) {
    if (!fs::exists(start)) throw vldrop::ValidationError("starting checkpoint " + start + " does not exist");
    return vldrop::load_checkpoint(start);
  }
  const vldrop::ArchSpec arch{ds.num_features, width, hidden, depth, ds.num_classes};
  return vldrop::Checkpoint::capture(vldrop::new_residual_model(arch, model_seed), 0, "init");
}

vldrop::EnvDataset load_data(const std::string& dir) {
  if (!fs::is_directory(dir)) throw vldrop::ValidationError("dataset directory " + dir + " does not exist");
  return vldrop::load_dataset(dir);
}

// Writes runs.jsonl and summary.json; returns the exit code.
int write_sweep(const vldrop::SweepResult& r, const fs::path& out) {
  const std::string text = vldrop::sweep_jsonl(r);
  write_file(out / "runs.jsonl", text);
  std::cout << "wrote " << (out / "runs.jsonl").string() << " (" << r.runs.size() << " runs)\n";
  if (!r.complete()) {
    for (const auto& c : r.failed_cells) std::cerr << "error: no successful run for " << c << '\n';
    for (const auto& run : r.runs)
      if (!run.ok) std::cerr << "  " << vldrop::sweep_run_id(r.spec, run.split, run.recipe, run.grid_index, run.seed_index)
                             << ": " << run.error << '\n';
    return kExitRun;
  }
  write_file(out / "summary.json", vldrop::summary_json(vldrop::summarize_sweep_text(text, "runs.jsonl")).dump(2) + "\n");
  return 0;
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string task;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n_features = 8;
  std::size_t n_samples = 1000;
  double label_noise = 0.0;
  std::vector<std::size_t> missing{0};
  double scale_decay = 0.5;
  double jitter = 0.5;
  double positive_rate = 0.5;
  std::size_t envs = 4;
  std::size_t per_env = 0;
  std::string variant = "rich";
  std::size_t size = 50000;
  std::vector<std::string> options;
};

int cmd_gen_data(const GenDataArgs& a) {
  vldrop::EnvDataset ds;
  if (a.task == "redundant") {
    ds = vldrop::gen_redundant_task(a.n_features, a.n_samples, a.label_noise, a.seed, a.missing,
                                    {a.scale_decay, a.jitter, a.positive_rate});
  } else {
    nlohmann::json o = parse_options(a.options);
    if (a.task == "multienv") {
      o["num_envs"] = a.envs;
      if (a.per_env) o["n_per_env"] = a.per_env;
      ds = vldrop::gen_multienv_task(vldrop::MultiEnvOptions::from_json(o), a.seed);
    } else {
      if (a.variant != "rich" && a.variant != "plain") throw vldrop::ValidationError("--variant must be rich or plain");
      ds = vldrop::gen_pretrain_corpus(a.variant == "rich", a.size, a.seed, vldrop::MultiEnvOptions::from_json(o));
    }
  }
  const fs::path out = output_path(a.out.empty() ? "data/" + a.task : a.out);
  vldrop::save_dataset(ds, out);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(out))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) std::cout << sha256_hex(read_file(f)) << "  " << f.filename().string() << '\n';
  return 0;
}

// --- pretrain -----------------------------------------------------------------

struct PretrainArgs {
  std::string data;
  std::string out = "checkpoints/pretrained.ckpt";
  std::size_t width = 64, hidden = 32, depth = 2;
  std::uint64_t seed = 0;
  vldrop::PretrainConfig cfg;
};

int cmd_pretrain(const PretrainArgs& a) {
  const vldrop::EnvDataset corpus = load_data(a.data);
  const vldrop::PretrainResult r = vldrop::pretrain({1, a.width, a.hidden, a.depth, 2}, corpus, a.cfg, a.seed);
  const fs::path out = output_path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  vldrop::save_checkpoint(r.checkpoint, out);
  nlohmann::json log = {{"checkpoint", out.filename().string()},
                        {"provenance", vldrop::to_string(r.checkpoint.model().provenance)},
                        {"train_accuracy", nlohmann::json::array()}};
  for (const auto& [it, acc] : r.train_accuracy) log["train_accuracy"].push_back({{"iteration", it}, {"accuracy", acc}});
  fs::path log_path = out;
  log_path.replace_extension(".json");
  write_file(log_path, log.dump(2) + "\n");
  std::cout << "wrote " << out.string();
  if (!r.train_accuracy.empty()) std::cout << " (train accuracy " << r.train_accuracy.back().second << ")";
  std::cout << '\n';
  return 0;
}

// --- finetune -----------------------------------------------------------------

struct FinetuneArgs {
  std::string data, start, out = "results/finetune";
  int test_env = -1;
  double holdout = 0.2;
  std::uint64_t split_seed = 0;
  std::size_t width = 64, hidden = 32, depth = 2;
  std::uint64_t model_seed = 0;
  std::string granularity = "per-example";
  vldrop::FineTuneConfig cfg;
};

int cmd_finetune(FinetuneArgs a) {
  a.cfg.granularity = parse_granularity(a.granularity);
  a.cfg.validate();
  const vldrop::EnvDataset ds = load_data(a.data);
  const vldrop::Checkpoint start = starting_point(a.start, ds, a.width, a.hidden, a.depth, a.model_seed);
  if (ds.envs.size() < 2) throw vldrop::ValidationError("fine-tuning needs at least two environments");
  const int test = a.test_env < 0 ? ds.envs.back().id : a.test_env;
  vldrop::EnvSplit split;
  for (const auto& e : ds.envs)
    if (e.id != test) split.finetune_envs.push_back(e.id);
  if (split.finetune_envs.size() == ds.envs.size()) throw vldrop::ValidationError("no environment " + std::to_string(test));
  split.test_env = test;
  split.holdout_fraction = a.holdout;
  split.seed = a.split_seed;

  // A one-cell sweep, so the record has the same shape as sweep output.
  vldrop::SweepSpec spec;
  spec.splits = {split};
  spec.grid = {{a.cfg.learning_rate, a.cfg.weight_decay}};
  std::string name = "erm";
  if (a.cfg.dropout_rate > 0.0) {
    std::ostringstream n;
    n << "dropout" << a.cfg.dropout_rate * 100.0;
    name = n.str();
  }
  if (a.cfg.head_lr_multiplier != 1.0) name += "-head" + vldrop::detail::concat(a.cfg.head_lr_multiplier);
  spec.recipes = {{name, a.cfg.dropout_rate, a.cfg.head_lr_multiplier}};
  spec.seeds = {a.cfg.seed};
  spec.base = a.cfg;
  const vldrop::SweepResult r = vldrop::run_sweep_collect(start, ds, spec);
  const fs::path out = output_path(a.out);
  if (r.runs.front().ok) {
    fs::create_directories(out);
    vldrop::save_checkpoint(r.runs.front().record.best, out / "best.ckpt");
    const auto& sel = r.runs.front().record.selected;
    std::cout << "iid " << sel.iid << " ood " << sel.ood << '\n';
  }
  return write_sweep(r, out);
}

// --- sweep ----------------------------------------------------------------------

int cmd_sweep(ConfigFile cfg) {
  if (cfg.str("data").empty()) throw vldrop::ValidationError("sweep needs a dataset (--data or data = ...)");
  const vldrop::EnvDataset ds = load_data(cfg.str("data"));
  const vldrop::Checkpoint start = starting_point(cfg.str("start"), ds, cfg.uint("width"), cfg.uint("hidden"),
                                                  cfg.uint("depth"), cfg.uint("model_seed"));
  vldrop::SweepSpec spec;
  spec.splits = vldrop::leave_one_out_splits(ds, cfg.real("holdout"), cfg.uint("split_seed"));
  spec.grid = vldrop::make_grid(cfg.reals("lrs"), cfg.reals("wds"));
  for (const auto& r : cfg.list("recipes")) spec.recipes.push_back(vldrop::parse_recipe(r));
  spec.seeds = cfg.uints("seeds");
  spec.base.iterations = cfg.uint("iterations");
  spec.base.batch_size = cfg.uint("batch_size");
  spec.base.checkpoint_interval = cfg.uint("checkpoint_interval");
  spec.base.patience = cfg.uint("patience");
  spec.base.momentum = cfg.real("momentum");
  spec.base.freeze_trunk = cfg.boolean("freeze_trunk");
  spec.base.granularity = parse_granularity(cfg.str("mask_granularity"));
  spec.pool_seeds_in_multi_run = cfg.boolean("pool_seeds");
  spec.parallel = cfg.uint("parallel");
  if (spec.parallel < 1) throw vldrop::ValidationError("--parallel must be >= 1");
  return write_sweep(vldrop::run_sweep_collect(start, ds, spec), output_path(cfg.str("out")));
}

// --- report ---------------------------------------------------------------------

int cmd_report(const std::string& results, const std::string& out) {
  const auto sums = vldrop::summarize_results_dir(results);
  const fs::path dest = output_path(out.empty() ? (fs::path(results) / "report").string() : out);
  vldrop::write_report(vldrop::render_report(sums), dest);
  std::cout << "wrote " << (dest / "report.md").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Very-large dropout fine-tuning experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  gen->add_option("--task", gd.task, "redundant, multienv or pretrain")
      ->required()
      ->check(CLI::IsMember({"redundant", "multienv", "pretrain"}));
  gen->add_option("--out", gd.out, "output directory (default data/<task>)");
  gen->add_option("--seed", gd.seed, "generator seed")->capture_default_str();
  gen->add_option("--n-features", gd.n_features, "redundant: feature count")->capture_default_str();
  gen->add_option("--n-samples", gd.n_samples, "redundant: samples per environment")->capture_default_str();
  gen->add_option("--label-noise", gd.label_noise, "redundant: label flip probability")->capture_default_str();
  gen->add_option("--missing", gd.missing, "redundant: features zeroed in the OOD environment")->delimiter(',')->capture_default_str();
  gen->add_option("--scale-decay", gd.scale_decay, "redundant: feature scale ratio")->capture_default_str();
  gen->add_option("--jitter", gd.jitter, "redundant: relative noise half-width")->capture_default_str();
  gen->add_option("--positive-rate", gd.positive_rate, "redundant: P(y = 1)")->capture_default_str();
  gen->add_option("--envs", gd.envs, "multienv: environment count")->capture_default_str();
  gen->add_option("--per-env", gd.per_env, "multienv: examples per environment (0 keeps the default)");
  gen->add_option("--variant", gd.variant, "pretrain: rich or plain")->capture_default_str();
  gen->add_option("--size", gd.size, "pretrain: corpus size")->capture_default_str();
  std::string keys;
  const vldrop::MultiEnvOptions defaults;
  vldrop::MultiEnvOptions::visit(defaults, [&](const char* k, const auto&) {
    keys += keys.empty() ? k : std::string(", ") + k;
  });
  gen->add_option("--set", gd.options, "multienv/pretrain generator option key=value (repeatable); keys: " + keys);

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Pretrain a residual model on a corpus");
  pre->add_option("--data", pa.data, "corpus directory")->required();
  pre->add_option("--out", pa.out, "checkpoint path")->capture_default_str();
  pre->add_option("--width", pa.width, "trunk width")->capture_default_str();
  pre->add_option("--hidden", pa.hidden, "block inner width")->capture_default_str();
  pre->add_option("--depth", pa.depth, "residual blocks")->capture_default_str();
  pre->add_option("--seed", pa.seed, "initialization and batch seed")->capture_default_str();
  pre->add_option("--iterations", pa.cfg.iterations, "SGD iterations")->capture_default_str();
  pre->add_option("--batch-size", pa.cfg.batch_size, "batch size")->capture_default_str();
  pre->add_option("--lr", pa.cfg.learning_rate, "learning rate")->capture_default_str();
  pre->add_option("--wd", pa.cfg.weight_decay, "weight decay")->capture_default_str();
  pre->add_option("--momentum", pa.cfg.momentum, "SGD momentum")->capture_default_str();

  FinetuneArgs fa;
  auto* ft = app.add_subcommand("finetune", "Fine-tune one configuration on one split");
  ft->add_option("--data", fa.data, "dataset directory")->required();
  ft->add_option("--start", fa.start, "starting checkpoint (default: fresh model)");
  ft->add_option("--out", fa.out, "output directory")->capture_default_str();
  ft->add_option("--test-env", fa.test_env, "held-out environment id (default: the last)");
  ft->add_option("--dropout", fa.cfg.dropout_rate, "dropout rate on the penultimate representation")->capture_default_str();
  ft->add_option("--lr", fa.cfg.learning_rate, "learning rate")->capture_default_str();
  ft->add_option("--wd", fa.cfg.weight_decay, "weight decay")->capture_default_str();
  ft->add_option("--head-lr-mult", fa.cfg.head_lr_multiplier, "head learning-rate multiplier")->capture_default_str();
  ft->add_option("--momentum", fa.cfg.momentum, "SGD momentum")->capture_default_str();
  ft->add_option("--iterations", fa.cfg.iterations, "iterations T (decay x0.1 at T/2)")->capture_default_str();
  ft->add_option("--batch-size", fa.cfg.batch_size, "batch size")->capture_default_str();
  ft->add_option("--checkpoint-interval", fa.cfg.checkpoint_interval, "0 means T/33")->capture_default_str();
  ft->add_option("--patience", fa.cfg.patience, "0 never halts early")->capture_default_str();
  ft->add_option("--seed", fa.cfg.seed, "fine-tuning seed")->capture_default_str();
  ft->add_flag("--freeze-trunk", fa.cfg.freeze_trunk, "train the head only");
  ft->add_option("--mask-granularity", fa.granularity, "per-example or per-batch")->capture_default_str();
  ft->add_option("--holdout", fa.holdout, "IID validation fraction")->capture_default_str();
  ft->add_option("--split-seed", fa.split_seed, "holdout split seed")->capture_default_str();
  ft->add_option("--width", fa.width, "fresh model: trunk width")->capture_default_str();
  ft->add_option("--hidden", fa.hidden, "fresh model: block inner width")->capture_default_str();
  ft->add_option("--depth", fa.depth, "fresh model: residual blocks")->capture_default_str();
  ft->add_option("--model-seed", fa.model_seed, "fresh model: initialization seed")->capture_default_str();

  // Sweep flags mirror the config keys; an explicit flag beats the file.
  auto* sw = app.add_subcommand("sweep", "Run the full grid over leave-one-out splits");
  std::string config_path;
  sw->add_option("--config", config_path, "key = value experiment file");
  std::vector<std::pair<std::string, std::string>> sweep_flags;
  std::vector<std::string> sweep_values;
  const auto schema = vldrop::sweep_config_schema();
  sweep_values.resize(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    std::string flag = "--" + schema[i].name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (schema[i].name == "freeze_trunk" || schema[i].name == "pool_seeds") {
      sw->add_flag_function(flag, [&, i](std::int64_t) { sweep_values[i] = "true"; }, schema[i].help);
    } else {
      sw->add_option(flag, sweep_values[i], schema[i].help + " (default: " + schema[i].default_value + ")");
    }
  }

  std::string results_dir, report_out;
  auto* rep = app.add_subcommand("report", "Summarize sweep results into Markdown and CSV");
  rep->add_option("--results", results_dir, "directory of *.jsonl sweep results")->required();
  rep->add_option("--out", report_out, "output directory (default <results>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gd);
    if (*pre) return cmd_pretrain(pa);
    if (*ft) return cmd_finetune(fa);
    if (*sw) {
      ConfigFile cfg = config_path.empty() ? ConfigFile(schema) : ConfigFile::parse(read_file(config_path), schema);
      for (std::size_t i = 0; i < schema.size(); ++i)
        if (!sweep_values[i].empty()) cfg.set(schema[i].name, sweep_values[i]);
      return cmd_sweep(std::move(cfg));
    }
    if (*rep) return cmd_report(results_dir, report_out);
  } catch (const vldrop::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vldrop::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRun;
  }
  return kExitUsage;
}
