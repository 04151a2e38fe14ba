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

// Pretrain / fine-tune / evaluate pipeline and the leave-one-environment-out
// sweep.
//
// Seeding: every run derives its streams (head init, batch sampling,
// dropout masks) from one run seed, so runs are independent units and a
// sweep gives the same records in any execution order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "vldrop/autodiff.hpp"
#include "vldrop/checkpoint.hpp"
#include "vldrop/datagen.hpp"
#include "vldrop/dropout.hpp"
#include "vldrop/error.hpp"
#include "vldrop/model.hpp"
#include "vldrop/optimizer.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/stats.hpp"
#include "vldrop/tensor.hpp"

namespace vldrop {

// ---------------------------------------------------------------------------
// Batches and evaluation.

struct LabeledSet {
  Tensor x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }

  static LabeledSet from(const EnvDataset& ds) { return {ds.feature_tensor(), ds.labels}; }
};

inline LabeledSet gather(const LabeledSet& s, std::span<const std::size_t> rows) {
  const std::size_t d = s.x.dim(1);
  std::vector<double> v(rows.size() * d);
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(s.x.values().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                v.begin() + static_cast<std::ptrdiff_t>(i * d));
    y[i] = s.y[rows[i]];
  }
  return {Tensor({rows.size(), d}, std::move(v)), std::move(y)};
}

inline double accuracy_of(const std::vector<int>& pred, const std::vector<int>& y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

inline void check_eval_set(const ResidualModel& m, const LabeledSet& s) {
  if (s.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  if (s.x.rank() != 2 || s.x.dim(1) != m.arch.input_dim) {
    throw ValidationError(detail::concat("evaluation inputs have shape ", to_string(s.x.shape()),
                                         " but the model expects ", m.arch.input_dim, " features"));
  }
  for (int label : s.y) {
    if (label < 0 || static_cast<std::size_t>(label) >= m.arch.num_classes) {
      throw ValidationError(detail::concat("label ", label, " is outside the head's ", m.arch.num_classes, " classes"));
    }
  }
}

// Eval-mode argmax accuracy; ties go to the lowest class index.
inline double evaluate(const ResidualModel& m, const LabeledSet& s) {
  check_eval_set(m, s);
  return accuracy_of(kernels::argmax_rows(forward(m, s.x).logits), s.y);
}

inline double evaluate(const ResidualModel& m, const EnvDataset& ds) {
  if (ds.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  return evaluate(m, LabeledSet::from(ds));
}

// Mean of member softmax probabilities. Members are summed pairwise so the
// result depends on member order only at rounding level.
inline Tensor ensemble_predict(const std::vector<const ResidualModel*>& models, const Tensor& x) {
  if (models.empty()) throw ValidationError("ensemble needs at least one model");
  const std::size_t c = models.front()->arch.num_classes;
  std::vector<Tensor> probs;
  probs.reserve(models.size());
  for (const ResidualModel* m : models) {
    if (m->arch.num_classes != c) throw ValidationError("ensemble members disagree on the number of classes");
    probs.push_back(kernels::softmax_rows(forward(*m, x).logits));
  }
  Tensor out(probs.front().shape());
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < models.size(); ++k) column[k] = probs[k][i];
    out[i] = stats::pairwise_sum(column) / static_cast<double>(models.size());
  }
  return out;
}

inline Tensor ensemble_predict(const std::vector<ResidualModel>& models, const Tensor& x) {
  std::vector<const ResidualModel*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  return ensemble_predict(ptrs, x);
}

inline double evaluate_ensemble(const std::vector<ResidualModel>& models, const LabeledSet& s) {
  if (models.empty()) throw ValidationError("ensemble needs at least one model");
  check_eval_set(models.front(), s);
  return accuracy_of(kernels::argmax_rows(ensemble_predict(models, s.x)), s.y);
}

// Arithmetic mean of parameter vectors (pairwise summation per coordinate).
inline ResidualModel weight_average(const std::vector<Checkpoint>& cks) {
  if (cks.empty()) throw ValidationError("weight average needs at least one checkpoint");
  const ArchSpec& arch = cks.front().arch;
  for (const auto& c : cks) {
    if (!(c.arch == arch)) {
      throw ValidationError("weight average over mismatched architectures " + arch.describe() + " and " +
                            c.arch.describe());
    }
  }
  const std::size_t n = cks.front().params.size();
  std::vector<double> avg(n), column(cks.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < cks.size(); ++k) column[k] = cks[k].params[i];
    avg[i] = stats::pairwise_sum(column) / static_cast<double>(cks.size());
  }
  Checkpoint out = cks.front();
  out.params = std::move(avg);
  return out.model();
}

inline ResidualModel weight_average(const std::vector<ResidualModel>& models) {
  std::vector<Checkpoint> cks;
  for (const auto& m : models) cks.push_back(Checkpoint::capture(m, 0, ""));
  return weight_average(cks);
}

namespace detail {

inline LabeledSet sample_batch(const LabeledSet& pool, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> rows(batch);
  for (auto& r : rows) r = rng.index(pool.size());
  return gather(pool, rows);
}

inline double train_step(ResidualModel& m, OptimizerState& opt, const LabeledSet& batch, DropoutSpec& dropout,
                         std::size_t iteration) {
  Graph g;
  const GraphForward f = forward(g, m, batch.x, dropout);
  const Var loss = g.softmax_cross_entropy(f.logits, batch.y);
  const double value = g.value(loss)[0];
  if (!std::isfinite(value)) throw RunError("training loss is not finite", static_cast<long long>(iteration));
  g.backward(loss);
  opt.step();
  return value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pretraining.

struct PretrainConfig {
  std::size_t iterations = 3000;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t eval_interval = 0;  // 0 means iterations / 33
  std::size_t eval_examples = 2000;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<std::pair<std::size_t, double>> train_accuracy;  // (iteration, accuracy on a fixed subsample)
};

// Trains from scratch with dropout off. The provenance tag follows the
// corpus (rich or plain).
inline PretrainResult pretrain(ArchSpec arch, const EnvDataset& corpus, const PretrainConfig& cfg, std::uint64_t seed) {
  if (corpus.size() == 0) throw ValidationError("pretraining corpus is empty");
  arch.input_dim = corpus.num_features;
  arch.num_classes = corpus.num_classes;
  ResidualModel m = new_residual_model(arch, seed);
  const bool rich = corpus.generator.contains("rich") && corpus.generator["rich"].get<bool>();
  m.provenance = rich ? Provenance::pretrained_rich : Provenance::pretrained_plain;

  const LabeledSet pool = LabeledSet::from(corpus);
  std::vector<std::size_t> probe_rows(std::min(cfg.eval_examples, pool.size()));
  std::iota(probe_rows.begin(), probe_rows.end(), std::size_t{0});
  const LabeledSet probe = gather(pool, probe_rows);

  PretrainResult out;
  if (cfg.iterations > 0) {
    OptimizerState opt({cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.iterations, 0.1},
                       {{"all", 1.0, m.params()}});
    Rng batches(derive_seed(seed, "pretrain-batches"));
    DropoutSpec off = DropoutSpec::eval();
    const std::size_t interval = cfg.eval_interval ? cfg.eval_interval : std::max<std::size_t>(1, cfg.iterations / 33);
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      detail::train_step(m, opt, detail::sample_batch(pool, cfg.batch_size, batches), off, t);
      if ((t + 1) % interval == 0) out.train_accuracy.emplace_back(t + 1, evaluate(m, probe));
    }
  }
  out.checkpoint = Checkpoint::capture(m, cfg.iterations, "pretrain-" + std::to_string(seed));
  return out;
}

// ---------------------------------------------------------------------------
// Splits.

struct EnvSplit {
  std::vector<int> finetune_envs;
  int test_env = 0;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (finetune_envs.empty()) throw ValidationError("split needs at least one fine-tune environment");
    if (std::find(finetune_envs.begin(), finetune_envs.end(), test_env) != finetune_envs.end()) {
      throw ValidationError(detail::concat("test environment ", test_env, " is also a fine-tune environment"));
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
      throw ValidationError(detail::concat("holdout fraction must lie in (0, 1), got ", holdout_fraction));
    }
  }
};

// One split per environment: test on it, fine-tune on the others.
inline std::vector<EnvSplit> leave_one_out_splits(const EnvDataset& ds, double holdout = 0.2, std::uint64_t seed = 0) {
  std::vector<EnvSplit> out;
  for (const auto& test : ds.envs) {
    EnvSplit s;
    for (const auto& e : ds.envs)
      if (e.id != test.id) s.finetune_envs.push_back(e.id);
    s.test_env = test.id;
    s.holdout_fraction = holdout;
    s.seed = seed;
    out.push_back(std::move(s));
  }
  return out;
}

struct SplitData {
  LabeledSet train, val, test;
};

// Pools the fine-tune environments, holds out a seeded random fraction as the
// IID validation set, and takes the test environment as the OOD set.
inline SplitData materialize(const EnvDataset& ds, const EnvSplit& split) {
  split.validate();
  const EnvDataset pool = ds.select_envs(split.finetune_envs);
  const EnvDataset test = ds.select_envs({split.test_env});
  if (pool.size() < 2 || test.size() == 0) throw ValidationError("split leaves an empty partition");

  std::vector<std::size_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(split.seed, "holdout"));
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  auto n_val = static_cast<std::size_t>(std::llround(split.holdout_fraction * static_cast<double>(pool.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, pool.size() - 1);

  std::vector<std::size_t> val_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  const LabeledSet all = LabeledSet::from(pool);
  return {gather(all, train_rows), gather(all, val_rows), LabeledSet::from(test)};
}

// ---------------------------------------------------------------------------
// Fine-tuning.

struct FineTuneConfig {
  double dropout_rate = 0.9;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double head_lr_multiplier = 1.0;
  double momentum = 0.9;
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  std::size_t checkpoint_interval = 0;  // 0 means max(1, iterations / 33)
  std::size_t patience = 0;             // checkpoints without improvement before halting; 0 never halts
  std::uint64_t seed = 0;
  bool freeze_trunk = false;
  MaskGranularity granularity = MaskGranularity::per_example;
  bool keep_trail = true;

  std::size_t interval() const {
    return checkpoint_interval ? checkpoint_interval : std::max<std::size_t>(1, iterations / 33);
  }

  void validate() const {
    validate_dropout_rate(dropout_rate);
    if (!(learning_rate > 0.0)) throw ValidationError("fine-tune learning rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("fine-tune weight decay must be >= 0");
    if (!(head_lr_multiplier > 0.0)) throw ValidationError("head learning-rate multiplier must be > 0");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (iterations > 0 && iterations < 2 * interval()) {
      throw ValidationError(detail::concat("iterations (", iterations, ") must be at least twice the checkpoint interval (",
                                           interval(), ")"));
    }
  }

  nlohmann::json to_json() const {
    return {{"dropout_rate", dropout_rate},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"head_lr_multiplier", head_lr_multiplier},
            {"momentum", momentum},
            {"iterations", iterations},
            {"batch_size", batch_size},
            {"checkpoint_interval", interval()},
            {"patience", patience},
            {"seed", seed},
            {"freeze_trunk", freeze_trunk},
            {"mask_granularity", granularity == MaskGranularity::per_example ? "per-example" : "per-batch"}};
  }
};

struct Accuracies {
  double iid = 0.0;
  double ood = 0.0;
};

struct RunRecord {
  std::string run_id;
  FineTuneConfig config;
  std::vector<Checkpoint> trail;           // empty unless config.keep_trail
  std::vector<std::size_t> trail_iterations;
  std::vector<double> trail_iid;           // IID validation accuracy per trail entry
  std::size_t best_index = 0;
  Checkpoint best;                         // early-stopped checkpoint
  Accuracies selected;                     // best checkpoint
  std::optional<Accuracies> wa_single;     // weight average of the trail
  std::optional<Accuracies> ensemble_single;
  double wall_clock_seconds = 0.0;
};

// Fine-tunes from start on the split: fresh head, dropout on Phi in train
// mode, checkpoints every interval, retain the best IID-validation
// checkpoint, evaluate it on the test environment with dropout off.
inline RunRecord finetune(const Checkpoint& start, const SplitData& data, const FineTuneConfig& cfg,
                          std::string run_id = "run", std::size_t num_classes = 2, bool single_run_variants = false) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (data.train.x.dim(1) != start.arch.input_dim) {
    throw ValidationError(detail::concat("start checkpoint expects ", start.arch.input_dim, " features, data has ",
                                         data.train.x.dim(1)));
  }
  ResidualModel m = reinit_head(start.model(), num_classes, derive_seed(cfg.seed, "head"));
  m.set_trunk_trainable(!cfg.freeze_trunk);

  RunRecord rec;
  rec.run_id = std::move(run_id);
  rec.config = cfg;

  auto record = [&](std::size_t iteration) {
    const double iid = evaluate(m, data.val);
    Checkpoint ck = Checkpoint::capture(m, iteration, rec.run_id);
    const bool better = rec.trail_iid.empty() || iid > rec.trail_iid[rec.best_index];
    rec.trail_iterations.push_back(iteration);
    rec.trail_iid.push_back(iid);
    if (better) {
      rec.best_index = rec.trail_iid.size() - 1;
      rec.best = ck;
    }
    if (cfg.keep_trail || single_run_variants) rec.trail.push_back(std::move(ck));
    return better;
  };

  if (cfg.iterations == 0) {
    record(0);
  } else {
    std::vector<ParamGroup> groups;
    if (!cfg.freeze_trunk) groups.push_back({"trunk", 1.0, m.trunk_params()});
    groups.push_back({"head", cfg.head_lr_multiplier, m.head_params()});
    OptimizerState opt({cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.iterations, 0.1}, std::move(groups));
    Rng batches(derive_seed(cfg.seed, "batches"));
    DropoutSpec dropout(cfg.dropout_rate, DropoutMode::train, derive_seed(cfg.seed, "dropout"), cfg.granularity);
    const std::size_t interval = cfg.interval();
    std::size_t stale = 0;
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      detail::train_step(m, opt, detail::sample_batch(data.train, cfg.batch_size, batches), dropout, t);
      if ((t + 1) % interval == 0) {
        stale = record(t + 1) ? 0 : stale + 1;
        if (cfg.patience && stale >= cfg.patience) break;
      }
    }
  }

  const ResidualModel best = rec.best.model();
  rec.selected = {rec.trail_iid[rec.best_index], evaluate(best, data.test)};
  if (single_run_variants) {
    const ResidualModel wa = weight_average(rec.trail);
    rec.wa_single = Accuracies{evaluate(wa, data.val), evaluate(wa, data.test)};
    std::vector<ResidualModel> members;
    for (const auto& c : rec.trail) members.push_back(c.model());
    rec.ensemble_single = Accuracies{evaluate_ensemble(members, data.val), evaluate_ensemble(members, data.test)};
    if (!cfg.keep_trail) rec.trail.clear();
  }
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Comparison arms built from runs.

struct Variants {
  ResidualModel wa_single;
  std::vector<ResidualModel> ensemble_single;
  std::optional<ResidualModel> wa_multi;
  std::vector<ResidualModel> ensemble_multi;
};

// Single-run arms come from the first record's trail; multi-run arms pool
// the early-stopped checkpoints of all records.
inline Variants build_variants(const std::vector<const RunRecord*>& runs) {
  if (runs.empty()) throw ValidationError("build_variants needs at least one run");
  const RunRecord& first = *runs.front();
  if (first.trail.empty()) throw ValidationError("single-run variants need a checkpoint trail");
  Variants v{weight_average(first.trail), {}, std::nullopt, {}};
  for (const auto& c : first.trail) v.ensemble_single.push_back(c.model());
  if (runs.size() >= 2) {
    std::vector<Checkpoint> finals;
    for (const RunRecord* r : runs) finals.push_back(r->best);
    v.wa_multi = weight_average(finals);
    for (const auto& c : finals) v.ensemble_multi.push_back(c.model());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Sweep.

// A recipe fixes the dropout rate and head multiplier. Names:
//   erm                 rate 0
//   dropout<NN>         rate NN/100 (dropout90 -> 0.9, dropout95 -> 0.95)
//   <recipe>-head10     same with a x10 head learning rate
struct Recipe {
  std::string name;
  double dropout_rate = 0.0;
  double head_lr_multiplier = 1.0;
};

inline Recipe parse_recipe(const std::string& name) {
  Recipe r{name, 0.0, 1.0};
  std::string base = name;
  const std::string suffix = "-head10";
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    r.head_lr_multiplier = 10.0;
    base.resize(base.size() - suffix.size());
  }
  if (base == "erm") return r;
  if (base.rfind("dropout", 0) == 0 && base.size() > 7 && base.size() <= 9) {
    const std::string digits = base.substr(7);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      r.dropout_rate = std::stoi(digits) / std::pow(10.0, static_cast<double>(digits.size()));
      validate_dropout_rate(r.dropout_rate);
      return r;
    }
  }
  throw ValidationError("unknown recipe '" + name + "' (expected erm, dropout<NN>, optionally with -head10)");
}

struct GridPoint {
  double learning_rate;
  double weight_decay;
};

inline std::vector<GridPoint> make_grid(const std::vector<double>& lrs, const std::vector<double>& wds) {
  std::vector<GridPoint> g;
  for (double lr : lrs)
    for (double wd : wds) g.push_back({lr, wd});
  return g;
}

struct SweepSpec {
  std::vector<EnvSplit> splits;
  std::vector<GridPoint> grid;
  std::vector<Recipe> recipes;
  std::vector<std::uint64_t> seeds;
  FineTuneConfig base;                 // everything except rate, lr, wd, multiplier, seed
  bool pool_seeds_in_multi_run = false;
  std::size_t parallel = 1;
};

// Flat record of one unit of work, as written to the JSON-lines file.
struct SweepRun {
  std::size_t split = 0;
  int test_env = 0;
  std::size_t recipe = 0;
  std::size_t grid_index = 0;
  std::size_t seed_index = 0;
  std::uint64_t run_seed = 0;
  bool ok = false;
  std::string error;
  RunRecord record;
};

// Multi-run arm for one (split, recipe, seed), or (split, recipe) when seeds
// are pooled.
struct MultiRun {
  std::size_t split = 0;
  int test_env = 0;
  std::size_t recipe = 0;
  std::optional<std::size_t> seed_index;
  std::size_t members = 0;
  Accuracies wa, ensemble;
};

struct SweepResult {
  SweepSpec spec;
  std::string provenance;
  std::vector<SweepRun> runs;  // ordered by (split, recipe, grid, seed)
  std::vector<MultiRun> multi;
  std::vector<std::string> failed_cells;  // (split, recipe) pairs without a successful run

  bool complete() const noexcept { return failed_cells.empty(); }
};

inline std::uint64_t sweep_run_seed(std::uint64_t seed, std::size_t split, std::size_t grid_index) {
  // The recipe is deliberately absent: all recipes at one (split, grid, seed)
  // see the same head init and batch sequence.
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(split)), static_cast<std::uint64_t>(grid_index) + 0x100);
}

inline std::string sweep_run_id(const SweepSpec& s, std::size_t split, std::size_t recipe, std::size_t grid,
                                std::size_t seed_index) {
  return detail::concat("s", split, "-", s.recipes[recipe].name, "-g", grid, "-r", seed_index);
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to slot i by fn, which makes the outcome order-independent.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Runs every unit and records failures instead of throwing, so callers can
// flush partial results. See run_sweep for the throwing form.
inline SweepResult run_sweep_collect(const Checkpoint& start, const EnvDataset& ds, const SweepSpec& spec) {
  if (spec.splits.empty()) throw ValidationError("sweep needs at least one split");
  if (spec.grid.empty()) throw ValidationError("sweep needs a nonempty grid");
  if (spec.recipes.empty()) throw ValidationError("sweep needs at least one recipe");
  if (spec.seeds.empty()) throw ValidationError("sweep needs at least one seed");

  std::vector<SplitData> data;
  for (const auto& s : spec.splits) data.push_back(materialize(ds, s));

  SweepResult res;
  res.spec = spec;
  res.provenance = to_string(start.provenance);
  const std::size_t S = spec.splits.size(), R = spec.recipes.size(), G = spec.grid.size(), K = spec.seeds.size();
  res.runs.resize(S * R * G * K);
  for (std::size_t s = 0, i = 0; s < S; ++s)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t k = 0; k < K; ++k, ++i) {
          SweepRun& run = res.runs[i];
          run.split = s;
          run.test_env = spec.splits[s].test_env;
          run.recipe = r;
          run.grid_index = g;
          run.seed_index = k;
          run.run_seed = sweep_run_seed(spec.seeds[k], s, g);
        }

  detail::parallel_for(res.runs.size(), spec.parallel, [&](std::size_t i) {
    SweepRun& run = res.runs[i];
    FineTuneConfig cfg = spec.base;
    cfg.dropout_rate = spec.recipes[run.recipe].dropout_rate;
    cfg.head_lr_multiplier = spec.recipes[run.recipe].head_lr_multiplier;
    cfg.learning_rate = spec.grid[run.grid_index].learning_rate;
    cfg.weight_decay = spec.grid[run.grid_index].weight_decay;
    cfg.seed = run.run_seed;
    cfg.keep_trail = false;
    try {
      run.record = finetune(start, data[run.split], cfg, sweep_run_id(spec, run.split, run.recipe, run.grid_index, run.seed_index),
                            ds.num_classes, true);
      run.ok = true;
    } catch (const std::exception& e) {
      run.ok = false;
      run.error = e.what();
    }
  });

  // Multi-run arms: early-stopped checkpoints pooled over the grid (and
  // optionally over seeds).
  struct Job {
    std::size_t split, recipe;
    std::optional<std::size_t> seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < R; ++r) {
      if (spec.pool_seeds_in_multi_run) jobs.push_back({s, r, std::nullopt});
      else
        for (std::size_t k = 0; k < K; ++k) jobs.push_back({s, r, k});
    }
  res.multi.resize(jobs.size());
  detail::parallel_for(jobs.size(), spec.parallel, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::vector<Checkpoint> finals;
    for (const auto& run : res.runs) {
      if (run.split != job.split || run.recipe != job.recipe || !run.ok) continue;
      if (job.seed && run.seed_index != *job.seed) continue;
      finals.push_back(run.record.best);
    }
    MultiRun& out = res.multi[j];
    out.split = job.split;
    out.test_env = spec.splits[job.split].test_env;
    out.recipe = job.recipe;
    out.seed_index = job.seed;
    out.members = finals.size();
    if (finals.empty()) return;
    const ResidualModel wa = weight_average(finals);
    std::vector<ResidualModel> members;
    for (const auto& c : finals) members.push_back(c.model());
    out.wa = {evaluate(wa, data[job.split].val), evaluate(wa, data[job.split].test)};
    out.ensemble = {evaluate_ensemble(members, data[job.split].val), evaluate_ensemble(members, data[job.split].test)};
  });

  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < R; ++r) {
      const bool any = std::any_of(res.runs.begin(), res.runs.end(),
                                   [&](const SweepRun& run) { return run.split == s && run.recipe == r && run.ok; });
      if (!any) res.failed_cells.push_back(detail::concat("split ", s, " recipe ", spec.recipes[r].name));
    }
  return res;
}

// Individual run failures are recorded in the result; the sweep fails only
// when some (split, recipe) has no successful run.
inline SweepResult run_sweep(const Checkpoint& start, const EnvDataset& ds, const SweepSpec& spec) {
  SweepResult res = run_sweep_collect(start, ds, spec);
  if (!res.complete()) throw RunError("sweep: every run failed for " + res.failed_cells.front());
  return res;
}

// ---------------------------------------------------------------------------
// Serialization (schema vldrop.sweep/1). Wall-clock time is omitted so that
// repeated sweeps produce identical bytes.

inline constexpr const char* kSweepSchema = "vldrop.sweep/1";

inline nlohmann::json accuracies_json(const Accuracies& a) { return {{"iid", a.iid}, {"ood", a.ood}}; }

inline nlohmann::json sweep_header_json(const SweepResult& r) {
  nlohmann::json recipes = nlohmann::json::array();
  for (const auto& x : r.spec.recipes)
    recipes.push_back({{"name", x.name}, {"dropout_rate", x.dropout_rate}, {"head_lr_multiplier", x.head_lr_multiplier}});
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : r.spec.grid) grid.push_back({{"learning_rate", g.learning_rate}, {"weight_decay", g.weight_decay}});
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : r.spec.splits) splits.push_back({{"finetune_envs", s.finetune_envs}, {"test_env", s.test_env}, {"holdout_fraction", s.holdout_fraction}});
  nlohmann::json base = r.spec.base.to_json();
  for (const char* k : {"dropout_rate", "learning_rate", "weight_decay", "head_lr_multiplier", "seed"}) base.erase(k);
  return {{"schema", kSweepSchema}, {"kind", "sweep"},   {"provenance", r.provenance}, {"recipes", recipes},
          {"grid", grid},           {"splits", splits},  {"seeds", r.spec.seeds},      {"base_config", base},
          {"pool_seeds_in_multi_run", r.spec.pool_seeds_in_multi_run}};
}

// Trailer line: overall status and the cells that produced no result.
inline nlohmann::json sweep_status_json(const SweepResult& r) {
  return {{"schema", kSweepSchema}, {"kind", "status"}, {"complete", r.complete()}, {"failed_cells", r.failed_cells}};
}

inline nlohmann::json sweep_run_json(const SweepResult& r, const SweepRun& run) {
  nlohmann::json j = {{"schema", kSweepSchema},
                      {"kind", "run"},
                      {"run_id", sweep_run_id(r.spec, run.split, run.recipe, run.grid_index, run.seed_index)},
                      {"split", run.split},
                      {"test_env", run.test_env},
                      {"recipe", r.spec.recipes[run.recipe].name},
                      {"grid_index", run.grid_index},
                      {"learning_rate", r.spec.grid[run.grid_index].learning_rate},
                      {"weight_decay", r.spec.grid[run.grid_index].weight_decay},
                      {"seed_index", run.seed_index},
                      {"run_seed", run.run_seed},
                      {"status", run.ok ? "ok" : "failed"}};
  if (!run.ok) {
    j["error"] = run.error;
    return j;
  }
  const RunRecord& rec = run.record;
  j["config"] = rec.config.to_json();
  j["trail"] = nlohmann::json::array();
  for (std::size_t i = 0; i < rec.trail_iid.size(); ++i)
    j["trail"].push_back({{"iteration", rec.trail_iterations[i]}, {"iid", rec.trail_iid[i]}});
  j["best_iteration"] = rec.trail_iterations[rec.best_index];
  j["selected"] = accuracies_json(rec.selected);
  if (rec.wa_single) j["wa_single"] = accuracies_json(*rec.wa_single);
  if (rec.ensemble_single) j["ensemble_single"] = accuracies_json(*rec.ensemble_single);
  return j;
}

inline nlohmann::json sweep_multi_json(const SweepResult& r, const MultiRun& m) {
  nlohmann::json j = {{"schema", kSweepSchema},  {"kind", "multi"},
                      {"split", m.split},        {"test_env", m.test_env},
                      {"recipe", r.spec.recipes[m.recipe].name},
                      {"members", m.members}};
  j["seed_index"] = m.seed_index ? nlohmann::json(*m.seed_index) : nlohmann::json(nullptr);
  if (m.members > 0) {
    j["wa_multi"] = accuracies_json(m.wa);
    j["ensemble_multi"] = accuracies_json(m.ensemble);
  }
  return j;
}

// Header line, one line per run, one line per multi-run arm, status line.
inline std::string sweep_jsonl(const SweepResult& r) {
  std::string out = sweep_header_json(r).dump() + "\n";
  for (const auto& run : r.runs) out += sweep_run_json(r, run).dump() + "\n";
  for (const auto& m : r.multi) out += sweep_multi_json(r, m).dump() + "\n";
  out += sweep_status_json(r).dump() + "\n";
  return out;
}

}  // namespace vldrop
