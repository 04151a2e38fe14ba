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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vldrop/vldrop.hpp"

namespace fs = std::filesystem;
using namespace vldrop;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

ResidualModel random_model(const ArchSpec& arch, std::uint64_t seed) {
  ResidualModel m = new_residual_model(arch, seed);
  Rng rng(derive_seed(seed, "perturb"));
  for (Tensor& t : m.params())
    for (double& v : t.values()) v += rng.uniform(-0.5, 0.5);
  return m;
}

double norm_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

// --- 1 ------------------------------------------------------------------------

Verdict gradient_oracle() {
  Rng rng(101);
  const int models = 24;
  double worst = 0.0;
  for (int k = 0; k < models; ++k) {
    const ArchSpec arch{1 + rng.index(6), 1 + rng.index(16), 1 + rng.index(8), rng.index(4), 2 + rng.index(3)};
    ResidualModel m = random_model(arch, static_cast<std::uint64_t>(k));
    const Tensor x = random_tensor({1 + rng.index(6), arch.input_dim}, rng, -2, 2);
    std::vector<int> y(x.dim(0));
    for (int& v : y) v = static_cast<int>(rng.index(arch.num_classes));
    // Odd models train through a fixed dropout mask.
    const double rate = k % 2 ? 0.5 : 0.0;
    auto loss = [&] {
      Graph g;
      DropoutSpec d(rate, DropoutMode::train, 7 + static_cast<std::uint64_t>(k));
      return g.value(g.softmax_cross_entropy(forward(g, m, x, d).logits, y))[0];
    };
    {
      Graph g;
      DropoutSpec d(rate, DropoutMode::train, 7 + static_cast<std::uint64_t>(k));
      g.backward(g.softmax_cross_entropy(forward(g, m, x, d).logits, y));
    }
    std::vector<std::vector<double>> analytic;
    for (Tensor& t : m.params()) {
      analytic.push_back(*t.grad());
      t.zero_grad();
    }
    const auto fd = finite_diff_grad(loss, m.params(), 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, norm_relative_error(analytic[i], fd[i]));
  }
  return {worst < 1e-4, fmt("%.0f models, worst relative error %.2e (< 1e-4)", models, worst)};
}

// --- 2 ------------------------------------------------------------------------

Verdict telescoping() {
  Rng rng(202);
  int exact = 0;
  const int pairs = 1000;
  for (int k = 0; k < pairs; ++k) {
    const ArchSpec arch{1 + rng.index(8), 1 + rng.index(16), 1 + rng.index(8), rng.index(5), 2};
    const ResidualModel m = random_model(arch, 1000 + static_cast<std::uint64_t>(k));
    const Tensor x = random_tensor({1 + rng.index(4), arch.input_dim}, rng, -3, 3);
    exact += sum_contributions(block_contributions(m, x)).storage() == penultimate(m, x).storage();
  }
  return {exact == pairs, fmt("%.0f / %.0f pairs exactly equal", exact, pairs)};
}

// --- 3 ------------------------------------------------------------------------

Verdict dropout_properties() {
  Rng rng(303);
  const Tensor phi = random_tensor({64, 16}, rng, -5, 5);
  bool identity = true;
  {
    DropoutSpec zero(0.0, DropoutMode::train, 1);
    identity = apply_inverted_dropout(phi, zero).storage() == phi.storage();
  }
  bool eval = true;
  for (double rate : {0.5, 0.9, 0.95}) {
    DropoutSpec spec(rate, DropoutMode::eval, 2);
    eval = eval && apply_inverted_dropout(phi, spec).storage() == phi.storage();
  }
  bool zero_rate = true;
  for (double rate : {0.5, 0.9, 0.95}) {
    const auto [lo, hi] = stats::binomial_central_interval(100000, rate, 0.9999);
    Rng r(derive_seed(304, static_cast<std::uint64_t>(rate * 100)));
    std::size_t zeros = 0;
    for (double v : dropout_mask(100000, rate, r)) zeros += v == 0.0;
    zero_rate = zero_rate && zeros >= lo && zeros <= hi;
  }
  bool unbiased = true;
  double worst_z = 0.0;
  constexpr std::size_t kSamples = 20000, kDim = 8;
  for (double rate : {0.5, 0.9, 0.95}) {
    DropoutSpec spec(rate, DropoutMode::train, 305);
    const Tensor ones({kSamples, kDim}, 1.0);
    const Tensor out = apply_inverted_dropout(ones, spec);
    const double se = std::sqrt(rate / (1.0 - rate) / static_cast<double>(kSamples));
    for (std::size_t j = 0; j < kDim; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < kSamples; ++i) s += out.at(i, j);
      const double z = std::abs(s / kSamples - 1.0) / se;
      worst_z = std::max(worst_z, z);
      unbiased = unbiased && z < 3.0;
    }
  }
  std::ostringstream d;
  d << "rate-0 identity " << (identity ? "exact" : "BROKEN") << ", eval identity " << (eval ? "exact" : "BROKEN")
    << ", zero counts " << (zero_rate ? "inside" : "OUTSIDE") << " 99.99% binomial interval, worst mean z "
    << fmt("%.2f", worst_z) << " (< 3)";
  return {identity && eval && zero_rate && unbiased, d.str()};
}

// --- 4 ------------------------------------------------------------------------

// Independent route: plain loop over masks in long double.
long double brute_force_squared(const std::vector<double>& w, const std::vector<double>& x, double y, double rate) {
  long double total = 0.0L;
  for (unsigned long mask = 0; mask < (1UL << w.size()); ++mask) {
    long double p = 1.0L, score = 0.0L;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const bool kept = (mask >> i) & 1UL;
      p *= kept ? 1.0L - rate : static_cast<long double>(rate);
      if (kept) score += static_cast<long double>(w[i]) * x[i] / (1.0L - rate);
    }
    total += p * (y - score) * (y - score);
  }
  return total;
}

Verdict linear_equivalence() {
  Rng rng(404);
  double worst = 0.0, worst_oracle = 0.0;
  const int instances = 200;
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> w(n), x(n);
    for (double& v : w) v = rng.uniform(-2, 2);
    for (double& v : x) v = rng.uniform(-2, 2);
    const double y = rng.uniform(-3, 3);
    for (double rate : {0.1, 0.5, 0.9}) {
      const double enumerated = expected_dropout_loss_enumerated(w, x, y, rate);
      const double closed = expected_dropout_loss_closed_form(w, x, y, rate);
      const auto oracle = static_cast<double>(brute_force_squared(w, x, y, rate));
      worst = std::max(worst, std::abs(enumerated - closed) / std::abs(closed));
      worst_oracle = std::max(worst_oracle, std::abs(enumerated - oracle) / std::abs(oracle));
    }
  }
  return {worst < 1e-10 && worst_oracle < 1e-10,
          fmt("%.0f instances x 3 rates, worst relative error %.1e vs closed form, %.1e vs brute force (< 1e-10)",
              instances, worst, worst_oracle)};
}

// --- 5 ------------------------------------------------------------------------

Verdict second_order() {
  const EnvDataset ds = gen_multienv_task(8, 3, 1, 1.0, 200, 5);
  const SplitData data = materialize(ds, {{0, 1, 2}, 3, 0.2, 0});
  FineTuneConfig c;
  c.dropout_rate = 0.9;
  c.learning_rate = 0.05;
  c.iterations = 200;
  c.seed = 5;
  c.keep_trail = false;
  const ResidualModel m =
      finetune(Checkpoint::capture(new_residual_model({ds.num_features, 16, 8, 2, 2}, 5), 0, "start"), data, c).best.model();
  const Tensor& x = data.test.x;
  const auto theta = m.flat_params();
  auto discrepancy = [&](const std::vector<double>& dir, double eps) {
    ResidualModel plus = m, minus = m;
    std::vector<double> p(theta), q(theta);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] += eps * dir[i];
      q[i] -= eps * dir[i];
    }
    plus.set_flat_params(p);
    minus.set_flat_params(q);
    const Tensor e = ensemble_predict(std::vector<ResidualModel>{plus, minus}, x);
    const Tensor w = kernels::softmax_rows(forward(weight_average(std::vector<ResidualModel>{plus, minus}), x).logits);
    double d = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) d += std::abs(e[i] - w[i]);
    return d;
  };
  const double noise = static_cast<double>(x.dim(0) * 2) * std::numeric_limits<double>::epsilon();
  Rng rng(505);
  const int directions = 12;
  double lo = 1e300, hi = 0.0, weakest = 1e300;
  for (int k = 0; k < directions; ++k) {
    std::vector<double> dir(theta.size());
    for (double& v : dir) v = rng.normal();
    const double d1 = discrepancy(dir, 1e-4), d2 = discrepancy(dir, 2e-4);
    lo = std::min(lo, d2 / d1);
    hi = std::max(hi, d2 / d1);
    weakest = std::min(weakest, d1 / noise);
  }
  return {lo >= 3.0 && hi <= 5.0 && weakest > 100.0,
          fmt("%.0f directions, eps 1e-4 vs 2e-4, ratio in [%.3f, %.3f], smallest discrepancy %.0fx float noise",
              directions, lo, hi, weakest)};
}

// --- 6 ------------------------------------------------------------------------

struct RedundantRun {
  double final_ood = 0.0;
  double wa_ood = 0.0, ensemble_ood = 0.0;
  double entropy = 0.0;
};

// Linear head on the raw features; scores the last checkpoint, where the
// training margin has saturated.
RedundantRun redundant_run(std::uint64_t seed, double rate) {
  const EnvDataset ds = gen_redundant_task(8, 1000, 0.0, seed, {0, 1, 2}, {0.5, 0.5, 0.7});
  const SplitData data = materialize(ds, {{0}, 1, 0.2, seed});
  FineTuneConfig c;
  c.dropout_rate = rate;
  c.learning_rate = 0.1;
  c.weight_decay = 1e-4;
  c.iterations = 1000;
  c.batch_size = 32;
  c.freeze_trunk = true;
  c.seed = seed;
  const RunRecord rec = finetune(Checkpoint::capture(identity_trunk_model(8, 2, seed), 0, "linear"), data, c, "run", 2, true);
  const ResidualModel last = rec.trail.back().model();
  return {evaluate(last, data.test), rec.wa_single->ood, rec.ensemble_single->ood,
          stats::normalized_entropy(feature_weight_profile(last))};
}

Verdict gradient_starvation() {
  const int seeds = 10;
  std::vector<double> entropy_gap;
  double erm = 0.0, wa = 0.0, ens = 0.0, drop = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const RedundantRun e = redundant_run(static_cast<std::uint64_t>(s), 0.0);
    const RedundantRun d = redundant_run(static_cast<std::uint64_t>(s), 0.9);
    entropy_gap.push_back(d.entropy - e.entropy);
    erm += e.final_ood / seeds;
    wa += e.wa_ood / seeds;
    ens += e.ensemble_ood / seeds;
    drop += d.final_ood / seeds;
  }
  const stats::SignTest st = stats::sign_test(entropy_gap);
  const double best_other = std::max({erm, wa, ens});
  const bool a = st.positive > st.negative && st.p_value < 0.05;
  const bool b = drop > best_other && drop - erm > 0.02;
  std::ostringstream d;
  d << "(a) entropy higher with dropout in " << st.positive << "/" << seeds << " seeds, p " << fmt("%.4f", st.p_value)
    << "; (b) OOD dropout90 " << fmt("%.3f vs erm %.3f, wa-single %.3f, ensemble-single", drop, erm, wa)
    << fmt(" %.3f", ens);
  return {a && b, d.str()};
}

// --- 7, 9, 10 -------------------------------------------------------------------

// Below the generator defaults, to fit the runtime budget on one core.
constexpr std::size_t kPretrainSize = 20000;
constexpr std::size_t kPerEnv = 1500;

MultiEnvOptions multienv_options() {
  MultiEnvOptions o;
  o.n_per_env = kPerEnv;
  return o;
}

Checkpoint pretrained_trunk(bool rich, std::uint64_t seed) {
  PretrainConfig pc;
  pc.iterations = 300;
  pc.learning_rate = 0.05;
  pc.batch_size = 64;
  return pretrain({0, 64, 32, 2, 0}, gen_pretrain_corpus(rich, kPretrainSize, derive_seed(seed, "corpus")), pc, seed)
      .checkpoint;
}

SweepSpec multienv_spec(const EnvDataset& ds, const std::vector<std::string>& recipes, std::uint64_t seed) {
  SweepSpec spec;
  spec.splits = leave_one_out_splits(ds);
  spec.grid = {{0.05, 1e-4}, {0.01, 1e-4}};
  for (const auto& r : recipes) spec.recipes.push_back(parse_recipe(r));
  spec.seeds = {seed};
  spec.base.iterations = 2000;
  spec.base.batch_size = 32;
  spec.base.keep_trail = false;
  return spec;
}

// Mean OOD accuracy per recipe over splits, after IID selection over the
// grid. Diverged grid points drop out the way they do in a report.
std::vector<double> mean_ood_by_recipe(const SweepResult& r) {
  const SweepSummary sum = summarize_sweep_text(sweep_jsonl(r), "acceptance");
  std::vector<double> out;
  for (const auto& recipe : r.spec.recipes) {
    const auto it = sum.average.find(recipe.name);
    if (it == sum.average.end()) throw RunError("recipe " + recipe.name + " failed on every grid point of a split");
    out.push_back(it->second.ood);
  }
  return out;
}

struct RateCurve {
  std::vector<double> rates{0.0, 0.5, 0.9, 0.95};
  std::vector<std::vector<double>> per_seed;  // [seed][recipe], recipes = rates then dropout90-head10
};

RateCurve rate_curve() {
  RateCurve c;
  const EnvDataset ds = gen_multienv_task(multienv_options(), 7);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SweepSpec spec = multienv_spec(ds, {"erm", "dropout50", "dropout90", "dropout95", "dropout90-head10"}, seed);
    c.per_seed.push_back(mean_ood_by_recipe(run_sweep_collect(pretrained_trunk(true, seed), ds, spec)));
  }
  return c;
}

const RateCurve& shared_curve() {
  static const RateCurve c = rate_curve();
  return c;
}

std::pair<double, double> mean_and_se(const std::vector<std::vector<double>>& rows, std::size_t col) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r[col]);
  const double m = stats::mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

Verdict rate_sweep() {
  const RateCurve& c = shared_curve();
  std::vector<double> mean, se;
  for (std::size_t i = 0; i < c.rates.size(); ++i) {
    const auto [m, s] = mean_and_se(c.per_seed, i);
    mean.push_back(m);
    se.push_back(s);
  }
  std::size_t peak = 0;
  for (std::size_t i = 1; i < mean.size(); ++i)
    if (mean[i] > mean[peak]) peak = i;
  // Unimodal within noise: no rise after the peak and no fall before it
  // larger than two standard errors of the difference.
  bool unimodal = true;
  for (std::size_t i = 0; i + 1 < mean.size(); ++i) {
    const double band = 2.0 * std::sqrt(se[i] * se[i] + se[i + 1] * se[i + 1]);
    const double step = mean[i + 1] - mean[i];
    if (i < peak && step < -band) unimodal = false;
    if (i >= peak && step > band) unimodal = false;
  }
  const bool at_top = c.rates[peak] == 0.9 || c.rates[peak] == 0.95;
  std::ostringstream d;
  d << "mean OOD";
  for (std::size_t i = 0; i < mean.size(); ++i) d << fmt(" %.2f:", c.rates[i]) << fmt("%.4f", mean[i]) << fmt("+-%.4f", se[i]);
  d << ", peak at " << c.rates[peak] << (unimodal ? ", unimodal" : ", NOT unimodal");
  return {at_top && unimodal, d.str()};
}

Verdict head_lr() {
  const RateCurve& c = shared_curve();
  const double erm = mean_and_se(c.per_seed, 0).first, drop = mean_and_se(c.per_seed, 2).first,
               head = mean_and_se(c.per_seed, 4).first;
  return {std::abs(head - drop) < drop - erm,
          fmt("|head10 change| %.4f vs dropout-erm gap %.4f (erm %.4f, dropout90 %.4f)", std::abs(head - drop), drop - erm,
              erm, drop)};
}

// --- 8 ------------------------------------------------------------------------

Verdict scratch() {
  MultiEnvOptions o = multienv_options();
  o.core_mode = "magnitude";
  o.spurious_amplitude = 0.0;
  const EnvDataset ds = gen_multienv_task(o, 8);
  double iid_gap = 0.0, ood_gap = 0.0, erm_iid = 0.0, erm_ood = 0.0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    SweepSpec spec = multienv_spec(ds, {"erm", "dropout90"}, static_cast<std::uint64_t>(seed));
    spec.grid = {{0.01, 1e-4}};
    const Checkpoint fresh =
        Checkpoint::capture(new_residual_model({ds.num_features, 32, 16, 2, 2}, 100 + static_cast<std::uint64_t>(seed)), 0,
                            "scratch");
    const SweepResult r = run_sweep_collect(fresh, ds, spec);
    for (const auto& run : r.runs) {
      if (!run.ok) throw RunError("run " + run.record.run_id + " failed: " + run.error);
      const double sign = run.recipe == 0 ? 1.0 : -1.0;
      const double w = 1.0 / static_cast<double>(seeds * spec.splits.size());
      iid_gap += sign * run.record.selected.iid * w;
      ood_gap += sign * run.record.selected.ood * w;
      if (run.recipe == 0) {
        erm_iid += run.record.selected.iid * w;
        erm_ood += run.record.selected.ood * w;
      }
    }
  }
  return {iid_gap > 0.02 && ood_gap > 0.02,
          fmt("erm minus dropout90: IID %.4f (erm %.4f), OOD %.4f (erm %.4f), both must exceed 0.02", iid_gap, erm_iid,
              ood_gap, erm_ood)};
}

Verdict richness() {
  const EnvDataset ds = gen_multienv_task(multienv_options(), 7);
  const int seeds = 10;
  std::vector<double> diff;
  double rich_gain = 0.0, plain_gain = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(100 + s);
    const SweepSpec spec = multienv_spec(ds, {"erm", "dropout90"}, seed);
    const auto rich = mean_ood_by_recipe(run_sweep_collect(pretrained_trunk(true, seed), ds, spec));
    const auto plain = mean_ood_by_recipe(run_sweep_collect(pretrained_trunk(false, seed), ds, spec));
    diff.push_back((rich[1] - rich[0]) - (plain[1] - plain[0]));
    rich_gain += (rich[1] - rich[0]) / seeds;
    plain_gain += (plain[1] - plain[0]) / seeds;
  }
  const stats::SignTest st = stats::sign_test(diff);
  std::ostringstream d;
  d << fmt("mean gain rich %.4f vs plain %.4f; rich larger in ", rich_gain, plain_gain) << st.positive << "/" << seeds
    << " seeds, sign test p " << fmt("%.4f", st.p_value);
  return {st.positive > st.negative && st.p_value < 0.05, d.str()};
}

// --- 11 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / ("vldrop_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" VLDROP_CLI_PATH "' " + args + " >/dev/null 2>>log.txt";
    return std::system(cmd.c_str()) == 0;
  };
  const std::string sweep = " --iterations 120 --width 8 --hidden 4 --depth 1 --seeds 0,1 --recipes erm,dropout90";
  bool ok = run("gen-data --task multienv --envs 3 --per-env 80 --out data") &&
            run("sweep --data data --out a --parallel 1" + sweep) && run("sweep --data data --out b --parallel 1" + sweep) &&
            run("sweep --data data --out c --parallel 4" + sweep) && run("report --results a") &&
            run("report --results b") && run("report --results c");
  std::size_t compared = 0, differing = 0;
  if (ok) {
    std::vector<fs::path> files{"runs.jsonl", "summary.json"};
    for (const auto& e : fs::directory_iterator(dir / "a" / "report")) files.push_back(fs::path("report") / e.path().filename());
    for (const auto& f : files) {
      const std::string ref = slurp(dir / "a" / f);
      for (const char* other : {"b", "c"}) {
        ++compared;
        if (ref.empty() || slurp(dir / other / f) != ref) ++differing;
      }
    }
  }
  fs::remove_all(dir);
  if (!ok) return {false, "a CLI step failed"};
  return {differing == 0 && compared >= 8,
          fmt("%.0f file comparisons (two runs at --parallel 1, one at --parallel 4), %.0f differing",
              static_cast<double>(compared), static_cast<double>(differing))};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient oracle", 60, gradient_oracle},
      {2, "telescoping", 10, telescoping},
      {3, "dropout properties", 30, dropout_properties},
      {4, "linear equivalence", 60, linear_equivalence},
      {5, "weight average vs ensemble", 60, second_order},
      {6, "gradient starvation", 600, gradient_starvation},
      {7, "dropout-rate curve", 1800, rate_sweep},
      {8, "scratch training", 600, scratch},
      {9, "head learning rate", 1800, head_lr},  // shares criterion 7's runs
      {10, "representation richness", 1200, richness},
      {11, "sweep determinism", 1e9, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    if (!in_time) std::printf("       over the %.0f s limit\n", c.limit_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
