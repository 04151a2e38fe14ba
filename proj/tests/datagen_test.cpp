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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace vldrop {
namespace {

namespace fs = std::filesystem;

double single_feature_accuracy(const EnvDataset& ds, std::size_t j) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += (ds.row(i)[j] > 0 ? 1 : 0) == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

double linear_accuracy(const EnvDataset& ds, const std::vector<double>& w, double b) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double s = b;
    for (std::size_t j = 0; j < ds.num_features; ++j) s += w[j] * ds.row(i)[j];
    ok += (s > 0 ? 1 : 0) == ds.labels[i];
  }
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("vldrop_data_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(RedundantFeatures, EverySingleFeatureSeparatesWithoutLabelNoise) {
  const EnvDataset ds = gen_redundant_features(8, 1000, 0.0, 3);
  ds.validate();
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(single_feature_accuracy(ds, j), 1.0) << "feature " << j;
}

TEST(RedundantFeatures, ScalesDecayGeometrically) {
  const EnvDataset ds = gen_redundant_features(4, 500, 0.0, 1, {0.5, 0.5, 0.5});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double scale = 1.0;
    for (std::size_t j = 0; j < 4; ++j, scale *= 0.5) {
      EXPECT_GE(std::abs(ds.row(i)[j]), 0.5 * scale);
      EXPECT_LE(std::abs(ds.row(i)[j]), 1.5 * scale);
    }
  }
}

TEST(RedundantFeatures, PerceptronReachesFullTrainAccuracy) {
  const EnvDataset ds = gen_redundant_features(8, 1000, 0.0, 7);
  std::vector<double> w(8, 0.0);
  double b = 0.0;
  bool converged = false;
  for (int epoch = 0; epoch < 1000 && !converged; ++epoch) {
    converged = true;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double t = 2.0 * ds.labels[i] - 1.0;
      double s = b;
      for (std::size_t j = 0; j < 8; ++j) s += w[j] * ds.row(i)[j];
      if (t * s <= 0) {
        for (std::size_t j = 0; j < 8; ++j) w[j] += t * ds.row(i)[j];
        b += t;
        converged = false;
      }
    }
  }
  EXPECT_TRUE(converged);
  EXPECT_EQ(linear_accuracy(ds, w, b), 1.0);
}

TEST(RedundantFeatures, LabelNoiseFlipsTheExpectedFraction) {
  const EnvDataset ds = gen_redundant_features(3, 20000, 0.1, 5);
  EXPECT_NEAR(single_feature_accuracy(ds, 0), 0.9, 0.01);
}

TEST(RedundantFeatures, PositiveRateIsHonoured) {
  const EnvDataset ds = gen_redundant_features(2, 20000, 0.0, 5, {0.5, 0.5, 0.7});
  double pos = 0;
  for (int y : ds.labels) pos += y;
  EXPECT_NEAR(pos / 20000.0, 0.7, 0.01);
}

TEST(RedundantFeatures, InvalidArgumentsAreRejected) {
  EXPECT_THROW(gen_redundant_features(1, 10, 0.0, 0), ValidationError);
  EXPECT_THROW(gen_redundant_features(3, 0, 0.0, 0), ValidationError);
  EXPECT_THROW(gen_redundant_features(3, 10, 0.5, 0), ValidationError);
}

TEST(RedundantFeatures, SeedDeterminesTheData) {
  EXPECT_EQ(gen_redundant_features(8, 100, 0.0, 7).features, gen_redundant_features(8, 100, 0.0, 7).features);
  EXPECT_NE(gen_redundant_features(8, 100, 0.0, 7).features, gen_redundant_features(8, 100, 0.0, 8).features);
}

TEST(MissingFeatureEnv, RequiresAProperNonemptySubset) {
  const EnvDataset ds = gen_redundant_features(3, 10, 0.0, 0);
  EXPECT_THROW(make_missing_feature_env(ds, {}), ValidationError);
  EXPECT_THROW(make_missing_feature_env(ds, {0, 1, 2}), ValidationError);
  EXPECT_THROW(make_missing_feature_env(ds, {5}), ValidationError);
}

TEST(MissingFeatureEnv, ZeroedFeatureLeavesItsClassifierAtTheConstantRate) {
  const EnvDataset ds = gen_redundant_features(4, 2000, 0.0, 2);
  const EnvDataset ood = make_missing_feature_env(ds, {1});
  EXPECT_NE(ood.env_ids[0], ds.env_ids[0]);
  EXPECT_EQ(ood.envs.at(0).params.at("missing"), nlohmann::json::array({1}));
  std::vector<double> w(4, 0.0);
  w[1] = 1.0;
  // Output is the constant 0, predicted as class 0: accuracy is the class-0 rate.
  double neg = 0;
  for (int y : ood.labels) neg += y == 0;
  EXPECT_DOUBLE_EQ(linear_accuracy(ood, w, 0.0), neg / 2000.0);
  EXPECT_NEAR(linear_accuracy(ood, w, 0.0), 0.5, 0.05);
}

TEST(MissingFeatureEnv, UniformClassifierSurvivesAnyProperRemoval) {
  const EnvDataset ds = gen_redundant_features(6, 1000, 0.0, 4);
  const std::vector<double> uniform(6, 1.0);
  for (const std::vector<std::size_t>& missing :
       {std::vector<std::size_t>{0}, {0, 1, 2}, {1, 3, 5}, {0, 1, 2, 3, 4}}) {
    EXPECT_EQ(linear_accuracy(make_missing_feature_env(ds, missing), uniform, 0.0), 1.0);
  }
}

MultiEnvOptions small_task(double flip, const std::string& mode = "linear") {
  MultiEnvOptions o;
  o.spurious_flip = flip;
  o.n_per_env = 3000;
  o.core_mode = mode;
  return o;
}

double spurious_sign_accuracy(const EnvDataset& ds, const MultiEnvOptions& o, int env) {
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.env_ids[i] != env) continue;
    correct += (ds.row(i)[o.n_core] > 0.0 ? 1 : 0) == ds.labels[i];
    ++n;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double binomial_se(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

TEST(MultiEnv, NoFlipMakesEnvironmentsIdenticallyDistributed) {
  const MultiEnvOptions o = small_task(0.0);
  const EnvDataset ds = gen_multienv_task(o, 4);
  ASSERT_EQ(ds.envs.size(), 4u);
  for (const auto& e : ds.envs) EXPECT_EQ(e.params, ds.envs.front().params);
  for (std::size_t j = 0; j < ds.num_features; ++j) {
    std::vector<double> means;
    for (const auto& e : ds.envs) {
      double s = 0.0;
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.env_ids[i] == e.id) s += ds.row(i)[j];
      means.push_back(s / static_cast<double>(o.n_per_env));
    }
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    EXPECT_LT(*hi - *lo, 0.1) << "feature " << j;
  }
  for (int e = 0; e < 4; ++e) EXPECT_EQ(spurious_sign_accuracy(ds, o, e), 1.0);
}

TEST(MultiEnv, FullFlipRemovesTheCueFromTheLastEnvironment) {
  const MultiEnvOptions o = small_task(1.0);
  const EnvDataset ds = gen_multienv_task(o, 4);
  for (int e = 0; e < 3; ++e) EXPECT_EQ(spurious_sign_accuracy(ds, o, e), 1.0);
  EXPECT_NEAR(spurious_sign_accuracy(ds, o, 3), 0.5, 5 * binomial_se(0.5, o.n_per_env));
  EXPECT_EQ(ds.envs[3].params["spurious_amplitude"], 0.0);
  EXPECT_EQ(ds.envs[0].params["spurious_amplitude"], 1.0);
}

TEST(MultiEnv, CoreOnlyAccuracyIsEnvironmentInvariant) {
  for (const std::string mode : {"linear", "magnitude"}) {
    const MultiEnvOptions o = small_task(1.0, mode);
    const EnvDataset ds = gen_multienv_task(o, 8);
    std::vector<double> acc;
    for (int e = 0; e < 4; ++e) acc.push_back(core_only_accuracy(ds, o, e));
    double mean = 0.0;
    for (double a : acc) mean += a / 4.0;
    EXPECT_GT(mean, 0.75) << mode;
    for (double a : acc) EXPECT_NEAR(a, mean, 4 * binomial_se(mean, o.n_per_env)) << mode;
  }
}

TEST(MultiEnv, MagnitudeCoresCarryNoLinearSignal) {
  const MultiEnvOptions o = small_task(1.0, "magnitude");
  const EnvDataset ds = gen_multienv_task(o, 2);
  for (std::size_t k = 0; k < o.n_core; ++k) {
    double s[2] = {0.0, 0.0}, n[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      s[ds.labels[i]] += ds.row(i)[k];
      n[ds.labels[i]] += 1.0;
    }
    EXPECT_LT(std::abs(s[1] / n[1] - s[0] / n[0]), 0.08) << "core " << k;
  }
}

TEST(MultiEnv, PositiveRateIsHonoured) {
  const EnvDataset ds = gen_multienv_task(small_task(1.0), 3);
  double pos = 0.0;
  for (int y : ds.labels) pos += y;
  EXPECT_NEAR(pos / static_cast<double>(ds.size()), 0.7, 5 * binomial_se(0.7, ds.size()));
}

TEST(MultiEnv, InvalidOptionsAreRejected) {
  EXPECT_THROW(gen_multienv_task(1, 8, 1, 0.0, 10, 0), ValidationError);
  EXPECT_THROW(gen_multienv_task(4, 0, 1, 0.0, 10, 0), ValidationError);
  EXPECT_THROW(gen_multienv_task(4, 8, 1, 1.5, 10, 0), ValidationError);
  MultiEnvOptions o;
  o.core_mode = "cubic";
  EXPECT_THROW(gen_multienv_task(o, 0), ValidationError);
  EXPECT_THROW(gen_pretrain_corpus(true, 0, 0), ValidationError);
}

TEST(MultiEnv, OptionsRoundTripThroughJson) {
  MultiEnvOptions o;
  o.core_mode = "magnitude";
  o.core_noise = 0.1 + 0.2;
  o.n_per_env = 17;
  const MultiEnvOptions back = MultiEnvOptions::from_json(o.to_json());
  EXPECT_EQ(back.to_json(), o.to_json());
  EXPECT_THROW(MultiEnvOptions::from_json({{"core_nosie", 0.1}}), ValidationError);
  EXPECT_THROW(MultiEnvOptions::from_json({{"core_mode", 3}}), ValidationError);
  EXPECT_EQ(MultiEnvOptions::from_json({{"n_core", 3}}).n_core, 3u);
}

TEST(MultiEnv, SeedDeterminesTheData) {
  const MultiEnvOptions o = small_task(1.0);
  EXPECT_EQ(gen_multienv_task(o, 5).features, gen_multienv_task(o, 5).features);
  EXPECT_NE(gen_multienv_task(o, 5).features, gen_multienv_task(o, 6).features);
}

TEST_F(TempDir, MultiEnvManifestRoundTripsExactly) {
  const EnvDataset ds = gen_multienv_task(small_task(0.5, "magnitude"), 12);
  save_dataset(ds, dir_);
  const EnvDataset back = load_dataset(dir_);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.generator, ds.generator);
  EXPECT_EQ(dataset_manifest(back), dataset_manifest(ds));
  EXPECT_EQ(MultiEnvOptions::from_json(back.generator).to_json(), ds.generator);
}

TEST(PretrainCorpus, LabelsAreTheFourJointClasses) {
  const EnvDataset ds = gen_pretrain_corpus(true, 4000, 1);
  EXPECT_EQ(ds.num_classes, 4u);
  std::vector<std::size_t> counts(4);
  for (int y : ds.labels) ++counts.at(static_cast<std::size_t>(y));
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c), 1000.0, 5 * std::sqrt(750.0));
  // Spurious sign tracks the first label bit except where erased.
  const MultiEnvOptions o;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) agree += (ds.row(i)[o.n_core] > 0.0 ? 1 : 0) == ds.labels[i] / 2;
  EXPECT_NEAR(static_cast<double>(agree) / 4000.0, 1.0 - 0.5 * o.rich_spurious_erasure, 0.01);
}

TEST(PretrainCorpus, PlainTransformationBelongsToTheRichFamily) {
  const EnvDataset plain = gen_pretrain_corpus(false, 10, 0), rich = gen_pretrain_corpus(true, 10, 0);
  EXPECT_EQ(plain.generator["transformations"]["core_scramble"], 1.0);
  EXPECT_EQ(plain.generator["transformations"]["spurious_erasure"], 0.0);
  EXPECT_GT(rich.generator["transformations"]["core_scramble"].get<double>(), 0.0);
  EXPECT_GT(rich.generator["transformations"]["spurious_erasure"].get<double>(), 0.0);
  EXPECT_FALSE(plain.generator["rich"].get<bool>());
  EXPECT_TRUE(rich.generator["rich"].get<bool>());
}

TEST(PretrainCorpus, PlainCoresAreIndependentOfTheLabel) {
  const MultiEnvOptions o;
  const EnvDataset ds = gen_pretrain_corpus(false, 8000, 3);
  double s[2] = {0.0, 0.0}, n[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < o.n_core; ++k) s[ds.labels[i] / 2] += ds.row(i)[k];
    n[ds.labels[i] / 2] += 1.0;
  }
  EXPECT_NEAR(s[1] / n[1] - s[0] / n[0], 0.0, 0.05);
}

TEST(PretrainCorpus, SeedDeterminesTheData) {
  EXPECT_EQ(gen_pretrain_corpus(true, 300, 7).features, gen_pretrain_corpus(true, 300, 7).features);
  EXPECT_NE(gen_pretrain_corpus(true, 300, 7).features, gen_pretrain_corpus(true, 300, 8).features);
  EXPECT_NE(gen_pretrain_corpus(true, 300, 7).features, gen_pretrain_corpus(false, 300, 7).features);
}

// Short linear probe for Y on the frozen trunk, on held-out data with the
// spurious block erased. The short budget rewards trunks that amplify the
// cores rather than merely preserving them.
double probe_accuracy(bool rich, std::uint64_t seed) {
  const ArchSpec arch{0, 32, 16, 1, 0};
  PretrainConfig pc;
  pc.iterations = 300;
  pc.learning_rate = 0.05;
  const Checkpoint trunk = pretrain(arch, gen_pretrain_corpus(rich, 4000, seed), pc, seed).checkpoint;
  MultiEnvOptions erased;
  erased.rich_scramble = 0.0;
  erased.rich_spurious_erasure = 1.0;
  auto probe_set = [&](const char* tag) {
    LabeledSet s = LabeledSet::from(gen_pretrain_corpus(true, 1500, derive_seed(seed, tag), erased));
    for (int& y : s.y) y /= 2;
    return s;
  };
  const LabeledSet train = probe_set("probe"), test = probe_set("probe-test");
  FineTuneConfig fc;
  fc.dropout_rate = 0.0;
  fc.freeze_trunk = true;
  fc.learning_rate = 0.01;
  fc.iterations = 66;
  fc.seed = seed;
  fc.keep_trail = false;
  return finetune(trunk, {train, train, test}, fc, "probe").selected.ood;
}

TEST(PretrainCorpus, RichTrunkSupportsABetterLinearProbe) {
  double rich = 0.0, plain = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    rich += probe_accuracy(true, seed) / 5.0;
    plain += probe_accuracy(false, seed) / 5.0;
  }
  EXPECT_GT(rich, plain) << "rich " << rich << " plain " << plain;
}

TEST_F(TempDir, SaveLoadRoundTripIsExact) {
  EnvDataset ds = gen_redundant_features(5, 300, 0.05, 9);
  ds.features[3] = 0.1 + 0.2;  // needs all 17 digits
  ds.features[4] = -1e-300;
  save_dataset(ds, dir_);
  const EnvDataset back = load_dataset(dir_);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.env_ids, ds.env_ids);
  EXPECT_EQ(back.generator, ds.generator);
  EXPECT_EQ(back.count_env(0), ds.count_env(0));
  EXPECT_EQ(dataset_manifest(back), dataset_manifest(ds));
}

TEST_F(TempDir, SavingTwiceGivesIdenticalBytes) {
  const EnvDataset ds = gen_redundant_features(4, 50, 0.0, 1);
  save_dataset(ds, dir_ / "a");
  save_dataset(ds, dir_ / "b");
  EXPECT_EQ(read_file(dir_ / "a" / "manifest.json"), read_file(dir_ / "b" / "manifest.json"));
  EXPECT_EQ(read_file(dir_ / "a" / "env_0.csv"), read_file(dir_ / "b" / "env_0.csv"));
  EXPECT_EQ(read_file(dir_ / "a" / "env_0.csv").find('\r'), std::string::npos);
}

TEST_F(TempDir, MissingEnvFileNamesTheFile) {
  save_dataset(gen_redundant_features(3, 10, 0.0, 0), dir_);
  fs::remove(dir_ / "env_0.csv");
  try {
    load_dataset(dir_);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("env_0.csv"), std::string::npos);
  }
}

TEST_F(TempDir, HandWrittenCsvLoads) {
  fs::create_directories(dir_);
  std::ofstream(dir_ / "manifest.json") << R"({"format": "vldrop-dataset", "version": 1, "task": "manual",
    "num_features": 2, "num_classes": 2, "seed": 0, "generator": {},
    "environments": [{"id": 3, "name": "hand", "params": {}, "count": 2, "file": "env_3.csv"}]})";
  std::ofstream(dir_ / "env_3.csv") << "f0,f1,label,env\n1.5,-2,1,3\n0,0.25,0,3\n";
  const EnvDataset ds = load_dataset(dir_);
  EXPECT_EQ(ds.features, (std::vector<double>{1.5, -2, 0, 0.25}));
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(ds.env_ids, (std::vector<int>{3, 3}));
}

TEST_F(TempDir, ManifestCsvDisagreementIsAFormatError) {
  save_dataset(gen_redundant_features(3, 10, 0.0, 0), dir_);
  {
    std::ofstream f(dir_ / "env_0.csv", std::ios::app);
    f << "1,1,1,1,0\n";
  }
  EXPECT_THROW(load_dataset(dir_), FormatError);
  std::ofstream(dir_ / "env_0.csv") << "f0,f1,label,env\n";
  EXPECT_THROW(load_dataset(dir_), FormatError);
}

}  // namespace
}  // namespace vldrop
