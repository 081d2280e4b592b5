//
// Copyright 2026 The ConFiT Toolkit Authors
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
//

#include "confit/trainer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "confit/error.h"
#include "json.hpp"
#include "synthetic.h"

namespace confit {
namespace {

TrainConfig SmallRun(size_t steps) {
  TrainConfig c = Preset("toy");
  c.max_steps = steps;
  c.batch_size = 4;
  c.model.d_model = 16;
  c.model.heads = 2;
  c.k = 4;
  return c;
}

ModelState ModelFor(const std::vector<CorpusPair>& pairs, const TrainConfig& c,
                    uint64_t seed = 3) {
  return ModelState::Initialize(c.model, Vocab::FromCorpus(pairs), seed);
}

TEST(Preset, PublishedSettings) {
  struct Row {
    const char* name;
    size_t epochs;
    size_t steps;
    double lr;
  };
  for (const Row& r : {Row{"bart_samsum", 3, 0, 1e-5}, Row{"pegasus_samsum", 20, 0, 1e-4},
                       Row{"t5_samsum", 20, 0, 1e-5}, Row{"bart_ami", 0, 6000, 1e-5},
                       Row{"pegasus_ami", 0, 24000, 1e-5}, Row{"t5_ami", 0, 20000, 1e-5}}) {
    const TrainConfig c = Preset(r.name);
    EXPECT_EQ(c.epochs, r.epochs) << r.name;
    EXPECT_EQ(c.max_steps, r.steps) << r.name;
    EXPECT_EQ(c.learning_rate, r.lr) << r.name;
    EXPECT_NO_THROW(c.Validate());
  }
}

TEST(Preset, ToyProfile) {
  const TrainConfig c = Preset("toy");
  EXPECT_EQ(c.max_steps, 500u);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(PresetNames().size(), 7u);
  EXPECT_THROW(Preset("gpt"), ValidationError);
}

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.k, 8u);
  EXPECT_EQ(c.weights.alpha, 1.0);
  EXPECT_EQ(c.weights.beta, 1.0);
  EXPECT_EQ(c.weights.tau, 1.0);
  EXPECT_EQ(c.delete_ratio, 0.3);
  EXPECT_EQ(c.n_positives, 1u);
  EXPECT_EQ(c.regenerate_negatives_every, 1u);
  EXPECT_EQ(c.optimizer, OptimizerKind::kSgd);
  EXPECT_EQ(c.clip_norm, 1.0);
}

TEST(TrainConfig, Validation) {
  auto invalid = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.Validate(), ValidationError);
  };
  invalid([](TrainConfig& c) { c.learning_rate = 0; });
  invalid([](TrainConfig& c) { c.batch_size = 0; });
  invalid([](TrainConfig& c) { c.delete_ratio = 1.0; });
  invalid([](TrainConfig& c) { c.delete_ratio = 0.0; });
  invalid([](TrainConfig& c) { c.weights.tau = 0; });
  invalid([](TrainConfig& c) { c.epochs = 0; });
}

TEST(ConfigFile, EntriesRoundTrip) {
  TrainConfig c = Preset("toy");
  c.weights.alpha = 0.25;
  c.seed = 42;
  c.checkpoint_dir = "/tmp/ck";
  c.strategies = {StrategyTag::kNounSwap, StrategyTag::kCorefCorrupt};
  c.model.pooling = Pooling::kLastToken;
  c.mode = TrainMode::kCrossEntropy;
  std::ostringstream text;
  for (const auto& [k, v] : ConfigEntries(c)) text << k << " = " << v << "\n";
  std::istringstream in(text.str());
  const TrainConfig r = ParseConfig(in);
  EXPECT_EQ(ConfigEntries(r), ConfigEntries(c));
}

TEST(ConfigFile, CommentsOverridesAndErrors) {
  std::istringstream in(
      "# toy run\npreset = toy\nalpha = 0.5   # halve\n\nlearning_rate=2e-3\nalpha = 0.75\n"
      "strategies = noun_swap, verb_swap\n");
  const TrainConfig c = ParseConfig(in);
  EXPECT_EQ(c.max_steps, 500u);
  EXPECT_EQ(c.weights.alpha, 0.75);
  EXPECT_EQ(c.learning_rate, 2e-3);
  EXPECT_EQ(c.strategies, (std::set<StrategyTag>{StrategyTag::kNounSwap, StrategyTag::kVerbSwap}));

  TrainConfig d;
  EXPECT_THROW(SetConfigValue(d, "alhpa", "1"), ValidationError);
  EXPECT_THROW(SetConfigValue(d, "alpha", "one"), ValidationError);
  EXPECT_THROW(SetConfigValue(d, "batch_size", "-3"), ValidationError);
  EXPECT_THROW(SetConfigValue(d, "optimizer", "rmsprop"), ValidationError);
  std::istringstream bad("alpha 1\n");
  EXPECT_THROW(ParseConfig(bad), ValidationError);
  SetConfigValue(d, "strategies", "none");
  EXPECT_TRUE(d.strategies.empty());
  SetConfigValue(d, "strategies", "all");
  EXPECT_EQ(d.strategies.size(), 5u);
}

TEST(Optimizer, SgdStepAndClipping) {
  TrainConfig c;
  c.learning_rate = 0.1;
  c.clip_norm = 1.0;
  std::vector<ag::Parameter> params = {{"w", ag::Matrix{{1.0, 2.0}}, ag::Matrix{{3.0, 4.0}}}};
  Optimizer opt(c, params);
  EXPECT_DOUBLE_EQ(opt.Step(params), 5.0);
  EXPECT_NEAR(params[0].value(0, 0), 1.0 - 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(params[0].value(0, 1), 2.0 - 0.1 * 0.8, 1e-15);
  params[0].grad = ag::Matrix{{0.3, 0.4}};
  const ag::Matrix before = params[0].value;
  opt.Step(params);
  EXPECT_NEAR(params[0].value(0, 0), before(0, 0) - 0.03, 1e-15);
}

TEST(Optimizer, AdamFirstStepIsLearningRate) {
  TrainConfig c;
  c.optimizer = OptimizerKind::kAdam;
  c.learning_rate = 0.01;
  c.clip_norm = 0;
  std::vector<ag::Parameter> params = {{"w", ag::Matrix{{1.0, -1.0}}, ag::Matrix{{5.0, -0.5}}}};
  Optimizer opt(c, params);
  opt.Step(params);
  EXPECT_NEAR(params[0].value(0, 0), 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(params[0].value(0, 1), -1.0 + 0.01, 1e-9);
}

TEST(Train, ReductionToCrossEntropy) {
  const auto pairs = testing::ChatCorpus(12, 1);
  TrainConfig zero = SmallRun(12);
  zero.weights.alpha = 0;
  zero.weights.beta = 0;
  TrainConfig ce = SmallRun(12);
  ce.mode = TrainMode::kCrossEntropy;
  ModelState a = ModelFor(pairs, zero);
  ModelState b = ModelFor(pairs, ce);
  const TrainReport ra = Train(pairs, a, zero);
  const TrainReport rb = Train(pairs, b, ce);
  ASSERT_EQ(ra.steps.size(), rb.steps.size());
  for (size_t i = 0; i < ra.steps.size(); ++i) {
    EXPECT_EQ(ra.steps[i].nll, rb.steps[i].nll) << i;
    EXPECT_EQ(ra.steps[i].objective, rb.steps[i].objective) << i;
    EXPECT_EQ(ra.steps[i].grad_norm, rb.steps[i].grad_norm) << i;
  }
  EXPECT_GT(ra.samples_built, 0u);
  EXPECT_EQ(rb.samples_built, 0u);
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.param(i).value, b.param(i).value) << a.param(i).name;
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const auto pairs = testing::ChatCorpus(10, 2);
  const TrainConfig c = SmallRun(8);
  ModelState a = ModelFor(pairs, c);
  ModelState b = ModelFor(pairs, c);
  const TrainReport ra = Train(pairs, a, c);
  const TrainReport rb = Train(pairs, b, c);
  ASSERT_EQ(ra.steps.size(), 8u);
  for (size_t i = 0; i < ra.steps.size(); ++i) {
    EXPECT_TRUE(ra.steps[i].SameLosses(rb.steps[i])) << i;
    EXPECT_TRUE(ra.steps[i].contrastive.has_value());
    EXPECT_TRUE(ra.steps[i].self_supervised.has_value());
    EXPECT_NEAR(ra.steps[i].objective,
                ra.steps[i].nll + *ra.steps[i].contrastive + *ra.steps[i].self_supervised,
                1e-9);
  }
  TrainConfig other = c;
  other.seed = 9;
  ModelState d = ModelFor(pairs, c);
  const TrainReport rd = Train(pairs, d, other);
  EXPECT_FALSE(rd.steps[1].SameLosses(ra.steps[1]));
}

TEST(Train, RegeneratesNegativesPerSchedule) {
  const auto pairs = testing::ChatCorpus(8, 3);
  TrainConfig c = SmallRun(0);
  c.max_steps = 0;
  c.epochs = 4;
  ModelState m = ModelFor(pairs, c);
  EXPECT_EQ(Train(pairs, m, c).samples_built, 32u);
  c.regenerate_negatives_every = 2;
  ModelState n = ModelFor(pairs, c);
  const TrainReport r = Train(pairs, n, c);
  EXPECT_EQ(r.samples_built, 16u);
  EXPECT_EQ(r.steps.size(), 8u);
  EXPECT_EQ(r.steps.back().epoch, 3u);
}

TEST(Train, UnbuildablePairsKeepLikelihoodTerm) {
  auto pairs = testing::ChatCorpus(3, 4);
  CorpusPair bare;
  bare.dialogue.id = "bare";
  bare.dialogue.turns = {{"Tom", "ok"}};
  bare.reference = {"bare", "fine.", Provenance::Reference()};
  pairs.push_back(bare);
  TrainConfig c = SmallRun(2);
  c.epochs = 1;
  ModelState m = ModelFor(pairs, c);
  const TrainReport r = Train(pairs, m, c);
  EXPECT_EQ(r.samples_unbuildable, 1u);
  EXPECT_EQ(r.samples_built, 3u);
}

TEST(Train, ModelBackedNegativesUseCurrentModel) {
  const auto pairs = testing::ChatCorpus(4, 5);
  TrainConfig c = SmallRun(2);
  c.model.max_target_len = 8;
  ModelState m = ModelFor(pairs, c);
  TrainComponents comp;
  comp.summarize_with_model = true;
  const TrainReport r = Train(pairs, m, c, comp);
  EXPECT_EQ(r.samples_built, 8u);
  EXPECT_EQ(r.steps.size(), 2u);
}

TEST(Train, RejectsTestSplitAndEmptyCorpus) {
  auto pairs = testing::ChatCorpus(3, 4);
  const TrainConfig c = SmallRun(1);
  ModelState m = ModelFor(pairs, c);
  EXPECT_THROW(Train({}, m, c), ValidationError);
  pairs[1].split = Split::kTest;
  EXPECT_THROW(Train(pairs, m, c), ValidationError);
}

TEST(Train, NonFiniteLossNamesStepAndTerm) {
  const auto pairs = testing::ChatCorpus(3, 4);
  const TrainConfig c = SmallRun(3);
  ModelState m = ModelFor(pairs, c);
  m.mutable_param("out.b").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    Train(pairs, m, c);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.term(), "nll");
    EXPECT_EQ(e.step(), 0);
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Train, CheckpointAndReport) {
  testing::TempDir dir;
  const auto pairs = testing::ChatCorpus(5, 6);
  TrainConfig c = SmallRun(3);
  c.checkpoint_dir = dir.path();
  c.log_every = 2;
  ModelState m = ModelFor(pairs, c);
  const TrainReport r = Train(pairs, m, c);
  EXPECT_EQ(r.final_checkpoint, dir / "final.ckpt");
  const ModelState restored = LoadCheckpoint(r.final_checkpoint);
  for (size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(restored.param(i).value, m.param(i).value);
  }
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_EQ(r.steps[1].step, 2u);

  std::ostringstream out;
  WriteReportJsonl(r, out);
  std::istringstream in(out.str());
  std::string line;
  std::vector<nlohmann::json> events;
  while (std::getline(in, line)) events.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(events.size(), 3u);
  for (const char* field : {"L", "L_con", "L_self", "J", "step"}) {
    EXPECT_TRUE(events[0].contains(field)) << field;
  }
  EXPECT_EQ(events[0]["J"].get<double>(), r.steps[0].objective);
  EXPECT_EQ(events[2]["event"], "end");
  EXPECT_EQ(events[2]["final_checkpoint"], (dir / "final.ckpt").string());
  for (const StepRecord& s : r.steps) {
    EXPECT_TRUE(std::isfinite(s.nll) && std::isfinite(s.objective) && std::isfinite(s.grad_norm));
  }
}

// Block means of J over 50-step windows never increase during the first 500
// toy steps.
TEST(Train, SmoothedObjectiveDecreases) {
  const auto pairs = testing::ChatCorpus(40, 7);
  const TrainConfig c = Preset("toy");
  ModelState m = ModelFor(pairs, c, 1);
  const TrainReport r = Train(pairs, m, c);
  ASSERT_EQ(r.steps.size(), 500u);
  double prev = std::numeric_limits<double>::infinity();
  for (size_t w = 0; w < 10; ++w) {
    double sum = 0.0;
    for (size_t i = 50 * w; i < 50 * (w + 1); ++i) sum += r.steps[i].objective;
    EXPECT_LE(sum / 50.0, prev) << "window " << w;
    prev = sum / 50.0;
  }
}

}  // namespace
}  // namespace confit
