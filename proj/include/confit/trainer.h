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

// Fine-tuning loop over the combined objective, optimizers, configuration
// files, finite-difference gradient checks.

#ifndef CONFIT_TRAINER_H_
#define CONFIT_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confit/corpus.h"
#include "confit/negsample.h"
#include "confit/objective.h"
#include "confit/seq2seq.h"

namespace confit {

enum class OptimizerKind { kSgd, kAdam };
// kCrossEntropy trains on the likelihood term alone and never builds
// contrastive samples.
enum class TrainMode { kConfit, kCrossEntropy };

struct TrainConfig {
  // Training stops at whichever limit is reached first; 0 disables a limit.
  size_t epochs = 3;
  size_t max_steps = 0;
  double learning_rate = 1e-5;
  size_t batch_size = 8;
  LossWeights weights;
  size_t k = 8;
  double delete_ratio = 0.3;
  size_t n_positives = 1;
  uint64_t seed = 0;
  // Empty disables checkpointing.
  std::filesystem::path checkpoint_dir;
  size_t regenerate_negatives_every = 1;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  TrainMode mode = TrainMode::kConfit;
  std::set<StrategyTag> strategies = {kAllStrategies.begin(), kAllStrategies.end()};
  size_t log_every = 1;
  // Used when the trainer or CLI has to create a model.
  ModelConfig model;

  void Validate() const;
};

// "toy", "bart_samsum", "pegasus_samsum", "t5_samsum", "bart_ami",
// "pegasus_ami", "t5_ami". Throws ValidationError for other names.
TrainConfig Preset(std::string_view name);
std::vector<std::string> PresetNames();

// Sets one field from its textual form. Keys are the TrainConfig field names,
// with weights and model dimensions flattened (alpha, beta, tau, d_model,
// heads, ...) and strategies as a comma list. "preset" replaces the whole
// config with a preset. Throws ValidationError for unknown keys or values.
void SetConfigValue(TrainConfig& config, std::string_view key, std::string_view value);
// Every settable key with its current value, in a stable order.
std::vector<std::pair<std::string, std::string>> ConfigEntries(const TrainConfig& config);
// "key = value" lines; '#' starts a comment. Later lines override earlier.
TrainConfig ParseConfig(std::istream& in, TrainConfig base = {});
TrainConfig LoadConfig(const std::filesystem::path& path, TrainConfig base = {});

struct TrainComponents {
  // When null, model-backed strategies use the model under training if
  // summarize_with_model is set, and are skipped otherwise.
  const Summarizer* summarizer = nullptr;
  bool summarize_with_model = false;
  const Paraphraser* paraphraser = nullptr;
  const Infiller* infiller = nullptr;
};

struct StepRecord {
  size_t step = 0;
  size_t epoch = 0;
  // Batch means. Terms absent from every example in the batch are empty.
  double nll = 0.0;
  std::optional<double> contrastive;
  std::optional<double> self_supervised;
  double objective = 0.0;
  double grad_norm = 0.0;
  double elapsed_seconds = 0.0;

  // Exact comparison of the loss values, for trajectory checks.
  bool SameLosses(const StepRecord& other) const;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  double wall_seconds = 0.0;
  std::filesystem::path final_checkpoint;
  size_t samples_built = 0;
  size_t samples_unbuildable = 0;
};

void WriteReportJsonl(const TrainReport& report, std::ostream& out);
void WriteReportJsonl(const TrainReport& report, const std::filesystem::path& path);

// Updates `model` in place. Throws ValidationError for an empty corpus or a
// pair from the test split, NonFiniteLoss when a term diverges.
TrainReport Train(const std::vector<CorpusPair>& pairs, ModelState& model,
                  const TrainConfig& config, const TrainComponents& components = {},
                  std::ostream* log = nullptr);

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const std::vector<ag::Parameter>& params);
  // Clips the accumulated gradients, applies one update and returns the
  // pre-clip global gradient norm.
  double Step(std::vector<ag::Parameter>& params);

 private:
  OptimizerKind kind_;
  double lr_;
  double clip_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  size_t checked = 0;
  // Worst entry: parameter index, name and flat (column-major) offset.
  size_t worst_param = 0;
  std::string worst_name;
  Eigen::Index worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences with step eps on n_params entries drawn uniformly from
// the parameters the loss depends on. Relative error is
// |a - n| / max(|a|, |n|, floor).
GradientCheckResult GradientCheck(std::vector<ag::Parameter>& params,
                                  const std::function<ag::Var(ag::Graph&)>& loss,
                                  double eps = 1e-4, size_t n_params = 100,
                                  uint64_t seed = 0, double floor = 1e-6);

}  // namespace confit

#endif  // CONFIT_TRAINER_H_
