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

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/text_util.h"
#include "json.hpp"

namespace confit {
namespace {

using nlohmann::json;

template <typename T>
T ParseNumber(std::string_view key, std::string_view text) {
  const std::string s = Trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("invalid value '" + s + "' for " + std::string(key));
  }
  return value;
}

std::string FormatDouble(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string StrategyList(const std::set<StrategyTag>& tags) {
  std::vector<std::string> names;
  for (StrategyTag t : kAllStrategies) {
    if (tags.contains(t)) names.emplace_back(StrategyName(t));
  }
  return names.empty() ? "none" : Join(names, ",");
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs == 0 && max_steps == 0) throw ValidationError("set epochs or max_steps");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(delete_ratio > 0.0 && delete_ratio < 1.0)) {
    throw ValidationError("delete_ratio must lie in (0, 1)");
  }
  if (regenerate_negatives_every < 1) {
    throw ValidationError("regenerate_negatives_every must be at least 1");
  }
  if (clip_norm < 0.0) throw ValidationError("clip_norm must be non-negative");
  if (log_every < 1) throw ValidationError("log_every must be at least 1");
  weights.Validate();
}

TrainConfig Preset(std::string_view name) {
  TrainConfig c;
  auto epochs = [&](size_t n, double lr) {
    c.epochs = n;
    c.max_steps = 0;
    c.learning_rate = lr;
  };
  auto steps = [&](size_t n, double lr) {
    c.epochs = 0;
    c.max_steps = n;
    c.learning_rate = lr;
  };
  if (name == "toy") {
    steps(500, 1e-3);
    c.optimizer = OptimizerKind::kAdam;
    c.model.d_model = 32;
    c.model.heads = 4;
    c.model.max_source_len = 256;
    c.model.max_target_len = 64;
  } else if (name == "bart_samsum") {
    epochs(3, 1e-5);
  } else if (name == "pegasus_samsum") {
    epochs(20, 1e-4);
  } else if (name == "t5_samsum") {
    epochs(20, 1e-5);
  } else if (name == "bart_ami") {
    steps(6000, 1e-5);
  } else if (name == "pegasus_ami") {
    steps(24000, 1e-5);
  } else if (name == "t5_ami") {
    steps(20000, 1e-5);
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

std::vector<std::string> PresetNames() {
  return {"toy", "bart_samsum", "pegasus_samsum", "t5_samsum",
          "bart_ami", "pegasus_ami", "t5_ami"};
}

void SetConfigValue(TrainConfig& c, std::string_view key, std::string_view raw) {
  const std::string value = Trim(raw);
  auto size = [&] { return ParseNumber<size_t>(key, value); };
  auto real = [&] { return ParseNumber<double>(key, value); };
  auto integer = [&] { return ParseNumber<int>(key, value); };
  if (key == "preset") {
    c = Preset(value);
  } else if (key == "epochs") {
    c.epochs = size();
  } else if (key == "max_steps") {
    c.max_steps = size();
  } else if (key == "learning_rate") {
    c.learning_rate = real();
  } else if (key == "batch_size") {
    c.batch_size = size();
  } else if (key == "alpha") {
    c.weights.alpha = real();
  } else if (key == "beta") {
    c.weights.beta = real();
  } else if (key == "tau") {
    c.weights.tau = real();
  } else if (key == "k") {
    c.k = size();
  } else if (key == "delete_ratio") {
    c.delete_ratio = real();
  } else if (key == "n_positives") {
    c.n_positives = size();
  } else if (key == "seed") {
    c.seed = ParseNumber<uint64_t>(key, value);
  } else if (key == "checkpoint_dir") {
    c.checkpoint_dir = value;
  } else if (key == "regenerate_negatives_every") {
    c.regenerate_negatives_every = size();
  } else if (key == "optimizer") {
    if (value == "sgd") {
      c.optimizer = OptimizerKind::kSgd;
    } else if (value == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else {
      throw ValidationError("optimizer must be sgd or adam");
    }
  } else if (key == "clip_norm") {
    c.clip_norm = real();
  } else if (key == "adam_beta1") {
    c.adam_beta1 = real();
  } else if (key == "adam_beta2") {
    c.adam_beta2 = real();
  } else if (key == "adam_epsilon") {
    c.adam_epsilon = real();
  } else if (key == "mode") {
    if (value == "confit") {
      c.mode = TrainMode::kConfit;
    } else if (value == "cross_entropy") {
      c.mode = TrainMode::kCrossEntropy;
    } else {
      throw ValidationError("mode must be confit or cross_entropy");
    }
  } else if (key == "strategies") {
    c.strategies.clear();
    if (value == "all") {
      c.strategies.insert(kAllStrategies.begin(), kAllStrategies.end());
    } else if (value != "none") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) c.strategies.insert(ParseStrategy(Trim(item)));
    }
  } else if (key == "log_every") {
    c.log_every = size();
  } else if (key == "d_model") {
    c.model.d_model = integer();
  } else if (key == "heads") {
    c.model.heads = integer();
  } else if (key == "encoder_layers") {
    c.model.encoder_layers = integer();
  } else if (key == "decoder_layers") {
    c.model.decoder_layers = integer();
  } else if (key == "ffn_dim") {
    c.model.ffn_dim = integer();
  } else if (key == "classifier_hidden") {
    c.model.classifier_hidden = integer();
  } else if (key == "max_source_len") {
    c.model.max_source_len = integer();
  } else if (key == "max_target_len") {
    c.model.max_target_len = integer();
  } else if (key == "pooling") {
    if (value == "mean") {
      c.model.pooling = Pooling::kMean;
    } else if (value == "last") {
      c.model.pooling = Pooling::kLastToken;
    } else {
      throw ValidationError("pooling must be mean or last");
    }
  } else {
    throw ValidationError("unknown config key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> ConfigEntries(const TrainConfig& c) {
  return {
      {"epochs", std::to_string(c.epochs)},
      {"max_steps", std::to_string(c.max_steps)},
      {"learning_rate", FormatDouble(c.learning_rate)},
      {"batch_size", std::to_string(c.batch_size)},
      {"alpha", FormatDouble(c.weights.alpha)},
      {"beta", FormatDouble(c.weights.beta)},
      {"tau", FormatDouble(c.weights.tau)},
      {"k", std::to_string(c.k)},
      {"delete_ratio", FormatDouble(c.delete_ratio)},
      {"n_positives", std::to_string(c.n_positives)},
      {"seed", std::to_string(c.seed)},
      {"checkpoint_dir", c.checkpoint_dir.string()},
      {"regenerate_negatives_every", std::to_string(c.regenerate_negatives_every)},
      {"optimizer", c.optimizer == OptimizerKind::kSgd ? "sgd" : "adam"},
      {"clip_norm", FormatDouble(c.clip_norm)},
      {"adam_beta1", FormatDouble(c.adam_beta1)},
      {"adam_beta2", FormatDouble(c.adam_beta2)},
      {"adam_epsilon", FormatDouble(c.adam_epsilon)},
      {"mode", c.mode == TrainMode::kConfit ? "confit" : "cross_entropy"},
      {"strategies", StrategyList(c.strategies)},
      {"log_every", std::to_string(c.log_every)},
      {"d_model", std::to_string(c.model.d_model)},
      {"heads", std::to_string(c.model.heads)},
      {"encoder_layers", std::to_string(c.model.encoder_layers)},
      {"decoder_layers", std::to_string(c.model.decoder_layers)},
      {"ffn_dim", std::to_string(c.model.ffn_dim)},
      {"classifier_hidden", std::to_string(c.model.classifier_hidden)},
      {"max_source_len", std::to_string(c.model.max_source_len)},
      {"max_target_len", std::to_string(c.model.max_target_len)},
      {"pooling", c.model.pooling == Pooling::kMean ? "mean" : "last"},
  };
}

TrainConfig ParseConfig(std::istream& in, TrainConfig base) {
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (Trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      SetConfigValue(base, Trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig LoadConfig(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  return ParseConfig(in, std::move(base));
}

bool StepRecord::SameLosses(const StepRecord& o) const {
  return nll == o.nll && contrastive == o.contrastive &&
         self_supervised == o.self_supervised && objective == o.objective;
}

void WriteReportJsonl(const TrainReport& report, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const StepRecord& s : report.steps) {
    json j = {{"event", "step"},
              {"step", s.step},
              {"epoch", s.epoch},
              {"L", s.nll},
              {"L_con", opt(s.contrastive)},
              {"L_self", opt(s.self_supervised)},
              {"J", s.objective},
              {"grad_norm", s.grad_norm},
              {"elapsed_seconds", s.elapsed_seconds}};
    out << j.dump() << '\n';
  }
  json end = {{"event", "end"},
              {"wall_seconds", report.wall_seconds},
              {"final_checkpoint", report.final_checkpoint.string()},
              {"samples_built", report.samples_built},
              {"samples_unbuildable", report.samples_unbuildable}};
  out << end.dump() << '\n';
}

void WriteReportJsonl(const TrainReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write report " + path.string());
  WriteReportJsonl(report, out);
}

Optimizer::Optimizer(const TrainConfig& c, const std::vector<ag::Parameter>& params)
    : kind_(c.optimizer),
      lr_(c.learning_rate),
      clip_(c.clip_norm),
      beta1_(c.adam_beta1),
      beta2_(c.adam_beta2),
      eps_(c.adam_epsilon) {
  if (kind_ == OptimizerKind::kAdam) {
    for (const auto& p : params) {
      m_.push_back(ag::Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(ag::Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
}

double Optimizer::Step(std::vector<ag::Parameter>& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double scale = clip_ > 0.0 && norm > clip_ ? clip_ / norm : 1.0;
  ++t_;
  for (size_t i = 0; i < params.size(); ++i) {
    ag::Parameter& p = params[i];
    if (kind_ == OptimizerKind::kSgd) {
      p.value -= (lr_ * scale) * p.grad;
      continue;
    }
    const ag::Matrix g = scale * p.grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    p.value.array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
  return norm;
}

namespace {

std::vector<std::optional<ContrastiveSample>> BuildSamples(
    const std::vector<CorpusPair>& pairs, const ModelState& model, const TrainConfig& config,
    const TrainComponents& components, size_t epoch, TrainReport& report) {
  static const RuleParaphraser kParaphraser;
  static const NameSwapInfiller kInfiller;
  const Paraphraser& paraphraser =
      components.paraphraser ? *components.paraphraser : kParaphraser;
  const Infiller& infiller = components.infiller ? *components.infiller : kInfiller;
  SampleConfig sc;
  sc.n_positives = config.n_positives;
  sc.delete_ratio = config.delete_ratio;
  sc.strategies = config.strategies;
  const ModelSummarizer current(model);
  const Summarizer* summarizer = components.summarizer;
  if (summarizer == nullptr && components.summarize_with_model) summarizer = &current;
  std::vector<std::optional<ContrastiveSample>> out(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    try {
      out[i] = BuildContrastiveSample(pairs[i], summarizer, paraphraser, infiller,
                                      sc, DeriveSeed({config.seed, 0x5a3, epoch, i}));
      ++report.samples_built;
    } catch (const SampleUnbuildable&) {
      ++report.samples_unbuildable;
    }
  }
  return out;
}

}  // namespace

TrainReport Train(const std::vector<CorpusPair>& pairs, ModelState& model,
                  const TrainConfig& config, const TrainComponents& components,
                  std::ostream* log) {
  config.Validate();
  if (pairs.empty()) throw ValidationError("training set is empty");
  for (const CorpusPair& p : pairs) {
    if (p.split == Split::kTest) {
      throw ValidationError("test-split pair '" + p.dialogue.id + "' passed to training");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  TrainReport report;
  Optimizer optimizer(config, model.parameters());
  Rng order_rng(DeriveSeed({config.seed, 0x0bde}));
  const bool confit = config.mode == TrainMode::kConfit;
  const ObjectiveTerms terms{confit, confit};
  std::vector<std::optional<ContrastiveSample>> samples(pairs.size());
  size_t step = 0;
  bool done = false;
  for (size_t epoch = 0; !done; ++epoch) {
    if (config.max_steps > 0 && step >= config.max_steps) break;
    if (confit && epoch % config.regenerate_negatives_every == 0) {
      samples = BuildSamples(pairs, model, config, components, epoch, report);
    }
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Shuffle(order, order_rng);
    for (size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        done = true;
        break;
      }
      const size_t end = std::min(order.size(), begin + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - begin);
      model.ZeroGrad();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      double con_sum = 0.0, self_sum = 0.0;
      size_t con_n = 0, self_n = 0;
      for (size_t b = begin; b < end; ++b) {
        const size_t i = order[b];
        const CorpusPair& pair = pairs[i];
        ag::Graph graph;
        ExampleLoss loss;
        try {
          loss = ComputeExampleLoss(graph, model, pair.dialogue, pair.reference.text,
                                    samples[i] ? &*samples[i] : nullptr, config.weights,
                                    config.k, DeriveSeed({config.seed, 0x9a1, step, i}), terms);
        } catch (const NonFiniteLoss& e) {
          throw NonFiniteLoss(e.term(), static_cast<long>(step));
        }
        ag::Backward(loss.total, weight);
        rec.nll += weight * loss.nll;
        rec.objective += weight * ag::Scalar(loss.total);
        if (!std::isnan(loss.contrastive)) {
          con_sum += loss.contrastive;
          ++con_n;
        }
        if (!std::isnan(loss.self_supervised)) {
          self_sum += loss.self_supervised;
          ++self_n;
        }
      }
      if (con_n > 0) rec.contrastive = con_sum / static_cast<double>(con_n);
      if (self_n > 0) rec.self_supervised = self_sum / static_cast<double>(self_n);
      rec.grad_norm = optimizer.Step(model.parameters());
      if (!std::isfinite(rec.grad_norm)) throw NonFiniteLoss("gradient", static_cast<long>(step));
      rec.elapsed_seconds = elapsed();
      if (step % config.log_every == 0) {
        if (log != nullptr) {
          *log << "step " << step << " epoch " << epoch << " L " << rec.nll << " J "
               << rec.objective << '\n';
        }
        report.steps.push_back(rec);
      }
      ++step;
    }
    if (config.epochs > 0 && epoch + 1 >= config.epochs) done = true;
  }
  if (!model.AllFinite()) throw NonFiniteLoss("parameters", static_cast<long>(step));
  if (!config.checkpoint_dir.empty()) {
    report.final_checkpoint = config.checkpoint_dir / "final.ckpt";
    SaveCheckpoint(model, report.final_checkpoint);
  }
  report.wall_seconds = elapsed();
  return report;
}

GradientCheckResult GradientCheck(std::vector<ag::Parameter>& params,
                                  const std::function<ag::Var(ag::Graph&)>& loss,
                                  double eps, size_t n_params, uint64_t seed, double floor) {
  for (auto& p : params) p.ZeroGrad();
  std::vector<size_t> used;
  {
    ag::Graph graph;
    ag::Var root = loss(graph);
    ag::Backward(root);
    for (const ag::Parameter* p : graph.parameters()) {
      for (size_t i = 0; i < params.size(); ++i) {
        if (&params[i] == p) used.push_back(i);
      }
    }
  }
  std::sort(used.begin(), used.end());
  std::vector<std::pair<size_t, Eigen::Index>> entries;
  for (size_t i : used) {
    for (Eigen::Index j = 0; j < params[i].value.size(); ++j) entries.emplace_back(i, j);
  }
  Rng rng(DeriveSeed({seed, 0x9c}));
  Shuffle(entries, rng);
  if (entries.size() > n_params) entries.resize(n_params);

  auto evaluate = [&] {
    ag::Graph graph(false);
    return ag::Scalar(loss(graph));
  };
  GradientCheckResult result;
  for (const auto& [i, j] : entries) {
    double& x = params[i].value.data()[j];
    const double analytic = params[i].grad.data()[j];
    const double saved = x;
    x = saved + eps;
    const double up = evaluate();
    x = saved - eps;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    ++result.checked;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_param = i;
      result.worst_name = params[i].name;
      result.worst_offset = j;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace confit
