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

#include "confit/objective.h"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "confit/error.h"
#include "confit/random.h"

namespace confit {

using ag::Matrix;
using ag::Var;

void LossWeights::Validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("loss weights must be non-negative");
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
}

Var NllLoss(const Var& logits, std::span<const int> targets, int pad_id) {
  return ag::CrossEntropy(logits, targets, pad_id);
}

double NllLoss(const Matrix& logits, std::span<const int> targets, int pad_id) {
  return ag::Scalar(ag::CrossEntropy(ag::Constant(logits), targets, pad_id));
}

Var ContrastiveLoss(const Var& anchor, const std::vector<Var>& positives,
                    const std::vector<Var>& negatives, double tau) {
  return ag::ContrastiveNce(anchor, positives, negatives, tau);
}

double ContrastiveLoss(const ag::Vector& anchor, const std::vector<ag::Vector>& positives,
                       const std::vector<ag::Vector>& negatives, double tau) {
  auto row = [](const ag::Vector& v) { return ag::Constant(v.transpose()); };
  std::vector<Var> p;
  std::vector<Var> n;
  for (const auto& v : positives) p.push_back(row(v));
  for (const auto& v : negatives) n.push_back(row(v));
  return ag::Scalar(ag::ContrastiveNce(row(anchor), p, n, tau));
}

namespace {

struct Unit {
  int index;
  std::string speaker;
};

// Appends up to `count` pairs of the requested class, drawn with replacement.
void DrawPairs(const std::vector<Unit>& units, bool same, size_t count, PairLevel level,
               Rng& rng, std::vector<TokenPair>& out) {
  std::map<std::string, std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < units.size(); ++i) by_speaker[units[i].speaker].push_back(i);
  // Units that have at least one partner of the requested class.
  std::vector<size_t> anchors;
  for (size_t i = 0; i < units.size(); ++i) {
    const size_t same_count = by_speaker[units[i].speaker].size();
    if (same ? same_count >= 2 : same_count < units.size()) anchors.push_back(i);
  }
  if (anchors.empty()) return;
  for (size_t c = 0; c < count; ++c) {
    const Unit& a = units[anchors[UniformIndex(rng, anchors.size())]];
    const std::vector<size_t>& group = by_speaker[a.speaker];
    size_t b;
    if (same) {
      do {
        b = group[UniformIndex(rng, group.size())];
      } while (units[b].index == a.index);
    } else {
      do {
        b = UniformIndex(rng, units.size());
      } while (units[b].speaker == a.speaker);
    }
    TokenPair p{a.index, units[b].index, a.speaker, units[b].speaker, level};
    if (p.m > p.n) {
      std::swap(p.m, p.n);
      std::swap(p.s_m, p.s_n);
    }
    out.push_back(std::move(p));
  }
}

bool HasClass(const std::vector<Unit>& units, bool same) {
  std::map<std::string, size_t> counts;
  for (const Unit& u : units) ++counts[u.speaker];
  if (same) {
    for (const auto& [s, n] : counts) {
      if (n >= 2) return true;
    }
    return false;
  }
  return counts.size() >= 2;
}

void SampleLevel(const std::vector<Unit>& units, size_t k, PairLevel level, Rng& rng,
                 std::vector<TokenPair>& out) {
  const bool has_same = HasClass(units, true);
  const bool has_diff = HasClass(units, false);
  if (has_same && has_diff) {
    DrawPairs(units, true, (k + 1) / 2, level, rng, out);
    DrawPairs(units, false, k / 2, level, rng, out);
  } else if (has_same || has_diff) {
    DrawPairs(units, has_same, k, level, rng, out);
  }
}

}  // namespace

std::vector<TokenPair> SampleTokenPairs(const EncoderStates& source, size_t k,
                                        uint64_t seed) {
  std::vector<Unit> tokens;
  std::map<int, std::string> turn_speaker;
  for (size_t i = 0; i < source.ids.size(); ++i) {
    if (!source.speakers[i] || Vocab::IsReserved(source.ids[i])) continue;
    tokens.push_back({static_cast<int>(i), *source.speakers[i]});
    if (source.turns[i] != kNoTurn) turn_speaker.emplace(source.turns[i], *source.speakers[i]);
  }
  if (tokens.size() < 2) throw ValidationError("fewer than two speaker-labelled tokens");
  std::vector<Unit> utterances;
  for (const auto& [turn, speaker] : turn_speaker) utterances.push_back({turn, speaker});

  Rng rng(DeriveSeed({seed, 0x5e1f}));
  std::vector<TokenPair> pairs;
  SampleLevel(tokens, k, PairLevel::kToken, rng, pairs);
  SampleLevel(utterances, k, PairLevel::kUtterance, rng, pairs);
  return pairs;
}

Var SpeakerPairLogits(ag::Graph& g, const ModelState& model, const EncoderStates& source,
                      const std::vector<TokenPair>& pairs) {
  if (pairs.empty()) throw ValidationError("no speaker pairs");
  const Eigen::Index len = source.C->val().rows();
  std::vector<int> all(static_cast<size_t>(len));
  for (Eigen::Index i = 0; i < len; ++i) all[static_cast<size_t>(i)] = static_cast<int>(i);
  const Var pooled = ag::GroupMeans(source.C, {all});

  // Turn-mean rows appended after the token rows so one gather serves both.
  std::map<int, std::vector<int>> turn_rows;
  for (size_t i = 0; i < source.turns.size(); ++i) {
    if (source.turns[i] != kNoTurn) turn_rows[source.turns[i]].push_back(static_cast<int>(i));
  }
  std::map<int, int> turn_slot;
  std::vector<std::vector<int>> groups;
  for (const TokenPair& p : pairs) {
    if (p.level != PairLevel::kUtterance) continue;
    for (int t : {p.m, p.n}) {
      if (turn_slot.count(t)) continue;
      auto it = turn_rows.find(t);
      if (it == turn_rows.end()) throw ValidationError("utterance pair names an unknown turn");
      turn_slot[t] = static_cast<int>(len + static_cast<Eigen::Index>(groups.size()));
      groups.push_back(it->second);
    }
  }
  Var table = groups.empty() ? source.C
                             : ag::ConcatRows({source.C, ag::GroupMeans(source.C, groups)});
  std::vector<int> rows_m;
  std::vector<int> rows_n;
  for (const TokenPair& p : pairs) {
    if (p.level == PairLevel::kToken) {
      if (p.m < 0 || p.n < 0 || p.m >= len || p.n >= len) {
        throw std::out_of_range("token pair position outside the source");
      }
      rows_m.push_back(p.m);
      rows_n.push_back(p.n);
    } else {
      rows_m.push_back(turn_slot.at(p.m));
      rows_n.push_back(turn_slot.at(p.n));
    }
  }
  const std::vector<int> zeros(pairs.size(), 0);
  Var features = ag::ConcatCols({ag::GatherRows(pooled, zeros), ag::GatherRows(table, rows_m),
                                 ag::GatherRows(table, rows_n)});
  Var hidden = ag::Tanh(ag::AddBias(ag::MatMul(features, g.Param(model.param(model.cls_w1()))),
                                    g.Param(model.param(model.cls_b1()))));
  return ag::AddBias(ag::MatMul(hidden, g.Param(model.param(model.cls_w2()))),
                     g.Param(model.param(model.cls_b2())));
}

Var SelfSupervisedLoss(ag::Graph& g, const ModelState& model, const EncoderStates& source,
                       const std::vector<TokenPair>& pairs) {
  if (pairs.empty()) throw ValidationError("self-supervised loss needs at least one pair");
  std::vector<double> labels;
  for (const TokenPair& p : pairs) labels.push_back(p.same_speaker() ? 1.0 : 0.0);
  return ag::BinaryCrossEntropyWithLogits(SpeakerPairLogits(g, model, source, pairs), labels);
}

double PairBinaryCrossEntropy(std::span<const double> probabilities,
                              std::span<const bool> same_speaker) {
  if (probabilities.size() != same_speaker.size()) {
    throw std::invalid_argument("probability and label counts differ");
  }
  double total = 0.0;
  for (size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    total -= same_speaker[i] ? std::log(p) : std::log1p(-p);
  }
  return total;
}

double CombinedObjective(double nll, double contrastive, double self_supervised,
                         const LossWeights& weights) {
  if (!std::isfinite(nll)) throw NonFiniteLoss("nll", -1);
  if (!std::isfinite(contrastive)) throw NonFiniteLoss("contrastive", -1);
  if (!std::isfinite(self_supervised)) throw NonFiniteLoss("self_supervised", -1);
  return nll + weights.alpha * contrastive + weights.beta * self_supervised;
}

Var CombinedObjective(const Var& nll, const Var& contrastive, const Var& self_supervised,
                      const LossWeights& weights) {
  CombinedObjective(ag::Scalar(nll), contrastive ? ag::Scalar(contrastive) : 0.0,
                    self_supervised ? ag::Scalar(self_supervised) : 0.0, weights);
  Var total = nll;
  if (contrastive) total = ag::Add(total, ag::Scale(contrastive, weights.alpha));
  if (self_supervised) total = ag::Add(total, ag::Scale(self_supervised, weights.beta));
  return total;
}

ExampleLoss ComputeExampleLoss(ag::Graph& g, const ModelState& model, const Dialogue& dialogue,
                               std::string_view reference, const ContrastiveSample* sample,
                               const LossWeights& weights, size_t k, uint64_t seed,
                               ObjectiveTerms terms) {
  const EncoderStates source = Encode(g, model, dialogue);
  const TeacherForcingPair tf = MakeTeacherForcingPair(model, reference);
  const DecoderOutput out = DecodeTeacherForced(g, model, source, tf.input);
  Var nll = NllLoss(out.logits, tf.labels);

  ExampleLoss loss;
  loss.nll = ag::Scalar(nll);
  loss.contrastive = std::numeric_limits<double>::quiet_NaN();
  loss.self_supervised = std::numeric_limits<double>::quiet_NaN();
  Var con;
  Var self;
  if (terms.contrastive && sample != nullptr && !sample->positives.empty() &&
      !sample->negatives.empty()) {
    const Var anchor = PoolSummaryStates(out, tf.input, model.config().pooling);
    std::vector<Var> pos;
    std::vector<Var> neg;
    for (const SummaryRecord& r : sample->positives) {
      pos.push_back(SummaryRepresentation(g, model, source, r.text));
    }
    for (const SummaryRecord& r : sample->negatives) {
      neg.push_back(SummaryRepresentation(g, model, source, r.text));
    }
    con = ContrastiveLoss(anchor, pos, neg, weights.tau);
    loss.contrastive = ag::Scalar(con);
  }
  if (terms.self_supervised && k > 0) {
    const std::vector<TokenPair> pairs = SampleTokenPairs(source, k, seed);
    if (!pairs.empty()) {
      self = SelfSupervisedLoss(g, model, source, pairs);
      loss.self_supervised = ag::Scalar(self);
    }
  }
  loss.total = CombinedObjective(nll, con, self, weights);
  return loss;
}

}  // namespace confit
