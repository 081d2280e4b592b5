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

// Training losses: teacher-forced negative log-likelihood, the cosine
// contrast over summary representations, and the same-speaker classifier.

#ifndef CONFIT_OBJECTIVE_H_
#define CONFIT_OBJECTIVE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "confit/autograd.h"
#include "confit/seq2seq.h"

namespace confit {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  // Similarity temperature.
  double tau = 1.0;

  // Throws ValidationError unless alpha, beta >= 0 and tau > 0.
  void Validate() const;
};

// Sum over targets != pad_id of -log softmax(logits row)[target]. Throws
// std::invalid_argument when every target is padding.
ag::Var NllLoss(const ag::Var& logits, std::span<const int> targets,
                int pad_id = Vocab::kPad);
double NllLoss(const ag::Matrix& logits, std::span<const int> targets,
               int pad_id = Vocab::kPad);

// Sum over positives j of
//   -log( e^{cos(a,p_j)/tau} / (e^{cos(a,p_j)/tau} + sum_k e^{cos(a,n_k)/tau}) ).
// Throws std::invalid_argument for zero-norm inputs or empty sets.
ag::Var ContrastiveLoss(const ag::Var& anchor, const std::vector<ag::Var>& positives,
                        const std::vector<ag::Var>& negatives, double tau = 1.0);
double ContrastiveLoss(const ag::Vector& anchor, const std::vector<ag::Vector>& positives,
                       const std::vector<ag::Vector>& negatives, double tau = 1.0);

enum class PairLevel { kToken, kUtterance };

struct TokenPair {
  // Source positions for kToken, turn indices for kUtterance; m < n.
  int m = 0;
  int n = 0;
  std::string s_m;
  std::string s_n;
  PairLevel level = PairLevel::kToken;

  bool same_speaker() const { return s_m == s_n; }
  bool operator==(const TokenPair&) const = default;
};

// k token pairs followed by k utterance pairs. Each level has ceil(k/2)
// same-speaker and floor(k/2) different-speaker pairs when both classes are
// available, otherwise k pairs of the available class. A level with no
// possible pair (a one-turn dialogue has no utterance pairs) contributes
// none. Only positions with a speaker label are used. Throws
// ValidationError when no token pair can be formed.
std::vector<TokenPair> SampleTokenPairs(const EncoderStates& source, size_t k,
                                        uint64_t seed);

// Logits (pairs x 1) of the same-speaker classifier applied to
// [mean of C; state_m; state_n]. Utterance states are turn means of C.
ag::Var SpeakerPairLogits(ag::Graph& graph, const ModelState& model,
                          const EncoderStates& source,
                          const std::vector<TokenPair>& pairs);
// Binary cross-entropy of the classifier against same_speaker(), summed over
// pairs. Throws ValidationError for an empty pair list.
ag::Var SelfSupervisedLoss(ag::Graph& graph, const ModelState& model,
                           const EncoderStates& source,
                           const std::vector<TokenPair>& pairs);
// Same quantity from classifier probabilities.
double PairBinaryCrossEntropy(std::span<const double> probabilities,
                              std::span<const bool> same_speaker);

// J = L + alpha * L_con + beta * L_self. Throws NonFiniteLoss naming the
// first non-finite term ("nll", "contrastive", "self_supervised").
double CombinedObjective(double nll, double contrastive, double self_supervised,
                         const LossWeights& weights);
ag::Var CombinedObjective(const ag::Var& nll, const ag::Var& contrastive,
                          const ag::Var& self_supervised, const LossWeights& weights);

// Which terms a per-example loss includes.
struct ObjectiveTerms {
  bool contrastive = true;
  bool self_supervised = true;
};

struct ExampleLoss {
  ag::Var total;
  double nll = 0.0;
  // NaN when the term was not computed.
  double contrastive = 0.0;
  double self_supervised = 0.0;
};

// Builds the graph for one training example. `sample` may be null, in which
// case the contrastive term is skipped.
ExampleLoss ComputeExampleLoss(ag::Graph& graph, const ModelState& model,
                               const Dialogue& dialogue, std::string_view reference,
                               const ContrastiveSample* sample, const LossWeights& weights,
                               size_t k, uint64_t seed, ObjectiveTerms terms = {});

}  // namespace confit

#endif  // CONFIT_OBJECTIVE_H_
