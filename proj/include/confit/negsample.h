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

// Hard negative and positive summary generation for the contrastive term.

#ifndef CONFIT_NEGSAMPLE_H_
#define CONFIT_NEGSAMPLE_H_

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "confit/corpus.h"
#include "confit/tagging.h"
#include "json.hpp"

namespace confit {

inline constexpr std::string_view kDefaultMaskToken = "<mask>";

struct ContrastiveSample {
  std::string dialogue_id;
  SummaryRecord anchor;
  std::vector<SummaryRecord> positives;
  std::vector<SummaryRecord> negatives;
};

nlohmann::json ToJson(const ContrastiveSample& sample);
ContrastiveSample ContrastiveSampleFromJson(const nlohmann::json& j);

// Produces a summary for a (possibly corrupted) dialogue. Implementations
// must be deterministic for fixed state and input.
class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string Summarize(const Dialogue& dialogue) const = 0;
};

// Meaning-preserving rewrite. Output is non-empty for non-empty input.
class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::string Paraphrase(std::string_view text) const = 0;
  virtual std::string method() const = 0;
};

struct InfillRequest {
  // Turn text with exactly one occurrence of mask_token.
  std::string masked_text;
  std::string mask_token;
  const Dialogue* context = nullptr;
  // Entity whose mention was masked; fills should name someone else.
  std::string masked_entity;
  // The masked mention was possessive ("my car").
  bool possessive = false;
  uint64_t seed = 0;
};

class Infiller {
 public:
  virtual ~Infiller() = default;
  // Returns the text that replaces the mask. Must not contain the mask token.
  virtual std::string Fill(const InfillRequest& request) const = 0;
};

// Fills the mask with a person drawn from a different cluster:
// "Ernest" or, for possessive mentions, "Ernest's".
class NameSwapInfiller : public Infiller {
 public:
  std::string Fill(const InfillRequest& request) const override;
};

// Contraction expansion, fixed-dictionary synonym substitution and
// "X because Y." -> "Because Y, X." reordering. Person names, numbers and
// negation words are never touched.
class RuleParaphraser : public Paraphraser {
 public:
  std::string Paraphrase(std::string_view text) const override;
  std::string method() const override { return "rule_paraphrase"; }
};

// Baseline summarizer: the first two turns as "Speaker: text" sentences.
class LeadSummarizer : public Summarizer {
 public:
  explicit LeadSummarizer(size_t turns = 2) : turns_(turns) {}
  std::string Summarize(const Dialogue& dialogue) const override;

 private:
  size_t turns_;
};

// Exchanges one pair of Noun/Name tokens. Same-tag pairs (Name-Name,
// Noun-Noun) are preferred when any exist. Throws NoSwapPossible.
std::string SwapNouns(std::string_view summary, uint64_t seed,
                      const Tagger& tagger = LexiconTagger::Default());
// Exchanges one pair of distinct Verb tokens. Throws NoSwapPossible.
std::string SwapVerbs(std::string_view summary, uint64_t seed,
                      const Tagger& tagger = LexiconTagger::Default());

// Copy of the dialogue with every number token replaced by mask_token.
// Throws NoNumbersFound.
Dialogue MaskNumbers(const Dialogue& dialogue,
                     std::string_view mask_token = kDefaultMaskToken);
SummaryRecord MaskNumbersAndGenerate(
    const Dialogue& dialogue, const Summarizer& summarizer,
    std::string_view mask_token = kDefaultMaskToken);

// Number of turns DeleteUtterances removes: max(1, floor(ratio * n)).
size_t DeletionCount(size_t n_turns, double ratio);
// Removes DeletionCount turns chosen uniformly without replacement; order
// of the kept turns is preserved. Throws TooFewTurns for one-turn input.
Dialogue DeleteUtterances(const Dialogue& dialogue, double ratio, uint64_t seed);
SummaryRecord DeleteUtterancesAndGenerate(const Dialogue& dialogue, double ratio,
                                          const Summarizer& summarizer,
                                          uint64_t seed);

struct CorefCorruption {
  Dialogue dialogue;
  int turn = 0;
  std::string original;
  std::string replacement;
  bool operator==(const CorefCorruption&) const = default;
};

// Replaces one mention of `cluster` in the dialogue through the infiller.
CorefCorruption CorruptMention(const Dialogue& dialogue,
                               const MentionCluster& cluster,
                               const Mention& mention, const Infiller& infiller,
                               uint64_t seed,
                               std::string_view mask_token = kDefaultMaskToken);
// Picks a random resolved cluster and mention and corrupts it. Throws
// NotEnoughEntities when fewer than two resolved clusters exist.
CorefCorruption CorruptCoreference(const Dialogue& dialogue,
                                   const Infiller& infiller, uint64_t seed);
SummaryRecord CorruptCoreferenceAndGenerate(const Dialogue& dialogue,
                                            const Infiller& infiller,
                                            const Summarizer& summarizer,
                                            uint64_t seed);

SummaryRecord MakePositive(const SummaryRecord& anchor,
                           const Paraphraser& paraphraser);

struct SampleConfig {
  size_t n_positives = 1;
  double delete_ratio = 0.3;
  std::string mask_token = std::string(kDefaultMaskToken);
  std::set<StrategyTag> strategies = {kAllStrategies.begin(), kAllStrategies.end()};
};

// Runs every enabled strategy, skipping those whose precondition fails and
// discarding outputs equal to the anchor (after one retry with seed + 1).
// The summarizer may be null when no model-backed strategy is enabled.
// Throws SampleUnbuildable if no negative survives.
ContrastiveSample BuildContrastiveSample(const CorpusPair& pair,
                                         const Summarizer* summarizer,
                                         const Paraphraser& paraphraser,
                                         const Infiller& infiller,
                                         const SampleConfig& config,
                                         uint64_t seed);

}  // namespace confit

#endif  // CONFIT_NEGSAMPLE_H_
