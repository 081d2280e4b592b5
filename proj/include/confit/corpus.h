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

// Canonical data model for dialogues and their summaries.

#ifndef CONFIT_CORPUS_H_
#define CONFIT_CORPUS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace confit {

struct Turn {
  std::string speaker;
  std::string text;
  // Set for events such as "<file_photo>" or an empty message.
  bool non_verbal = false;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  std::set<std::string> Speakers() const;
  // "Speaker: text" lines joined with '\n'.
  std::string Render() const;

  bool operator==(const Dialogue&) const = default;
};

enum class StrategyTag {
  kNounSwap,
  kVerbSwap,
  kNumberMask,
  kUtteranceDelete,
  kCorefCorrupt,
};

inline constexpr std::array<StrategyTag, 5> kAllStrategies = {
    StrategyTag::kNounSwap, StrategyTag::kVerbSwap, StrategyTag::kNumberMask,
    StrategyTag::kUtteranceDelete, StrategyTag::kCorefCorrupt};

std::string_view StrategyName(StrategyTag tag);
// Inverse of StrategyName; throws ValidationError for unknown names.
StrategyTag ParseStrategy(std::string_view name);

// Where a summary came from.
struct Provenance {
  enum class Kind { kReference, kModel, kNegative, kPositive };

  Kind kind = Kind::kReference;
  // Model name for kModel, paraphrase method for kPositive.
  std::string name;
  // Meaningful only for kNegative.
  StrategyTag strategy = StrategyTag::kNounSwap;

  static Provenance Reference() { return {}; }
  static Provenance Model(std::string model) {
    return {Kind::kModel, std::move(model), StrategyTag::kNounSwap};
  }
  static Provenance Negative(StrategyTag tag) {
    return {Kind::kNegative, "", tag};
  }
  static Provenance Positive(std::string method) {
    return {Kind::kPositive, std::move(method), StrategyTag::kNounSwap};
  }

  bool operator==(const Provenance&) const = default;
};

struct SummaryRecord {
  std::string dialogue_id;
  std::string text;
  Provenance provenance;

  bool operator==(const SummaryRecord&) const = default;
};

enum class Split { kUnassigned, kTrain, kDev, kTest };

std::string_view SplitName(Split split);

// A dialogue with its reference summary. The split tag travels with the pair
// so consumers can assert they never see held-out data.
struct CorpusPair {
  Dialogue dialogue;
  SummaryRecord reference;
  Split split = Split::kUnassigned;

  bool operator==(const CorpusPair&) const = default;
};

enum class CorpusFormat { kJsonl, kSamsumRaw };

CorpusFormat ParseCorpusFormat(std::string_view name);

// Splits the "Speaker: utterance" line format into turns. Lines without a
// speaker prefix continue the previous turn. Throws UnparseableDialogue when
// no speaker line exists or a continuation precedes the first speaker line.
std::vector<Turn> ParseTurns(std::string_view raw);

// Reads pairs in file order. For kJsonl each line is
//   {"id": str, "dialogue": [{"speaker": str, "text": str}], "summary": str}.
// For kSamsumRaw the dialogue field is a single string parsed by ParseTurns;
// both newline-delimited objects and a single JSON array are accepted.
std::vector<CorpusPair> LoadDialogues(const std::filesystem::path& path,
                                      CorpusFormat format);
std::vector<CorpusPair> ParseDialogues(std::istream& in, CorpusFormat format);

void WriteJsonl(std::ostream& out, const std::vector<CorpusPair>& pairs);
void WriteJsonl(const std::filesystem::path& path,
                const std::vector<CorpusPair>& pairs);

struct CorpusSplits {
  std::vector<CorpusPair> train;
  std::vector<CorpusPair> dev;
  std::vector<CorpusPair> test;
};

// Deterministic shuffled partition. Split sizes use largest-remainder
// rounding, so each differs from fraction * N by less than one.
CorpusSplits SplitCorpus(std::vector<CorpusPair> pairs,
                         std::array<double, 3> fractions, uint64_t seed);

nlohmann::json ToJson(const Dialogue& dialogue);
Dialogue DialogueFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const SummaryRecord& record);
SummaryRecord SummaryRecordFromJson(const nlohmann::json& j);

}  // namespace confit

#endif  // CONFIT_CORPUS_H_
