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

#include "confit/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/text_util.h"

namespace confit {
namespace {

using nlohmann::json;

constexpr size_t kMaxSpeakerLength = 40;

bool LooksNonVerbal(std::string_view text) {
  if (text.empty()) return true;
  return text.size() >= 3 && text.front() == '<' && text.back() == '>' &&
         text.find(' ') == std::string_view::npos;
}

// Returns the speaker and utterance if the line has a "Name: " prefix.
std::optional<std::pair<std::string, std::string>> SplitSpeakerLine(
    std::string_view line) {
  const size_t colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  if (colon + 1 < line.size() && !IsSpace(line[colon + 1])) return std::nullopt;
  std::string speaker = Trim(line.substr(0, colon));
  if (speaker.empty() || speaker.size() > kMaxSpeakerLength) return std::nullopt;
  return std::make_pair(std::move(speaker), Trim(line.substr(colon + 1)));
}

std::string Where(const std::string& context, const char* field) {
  return context + ": field '" + field + "'";
}

const json& RequireField(const json& record, const char* field,
                         const std::string& context) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw ValidationError(Where(context, field) + " is missing");
  }
  return *it;
}

std::string RequireString(const json& record, const char* field,
                          const std::string& context) {
  const json& value = RequireField(record, field, context);
  if (!value.is_string()) {
    throw ValidationError(Where(context, field) + " must be a string");
  }
  return value.get<std::string>();
}

Turn TurnFromJson(const json& j, const std::string& context) {
  if (!j.is_object()) throw ValidationError(context + ": turn must be an object");
  Turn turn;
  turn.speaker = Trim(RequireString(j, "speaker", context));
  if (turn.speaker.empty()) {
    throw ValidationError(Where(context, "speaker") + " is empty");
  }
  turn.text = RequireString(j, "text", context);
  turn.non_verbal = j.value("non_verbal", false) || turn.text.empty();
  return turn;
}

CorpusPair PairFromJson(const json& record, CorpusFormat format,
                        const std::string& context) {
  if (!record.is_object()) throw ValidationError(context + ": not an object");
  CorpusPair pair;
  pair.dialogue.id = RequireString(record, "id", context);
  const json& payload = RequireField(record, "dialogue", context);
  if (format == CorpusFormat::kJsonl) {
    if (!payload.is_array()) {
      throw ValidationError(Where(context, "dialogue") + " must be an array");
    }
    for (const json& t : payload) pair.dialogue.turns.push_back(TurnFromJson(t, context));
  } else {
    if (!payload.is_string()) {
      throw ValidationError(Where(context, "dialogue") + " must be a string");
    }
    try {
      pair.dialogue.turns = ParseTurns(payload.get<std::string>());
    } catch (const UnparseableDialogue& e) {
      throw ValidationError(Where(context, "dialogue") + ": " + e.what());
    }
  }
  if (pair.dialogue.turns.empty()) {
    throw ValidationError(Where(context, "dialogue") + " has no turns");
  }
  pair.reference.dialogue_id = pair.dialogue.id;
  pair.reference.text = RequireString(record, "summary", context);
  pair.reference.provenance = Provenance::Reference();
  return pair;
}

}  // namespace

std::set<std::string> Dialogue::Speakers() const {
  std::set<std::string> out;
  for (const Turn& t : turns) out.insert(t.speaker);
  return out;
}

std::string Dialogue::Render() const {
  std::string out;
  for (size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += turns[i].speaker;
    out += ": ";
    out += turns[i].text;
  }
  return out;
}

std::string_view StrategyName(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::kNounSwap:
      return "noun_swap";
    case StrategyTag::kVerbSwap:
      return "verb_swap";
    case StrategyTag::kNumberMask:
      return "number_mask";
    case StrategyTag::kUtteranceDelete:
      return "utterance_delete";
    case StrategyTag::kCorefCorrupt:
      return "coref_corrupt";
  }
  return "unknown";
}

StrategyTag ParseStrategy(std::string_view name) {
  for (StrategyTag tag : kAllStrategies) {
    if (StrategyName(tag) == name) return tag;
  }
  throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kUnassigned:
      return "unassigned";
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

CorpusFormat ParseCorpusFormat(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "samsum_raw") return CorpusFormat::kSamsumRaw;
  throw ValidationError("unknown corpus format '" + std::string(name) + "'");
}

std::vector<Turn> ParseTurns(std::string_view raw) {
  std::vector<Turn> turns;
  for (std::string_view line : SplitLines(raw)) {
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    if (auto speaker_line = SplitSpeakerLine(trimmed)) {
      Turn turn;
      turn.speaker = std::move(speaker_line->first);
      turn.text = std::move(speaker_line->second);
      turn.non_verbal = LooksNonVerbal(turn.text);
      turns.push_back(std::move(turn));
      continue;
    }
    if (turns.empty()) {
      throw UnparseableDialogue("line without a speaker prefix before any turn: '" +
                                trimmed + "'");
    }
    Turn& last = turns.back();
    if (!last.text.empty()) last.text += ' ';
    last.text += trimmed;
    last.non_verbal = LooksNonVerbal(last.text);
  }
  if (turns.empty()) throw UnparseableDialogue("no speaker lines found");
  return turns;
}

std::vector<CorpusPair> ParseDialogues(std::istream& in, CorpusFormat format) {
  std::vector<CorpusPair> pairs;
  std::unordered_set<std::string> seen;
  auto add = [&](CorpusPair pair, const std::string& context) {
    if (!seen.insert(pair.dialogue.id).second) {
      throw ValidationError(context + ": duplicate id '" + pair.dialogue.id + "'");
    }
    pairs.push_back(std::move(pair));
  };

  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  const size_t first = content.find_first_not_of(" \t\r\n");
  if (format == CorpusFormat::kSamsumRaw && first != std::string::npos &&
      content[first] == '[') {
    json records;
    try {
      records = json::parse(content);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("invalid JSON array: ") + e.what());
    }
    for (size_t i = 0; i < records.size(); ++i) {
      const std::string context = "record " + std::to_string(i + 1);
      add(PairFromJson(records[i], format, context), context);
    }
    return pairs;
  }

  size_t line_number = 0;
  for (std::string_view line : SplitLines(content)) {
    ++line_number;
    if (Trim(line).empty()) continue;
    const std::string context = "line " + std::to_string(line_number);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(context + ": invalid JSON (" + e.what() + ")");
    }
    add(PairFromJson(record, format, context), context);
  }
  return pairs;
}

std::vector<CorpusPair> LoadDialogues(const std::filesystem::path& path,
                                      CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  return ParseDialogues(in, format);
}

void WriteJsonl(std::ostream& out, const std::vector<CorpusPair>& pairs) {
  for (const CorpusPair& pair : pairs) {
    json j;
    j["id"] = pair.dialogue.id;
    j["dialogue"] = ToJson(pair.dialogue)["dialogue"];
    j["summary"] = pair.reference.text;
    out << j.dump() << '\n';
  }
}

void WriteJsonl(const std::filesystem::path& path,
                const std::vector<CorpusPair>& pairs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  WriteJsonl(out, pairs);
}

CorpusSplits SplitCorpus(std::vector<CorpusPair> pairs,
                         std::array<double, 3> fractions, uint64_t seed) {
  if (pairs.size() < 3) {
    throw ValidationError("need at least 3 pairs to split, got " +
                          std::to_string(pairs.size()));
  }
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }

  const size_t n = pairs.size();
  std::array<size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  size_t assigned = 0;
  for (size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return remainders[a] > remainders[b];
  });
  for (size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];

  std::vector<size_t> index(n);
  std::iota(index.begin(), index.end(), 0);
  Rng rng(DeriveSeed({seed, 0x5e11}));
  Shuffle(index, rng);

  CorpusSplits out;
  std::array<std::vector<CorpusPair>*, 3> dest = {&out.train, &out.dev, &out.test};
  std::array<Split, 3> tags = {Split::kTrain, Split::kDev, Split::kTest};
  size_t at = 0;
  for (size_t s = 0; s < 3; ++s) {
    for (size_t k = 0; k < sizes[s]; ++k, ++at) {
      CorpusPair pair = std::move(pairs[index[at]]);
      pair.split = tags[s];
      dest[s]->push_back(std::move(pair));
    }
  }
  return out;
}

json ToJson(const Dialogue& dialogue) {
  json turns = json::array();
  for (const Turn& t : dialogue.turns) {
    json jt = {{"speaker", t.speaker}, {"text", t.text}};
    if (t.non_verbal && !t.text.empty()) jt["non_verbal"] = true;
    turns.push_back(std::move(jt));
  }
  return {{"id", dialogue.id}, {"dialogue", std::move(turns)}};
}

Dialogue DialogueFromJson(const json& j) {
  const std::string context = "dialogue";
  Dialogue d;
  d.id = RequireString(j, "id", context);
  const json& turns = RequireField(j, "dialogue", context);
  if (!turns.is_array()) throw ValidationError("dialogue turns must be an array");
  for (const json& t : turns) d.turns.push_back(TurnFromJson(t, context));
  return d;
}

json ToJson(const SummaryRecord& record) {
  json prov;
  switch (record.provenance.kind) {
    case Provenance::Kind::kReference:
      prov = {{"kind", "reference"}};
      break;
    case Provenance::Kind::kModel:
      prov = {{"kind", "model"}, {"name", record.provenance.name}};
      break;
    case Provenance::Kind::kNegative:
      prov = {{"kind", "negative"},
              {"strategy", std::string(StrategyName(record.provenance.strategy))}};
      break;
    case Provenance::Kind::kPositive:
      prov = {{"kind", "positive"}, {"method", record.provenance.name}};
      break;
  }
  return {{"dialogue_id", record.dialogue_id},
          {"text", record.text},
          {"provenance", std::move(prov)}};
}

SummaryRecord SummaryRecordFromJson(const json& j) {
  const std::string context = "summary record";
  SummaryRecord r;
  r.dialogue_id = RequireString(j, "dialogue_id", context);
  r.text = RequireString(j, "text", context);
  const json& prov = RequireField(j, "provenance", context);
  const std::string kind = RequireString(prov, "kind", context);
  if (kind == "reference") {
    r.provenance = Provenance::Reference();
  } else if (kind == "model") {
    r.provenance = Provenance::Model(RequireString(prov, "name", context));
  } else if (kind == "negative") {
    r.provenance =
        Provenance::Negative(ParseStrategy(RequireString(prov, "strategy", context)));
  } else if (kind == "positive") {
    r.provenance = Provenance::Positive(RequireString(prov, "method", context));
  } else {
    throw ValidationError("unknown provenance kind '" + kind + "'");
  }
  return r;
}

}  // namespace confit
