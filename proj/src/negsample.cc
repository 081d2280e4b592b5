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

#include "confit/negsample.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/text_util.h"

namespace confit {
namespace {

using nlohmann::json;

std::string SwapTokens(std::string_view text, const std::vector<Token>& tokens,
                       size_t i, size_t j) {
  if (i > j) std::swap(i, j);
  const Token& a = tokens[i];
  const Token& b = tokens[j];
  std::string out;
  out.reserve(text.size());
  out += text.substr(0, a.begin);
  out += b.text;
  out += text.substr(a.end, b.begin - a.end);
  out += a.text;
  out += text.substr(b.end);
  return out;
}

// Exchanges one pair of tokens whose tags satisfy `eligible`.
std::string SwapTagged(std::string_view summary, uint64_t seed,
                       const Tagger& tagger,
                       const std::function<bool(PosTag)>& eligible,
                       bool prefer_same_tag, const char* what) {
  const std::vector<Token> tokens = TokenizeWithOffsets(summary);
  std::vector<std::string> words;
  for (const Token& t : tokens) words.push_back(t.text);
  const std::vector<TaggedToken> tags = tagger.Tag(words);

  std::vector<size_t> positions;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (eligible(tags[i].tag)) positions.push_back(i);
  }
  std::vector<std::pair<size_t, size_t>> pairs;
  std::vector<std::pair<size_t, size_t>> same_tag;
  for (size_t a = 0; a < positions.size(); ++a) {
    for (size_t b = a + 1; b < positions.size(); ++b) {
      const size_t i = positions[a];
      const size_t j = positions[b];
      if (words[i] == words[j]) continue;
      pairs.emplace_back(i, j);
      if (tags[i].tag == tags[j].tag) same_tag.emplace_back(i, j);
    }
  }
  if (pairs.empty()) {
    throw NoSwapPossible(std::string("fewer than two distinct ") + what +
                         " tokens in '" + std::string(summary) + "'");
  }
  const auto& pool = prefer_same_tag && !same_tag.empty() ? same_tag : pairs;
  Rng rng(DeriveSeed({seed, 0x5a9}));
  const auto [i, j] = pool[UniformIndex(rng, pool.size())];
  return SwapTokens(summary, tokens, i, j);
}

std::optional<size_t> FindCaseInsensitive(const std::vector<std::string>& list,
                                          const std::string& value) {
  for (size_t i = 0; i < list.size(); ++i) {
    if (list[i] == value) return i;
  }
  return std::nullopt;
}

}  // namespace

json ToJson(const ContrastiveSample& sample) {
  json positives = json::array();
  for (const auto& r : sample.positives) positives.push_back(ToJson(r));
  json negatives = json::array();
  for (const auto& r : sample.negatives) negatives.push_back(ToJson(r));
  return {{"dialogue_id", sample.dialogue_id},
          {"anchor", ToJson(sample.anchor)},
          {"positives", std::move(positives)},
          {"negatives", std::move(negatives)}};
}

ContrastiveSample ContrastiveSampleFromJson(const json& j) {
  ContrastiveSample s;
  s.dialogue_id = j.at("dialogue_id").get<std::string>();
  s.anchor = SummaryRecordFromJson(j.at("anchor"));
  for (const json& r : j.at("positives")) s.positives.push_back(SummaryRecordFromJson(r));
  for (const json& r : j.at("negatives")) s.negatives.push_back(SummaryRecordFromJson(r));
  return s;
}

std::string SwapNouns(std::string_view summary, uint64_t seed,
                      const Tagger& tagger) {
  return SwapTagged(
      summary, seed, tagger,
      [](PosTag t) { return t == PosTag::kNoun || t == PosTag::kName; },
      /*prefer_same_tag=*/true, "noun");
}

std::string SwapVerbs(std::string_view summary, uint64_t seed,
                      const Tagger& tagger) {
  return SwapTagged(
      summary, seed, tagger, [](PosTag t) { return t == PosTag::kVerb; },
      /*prefer_same_tag=*/false, "verb");
}

Dialogue MaskNumbers(const Dialogue& dialogue, std::string_view mask_token) {
  Dialogue masked = dialogue;
  size_t replaced = 0;
  for (Turn& turn : masked.turns) {
    const std::vector<Token> tokens = TokenizeWithOffsets(turn.text);
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
      if (!IsNumberToken(it->text)) continue;
      turn.text.replace(it->begin, it->end - it->begin, mask_token);
      ++replaced;
    }
  }
  if (replaced == 0) {
    throw NoNumbersFound("no number tokens in dialogue '" + dialogue.id + "'");
  }
  return masked;
}

SummaryRecord MaskNumbersAndGenerate(const Dialogue& dialogue,
                                     const Summarizer& summarizer,
                                     std::string_view mask_token) {
  const Dialogue masked = MaskNumbers(dialogue, mask_token);
  return SummaryRecord{dialogue.id, summarizer.Summarize(masked),
                       Provenance::Negative(StrategyTag::kNumberMask)};
}

size_t DeletionCount(size_t n_turns, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError("deletion ratio must lie in (0, 1)");
  }
  if (n_turns < 2) throw TooFewTurns("utterance deletion needs at least 2 turns");
  const auto by_ratio =
      static_cast<size_t>(std::floor(ratio * static_cast<double>(n_turns) + 1e-9));
  return std::min(std::max<size_t>(1, by_ratio), n_turns - 1);
}

Dialogue DeleteUtterances(const Dialogue& dialogue, double ratio, uint64_t seed) {
  const size_t n = dialogue.turns.size();
  const size_t remove = DeletionCount(n, ratio);
  std::vector<size_t> index(n);
  std::iota(index.begin(), index.end(), 0);
  Rng rng(DeriveSeed({seed, 0xde1}));
  Shuffle(index, rng);
  std::vector<bool> drop(n, false);
  for (size_t k = 0; k < remove; ++k) drop[index[k]] = true;
  Dialogue out;
  out.id = dialogue.id;
  for (size_t i = 0; i < n; ++i) {
    if (!drop[i]) out.turns.push_back(dialogue.turns[i]);
  }
  return out;
}

SummaryRecord DeleteUtterancesAndGenerate(const Dialogue& dialogue, double ratio,
                                          const Summarizer& summarizer,
                                          uint64_t seed) {
  const Dialogue reduced = DeleteUtterances(dialogue, ratio, seed);
  return SummaryRecord{dialogue.id, summarizer.Summarize(reduced),
                       Provenance::Negative(StrategyTag::kUtteranceDelete)};
}

CorefCorruption CorruptMention(const Dialogue& dialogue,
                               const MentionCluster& cluster,
                               const Mention& mention, const Infiller& infiller,
                               uint64_t seed, std::string_view mask_token) {
  if (mention.turn < 0 || static_cast<size_t>(mention.turn) >= dialogue.turns.size()) {
    throw ValidationError("mention does not lie in a dialogue turn");
  }
  const std::string& text = dialogue.turns[static_cast<size_t>(mention.turn)].text;
  if (mention.char_end > text.size() || mention.char_begin >= mention.char_end) {
    throw ValidationError("mention span outside its turn");
  }
  InfillRequest request;
  request.masked_text = text.substr(0, mention.char_begin) + std::string(mask_token) +
                        text.substr(mention.char_end);
  request.mask_token = std::string(mask_token);
  request.context = &dialogue;
  request.masked_entity = cluster.entity.value_or("");
  request.possessive = mention.possessive;
  request.seed = seed;
  std::string fill = infiller.Fill(request);
  if (fill.find(mask_token) != std::string::npos) {
    throw Error("infiller returned text containing the mask token");
  }
  CorefCorruption out;
  out.dialogue = dialogue;
  out.turn = mention.turn;
  out.original = mention.surface;
  out.dialogue.turns[static_cast<size_t>(mention.turn)].text =
      text.substr(0, mention.char_begin) + fill + text.substr(mention.char_end);
  out.replacement = std::move(fill);
  return out;
}

CorefCorruption CorruptCoreference(const Dialogue& dialogue,
                                   const Infiller& infiller, uint64_t seed) {
  const std::vector<MentionCluster> clusters = FindPersonMentions(dialogue);
  std::vector<std::pair<size_t, size_t>> candidates;
  size_t resolved = 0;
  for (size_t c = 0; c < clusters.size(); ++c) {
    if (!clusters[c].entity) continue;
    ++resolved;
    for (size_t m = 0; m < clusters[c].mentions.size(); ++m) {
      if (clusters[c].mentions[m].turn >= 0) candidates.emplace_back(c, m);
    }
  }
  if (resolved < 2 || candidates.empty()) {
    throw NotEnoughEntities("fewer than two person entities in dialogue '" +
                            dialogue.id + "'");
  }
  Rng rng(DeriveSeed({seed, 0xc0f}));
  Shuffle(candidates, rng);
  for (const auto& [c, m] : candidates) {
    CorefCorruption out = CorruptMention(dialogue, clusters[c], clusters[c].mentions[m],
                                         infiller, DeriveSeed({seed, c, m}));
    if (out.replacement != out.original) return out;
  }
  throw NotEnoughEntities("no mention of dialogue '" + dialogue.id +
                          "' could be changed");
}

SummaryRecord CorruptCoreferenceAndGenerate(const Dialogue& dialogue,
                                            const Infiller& infiller,
                                            const Summarizer& summarizer,
                                            uint64_t seed) {
  const CorefCorruption corrupted = CorruptCoreference(dialogue, infiller, seed);
  return SummaryRecord{dialogue.id, summarizer.Summarize(corrupted.dialogue),
                       Provenance::Negative(StrategyTag::kCorefCorrupt)};
}

std::string NameSwapInfiller::Fill(const InfillRequest& request) const {
  if (request.context == nullptr) throw Error("infill request without context");
  std::vector<std::string> names;
  for (const MentionCluster& c : FindPersonMentions(*request.context)) {
    if (c.entity && *c.entity != request.masked_entity &&
        !FindCaseInsensitive(names, *c.entity)) {
      names.push_back(*c.entity);
    }
  }
  for (const std::string& s : request.context->Speakers()) {
    if (s != request.masked_entity && !FindCaseInsensitive(names, s)) names.push_back(s);
  }
  if (names.empty()) throw NotEnoughEntities("no alternative person to fill");
  std::sort(names.begin(), names.end());
  Rng rng(DeriveSeed({request.seed, 0xf111}));
  std::string name = names[UniformIndex(rng, names.size())];
  return request.possessive ? name + "'s" : name;
}

namespace {

const std::unordered_map<std::string, std::string>& Synonyms() {
  static const auto* map = new std::unordered_map<std::string, std::string>{
      {"about", "regarding"},   {"buy", "purchase"},     {"buys", "purchases"},
      {"bought", "purchased"},  {"help", "assist"},      {"helps", "assists"},
      {"helped", "assisted"},   {"big", "large"},        {"begin", "start"},
      {"finish", "complete"},   {"finished", "completed"}, {"maybe", "perhaps"},
      {"happy", "glad"},        {"sick", "ill"},         {"movie", "film"},
      {"shop", "store"},        {"present", "gift"},     {"kids", "children"},
      {"talk", "speak"},        {"talks", "speaks"},     {"talked", "spoke"},
      {"quick", "fast"},        {"likes", "enjoys"},     {"wants", "would like"},
      {"car", "vehicle"},       {"tell", "inform"},      {"told", "informed"},
      {"photo", "picture"},     {"reply", "respond"},    {"replied", "responded"},
      {"arrive", "get there"},  {"invites", "asks"},     {"invited", "asked"},
      {"soon", "shortly"},      {"hates", "dislikes"},   {"lunch", "midday meal"},
  };
  return *map;
}

bool IsNegationWord(const std::string& lower) {
  return lower == "not" || lower == "no" || lower == "never" || lower == "'t" ||
         lower == "nobody" || lower == "nothing" || lower == "none" ||
         lower == "neither" || lower == "nor" || lower == "without";
}

std::string MatchCase(const std::string& replacement, const std::string& original) {
  std::string out = replacement;
  if (!original.empty() && IsAsciiUpper(original[0]) && !out.empty() &&
      IsAsciiLower(out[0])) {
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
  }
  return out;
}

struct Edit {
  size_t begin;
  size_t end;
  std::string text;
};

std::string ApplyEdits(std::string_view text, std::vector<Edit> edits) {
  std::sort(edits.begin(), edits.end(),
            [](const Edit& a, const Edit& b) { return a.begin < b.begin; });
  std::string out;
  size_t at = 0;
  for (const Edit& e : edits) {
    out += text.substr(at, e.begin - at);
    out += e.text;
    at = e.end;
  }
  out += text.substr(at);
  return out;
}

std::string ExpandContractions(std::string_view text) {
  const std::vector<Token> toks = TokenizeWithOffsets(text);
  std::vector<Edit> edits;
  for (size_t i = 1; i < toks.size(); ++i) {
    const Token& prev = toks[i - 1];
    const Token& cur = toks[i];
    if (prev.end != cur.begin) continue;
    const std::string clitic = ToLower(cur.text);
    const std::string base = ToLower(prev.text);
    if (clitic == "'t" && base.size() >= 2 && base.back() == 'n') {
      std::string expanded;
      if (base == "can") {
        expanded = MatchCase("cannot", prev.text);
      } else if (base == "won") {
        expanded = MatchCase("will not", prev.text);
      } else if (base == "shan") {
        expanded = MatchCase("shall not", prev.text);
      } else {
        expanded = prev.text.substr(0, prev.text.size() - 1) + " not";
      }
      edits.push_back({prev.begin, cur.end, expanded});
      continue;
    }
    static const std::unordered_map<std::string, std::string> kClitics = {
        {"'re", "are"}, {"'ll", "will"}, {"'ve", "have"}, {"'m", "am"}};
    auto it = kClitics.find(clitic);
    if (it != kClitics.end()) edits.push_back({cur.begin, cur.end, " " + it->second});
  }
  return ApplyEdits(text, std::move(edits));
}

std::string SubstituteSynonyms(std::string_view text) {
  const std::vector<Token> toks = TokenizeWithOffsets(text);
  std::vector<std::string> words;
  for (const Token& t : toks) words.push_back(t.text);
  const std::vector<TaggedToken> tags = LexiconTagger::Default().Tag(words);
  std::vector<Edit> edits;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (tags[i].tag == PosTag::kName || tags[i].tag == PosTag::kNumber) continue;
    const std::string lower = ToLower(words[i]);
    if (IsNegationWord(lower)) continue;
    // Leave the word before a clitic alone ("car's").
    if (i + 1 < toks.size() && toks[i + 1].begin == toks[i].end &&
        toks[i + 1].text[0] == '\'') {
      continue;
    }
    auto it = Synonyms().find(lower);
    if (it == Synonyms().end()) continue;
    edits.push_back({toks[i].begin, toks[i].end, MatchCase(it->second, words[i])});
  }
  return ApplyEdits(text, std::move(edits));
}

// "X because Y." -> "Because Y, X." for a single sentence.
std::string ReorderBecause(const std::string& text) {
  const std::string trimmed = Trim(text);
  if (trimmed.size() < 3 || trimmed.back() != '.') return text;
  const std::string body = trimmed.substr(0, trimmed.size() - 1);
  if (body.find_first_of(".!?") != std::string::npos) return text;
  const size_t at = body.find(" because ");
  if (at == std::string::npos || body.find(" because ", at + 1) != std::string::npos) {
    return text;
  }
  std::string main = Trim(body.substr(0, at));
  const std::string reason = Trim(body.substr(at + 9));
  if (main.empty() || reason.empty() || main.back() == ',') return text;
  const std::vector<std::string> words = Tokenize(main);
  const std::vector<TaggedToken> tags = LexiconTagger::Default().Tag(words);
  const bool keep_case = !tags.empty() && (tags[0].tag == PosTag::kName ||
                                           (tags[0].tag == PosTag::kPronoun && words[0] == "I"));
  if (!keep_case && IsAsciiUpper(main[0])) {
    main[0] = static_cast<char>(main[0] - 'A' + 'a');
  }
  return "Because " + reason + ", " + main + ".";
}

}  // namespace

std::string RuleParaphraser::Paraphrase(std::string_view text) const {
  if (Trim(text).empty()) return std::string(text);
  std::string out = ExpandContractions(text);
  out = SubstituteSynonyms(out);
  out = ReorderBecause(out);
  return out;
}

std::string LeadSummarizer::Summarize(const Dialogue& dialogue) const {
  std::vector<std::string> parts;
  for (size_t i = 0; i < dialogue.turns.size() && i < turns_; ++i) {
    parts.push_back(dialogue.turns[i].speaker + ": " + dialogue.turns[i].text);
  }
  return Join(parts, " ");
}

SummaryRecord MakePositive(const SummaryRecord& anchor,
                           const Paraphraser& paraphraser) {
  if (Trim(anchor.text).empty()) throw ValidationError("cannot paraphrase an empty summary");
  std::string text = paraphraser.Paraphrase(anchor.text);
  if (Trim(text).empty()) throw Error("paraphraser returned empty output");
  return SummaryRecord{anchor.dialogue_id, std::move(text),
                       Provenance::Positive(paraphraser.method())};
}

ContrastiveSample BuildContrastiveSample(const CorpusPair& pair,
                                         const Summarizer* summarizer,
                                         const Paraphraser& paraphraser,
                                         const Infiller& infiller,
                                         const SampleConfig& config,
                                         uint64_t seed) {
  const SummaryRecord& anchor = pair.reference;
  if (Trim(anchor.text).empty()) {
    throw ValidationError("empty reference for dialogue '" + pair.dialogue.id + "'");
  }
  ContrastiveSample sample;
  sample.dialogue_id = pair.dialogue.id;
  sample.anchor = anchor;
  sample.anchor.dialogue_id = pair.dialogue.id;

  SummaryRecord previous = sample.anchor;
  for (size_t k = 0; k < config.n_positives; ++k) {
    previous = MakePositive(previous, paraphraser);
    sample.positives.push_back(previous);
  }

  const Dialogue& d = pair.dialogue;
  for (size_t s = 0; s < kAllStrategies.size(); ++s) {
    const StrategyTag tag = kAllStrategies[s];
    if (!config.strategies.contains(tag)) continue;
    const bool needs_model = tag == StrategyTag::kNumberMask ||
                             tag == StrategyTag::kUtteranceDelete ||
                             tag == StrategyTag::kCorefCorrupt;
    if (needs_model && summarizer == nullptr) continue;
    auto run = [&](uint64_t strategy_seed) -> std::string {
      switch (tag) {
        case StrategyTag::kNounSwap:
          return SwapNouns(anchor.text, strategy_seed);
        case StrategyTag::kVerbSwap:
          return SwapVerbs(anchor.text, strategy_seed);
        case StrategyTag::kNumberMask:
          return MaskNumbersAndGenerate(d, *summarizer, config.mask_token).text;
        case StrategyTag::kUtteranceDelete:
          return DeleteUtterancesAndGenerate(d, config.delete_ratio, *summarizer,
                                             strategy_seed)
              .text;
        case StrategyTag::kCorefCorrupt:
          return CorruptCoreferenceAndGenerate(d, infiller, *summarizer, strategy_seed)
              .text;
      }
      return anchor.text;
    };
    const uint64_t strategy_seed = DeriveSeed({seed, s});
    try {
      std::string text = run(strategy_seed);
      if (text == anchor.text) text = run(strategy_seed + 1);
      if (text == anchor.text || Trim(text).empty()) continue;
      sample.negatives.push_back(
          SummaryRecord{d.id, std::move(text), Provenance::Negative(tag)});
    } catch (const StrategyInapplicable&) {
      continue;
    }
  }
  if (sample.negatives.empty()) {
    throw SampleUnbuildable("no negative strategy applies to dialogue '" + d.id + "'");
  }
  return sample;
}

}  // namespace confit
