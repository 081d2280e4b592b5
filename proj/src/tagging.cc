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

#include "confit/tagging.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "confit/error.h"
#include "confit/text_util.h"

namespace confit {
namespace internal {
// Generated at build time from resources/default_lexicon.tsv.
extern const char kDefaultLexiconTsv[];
}  // namespace internal

namespace {

bool IsSplitPunct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' ||
         c == ':' || c == '"';
}

bool IsInternalSeparator(char c) { return c == '.' || c == ',' || c == ':'; }

bool HasWordChar(std::string_view s) {
  return std::any_of(s.begin(), s.end(), IsWordChar);
}

bool IsDigitRun(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), IsAsciiDigit);
}

const std::unordered_set<std::string>& PossessivePronouns() {
  static const auto* set = new std::unordered_set<std::string>{
      "my", "your", "his", "her", "its", "our", "their"};
  return *set;
}

bool IsSentenceInitial(const std::vector<std::string>& tokens, size_t i) {
  if (i == 0) return true;
  const std::string& prev = tokens[i - 1];
  return prev == "." || prev == "!" || prev == "?" || prev == "\"";
}

bool HasNounSuffix(std::string_view w) {
  auto check = [](std::string_view s) {
    for (std::string_view suffix : {"tion", "sion", "ness", "ment", "ity"}) {
      if (s.size() > suffix.size() + 1 && s.ends_with(suffix)) return true;
    }
    return false;
  };
  // Plurals: "payments", "kindnesses".
  if (check(w)) return true;
  if (w.ends_with("es") && check(w.substr(0, w.size() - 2))) return true;
  return w.size() > 1 && w.back() == 's' && check(w.substr(0, w.size() - 1));
}

}  // namespace

std::vector<Token> TokenizeWithOffsets(std::string_view text) {
  std::vector<Token> tokens;
  Token current;
  bool open = false;
  auto flush = [&]() {
    if (open) tokens.push_back(std::move(current));
    current = Token{};
    open = false;
  };
  auto append = [&](size_t i) {
    if (!open) {
      current.begin = i;
      open = true;
    }
    current.text += text[i];
    current.end = i + 1;
  };
  auto single = [&](size_t i) {
    flush();
    tokens.push_back(Token{std::string(1, text[i]), i, i + 1});
  };

  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (IsSpace(c)) {
      flush();
      continue;
    }
    const bool prev_word = open && i > 0 && IsWordChar(text[i - 1]);
    const bool next_word = i + 1 < text.size() && IsWordChar(text[i + 1]);
    const bool next_alpha = i + 1 < text.size() && IsAsciiAlpha(text[i + 1]);
    if (IsInternalSeparator(c) && prev_word && next_word) {
      append(i);
    } else if (IsSplitPunct(c)) {
      single(i);
    } else if (c == '\'') {
      if (next_alpha && (prev_word || !open)) {
        flush();
        append(i);
      } else {
        single(i);
      }
    } else {
      append(i);
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (Token& t : TokenizeWithOffsets(text)) out.push_back(std::move(t.text));
  return out;
}

std::string_view PosTagName(PosTag tag) {
  switch (tag) {
    case PosTag::kNoun:
      return "Noun";
    case PosTag::kVerb:
      return "Verb";
    case PosTag::kNumber:
      return "Number";
    case PosTag::kPronoun:
      return "Pronoun";
    case PosTag::kName:
      return "Name";
    case PosTag::kOther:
      return "Other";
  }
  return "Other";
}

LexiconTagger LexiconTagger::FromStream(std::istream& in) {
  LexiconTagger tagger;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError("lexicon line " + std::to_string(line_number) +
                            ": expected token<TAB>tag");
    }
    const std::string token = ToLower(line.substr(0, tab));
    const std::string tag = Trim(line.substr(tab + 1));
    Entry entry;
    if (tag == "Pronoun") {
      entry = Entry::kPronoun;
    } else if (tag == "Determiner") {
      entry = Entry::kDeterminer;
    } else if (tag == "Other") {
      entry = Entry::kOther;
    } else if (tag == "Noun") {
      entry = Entry::kNoun;
    } else if (tag == "Verb") {
      entry = Entry::kVerb;
    } else if (tag == "Name" || tag == "NameMale" || tag == "NameFemale") {
      entry = Entry::kName;
      if (tag != "Name") {
        tagger.genders_[token] = tag == "NameMale" ? Gender::kMale : Gender::kFemale;
      }
    } else {
      throw ValidationError("lexicon line " + std::to_string(line_number) +
                            ": unknown tag '" + tag + "'");
    }
    tagger.entries_.emplace(token, entry);
  }
  return tagger;
}

LexiconTagger LexiconTagger::FromFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open lexicon " + path.string());
  return FromStream(in);
}

const LexiconTagger& LexiconTagger::Default() {
  static const LexiconTagger* tagger = [] {
    std::istringstream in(internal::kDefaultLexiconTsv);
    return new LexiconTagger(FromStream(in));
  }();
  return *tagger;
}

Gender LexiconTagger::NameGender(std::string_view name) const {
  auto it = genders_.find(ToLower(name));
  return it == genders_.end() ? Gender::kUnknown : it->second;
}

bool LexiconTagger::IsVerbForm(std::string_view lower) const {
  auto is_stem = [&](std::string_view s) {
    if (s.size() < 2) return false;
    auto it = entries_.find(std::string(s));
    return it != entries_.end() && it->second == Entry::kVerb;
  };
  if (is_stem(lower)) return true;
  const std::string w(lower);
  auto strip = [&](size_t n) { return std::string_view(w).substr(0, w.size() - n); };
  auto doubled = [&](std::string_view s) {
    return s.size() >= 3 && s[s.size() - 1] == s[s.size() - 2] &&
           is_stem(s.substr(0, s.size() - 1));
  };
  if (w.ends_with("ing") && w.size() > 4) {
    const auto s = strip(3);
    if (is_stem(s) || is_stem(std::string(s) + "e") || doubled(s)) return true;
  }
  if (w.ends_with("ied") || w.ends_with("ies")) {
    if (is_stem(std::string(strip(3)) + "y")) return true;
  }
  if (w.ends_with("ed") && w.size() > 3) {
    const auto s = strip(2);
    if (is_stem(s) || is_stem(strip(1)) || doubled(s)) return true;
  }
  if (w.ends_with("es") && w.size() > 3 && is_stem(strip(2))) return true;
  if (w.ends_with("s") && w.size() > 2 && is_stem(strip(1))) return true;
  return false;
}

std::vector<TaggedToken> LexiconTagger::Tag(
    const std::vector<std::string>& tokens) const {
  std::vector<TaggedToken> out;
  out.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    const std::string lower = ToLower(tok);
    auto find = [&](const std::string& key) {
      auto it = entries_.find(key);
      return it == entries_.end() ? std::optional<Entry>() : it->second;
    };
    const std::optional<Entry> entry = find(lower);
    auto open_class = [&]() -> std::optional<PosTag> {
      if (entry == Entry::kNoun) return PosTag::kNoun;
      if (entry == Entry::kVerb) return PosTag::kVerb;
      if (entry == Entry::kName) return PosTag::kName;
      if (IsVerbForm(lower)) return PosTag::kVerb;
      if (lower.size() > 2 && lower.back() == 's' &&
          find(lower.substr(0, lower.size() - 1)) == Entry::kNoun) {
        return PosTag::kNoun;
      }
      if (HasNounSuffix(lower)) return PosTag::kNoun;
      return std::nullopt;
    };

    PosTag tag = PosTag::kOther;
    if (IsNumberToken(tok)) {
      tag = PosTag::kNumber;
    } else if (!HasWordChar(tok) || tok[0] == '\'') {
      tag = PosTag::kOther;
    } else if (entry == Entry::kPronoun) {
      tag = PosTag::kPronoun;
    } else if (entry == Entry::kDeterminer || entry == Entry::kOther) {
      tag = PosTag::kOther;
    } else if (IsAsciiUpper(tok[0])) {
      if (!IsSentenceInitial(tokens, i)) {
        tag = PosTag::kName;
      } else {
        tag = open_class().value_or(PosTag::kName);
      }
    } else if (auto t = open_class()) {
      tag = *t;
    } else if (i > 0) {
      const std::string prev = ToLower(tokens[i - 1]);
      if (find(prev) == Entry::kDeterminer || PossessivePronouns().contains(prev)) {
        tag = PosTag::kNoun;
      }
    }
    out.push_back(TaggedToken{tok, static_cast<int>(i), tag});
  }
  return out;
}

std::vector<TaggedToken> TagPos(const std::vector<std::string>& tokens,
                                const Tagger& tagger) {
  return tagger.Tag(tokens);
}

bool IsNumberToken(std::string_view token) {
  if (token.empty() || !IsAsciiDigit(token[0])) return false;
  if (IsDigitRun(token)) return true;
  // Ordinals: 1st, 2nd, 3rd, 4th, 21st ...
  if (token.size() >= 3) {
    const std::string suffix = ToLower(token.substr(token.size() - 2));
    if ((suffix == "st" || suffix == "nd" || suffix == "rd" || suffix == "th") &&
        IsDigitRun(token.substr(0, token.size() - 2))) {
      return true;
    }
  }
  // Digit groups joined by separators: 2:30, 1,000, 3.5.
  size_t start = 0;
  for (size_t i = 0; i <= token.size(); ++i) {
    if (i == token.size() || IsInternalSeparator(token[i])) {
      if (!IsDigitRun(token.substr(start, i - start))) return false;
      start = i + 1;
    } else if (!IsAsciiDigit(token[i])) {
      return false;
    }
  }
  return true;
}

std::vector<size_t> FindNumbers(const std::vector<std::string>& tokens) {
  std::vector<size_t> out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (IsNumberToken(tokens[i])) out.push_back(i);
  }
  return out;
}

bool IsFirstPersonPronoun(std::string_view token) {
  static const auto* set = new std::unordered_set<std::string>{
      "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves"};
  return set->contains(ToLower(token));
}

namespace {

std::optional<Gender> ThirdPersonGender(const std::string& lower) {
  if (lower == "he" || lower == "him" || lower == "his" || lower == "himself") {
    return Gender::kMale;
  }
  if (lower == "she" || lower == "her" || lower == "hers" || lower == "herself") {
    return Gender::kFemale;
  }
  return std::nullopt;
}

std::string FirstWord(const std::string& s) {
  const size_t space = s.find(' ');
  return space == std::string::npos ? s : s.substr(0, space);
}

}  // namespace

std::vector<MentionCluster> HeuristicCorefResolver::Resolve(
    const Dialogue& dialogue, const std::string* summary) const {
  std::vector<MentionCluster> clusters;
  std::vector<Gender> genders;
  std::unordered_map<std::string, size_t> by_entity;
  // Cluster indices in order of mention, most recent last.
  std::vector<size_t> recency;

  std::vector<std::string> speakers;
  for (const Turn& t : dialogue.turns) {
    if (std::find(speakers.begin(), speakers.end(), t.speaker) == speakers.end()) {
      speakers.push_back(t.speaker);
    }
  }
  auto match_speaker = [&](const std::string& tok) -> std::optional<std::string> {
    for (const std::string& s : speakers) {
      if (tok == s || tok == FirstWord(s) || (tok.size() >= 3 && s.starts_with(tok))) {
        return s;
      }
    }
    return std::nullopt;
  };
  auto cluster_for = [&](const std::string& entity) {
    auto it = by_entity.find(entity);
    if (it != by_entity.end()) return it->second;
    clusters.push_back(MentionCluster{entity, {}});
    genders.push_back(tagger_.NameGender(FirstWord(entity)));
    by_entity.emplace(entity, clusters.size() - 1);
    return clusters.size() - 1;
  };
  auto add = [&](size_t cluster, Mention m) {
    clusters[cluster].mentions.push_back(std::move(m));
    recency.push_back(cluster);
  };

  auto process = [&](int turn, const std::string& text, const std::string* speaker) {
    const std::vector<Token> toks = TokenizeWithOffsets(text);
    std::vector<std::string> words;
    for (const Token& t : toks) words.push_back(t.text);
    const std::vector<TaggedToken> tags = tagger_.Tag(words);
    for (size_t i = 0; i < toks.size(); ++i) {
      const std::string lower = ToLower(words[i]);
      Mention m;
      m.turn = turn;
      m.token_begin = i;
      m.token_end = i + 1;
      m.char_begin = toks[i].begin;
      m.char_end = toks[i].end;
      m.surface = words[i];
      const bool next_is_noun = i + 1 < toks.size() && tags[i + 1].tag == PosTag::kNoun;

      if (IsFirstPersonPronoun(lower)) {
        if (speaker == nullptr) continue;
        m.kind = Mention::Kind::kFirstPerson;
        m.possessive = lower == "my" || lower == "our" || lower == "mine" ||
                       lower == "ours";
        add(cluster_for(*speaker), std::move(m));
      } else if (auto gender = ThirdPersonGender(lower)) {
        m.kind = Mention::Kind::kThirdPerson;
        m.possessive = lower == "his" || lower == "hers" ||
                       (lower == "her" && next_is_noun);
        std::optional<size_t> target;
        for (auto it = recency.rbegin(); it != recency.rend(); ++it) {
          const MentionCluster& c = clusters[*it];
          if (!c.entity) continue;
          if (speaker != nullptr && *c.entity == *speaker) continue;
          const Gender g = genders[*it];
          if (g == Gender::kUnknown || g == *gender) {
            target = *it;
            break;
          }
        }
        if (target) {
          add(*target, std::move(m));
        } else {
          clusters.push_back(MentionCluster{std::nullopt, {}});
          genders.push_back(*gender);
          add(clusters.size() - 1, std::move(m));
        }
      } else if (tags[i].tag == PosTag::kName) {
        m.kind = Mention::Kind::kName;
        if (auto s = match_speaker(words[i])) {
          add(cluster_for(*s), std::move(m));
        } else if (!IsSentenceInitial(words, i) ||
                   tagger_.NameGender(words[i]) != Gender::kUnknown) {
          add(cluster_for(words[i]), std::move(m));
        }
      }
    }
  };

  for (size_t t = 0; t < dialogue.turns.size(); ++t) {
    process(static_cast<int>(t), dialogue.turns[t].text, &dialogue.turns[t].speaker);
  }
  if (summary != nullptr) process(kSummaryTurn, *summary, nullptr);
  return clusters;
}

std::vector<MentionCluster> FindPersonMentions(const Dialogue& dialogue,
                                               const std::string* summary,
                                               const CorefResolver& resolver) {
  return resolver.Resolve(dialogue, summary);
}

std::vector<MentionCluster> FindPersonMentions(const Dialogue& dialogue,
                                               const std::string* summary) {
  static const HeuristicCorefResolver resolver;
  return resolver.Resolve(dialogue, summary);
}

}  // namespace confit
