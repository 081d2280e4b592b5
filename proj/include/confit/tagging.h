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

// Rule-based linguistic analyzers used by the negative-sample generators.
// Both the tagger and the coreference resolver are interfaces; the bundled
// implementations are deterministic and dependency free.

#ifndef CONFIT_TAGGING_H_
#define CONFIT_TAGGING_H_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "confit/corpus.h"

namespace confit {

struct Token {
  std::string text;
  // Byte offsets into the source text, [begin, end).
  size_t begin = 0;
  size_t end = 0;
};

// Whitespace tokenization with .,!?;:'" split off as separate tokens.
// '.', ',' and ':' between two word characters stay inside the token
// ("p.m", "2:30", "1,000"); an apostrophe between a word character and a
// letter starts a clitic token ("Mike's" -> "Mike", "'s").
std::vector<std::string> Tokenize(std::string_view text);
std::vector<Token> TokenizeWithOffsets(std::string_view text);

enum class PosTag { kNoun, kVerb, kNumber, kPronoun, kName, kOther };

std::string_view PosTagName(PosTag tag);

struct TaggedToken {
  std::string token;
  int index = 0;
  PosTag tag = PosTag::kOther;
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  // Exactly one tag per input token, in order.
  virtual std::vector<TaggedToken> Tag(
      const std::vector<std::string>& tokens) const = 0;
};

enum class Gender { kUnknown, kMale, kFemale };

// Closed-class lexicon plus suffix and capitalization heuristics. The lexicon
// is a text resource of "token<TAB>tag" lines where tag is one of Pronoun,
// Determiner, Other, Noun, Verb, Name, NameMale, NameFemale. Verb entries are
// stems: inflections with -s/-es/-ed/-d/-ing are recognized from them.
class LexiconTagger : public Tagger {
 public:
  static LexiconTagger FromStream(std::istream& in);
  static LexiconTagger FromFile(const std::filesystem::path& path);
  // The lexicon compiled into the library.
  static const LexiconTagger& Default();

  std::vector<TaggedToken> Tag(
      const std::vector<std::string>& tokens) const override;

  Gender NameGender(std::string_view name) const;
  bool IsVerbForm(std::string_view lower) const;
  size_t size() const { return entries_.size(); }

 private:
  enum class Entry { kPronoun, kDeterminer, kOther, kNoun, kVerb, kName };

  std::unordered_map<std::string, Entry> entries_;
  std::unordered_map<std::string, Gender> genders_;
};

std::vector<TaggedToken> TagPos(const std::vector<std::string>& tokens,
                                const Tagger& tagger = LexiconTagger::Default());

bool IsNumberToken(std::string_view token);
// Indices of number tokens, ascending: all digits, digit groups joined by
// ':' ',' or '.', and ordinals such as "2nd".
std::vector<size_t> FindNumbers(const std::vector<std::string>& tokens);

inline constexpr int kSummaryTurn = -1;

struct Mention {
  enum class Kind { kName, kFirstPerson, kThirdPerson };

  // Turn index within the dialogue, or kSummaryTurn.
  int turn = kSummaryTurn;
  // Token span [token_begin, token_end) in Tokenize() of that text.
  size_t token_begin = 0;
  size_t token_end = 0;
  // Byte span in that text.
  size_t char_begin = 0;
  size_t char_end = 0;
  std::string surface;
  Kind kind = Kind::kName;
  // Pronoun followed by a noun, or an inherently possessive form.
  bool possessive = false;
};

struct MentionCluster {
  // Canonical person name; absent for unresolved pronouns.
  std::optional<std::string> entity;
  std::vector<Mention> mentions;
};

class CorefResolver {
 public:
  virtual ~CorefResolver() = default;
  virtual std::vector<MentionCluster> Resolve(
      const Dialogue& dialogue, const std::string* summary) const = 0;
};

// Speaker-name clusters from exact and prefix matches, first-person pronouns
// bound to the current speaker, third-person pronouns bound to the most
// recent gender-compatible name.
class HeuristicCorefResolver : public CorefResolver {
 public:
  explicit HeuristicCorefResolver(
      const LexiconTagger& tagger = LexiconTagger::Default())
      : tagger_(tagger) {}

  std::vector<MentionCluster> Resolve(const Dialogue& dialogue,
                                      const std::string* summary) const override;

 private:
  const LexiconTagger& tagger_;
};

std::vector<MentionCluster> FindPersonMentions(
    const Dialogue& dialogue, const std::string* summary = nullptr);
std::vector<MentionCluster> FindPersonMentions(const Dialogue& dialogue,
                                               const std::string* summary,
                                               const CorefResolver& resolver);

bool IsFirstPersonPronoun(std::string_view token);

}  // namespace confit

#endif  // CONFIT_TAGGING_H_
