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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/text_util.h"
#include "synthetic.h"

namespace confit {
namespace {

Dialogue MakeDialogue(std::vector<Turn> turns) {
  Dialogue d;
  d.id = "d";
  d.turns = std::move(turns);
  return d;
}

std::vector<std::string> SortedTokens(std::string_view text) {
  auto t = Tokenize(text);
  std::sort(t.begin(), t.end());
  return t;
}

size_t CountNumbers(const Dialogue& d) {
  size_t n = 0;
  for (const Turn& t : d.turns) n += FindNumbers(Tokenize(t.text)).size();
  return n;
}

// Echoes the dialogue; makes generate-through-model strategies observable.
class EchoSummarizer : public Summarizer {
 public:
  std::string Summarize(const Dialogue& d) const override { return d.Render(); }
};

TEST(SwapNouns, NameExample) {
  EXPECT_EQ(SwapNouns("Mohit asked Darlene about the test", 0),
            "Darlene asked Mohit about the test");
}

TEST(SwapNouns, OnlyLegalPair) {
  EXPECT_EQ(SwapNouns("Tara raised her glass", 0), "glass raised her Tara");
  EXPECT_EQ(SwapNouns("Tara raised her glass", 12345), "glass raised her Tara");
}

TEST(SwapNouns, NothingToSwap) {
  EXPECT_THROW(SwapNouns("She left.", 0), NoSwapPossible);
  // Same surface twice is not a swap.
  EXPECT_THROW(SwapNouns("the car and the car", 0), NoSwapPossible);
}

TEST(SwapVerbs, SingleLegalSwap) {
  EXPECT_EQ(SwapVerbs("Justin likes books and hates tests", 3),
            "Justin hates books and likes tests");
  EXPECT_THROW(SwapVerbs("Justin likes books", 3), NoSwapPossible);
}

TEST(SwapVerbs, DeterministicPerSeed) {
  const std::string s = "Tom will buy the cake, cook dinner, wash the dishes and call Anna.";
  for (uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(SwapVerbs(s, seed), SwapVerbs(s, seed));
  }
}

// Properties: token multiset preserved, output differs from input.
TEST(Swaps, PreserveTokenMultiset) {
  for (const CorpusPair& p : testing::ChatCorpus(150, 21)) {
    const std::string& s = p.reference.text;
    for (uint64_t seed = 0; seed < 3; ++seed) {
      const std::string n = SwapNouns(s, seed);
      EXPECT_NE(n, s);
      EXPECT_EQ(SortedTokens(n), SortedTokens(s)) << s << " -> " << n;
      const std::string v = SwapVerbs(s, seed);
      EXPECT_NE(v, s);
      EXPECT_EQ(SortedTokens(v), SortedTokens(s)) << s << " -> " << v;
    }
  }
}

TEST(MaskNumbers, ReplacesHour) {
  const Dialogue d = MakeDialogue({{"Amanda", "Meet at 2 p.m. on the 3rd?"}, {"Tom", "ok"}});
  const Dialogue masked = MaskNumbers(d);
  EXPECT_EQ(masked.turns[0].text, "Meet at <mask> p.m. on the <mask>?");
  EXPECT_EQ(masked.turns[1].text, "ok");
  EXPECT_EQ(CountNumbers(masked), 0u);
}

TEST(MaskNumbers, NoDigits) {
  const Dialogue d = MakeDialogue({{"Amanda", "no numbers"}});
  EXPECT_THROW(MaskNumbers(d), NoNumbersFound);
  EchoSummarizer echo;
  EXPECT_THROW(MaskNumbersAndGenerate(d, echo), NoNumbersFound);
}

TEST(MaskNumbers, GenerateWrapsSummarizerOutput) {
  const Dialogue d = MakeDialogue({{"Amanda", "at 2 p.m."}});
  EchoSummarizer echo;
  const SummaryRecord r = MaskNumbersAndGenerate(d, echo, "[M]");
  EXPECT_EQ(r.text, "Amanda: at [M] p.m.");
  EXPECT_EQ(r.provenance, Provenance::Negative(StrategyTag::kNumberMask));
  EXPECT_EQ(r.dialogue_id, "d");
}

TEST(MaskNumbers, TotalOverCorpus) {
  for (const CorpusPair& p : testing::ChatCorpus(100, 4)) {
    ASSERT_GT(CountNumbers(p.dialogue), 0u);
    EXPECT_EQ(CountNumbers(MaskNumbers(p.dialogue)), 0u);
  }
}

Dialogue Numbered(size_t n) {
  Dialogue d;
  d.id = "n";
  for (size_t i = 0; i < n; ++i) {
    d.turns.push_back({i % 2 ? "B" : "A", "turn " + std::to_string(i)});
  }
  return d;
}

TEST(DeleteUtterances, TenTurns) {
  EXPECT_EQ(DeletionCount(10, 0.3), 3u);
  EXPECT_EQ(DeleteUtterances(Numbered(10), 0.3, 1).turns.size(), 7u);
}

TEST(DeleteUtterances, AtLeastOne) {
  EXPECT_EQ(DeletionCount(2, 0.3), 1u);
  EXPECT_EQ(DeleteUtterances(Numbered(2), 0.3, 1).turns.size(), 1u);
}

TEST(DeleteUtterances, Errors) {
  EXPECT_THROW(DeleteUtterances(Numbered(1), 0.3, 1), TooFewTurns);
  EXPECT_THROW(DeleteUtterances(Numbered(4), 0.0, 1), ValidationError);
  EXPECT_THROW(DeleteUtterances(Numbered(4), 1.0, 1), ValidationError);
}

TEST(DeleteUtterances, DeterministicAndOrderPreserving) {
  for (size_t n = 2; n < 30; ++n) {
    const Dialogue d = Numbered(n);
    for (uint64_t seed = 0; seed < 10; ++seed) {
      const Dialogue a = DeleteUtterances(d, 0.3, seed);
      EXPECT_EQ(a, DeleteUtterances(d, 0.3, seed));
      const size_t expected = std::max<size_t>(1, static_cast<size_t>(std::floor(0.3 * n)));
      EXPECT_EQ(d.turns.size() - a.turns.size(), expected);
      ASSERT_GE(a.turns.size(), 1u);
      // Remaining turns form a subsequence of the original.
      size_t j = 0;
      for (const Turn& t : a.turns) {
        while (j < d.turns.size() && !(d.turns[j] == t)) ++j;
        ASSERT_LT(j, d.turns.size());
        ++j;
      }
    }
  }
}

TEST(DeleteUtterances, DifferentSeedsVary) {
  std::set<std::vector<std::string>> seen;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    std::vector<std::string> kept;
    for (const Turn& t : DeleteUtterances(Numbered(10), 0.3, seed).turns) kept.push_back(t.text);
    seen.insert(kept);
  }
  EXPECT_GT(seen.size(), 5u);
}

TEST(CorruptMention, PossessiveBecomesOtherSpeaker) {
  const Dialogue d = MakeDialogue({{"Mike", "I took my car"}, {"Ernest", "Oh no"}});
  const auto clusters = FindPersonMentions(d);
  const MentionCluster* mike = nullptr;
  for (const auto& c : clusters) {
    if (c.entity == std::optional<std::string>("Mike")) mike = &c;
  }
  ASSERT_NE(mike, nullptr);
  const Mention* my = nullptr;
  for (const Mention& m : mike->mentions) {
    if (m.surface == "my") my = &m;
  }
  ASSERT_NE(my, nullptr);
  const CorefCorruption c = CorruptMention(d, *mike, *my, NameSwapInfiller(), 0);
  EXPECT_EQ(c.dialogue.turns[0].text, "I took Ernest's car");
  EXPECT_EQ(c.original, "my");
  EXPECT_EQ(c.replacement, "Ernest's");
  EXPECT_EQ(c.turn, 0);
  EXPECT_EQ(c.dialogue.turns[1], d.turns[1]);
}

TEST(CorruptCoreference, NeedsTwoEntities) {
  const Dialogue d = MakeDialogue({{"Mike", "I am home"}, {"Mike", "the weather is nice"}});
  EXPECT_THROW(CorruptCoreference(d, NameSwapInfiller(), 0), NotEnoughEntities);
}

class MaskEchoInfiller : public Infiller {
 public:
  std::string Fill(const InfillRequest& r) const override { return r.mask_token; }
};

TEST(CorruptCoreference, InfillerMayNotReturnMask) {
  const CorpusPair p = testing::ChatPair(1, "x");
  EXPECT_THROW(CorruptCoreference(p.dialogue, MaskEchoInfiller(), 0), Error);
}

// Exactly one contiguous span of one turn changes, and a person mention
// differs afterwards.
TEST(CorruptCoreference, SingleSpanChange) {
  for (const CorpusPair& p : testing::ChatCorpus(150, 8)) {
    for (uint64_t seed = 0; seed < 3; ++seed) {
      const CorefCorruption c = CorruptCoreference(p.dialogue, NameSwapInfiller(), seed);
      EXPECT_EQ(c, CorruptCoreference(p.dialogue, NameSwapInfiller(), seed));
      ASSERT_EQ(c.dialogue.turns.size(), p.dialogue.turns.size());
      int changed = 0;
      for (size_t t = 0; t < c.dialogue.turns.size(); ++t) {
        const std::string& a = p.dialogue.turns[t].text;
        const std::string& b = c.dialogue.turns[t].text;
        EXPECT_EQ(c.dialogue.turns[t].speaker, p.dialogue.turns[t].speaker);
        if (a == b) continue;
        ++changed;
        EXPECT_EQ(static_cast<int>(t), c.turn);
        size_t pre = 0;
        while (pre < a.size() && pre < b.size() && a[pre] == b[pre]) ++pre;
        size_t suf = 0;
        while (suf < a.size() - pre && suf < b.size() - pre &&
               a[a.size() - 1 - suf] == b[b.size() - 1 - suf]) {
          ++suf;
        }
        const std::string removed = a.substr(pre, a.size() - pre - suf);
        const std::string inserted = b.substr(pre, b.size() - pre - suf);
        EXPECT_NE(c.original.find(removed), std::string::npos);
        EXPECT_NE(c.replacement.find(inserted), std::string::npos);
      }
      EXPECT_EQ(changed, 1);
      EXPECT_NE(c.original, c.replacement);
    }
  }
}

TEST(MakePositive, ExpandsContraction) {
  const SummaryRecord anchor{"d", "Justin doesn't like books", Provenance::Reference()};
  const SummaryRecord pos = MakePositive(anchor, RuleParaphraser());
  EXPECT_EQ(pos.text, "Justin does not like books");
  EXPECT_EQ(pos.provenance, Provenance::Positive("rule_paraphrase"));
  EXPECT_EQ(pos.dialogue_id, "d");
}

TEST(MakePositive, KeepsNamesNumbersAndNegation) {
  const RuleParaphraser para;
  EXPECT_NE(para.Paraphrase("Justin does not like books").find("not"), std::string::npos);
  for (const CorpusPair& p : testing::ChatCorpus(100, 5)) {
    const std::string out = para.Paraphrase(p.reference.text);
    EXPECT_NE(out, p.reference.text);
    const auto in_tokens = Tokenize(p.reference.text);
    const auto tags = TagPos(in_tokens);
    const auto out_tokens = Tokenize(out);
    for (const TaggedToken& t : tags) {
      if (t.tag != PosTag::kName && t.tag != PosTag::kNumber) continue;
      EXPECT_NE(std::find(out_tokens.begin(), out_tokens.end(), t.token), out_tokens.end())
          << t.token << " lost in " << out;
    }
  }
}

TEST(MakePositive, Rewrites) {
  const RuleParaphraser para;
  EXPECT_EQ(para.Paraphrase("Tom can't come because he is sick."),
            "Because he is ill, Tom cannot come.");
  EXPECT_EQ(para.Paraphrase("They're happy about the car."),
            "They are glad regarding the vehicle.");
  EXPECT_EQ(para.Paraphrase("Anna won't buy it, she isn't sure."),
            "Anna will not purchase it, she is not sure.");
}

TEST(MakePositive, EmptyInput) {
  EXPECT_THROW(MakePositive({"d", "  ", Provenance::Reference()}, RuleParaphraser()),
               ValidationError);
}

void CheckSampleInvariants(const ContrastiveSample& s, const CorpusPair& p) {
  EXPECT_EQ(s.dialogue_id, p.dialogue.id);
  EXPECT_EQ(s.anchor, p.reference);
  EXPECT_GE(s.positives.size(), 1u);
  EXPECT_GE(s.negatives.size(), 1u);
  for (const auto& r : s.positives) {
    EXPECT_EQ(r.dialogue_id, s.dialogue_id);
    EXPECT_EQ(r.provenance.kind, Provenance::Kind::kPositive);
  }
  for (const auto& r : s.negatives) {
    EXPECT_EQ(r.dialogue_id, s.dialogue_id);
    EXPECT_EQ(r.provenance.kind, Provenance::Kind::kNegative);
    EXPECT_NE(r.text, s.anchor.text);
  }
}

std::vector<StrategyTag> NegativeTags(const ContrastiveSample& s) {
  std::vector<StrategyTag> tags;
  for (const auto& r : s.negatives) tags.push_back(r.provenance.strategy);
  return tags;
}

TEST(BuildContrastiveSample, RichDialogueGetsAllFive) {
  const CorpusPair p = testing::ChatPair(3, "rich");
  const LeadSummarizer lead;
  const ContrastiveSample s =
      BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), {}, 9);
  CheckSampleInvariants(s, p);
  EXPECT_EQ(NegativeTags(s), std::vector<StrategyTag>(kAllStrategies.begin(), kAllStrategies.end()));
  EXPECT_EQ(s.positives.size(), 1u);
}

TEST(BuildContrastiveSample, NoNumbersSkipsMask) {
  CorpusPair p = testing::ChatPair(3, "nonum");
  for (Turn& t : p.dialogue.turns) {
    for (char& c : t.text) {
      if (IsAsciiDigit(c)) c = 'x';
    }
  }
  const LeadSummarizer lead;
  const ContrastiveSample s =
      BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), {}, 9);
  CheckSampleInvariants(s, p);
  EXPECT_EQ(NegativeTags(s),
            (std::vector<StrategyTag>{StrategyTag::kNounSwap, StrategyTag::kVerbSwap,
                                      StrategyTag::kUtteranceDelete, StrategyTag::kCorefCorrupt}));
}

TEST(BuildContrastiveSample, Unbuildable) {
  CorpusPair p;
  p.dialogue = MakeDialogue({{"Mike", "ok"}});
  p.reference = {"d", "fine.", Provenance::Reference()};
  const LeadSummarizer lead;
  EXPECT_THROW(BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), {}, 1),
               SampleUnbuildable);
}

TEST(BuildContrastiveSample, PositivesCountAndNoSummarizer) {
  const CorpusPair p = testing::ChatPair(4, "p");
  SampleConfig cfg;
  cfg.n_positives = 3;
  const ContrastiveSample s =
      BuildContrastiveSample(p, nullptr, RuleParaphraser(), NameSwapInfiller(), cfg, 2);
  CheckSampleInvariants(s, p);
  EXPECT_EQ(s.positives.size(), 3u);
  EXPECT_EQ(NegativeTags(s), (std::vector<StrategyTag>{StrategyTag::kNounSwap,
                                                       StrategyTag::kVerbSwap}));
}

TEST(BuildContrastiveSample, DiscardsNegativeEqualToAnchor) {
  // A summarizer that always returns the reference yields no usable
  // model-backed negatives.
  class Parrot : public Summarizer {
   public:
    explicit Parrot(std::string s) : s_(std::move(s)) {}
    std::string Summarize(const Dialogue&) const override { return s_; }
   private:
    std::string s_;
  };
  const CorpusPair p = testing::ChatPair(6, "q");
  const Parrot parrot(p.reference.text);
  const ContrastiveSample s =
      BuildContrastiveSample(p, &parrot, RuleParaphraser(), NameSwapInfiller(), {}, 2);
  CheckSampleInvariants(s, p);
  EXPECT_EQ(s.negatives.size(), 2u);
}

TEST(BuildContrastiveSample, DeterministicAndJsonRoundTrip) {
  const LeadSummarizer lead;
  for (const CorpusPair& p : testing::ChatCorpus(30, 12)) {
    const auto a = BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), {}, 5);
    const auto b = BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), {}, 5);
    EXPECT_EQ(ToJson(a), ToJson(b));
    const auto c = ContrastiveSampleFromJson(ToJson(a));
    EXPECT_EQ(c.anchor, a.anchor);
    EXPECT_EQ(c.positives, a.positives);
    EXPECT_EQ(c.negatives, a.negatives);
    CheckSampleInvariants(a, p);
  }
}

TEST(BuildContrastiveSample, StrategySubset) {
  const CorpusPair p = testing::ChatPair(7, "s");
  SampleConfig cfg;
  cfg.strategies = {StrategyTag::kUtteranceDelete};
  const LeadSummarizer lead;
  const auto s = BuildContrastiveSample(p, &lead, RuleParaphraser(), NameSwapInfiller(), cfg, 1);
  EXPECT_EQ(NegativeTags(s), std::vector<StrategyTag>{StrategyTag::kUtteranceDelete});
}

}  // namespace
}  // namespace confit
