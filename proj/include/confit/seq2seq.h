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

// Compact transformer encoder-decoder: word vocabulary, dialogue
// linearization, teacher-forced decoding, generation and checkpoints.

#ifndef CONFIT_SEQ2SEQ_H_
#define CONFIT_SEQ2SEQ_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "confit/autograd.h"
#include "confit/corpus.h"
#include "confit/negsample.h"
#include "json.hpp"

namespace confit {

// Word-level, case-preserving vocabulary. Ids 0..5 are reserved:
//   0 <pad>, 1 <unk>, 2 <s> (bos), 3 </s> (eos), 4 <mask>, 5 <sep>.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;
  static constexpr int kSep = 5;
  static constexpr int kNumReserved = 6;

  Vocab();
  // Tokens of `texts` with at least min_count occurrences, most frequent
  // first (ties in byte order). max_size bounds the total size including the
// reserved ids; 0 means unbounded.
  static Vocab Build(const std::vector<std::string>& texts, size_t min_count = 1,
                     size_t max_size = 0);
  // Speakers, turn texts and reference summaries of the pairs, plus ":".
  static Vocab FromCorpus(const std::vector<CorpusPair>& pairs,
                          size_t min_count = 1);
  // Full token list as stored in checkpoints, reserved tokens first.
  static Vocab FromTokens(const std::vector<std::string>& tokens);

  // Returns the existing id if present.
  int Add(const std::string& token);
  // kUnk for unknown tokens.
  int Id(std::string_view token) const;
  bool Contains(std::string_view token) const;
  const std::string& Token(int id) const;
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  static bool IsReserved(int id) { return id >= 0 && id < kNumReserved; }

  std::vector<int> Encode(std::string_view text) const;
  // Stops at eos; skips pad and bos. Punctuation and clitics attach to the
  // preceding word.
  std::string Decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

enum class Pooling { kMean, kLastToken };

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 2;
  // 0 means 4 * d_model.
  int ffn_dim = 0;
  // 0 means d_model.
  int classifier_hidden = 0;
  int max_source_len = 512;
  int max_target_len = 128;
  Pooling pooling = Pooling::kMean;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * d_model; }
  int hidden() const { return classifier_hidden > 0 ? classifier_hidden : d_model; }
  // Throws ValidationError for inconsistent dimensions.
  void Validate() const;
};

nlohmann::json ToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

// Trainable arrays plus the configuration and vocabulary they were built for.
class ModelState {
 public:
  struct Attention {
    size_t wq, wk, wv, wo, bo;
  };
  struct Block {
    size_t ln1_g, ln1_b;
    Attention self_attn;
    // Decoder blocks only.
    size_t ln2_g = 0, ln2_b = 0;
    Attention cross_attn{};
    size_t ln_ffn_g, ln_ffn_b;
    size_t w1, b1, w2, b2;
  };

  ModelState() = default;
  // Random initialization; config.vocab_size is taken from vocab.
  static ModelState Initialize(ModelConfig config, Vocab vocab, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  std::vector<ag::Parameter>& parameters() { return params_; }
  const std::vector<ag::Parameter>& parameters() const { return params_; }
  const ag::Parameter& param(size_t index) const { return params_[index]; }
  // Throws std::out_of_range for unknown names.
  const ag::Parameter& param(std::string_view name) const;
  ag::Parameter& mutable_param(std::string_view name);

  size_t NumScalars() const;
  void ZeroGrad();
  bool AllFinite() const;

  size_t embed() const { return embed_; }
  const std::vector<Block>& encoder_blocks() const { return encoder_; }
  const std::vector<Block>& decoder_blocks() const { return decoder_; }
  size_t enc_ln_g() const { return enc_ln_g_; }
  size_t enc_ln_b() const { return enc_ln_b_; }
  size_t dec_ln_g() const { return dec_ln_g_; }
  size_t dec_ln_b() const { return dec_ln_b_; }
  size_t out_w() const { return out_w_; }
  size_t out_b() const { return out_b_; }
  size_t cls_w1() const { return cls_w1_; }
  size_t cls_b1() const { return cls_b1_; }
  size_t cls_w2() const { return cls_w2_; }
  size_t cls_b2() const { return cls_b2_; }

 private:
  friend ModelState LoadCheckpoint(const std::filesystem::path& path);
  // Creates the parameter list with zero values in a fixed order.
  void Layout();
  size_t AddParam(const std::string& name, int rows, int cols);

  ModelConfig config_;
  Vocab vocab_;
  std::vector<ag::Parameter> params_;
  std::unordered_map<std::string, size_t> by_name_;
  size_t embed_ = 0;
  std::vector<Block> encoder_;
  std::vector<Block> decoder_;
  size_t enc_ln_g_ = 0, enc_ln_b_ = 0, dec_ln_g_ = 0, dec_ln_b_ = 0;
  size_t out_w_ = 0, out_b_ = 0;
  size_t cls_w1_ = 0, cls_b1_ = 0, cls_w2_ = 0, cls_b2_ = 0;
};

inline constexpr int kNoTurn = -1;

struct LinearizedDialogue {
  std::vector<int> ids;
  // Owning speaker per token; empty for bos, sep and eos.
  std::vector<std::optional<std::string>> speakers;
  // Turn index per token; kNoTurn for reserved tokens.
  std::vector<int> turns;
  // Set when trailing turns were dropped to respect max_len.
  bool truncated = false;
};

// [bos, speaker tokens, ":", utterance tokens, sep, ..., eos]. Whole turns
// are dropped from the end to fit max_len (0 = unlimited); a first turn that
// alone is too long is cut inside.
LinearizedDialogue Linearize(const Dialogue& dialogue, const Vocab& vocab,
                             size_t max_len = 0);

struct EncoderStates {
  // source_length x d.
  ag::Var C;
  std::vector<int> ids;
  std::vector<std::optional<std::string>> speakers;
  std::vector<int> turns;
  bool truncated = false;

  size_t length() const { return ids.size(); }
};

// Throws std::out_of_range for ids outside the vocabulary.
EncoderStates Encode(ag::Graph& graph, const ModelState& model,
                     const LinearizedDialogue& source);
EncoderStates Encode(ag::Graph& graph, const ModelState& model,
                     const Dialogue& dialogue);

struct DecoderOutput {
  // target_length x vocab. Row l scores the token that follows input
  // position l and depends only on input positions 0..l.
  ag::Var logits;
  // target_length x d, final decoder layer after normalization.
  ag::Var states;
};

// `input` must begin with bos.
DecoderOutput DecodeTeacherForced(ag::Graph& graph, const ModelState& model,
                                  const EncoderStates& source,
                                  std::span<const int> input);

// Decoder input [bos, y_1..y_T] and aligned labels [y_1..y_T, eos] for a
// summary, truncated to max_target_len.
struct TeacherForcingPair {
  std::vector<int> input;
  std::vector<int> labels;
};
TeacherForcingPair MakeTeacherForcingPair(const ModelState& model,
                                          std::string_view summary);

// Mean (or last) of decoder states over the summary positions; pad inputs
// are excluded. `input` is a TeacherForcingPair::input, possibly pad-extended.
ag::Var PoolSummaryStates(const DecoderOutput& output, std::span<const int> input,
                          Pooling pooling);
// 1 x d representation of `summary` given the dialogue. Throws
// ValidationError for an empty summary.
ag::Var SummaryRepresentation(ag::Graph& graph, const ModelState& model,
                              const EncoderStates& source, std::string_view summary);
ag::Var SummaryRepresentation(ag::Graph& graph, const ModelState& model,
                              const Dialogue& dialogue, std::string_view summary);

struct DecodeStrategy {
  // 1 is greedy search.
  int beam_size = 1;

  static DecodeStrategy Greedy() { return {1}; }
  static DecodeStrategy Beam(int k) { return {k}; }
};

// Generated ids without the leading bos; the last id is eos unless max_len
// was reached first. Ties go to the lower token id.
std::vector<int> Generate(const ModelState& model, const EncoderStates& source,
                          size_t max_len,
                          DecodeStrategy strategy = DecodeStrategy::Greedy());

// Sum of log-probabilities of `ids` (as returned by Generate).
double SequenceLogProb(const ModelState& model, const EncoderStates& source,
                       std::span<const int> ids);

// Summarizer backed by a model. The model must outlive the summarizer.
class ModelSummarizer : public Summarizer {
 public:
  explicit ModelSummarizer(const ModelState& model, size_t max_len = 0,
                           DecodeStrategy strategy = DecodeStrategy::Greedy())
      : model_(model), max_len_(max_len), strategy_(strategy) {}

  std::string Summarize(const Dialogue& dialogue) const override;

 private:
  const ModelState& model_;
  size_t max_len_;
  DecodeStrategy strategy_;
};

inline constexpr int kCheckpointVersion = 1;

// Writes a magic line, a one-line JSON header (version, config, vocab, array
// names, shapes and offsets) and the raw float64 data.
void SaveCheckpoint(const ModelState& model, const std::filesystem::path& path);
// Throws CheckpointError for missing, truncated or foreign files.
ModelState LoadCheckpoint(const std::filesystem::path& path);

}  // namespace confit

#endif  // CONFIT_SEQ2SEQ_H_
