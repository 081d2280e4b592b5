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

#include "confit/seq2seq.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/tagging.h"
#include "confit/text_util.h"

namespace confit {
namespace {

using ag::Matrix;
using ag::Var;
using nlohmann::json;

const char* const kReservedTokens[Vocab::kNumReserved] = {
    "<pad>", "<unk>", "<s>", "</s>", "<mask>", "<sep>"};

bool AttachesLeft(const std::string& token) {
  if (token.empty()) return false;
  if (token.size() == 1 && std::string_view(".,!?;:").find(token[0]) != std::string_view::npos) {
    return true;
  }
  return token[0] == '\'' && token.size() > 1;
}

}  // namespace

Vocab::Vocab() {
  for (const char* t : kReservedTokens) Add(t);
}

Vocab Vocab::Build(const std::vector<std::string>& texts, size_t min_count,
                   size_t max_size) {
  std::map<std::string, size_t> counts;
  for (const std::string& text : texts) {
    for (std::string& tok : Tokenize(text)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (const auto& [tok, n] : ordered) {
    if (n < min_count) continue;
    if (max_size > 0 && vocab.size() >= max_size) break;
    vocab.Add(tok);
  }
  return vocab;
}

Vocab Vocab::FromCorpus(const std::vector<CorpusPair>& pairs, size_t min_count) {
  std::vector<std::string> texts = {":"};
  for (const CorpusPair& p : pairs) {
    for (const Turn& t : p.dialogue.turns) {
      texts.push_back(t.speaker);
      texts.push_back(t.text);
    }
    texts.push_back(p.reference.text);
  }
  Vocab vocab = Build(texts, min_count);
  vocab.Add(":");
  return vocab;
}

Vocab Vocab::FromTokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumReserved) throw ValidationError("vocabulary lacks reserved tokens");
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens[static_cast<size_t>(i)] != kReservedTokens[i]) {
      throw ValidationError("vocabulary reserved token mismatch at id " + std::to_string(i));
    }
  }
  Vocab vocab;
  for (size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (vocab.Contains(tokens[i])) throw ValidationError("duplicate vocabulary token '" + tokens[i] + "'");
    vocab.Add(tokens[i]);
  }
  return vocab;
}

int Vocab::Add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::Id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::Contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocab::Token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::Encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& tok : Tokenize(text)) ids.push_back(Id(tok));
  return ids;
}

std::string Vocab::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    const std::string& tok = Token(id);
    if (!out.empty() && !AttachesLeft(tok)) out += ' ';
    out += tok;
  }
  return out;
}

void ModelConfig::Validate() const {
  if (vocab_size <= Vocab::kNumReserved) throw ValidationError("vocab_size too small");
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
    throw ValidationError("d_model must be a positive multiple of heads");
  }
  if (encoder_layers < 1 || decoder_layers < 1) throw ValidationError("need at least one layer per stack");
  if (ffn_dim < 0 || classifier_hidden < 0) throw ValidationError("negative dimension");
  if (max_source_len < 3 || max_target_len < 2) throw ValidationError("maximum lengths too small");
}

json ToJson(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"d_model", c.d_model},
          {"heads", c.heads},                   {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}, {"ffn_dim", c.ffn_dim},
          {"classifier_hidden", c.classifier_hidden},
          {"max_source_len", c.max_source_len}, {"max_target_len", c.max_target_len},
          {"pooling", c.pooling == Pooling::kMean ? "mean" : "last"}};
}

ModelConfig ModelConfigFromJson(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.classifier_hidden = j.at("classifier_hidden").get<int>();
  c.max_source_len = j.at("max_source_len").get<int>();
  c.max_target_len = j.at("max_target_len").get<int>();
  const std::string pooling = j.at("pooling").get<std::string>();
  if (pooling == "mean") {
    c.pooling = Pooling::kMean;
  } else if (pooling == "last") {
    c.pooling = Pooling::kLastToken;
  } else {
    throw ValidationError("unknown pooling '" + pooling + "'");
  }
  return c;
}

size_t ModelState::AddParam(const std::string& name, int rows, int cols) {
  ag::Parameter p;
  p.name = name;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  by_name_.emplace(name, params_.size() - 1);
  return params_.size() - 1;
}

void ModelState::Layout() {
  params_.clear();
  by_name_.clear();
  encoder_.clear();
  decoder_.clear();
  const int d = config_.d_model;
  const int f = config_.ffn();
  const int v = config_.vocab_size;
  embed_ = AddParam("embed", v, d);
  auto attention = [&](const std::string& prefix) {
    Attention a;
    a.wq = AddParam(prefix + ".wq", d, d);
    a.wk = AddParam(prefix + ".wk", d, d);
    a.wv = AddParam(prefix + ".wv", d, d);
    a.wo = AddParam(prefix + ".wo", d, d);
    a.bo = AddParam(prefix + ".bo", 1, d);
    return a;
  };
  auto block = [&](const std::string& prefix, bool cross) {
    Block b;
    b.ln1_g = AddParam(prefix + ".ln1.g", 1, d);
    b.ln1_b = AddParam(prefix + ".ln1.b", 1, d);
    b.self_attn = attention(prefix + ".self_attn");
    if (cross) {
      b.ln2_g = AddParam(prefix + ".ln2.g", 1, d);
      b.ln2_b = AddParam(prefix + ".ln2.b", 1, d);
      b.cross_attn = attention(prefix + ".cross_attn");
    }
    b.ln_ffn_g = AddParam(prefix + ".ln_ffn.g", 1, d);
    b.ln_ffn_b = AddParam(prefix + ".ln_ffn.b", 1, d);
    b.w1 = AddParam(prefix + ".ffn.w1", d, f);
    b.b1 = AddParam(prefix + ".ffn.b1", 1, f);
    b.w2 = AddParam(prefix + ".ffn.w2", f, d);
    b.b2 = AddParam(prefix + ".ffn.b2", 1, d);
    return b;
  };
  for (int l = 0; l < config_.encoder_layers; ++l) {
    encoder_.push_back(block("enc." + std::to_string(l), false));
  }
  enc_ln_g_ = AddParam("enc.ln.g", 1, d);
  enc_ln_b_ = AddParam("enc.ln.b", 1, d);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    decoder_.push_back(block("dec." + std::to_string(l), true));
  }
  dec_ln_g_ = AddParam("dec.ln.g", 1, d);
  dec_ln_b_ = AddParam("dec.ln.b", 1, d);
  out_w_ = AddParam("out.w", d, v);
  out_b_ = AddParam("out.b", 1, v);
  const int h = config_.hidden();
  cls_w1_ = AddParam("cls.w1", 3 * d, h);
  cls_b1_ = AddParam("cls.b1", 1, h);
  cls_w2_ = AddParam("cls.w2", h, 1);
  cls_b2_ = AddParam("cls.b2", 1, 1);
}

ModelState ModelState::Initialize(ModelConfig config, Vocab vocab, uint64_t seed) {
  config.vocab_size = static_cast<int>(vocab.size());
  config.Validate();
  ModelState m;
  m.config_ = config;
  m.vocab_ = std::move(vocab);
  m.Layout();
  Rng rng(DeriveSeed({seed, 0x1417}));
  for (ag::Parameter& p : m.params_) {
    const std::string& n = p.name;
    const std::string last = n.substr(n.rfind('.') + 1);
    const bool gain = last == "g";
    const bool bias = last[0] == 'b';
    if (gain) {
      p.value.setOnes();
    } else if (n == "embed") {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = StandardNormal(rng);
    } else if (bias) {
      p.value.setZero();
    } else {
      const double std = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        p.value.data()[i] = std * StandardNormal(rng);
      }
    }
  }
  return m;
}

const ag::Parameter& ModelState::param(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw std::out_of_range("no parameter '" + std::string(name) + "'");
  return params_[it->second];
}

ag::Parameter& ModelState::mutable_param(std::string_view name) {
  return const_cast<ag::Parameter&>(std::as_const(*this).param(name));
}

size_t ModelState::NumScalars() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

void ModelState::ZeroGrad() {
  for (auto& p : params_) p.ZeroGrad();
}

bool ModelState::AllFinite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const ag::Parameter& p) { return p.value.allFinite(); });
}

LinearizedDialogue Linearize(const Dialogue& dialogue, const Vocab& vocab,
                             size_t max_len) {
  LinearizedDialogue out;
  auto push = [&](int id, std::optional<std::string> speaker, int turn) {
    out.ids.push_back(id);
    out.speakers.push_back(std::move(speaker));
    out.turns.push_back(turn);
  };
  push(Vocab::kBos, std::nullopt, kNoTurn);
  const int colon = vocab.Id(":");
  for (size_t t = 0; t < dialogue.turns.size(); ++t) {
    const Turn& turn = dialogue.turns[t];
    std::vector<int> body = vocab.Encode(turn.speaker);
    body.push_back(colon);
    const std::vector<int> text = vocab.Encode(turn.text);
    body.insert(body.end(), text.begin(), text.end());
    // Room for this turn's separator and the final eos.
    if (max_len > 0 && out.ids.size() + body.size() + 2 > max_len) {
      out.truncated = true;
      if (t > 0) break;
      if (max_len < 4) throw ValidationError("max_len too small for any turn");
      body.resize(max_len - 3);
    }
    for (int id : body) push(id, turn.speaker, static_cast<int>(t));
    push(Vocab::kSep, std::nullopt, kNoTurn);
    if (out.truncated) break;
  }
  push(Vocab::kEos, std::nullopt, kNoTurn);
  return out;
}

namespace {

Matrix Sinusoids(Eigen::Index length, int d) {
  Matrix p(length, d);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(i) / d);
      p(pos, i) = std::sin(static_cast<double>(pos) * rate);
      if (i + 1 < d) p(pos, i + 1) = std::cos(static_cast<double>(pos) * rate);
    }
  }
  return p;
}

void CheckIds(const ModelState& model, std::span<const int> ids) {
  for (int id : ids) {
    if (id < 0 || id >= model.config().vocab_size) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(model.config().vocab_size));
    }
  }
}

Var Embed(ag::Graph& g, const ModelState& model, std::span<const int> ids) {
  CheckIds(model, ids);
  Var e = ag::Embedding(g.Param(model.param(model.embed())), ids);
  return ag::AddConstant(e, Sinusoids(static_cast<Eigen::Index>(ids.size()),
                                      model.config().d_model));
}

Var Norm(ag::Graph& g, const ModelState& m, const Var& x, size_t gain, size_t bias) {
  return ag::LayerNorm(x, g.Param(m.param(gain)), g.Param(m.param(bias)));
}

Var Attend(ag::Graph& g, const ModelState& m, const ModelState::Attention& a,
           const Var& x, const Var& memory, bool causal) {
  Var q = ag::MatMul(x, g.Param(m.param(a.wq)));
  Var k = ag::MatMul(memory, g.Param(m.param(a.wk)));
  Var v = ag::MatMul(memory, g.Param(m.param(a.wv)));
  Var o = ag::MultiHeadAttention(q, k, v, m.config().heads, causal);
  return ag::AddBias(ag::MatMul(o, g.Param(m.param(a.wo))), g.Param(m.param(a.bo)));
}

Var FeedForward(ag::Graph& g, const ModelState& m, const ModelState::Block& b,
                const Var& x) {
  Var h = ag::Gelu(ag::AddBias(ag::MatMul(x, g.Param(m.param(b.w1))), g.Param(m.param(b.b1))));
  return ag::AddBias(ag::MatMul(h, g.Param(m.param(b.w2))), g.Param(m.param(b.b2)));
}

}  // namespace

EncoderStates Encode(ag::Graph& g, const ModelState& model,
                     const LinearizedDialogue& source) {
  if (source.ids.empty()) throw ValidationError("empty source sequence");
  Var x = Embed(g, model, source.ids);
  for (const ModelState::Block& b : model.encoder_blocks()) {
    Var h = Norm(g, model, x, b.ln1_g, b.ln1_b);
    x = ag::Add(x, Attend(g, model, b.self_attn, h, h, false));
    x = ag::Add(x, FeedForward(g, model, b, Norm(g, model, x, b.ln_ffn_g, b.ln_ffn_b)));
  }
  EncoderStates out;
  out.C = Norm(g, model, x, model.enc_ln_g(), model.enc_ln_b());
  out.ids = source.ids;
  out.speakers = source.speakers;
  out.turns = source.turns;
  out.truncated = source.truncated;
  return out;
}

EncoderStates Encode(ag::Graph& g, const ModelState& model, const Dialogue& dialogue) {
  return Encode(g, model,
                Linearize(dialogue, model.vocab(),
                          static_cast<size_t>(model.config().max_source_len)));
}

DecoderOutput DecodeTeacherForced(ag::Graph& g, const ModelState& model,
                                  const EncoderStates& source,
                                  std::span<const int> input) {
  if (input.empty() || input[0] != Vocab::kBos) {
    throw ValidationError("decoder input must begin with bos");
  }
  Var x = Embed(g, model, input);
  for (const ModelState::Block& b : model.decoder_blocks()) {
    Var h = Norm(g, model, x, b.ln1_g, b.ln1_b);
    x = ag::Add(x, Attend(g, model, b.self_attn, h, h, true));
    h = Norm(g, model, x, b.ln2_g, b.ln2_b);
    x = ag::Add(x, Attend(g, model, b.cross_attn, h, source.C, false));
    x = ag::Add(x, FeedForward(g, model, b, Norm(g, model, x, b.ln_ffn_g, b.ln_ffn_b)));
  }
  DecoderOutput out;
  out.states = Norm(g, model, x, model.dec_ln_g(), model.dec_ln_b());
  out.logits = ag::AddBias(ag::MatMul(out.states, g.Param(model.param(model.out_w()))),
                           g.Param(model.param(model.out_b())));
  return out;
}

TeacherForcingPair MakeTeacherForcingPair(const ModelState& model,
                                          std::string_view summary) {
  std::vector<int> ids = model.vocab().Encode(summary);
  if (ids.empty()) throw ValidationError("empty summary");
  const size_t room = static_cast<size_t>(model.config().max_target_len) - 1;
  if (ids.size() > room) ids.resize(room);
  TeacherForcingPair pair;
  pair.input.push_back(Vocab::kBos);
  pair.input.insert(pair.input.end(), ids.begin(), ids.end());
  pair.labels = ids;
  pair.labels.push_back(Vocab::kEos);
  return pair;
}

Var PoolSummaryStates(const DecoderOutput& output, std::span<const int> input,
                      Pooling pooling) {
  std::vector<int> rows;
  for (size_t i = 1; i < input.size(); ++i) {
    if (input[i] != Vocab::kPad) rows.push_back(static_cast<int>(i));
  }
  if (rows.empty()) throw ValidationError("summary has no non-pad positions");
  if (pooling == Pooling::kLastToken) rows = {rows.back()};
  return ag::GroupMeans(output.states, {rows});
}

Var SummaryRepresentation(ag::Graph& g, const ModelState& model,
                          const EncoderStates& source, std::string_view summary) {
  const TeacherForcingPair pair = MakeTeacherForcingPair(model, summary);
  const DecoderOutput out = DecodeTeacherForced(g, model, source, pair.input);
  return PoolSummaryStates(out, pair.input, model.config().pooling);
}

Var SummaryRepresentation(ag::Graph& g, const ModelState& model,
                          const Dialogue& dialogue, std::string_view summary) {
  return SummaryRepresentation(g, model, Encode(g, model, dialogue), summary);
}

namespace {

ag::RowVector NextLogProbs(const ModelState& model, const EncoderStates& source,
                           const std::vector<int>& prefix) {
  ag::Graph g(false);
  const DecoderOutput out = DecodeTeacherForced(g, model, source, prefix);
  const ag::RowVector z = out.logits->val().row(out.logits->val().rows() - 1);
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return (z.array() - lse).matrix();
}

struct Hypothesis {
  std::vector<int> ids;
  double score = 0.0;
};

// Top `k` entries by value, ties to the lower index.
std::vector<int> TopK(const ag::RowVector& v, int k) {
  std::vector<int> idx(static_cast<size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const auto kk = std::min<size_t>(static_cast<size_t>(k), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(),
                    [&](int a, int b) { return v(a) > v(b) || (v(a) == v(b) && a < b); });
  idx.resize(kk);
  return idx;
}

}  // namespace

std::vector<int> Generate(const ModelState& model, const EncoderStates& source,
                          size_t max_len, DecodeStrategy strategy) {
  if (max_len == 0) throw ValidationError("max_len must be at least 1");
  if (strategy.beam_size < 1) throw ValidationError("beam size must be at least 1");
  // The decoder input holds bos plus the generated prefix.
  max_len = std::min(max_len, static_cast<size_t>(model.config().max_target_len));
  const int k = strategy.beam_size;
  std::vector<Hypothesis> live = {Hypothesis{{Vocab::kBos}, 0.0}};
  std::vector<Hypothesis> finished;
  for (size_t step = 0; step < max_len && !live.empty(); ++step) {
    struct Candidate {
      size_t hyp;
      int token;
      double score;
    };
    std::vector<Candidate> candidates;
    for (size_t h = 0; h < live.size(); ++h) {
      const ag::RowVector lp = NextLogProbs(model, source, live[h].ids);
      for (int tok : TopK(lp, k)) candidates.push_back({h, tok, live[h].score + lp(tok)});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hypothesis> next;
    for (const Candidate& c : candidates) {
      if (static_cast<int>(next.size()) >= k) break;
      Hypothesis h{live[c.hyp].ids, c.score};
      h.ids.push_back(c.token);
      if (c.token == Vocab::kEos) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (!finished.empty()) {
      const auto best_done = std::max_element(
          finished.begin(), finished.end(),
          [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
      const bool live_can_win = std::any_of(
          live.begin(), live.end(),
          [&](const Hypothesis& h) { return h.score > best_done->score; });
      if (!live_can_win || static_cast<int>(finished.size()) >= k) break;
    }
  }
  const std::vector<Hypothesis>& pool = finished.empty() ? live : finished;
  const Hypothesis* best = &pool.front();
  for (const Hypothesis& h : pool) {
    if (h.score > best->score) best = &h;
  }
  return std::vector<int>(best->ids.begin() + 1, best->ids.end());
}

double SequenceLogProb(const ModelState& model, const EncoderStates& source,
                       std::span<const int> ids) {
  std::vector<int> prefix = {Vocab::kBos};
  double total = 0.0;
  for (int id : ids) {
    total += NextLogProbs(model, source, prefix)(id);
    prefix.push_back(id);
  }
  return total;
}

std::string ModelSummarizer::Summarize(const Dialogue& dialogue) const {
  ag::Graph g(false);
  const EncoderStates source = Encode(g, model_, dialogue);
  const size_t max_len =
      max_len_ > 0 ? max_len_ : static_cast<size_t>(model_.config().max_target_len);
  return model_.vocab().Decode(Generate(model_, source, max_len, strategy_));
}

namespace {

constexpr std::string_view kCheckpointMagic = "CONFIT-CHECKPOINT";

}  // namespace

void SaveCheckpoint(const ModelState& model, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoints are written in little-endian order");
  json arrays = json::array();
  size_t offset = 0;
  for (const ag::Parameter& p : model.parameters()) {
    arrays.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"offset", offset}});
    offset += static_cast<size_t>(p.value.size());
  }
  const json header = {{"version", kCheckpointVersion},
                       {"config", ToJson(model.config())},
                       {"vocab", model.vocab().tokens()},
                       {"arrays", std::move(arrays)},
                       {"scalars", offset}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const ag::Parameter& p : model.parameters()) {
      // Eigen storage is column-major; the reader mirrors it.
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p.value.size())));
    }
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelState LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw CheckpointError("not a checkpoint (bad magic line); expected version " +
                          std::to_string(kCheckpointVersion));
  }
  std::string header_line;
  std::getline(in, header_line);
  json header = json::parse(header_line, nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded() || !header.is_object() || !header.contains("version") ||
      !header["version"].is_number_integer()) {
    throw CheckpointError("unreadable checkpoint header: missing or invalid version (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const int version = header["version"].get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelState m;
  try {
    m.config_ = ModelConfigFromJson(header.at("config"));
    m.vocab_ = Vocab::FromTokens(header.at("vocab").get<std::vector<std::string>>());
    m.config_.Validate();
    if (static_cast<size_t>(m.config_.vocab_size) != m.vocab_.size()) {
      throw CheckpointError("vocabulary size disagrees with config");
    }
    m.Layout();
    const json& arrays = header.at("arrays");
    if (arrays.size() != m.params_.size()) throw CheckpointError("array count mismatch");
    for (size_t i = 0; i < arrays.size(); ++i) {
      const ag::Parameter& p = m.params_[i];
      if (arrays[i].at("name").get<std::string>() != p.name ||
          arrays[i].at("rows").get<Eigen::Index>() != p.value.rows() ||
          arrays[i].at("cols").get<Eigen::Index>() != p.value.cols()) {
        throw CheckpointError("array '" + p.name + "' does not match the config");
      }
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (ag::Parameter& p : m.params_) {
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p.value.size())));
    if (!in) throw CheckpointError("checkpoint truncated in array '" + p.name + "'");
    p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after checkpoint data");
  }
  return m;
}

}  // namespace confit
