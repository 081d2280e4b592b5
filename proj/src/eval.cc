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

#include "confit/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "confit/error.h"
#include "confit/objective.h"
#include "confit/tagging.h"
#include "confit/text_util.h"
#include "json.hpp"

namespace confit {
namespace {

RougeScore FromCounts(double overlap, double candidate_total, double reference_total) {
  RougeScore s;
  s.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  s.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

std::map<std::vector<std::string>, size_t> NGramCounts(const std::vector<std::string>& toks,
                                                       size_t n) {
  std::map<std::vector<std::string>, size_t> counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::string Fixed(double v, int decimals = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

std::string Table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()));
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string Csv(const std::vector<std::vector<std::string>>& cells) {
  std::ostringstream os;
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << ',';
      os << CsvEscape(row[c]);
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::vector<std::string>> MetricCells(const std::vector<MetricRow>& rows) {
  std::vector<std::string> header = {"System", "R-1", "R-2", "R-L"};
  std::vector<std::string> scorer_names;
  for (const MetricRow& r : rows) {
    for (const auto& [name, v] : r.scorer_means) {
      if (std::find(scorer_names.begin(), scorer_names.end(), name) == scorer_names.end()) {
        scorer_names.push_back(name);
      }
    }
  }
  header.insert(header.end(), scorer_names.begin(), scorer_names.end());
  std::vector<std::vector<std::string>> cells = {header};
  for (const MetricRow& r : rows) {
    std::vector<std::string> line = {r.system, Fixed(r.rouge1), Fixed(r.rouge2), Fixed(r.rougeL)};
    for (const std::string& name : scorer_names) {
      auto it = std::find_if(r.scorer_means.begin(), r.scorer_means.end(),
                             [&](const auto& p) { return p.first == name; });
      line.push_back(it == r.scorer_means.end() ? "-" : Fixed(it->second));
    }
    cells.push_back(std::move(line));
  }
  return cells;
}

struct KeyIndex {
  std::map<std::string, const KeyEntry*> by_id;

  explicit KeyIndex(const KeySheet& key) {
    for (const KeyEntry& e : key.entries) by_id.emplace(e.blinded_id, &e);
  }
  const KeyEntry& at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("blinded_id '" + id + "' not in key");
    return *it->second;
  }
};

std::vector<std::vector<std::string>> DistributionCells(const ErrorDistribution& d) {
  std::vector<std::string> header = {"Error Type"};
  header.insert(header.end(), d.models.begin(), d.models.end());
  std::vector<std::vector<std::string>> cells = {header};
  for (const auto& row : d.rows) {
    std::vector<std::string> line = {std::string(ErrorReportLabel(row.type))};
    for (const std::string& m : d.models) line.push_back(Fixed(row.percent.at(m)) + "%");
    cells.push_back(std::move(line));
  }
  return cells;
}

}  // namespace

std::vector<std::string> RougeTokens(std::string_view text) {
  return Tokenize(ToLower(text));
}

RougeScore RougeN(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1) throw ValidationError("ROUGE-N needs n >= 1");
  const auto cand = RougeTokens(candidate);
  const auto ref = RougeTokens(reference);
  const size_t un = static_cast<size_t>(n);
  if (ref.size() < un || cand.size() < un) {
    RougeScore s;
    s.degenerate = true;
    return s;
  }
  const auto c_counts = NGramCounts(cand, un);
  const auto r_counts = NGramCounts(ref, un);
  double overlap = 0.0;
  for (const auto& [gram, count] : c_counts) {
    auto it = r_counts.find(gram);
    if (it != r_counts.end()) overlap += static_cast<double>(std::min(count, it->second));
  }
  return FromCounts(overlap, static_cast<double>(cand.size() - un + 1),
                    static_cast<double>(ref.size() - un + 1));
}

size_t LcsLength(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0);
  std::vector<size_t> cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore RougeL(std::string_view candidate, std::string_view reference) {
  const auto cand = RougeTokens(candidate);
  const auto ref = RougeTokens(reference);
  if (cand.empty() || ref.empty()) {
    RougeScore s;
    s.degenerate = true;
    return s;
  }
  return FromCounts(static_cast<double>(LcsLength(cand, ref)), static_cast<double>(cand.size()),
                    static_cast<double>(ref.size()));
}

double LikelihoodScorer::Score(const Dialogue& dialogue, std::string_view summary) const {
  ag::Graph g(false);
  const EncoderStates source = Encode(g, model_, dialogue);
  const TeacherForcingPair tf = MakeTeacherForcingPair(model_, summary);
  const DecoderOutput out = DecodeTeacherForced(g, model_, source, tf.input);
  return -NllLoss(out.logits->val(), tf.labels) / static_cast<double>(tf.labels.size());
}

MetricRow EvaluateCandidates(const std::string& system,
                             const std::map<std::string, std::string>& candidates,
                             const std::vector<CorpusPair>& test,
                             const std::vector<const Scorer*>& scorers) {
  std::vector<std::string> missing;
  for (const CorpusPair& p : test) {
    if (!candidates.contains(p.dialogue.id)) missing.push_back(p.dialogue.id);
  }
  if (!missing.empty()) throw ValidationError("no candidate for: " + Join(missing, ", "));
  if (test.empty()) throw ValidationError("empty test set");
  MetricRow row;
  row.system = system;
  row.pairs = test.size();
  std::vector<double> scorer_sums(scorers.size(), 0.0);
  for (const CorpusPair& p : test) {
    const std::string& cand = candidates.at(p.dialogue.id);
    row.rouge1 += RougeN(cand, p.reference.text, 1).f1;
    row.rouge2 += RougeN(cand, p.reference.text, 2).f1;
    row.rougeL += RougeL(cand, p.reference.text).f1;
    for (size_t s = 0; s < scorers.size(); ++s) scorer_sums[s] += scorers[s]->Score(p.dialogue, cand);
  }
  const double n = static_cast<double>(test.size());
  row.rouge1 = 100.0 * row.rouge1 / n;
  row.rouge2 = 100.0 * row.rouge2 / n;
  row.rougeL = 100.0 * row.rougeL / n;
  for (size_t s = 0; s < scorers.size(); ++s) {
    row.scorer_means.emplace_back(scorers[s]->name(), scorer_sums[s] / n);
  }
  return row;
}

std::map<std::string, std::string> GenerateCandidates(const ModelState& model,
                                                      const std::vector<CorpusPair>& test,
                                                      DecodeStrategy strategy) {
  const ModelSummarizer summarizer(model, 0, strategy);
  std::map<std::string, std::string> out;
  for (const CorpusPair& p : test) out[p.dialogue.id] = summarizer.Summarize(p.dialogue);
  return out;
}

std::map<std::string, std::string> ReadCandidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open candidates " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (Trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    const std::string where = path.string() + ":" + std::to_string(number);
    if (j.is_discarded() || !j.is_object()) throw ValidationError(where + ": invalid JSON");
    if (!j.contains("id") || !j["id"].is_string()) throw ValidationError(where + ": missing field 'id'");
    if (!j.contains("summary") || !j["summary"].is_string()) {
      throw ValidationError(where + ": missing field 'summary'");
    }
    if (!out.emplace(j["id"].get<std::string>(), j["summary"].get<std::string>()).second) {
      throw ValidationError(where + ": duplicate id");
    }
  }
  return out;
}

void WriteCandidates(const std::map<std::string, std::string>& candidates,
                     const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [id, summary] : candidates) {
    out << nlohmann::json{{"id", id}, {"summary", summary}}.dump() << '\n';
  }
}

std::string FormatMetricTable(const std::vector<MetricRow>& rows) {
  return Table(MetricCells(rows));
}

std::string MetricTableCsv(const std::vector<MetricRow>& rows) { return Csv(MetricCells(rows)); }

const std::array<ErrorType, kNumErrorTypes>& ErrorReportOrder() {
  static constexpr std::array<ErrorType, kNumErrorTypes> kOrder = {
      ErrorType::kMissingInformation, ErrorType::kRedundantInformation,
      ErrorType::kWrongReference,     ErrorType::kCircumstantialError,
      ErrorType::kNegationError,      ErrorType::kObjectError,
      ErrorType::kTenseError,         ErrorType::kModalityError};
  return kOrder;
}

std::string_view ErrorReportLabel(ErrorType type) {
  switch (type) {
    case ErrorType::kMissingInformation:
      return "Missing Information";
    case ErrorType::kRedundantInformation:
      return "Redundant Information";
    case ErrorType::kCircumstantialError:
      return "Circumstance";
    case ErrorType::kWrongReference:
      return "Wrong Reference";
    case ErrorType::kNegationError:
      return "Negation";
    case ErrorType::kObjectError:
      return "Object";
    case ErrorType::kTenseError:
      return "Tense";
    case ErrorType::kModalityError:
      return "Modality";
  }
  return "";
}

ErrorDistribution ComputeErrorDistribution(const std::vector<AnnotationRecord>& records,
                                           const KeySheet& key, FlagAggregation aggregation) {
  const KeyIndex index(key);
  // blinded_id -> (annotator count, per-type flag count)
  std::map<std::string, std::pair<size_t, std::array<size_t, kNumErrorTypes>>> per_summary;
  for (const AnnotationRecord& r : records) {
    index.at(r.blinded_id);
    auto& [annotators, counts] = per_summary[r.blinded_id];
    ++annotators;
    for (size_t t = 0; t < kNumErrorTypes; ++t) counts[t] += r.flags[t] ? 1 : 0;
  }
  ErrorDistribution d;
  d.models = key.Models();
  std::map<std::string, std::array<size_t, kNumErrorTypes>> flagged;
  for (const std::string& m : d.models) {
    d.summaries[m] = 0;
    flagged[m] = {};
  }
  for (const auto& [id, entry] : per_summary) {
    const std::string& model = index.at(id).model_name;
    ++d.summaries[model];
    for (size_t t = 0; t < kNumErrorTypes; ++t) {
      const size_t c = entry.second[t];
      const bool on = aggregation == FlagAggregation::kAny ? c > 0 : 2 * c > entry.first;
      if (on) ++flagged[model][t];
    }
  }
  for (ErrorType t : ErrorReportOrder()) {
    ErrorDistribution::Row row{t, {}};
    for (const std::string& m : d.models) {
      const size_t n = d.summaries[m];
      row.percent[m] = n == 0 ? 0.0
                              : 100.0 * static_cast<double>(flagged[m][static_cast<size_t>(t)]) /
                                    static_cast<double>(n);
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

std::string FormatErrorDistribution(const ErrorDistribution& dist) {
  return Table(DistributionCells(dist));
}

std::string ErrorDistributionCsv(const ErrorDistribution& dist) {
  return Csv(DistributionCells(dist));
}

std::vector<FaithfulnessRow> FaithfulnessMeans(const std::vector<AnnotationRecord>& records,
                                               const KeySheet& key,
                                               std::vector<std::string>* warnings) {
  const KeyIndex index(key);
  std::map<std::string, std::vector<int>> scores;
  for (const AnnotationRecord& r : records) {
    if (r.faithfulness < kMinFaithfulness || r.faithfulness > kMaxFaithfulness) {
      throw ValidationError("faithfulness " + std::to_string(r.faithfulness) +
                            " outside 1..10 in record " + r.blinded_id + "/" + r.annotator);
    }
    scores[index.at(r.blinded_id).model_name].push_back(r.faithfulness);
  }
  std::vector<FaithfulnessRow> rows;
  for (const std::string& m : key.Models()) {
    auto it = scores.find(m);
    if (it == scores.end()) {
      if (warnings != nullptr) warnings->push_back("no faithfulness scores for model " + m);
      continue;
    }
    const std::vector<int>& s = it->second;
    FaithfulnessRow row;
    row.model = m;
    row.records = s.size();
    double sum = 0.0;
    for (int v : s) sum += v;
    row.mean = sum / static_cast<double>(s.size());
    if (s.size() > 1) {
      double sq = 0.0;
      for (int v : s) sq += (v - row.mean) * (v - row.mean);
      row.stddev = std::sqrt(sq / static_cast<double>(s.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string FormatFaithfulness(const std::vector<FaithfulnessRow>& rows) {
  std::vector<std::vector<std::string>> cells = {{"Model", "N", "Mean", "SD"}};
  for (const FaithfulnessRow& r : rows) {
    cells.push_back({r.model, std::to_string(r.records), Fixed(r.mean), Fixed(r.stddev)});
  }
  return Table(cells);
}

}  // namespace confit
