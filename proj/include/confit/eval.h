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

// ROUGE, pluggable summary scorers, and reports over human annotations.

#ifndef CONFIT_EVAL_H_
#define CONFIT_EVAL_H_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confit/annotation.h"
#include "confit/corpus.h"
#include "confit/seq2seq.h"

namespace confit {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when a side is too short for the statistic; the scores are then 0.
  bool degenerate = false;
};

// Lowercased tokens used by both ROUGE variants.
std::vector<std::string> RougeTokens(std::string_view text);
// Clipped n-gram overlap. Throws ValidationError for n < 1.
RougeScore RougeN(std::string_view candidate, std::string_view reference, int n);
// Longest-common-subsequence statistics.
RougeScore RougeL(std::string_view candidate, std::string_view reference);
size_t LcsLength(const std::vector<std::string>& a, const std::vector<std::string>& b);

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual double Score(const Dialogue& dialogue, std::string_view summary) const = 0;
};

// Mean per-token log-likelihood of the summary (with eos) under a model.
class LikelihoodScorer : public Scorer {
 public:
  explicit LikelihoodScorer(const ModelState& model) : model_(model) {}
  std::string name() const override { return "likelihood"; }
  double Score(const Dialogue& dialogue, std::string_view summary) const override;

 private:
  const ModelState& model_;
};

struct MetricRow {
  std::string system;
  size_t pairs = 0;
  // Corpus means of per-pair F1, scaled by 100.
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  std::vector<std::pair<std::string, double>> scorer_means;
};

// dialogue_id -> candidate. Throws ValidationError listing test ids without
// a candidate.
MetricRow EvaluateCandidates(const std::string& system,
                             const std::map<std::string, std::string>& candidates,
                             const std::vector<CorpusPair>& test,
                             const std::vector<const Scorer*>& scorers = {});
std::map<std::string, std::string> GenerateCandidates(
    const ModelState& model, const std::vector<CorpusPair>& test,
    DecodeStrategy strategy = DecodeStrategy::Greedy());
// jsonl lines {"id": str, "summary": str}.
std::map<std::string, std::string> ReadCandidates(const std::filesystem::path& path);
void WriteCandidates(const std::map<std::string, std::string>& candidates,
                     const std::filesystem::path& path);

// Aligned text with columns System, R-1, R-2, R-L, then scorer names; two
// decimals.
std::string FormatMetricTable(const std::vector<MetricRow>& rows);
std::string MetricTableCsv(const std::vector<MetricRow>& rows);

// Row order and labels of the error-distribution report.
const std::array<ErrorType, kNumErrorTypes>& ErrorReportOrder();
std::string_view ErrorReportLabel(ErrorType type);

enum class FlagAggregation {
  // Flagged when any annotator flagged the summary.
  kAny,
  // Flagged when more than half of the summary's annotators flagged it.
  kMajority,
};

struct ErrorDistribution {
  // Models in key order.
  std::vector<std::string> models;
  // Annotated summaries per model.
  std::map<std::string, size_t> summaries;
  // One row per error type in ErrorReportOrder(); percent[model] in [0, 100].
  struct Row {
    ErrorType type;
    std::map<std::string, double> percent;
  };
  std::vector<Row> rows;
};

// Throws ValidationError for blinded ids missing from the key.
ErrorDistribution ComputeErrorDistribution(const std::vector<AnnotationRecord>& records,
                                           const KeySheet& key,
                                           FlagAggregation aggregation = FlagAggregation::kAny);
// Percentages with two decimals, one column per model.
std::string FormatErrorDistribution(const ErrorDistribution& dist);
std::string ErrorDistributionCsv(const ErrorDistribution& dist);

struct FaithfulnessRow {
  std::string model;
  size_t records = 0;
  double mean = 0.0;
  // Sample standard deviation; 0 for a single record.
  double stddev = 0.0;
};

// Rows for key models with at least one record, in key order; models
// without records are omitted and named in `warnings`. Throws
// ValidationError naming the record for scores outside 1..10.
std::vector<FaithfulnessRow> FaithfulnessMeans(const std::vector<AnnotationRecord>& records,
                                               const KeySheet& key,
                                               std::vector<std::string>* warnings = nullptr);
std::string FormatFaithfulness(const std::vector<FaithfulnessRow>& rows);

}  // namespace confit

#endif  // CONFIT_EVAL_H_
