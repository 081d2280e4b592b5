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

// Blinded human-evaluation workflow: error taxonomy, annotation and key
// sheets, split/merge/reveal.

#ifndef CONFIT_ANNOTATION_H_
#define CONFIT_ANNOTATION_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confit/corpus.h"

namespace confit {

enum class ErrorType {
  kMissingInformation,
  kRedundantInformation,
  kCircumstantialError,
  kWrongReference,
  kNegationError,
  kObjectError,
  kTenseError,
  kModalityError,
};

inline constexpr size_t kNumErrorTypes = 8;
inline constexpr std::array<ErrorType, kNumErrorTypes> kAllErrorTypes = {
    ErrorType::kMissingInformation, ErrorType::kRedundantInformation,
    ErrorType::kCircumstantialError, ErrorType::kWrongReference,
    ErrorType::kNegationError,      ErrorType::kObjectError,
    ErrorType::kTenseError,         ErrorType::kModalityError};

struct ErrorTypeInfo {
  ErrorType type;
  // csv column and JSON field name.
  std::string_view column;
  std::string_view name;
  std::string_view definition;
  std::string_view example;
};

const ErrorTypeInfo& Describe(ErrorType type);
std::optional<ErrorType> ErrorTypeFromColumn(std::string_view column);

// Shown to annotators in the sheet and the service metadata.
extern const std::string_view kAnnotationInstructions;

inline constexpr int kMinFaithfulness = 1;
inline constexpr int kMaxFaithfulness = 10;

struct AnnotationRecord {
  std::string blinded_id;
  std::string annotator;
  std::array<bool, kNumErrorTypes> flags{};
  int faithfulness = 0;
  // Milliseconds since the epoch; 0 when unknown (sheet workflow).
  int64_t timestamp_ms = 0;

  bool flag(ErrorType t) const { return flags[static_cast<size_t>(t)]; }
  void set_flag(ErrorType t, bool v) { flags[static_cast<size_t>(t)] = v; }
  // Equal ignoring the timestamp.
  bool SameAnnotation(const AnnotationRecord& o) const {
    return blinded_id == o.blinded_id && annotator == o.annotator && flags == o.flags &&
           faithfulness == o.faithfulness;
  }
};

// Throws ValidationError whose message starts with the offending field name.
void ValidateRecord(const AnnotationRecord& record);

// Annotation fields are kept as the literal cell text so filled sheets
// survive split and merge unchanged.
struct SheetRow {
  std::string blinded_id;
  std::string dialogue_id;
  std::string dialogue_text;
  std::string reference_summary;
  std::string candidate_summary;
  std::array<std::string, kNumErrorTypes> flags;
  std::string faithfulness;
  std::string annotator;

  bool filled() const { return !faithfulness.empty(); }
  bool operator==(const SheetRow&) const = default;
};

// Rows grouped by dialogue, candidates of a dialogue contiguous.
struct AnnotationSheet {
  std::vector<SheetRow> rows;

  // [begin, end) row ranges of consecutive rows sharing a dialogue_id.
  std::vector<std::pair<size_t, size_t>> Groups() const;
  bool operator==(const AnnotationSheet&) const = default;
};

struct KeyEntry {
  std::string blinded_id;
  std::string dialogue_id;
  std::string model_name;

  bool operator==(const KeyEntry&) const = default;
};

struct KeySheet {
  std::vector<KeyEntry> entries;

  // Throws ValidationError for unknown ids.
  const KeyEntry& Lookup(std::string_view blinded_id) const;
  std::vector<std::string> Models() const;
  bool operator==(const KeySheet&) const = default;
};

struct ModelOutput {
  std::string model_name;
  std::string dialogue_id;
  std::string summary;
};

struct BuiltSheets {
  AnnotationSheet sheet;
  KeySheet key;
};

// Groups follow the order of `pairs`; dialogues without outputs are skipped.
// Candidates are shuffled per dialogue. Throws ValidationError for duplicate
// (model, dialogue) outputs, unknown dialogue ids, or a model name occurring
// in any text that would be shown to annotators.
BuiltSheets BuildSheets(const std::vector<ModelOutput>& outputs,
                        const std::vector<CorpusPair>& pairs, uint64_t seed);

// Contiguous runs of whole dialogue groups; the first (groups % n) sheets get
// one extra group. Throws ValidationError when n < 1 or n > groups.
std::vector<AnnotationSheet> SplitSheet(const AnnotationSheet& sheet, size_t n);

// Concatenation in argument order. Throws ValidationError listing blinded ids
// that occur more than once.
AnnotationSheet MergeSheets(const std::vector<AnnotationSheet>& sheets);

// Parses the annotation cells of a filled row. Flags accept 1/0, true/false,
// yes/no, x and empty (false). Throws ValidationError naming the column.
AnnotationRecord ParseFilledRow(const SheetRow& row);
// Writes a record into the annotation cells of a row.
void FillRow(SheetRow& row, const AnnotationRecord& record);

struct RevealedRecord {
  std::string model_name;
  std::string dialogue_id;
  AnnotationRecord record;
};

// One entry per filled row. Throws ValidationError for ids missing from the
// key or whose dialogue disagrees with it.
std::vector<RevealedRecord> Reveal(const AnnotationSheet& merged, const KeySheet& key);

// csv I/O. The annotation sheet starts with a "# " instruction line that
// readers skip.
std::vector<std::string> SheetColumns();
void WriteSheetCsv(const AnnotationSheet& sheet, std::ostream& out);
void WriteSheetCsv(const AnnotationSheet& sheet, const std::filesystem::path& path);
AnnotationSheet ReadSheetCsv(std::istream& in);
AnnotationSheet ReadSheetCsv(const std::filesystem::path& path);
void WriteKeyCsv(const KeySheet& key, std::ostream& out);
void WriteKeyCsv(const KeySheet& key, const std::filesystem::path& path);
KeySheet ReadKeyCsv(std::istream& in);
KeySheet ReadKeyCsv(const std::filesystem::path& path);
// The merged sheet with a model_name column after candidate_summary.
void WriteRevealedCsv(const AnnotationSheet& merged, const KeySheet& key, std::ostream& out);

// Model outputs as jsonl lines {"model": str, "id": str, "summary": str}.
std::vector<ModelOutput> ReadModelOutputs(const std::filesystem::path& path);

// RFC 4180 helpers. ParseCsv handles quoted fields spanning lines.
std::string CsvEscape(std::string_view field);
std::vector<std::vector<std::string>> ParseCsv(std::istream& in);

}  // namespace confit

#endif  // CONFIT_ANNOTATION_H_
