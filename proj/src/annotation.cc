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

#include "confit/annotation.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "confit/error.h"
#include "confit/random.h"
#include "confit/text_util.h"
#include "json.hpp"

namespace confit {
namespace {

const std::array<ErrorTypeInfo, kNumErrorTypes> kErrorTypes = {{
    {ErrorType::kMissingInformation, "missing_information", "Missing Information",
     "Something the reference reports is left out of the summary.",
     "Reference: Tom will bring wine and cake. Summary: Tom will bring wine."},
    {ErrorType::kRedundantInformation, "redundant_information", "Redundant Information",
     "The summary adds material the reference does not need or contain.",
     "Reference: Ann is late. Summary: Ann is late, Ann will be late today."},
    {ErrorType::kCircumstantialError, "circumstantial_error", "Circumstantial Error",
     "A time, date or place attached to an event is wrong.",
     "Reference: They meet on Friday. Summary: They meet on Monday."},
    {ErrorType::kWrongReference, "wrong_reference", "Wrong Reference",
     "A person is misidentified: a pronoun points to the wrong participant or one "
     "name stands where another belongs.",
     "Reference: Kim lent Joe her bike. Summary: Joe lent Kim his bike."},
    {ErrorType::kNegationError, "negation_error", "Negation Error",
     "A negation is dropped, added or misplaced.",
     "Reference: Lea did not pass. Summary: Lea passed."},
    {ErrorType::kObjectError, "object_error", "Object Error",
     "A non-person object of a verb is wrong.",
     "Reference: Sam bought apples. Summary: Sam bought bread."},
    {ErrorType::kTenseError, "tense_error", "Tense Error",
     "The grammatical tense differs from the reference.",
     "Reference: Max will call. Summary: Max called."},
    {ErrorType::kModalityError, "modality_error", "Modality Error",
     "A modal such as may, must, could or should is wrong or missing.",
     "Reference: Eve might come. Summary: Eve must come."},
}};

const std::vector<std::string>& KeyColumns() {
  static const auto* cols =
      new std::vector<std::string>{"blinded_id", "dialogue_id", "model_name"};
  return *cols;
}

bool ContainsAny(std::string_view text, const std::vector<std::string>& needles) {
  return std::any_of(needles.begin(), needles.end(), [&](const std::string& n) {
    return !n.empty() && text.find(n) != std::string_view::npos;
  });
}

std::string RandomId(Rng& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id = "item-";
  for (int i = 0; i < 12; ++i) id += kHex[UniformIndex(rng, 16)];
  return id;
}

std::vector<std::string> Row(const SheetRow& r) {
  std::vector<std::string> cells = {r.blinded_id, r.dialogue_id, r.dialogue_text,
                                    r.reference_summary, r.candidate_summary};
  cells.insert(cells.end(), r.flags.begin(), r.flags.end());
  cells.push_back(r.faithfulness);
  cells.push_back(r.annotator);
  return cells;
}

void WriteCsvRow(std::ostream& out, const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out << ',';
    out << CsvEscape(cells[i]);
  }
  out << "\r\n";
}

void ExpectHeader(const std::vector<std::string>& got, const std::vector<std::string>& want,
                  const char* what) {
  if (got != want) {
    throw ValidationError(std::string(what) + " header must be: " + Join(want, ","));
  }
}

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream CreateOrThrow(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

const std::string_view kAnnotationInstructions =
    "Judge each candidate only for faithfulness to the dialogue, not for fluency or style. "
    "Tick every error type present and give a faithfulness score from 1 (unfaithful) to 10 "
    "(fully faithful).";

const ErrorTypeInfo& Describe(ErrorType type) {
  return kErrorTypes[static_cast<size_t>(type)];
}

std::optional<ErrorType> ErrorTypeFromColumn(std::string_view column) {
  for (const ErrorTypeInfo& info : kErrorTypes) {
    if (info.column == column) return info.type;
  }
  return std::nullopt;
}

void ValidateRecord(const AnnotationRecord& r) {
  if (r.blinded_id.empty()) throw ValidationError("blinded_id: must not be empty");
  if (r.annotator.empty()) throw ValidationError("annotator: must not be empty");
  if (r.faithfulness < kMinFaithfulness || r.faithfulness > kMaxFaithfulness) {
    throw ValidationError("faithfulness: must be an integer from 1 to 10, got " +
                          std::to_string(r.faithfulness));
  }
}

std::vector<std::pair<size_t, size_t>> AnnotationSheet::Groups() const {
  std::vector<std::pair<size_t, size_t>> groups;
  for (size_t i = 0; i < rows.size();) {
    size_t j = i + 1;
    while (j < rows.size() && rows[j].dialogue_id == rows[i].dialogue_id) ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  return groups;
}

const KeyEntry& KeySheet::Lookup(std::string_view blinded_id) const {
  for (const KeyEntry& e : entries) {
    if (e.blinded_id == blinded_id) return e;
  }
  throw ValidationError("blinded_id '" + std::string(blinded_id) + "' not in key");
}

std::vector<std::string> KeySheet::Models() const {
  std::vector<std::string> models;
  for (const KeyEntry& e : entries) {
    if (std::find(models.begin(), models.end(), e.model_name) == models.end()) {
      models.push_back(e.model_name);
    }
  }
  return models;
}

BuiltSheets BuildSheets(const std::vector<ModelOutput>& outputs,
                        const std::vector<CorpusPair>& pairs, uint64_t seed) {
  std::map<std::string, size_t> pair_index;
  for (size_t i = 0; i < pairs.size(); ++i) pair_index.emplace(pairs[i].dialogue.id, i);
  std::vector<std::string> models;
  std::map<size_t, std::vector<const ModelOutput*>> by_dialogue;
  std::set<std::pair<std::string, std::string>> seen;
  for (const ModelOutput& o : outputs) {
    if (o.model_name.empty()) throw ValidationError("model name must not be empty");
    auto it = pair_index.find(o.dialogue_id);
    if (it == pair_index.end()) {
      throw ValidationError("output for unknown dialogue '" + o.dialogue_id + "'");
    }
    if (!seen.emplace(o.model_name, o.dialogue_id).second) {
      throw ValidationError("duplicate output for model '" + o.model_name + "' on dialogue '" +
                            o.dialogue_id + "'");
    }
    if (std::find(models.begin(), models.end(), o.model_name) == models.end()) {
      models.push_back(o.model_name);
    }
    by_dialogue[it->second].push_back(&o);
  }
  if (ContainsAny(kAnnotationInstructions, models)) {
    throw ValidationError("a model name occurs in the annotator instructions");
  }

  BuiltSheets built;
  Rng id_rng(DeriveSeed({seed, 0x1d}));
  std::set<std::string> ids;
  for (auto& [index, group] : by_dialogue) {
    const CorpusPair& pair = pairs[index];
    Rng order_rng(DeriveSeed({seed, 0x5f, index}));
    Shuffle(group, order_rng);
    const std::string dialogue_text = pair.dialogue.Render();
    for (const ModelOutput* o : group) {
      SheetRow row;
      do {
        row.blinded_id = RandomId(id_rng);
      } while (ids.contains(row.blinded_id) || ContainsAny(row.blinded_id, models));
      ids.insert(row.blinded_id);
      row.dialogue_id = pair.dialogue.id;
      row.dialogue_text = dialogue_text;
      row.reference_summary = pair.reference.text;
      row.candidate_summary = o->summary;
      for (const std::string& cell : Row(row)) {
        if (ContainsAny(cell, models)) {
          throw ValidationError("model name leaks into the annotation sheet for dialogue '" +
                                pair.dialogue.id + "'");
        }
      }
      built.key.entries.push_back({row.blinded_id, row.dialogue_id, o->model_name});
      built.sheet.rows.push_back(std::move(row));
    }
  }
  return built;
}

std::vector<AnnotationSheet> SplitSheet(const AnnotationSheet& sheet, size_t n) {
  const auto groups = sheet.Groups();
  if (n < 1) throw ValidationError("need at least one annotator");
  if (n > groups.size()) {
    throw ValidationError("cannot split " + std::to_string(groups.size()) + " dialogue groups among " +
                          std::to_string(n) + " annotators");
  }
  std::vector<AnnotationSheet> out(n);
  size_t g = 0;
  for (size_t s = 0; s < n; ++s) {
    const size_t count = groups.size() / n + (s < groups.size() % n ? 1 : 0);
    for (size_t c = 0; c < count; ++c, ++g) {
      for (size_t r = groups[g].first; r < groups[g].second; ++r) {
        out[s].rows.push_back(sheet.rows[r]);
      }
    }
  }
  return out;
}

AnnotationSheet MergeSheets(const std::vector<AnnotationSheet>& sheets) {
  AnnotationSheet merged;
  std::set<std::string> seen;
  std::set<std::string> duplicates;
  for (const AnnotationSheet& s : sheets) {
    for (const SheetRow& r : s.rows) {
      if (!seen.insert(r.blinded_id).second) duplicates.insert(r.blinded_id);
      merged.rows.push_back(r);
    }
  }
  if (!duplicates.empty()) {
    throw ValidationError("blinded ids occur in more than one sheet: " +
                          Join(std::vector<std::string>(duplicates.begin(), duplicates.end()), ", "));
  }
  return merged;
}

AnnotationRecord ParseFilledRow(const SheetRow& row) {
  AnnotationRecord r;
  r.blinded_id = row.blinded_id;
  r.annotator = Trim(row.annotator);
  for (size_t i = 0; i < kNumErrorTypes; ++i) {
    const std::string v = ToLower(Trim(row.flags[i]));
    if (v == "1" || v == "true" || v == "yes" || v == "x") {
      r.flags[i] = true;
    } else if (v.empty() || v == "0" || v == "false" || v == "no") {
      r.flags[i] = false;
    } else {
      throw ValidationError(std::string(kErrorTypes[i].column) + ": unrecognized flag '" +
                            row.flags[i] + "' for " + row.blinded_id);
    }
  }
  const std::string f = Trim(row.faithfulness);
  if (f.empty() || f.size() > 2 || !std::all_of(f.begin(), f.end(), IsAsciiDigit)) {
    throw ValidationError("faithfulness: '" + row.faithfulness + "' is not an integer from 1 to 10 for " +
                          row.blinded_id);
  }
  r.faithfulness = std::stoi(f);
  try {
    ValidateRecord(r);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(e.what()) + " (" + row.blinded_id + ")");
  }
  return r;
}

void FillRow(SheetRow& row, const AnnotationRecord& record) {
  for (size_t i = 0; i < kNumErrorTypes; ++i) row.flags[i] = record.flags[i] ? "1" : "0";
  row.faithfulness = std::to_string(record.faithfulness);
  row.annotator = record.annotator;
}

std::vector<RevealedRecord> Reveal(const AnnotationSheet& merged, const KeySheet& key) {
  std::map<std::string, const KeyEntry*> index;
  for (const KeyEntry& e : key.entries) index.emplace(e.blinded_id, &e);
  std::vector<RevealedRecord> out;
  for (const SheetRow& row : merged.rows) {
    auto it = index.find(row.blinded_id);
    if (it == index.end()) {
      throw ValidationError("blinded_id '" + row.blinded_id + "' not in key");
    }
    if (it->second->dialogue_id != row.dialogue_id) {
      throw ValidationError("blinded_id '" + row.blinded_id + "' belongs to dialogue '" +
                            it->second->dialogue_id + "', sheet says '" + row.dialogue_id + "'");
    }
    if (!row.filled()) continue;
    out.push_back({it->second->model_name, row.dialogue_id, ParseFilledRow(row)});
  }
  return out;
}

std::vector<std::string> SheetColumns() {
  std::vector<std::string> cols = {"blinded_id", "dialogue_id", "dialogue_text",
                                   "reference_summary", "candidate_summary"};
  for (const ErrorTypeInfo& info : kErrorTypes) cols.emplace_back(info.column);
  cols.emplace_back("faithfulness");
  cols.emplace_back("annotator");
  return cols;
}

void WriteSheetCsv(const AnnotationSheet& sheet, std::ostream& out) {
  out << "# " << kAnnotationInstructions << "\r\n";
  WriteCsvRow(out, SheetColumns());
  for (const SheetRow& r : sheet.rows) WriteCsvRow(out, Row(r));
}

void WriteSheetCsv(const AnnotationSheet& sheet, const std::filesystem::path& path) {
  std::ofstream out = CreateOrThrow(path);
  WriteSheetCsv(sheet, out);
}

AnnotationSheet ReadSheetCsv(std::istream& in) {
  if (in.peek() == '#') {
    std::string skipped;
    std::getline(in, skipped);
  }
  const auto rows = ParseCsv(in);
  if (rows.empty()) throw ValidationError("annotation sheet is empty");
  const std::vector<std::string> cols = SheetColumns();
  ExpectHeader(rows[0], cols, "annotation sheet");
  AnnotationSheet sheet;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != cols.size()) {
      throw ValidationError("annotation sheet row " + std::to_string(i) + " has " +
                            std::to_string(c.size()) + " cells, expected " +
                            std::to_string(cols.size()));
    }
    SheetRow r;
    r.blinded_id = c[0];
    r.dialogue_id = c[1];
    r.dialogue_text = c[2];
    r.reference_summary = c[3];
    r.candidate_summary = c[4];
    for (size_t f = 0; f < kNumErrorTypes; ++f) r.flags[f] = c[5 + f];
    r.faithfulness = c[5 + kNumErrorTypes];
    r.annotator = c[6 + kNumErrorTypes];
    sheet.rows.push_back(std::move(r));
  }
  return sheet;
}

AnnotationSheet ReadSheetCsv(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  return ReadSheetCsv(in);
}

void WriteKeyCsv(const KeySheet& key, std::ostream& out) {
  WriteCsvRow(out, KeyColumns());
  for (const KeyEntry& e : key.entries) WriteCsvRow(out, {e.blinded_id, e.dialogue_id, e.model_name});
}

void WriteKeyCsv(const KeySheet& key, const std::filesystem::path& path) {
  std::ofstream out = CreateOrThrow(path);
  WriteKeyCsv(key, out);
}

KeySheet ReadKeyCsv(std::istream& in) {
  const auto rows = ParseCsv(in);
  if (rows.empty()) throw ValidationError("key sheet is empty");
  ExpectHeader(rows[0], KeyColumns(), "key sheet");
  KeySheet key;
  std::set<std::string> ids;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw ValidationError("key row " + std::to_string(i) + " needs 3 cells");
    if (!ids.insert(rows[i][0]).second) {
      throw ValidationError("duplicate blinded_id '" + rows[i][0] + "' in key");
    }
    key.entries.push_back({rows[i][0], rows[i][1], rows[i][2]});
  }
  return key;
}

KeySheet ReadKeyCsv(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  return ReadKeyCsv(in);
}

void WriteRevealedCsv(const AnnotationSheet& merged, const KeySheet& key, std::ostream& out) {
  std::vector<std::string> cols = SheetColumns();
  cols.insert(cols.begin() + 5, "model_name");
  WriteCsvRow(out, cols);
  for (const SheetRow& r : merged.rows) {
    const KeyEntry& e = key.Lookup(r.blinded_id);
    std::vector<std::string> cells = Row(r);
    cells.insert(cells.begin() + 5, e.model_name);
    WriteCsvRow(out, cells);
  }
}

std::vector<ModelOutput> ReadModelOutputs(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  std::vector<ModelOutput> outputs;
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (Trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(path.string() + ":" + std::to_string(number) + ": invalid JSON");
    }
    for (const char* field : {"model", "id", "summary"}) {
      if (!j.contains(field) || !j[field].is_string()) {
        throw ValidationError(path.string() + ":" + std::to_string(number) + ": missing string field '" +
                              field + "'");
      }
    }
    outputs.push_back({j["model"].get<std::string>(), j["id"].get<std::string>(),
                       j["summary"].get<std::string>()});
  }
  return outputs;
}

std::string CsvEscape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> ParseCsv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      any = true;
    } else if (c == ',') {
      end_field();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      // Blank lines carry no record.
      if (any || !row.empty() || !field.empty()) end_row();
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted csv field");
  if (any || !field.empty() || !row.empty()) end_row();
  return rows;
}

}  // namespace confit
