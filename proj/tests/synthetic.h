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

// Deterministic synthetic dialogues for tests. Every word is covered by the
// bundled lexicon so tags are predictable.

#ifndef CONFIT_TESTS_SYNTHETIC_H_
#define CONFIT_TESTS_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "confit/annotation.h"
#include "confit/corpus.h"
#include "confit/seq2seq.h"

namespace confit::testing {

// Two named speakers, a third person mentioned, an hour, 4 to 7 turns. The
// summary holds both speaker names, two distinct verbs (the first one has a
// paraphrase synonym), two distinct nouns and the hour.
CorpusPair ChatPair(uint64_t seed, const std::string& id);
std::vector<CorpusPair> ChatCorpus(size_t n, uint64_t seed);

// Two speakers that never share a content word; short summaries.
CorpusPair DisjointSpeakerPair(uint64_t seed, const std::string& id);

// Short dialogue with a single-sentence summary, used for memorization.
CorpusPair TinyPair(uint64_t seed, const std::string& id);

// Most frequent corpus tokens, ":" always included, exactly `size` entries
// when the corpus has enough distinct tokens.
Vocab FixedSizeVocab(const std::vector<CorpusPair>& pairs, size_t size);

// d_model 8, two heads, 2+2 layers, a vocabulary of 50.
ModelState GradCheckModel(const std::vector<CorpusPair>& pairs, uint64_t seed);

// Model names used by FakeModelOutputs; none occurs in the synthetic texts.
std::vector<std::string> FakeModelNames();
// One output per (model, pair): the reference with a per-model edit.
std::vector<ModelOutput> FakeModelOutputs(const std::vector<CorpusPair>& pairs);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, const std::string& content);

}  // namespace confit::testing

#endif  // CONFIT_TESTS_SYNTHETIC_H_
