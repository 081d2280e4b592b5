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

#include "oracles.h"

#include <algorithm>
#include <random>

namespace confit::testing {

double BruteOverlap(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                    size_t n) {
  if (cand.size() < n || ref.size() < n) return 0.0;
  std::vector<bool> used(ref.size() - n + 1, false);
  double overlap = 0.0;
  for (size_t i = 0; i + n <= cand.size(); ++i) {
    for (size_t j = 0; j + n <= ref.size(); ++j) {
      if (used[j]) continue;
      if (std::equal(cand.begin() + i, cand.begin() + i + n, ref.begin() + j)) {
        used[j] = true;
        overlap += 1.0;
        break;
      }
    }
  }
  return overlap;
}

namespace {

bool IsSubsequence(const std::vector<std::string>& sub, const std::vector<std::string>& seq) {
  size_t k = 0;
  for (const std::string& t : seq) {
    if (k < sub.size() && sub[k] == t) ++k;
  }
  return k == sub.size();
}

BruteScore FromCounts(double hit, double cand, double ref) {
  BruteScore s;
  if (cand == 0 || ref == 0) return s;
  s.precision = hit / cand;
  s.recall = hit / ref;
  if (s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

}  // namespace

size_t BruteLcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& shorter = a.size() <= b.size() ? a : b;
  const auto& longer = a.size() <= b.size() ? b : a;
  size_t best = 0;
  for (uint32_t mask = 0; mask < (1u << shorter.size()); ++mask) {
    std::vector<std::string> sub;
    for (size_t i = 0; i < shorter.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(shorter[i]);
    }
    if (sub.size() > best && IsSubsequence(sub, longer)) best = sub.size();
  }
  return best;
}

BruteScore BruteRougeN(const std::vector<std::string>& cand,
                       const std::vector<std::string>& ref, size_t n) {
  if (cand.size() < n || ref.size() < n) return {};
  return FromCounts(BruteOverlap(cand, ref, n), static_cast<double>(cand.size() - n + 1),
                    static_cast<double>(ref.size() - n + 1));
}

BruteScore BruteRougeL(const std::vector<std::string>& cand,
                       const std::vector<std::string>& ref) {
  return FromCounts(static_cast<double>(BruteLcs(cand, ref)), static_cast<double>(cand.size()),
                    static_cast<double>(ref.size()));
}

std::vector<std::pair<std::string, std::string>> RandomTextPairs(size_t count, uint64_t seed) {
  static const char* kWords[] = {"the", "cat", "sat", "on", "mat", "dog"};
  std::mt19937_64 rng(seed);
  auto text = [&] {
    std::string s;
    const size_t len = 1 + rng() % 9;
    for (size_t i = 0; i < len; ++i) {
      if (!s.empty()) s += ' ';
      s += kWords[rng() % 6];
    }
    return s;
  };
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < count; ++i) {
    std::string a = text();
    out.emplace_back(std::move(a), text());
  }
  return out;
}

}  // namespace confit::testing
