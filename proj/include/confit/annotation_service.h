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

// Persistent annotation store and the task service behind the annotation UI.

#ifndef CONFIT_ANNOTATION_SERVICE_H_
#define CONFIT_ANNOTATION_SERVICE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "confit/annotation.h"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace confit {

nlohmann::json ToJson(const AnnotationRecord& record);
// Throws ValidationError naming the offending field.
AnnotationRecord AnnotationRecordFromJson(const nlohmann::json& j);

// Append-only log of "crc32hex<TAB>json" lines. Lines with a bad checksum or
// no trailing newline (an interrupted append) are ignored on load. The latest
// record per (blinded_id, annotator) wins.
class AnnotationStore {
 public:
  using Key = std::pair<std::string, std::string>;
  using Snapshot = std::map<Key, AnnotationRecord>;

  explicit AnnotationStore(std::filesystem::path path);

  // Validates, appends and fsyncs. Concurrent callers are serialized.
  void Append(const AnnotationRecord& record);
  // Lock-free view of the current state.
  std::shared_ptr<const Snapshot> snapshot() const;
  // Rewrites the log with one line per live record.
  void Compact();
  size_t skipped_lines() const { return skipped_; }
  const std::filesystem::path& path() const { return path_; }

  static std::string EncodeLine(const AnnotationRecord& record);

 private:
  void Load();

  std::filesystem::path path_;
  std::mutex write_mu_;
  std::shared_ptr<const Snapshot> state_;
  size_t skipped_ = 0;
};

// Endpoint logic, independent of the transport. Results are JSON bodies with
// an HTTP status.
class AnnotationService {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  // Annotators without an assignment may work on every item.
  AnnotationService(AnnotationStore& store, AnnotationSheet sheet,
                    std::map<std::string, std::set<std::string>> assignments = {});

  // Assigns the i-th SplitSheet part to the i-th annotator.
  static std::map<std::string, std::set<std::string>> AssignSplits(
      const AnnotationSheet& sheet, const std::vector<std::string>& annotators);

  Response Next(const std::string& annotator) const;
  Response Submit(const nlohmann::json& body);
  Response Progress() const;
  // Records in sheet order, then annotator; compacts the store.
  Response Export();
  // The sheet with one filled row per record, in sheet order.
  AnnotationSheet ExportSheet() const;
  Response Meta() const;

 private:
  bool Assigned(const std::string& annotator, const std::string& blinded_id) const;
  nlohmann::json TaskView(size_t row, size_t position, size_t total) const;

  AnnotationStore& store_;
  AnnotationSheet sheet_;
  std::map<std::string, size_t> row_of_;
  std::map<std::string, std::set<std::string>> assignments_;
};

inline constexpr const char* kApiPrefix = "/api/v1";

// HTTP transport for AnnotationService. Routes (under /api/v1):
//   GET next?annotator=NAME, POST annotations, GET progress,
//   GET export[?format=csv], GET meta.
class AnnotationHttpServer {
 public:
  explicit AnnotationHttpServer(AnnotationService& service);
  ~AnnotationHttpServer();

  // Starts listening in a background thread; port 0 picks a free port.
  // Returns the bound port.
  int Start(const std::string& host, int port);
  // Blocks until the server stops.
  void Listen(const std::string& host, int port);
  void Stop();

 private:
  void Route();

  AnnotationService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex mu_;
  std::thread thread_;
};

}  // namespace confit

#endif  // CONFIT_ANNOTATION_SERVICE_H_
