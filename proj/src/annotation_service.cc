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

#include "confit/annotation_service.h"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "confit/error.h"
#include "httplib.h"

namespace confit {
namespace {

using nlohmann::json;

uint32_t Crc32(std::string_view data) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

void WriteAllOrThrow(int fd, std::string_view data, const std::filesystem::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("write to " + path.string() + " failed: " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<size_t>(n));
  }
}

void SyncOrThrow(int fd, const std::filesystem::path& path) {
  if (::fsync(fd) != 0) throw Error("fsync of " + path.string() + " failed: " + std::strerror(errno));
}

int64_t NowMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json ErrorBody(const std::string& field, const std::string& message) {
  return {{"error", {{"field", field}, {"message", message}}}};
}

// ValidationError messages from record checks start with "field: ".
AnnotationService::Response Rejection(const ValidationError& e) {
  const std::string what = e.what();
  const size_t colon = what.find(": ");
  std::string field = colon == std::string::npos ? "" : what.substr(0, colon);
  if (field.find(' ') != std::string::npos) field.clear();
  return {400, ErrorBody(field, what)};
}

}  // namespace

json ToJson(const AnnotationRecord& r) {
  json j = {{"blinded_id", r.blinded_id}, {"annotator", r.annotator}};
  for (ErrorType t : kAllErrorTypes) j[std::string(Describe(t).column)] = r.flag(t);
  j["faithfulness"] = r.faithfulness;
  j["timestamp_ms"] = r.timestamp_ms;
  return j;
}

AnnotationRecord AnnotationRecordFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("body: expected a JSON object");
  AnnotationRecord r;
  for (const char* field : {"blinded_id", "annotator"}) {
    if (!j.contains(field) || !j[field].is_string()) {
      throw ValidationError(std::string(field) + ": required string");
    }
  }
  r.blinded_id = j["blinded_id"].get<std::string>();
  r.annotator = j["annotator"].get<std::string>();
  for (ErrorType t : kAllErrorTypes) {
    const std::string col(Describe(t).column);
    if (!j.contains(col)) continue;
    const json& v = j[col];
    if (v.is_boolean()) {
      r.set_flag(t, v.get<bool>());
    } else if (v.is_number_integer() && (v.get<int64_t>() == 0 || v.get<int64_t>() == 1)) {
      r.set_flag(t, v.get<int64_t>() == 1);
    } else {
      throw ValidationError(col + ": must be a boolean");
    }
  }
  if (!j.contains("faithfulness") || !j["faithfulness"].is_number_integer()) {
    throw ValidationError("faithfulness: required integer from 1 to 10");
  }
  const int64_t f = j["faithfulness"].get<int64_t>();
  if (f < kMinFaithfulness || f > kMaxFaithfulness) {
    throw ValidationError("faithfulness: must be an integer from 1 to 10, got " + std::to_string(f));
  }
  r.faithfulness = static_cast<int>(f);
  if (j.contains("timestamp_ms") && j["timestamp_ms"].is_number_integer()) {
    r.timestamp_ms = j["timestamp_ms"].get<int64_t>();
  }
  ValidateRecord(r);
  return r;
}

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  state_ = std::make_shared<const Snapshot>();
  Load();
}

std::string AnnotationStore::EncodeLine(const AnnotationRecord& record) {
  const std::string payload = ToJson(record).dump();
  char crc[9];
  std::snprintf(crc, sizeof(crc), "%08x", Crc32(payload));
  return std::string(crc) + "\t" + payload + "\n";
}

void AnnotationStore::Load() {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error("cannot read annotation store " + path_.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto state = std::make_shared<Snapshot>();
  size_t pos = 0;
  size_t good_end = 0;
  while (pos < data.size()) {
    const size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      ++skipped_;
      break;
    }
    const std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    good_end = pos;
    const size_t tab = line.find('\t');
    if (tab != 8) {
      ++skipped_;
      continue;
    }
    const std::string_view payload = line.substr(tab + 1);
    char crc[9];
    std::snprintf(crc, sizeof(crc), "%08x", Crc32(payload));
    if (line.substr(0, 8) != crc) {
      ++skipped_;
      continue;
    }
    try {
      AnnotationRecord r = AnnotationRecordFromJson(json::parse(payload));
      Key key{r.blinded_id, r.annotator};
      (*state)[key] = std::move(r);
    } catch (const std::exception&) {
      ++skipped_;
    }
  }
  // Drop an interrupted final line so later appends start on a fresh line.
  if (good_end < data.size()) std::filesystem::resize_file(path_, good_end);
  std::atomic_store(&state_, std::shared_ptr<const Snapshot>(std::move(state)));
}

void AnnotationStore::Append(const AnnotationRecord& record) {
  ValidateRecord(record);
  const std::string line = EncodeLine(record);
  std::lock_guard<std::mutex> lock(write_mu_);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open " + path_.string() + ": " + std::strerror(errno));
  try {
    WriteAllOrThrow(fd, line, path_);
    SyncOrThrow(fd, path_);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  auto next = std::make_shared<Snapshot>(*std::atomic_load(&state_));
  (*next)[{record.blinded_id, record.annotator}] = record;
  std::atomic_store(&state_, std::shared_ptr<const Snapshot>(std::move(next)));
}

std::shared_ptr<const AnnotationStore::Snapshot> AnnotationStore::snapshot() const {
  return std::atomic_load(&state_);
}

void AnnotationStore::Compact() {
  std::lock_guard<std::mutex> lock(write_mu_);
  const auto state = std::atomic_load(&state_);
  const std::filesystem::path tmp = path_.string() + ".compact";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open " + tmp.string() + ": " + std::strerror(errno));
  try {
    for (const auto& [key, record] : *state) WriteAllOrThrow(fd, EncodeLine(record), tmp);
    SyncOrThrow(fd, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  std::filesystem::rename(tmp, path_);
}

AnnotationService::AnnotationService(AnnotationStore& store, AnnotationSheet sheet,
                                     std::map<std::string, std::set<std::string>> assignments)
    : store_(store), sheet_(std::move(sheet)), assignments_(std::move(assignments)) {
  for (size_t i = 0; i < sheet_.rows.size(); ++i) {
    if (!row_of_.emplace(sheet_.rows[i].blinded_id, i).second) {
      throw ValidationError("duplicate blinded_id '" + sheet_.rows[i].blinded_id + "' in sheet");
    }
  }
  for (const auto& [annotator, ids] : assignments_) {
    for (const std::string& id : ids) {
      if (!row_of_.contains(id)) {
        throw ValidationError("assignment for '" + annotator + "' names unknown item '" + id + "'");
      }
    }
  }
}

std::map<std::string, std::set<std::string>> AnnotationService::AssignSplits(
    const AnnotationSheet& sheet, const std::vector<std::string>& annotators) {
  const std::vector<AnnotationSheet> parts = SplitSheet(sheet, annotators.size());
  std::map<std::string, std::set<std::string>> out;
  for (size_t i = 0; i < parts.size(); ++i) {
    for (const SheetRow& r : parts[i].rows) out[annotators[i]].insert(r.blinded_id);
  }
  return out;
}

bool AnnotationService::Assigned(const std::string& annotator,
                                 const std::string& blinded_id) const {
  auto it = assignments_.find(annotator);
  return it == assignments_.end() || it->second.contains(blinded_id);
}

json AnnotationService::TaskView(size_t row, size_t position, size_t total) const {
  const SheetRow& r = sheet_.rows[row];
  json group = json::array();
  for (const auto& [begin, end] : sheet_.Groups()) {
    if (row < begin || row >= end) continue;
    for (size_t i = begin; i < end; ++i) {
      group.push_back({{"blinded_id", sheet_.rows[i].blinded_id},
                       {"candidate_summary", sheet_.rows[i].candidate_summary}});
    }
  }
  return {{"done", false},
          {"item",
           {{"blinded_id", r.blinded_id},
            {"dialogue_id", r.dialogue_id},
            {"dialogue_text", r.dialogue_text},
            {"reference_summary", r.reference_summary},
            {"candidate_summary", r.candidate_summary}}},
          {"group", std::move(group)},
          {"position", position},
          {"total", total}};
}

AnnotationService::Response AnnotationService::Next(const std::string& annotator) const {
  if (annotator.empty()) return {400, ErrorBody("annotator", "annotator: required")};
  const auto snap = store_.snapshot();
  size_t total = 0;
  size_t completed = 0;
  std::optional<size_t> next;
  for (size_t i = 0; i < sheet_.rows.size(); ++i) {
    const std::string& id = sheet_.rows[i].blinded_id;
    if (!Assigned(annotator, id)) continue;
    ++total;
    if (snap->contains({id, annotator})) {
      ++completed;
    } else if (!next) {
      next = i;
    }
  }
  if (!next) return {200, {{"done", true}, {"completed", completed}, {"total", total}}};
  return {200, TaskView(*next, completed, total)};
}

AnnotationService::Response AnnotationService::Submit(const json& body) {
  AnnotationRecord record;
  try {
    record = AnnotationRecordFromJson(body);
  } catch (const ValidationError& e) {
    return Rejection(e);
  }
  if (!row_of_.contains(record.blinded_id)) {
    return {400, ErrorBody("blinded_id", "blinded_id: unknown item '" + record.blinded_id + "'")};
  }
  if (!Assigned(record.annotator, record.blinded_id)) {
    return {400, ErrorBody("blinded_id", "blinded_id: item not assigned to '" + record.annotator + "'")};
  }
  record.timestamp_ms = NowMs();
  store_.Append(record);
  return {200, {{"ok", true}, {"blinded_id", record.blinded_id}}};
}

AnnotationService::Response AnnotationService::Progress() const {
  const auto snap = store_.snapshot();
  std::set<std::string> annotators;
  for (const auto& [name, ids] : assignments_) annotators.insert(name);
  for (const auto& [key, record] : *snap) annotators.insert(key.second);
  json per = json::object();
  for (const std::string& a : annotators) {
    size_t assigned = 0;
    size_t completed = 0;
    for (const SheetRow& r : sheet_.rows) {
      if (!Assigned(a, r.blinded_id)) continue;
      ++assigned;
      if (snap->contains({r.blinded_id, a})) ++completed;
    }
    per[a] = {{"assigned", assigned}, {"completed", completed}};
  }
  return {200, {{"total_items", sheet_.rows.size()}, {"records", snap->size()}, {"annotators", per}}};
}

AnnotationService::Response AnnotationService::Export() {
  store_.Compact();
  const auto snap = store_.snapshot();
  std::vector<const AnnotationRecord*> records;
  for (const auto& [key, record] : *snap) records.push_back(&record);
  std::stable_sort(records.begin(), records.end(), [&](const auto* a, const auto* b) {
    const auto ra = row_of_.find(a->blinded_id);
    const auto rb = row_of_.find(b->blinded_id);
    const size_t ia = ra == row_of_.end() ? sheet_.rows.size() : ra->second;
    const size_t ib = rb == row_of_.end() ? sheet_.rows.size() : rb->second;
    return ia < ib;
  });
  json out = json::array();
  for (const auto* r : records) out.push_back(ToJson(*r));
  return {200, {{"records", std::move(out)}}};
}

AnnotationSheet AnnotationService::ExportSheet() const {
  const auto snap = store_.snapshot();
  AnnotationSheet out;
  for (const SheetRow& row : sheet_.rows) {
    bool any = false;
    for (auto it = snap->lower_bound({row.blinded_id, ""});
         it != snap->end() && it->first.first == row.blinded_id; ++it) {
      SheetRow filled = row;
      FillRow(filled, it->second);
      out.rows.push_back(std::move(filled));
      any = true;
    }
    if (!any) out.rows.push_back(row);
  }
  return out;
}

AnnotationService::Response AnnotationService::Meta() const {
  json types = json::array();
  for (ErrorType t : kAllErrorTypes) {
    const ErrorTypeInfo& info = Describe(t);
    types.push_back({{"field", info.column},
                     {"name", info.name},
                     {"definition", info.definition},
                     {"example", info.example}});
  }
  return {200,
          {{"api_version", "v1"},
           {"instructions", kAnnotationInstructions},
           {"error_types", std::move(types)},
           {"faithfulness",
            {{"min", kMinFaithfulness},
             {"max", kMaxFaithfulness},
             {"anchors",
              {{"1", "very poor"}, {"3", "poor"}, {"5", "neutral"}, {"7", "good"},
               {"10", "very good"}}}}},
           {"columns", SheetColumns()},
           {"total_items", sheet_.rows.size()}}};
}

AnnotationHttpServer::AnnotationHttpServer(AnnotationService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  Route();
}

AnnotationHttpServer::~AnnotationHttpServer() { Stop(); }

void AnnotationHttpServer::Route() {
  // Submissions mutate the store; the service's endpoint methods are otherwise
  // read-only, so only Submit and Export take the lock.
  auto send = [](httplib::Response& res, const AnnotationService::Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const std::string p = kApiPrefix;
  server_->Get(p + "/next", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.Next(req.has_param("annotator") ? req.get_param_value("annotator") : ""));
  });
  server_->Post(p + "/annotations",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                  const json body = json::parse(req.body, nullptr, false);
                  if (body.is_discarded()) {
                    send(res, {400, ErrorBody("body", "body: invalid JSON")});
                    return;
                  }
                  std::lock_guard<std::mutex> lock(mu_);
                  send(res, service_.Submit(body));
                });
  server_->Get(p + "/progress", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.Progress());
  });
  server_->Get(p + "/export", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu_);
    if (req.has_param("format") && req.get_param_value("format") == "csv") {
      std::ostringstream os;
      WriteSheetCsv(service_.ExportSheet(), os);
      res.set_content(os.str(), "text/csv");
      return;
    }
    send(res, service_.Export());
  });
  server_->Get(p + "/meta", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.Meta());
  });
}

int AnnotationHttpServer::Start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host.c_str())
                              : (server_->bind_to_port(host.c_str(), port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void AnnotationHttpServer::Listen(const std::string& host, int port) {
  if (!server_->listen(host.c_str(), port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void AnnotationHttpServer::Stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace confit
