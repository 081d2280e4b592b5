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

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "confit/error.h"
#include "synthetic.h"
// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include "httplib.h"

namespace confit {
namespace {

using nlohmann::json;

struct ServiceFixture {
  std::vector<CorpusPair> pairs = testing::ChatCorpus(6, 31);
  BuiltSheets built = BuildSheets(testing::FakeModelOutputs(pairs), pairs, 8);
  testing::TempDir dir;
};

json Submission(const std::string& id, const std::string& annotator, int score,
                bool missing = false) {
  json j = {{"blinded_id", id}, {"annotator", annotator}, {"faithfulness", score}};
  j[std::string(Describe(ErrorType::kMissingInformation).column)] = missing;
  return j;
}

void ExpectBlinded(const std::string& payload) {
  for (const std::string& m : testing::FakeModelNames()) {
    EXPECT_EQ(payload.find(m), std::string::npos) << m << " in " << payload.substr(0, 200);
  }
}

TEST(AnnotationService, RejectsOutOfRangeScoreNamingField) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  AnnotationService service(store, f.built.sheet);
  const std::string id = f.built.sheet.rows[0].blinded_id;
  const auto r = service.Submit(Submission(id, "ann", 11));
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "faithfulness");
  EXPECT_EQ(service.Submit(Submission(id, "ann", 0)).body["error"]["field"], "faithfulness");
  EXPECT_EQ(service.Submit(Submission("nope", "ann", 5)).body["error"]["field"], "blinded_id");
  json bad_flag = Submission(id, "ann", 5);
  bad_flag[std::string(Describe(ErrorType::kTenseError).column)] = "often";
  EXPECT_EQ(service.Submit(bad_flag).body["error"]["field"],
            std::string(Describe(ErrorType::kTenseError).column));
  json no_annotator = Submission(id, "ann", 5);
  no_annotator.erase("annotator");
  EXPECT_EQ(service.Submit(no_annotator).body["error"]["field"], "annotator");
  EXPECT_TRUE(store.snapshot()->empty());
}

TEST(AnnotationService, NextWalksAssignedItemsThenSignalsCompletion) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  const auto assignments = AnnotationService::AssignSplits(f.built.sheet, {"ann", "bob"});
  AnnotationService service(store, f.built.sheet, assignments);
  const size_t mine = assignments.at("ann").size();
  EXPECT_EQ(mine, 12u);
  std::vector<std::string> seen;
  for (size_t i = 0; i < mine; ++i) {
    const auto next = service.Next("ann");
    ASSERT_EQ(next.status, 200);
    ASSERT_FALSE(next.body["done"].get<bool>());
    EXPECT_EQ(next.body["position"], i);
    EXPECT_EQ(next.body["total"], mine);
    EXPECT_EQ(next.body["group"].size(), 4u);
    const std::string id = next.body["item"]["blinded_id"];
    EXPECT_TRUE(assignments.at("ann").contains(id));
    seen.push_back(id);
    EXPECT_EQ(service.Submit(Submission(id, "ann", 6)).status, 200);
  }
  // Sheet order, so whole dialogue groups in turn.
  for (size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], f.built.sheet.rows[i].blinded_id);
  const auto done = service.Next("ann");
  EXPECT_TRUE(done.body["done"].get<bool>());
  EXPECT_EQ(done.body["completed"], mine);
  EXPECT_FALSE(service.Next("bob").body["done"].get<bool>());
  const std::string other = *assignments.at("bob").begin();
  EXPECT_EQ(service.Submit(Submission(other, "ann", 6)).status, 400);
  EXPECT_EQ(service.Next("").status, 400);

  const json progress = service.Progress().body;
  EXPECT_EQ(progress["annotators"]["ann"]["completed"], mine);
  EXPECT_EQ(progress["annotators"]["bob"]["completed"], 0);
  EXPECT_EQ(progress["total_items"], 24);
}

TEST(AnnotationService, ExportMatchesSheetMergePath) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  const std::vector<std::string> annotators = {"ann", "bob", "cy"};
  AnnotationService service(store, f.built.sheet,
                            AnnotationService::AssignSplits(f.built.sheet, annotators));
  auto parts = SplitSheet(f.built.sheet, 3);
  for (size_t p = 0; p < parts.size(); ++p) {
    for (size_t i = 0; i < parts[p].rows.size(); ++i) {
      SheetRow& row = parts[p].rows[i];
      const int score = 1 + static_cast<int>((p * 7 + i) % 10);
      const bool missing = i % 2 == 0;
      ASSERT_EQ(service.Submit(Submission(row.blinded_id, annotators[p], score, missing)).status,
                200);
      AnnotationRecord r;
      r.blinded_id = row.blinded_id;
      r.annotator = annotators[p];
      r.faithfulness = score;
      r.set_flag(ErrorType::kMissingInformation, missing);
      FillRow(row, r);
    }
  }
  const AnnotationSheet merged = MergeSheets(parts);
  EXPECT_EQ(service.ExportSheet(), merged);

  const json exported = service.Export().body["records"];
  const auto revealed = Reveal(merged, f.built.key);
  ASSERT_EQ(exported.size(), revealed.size());
  for (size_t i = 0; i < revealed.size(); ++i) {
    EXPECT_TRUE(AnnotationRecordFromJson(exported[i]).SameAnnotation(revealed[i].record)) << i;
  }
  // Export compacts the log to one line per record.
  std::ifstream in(store.path());
  size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 24u);
}

TEST(AnnotationService, PayloadsNeverNameModels) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  AnnotationService service(store, f.built.sheet);
  for (const SheetRow& row : f.built.sheet.rows) {
    ExpectBlinded(service.Next("ann").body.dump());
    ExpectBlinded(service.Submit(Submission(row.blinded_id, "ann", 4)).body.dump());
  }
  ExpectBlinded(service.Next("ann").body.dump());
  ExpectBlinded(service.Progress().body.dump());
  ExpectBlinded(service.Meta().body.dump());
  ExpectBlinded(service.Export().body.dump());
  std::ostringstream csv;
  WriteSheetCsv(service.ExportSheet(), csv);
  ExpectBlinded(csv.str());
}

TEST(AnnotationService, MetaDescribesProtocol) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  AnnotationService service(store, f.built.sheet);
  const json meta = service.Meta().body;
  EXPECT_EQ(meta["error_types"].size(), 8u);
  EXPECT_EQ(meta["faithfulness"]["min"], 1);
  EXPECT_EQ(meta["faithfulness"]["max"], 10);
  EXPECT_EQ(meta["columns"].size(), 15u);
  EXPECT_EQ(meta["instructions"], std::string(kAnnotationInstructions));
  EXPECT_NE(std::string(kAnnotationInstructions).find("faithfulness"), std::string::npos);
}

TEST(AnnotationStore, ReloadKeepsLatestRecord) {
  testing::TempDir dir;
  AnnotationRecord r;
  r.blinded_id = "b1";
  r.annotator = "ann";
  r.faithfulness = 3;
  {
    AnnotationStore store(dir / "s.log");
    store.Append(r);
    r.faithfulness = 8;
    store.Append(r);
    r.blinded_id = "b2";
    store.Append(r);
  }
  AnnotationStore store(dir / "s.log");
  EXPECT_EQ(store.snapshot()->size(), 2u);
  EXPECT_EQ(store.snapshot()->at({"b1", "ann"}).faithfulness, 8);
  EXPECT_EQ(store.skipped_lines(), 0u);
  r.faithfulness = 11;
  EXPECT_THROW(store.Append(r), ValidationError);
}

TEST(AnnotationStore, ToleratesInterruptedAndCorruptLines) {
  testing::TempDir dir;
  AnnotationRecord r;
  r.blinded_id = "b1";
  r.annotator = "ann";
  r.faithfulness = 5;
  std::string good = AnnotationStore::EncodeLine(r);
  r.blinded_id = "b2";
  std::string corrupt = AnnotationStore::EncodeLine(r);
  corrupt[0] = corrupt[0] == '0' ? '1' : '0';
  r.blinded_id = "b3";
  const std::string full = AnnotationStore::EncodeLine(r);
  const std::string partial = full.substr(0, full.size() / 2);
  testing::WriteFile(dir / "s.log", good + corrupt + "garbage\n" + partial);
  {
    AnnotationStore store(dir / "s.log");
    EXPECT_EQ(store.snapshot()->size(), 1u);
    EXPECT_TRUE(store.snapshot()->contains({"b1", "ann"}));
    EXPECT_EQ(store.skipped_lines(), 3u);
    r.blinded_id = "b4";
    store.Append(r);
  }
  AnnotationStore store(dir / "s.log");
  EXPECT_EQ(store.snapshot()->size(), 2u);
  EXPECT_TRUE(store.snapshot()->contains({"b4", "ann"}));
  EXPECT_EQ(store.skipped_lines(), 2u);
}

TEST(AnnotationStore, ConcurrentDuplicatesLastWriteWins) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  AnnotationService service(store, f.built.sheet);
  const std::string id = f.built.sheet.rows[0].blinded_id;
  std::vector<std::thread> threads;
  std::vector<int> status(8, 0);
  std::mutex mu;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      // The HTTP layer serializes Submit; mirror that here.
      std::lock_guard<std::mutex> lock(mu);
      status[t] = service.Submit(Submission(id, "ann", 1 + t)).status;
    });
  }
  for (auto& th : threads) th.join();
  for (int s : status) EXPECT_EQ(s, 200);
  EXPECT_EQ(store.snapshot()->size(), 1u);
  std::ifstream in(store.path());
  std::string line, last;
  size_t lines = 0;
  while (std::getline(in, line)) {
    last = line;
    ++lines;
  }
  EXPECT_EQ(lines, 8u);
  const AnnotationRecord from_log = AnnotationRecordFromJson(json::parse(last.substr(9)));
  EXPECT_EQ(store.snapshot()->at({id, "ann"}).faithfulness, from_log.faithfulness);
  AnnotationStore reloaded(store.path());
  EXPECT_EQ(reloaded.snapshot()->at({id, "ann"}).faithfulness, from_log.faithfulness);
}

TEST(AnnotationStore, ConcurrentAppendsDirectly) {
  testing::TempDir dir;
  AnnotationStore store(dir / "s.log");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        AnnotationRecord r;
        r.blinded_id = "b" + std::to_string(i);
        r.annotator = "a" + std::to_string(t);
        r.faithfulness = 1 + i % 10;
        store.Append(r);
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(store.snapshot()->size(), 100u);
  AnnotationStore reloaded(dir / "s.log");
  EXPECT_EQ(reloaded.snapshot()->size(), 100u);
  EXPECT_EQ(reloaded.skipped_lines(), 0u);
}

TEST(AnnotationHttpServer, EndpointsOverHttp) {
  ServiceFixture f;
  AnnotationStore store(f.dir / "store.log");
  AnnotationService service(store, f.built.sheet);
  AnnotationHttpServer server(service);
  const int port = server.Start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  const std::string p = kApiPrefix;

  auto meta = client.Get(p + "/meta");
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, 200);
  ExpectBlinded(meta->body);

  auto next = client.Get(p + "/next?annotator=ann");
  ASSERT_TRUE(next);
  ExpectBlinded(next->body);
  const std::string id = json::parse(next->body)["item"]["blinded_id"];

  auto bad = client.Post(p + "/annotations", Submission(id, "ann", 11).dump(), "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["error"]["field"], "faithfulness");
  auto garbled = client.Post(p + "/annotations", "{not json", "application/json");
  ASSERT_TRUE(garbled);
  EXPECT_EQ(garbled->status, 400);

  // Concurrent duplicate submissions over the wire are all acknowledged.
  std::vector<std::thread> threads;
  std::vector<int> status(4, 0);
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post(p + "/annotations", Submission(id, "ann", 2 + t).dump(), "application/json");
      status[t] = r ? r->status : -1;
    });
  }
  for (auto& th : threads) th.join();
  for (int s : status) EXPECT_EQ(s, 200);

  auto progress = client.Get(p + "/progress");
  ASSERT_TRUE(progress);
  EXPECT_EQ(json::parse(progress->body)["records"], 1);
  auto exported = client.Get(p + "/export");
  ASSERT_TRUE(exported);
  ExpectBlinded(exported->body);
  EXPECT_EQ(json::parse(exported->body)["records"].size(), 1u);
  auto csv = client.Get(p + "/export?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");
  std::istringstream in(csv->body);
  EXPECT_EQ(ReadSheetCsv(in), service.ExportSheet());
  EXPECT_EQ(client.Get("/api/v0/meta")->status, 404);
  server.Stop();
}

}  // namespace
}  // namespace confit
