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

// confit: command-line front end for the toolkit.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confit/annotation.h"
#include "confit/annotation_service.h"
#include "confit/corpus.h"
#include "confit/error.h"
#include "confit/eval.h"
#include "confit/negsample.h"
#include "confit/random.h"
#include "confit/seq2seq.h"
#include "confit/text_util.h"
#include "confit/trainer.h"
#include "json.hpp"

namespace confit {
namespace {

std::ofstream OpenOutput(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

std::vector<CorpusPair> LoadCorpus(const std::string& path, const std::string& format) {
  return LoadDialogues(path, ParseCorpusFormat(format));
}

std::unique_ptr<Summarizer> MakeSummarizer(const std::string& kind,
                                           std::unique_ptr<ModelState>& holder) {
  if (kind == "none") return nullptr;
  if (kind == "lead") return std::make_unique<LeadSummarizer>();
  holder = std::make_unique<ModelState>(LoadCheckpoint(kind));
  return std::make_unique<ModelSummarizer>(*holder);
}

std::set<StrategyTag> ParseStrategies(const std::string& list) {
  TrainConfig c;
  SetConfigValue(c, "strategies", list);
  return c.strategies;
}

void AddConvert(CLI::App& app) {
  auto* cmd = app.add_subcommand("convert", "Normalize a corpus to jsonl");
  auto in = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto format = std::make_shared<std::string>("samsum_raw");
  cmd->add_option("--in", *in, "Input corpus")->required();
  cmd->add_option("--format", *format, "jsonl or samsum_raw");
  cmd->add_option("--out", *out, "Output jsonl")->required();
  cmd->callback([=] {
    const auto pairs = LoadCorpus(*in, *format);
    WriteJsonl(std::filesystem::path(*out), pairs);
    std::cerr << "wrote " << pairs.size() << " pairs to " << *out << '\n';
  });
}

void AddSplit(CLI::App& app) {
  auto* cmd = app.add_subcommand("split", "Deterministic train/dev/test split");
  auto in = std::make_shared<std::string>();
  auto dir = std::make_shared<std::string>();
  auto fractions = std::make_shared<std::vector<double>>(std::vector<double>{0.8, 0.1, 0.1});
  auto seed = std::make_shared<uint64_t>(0);
  cmd->add_option("--corpus", *in, "Input jsonl")->required();
  cmd->add_option("--out-dir", *dir, "Directory for train/dev/test.jsonl")->required();
  cmd->add_option("--fractions", *fractions, "Three fractions")->expected(3);
  cmd->add_option("--seed", *seed, "Shuffle seed");
  cmd->callback([=] {
    const CorpusSplits s = SplitCorpus(LoadCorpus(*in, "jsonl"),
                                       {(*fractions)[0], (*fractions)[1], (*fractions)[2]}, *seed);
    const std::filesystem::path d(*dir);
    WriteJsonl(d / "train.jsonl", s.train);
    WriteJsonl(d / "dev.jsonl", s.dev);
    WriteJsonl(d / "test.jsonl", s.test);
    std::cerr << s.train.size() << '/' << s.dev.size() << '/' << s.test.size() << '\n';
  });
}

void AddAugment(CLI::App& app) {
  auto* cmd = app.add_subcommand("augment", "Build contrastive samples");
  auto in = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto summarizer = std::make_shared<std::string>("lead");
  auto strategies = std::make_shared<std::string>("all");
  auto seed = std::make_shared<uint64_t>(0);
  auto cfg = std::make_shared<SampleConfig>();
  cmd->add_option("--in,--corpus", *in, "Input jsonl")->required();
  cmd->add_option("--out", *out, "Output jsonl of samples")->required();
  cmd->add_option("--summarizer", *summarizer, "lead, none, or a checkpoint path");
  cmd->add_option("--strategies", *strategies, "Comma list or all");
  cmd->add_option("--n-positives", cfg->n_positives, "Positives per sample");
  cmd->add_option("--ratio,--delete-ratio", cfg->delete_ratio, "Utterance deletion ratio");
  cmd->add_option("--seed", *seed, "Seed");
  cmd->callback([=] {
    const auto pairs = LoadCorpus(*in, "jsonl");
    std::unique_ptr<ModelState> model;
    const auto summ = MakeSummarizer(*summarizer, model);
    SampleConfig sc = *cfg;
    sc.strategies = ParseStrategies(*strategies);
    const RuleParaphraser paraphraser;
    const NameSwapInfiller infiller;
    std::ofstream os = OpenOutput(*out);
    size_t built = 0;
    size_t skipped = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      try {
        const ContrastiveSample s = BuildContrastiveSample(
            pairs[i], summ.get(), paraphraser, infiller, sc, DeriveSeed({*seed, i}));
        os << ToJson(s).dump() << '\n';
        ++built;
      } catch (const SampleUnbuildable& e) {
        std::cerr << "skipped: " << e.what() << '\n';
        ++skipped;
      }
    }
    std::cerr << "built " << built << " samples, " << skipped << " unbuildable\n";
  });
}

void AddTrain(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Fine-tune a model");
  auto corpus = std::make_shared<std::string>();
  auto config_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto summarizer = std::make_shared<std::string>("model");
  auto init = std::make_shared<std::string>();
  auto overrides = std::make_shared<std::map<std::string, std::string>>();
  cmd->add_option("--corpus", *corpus, "Training jsonl")->required();
  cmd->add_option("--config", *config_path, "key = value config file");
  cmd->add_option("--out", *out, "Output directory")->required();
  cmd->add_option("--summarizer", *summarizer,
                  "Summarizer for model-backed negatives: model (the one being trained), lead, none, or a checkpoint");
  cmd->add_option("--init", *init, "Start from this checkpoint");
  cmd->add_option("--preset", (*overrides)["preset"], "Preset profile");
  for (const auto& [key, value] : ConfigEntries(TrainConfig{})) {
    cmd->add_option("--" + key, (*overrides)[key], "Overrides " + key);
  }
  cmd->callback([=] {
    TrainConfig config;
    if (!(*overrides)["preset"].empty()) config = Preset((*overrides)["preset"]);
    if (!config_path->empty()) config = LoadConfig(*config_path, config);
    for (const auto& [key, value] : *overrides) {
      if (key != "preset" && !value.empty()) SetConfigValue(config, key, value);
    }
    const std::filesystem::path dir(*out);
    if (config.checkpoint_dir.empty()) config.checkpoint_dir = dir;
    const auto pairs = LoadCorpus(*corpus, "jsonl");
    ModelState model = init->empty()
                           ? ModelState::Initialize(config.model, Vocab::FromCorpus(pairs),
                                                    config.seed)
                           : LoadCheckpoint(*init);
    std::unique_ptr<ModelState> summarizer_model;
    const auto summ = *summarizer == "model" ? nullptr : MakeSummarizer(*summarizer, summarizer_model);
    TrainComponents components;
    components.summarizer = summ.get();
    components.summarize_with_model = *summarizer == "model";
    std::filesystem::create_directories(dir);
    {
      std::ofstream cfg(dir / "config.txt");
      for (const auto& [key, value] : ConfigEntries(config)) cfg << key << " = " << value << '\n';
    }
    const TrainReport report = Train(pairs, model, config, components, &std::cerr);
    WriteReportJsonl(report, dir / "report.jsonl");
    std::cerr << "checkpoint " << report.final_checkpoint.string() << ", " << report.steps.size()
              << " steps in " << report.wall_seconds << " s\n";
  });
}

void AddGenerate(CLI::App& app) {
  auto* cmd = app.add_subcommand("generate", "Summarize dialogues with a checkpoint");
  auto ckpt = std::make_shared<std::string>();
  auto corpus = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto beam = std::make_shared<int>(1);
  cmd->add_option("--checkpoint", *ckpt, "Model checkpoint")->required();
  cmd->add_option("--corpus", *corpus, "Dialogues jsonl")->required();
  cmd->add_option("--out", *out, "Candidates jsonl")->required();
  cmd->add_option("--beam", *beam, "Beam size; 1 is greedy");
  cmd->callback([=] {
    const ModelState model = LoadCheckpoint(*ckpt);
    WriteCandidates(GenerateCandidates(model, LoadCorpus(*corpus, "jsonl"), DecodeStrategy::Beam(*beam)),
                    *out);
  });
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os = OpenOutput(path);
  os << text;
}

void AddEvaluate(CLI::App& app) {
  auto* cmd = app.add_subcommand("evaluate", "ROUGE or annotation reports");
  auto candidates = std::make_shared<std::string>();
  auto corpus = std::make_shared<std::string>();
  auto report = std::make_shared<std::string>();
  auto system = std::make_shared<std::string>("system");
  auto scorer_ckpt = std::make_shared<std::string>();
  auto annotations = std::make_shared<std::string>();
  auto key = std::make_shared<std::string>();
  auto majority = std::make_shared<bool>(false);
  cmd->add_option("--candidates", *candidates, "Candidates jsonl");
  cmd->add_option("--corpus", *corpus, "Test jsonl with references");
  cmd->add_option("--system", *system, "Row label");
  cmd->add_option("--likelihood-checkpoint", *scorer_ckpt, "Add a likelihood scorer");
  cmd->add_option("--annotations", *annotations, "Merged annotation sheet csv");
  cmd->add_option("--key", *key, "Key sheet csv");
  cmd->add_flag("--majority", *majority, "Majority vote instead of any annotator");
  cmd->add_option("--report", *report, "Report path; a .csv twin is written alongside")->required();
  cmd->callback([=] {
    const std::filesystem::path path(*report);
    if (!annotations->empty()) {
      if (key->empty()) throw ValidationError("--annotations needs --key");
      const KeySheet k = ReadKeyCsv(std::filesystem::path(*key));
      std::vector<AnnotationRecord> records;
      for (const RevealedRecord& r : Reveal(ReadSheetCsv(std::filesystem::path(*annotations)), k)) {
        records.push_back(r.record);
      }
      const ErrorDistribution dist = ComputeErrorDistribution(
          records, k, *majority ? FlagAggregation::kMajority : FlagAggregation::kAny);
      std::vector<std::string> warnings;
      const auto faith = FaithfulnessMeans(records, k, &warnings);
      for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
      const std::string text = FormatErrorDistribution(dist) + "\n" + FormatFaithfulness(faith);
      WriteText(path, text);
      WriteText(path.string() + ".csv", ErrorDistributionCsv(dist));
      std::cout << text;
      return;
    }
    if (candidates->empty() || corpus->empty()) {
      throw ValidationError("evaluate needs --candidates and --corpus, or --annotations and --key");
    }
    std::unique_ptr<ModelState> model;
    std::unique_ptr<LikelihoodScorer> scorer;
    std::vector<const Scorer*> scorers;
    if (!scorer_ckpt->empty()) {
      model = std::make_unique<ModelState>(LoadCheckpoint(*scorer_ckpt));
      scorer = std::make_unique<LikelihoodScorer>(*model);
      scorers.push_back(scorer.get());
    }
    const MetricRow row = EvaluateCandidates(*system, ReadCandidates(*candidates),
                                             LoadCorpus(*corpus, "jsonl"), scorers);
    WriteText(path, FormatMetricTable({row}));
    WriteText(path.string() + ".csv", MetricTableCsv({row}));
    std::cout << FormatMetricTable({row});
  });
}

AnnotationHttpServer* g_server = nullptr;

void AddAnnotate(CLI::App& app) {
  auto* cmd = app.add_subcommand("annotate", "Blinded annotation workflow");
  cmd->require_subcommand(1);

  auto* build = cmd->add_subcommand("build", "Annotation and key sheets from model outputs");
  auto outputs = std::make_shared<std::string>();
  auto corpus = std::make_shared<std::string>();
  auto sheet = std::make_shared<std::string>();
  auto key = std::make_shared<std::string>();
  auto seed = std::make_shared<uint64_t>(0);
  build->add_option("--outputs", *outputs, "jsonl of {model, id, summary}")->required();
  build->add_option("--corpus", *corpus, "Dialogues jsonl")->required();
  build->add_option("--sheet", *sheet, "Annotation sheet csv")->required();
  build->add_option("--key", *key, "Key sheet csv")->required();
  build->add_option("--seed", *seed, "Shuffle seed");
  build->callback([=] {
    const BuiltSheets b = BuildSheets(ReadModelOutputs(*outputs), LoadCorpus(*corpus, "jsonl"), *seed);
    WriteSheetCsv(b.sheet, std::filesystem::path(*sheet));
    WriteKeyCsv(b.key, std::filesystem::path(*key));
    std::cerr << b.sheet.rows.size() << " items in " << b.sheet.Groups().size() << " groups\n";
  });

  auto* split = cmd->add_subcommand("split", "Split a sheet among annotators");
  auto split_in = std::make_shared<std::string>();
  auto split_dir = std::make_shared<std::string>();
  auto n = std::make_shared<size_t>(1);
  split->add_option("--sheet", *split_in, "Annotation sheet csv")->required();
  split->add_option("--n", *n, "Number of annotators")->required();
  split->add_option("--out-dir", *split_dir, "Directory for part_NN.csv")->required();
  split->callback([=] {
    const auto parts = SplitSheet(ReadSheetCsv(std::filesystem::path(*split_in)), *n);
    for (size_t i = 0; i < parts.size(); ++i) {
      std::ostringstream name;
      name << "part_" << (i < 9 ? "0" : "") << i + 1 << ".csv";
      WriteSheetCsv(parts[i], std::filesystem::path(*split_dir) / name.str());
    }
  });

  auto* merge = cmd->add_subcommand("merge", "Merge filled sheets");
  auto merge_in = std::make_shared<std::vector<std::string>>();
  auto merge_out = std::make_shared<std::string>();
  merge->add_option("sheets", *merge_in, "Filled sheets")->required();
  merge->add_option("--out", *merge_out, "Merged sheet csv")->required();
  merge->callback([=] {
    std::vector<AnnotationSheet> sheets;
    for (const std::string& p : *merge_in) sheets.push_back(ReadSheetCsv(std::filesystem::path(p)));
    WriteSheetCsv(MergeSheets(sheets), std::filesystem::path(*merge_out));
  });

  auto* reveal = cmd->add_subcommand("reveal", "Attach model names to a merged sheet");
  auto reveal_in = std::make_shared<std::string>();
  auto reveal_key = std::make_shared<std::string>();
  auto reveal_out = std::make_shared<std::string>();
  reveal->add_option("--sheet", *reveal_in, "Merged sheet csv")->required();
  reveal->add_option("--key", *reveal_key, "Key sheet csv")->required();
  reveal->add_option("--out", *reveal_out, "Revealed csv")->required();
  reveal->callback([=] {
    const AnnotationSheet merged = ReadSheetCsv(std::filesystem::path(*reveal_in));
    const KeySheet k = ReadKeyCsv(std::filesystem::path(*reveal_key));
    const auto records = Reveal(merged, k);
    std::ofstream os = OpenOutput(*reveal_out);
    WriteRevealedCsv(merged, k, os);
    std::cerr << records.size() << " annotated records\n";
  });

  auto* serve = cmd->add_subcommand("serve", "Run the annotation task service");
  auto serve_sheet = std::make_shared<std::string>();
  auto store = std::make_shared<std::string>();
  auto host = std::make_shared<std::string>("127.0.0.1");
  auto port = std::make_shared<int>(8080);
  auto annotators = std::make_shared<std::vector<std::string>>();
  serve->add_option("--sheet", *serve_sheet, "Annotation sheet csv")->required();
  serve->add_option("--store", *store, "Append-only record log")->required();
  serve->add_option("--host", *host, "Bind address");
  serve->add_option("--port", *port, "Port");
  serve->add_option("--annotators", *annotators, "Assign sheet splits in this order")->delimiter(',');
  serve->callback([=] {
    const AnnotationSheet s = ReadSheetCsv(std::filesystem::path(*serve_sheet));
    AnnotationStore st(*store);
    if (st.skipped_lines() > 0) {
      std::cerr << "ignored " << st.skipped_lines() << " damaged store lines\n";
    }
    auto assignments = annotators->empty() ? std::map<std::string, std::set<std::string>>{}
                                           : AnnotationService::AssignSplits(s, *annotators);
    AnnotationService service(st, s, std::move(assignments));
    AnnotationHttpServer server(service);
    g_server = &server;
    std::signal(SIGINT, [](int) {
      if (g_server != nullptr) g_server->Stop();
    });
    std::cerr << "serving " << s.rows.size() << " items on http://" << *host << ':' << *port
              << kApiPrefix << '\n';
    server.Listen(*host, *port);
    g_server = nullptr;
  });
}

}  // namespace
}  // namespace confit

int main(int argc, char** argv) {
  CLI::App app{"confit: contrastive fine-tuning toolkit for dialogue summarization"};
  app.require_subcommand(1);
  confit::AddConvert(app);
  confit::AddSplit(app);
  confit::AddAugment(app);
  confit::AddTrain(app);
  confit::AddGenerate(app);
  confit::AddEvaluate(app);
  confit::AddAnnotate(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
