// Copyright 2026 The Condenser Forge Authors
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

#include "commands.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "cforge/arch.h"
#include "cforge/cost.h"
#include "cforge/error.h"
#include "cforge/explore.h"
#include "cforge/graph.h"
#include "cforge/synth.h"
#include "cforge/train.h"
#include "cforge/weights.h"
#include "manifest.h"

#ifndef CFORGE_VERSION
#define CFORGE_VERSION "0.0.0"
#endif

namespace cforge::cli {

namespace {

namespace fs = std::filesystem;

// Parses "AxB" or "AxBxC" into its integer fields.
std::vector<std::int64_t> ParseDims(const std::string& text, std::size_t count,
                                    const std::string& flag) {
  std::vector<std::int64_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      dims.push_back(v);
    } catch (const std::exception&) {
      dims.clear();
      break;
    }
  }
  if (dims.size() != count) {
    throw Error(ErrorCode::kInvalidArgument,
                flag + " expects " + (count == 2 ? "HxW" : "CxHxW") + ", got '" + text + "'");
  }
  return dims;
}

ArchSpec LoadArch(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "arch file not found: " + path);
  try {
    return ParseArch(ReadBytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::string ManifestPath(const std::string& flag, const std::string& primary) {
  return flag.empty() ? primary + ".run.json" : flag;
}

Json MetricsJson(const Metrics& m) {
  Json per_class = Json::array();
  for (double a : m.per_class_accuracy) per_class.push_back(std::isnan(a) ? Json(nullptr) : Json(a));
  return Json{{"count", m.count},
              {"accuracy_pct", m.accuracy},
              {"per_class_accuracy_pct", per_class},
              {"confusion", m.confusion},
              {"mean_head_discrepancy", m.mean_discrepancy}};
}

Json CostJson(const CostReport& c) {
  return Json{{"params", c.params},
              {"macs", c.macs},
              {"flops", c.flops},
              {"params_m", static_cast<double>(c.params) / 1e6},
              {"flops_m", static_cast<double>(c.flops) / 1e6},
              {"convention", c.Convention()}};
}

Json LatencyJson(const LatencyStats& s) {
  return Json{{"batch", s.batch_size},
              {"reps", s.reps},
              {"median_ms_per_sample", s.median_ms_per_sample},
              {"p90_ms_per_sample", s.p90_ms_per_sample},
              {"environment", s.environment}};
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
  std::string out;
  std::int64_t count = 822;
  double defect_frac = 422.0 / 822.0;
  std::string size = "64x64";
  std::uint64_t seed = 0;
  std::string manifest;
};

int GenData(const GenDataOptions& o, const std::vector<std::string>& argv, bool json,
            std::ostream& out) {
  const auto hw = ParseDims(o.size, 2, "--size");
  GenConfig cfg;
  cfg.count = o.count;
  cfg.defect_fraction = o.defect_frac;
  cfg.height = static_cast<int>(hw[0]);
  cfg.width = static_cast<int>(hw[1]);
  cfg.seed = o.seed;
  cfg.Validate();
  const Dataset data = GenerateDataset(cfg);
  fs::create_directories(o.out);
  WriteDataset(data, o.out);

  const auto defective = std::count_if(data.samples.begin(), data.samples.end(),
                                       [](const PlateSample& s) { return s.defective; });
  RunManifest m;
  m.command = "gen-data";
  m.argv = argv;
  m.config = Json{{"out", o.out},     {"count", o.count}, {"defect_frac", o.defect_frac},
                  {"size", o.size},   {"seed", o.seed}};
  m.seed = o.seed;
  m.version = CFORGE_VERSION;
  m.AddOutput(o.out);
  const std::string manifest_path = ManifestPath(o.manifest, o.out);
  m.Save(manifest_path);

  const std::size_t n = data.samples.size();
  if (json) {
    out << Json{{"out", o.out},
                {"samples", n},
                {"defective", defective},
                {"non_defective", static_cast<std::int64_t>(n) - defective},
                {"sha256", m.outputs.front().sha256},
                {"manifest", manifest_path}}
               .dump()
        << "\n";
  } else {
    out << "wrote " << n << " samples (" << defective << " defective, " << n - defective
        << " non-defective) to " << o.out << "\n"
        << "sha256 " << m.outputs.front().sha256 << "\n"
        << "manifest " << manifest_path << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string arch;
  std::string data;
  int epochs = 100;
  int batch = 5;
  double lr = 1e-3;
  double momentum = 0.0;
  double lambda_d = 0.1;
  double train_frac = 0.25;
  std::uint64_t seed = 0;
  std::string weights_out = "weights.ldnw";
  std::string report = "report.json";
  std::string csv;
  int bench_reps = 10;
  std::string manifest;
};

int TrainCmd(const TrainOptions& o, const std::vector<std::string>& argv, bool json,
             std::ostream& out) {
  const ArchSpec spec = LoadArch(o.arch);
  const Dataset data = ReadDataset(o.data);
  const DatasetSplit split = SplitDataset(data.samples, o.train_frac, o.seed);

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.lambda_d = o.lambda_d;
  cfg.seed = o.seed;
  cfg.Validate();

  FloatGraph graph = FloatGraph::Compile(spec, o.seed);
  const std::vector<EpochStats> history = Train(graph, split.train, cfg);
  const Metrics test = Evaluate(graph, split.test);
  const CostReport cost = ComputeCost(spec);
  SaveWeights(graph, o.weights_out);

  Json hist = Json::array();
  for (const EpochStats& e : history) {
    hist.push_back(Json{{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy_pct", e.train_accuracy}});
  }
  const Json config{{"arch", o.arch},         {"data", o.data},
                    {"epochs", o.epochs},     {"batch", o.batch},
                    {"lr", o.lr},             {"momentum", o.momentum},
                    {"lambda_d", o.lambda_d}, {"train_frac", o.train_frac},
                    {"seed", o.seed},         {"out", o.weights_out},
                    {"report", o.report},     {"csv", o.csv},
                    {"bench_reps", o.bench_reps}};
  Json report{{"config", config},
              {"split", Json{{"train", split.train.size()}, {"test", split.test.size()}}},
              {"accuracy_pct", test.accuracy},
              {"params_m", static_cast<double>(cost.params) / 1e6},
              {"flops_m", static_cast<double>(cost.flops) / 1e6},
              {"median_ms_per_sample", nullptr},
              {"test", MetricsJson(test)},
              {"cost", CostJson(cost)},
              {"history", hist}};
  // Wall-clock values are filled in after the reproducible part is hashed.
  const std::string report_hash = Sha256Hex(report.dump(2) + "\n");
  auto csv_text = [&](const std::string& ms) {
    std::ostringstream s;
    s << "model,acc_pct,params_m,flops_m,ms_per_sample\n"
      << fs::path(o.arch).stem().string() << "," << std::setprecision(10) << test.accuracy
      << "," << static_cast<double>(cost.params) / 1e6 << ","
      << static_cast<double>(cost.flops) / 1e6 << "," << ms << "\n";
    return s.str();
  };
  const std::string csv_hash = Sha256Hex(csv_text(""));
  std::string ms;
  if (o.bench_reps > 0) {
    const LatencyStats lat = BenchLatency(graph, 10, 2, o.bench_reps);
    report["median_ms_per_sample"] = lat.median_ms_per_sample;
    report["latency"] = LatencyJson(lat);
    std::ostringstream s;
    s << lat.median_ms_per_sample;
    ms = s.str();
  }
  WriteBytes(o.report, report.dump(2) + "\n");
  if (!o.csv.empty()) WriteBytes(o.csv, csv_text(ms));

  RunManifest m;
  m.command = "train";
  m.argv = argv;
  m.config = config;
  m.seed = o.seed;
  m.version = CFORGE_VERSION;
  m.AddInput(o.arch);
  m.AddInput(o.data);
  m.AddOutput(o.weights_out);
  m.AddOutput(o.report, report_hash);
  if (!o.csv.empty()) m.AddOutput(o.csv, csv_hash);
  const std::string manifest_path = ManifestPath(o.manifest, o.weights_out);
  m.Save(manifest_path);

  if (json) {
    out << report.dump() << "\n";
  } else {
    out << "test accuracy " << test.accuracy << "% on " << split.test.size() << " samples\n"
        << "params " << cost.params << ", FLOPs " << cost.flops << "\n";
    if (!ms.empty()) out << "median " << ms << " ms/sample at batch 10\n";
    out << "weights " << o.weights_out << "\nreport " << o.report << "\nmanifest "
        << manifest_path << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- cost / validate

struct CostOptionsCli {
  std::string arch;
  std::string input;
  std::int64_t budget = kDefaultFlopBudget;
  int flops_per_mac = 2;
  std::string manifest;
};

int CostCmd(const CostOptionsCli& o, bool validate, const std::vector<std::string>& argv,
            bool json, std::ostream& out) {
  ArchSpec spec = LoadArch(o.arch);
  if (!o.input.empty()) {
    const auto d = ParseDims(o.input, 3, "--input");
    spec.input = {d[0], d[1], d[2]};
  }
  if (o.flops_per_mac != 1 && o.flops_per_mac != 2) {
    throw Error(ErrorCode::kInvalidArgument, "--flops-per-mac must be 1 or 2");
  }
  if (o.budget < 1) throw Error(ErrorCode::kInvalidArgument, "--budget must be >= 1");
  CostOptions copt;
  copt.flops_per_mac = o.flops_per_mac;
  const CostReport cost = ComputeCost(spec, copt);
  const FeasibilityReport feas = ValidateConstraints(spec, o.budget);

  Json report = CostJson(cost);
  report["input"] = spec.input.ToString();
  if (validate) {
    Json violations = Json::array();
    for (const Violation& v : feas.violations) {
      violations.push_back(Json{{"code", v.code}, {"node", v.node}, {"message", v.message}});
    }
    report["budget_flops"] = o.budget;
    report["feasible"] = feas.feasible;
    report["violations"] = violations;
  }
  if (json) {
    out << report.dump() << "\n";
  } else {
    out << "input   " << spec.input.ToString() << "\n"
        << "params  " << cost.params << "\n"
        << "MACs    " << cost.macs << "\n"
        << "FLOPs   " << cost.flops << "\n"
        << "convention: " << cost.Convention() << "\n";
    if (validate) {
      out << (feas.feasible ? "feasible" : "infeasible") << " (budget " << o.budget
          << " FLOPs)\n";
      for (const Violation& v : feas.violations) {
        out << "  " << v.code << (v.node.empty() ? "" : " [" + v.node + "]") << ": "
            << v.message << "\n";
      }
    }
  }
  if (!o.manifest.empty()) {
    RunManifest m;
    m.command = validate ? "validate" : "cost";
    m.argv = argv;
    m.config = Json{{"arch", o.arch}, {"input", o.input}, {"budget", o.budget},
                    {"flops_per_mac", o.flops_per_mac}};
    m.version = CFORGE_VERSION;
    m.AddInput(o.arch);
    m.Save(o.manifest);
  }
  return validate && !feas.feasible ? kExitInfeasible : kExitOk;
}

// ---------------------------------------------------------------- search

struct SearchOptions {
  std::string data;
  int iters = 20;
  int pop = 8;
  int elite = 2;
  int proxy_epochs = 3;
  std::int64_t budget = kDefaultFlopBudget;
  std::vector<std::uint64_t> seeds = {0};
  double train_frac = 0.25;
  int batch = 5;
  double lr = 1e-3;
  double momentum = 0.0;
  double lambda_d = 0.1;
  std::string report = "search.jsonl";
  std::string best;
  std::string manifest;
};

int SearchCmd(const SearchOptions& o, const std::vector<std::string>& argv, bool json,
              std::ostream& out) {
  SearchConfig cfg;
  cfg.seeds = o.seeds;
  cfg.budget_flops = o.budget;
  cfg.iterations = o.iters;
  cfg.population = o.pop;
  cfg.elite = o.elite;
  cfg.proxy_epochs = o.proxy_epochs;
  cfg.proxy_train.batch_size = o.batch;
  cfg.proxy_train.lr = o.lr;
  cfg.proxy_train.momentum = o.momentum;
  cfg.proxy_train.lambda_d = o.lambda_d;
  cfg.Validate();
  const Dataset data = ReadDataset(o.data);
  const DatasetSplit split = SplitDataset(data.samples, o.train_frac, o.seeds.front());

  std::ofstream log(o.report, std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + o.report);
  std::size_t written = 0;
  const SearchResult result = Explore(cfg, split, [&](int iter, const SearchResult& r) {
    for (; written < r.log.size(); ++written) {
      log << CandidateRecord(r.log[written], r.best_u[iter]) << "\n";
    }
    log.flush();
    if (!json) {
      out << "iteration " << iter << ": best U "
          << (r.best_u[iter] ? std::to_string(*r.best_u[iter]) : std::string("none")) << "\n";
    }
  });
  log.close();
  if (!log) throw Error(ErrorCode::kIo, "write failed: " + o.report);

  const std::string best_path = o.best.empty() ? o.report + ".best.arch" : o.best;
  Json summary{{"report", o.report}, {"candidates", result.log.size()}};
  if (!result.ranked.empty() && result.ranked.front().u_value) {
    const Candidate& b = result.ranked.front();
    WriteBytes(best_path, b.text);
    summary["best"] = Json{{"spec", best_path},
                           {"u", *b.u_value},
                           {"proxy_acc_pct", *b.proxy_acc},
                           {"params", b.cost.params},
                           {"flops", b.cost.flops}};
  } else {
    summary["best"] = nullptr;
  }

  RunManifest m;
  m.command = "search";
  m.argv = argv;
  m.config = Json{{"data", o.data},        {"iters", o.iters},
                  {"pop", o.pop},          {"elite", o.elite},
                  {"proxy_epochs", o.proxy_epochs},
                  {"budget", o.budget},    {"seeds", o.seeds},
                  {"train_frac", o.train_frac},
                  {"batch", o.batch},      {"lr", o.lr},
                  {"momentum", o.momentum}, {"lambda_d", o.lambda_d},
                  {"report", o.report},    {"best", best_path}};
  m.seed = o.seeds.front();
  m.version = CFORGE_VERSION;
  m.AddInput(o.data);
  m.AddOutput(o.report);
  if (summary["best"].is_object()) m.AddOutput(best_path);
  const std::string manifest_path = ManifestPath(o.manifest, o.report);
  m.Save(manifest_path);
  summary["manifest"] = manifest_path;

  if (json) {
    out << summary.dump() << "\n";
  } else if (summary["best"].is_object()) {
    const Candidate& b = result.ranked.front();
    out << "best " << best_path << "  U " << *b.u_value << "  params " << b.cost.params
        << "  FLOPs " << b.cost.flops << "\n";
  } else {
    out << "no feasible candidate was evaluated\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  std::string arch;
  std::string weights;
  int batch = 10;
  int reps = 50;
  int warmup = 5;
  std::uint64_t seed = 0;
};

int BenchCmd(const BenchOptions& o, bool json, std::ostream& out) {
  const ArchSpec spec = LoadArch(o.arch);
  FloatGraph graph = FloatGraph::Compile(spec, o.seed);
  if (!o.weights.empty()) {
    try {
      LoadWeights(graph, o.weights);
    } catch (const Error& e) {
      throw Error(e.code(), o.weights + " does not match " + o.arch + ": " + e.what());
    }
  }
  const LatencyStats s = BenchLatency(graph, o.batch, o.warmup, o.reps);
  if (json) {
    out << LatencyJson(s).dump() << "\n";
  } else {
    out << "batch " << s.batch_size << ", " << s.reps << " reps\n"
        << "median " << s.median_ms_per_sample << " ms/sample\n"
        << "p90    " << s.p90_ms_per_sample << " ms/sample\n"
        << "env    " << s.environment << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- rerun

int RerunCmd(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  const RunManifest recorded = RunManifest::Load(manifest_path);
  if (recorded.command == "rerun") {
    throw Error(ErrorCode::kInvalidArgument, "cannot rerun a rerun manifest");
  }
  // Re-execute with the manifest redirected so the recorded one survives.
  std::vector<std::string> argv;
  for (std::size_t i = 0; i < recorded.argv.size(); ++i) {
    if (recorded.argv[i] == "--manifest") {
      ++i;
      continue;
    }
    if (recorded.argv[i].rfind("--manifest=", 0) == 0) continue;
    argv.push_back(recorded.argv[i]);
  }
  const std::string fresh_path = manifest_path + ".rerun";
  argv.push_back("--manifest");
  argv.push_back(fresh_path);
  std::ostringstream sink;
  const int code = Run(argv, sink, err);
  if (code != kExitOk && code != kExitInfeasible) return code;
  // Outputs with wall-clock content are compared by their reproducible hash,
  // which the fresh manifest records the same way.
  const RunManifest fresh = RunManifest::Load(fresh_path);
  std::error_code ec;
  fs::remove(fresh_path, ec);
  bool same = fresh.outputs.size() == recorded.outputs.size();
  for (std::size_t i = 0; same && i < recorded.outputs.size(); ++i) {
    const bool match = fresh.outputs[i].sha256 == recorded.outputs[i].sha256;
    out << (match ? "match    " : "MISMATCH ") << recorded.outputs[i].path << "\n";
    same = same && match;
  }
  out << (same ? "reproduced" : "not reproduced") << "\n";
  return same ? kExitOk : kExitInfeasible;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cforge: defect-detection network toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CFORGE_VERSION);
  bool json = false;
  app.add_flag("--json", json, "machine-readable output")->configurable(false);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic plate dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of plates")->capture_default_str();
  gen_cmd->add_option("--defect-frac", gen.defect_frac, "fraction of defective plates")
      ->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "plate size HxW")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  gen_cmd->add_option("--manifest", gen.manifest, "run manifest path (default OUT.run.json)");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train an architecture and report metrics");
  train_cmd->add_option("--arch", tr.arch, "architecture file")->required();
  train_cmd->add_option("--data", tr.data, "dataset directory")->required();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum)->capture_default_str();
  train_cmd->add_option("--lambda-d", tr.lambda_d, "head discrepancy weight")
      ->capture_default_str();
  train_cmd->add_option("--train-frac", tr.train_frac, "stratified train fraction")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--out", tr.weights_out, "weights file")->capture_default_str();
  train_cmd->add_option("--report", tr.report, "JSON report")->capture_default_str();
  train_cmd->add_option("--csv", tr.csv, "optional CSV mirror of the report columns");
  train_cmd->add_option("--bench-reps", tr.bench_reps, "latency reps at batch 10 (0 skips)")
      ->capture_default_str();
  train_cmd->add_option("--manifest", tr.manifest, "run manifest path (default OUT.run.json)");

  CostOptionsCli cost;
  auto add_cost_flags = [&](CLI::App* cmd) {
    cmd->add_option("--arch", cost.arch, "architecture file")->required();
    cmd->add_option("--input", cost.input, "override input shape CxHxW");
    cmd->add_option("--budget", cost.budget, "FLOP budget")->capture_default_str();
    cmd->add_option("--flops-per-mac", cost.flops_per_mac)->capture_default_str();
    cmd->add_option("--manifest", cost.manifest, "optional run manifest path");
  };
  auto* cost_cmd = app.add_subcommand("cost", "parameter and FLOP counts");
  add_cost_flags(cost_cmd);
  auto* validate_cmd = app.add_subcommand("validate", "constraint verdict; exit 1 if infeasible");
  add_cost_flags(validate_cmd);

  SearchOptions se;
  auto* search_cmd = app.add_subcommand("search", "evolutionary architecture search");
  search_cmd->add_option("--data", se.data, "dataset directory")->required();
  search_cmd->add_option("--iters", se.iters)->capture_default_str();
  search_cmd->add_option("--pop", se.pop)->capture_default_str();
  search_cmd->add_option("--elite", se.elite)->capture_default_str();
  search_cmd->add_option("--proxy-epochs", se.proxy_epochs)->capture_default_str();
  search_cmd->add_option("--budget", se.budget)->capture_default_str();
  search_cmd->add_option("--seed", se.seeds, "proxy seeds; the first also drives mutation")
      ->capture_default_str();
  search_cmd->add_option("--train-frac", se.train_frac)->capture_default_str();
  search_cmd->add_option("--batch", se.batch)->capture_default_str();
  search_cmd->add_option("--lr", se.lr)->capture_default_str();
  search_cmd->add_option("--momentum", se.momentum)->capture_default_str();
  search_cmd->add_option("--lambda-d", se.lambda_d)->capture_default_str();
  search_cmd->add_option("--report", se.report, "JSON-lines candidate log")
      ->capture_default_str();
  search_cmd->add_option("--best", se.best, "best spec path (default REPORT.best.arch)");
  search_cmd->add_option("--manifest", se.manifest, "run manifest path (default REPORT.run.json)");

  BenchOptions be;
  auto* bench_cmd = app.add_subcommand("bench", "inference latency");
  bench_cmd->add_option("--arch", be.arch, "architecture file")->required();
  bench_cmd->add_option("--weights", be.weights, "weights file (default: fresh init)");
  bench_cmd->add_option("--batch", be.batch)->capture_default_str();
  bench_cmd->add_option("--reps", be.reps)->capture_default_str();
  bench_cmd->add_option("--warmup", be.warmup)->capture_default_str();
  bench_cmd->add_option("--seed", be.seed, "init seed when no weights are given")
      ->capture_default_str();

  std::string rerun_manifest;
  auto* rerun_cmd = app.add_subcommand("rerun", "re-execute a run manifest and compare hashes");
  rerun_cmd->add_option("manifest", rerun_manifest)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return GenData(gen, args, json, out);
    if (train_cmd->parsed()) return TrainCmd(tr, args, json, out);
    if (cost_cmd->parsed()) return CostCmd(cost, false, args, json, out);
    if (validate_cmd->parsed()) return CostCmd(cost, true, args, json, out);
    if (search_cmd->parsed()) return SearchCmd(se, args, json, out);
    if (bench_cmd->parsed()) return BenchCmd(be, json, out);
    if (rerun_cmd->parsed()) return RerunCmd(rerun_manifest, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kNumeric ? kExitDiverged : kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cforge::cli
