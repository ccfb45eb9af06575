/* Copyright 2026 The coatnet-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// coatnet: auditing, training, evaluation, gradient checks, resolution
// adaptation and the layout comparison from one binary.
//
// Exit codes: 0 success, 1 failed check, 2 usage/config/data error,
// 3 numerical divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "coatnet/audit.hpp"
#include "coatnet/checkpoint.hpp"
#include "coatnet/config.hpp"
#include "coatnet/data.hpp"
#include "coatnet/gradcheck_suite.hpp"
#include "coatnet/model.hpp"
#include "coatnet/optim.hpp"
#include "coatnet/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace coatnet;

namespace {

constexpr int kSchemaVersion = 1;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

// Experiment file: {"model": {...model config...}, "train": {...}}. Either
// section may be omitted; "model" may use "base" to start from a family.
struct Experiment {
  ModelConfig model = family_config("tiny");
  TrainConfig train;
};

Experiment load_experiment(const std::string& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("'" + path + "' must hold an object");
  Experiment ex;
  bool known = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      ex.model = model_config_from_json(value.dump());
    } else if (key == "train") {
      ex.train = train_config_from_json(value.dump());
    } else {
      throw ConfigError("unknown key '" + key + "' in '" + path + "'");
    }
    known = true;
  }
  if (!known) throw ConfigError("'" + path + "' has neither model nor train");
  validate(ex.model);
  return ex;
}

ordered_json resolved(const ModelConfig* m, const TrainConfig* t) {
  ordered_json j = {{"schema_version", kSchemaVersion}};
  if (m != nullptr) j["model"] = ordered_json::parse(to_json(*m, -1));
  if (t != nullptr) j["train"] = ordered_json::parse(to_json(*t, -1));
  return j;
}

// --data synthetic | CIFAR-10 directory.
struct DataArgs {
  std::string source = "synthetic";
  int64_t synthetic_size = 256;
  int64_t eval_size = 256;
  int64_t limit = 0;
  uint64_t data_seed = 1234;
  int64_t source_resolution = 0;  // synthetic generation size; 0 = model's
};

void add_data_flags(CLI::App* app, DataArgs& d) {
  app->add_option("--data", d.source,
                  "'synthetic' or a CIFAR-10 binary directory")
      ->capture_default_str();
  app->add_option("--synthetic-size", d.synthetic_size,
                  "training samples for --data synthetic")
      ->capture_default_str();
  app->add_option("--eval-size", d.eval_size,
                  "held-out samples (synthetic) or test records (CIFAR-10)")
      ->capture_default_str();
  app->add_option("--limit", d.limit, "keep the first N training records")
      ->capture_default_str();
  app->add_option("--data-seed", d.data_seed, "synthetic generator seed")
      ->capture_default_str();
  app->add_option("--source-resolution", d.source_resolution,
                  "generate synthetic images at this size, then resize");
}

struct Splits {
  Dataset train;
  Dataset eval;
};

// Images are produced at their native size (32 for CIFAR-10) and bilinearly
// resized to the model resolution.
Splits load_data(const DataArgs& d, int64_t resolution, int64_t classes) {
  Splits s;
  if (d.source == "synthetic") {
    const int64_t native =
        d.source_resolution > 0 ? d.source_resolution : resolution;
    const int64_t n = d.limit > 0 ? std::min(d.limit, d.synthetic_size)
                                  : d.synthetic_size;
    Dataset all = resize_dataset(
        synthetic_dataset(n + d.eval_size, native, classes, d.data_seed),
        resolution);
    std::vector<int64_t> tr(n), ev(d.eval_size);
    for (int64_t i = 0; i < n; ++i) tr[i] = i;
    for (int64_t i = 0; i < d.eval_size; ++i) ev[i] = n + i;
    s.train = subset(all, tr);
    s.eval = subset(all, ev);
    s.eval.split = "eval";
    return s;
  }
  s.train = resize_dataset(
      load_cifar10(cifar10_files(d.source, true), "train", d.limit), resolution);
  s.eval = resize_dataset(
      load_cifar10(cifar10_files(d.source, false), "test", d.eval_size),
      resolution);
  return s;
}

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

// --- summarize ---------------------------------------------------------------

struct SummarizeArgs {
  std::string model, config, format = "text";
  int64_t resolution = 0;
};

int run_summarize(const SummarizeArgs& a) {
  ModelConfig cfg;
  if (!a.config.empty()) {
    cfg = load_experiment(a.config).model;
  } else {
    cfg = family_config(a.model);
  }
  const int64_t res = a.resolution > 0 ? a.resolution : cfg.image_size;
  const AuditReport r = summarize(cfg, res);
  if (a.format == "json") {
    ordered_json j = ordered_json::parse(to_json(r, -1));
    j["config"] = ordered_json::parse(to_json(cfg, -1));
    print_json(j);
  } else {
    std::cout << "config " << to_json(cfg, -1) << "\n" << to_text(r);
  }
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, model, out = "run";
  DataArgs data;
  int64_t epochs = 0;
  int64_t seed = -1;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  Experiment ex = a.config.empty() ? Experiment{} : load_experiment(a.config);
  if (!a.model.empty()) ex.model = family_config(a.model);
  if (a.epochs > 0) ex.train.epochs = a.epochs;
  if (a.seed >= 0) ex.train.seed = static_cast<uint64_t>(a.seed);
  validate(ex.train);

  const Splits data =
      load_data(a.data, ex.model.image_size, ex.model.num_classes);
  fs::create_directories(a.out);
  ordered_json echo = resolved(&ex.model, &ex.train);
  echo["data"] = {{"source", a.data.source},
                  {"train_size", data.train.size()},
                  {"eval_size", data.eval.size()},
                  {"data_seed", a.data.data_seed}};
  write_text(fs::path(a.out) / "config.json", echo.dump(2) + "\n");
  std::cout << "config " << echo.dump() << "\n";

  std::ofstream log(fs::path(a.out) / "metrics.jsonl");
  if (!log) throw IoError("cannot write metrics log under '" + a.out + "'");
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    const std::string line = MetricsLog::to_line(r);
    log << line << "\n";
    log.flush();
    if (!a.quiet) std::cout << line << "\n";
  };
  TrainResult result = train(ex.model, ex.train, data.train, &data.eval, opts);
  save_checkpoint((fs::path(a.out) / "final.ckpt").string(), result.model,
                  result.stats, "raw");
  if (result.ema) {
    save_checkpoint((fs::path(a.out) / "ema.ckpt").string(), *result.ema,
                    result.stats, "ema");
  }
  const EpochRecord& last = result.log.records.back();
  std::printf("final train_accuracy %.4f eval_accuracy %.4f train_loss %.4f\n",
              last.train_accuracy, last.eval_accuracy, last.train_loss);
  return 0;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  DataArgs data;
  std::string split = "eval";
};

int run_evaluate(const EvaluateArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const Splits data = load_data(a.data, ck.model.resolution(),
                                ck.model.config().num_classes);
  const Dataset& ds = a.split == "train" ? data.train : data.eval;
  const EvalResult r = evaluate(ck.model, ds, ck.info.stats);
  ordered_json j = {{"schema_version", kSchemaVersion},
                    {"checkpoint", a.checkpoint},
                    {"tag", ck.info.tag},
                    {"split", a.split},
                    {"count", r.count},
                    {"accuracy", r.accuracy},
                    {"loss", r.loss}};
  j["config"] = ordered_json::parse(to_json(ck.info.config, -1));
  print_json(j);
  return 0;
}

// --- gradcheck ---------------------------------------------------------------

struct GradArgs {
  std::string scope = "op";
  uint64_t seed = 0;
  std::string format = "text";
};

int run_gradcheck(const GradArgs& a) {
  const GradScope scope = grad_scope_from_string(a.scope);
  const auto results = run_gradcheck_suite(scope, a.seed);
  bool ok = true;
  ordered_json units = ordered_json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    if (a.format == "json") {
      units.push_back({{"unit", r.unit},
                       {"max_rel_error", r.max_rel_error},
                       {"coords", r.coords_checked},
                       {"passed", r.passed}});
    } else {
      std::printf("%-4s %-36s max_rel_error %.3e (%lld coords)\n",
                  r.passed ? "ok" : "FAIL", r.unit.c_str(), r.max_rel_error,
                  static_cast<long long>(r.coords_checked));
    }
  }
  if (a.format == "json") {
    print_json({{"schema_version", kSchemaVersion},
                {"scope", a.scope},
                {"seed", a.seed},
                {"tolerance", GradCheckOptions{}.tolerance},
                {"units", units},
                {"passed", ok}});
  } else {
    std::printf("%s: %zu units, %s\n", a.scope.c_str(), results.size(),
                ok ? "all passed" : "FAILURES");
  }
  return ok ? 0 : kExitFail;
}

// --- compare-layouts ---------------------------------------------------------

struct CompareArgs {
  int64_t budget = 10;
  std::string out = "layouts";
  std::string config;
  DataArgs data;
  int64_t seed = 0;
};

int run_compare(CompareArgs a) {
  Experiment ex;
  if (!a.config.empty()) ex = load_experiment(a.config);
  ex.train.epochs = a.budget;
  ex.train.seed = static_cast<uint64_t>(a.seed);
  validate(ex.train);
  fs::create_directories(a.out);

  const ModelConfig probe = family_config(layout_names().front());
  const Splits data = load_data(a.data, probe.image_size, probe.num_classes);
  ordered_json report = {{"schema_version", kSchemaVersion},
                         {"train", ordered_json::parse(to_json(ex.train, -1))},
                         {"data",
                          {{"source", a.data.source},
                           {"train_size", data.train.size()},
                           {"eval_size", data.eval.size()}}},
                         {"notes",
                          "layout:ViT_rel uses a stride-4 patchify stem at "
                          "32x32 inputs (stride 16 would leave 2x2 tokens)"},
                         {"variants", ordered_json::array()}};
  std::ofstream curves(fs::path(a.out) / "curves.csv");
  curves << "variant,epoch,train_loss,train_accuracy,eval_accuracy\n";
  std::printf("%-16s %10s %10s %10s %10s\n", "variant", "params", "train_acc",
              "eval_acc", "gap");
  for (const auto& name : layout_names()) {
    const ModelConfig cfg = family_config(name);
    TrainResult r = train(cfg, ex.train, data.train, &data.eval);
    ordered_json curve = ordered_json::array();
    for (const auto& rec : r.log.records) {
      curves << name << "," << rec.epoch << "," << rec.train_loss << ","
             << rec.train_accuracy << "," << rec.eval_accuracy << "\n";
      curve.push_back({{"epoch", rec.epoch},
                       {"train_loss", rec.train_loss},
                       {"train_accuracy", rec.train_accuracy},
                       {"eval_accuracy", rec.eval_accuracy}});
    }
    const EpochRecord& last = r.log.records.back();
    const int64_t params = r.model.num_params();
    report["variants"].push_back(
        {{"name", name},
         {"config", ordered_json::parse(to_json(cfg, -1))},
         {"params", params},
         {"final_train_loss", last.train_loss},
         {"final_train_accuracy", last.train_accuracy},
         {"final_eval_accuracy", last.eval_accuracy},
         {"generalization_gap", last.train_accuracy - last.eval_accuracy},
         {"curve", curve}});
    std::printf("%-16s %10lld %10.4f %10.4f %10.4f\n", name.c_str(),
                static_cast<long long>(params), last.train_accuracy,
                last.eval_accuracy, last.train_accuracy - last.eval_accuracy);
    std::fflush(stdout);
  }
  write_text(fs::path(a.out) / "layouts.json", report.dump(2) + "\n");
  return 0;
}

// --- adapt -------------------------------------------------------------------

struct AdaptArgs {
  std::string checkpoint, out;
  int64_t resolution = 0;
};

int run_adapt(const AdaptArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Model<float> adapted = adapt_resolution(ck.model, a.resolution);
  const ModelConfig& oc = ck.model.config();
  const ModelConfig& nc = adapted.config();
  const StageGrids og = stage_grids(oc, oc.image_size);
  const StageGrids ng = stage_grids(nc, nc.image_size);
  std::printf("resolution %lld -> %lld\n", static_cast<long long>(oc.image_size),
              static_cast<long long>(nc.image_size));
  for (std::size_t s = 0; s < oc.stages.size(); ++s) {
    if (oc.stages[s].kind != StageKind::kTfm || oc.attn_mode == AttnMode::kNone) {
      continue;
    }
    const long long og_s = og.stages[s], ng_s = ng.stages[s];
    const long long o = 2 * og_s - 1, n = 2 * ng_s - 1;
    std::printf("%s grid %lldx%lld -> %lldx%lld, bias table per head "
                "%lldx%lld -> %lldx%lld\n",
                stage_label(oc, s).c_str(), og_s, og_s, ng_s, ng_s, o, o, n, n);
  }
  save_checkpoint(a.out, adapted, ck.info.stats, ck.info.tag);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoAtNet desk-scale toolkit"};
  app.require_subcommand(1);

  SummarizeArgs sa;
  auto* summarize_cmd = app.add_subcommand("summarize", "parameter/MAC audit");
  auto* model_opt = summarize_cmd->add_option("--model", sa.model, "family name");
  summarize_cmd->add_option("--config", sa.config, "experiment JSON")
      ->excludes(model_opt);
  summarize_cmd->add_option("--resolution", sa.resolution,
                            "input side (default: config image_size)");
  summarize_cmd->add_option("--format", sa.format)
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* train_cfg = train_cmd->add_option("--config", ta.config, "experiment JSON");
  train_cmd->add_option("--model", ta.model, "family name (overrides config)");
  train_cmd->add_option("--out", ta.out, "output directory")->capture_default_str();
  train_cmd->add_option("--epochs", ta.epochs, "override train.epochs");
  train_cmd->add_option("--seed", ta.seed, "override train.seed");
  train_cmd->add_flag("--quiet", ta.quiet, "no per-epoch output");
  add_data_flags(train_cmd, ta.data);
  (void)train_cfg;

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--split", ea.split)
      ->check(CLI::IsMember({"train", "eval"}))
      ->capture_default_str();
  add_data_flags(eval_cmd, ea.data);

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks");
  grad_cmd->add_option("--scope", ga.scope)
      ->check(CLI::IsMember({"op", "block", "model"}))
      ->capture_default_str();
  grad_cmd->add_option("--seed", ga.seed)->capture_default_str();
  grad_cmd->add_option("--format", ga.format)
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  CompareArgs ca;
  ca.data.synthetic_size = 4096;
  ca.data.eval_size = 1024;
  auto* cmp_cmd =
      app.add_subcommand("compare-layouts", "train the five layout variants");
  cmp_cmd->add_option("--budget", ca.budget, "epochs per variant")
      ->capture_default_str();
  cmp_cmd->add_option("--out", ca.out)->capture_default_str();
  cmp_cmd->add_option("--config", ca.config, "experiment JSON (train section)");
  cmp_cmd->add_option("--seed", ca.seed)->capture_default_str();
  add_data_flags(cmp_cmd, ca.data);

  AdaptArgs aa;
  auto* adapt_cmd = app.add_subcommand("adapt", "interpolate bias tables");
  adapt_cmd->add_option("--checkpoint", aa.checkpoint)->required();
  adapt_cmd->add_option("--resolution", aa.resolution)->required();
  adapt_cmd->add_option("--out", aa.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*summarize_cmd) {
      if (sa.model.empty() && sa.config.empty()) {
        throw ConfigError("summarize needs --model or --config");
      }
      return run_summarize(sa);
    }
    if (*train_cmd) return run_train(ta);
    if (*eval_cmd) return run_evaluate(ea);
    if (*grad_cmd) return run_gradcheck(ga);
    if (*cmp_cmd) return run_compare(ca);
    if (*adapt_cmd) return run_adapt(aa);
  } catch (const DivergedError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ResolutionError& e) {
    std::cerr << "resolution error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LabelError& e) {
    std::cerr << "label error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IncompatibleCheckpointError& e) {
    std::cerr << "incompatible checkpoint: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
