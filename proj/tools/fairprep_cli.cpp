// SPDX-License-Identifier: Apache-2.0
// fairprep: train, transform, evaluate, sweep and report from one JSON config.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairprep/checkpoint.hpp"
#include "fairprep/error.hpp"
#include "fairprep/experiment.hpp"

namespace fs = std::filesystem;
using namespace fairprep;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "JSON experiment config");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (overrides config 'out')");
  cmd->add_option("--seed", o.seed, "Seed for the data generator and the pre-processor");
  cmd->add_option("--runs", o.runs, "Number of independent runs");
  cmd->add_option("--override", o.overrides, "Config override key.path=value (repeatable)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  nlohmann::json doc = nlohmann::json::object();
  if (!o.config.empty()) {
    try {
      doc = load_json(o.config);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("config: " + std::string(e.what()));
    }
  }
  for (const auto& kv : o.overrides) apply_override(doc, kv);
  if (o.seed) {
    apply_override(doc, "preprocessor.seed=" + std::to_string(*o.seed));
    apply_override(doc, "dataset.seed=" + std::to_string(*o.seed));
  }
  if (o.runs) doc["runs"] = *o.runs;
  if (!o.out.empty()) doc["out"] = o.out;
  return ExperimentConfig::from_json(doc);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  auto [train_set, test_set] = load_experiment_data(cfg.dataset, 0);
  const TrainedPreprocessor pp = train(train_set, cfg.preprocessor);
  pp.save(cfg.out / "bundle");
  write_text(cfg.out / "trace.json", pp.trace_json().dump(2) + "\n");
  save_json({{"code_version", kVersionStamp}, {"config", cfg.to_json()}}, cfg.out / "config.json");
  const auto& last = pp.trace().back();
  std::cout << "trained " << pp.trace().size() << " epochs; final upstream loss " << last.upstream_loss
            << ", dual " << last.dual_value << "\nbundle: " << (cfg.out / "bundle").string() << "\n";
  return 0;
}

int cmd_transform(const CommonOptions& o, const std::string& bundle) {
  const ExperimentConfig cfg = resolve(o);
  const TrainedPreprocessor pp = TrainedPreprocessor::load(bundle);
  auto [train_set, test_set] = load_experiment_data(cfg.dataset, 0);
  fs::create_directories(cfg.out);
  write_csv(pp.transform(train_set), cfg.out / "train_transformed.csv");
  write_csv(pp.transform(test_set), cfg.out / "test_transformed.csv");
  std::cout << "wrote " << (cfg.out / "train_transformed.csv").string() << " and "
            << (cfg.out / "test_transformed.csv").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& bundle, bool identity) {
  if (identity == !bundle.empty()) throw ParameterError("evaluate: give exactly one of --bundle or --identity");
  const ExperimentConfig cfg = resolve(o);
  std::optional<TrainedPreprocessor> pp;
  if (!identity) pp = TrainedPreprocessor::load(bundle);
  auto [train_set, test_set] = load_experiment_data(cfg.dataset, 0);

  std::map<std::string, std::vector<FairnessReport>> per_model;
  std::vector<std::string> order;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const auto models = evaluate_pipeline(pp ? &*pp : nullptr, train_set, test_set, cfg, cfg.preprocessor.seed + r);
    for (const auto& m : models) {
      if (!per_model.count(m.model)) order.push_back(m.model);
      per_model[m.model].push_back(m.report);
    }
  }

  const fs::path dir = cfg.out / "reports";
  fs::create_directories(dir);
  const std::string method = identity ? "identity" : "fairprep";
  nlohmann::json summary{{"code_version", kVersionStamp}, {"config", cfg.to_json()}, {"method", method}};
  for (const auto& name : order) {
    const auto& reports = per_model[name];
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : reports) runs.push_back(r.to_json());
    nlohmann::json agg;
    const nlohmann::json first = reports.front().to_json();
    for (const auto& [key, value] : first.items()) {
      if (!value.is_number()) continue;
      std::vector<double> v;
      for (const auto& r : runs)
        if (r.at(key).is_number()) v.push_back(r.at(key).get<double>());
      const Aggregate a = aggregate(v);
      agg[key] = {{"mean", a.mean}, {"two_se", a.two_se}, {"n", a.n}};
    }
    save_json({{"code_version", kVersionStamp}, {"method", method}, {"model", name}, {"runs", runs}, {"aggregate", agg}},
              dir / (method + "_" + name + ".json"));
    summary["models"][name] = agg;
    std::cout << name;
    for (const char* key : {"auc", "sp", "eo", "ks_sp", "mse"})
      if (agg.contains(key)) std::cout << "  " << key << "=" << agg[key]["mean"].get<double>();
    std::cout << "\n";
  }
  save_json(summary, dir / (method + "_aggregate.json"));
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const SweepResult result = run_sweep(cfg);
  write_summary(cfg.out / "sweep.csv", cfg.out / "summary.csv");
  std::cout << "sweep: " << result.rows.size() << " rows -> " << (cfg.out / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  const fs::path root(dir);
  write_summary(root / "sweep.csv", root / "summary.csv");
  std::ifstream f(root / "summary.csv");
  std::cout << f.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairprep: fairness-aware pre-processing experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersionStamp);

  CommonOptions train_o, transform_o, eval_o, sweep_o;
  std::string transform_bundle, eval_bundle, report_dir;
  bool identity = false;

  auto* train_cmd = app.add_subcommand("train", "Train a pre-processor and write its bundle");
  add_common(train_cmd, train_o, true);
  auto* transform_cmd = app.add_subcommand("transform", "Apply a bundle to the configured dataset");
  add_common(transform_cmd, transform_o, true);
  transform_cmd->add_option("--bundle", transform_bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  auto* eval_cmd = app.add_subcommand("evaluate", "Fairness reports for the upstream model and the zoo");
  add_common(eval_cmd, eval_o, true);
  eval_cmd->add_option("--bundle", eval_bundle, "Bundle directory")->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--identity", identity, "Evaluate the original data (identity transform)");
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every budget for every run");
  add_common(sweep_cmd, sweep_o, true);
  auto* report_cmd = app.add_subcommand("report", "Aggregate a sweep directory into summary.csv");
  report_cmd->add_option("--out", report_dir, "Sweep output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return cmd_train(train_o);
    if (*transform_cmd) return cmd_transform(transform_o, transform_bundle);
    if (*eval_cmd) return cmd_evaluate(eval_o, eval_bundle, identity);
    if (*sweep_cmd) return cmd_sweep(sweep_o);
    if (*report_cmd) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
