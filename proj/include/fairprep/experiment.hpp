// SPDX-License-Identifier: Apache-2.0
#pragma once

// Config-driven experiments: dataset loading, evaluation of a pre-processor
// (or the identity) with the upstream model and the downstream zoo, budget
// sweeps and the CSV/JSON outputs consumed by the command-line runner.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "fairprep/data.hpp"
#include "fairprep/downstream.hpp"
#include "fairprep/metrics.hpp"
#include "fairprep/preprocess.hpp"

namespace fairprep {

/// source: toy_regression | toy_classification | toy_classification_hard | csv.
struct DatasetSpec {
  std::string source = "toy_classification";
  std::filesystem::path path;
  std::filesystem::path schema;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& doc);
};

/// Budget i is (delta_x[i], delta_y[i], lambda_f[i]); single-entry lists broadcast.
struct SweepSpec {
  std::vector<double> delta_x{0.1};
  std::vector<double> delta_y{0.0};
  std::vector<double> lambda_f{1.0};

  std::size_t size() const;
  PreprocessorConfig apply(const PreprocessorConfig& base, std::size_t budget) const;
  std::string label(std::size_t budget) const;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PreprocessorConfig preprocessor;
  SweepSpec sweep;
  std::vector<ModelKind> zoo = default_zoo();
  DownstreamHyperparams downstream;
  std::size_t runs = 1;
  std::filesystem::path out = "fairprep-out";
  std::size_t hgr_bins = 10;

  /// Throws ParameterError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
};

/// Applies "a.b.c=value" to a JSON document; the value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Train/test pair for one run. Toy generators use dataset.seed + run; CSV data is
/// split with the same seed and standardized with training statistics only.
std::pair<Dataset, Dataset> load_experiment_data(const DatasetSpec& spec, std::size_t run);

struct ModelResult {
  std::string model;  // "upstream" or a zoo member
  FairnessReport report;
  std::vector<double> scores;
};

/// Fits the zoo on the (transformed) training split and scores the (transformed)
/// test split against the true test labels. The first entry is the upstream
/// model: h~ inside the pre-processor, or h* fitted on the original data when
/// `pp` is null (identity transform).
std::vector<ModelResult> evaluate_pipeline(const TrainedPreprocessor* pp, const Dataset& train, const Dataset& test,
                                           const ExperimentConfig& config, std::uint64_t seed);

/// Models fitted on the original data, shared by every budget of a run.
struct ReferenceModels {
  std::vector<double> upstream_scores;  // h*(X) on the test split
  double upstream_loss = 0.0;
  double check_epsilon = 0.0;           // test risk of a model on (X, A)
  std::vector<std::string> names;
  std::vector<std::vector<double>> model_scores;
  std::vector<double> model_losses;
};

ReferenceModels fit_reference(const Dataset& train, const Dataset& test, const ExperimentConfig& config,
                              std::uint64_t seed);

/// Improvement and bound terms for one trained pre-processor, every correlation
/// estimated on the test split with the binned exact estimator.
ImprovementDiagnostics diagnose(const TrainedPreprocessor& pp, const ReferenceModels& reference,
                                const Dataset& train, const Dataset& test, const ExperimentConfig& config,
                                std::uint64_t seed);

/// Binned HGR of scores against the sensitive groups.
double hgr_against_groups(std::span<const double> scores, std::span<const std::size_t> groups, std::size_t bins);

struct SweepRow {
  std::string method;
  std::string budget;
  std::size_t run = 0;
  std::string model;
  FairnessReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  nlohmann::json diagnostics = nlohmann::json::array();
};

/// Trains one pre-processor per (budget, run), evaluates the pipeline and writes
/// sweep.csv, hv.csv, consistency.csv and reports/*.json under config.out.
SweepResult run_sweep(const ExperimentConfig& config);

/// Writes the CSV outputs of a finished sweep.
void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& config);

/// Mean +- 2 SE across runs for every (method, budget, model, metric) of a sweep.csv.
void write_summary(const std::filesystem::path& sweep_csv, const std::filesystem::path& out_csv);

/// "# code_version=...; config=..." header line carried by every CSV output.
std::string stamp_line(const nlohmann::json& config_echo);

}  // namespace fairprep
