// SPDX-License-Identifier: Apache-2.0
#include "fairprep/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fairprep/checkpoint.hpp"
#include "fairprep/error.hpp"
#include "fairprep/hgr.hpp"

namespace fairprep {

namespace {

constexpr std::uint64_t kReferenceSalt = 0x7f4a7c159e3779b9ULL;

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback, const std::string& section) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParameterError(section + "." + key + ": wrong type");
  }
}

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> keys, const std::string& section) {
  if (!doc.is_object()) throw ParameterError(section + ": expected a JSON object");
  for (const auto& [key, value] : doc.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end())
      throw ParameterError(section + "." + key + ": unknown key");
}

std::vector<double> as_list(const nlohmann::json& v, const std::string& field) {
  try {
    return v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
  } catch (const nlohmann::json::exception&) {
    throw ParameterError(field + ": expected a number or a list of numbers");
  }
}

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(10);
  s << *v;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------- config

nlohmann::json DatasetSpec::to_json() const {
  return {{"source", source},
          {"path", path.string()},
          {"schema", schema.string()},
          {"n", n},
          {"seed", seed},
          {"test_fraction", test_fraction}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& doc) {
  reject_unknown(doc, {"source", "path", "schema", "n", "seed", "test_fraction"}, "dataset");
  DatasetSpec d;
  d.source = get_or(doc, "source", d.source, "dataset");
  d.path = get_or(doc, "path", std::string{}, "dataset");
  d.schema = get_or(doc, "schema", std::string{}, "dataset");
  d.n = get_or(doc, "n", d.n, "dataset");
  d.seed = get_or(doc, "seed", d.seed, "dataset");
  d.test_fraction = get_or(doc, "test_fraction", d.test_fraction, "dataset");
  return d;
}

std::size_t SweepSpec::size() const { return std::max({delta_x.size(), delta_y.size(), lambda_f.size()}); }

PreprocessorConfig SweepSpec::apply(const PreprocessorConfig& base, std::size_t budget) const {
  auto pick = [&](const std::vector<double>& v) { return v.size() == 1 ? v[0] : v.at(budget); };
  PreprocessorConfig c = base;
  c.delta_x = {pick(delta_x)};
  c.delta_y = pick(delta_y);
  c.lambda_f = pick(lambda_f);
  return c;
}

std::string SweepSpec::label(std::size_t budget) const {
  auto pick = [&](const std::vector<double>& v) { return v.size() == 1 ? v[0] : v.at(budget); };
  return "dx=" + format_number(pick(delta_x)) + ";dy=" + format_number(pick(delta_y)) +
         ";lf=" + format_number(pick(lambda_f));
}

void ExperimentConfig::validate() const {
  static const std::vector<std::string> sources{"toy_regression", "toy_classification", "toy_classification_hard",
                                                "csv"};
  if (std::find(sources.begin(), sources.end(), dataset.source) == sources.end())
    throw ParameterError("dataset.source: unknown source '" + dataset.source + "'");
  if (dataset.source == "csv" && (dataset.path.empty() || dataset.schema.empty()))
    throw ParameterError("dataset.path: csv source needs both path and schema");
  if (dataset.source != "csv" && dataset.n < 10) throw ParameterError("dataset.n: must be >= 10");
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0))
    throw ParameterError("dataset.test_fraction: must lie in (0, 1)");
  preprocessor.validate();
  for (const auto* list : {&sweep.delta_x, &sweep.delta_y, &sweep.lambda_f}) {
    const std::string field = list == &sweep.delta_x ? "sweep.delta_x"
                              : list == &sweep.delta_y ? "sweep.delta_y"
                                                       : "sweep.lambda_f";
    if (list->empty()) throw ParameterError(field + ": must be nonempty");
    if (list->size() != 1 && list->size() != sweep.size())
      throw ParameterError(field + ": lists must have length 1 or " + std::to_string(sweep.size()));
    for (double v : *list)
      if (!std::isfinite(v) || v < 0.0) throw ParameterError(field + ": values must be >= 0");
  }
  if (runs < 1) throw ParameterError("runs: must be >= 1");
  if (zoo.size() < 2) throw ParameterError("downstream.models: need at least two models for consistency scores");
  if (hgr_bins < 2) throw ParameterError("hgr_bins: must be >= 2");
}

nlohmann::json ExperimentConfig::to_json() const {
  std::vector<std::string> models;
  for (ModelKind k : zoo) models.push_back(to_string(k));
  nlohmann::json ds = downstream.to_json();
  ds["models"] = models;
  return {{"dataset", dataset.to_json()},
          {"preprocessor", preprocessor.to_json()},
          {"sweep", {{"delta_x", sweep.delta_x}, {"delta_y", sweep.delta_y}, {"lambda_f", sweep.lambda_f}}},
          {"downstream", ds},
          {"runs", runs},
          {"out", out.string()},
          {"hgr_bins", hgr_bins}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  reject_unknown(doc, {"dataset", "preprocessor", "sweep", "downstream", "runs", "out", "hgr_bins"}, "config");
  ExperimentConfig c;
  if (doc.contains("dataset")) c.dataset = DatasetSpec::from_json(doc["dataset"]);
  if (doc.contains("preprocessor")) c.preprocessor = PreprocessorConfig::from_json(doc["preprocessor"]);
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    reject_unknown(s, {"delta_x", "delta_y", "lambda_f"}, "sweep");
    if (s.contains("delta_x")) c.sweep.delta_x = as_list(s["delta_x"], "sweep.delta_x");
    if (s.contains("delta_y")) c.sweep.delta_y = as_list(s["delta_y"], "sweep.delta_y");
    if (s.contains("lambda_f")) c.sweep.lambda_f = as_list(s["lambda_f"], "sweep.lambda_f");
  } else {
    c.sweep.delta_x = {c.preprocessor.delta_x.front()};
    c.sweep.delta_y = {c.preprocessor.delta_y};
    c.sweep.lambda_f = {c.preprocessor.lambda_f};
  }
  if (doc.contains("downstream")) {
    nlohmann::json d = doc["downstream"];
    if (d.contains("models")) {
      c.zoo.clear();
      for (const auto& m : d["models"]) {
        try {
          c.zoo.push_back(model_kind_from_string(m.get<std::string>()));
        } catch (const Error& e) {
          throw ParameterError(std::string("downstream.models: ") + e.what());
        }
      }
      d.erase("models");
    }
    reject_unknown(d, {"knn_k", "linear_iterations", "l2", "upstream_hidden", "mlp_epochs", "mlp_batch",
                       "mlp_learning_rate", "rff_features", "rff_bandwidth"},
                   "downstream");
    c.downstream = DownstreamHyperparams::from_json(d);
  }
  // small_mlp mirrors the upstream architecture at half width.
  if (!(doc.contains("downstream") && doc["downstream"].contains("upstream_hidden")))
    c.downstream.upstream_hidden = c.preprocessor.upstream_hidden;
  c.runs = get_or(doc, "runs", c.runs, "config");
  c.out = get_or(doc, "out", c.out.string(), "config");
  c.hgr_bins = get_or(doc, "hgr_bins", c.hgr_bins, "config");
  c.validate();
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ParameterError("--override: expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  for (std::size_t start = 0;;) {
    const auto dot = key.find('.', start);
    if (key.substr(start, dot == std::string::npos ? std::string::npos : dot - start).empty())
      throw ParameterError("--override: empty path component in '" + key + "'");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_object()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

// ---------------------------------------------------------------- data

std::pair<Dataset, Dataset> load_experiment_data(const DatasetSpec& spec, std::size_t run) {
  const std::uint64_t seed = spec.seed + run;
  if (spec.source == "csv") {
    Dataset all = load_csv(spec.path, spec.schema);
    auto [train, test] = split(all, spec.test_fraction, seed);
    fit_standardization(train, test);
    return {std::move(train), std::move(test)};
  }
  Dataset all = spec.source == "toy_regression"            ? toy_regression(spec.n, seed)
                : spec.source == "toy_classification_hard" ? toy_classification(spec.n, seed, true)
                                                           : toy_classification(spec.n, seed, false);
  return split(all, spec.test_fraction, seed);
}

// ---------------------------------------------------------------- evaluation

double hgr_against_groups(std::span<const double> scores, std::span<const std::size_t> groups, std::size_t bins) {
  std::vector<double> g(groups.begin(), groups.end());
  return hgr_binned(scores, g, bins);
}

namespace {

FairnessReport report_for(std::span<const double> scores, const Dataset& test, std::span<const std::size_t> groups,
                          std::size_t bins) {
  const bool cls = test.task() == Task::classification;
  return evaluate_scores(scores, test.y, groups, cls, hgr_against_groups(scores, groups, bins),
                         upstream_loss(scores, test.y, test.task()));
}

}  // namespace

std::vector<ModelResult> evaluate_pipeline(const TrainedPreprocessor* pp, const Dataset& train, const Dataset& test,
                                           const ExperimentConfig& config, std::uint64_t seed) {
  const Task task = train.task();
  const std::vector<std::size_t> groups = test.groups();
  Matrix x_train = train.x, x_test = test.x;
  std::vector<double> y_train = train.y;
  std::vector<ModelResult> out;

  ModelResult up{"upstream", {}, {}};
  if (pp) {
    x_train = pp->transform_covariates(train.x, train.a);
    y_train = pp->transform_outcome(train.x, train.a, train.y);
    x_test = pp->transform_covariates(test.x, test.a);
    up.scores = pp->upstream_scores(x_test);
  } else {
    PreprocessorConfig pc = config.preprocessor;
    pc.seed = seed ^ kReferenceSalt;
    up.scores = upstream_scores(fit_upstream(train.x, train.y, task, pc), test.x, task);
  }
  up.report = report_for(up.scores, test, groups, config.hgr_bins);
  out.push_back(std::move(up));

  for (ModelKind kind : config.zoo) {
    const DownstreamModel m = fit(kind, x_train, y_train, task, config.downstream, seed);
    ModelResult r{to_string(kind), {}, m.score(x_test)};
    r.report = report_for(r.scores, test, groups, config.hgr_bins);
    out.push_back(std::move(r));
  }
  return out;
}

ReferenceModels fit_reference(const Dataset& train, const Dataset& test, const ExperimentConfig& config,
                              std::uint64_t seed) {
  const Task task = train.task();
  PreprocessorConfig pc = config.preprocessor;
  pc.seed = seed ^ kReferenceSalt;
  ReferenceModels ref;
  ref.upstream_scores = upstream_scores(fit_upstream(train.x, train.y, task, pc), test.x, task);
  ref.upstream_loss = upstream_loss(ref.upstream_scores, test.y, task);
  const Matrix xa_train = Matrix::hcat(train.x, train.a), xa_test = Matrix::hcat(test.x, test.a);
  ref.check_epsilon = upstream_loss(upstream_scores(fit_upstream(xa_train, train.y, task, pc), xa_test, task), test.y, task);
  for (ModelKind kind : config.zoo) {
    const DownstreamModel m = fit(kind, train.x, train.y, task, config.downstream, seed);
    ref.names.push_back(to_string(kind));
    ref.model_scores.push_back(m.score(test.x));
    ref.model_losses.push_back(model_loss(ref.model_scores.back(), test.y, task));
  }
  return ref;
}

ImprovementDiagnostics diagnose(const TrainedPreprocessor& pp, const ReferenceModels& reference,
                                const Dataset& train, const Dataset& test, const ExperimentConfig& config,
                                std::uint64_t seed) {
  const Task task = train.task();
  const std::vector<std::size_t> groups = test.groups();
  const std::size_t bins = config.hgr_bins;
  const Matrix x_train = pp.transform_covariates(train.x, train.a);
  const std::vector<double> y_train = pp.transform_outcome(train.x, train.a, train.y);
  const Matrix x_test = pp.transform_covariates(test.x, test.a);
  const std::vector<double> y_test_new = pp.transform_outcome(test.x, test.a, test.y);
  const std::vector<double> s_tilde = pp.upstream_scores(x_test);

  DiagnosticInputs in;
  in.lambda_f = pp.config().lambda_f;
  in.rho_upstream_original = hgr_against_groups(reference.upstream_scores, groups, bins);
  in.rho_upstream_transformed = hgr_against_groups(s_tilde, groups, bins);
  in.loss_upstream_original = reference.upstream_loss;
  in.loss_upstream_transformed = upstream_loss(s_tilde, y_test_new, task);
  in.loss_upstream_transformed_on_y = upstream_loss(s_tilde, test.y, task);
  in.check_epsilon = reference.check_epsilon;
  in.rho_label_upstream_original = hgr_binned(test.y, reference.upstream_scores, bins);
  in.rho_label_upstream_transformed = hgr_binned(test.y, s_tilde, bins);
  in.rho_newlabel_upstream_transformed = hgr_binned(y_test_new, s_tilde, bins);
  for (std::size_t k = 0; k < config.zoo.size(); ++k) {
    const DownstreamModel m = fit(config.zoo[k], x_train, y_train, task, config.downstream, seed);
    const std::vector<double> s_k = m.score(x_test);
    DownstreamDiagnosticInput d;
    d.model = reference.names[k];
    d.rho_original = hgr_against_groups(reference.model_scores[k], groups, bins);
    d.rho_transformed = hgr_against_groups(s_k, groups, bins);
    d.loss_original = reference.model_losses[k];
    d.loss_transformed = model_loss(s_k, y_test_new, task);
    d.rho_with_upstream = hgr_binned(s_tilde, s_k, bins);
    d.rho_with_label = hgr_binned(s_k, y_test_new, bins);
    in.models.push_back(d);
  }
  return improvement_diagnostics(in);
}

// ---------------------------------------------------------------- sweep

std::string stamp_line(const nlohmann::json& config_echo) {
  return std::string("# code_version=") + kVersionStamp + "; config=" + config_echo.dump();
}

SweepResult run_sweep(const ExperimentConfig& config) {
  config.validate();
  SweepResult result;
  std::filesystem::create_directories(config.out / "reports");
  const nlohmann::json echo = config.to_json();
  for (std::size_t run = 0; run < config.runs; ++run) {
    auto [train_set, test_set] = load_experiment_data(config.dataset, run);
    const std::uint64_t seed = config.preprocessor.seed + run;

    const auto baseline = evaluate_pipeline(nullptr, train_set, test_set, config, seed);
    nlohmann::json base_doc{{"code_version", kVersionStamp}, {"config", echo}, {"run", run}, {"method", "identity"}};
    for (const auto& m : baseline) base_doc["models"][m.model] = m.report.to_json();
    save_json(base_doc, config.out / "reports" / ("baseline_run" + std::to_string(run) + ".json"));

    const ReferenceModels reference = fit_reference(train_set, test_set, config, seed);
    for (std::size_t b = 0; b < config.sweep.size(); ++b) {
      PreprocessorConfig pc = config.sweep.apply(config.preprocessor, b);
      pc.seed = seed;
      const TrainedPreprocessor pp = train(train_set, pc);
      const auto models = evaluate_pipeline(&pp, train_set, test_set, config, seed);
      nlohmann::json doc{{"code_version", kVersionStamp},
                         {"config", echo},
                         {"run", run},
                         {"budget", config.sweep.label(b)},
                         {"method", "fairprep"},
                         {"trace", pp.trace_json()}};
      for (const auto& m : models) {
        doc["models"][m.model] = m.report.to_json();
        result.rows.push_back({"fairprep", config.sweep.label(b), run, m.model, m.report});
      }
      const ImprovementDiagnostics diag = diagnose(pp, reference, train_set, test_set, config, seed);
      doc["diagnostics"] = diag.to_json();
      result.diagnostics.push_back({{"run", run}, {"budget", config.sweep.label(b)}, {"diagnostics", diag.to_json()}});
      save_json(doc, config.out / "reports" / ("budget" + std::to_string(b) + "_run" + std::to_string(run) + ".json"));
    }
  }
  write_sweep_outputs(result, config);
  return result;
}

void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& config) {
  std::filesystem::create_directories(config.out);
  const std::string stamp = stamp_line(config.to_json());
  auto group_of = [](const SweepRow& r) { return r.method + "|" + r.model + "|run" + std::to_string(r.run); };

  {
    std::ofstream f(config.out / "sweep.csv");
    if (!f) throw InputError("cannot write " + (config.out / "sweep.csv").string());
    f << stamp << "\n"
      << "method,budget,run,model,auc,sp,eo,ks_sp,ks_eo,hv_group,hgr_hat,loss,mean_gap,mse\n";
    for (const SweepRow& r : result.rows)
      f << r.method << ",\"" << r.budget << "\"," << r.run << "," << r.model << "," << csv_value(r.report.auc) << ","
        << csv_value(r.report.sp) << "," << csv_value(r.report.eo) << "," << csv_value(r.report.ks_sp) << ","
        << csv_value(r.report.ks_eo) << "," << group_of(r) << "," << csv_value(r.report.hgr_hat) << ","
        << csv_value(r.report.loss) << "," << csv_value(r.report.mean_gap) << "," << csv_value(r.report.mse) << "\n";
  }

  // Hypervolume of (1 - AUC, scaled fairness) per group, fairness scaled by its sweep maximum.
  {
    double max_sp = 0.0, max_eo = 0.0;
    for (const SweepRow& r : result.rows) {
      if (r.report.sp) max_sp = std::max(max_sp, *r.report.sp);
      if (r.report.eo) max_eo = std::max(max_eo, *r.report.eo);
    }
    std::map<std::string, std::pair<std::vector<TradeoffPoint>, std::vector<TradeoffPoint>>> groups;
    std::map<std::string, const SweepRow*> first;
    for (const SweepRow& r : result.rows) {
      if (!r.report.auc) continue;
      const std::string g = group_of(r);
      first.emplace(g, &r);
      const double u = 1.0 - *r.report.auc;
      auto scaled = [](double v, double max) { return max > 0.0 ? std::clamp(v / max, 0.0, 1.0) : 0.0; };
      if (r.report.sp)
        groups[g].first.push_back({u, scaled(*r.report.sp, max_sp), r.method, r.budget, static_cast<int>(r.run)});
      if (r.report.eo)
        groups[g].second.push_back({u, scaled(*r.report.eo, max_eo), r.method, r.budget, static_cast<int>(r.run)});
    }
    std::ofstream f(config.out / "hv.csv");
    f << stamp << "\n"
      << "hv_group,method,model,run,points,hv_sp,hv_eo,sp_scale,eo_scale\n";
    for (const auto& [g, pts] : groups) {
      const SweepRow& r = *first.at(g);
      auto hv = [](const std::vector<TradeoffPoint>& p) {
        return p.empty() ? std::optional<double>() : std::optional<double>(hypervolume_2d(p));
      };
      f << g << "," << r.method << "," << r.model << "," << r.run << "," << pts.first.size() << ","
        << csv_value(hv(pts.first)) << "," << csv_value(hv(pts.second)) << ","
        << csv_value(max_sp) << "," << csv_value(max_eo) << "\n";
    }
  }

  // Consistency: sample SD of each metric across the zoo (upstream excluded).
  {
    std::map<std::pair<std::string, std::size_t>, std::vector<const SweepRow*>> cells;
    for (const SweepRow& r : result.rows)
      if (r.model != "upstream") cells[{r.budget, r.run}].push_back(&r);
    std::ofstream f(config.out / "consistency.csv");
    f << stamp << "\n"
      << "method,budget,run,metric,consistency,models\n";
    using Getter = std::optional<double> (*)(const FairnessReport&);
    const std::vector<std::pair<std::string, Getter>> metrics{
        {"auc", [](const FairnessReport& r) { return r.auc; }},
        {"sp", [](const FairnessReport& r) { return r.sp; }},
        {"eo", [](const FairnessReport& r) { return r.eo; }},
        {"ks_sp", [](const FairnessReport& r) { return std::optional<double>(r.ks_sp); }},
        {"ks_eo", [](const FairnessReport& r) { return r.ks_eo; }},
        {"loss", [](const FairnessReport& r) { return std::optional<double>(r.loss); }},
        {"mse", [](const FairnessReport& r) { return r.mse; }}};
    for (const auto& [key, rows] : cells) {
      for (const auto& [name, get] : metrics) {
        std::vector<double> values;
        for (const SweepRow* r : rows)
          if (auto v = get(r->report)) values.push_back(*v);
        if (values.size() < 2) continue;
        f << rows.front()->method << ",\"" << key.first << "\"," << key.second << "," << name << ","
          << csv_value(consistency_score(values)) << "," << values.size() << "\n";
      }
    }
  }
}

void write_summary(const std::filesystem::path& sweep_csv, const std::filesystem::path& out_csv) {
  std::ifstream in(sweep_csv);
  if (!in) throw InputError("cannot read " + sweep_csv.string());
  std::stringstream buffer;
  std::string line, stamp;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) {
      if (stamp.empty()) stamp = line;
      continue;
    }
    buffer << line << "\n";
  }
  const auto table = parse_csv(buffer.str(), sweep_csv.string());
  if (table.empty()) throw InputError(sweep_csv.string() + ": no header row");
  const auto& header = table.front();
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(sweep_csv.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_method = col("method"), c_budget = col("budget"), c_model = col("model");
  const std::vector<std::string> metrics{"auc", "sp", "eo", "ks_sp", "ks_eo", "hgr_hat", "loss", "mean_gap", "mse"};
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>> values;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != header.size()) throw InputError(sweep_csv.string() + ": ragged row " + std::to_string(r));
    for (const auto& m : metrics) {
      const std::string& cell = row[col(m)];
      if (cell.empty()) continue;
      values[{row[c_method], row[c_budget], row[c_model], m}].push_back(std::stod(cell));
    }
  }
  std::ofstream out(out_csv);
  if (!out) throw InputError("cannot write " + out_csv.string());
  if (!stamp.empty()) out << stamp << "\n";
  out << "method,budget,model,metric,mean,two_se,n\n";
  for (const auto& [key, v] : values) {
    const Aggregate a = aggregate(v);
    out << std::get<0>(key) << ",\"" << std::get<1>(key) << "\"," << std::get<2>(key) << "," << std::get<3>(key)
        << "," << csv_value(a.mean) << "," << csv_value(a.two_se) << "," << a.n << "\n";
  }
}

}  // namespace fairprep
