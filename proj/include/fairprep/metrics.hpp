// SPDX-License-Identifier: Apache-2.0
#pragma once

// Evaluation quantities: AUC, ratio-based statistical parity / equalized odds,
// their Kolmogorov-Smirnov variants, 2-D hypervolume of trade-off fronts,
// consistency scores and the improvement diagnostics.

#include <cstddef>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fairprep {

/// Mann-Whitney AUC; tied pairs count one half. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Threshold maximizing Youden's J = TPR - FPR for the rule `score >= t`.
/// Candidates are the distinct scores; ties go to the larger threshold.
double choose_threshold(std::span<const double> scores, std::span<const double> labels);
std::vector<double> threshold_labels(std::span<const double> scores, double threshold);

/// sum_a |P(Yhat=1 | A=a) / P(Yhat=1) - 1|
double sp_ratio(std::span<const double> predictions, std::span<const std::size_t> groups);
/// sum_{y,a} |P(Yhat=y | A=a, Y=y) / P(Yhat=y | Y=y) - 1|
double eo_ratio(std::span<const double> predictions, std::span<const std::size_t> groups,
                std::span<const double> truth);

/// Two-sample KS statistic: sup |F_a - F_b|, exact over the merged sample.
double ks_statistic(std::span<const double> a, std::span<const double> b);
/// sum_a KS(score | A=a, score)
double ks_sp(std::span<const double> scores, std::span<const std::size_t> groups);
/// sum_{y,a} KS(y + (-1)^y score | A=a, Y=1-y ;  y + (-1)^y score | Y=1-y)
double ks_eo(std::span<const double> scores, std::span<const std::size_t> groups, std::span<const double> truth);

/// Largest difference of group means of the scores (|E[s|A=1] - E[s|A=0]| for two groups).
double mean_gap(std::span<const double> scores, std::span<const std::size_t> groups);
double mean_squared_error(std::span<const double> pred, std::span<const double> truth);

struct TradeoffPoint {
  double one_minus_auc = 0.0;
  double scaled_fairness = 0.0;
  std::string method;
  std::string budget;
  int run = 0;
};

/// Indices of the non-dominated points (minimization in both coordinates).
/// Duplicate points are kept once (first occurrence).
std::vector<std::size_t> pareto_front(std::span<const TradeoffPoint> points);
/// Area dominated by the front and bounded by the reference point.
double hypervolume_2d(std::span<const TradeoffPoint> points, std::pair<double, double> reference = {1.0, 1.0});

/// Sample standard deviation (divisor k - 1) across downstream models.
double consistency_score(std::span<const double> per_model_values);

struct Aggregate {
  double mean = 0.0;
  double two_se = 0.0;  // 2 * sample sd / sqrt(n); 0 for a single value
  std::size_t n = 0;
};
Aggregate aggregate(std::span<const double> values);

struct FairnessReport {
  std::string task = "classification";
  std::optional<double> auc;
  std::optional<double> sp;
  std::optional<double> eo;
  double ks_sp = 0.0;
  std::optional<double> ks_eo;
  double hgr_hat = 0.0;
  double loss = 0.0;
  std::optional<double> threshold;
  double mean_gap = 0.0;
  std::optional<double> mse;

  nlohmann::json to_json() const;
};

/// Classification: threshold by Youden's J, then every metric. Regression:
/// KS-SP, mean gap and MSE only. `hgr_hat` and `loss` are recorded as given.
/// SP, EO and KS-EO are left empty when undefined (e.g. every prediction is 1).
FairnessReport evaluate_scores(std::span<const double> scores, std::span<const double> truth,
                               std::span<const std::size_t> groups, bool classification, double hgr_hat,
                               double loss);

// ------------------------------------------------------------ diagnostics

struct DownstreamDiagnosticInput {
  std::string model;
  double rho_original = 0.0;         // rho(h_k*(X), A)
  double rho_transformed = 0.0;      // rho(h~_k*(X~), A)
  double loss_original = 0.0;        // L(h_k*; D)
  double loss_transformed = 0.0;     // L(h~_k*; D~)
  double rho_with_upstream = 0.0;    // rho(h~*(X~), h~_k*(X~))
  double rho_with_label = 0.0;       // rho(h~_k*(X~), Y~)
};

struct DiagnosticInputs {
  double lambda_f = 0.0;
  double rho_upstream_original = 0.0;          // rho(h*(X), A)
  double rho_upstream_transformed = 0.0;       // rho(h~*(X~), A)
  double loss_upstream_original = 0.0;         // L(h*; D)
  double loss_upstream_transformed = 0.0;      // L(h~*; D~) = E l(Y~, h~*(X~))
  double loss_upstream_transformed_on_y = 0.0; // E l(Y, h~*(X~))
  double check_epsilon = 0.0;                  // minimal risk of a model on (X, A)
  double rho_label_upstream_original = 0.0;    // rho(Y, h*(X))
  double rho_label_upstream_transformed = 0.0; // rho(Y, h~*(X~))
  double rho_newlabel_upstream_transformed = 0.0;  // rho(Y~, h~*(X~))
  std::vector<DownstreamDiagnosticInput> models;
  double slack = 0.15;
};

struct DownstreamDiagnostics {
  std::string model;
  double delta_f_k_tilde = 0.0;  // rho(h_k*(X),A) - rho(h~_k*(X~),A)
  double delta_f_k = 0.0;        // rho(h*(X),A) - rho(h_k*(X),A)
  double delta_l_k = 0.0;        // L(h_k*;D) - L(h*;D)
  double d_upstream_model = 0.0; // d(h~*(X~), h~_k*(X~))
  double d_model_label = 0.0;    // d(h~_k*(X~), Y~)
  double lower_bound = 0.0;      // delta_f_tilde - delta_f_k - d_upstream_model (C term unidentifiable, omitted)
  double upper_bound = 0.0;      // delta_f_tilde - delta_f_k + d_upstream_model
  bool within_bracket = false;   // with slack
  double sufficient_rhs = 0.0;   // delta_f_k + d_model_label + d_upstream_label
  bool sufficient_condition = false;
};

struct ImprovementDiagnostics {
  double delta_f_tilde = 0.0;   // rho(h*(X),A) - rho(h~*(X~),A)
  double delta_l_tilde = 0.0;   // L(h*;D) - L(h~*;D~)
  double e_a = 0.0;             // L(h*;D) - check_epsilon
  double check_epsilon = 0.0;
  std::optional<double> upstream_lower_bound;  // (E l(Y,h~*(X~)) - e(A) - check_epsilon) / lambda_f
  double upstream_upper_bound = 0.0;           // d(Y,h*(X)) + d(Y,h~*(X~)), binary outputs
  double d_upstream_label = 0.0;               // d(h~*(X~), Y~)
  bool lower_bound_holds = false;              // delta_f_tilde >= lower - slack
  bool upper_bound_holds = false;              // delta_f_tilde <= upper + slack
  double slack = 0.15;
  std::vector<DownstreamDiagnostics> models;

  nlohmann::json to_json() const;
};

/// Assembles every improvement and bound term. Bounds are reported, never enforced.
ImprovementDiagnostics improvement_diagnostics(const DiagnosticInputs& in);

}  // namespace fairprep
