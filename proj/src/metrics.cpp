// SPDX-License-Identifier: Apache-2.0
#include "fairprep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "fairprep/error.hpp"
#include "fairprep/hgr.hpp"

namespace fairprep {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InputError(std::string(what) + ": input lengths differ");
}

void count_classes(std::span<const double> labels, std::size_t& pos, std::size_t& neg, const char* what) {
  pos = neg = 0;
  for (double l : labels) {
    if (l == 1.0) ++pos;
    else if (l == 0.0) ++neg;
    else throw MetricError(std::string(what) + ": labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw MetricError(std::string(what) + ": both classes must be present");
}

std::vector<double> gather(std::span<const double> v, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const double> labels) {
  require_same_length(scores.size(), labels.size(), "auc");
  std::size_t pos = 0, neg = 0;
  count_classes(labels, pos, neg, "auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, then the Mann-Whitney U of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double choose_threshold(std::span<const double> scores, std::span<const double> labels) {
  require_same_length(scores.size(), labels.size(), "choose_threshold");
  std::size_t pos = 0, neg = 0;
  count_classes(labels, pos, neg, "choose_threshold");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double best_j = -std::numeric_limits<double>::infinity();
  double best_t = scores[order.front()];
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1.0 ? tp : fp) += 1;
      ++i;
    }
    const double j = static_cast<double>(tp) / static_cast<double>(pos) - static_cast<double>(fp) / static_cast<double>(neg);
    if (j > best_j + 1e-12) {
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<double> threshold_labels(std::span<const double> scores, double threshold) {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1.0 : 0.0;
  return out;
}

double sp_ratio(std::span<const double> predictions, std::span<const std::size_t> groups) {
  require_same_length(predictions.size(), groups.size(), "sp_ratio");
  if (predictions.empty()) throw MetricError("sp_ratio: empty sample");
  std::map<std::size_t, std::pair<double, double>> per_group;  // positives, count
  double positives = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& g = per_group[groups[i]];
    g.first += predictions[i];
    g.second += 1.0;
    positives += predictions[i];
  }
  const double overall = positives / static_cast<double>(predictions.size());
  if (!(overall > 0.0)) throw MetricError("sp_ratio: P(Yhat=1) = 0, ratio undefined");
  double s = 0.0;
  for (const auto& [id, g] : per_group) s += std::abs(g.first / g.second / overall - 1.0);
  return s;
}

double eo_ratio(std::span<const double> predictions, std::span<const std::size_t> groups,
                std::span<const double> truth) {
  require_same_length(predictions.size(), groups.size(), "eo_ratio");
  require_same_length(predictions.size(), truth.size(), "eo_ratio");
  std::map<std::size_t, int> all_groups;
  for (std::size_t g : groups) all_groups[g] = 1;
  double s = 0.0;
  for (int y = 0; y <= 1; ++y) {
    const double yv = static_cast<double>(y);
    std::map<std::size_t, std::pair<double, double>> strata;  // hits, count
    double hits = 0.0, count = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != yv) continue;
      const double hit = predictions[i] == yv ? 1.0 : 0.0;
      auto& st = strata[groups[i]];
      st.first += hit;
      st.second += 1.0;
      hits += hit;
      count += 1.0;
    }
    if (count == 0.0) throw MetricError("eo_ratio: no rows with Y=" + std::to_string(y));
    const double pooled = hits / count;
    if (!(pooled > 0.0)) throw MetricError("eo_ratio: P(Yhat=" + std::to_string(y) + " | Y=" + std::to_string(y) + ") = 0");
    for (const auto& [g, _] : all_groups) {
      const auto it = strata.find(g);
      if (it == strata.end())
        throw MetricError("eo_ratio: empty stratum (Y=" + std::to_string(y) + ", A=" + std::to_string(g) + ")");
      s += std::abs(it->second.first / it->second.second / pooled - 1.0);
    }
  }
  return s;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw MetricError("ks_statistic: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double v;
    if (j >= sb.size()) v = sa[i];
    else if (i >= sa.size()) v = sb[j];
    else v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

double ks_sp(std::span<const double> scores, std::span<const std::size_t> groups) {
  require_same_length(scores.size(), groups.size(), "ks_sp");
  if (scores.empty()) throw MetricError("ks_sp: empty sample");
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  double s = 0.0;
  for (const auto& [g, rows] : members) s += ks_statistic(gather(scores, rows), scores);
  return s;
}

double ks_eo(std::span<const double> scores, std::span<const std::size_t> groups, std::span<const double> truth) {
  require_same_length(scores.size(), groups.size(), "ks_eo");
  require_same_length(scores.size(), truth.size(), "ks_eo");
  std::map<std::size_t, int> all_groups;
  for (std::size_t g : groups) all_groups[g] = 1;
  double s = 0.0;
  for (int y = 0; y <= 1; ++y) {
    const double conditioning = static_cast<double>(1 - y);
    const double sign = y == 0 ? 1.0 : -1.0;
    std::vector<double> pooled;
    std::map<std::size_t, std::vector<double>> per_group;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (truth[i] != conditioning) continue;
      const double mapped = static_cast<double>(y) + sign * scores[i];
      pooled.push_back(mapped);
      per_group[groups[i]].push_back(mapped);
    }
    for (const auto& [g, _] : all_groups) {
      const auto it = per_group.find(g);
      if (it == per_group.end())
        throw MetricError("ks_eo: empty stratum (Y=" + std::to_string(1 - y) + ", A=" + std::to_string(g) + ")");
      s += ks_statistic(it->second, pooled);
    }
  }
  return s;
}

double mean_gap(std::span<const double> scores, std::span<const std::size_t> groups) {
  require_same_length(scores.size(), groups.size(), "mean_gap");
  std::map<std::size_t, std::pair<double, double>> acc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc[groups[i]].first += scores[i];
    acc[groups[i]].second += 1.0;
  }
  if (acc.size() < 2) return 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [g, v] : acc) {
    lo = std::min(lo, v.first / v.second);
    hi = std::max(hi, v.first / v.second);
  }
  return hi - lo;
}

double mean_squared_error(std::span<const double> pred, std::span<const double> truth) {
  require_same_length(pred.size(), truth.size(), "mean_squared_error");
  if (pred.empty()) throw MetricError("mean_squared_error: empty sample");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

std::vector<std::size_t> pareto_front(std::span<const TradeoffPoint> points) {
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (i == j) continue;
      const auto& q = points[j];
      const bool weakly = q.one_minus_auc <= p.one_minus_auc && q.scaled_fairness <= p.scaled_fairness;
      const bool equal = q.one_minus_auc == p.one_minus_auc && q.scaled_fairness == p.scaled_fairness;
      dominated = weakly && (!equal || j < i);
    }
    if (!dominated) front.push_back(i);
  }
  return front;
}

double hypervolume_2d(std::span<const TradeoffPoint> points, std::pair<double, double> reference) {
  for (const auto& p : points)
    if (p.one_minus_auc > reference.first || p.scaled_fairness > reference.second)
      throw InputError("hypervolume_2d: point exceeds the reference point");
  const auto front_idx = pareto_front(points);
  std::vector<std::pair<double, double>> front;
  for (std::size_t i : front_idx) front.emplace_back(points[i].one_minus_auc, points[i].scaled_fairness);
  std::sort(front.begin(), front.end());
  double area = 0.0;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double next_x = i + 1 < front.size() ? front[i + 1].first : reference.first;
    area += (next_x - front[i].first) * (reference.second - front[i].second);
  }
  return area;
}

double consistency_score(std::span<const double> values) {
  if (values.size() < 2) throw MetricError("consistency_score: at least 2 models required");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0));
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw MetricError("aggregate: no values");
  Aggregate out;
  out.n = values.size();
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
  if (out.n > 1) out.two_se = 2.0 * consistency_score(values) / std::sqrt(static_cast<double>(out.n));
  return out;
}

nlohmann::json FairnessReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"task", task},     {"auc", opt(auc)},         {"sp", opt(sp)},     {"eo", opt(eo)},
          {"ks_sp", ks_sp},   {"ks_eo", opt(ks_eo)},     {"hgr_hat", hgr_hat}, {"loss", loss},
          {"threshold", opt(threshold)}, {"mean_gap", mean_gap}, {"mse", opt(mse)}};
}

FairnessReport evaluate_scores(std::span<const double> scores, std::span<const double> truth,
                               std::span<const std::size_t> groups, bool classification, double hgr_hat,
                               double loss) {
  FairnessReport r;
  r.hgr_hat = hgr_hat;
  r.loss = loss;
  r.ks_sp = ks_sp(scores, groups);
  r.mean_gap = mean_gap(scores, groups);
  if (!classification) {
    r.task = "regression";
    r.mse = mean_squared_error(scores, truth);
    return r;
  }
  r.auc = auc(scores, truth);
  r.threshold = choose_threshold(scores, truth);
  const auto labels = threshold_labels(scores, *r.threshold);
  // A threshold that predicts one class everywhere leaves the ratios undefined;
  // such fields stay empty instead of failing the whole report.
  auto defined = [](auto&& metric) -> std::optional<double> {
    try {
      return metric();
    } catch (const MetricError&) {
      return std::nullopt;
    }
  };
  r.sp = defined([&] { return sp_ratio(labels, groups); });
  r.eo = defined([&] { return eo_ratio(labels, groups, truth); });
  r.ks_eo = defined([&] { return ks_eo(scores, groups, truth); });
  return r;
}

// ------------------------------------------------------------ diagnostics

namespace {

void require_rho(double rho, const char* name) {
  if (!std::isfinite(rho) || rho < 0.0 || rho > 1.0)
    throw InputError(std::string("improvement_diagnostics: ") + name + " must be a correlation in [0, 1]");
}

}  // namespace

ImprovementDiagnostics improvement_diagnostics(const DiagnosticInputs& in) {
  require_rho(in.rho_upstream_original, "rho_upstream_original");
  require_rho(in.rho_upstream_transformed, "rho_upstream_transformed");
  require_rho(in.rho_label_upstream_original, "rho_label_upstream_original");
  require_rho(in.rho_label_upstream_transformed, "rho_label_upstream_transformed");
  require_rho(in.rho_newlabel_upstream_transformed, "rho_newlabel_upstream_transformed");
  for (double v : {in.loss_upstream_original, in.loss_upstream_transformed, in.loss_upstream_transformed_on_y,
                   in.check_epsilon, in.lambda_f, in.slack})
    if (!std::isfinite(v)) throw InputError("improvement_diagnostics: non-finite input");
  if (in.lambda_f < 0.0) throw InputError("improvement_diagnostics: lambda_f must be >= 0");

  ImprovementDiagnostics d;
  d.slack = in.slack;
  d.check_epsilon = in.check_epsilon;
  d.delta_f_tilde = in.rho_upstream_original - in.rho_upstream_transformed;
  d.delta_l_tilde = in.loss_upstream_original - in.loss_upstream_transformed;
  d.e_a = in.loss_upstream_original - in.check_epsilon;
  if (in.lambda_f > 0.0) {
    d.upstream_lower_bound = (in.loss_upstream_transformed_on_y - d.e_a - in.check_epsilon) / in.lambda_f;
    d.lower_bound_holds = d.delta_f_tilde >= *d.upstream_lower_bound - in.slack;
  }
  d.upstream_upper_bound = d_metric(in.rho_label_upstream_original) + d_metric(in.rho_label_upstream_transformed);
  d.upper_bound_holds = d.delta_f_tilde <= d.upstream_upper_bound + in.slack;
  d.d_upstream_label = d_metric(in.rho_newlabel_upstream_transformed);

  for (const auto& m : in.models) {
    require_rho(m.rho_original, "model rho_original");
    require_rho(m.rho_transformed, "model rho_transformed");
    require_rho(m.rho_with_upstream, "model rho_with_upstream");
    require_rho(m.rho_with_label, "model rho_with_label");
    DownstreamDiagnostics k;
    k.model = m.model;
    k.delta_f_k_tilde = m.rho_original - m.rho_transformed;
    k.delta_f_k = in.rho_upstream_original - m.rho_original;
    k.delta_l_k = m.loss_original - in.loss_upstream_original;
    k.d_upstream_model = d_metric(m.rho_with_upstream);
    k.d_model_label = d_metric(m.rho_with_label);
    k.lower_bound = d.delta_f_tilde - k.delta_f_k - k.d_upstream_model;
    k.upper_bound = d.delta_f_tilde - k.delta_f_k + k.d_upstream_model;
    k.within_bracket =
        k.delta_f_k_tilde >= k.lower_bound - in.slack && k.delta_f_k_tilde <= k.upper_bound + in.slack;
    k.sufficient_rhs = k.delta_f_k + k.d_model_label + d.d_upstream_label;
    k.sufficient_condition = d.delta_f_tilde >= k.sufficient_rhs;
    d.models.push_back(std::move(k));
  }
  return d;
}

nlohmann::json ImprovementDiagnostics::to_json() const {
  nlohmann::json models_json = nlohmann::json::array();
  for (const auto& k : models)
    models_json.push_back({{"model", k.model},
                           {"delta_f_k_tilde", k.delta_f_k_tilde},
                           {"delta_f_k", k.delta_f_k},
                           {"delta_l_k", k.delta_l_k},
                           {"d_upstream_model", k.d_upstream_model},
                           {"d_model_label", k.d_model_label},
                           {"lower_bound", k.lower_bound},
                           {"upper_bound", k.upper_bound},
                           {"within_bracket", k.within_bracket},
                           {"sufficient_rhs", k.sufficient_rhs},
                           {"sufficient_condition", k.sufficient_condition}});
  return {{"delta_f_tilde", delta_f_tilde},
          {"delta_l_tilde", delta_l_tilde},
          {"e_a", e_a},
          {"check_epsilon", check_epsilon},
          {"upstream_lower_bound", upstream_lower_bound ? nlohmann::json(*upstream_lower_bound) : nlohmann::json(nullptr)},
          {"upstream_upper_bound", upstream_upper_bound},
          {"d_upstream_label", d_upstream_label},
          {"lower_bound_holds", lower_bound_holds},
          {"upper_bound_holds", upper_bound_holds},
          {"slack", slack},
          {"models", models_json}};
}

}  // namespace fairprep
