// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fairprep/error.hpp"
#include "fairprep/metrics.hpp"
#include "fairprep/rng.hpp"

using namespace fairprep;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1.0 && y[j] == 0.0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

double brute_sp(const std::vector<double>& pred, const std::vector<std::size_t>& g) {
  std::map<std::size_t, std::pair<double, double>> by;
  double pos = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    by[g[i]].first += pred[i];
    by[g[i]].second += 1.0;
    pos += pred[i];
  }
  const double overall = pos / static_cast<double>(pred.size());
  double s = 0.0;
  for (const auto& [k, v] : by) s += std::abs(v.first / v.second / overall - 1.0);
  return s;
}

double brute_eo(const std::vector<double>& pred, const std::vector<std::size_t>& g, const std::vector<double>& y) {
  double s = 0.0;
  for (double level : {0.0, 1.0}) {
    std::map<std::size_t, std::pair<double, double>> by;
    double hit = 0.0, count = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (y[i] != level) continue;
      const double h = pred[i] == level ? 1.0 : 0.0;
      by[g[i]].first += h;
      by[g[i]].second += 1.0;
      hit += h;
      count += 1.0;
    }
    for (const auto& [k, v] : by) s += std::abs(v.first / v.second / (hit / count) - 1.0);
  }
  return s;
}

// Empirical CDFs compared at every point of both samples.
double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double x) { return x <= t; })) /
           static_cast<double>(v.size());
  };
  double best = 0.0;
  for (const auto* v : {&a, &b})
    for (double t : *v) best = std::max(best, std::abs(cdf(a, t) - cdf(b, t)));
  return best;
}

double monte_carlo_hv(const std::vector<TradeoffPoint>& pts, Rng& rng, std::size_t samples) {
  std::size_t inside = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double u = rng.uniform(), v = rng.uniform();
    for (const auto& p : pts)
      if (p.one_minus_auc <= u && p.scaled_fairness <= v) {
        ++inside;
        break;
      }
  }
  return static_cast<double>(inside) / static_cast<double>(samples);
}

TradeoffPoint point(double x, double y) {
  TradeoffPoint p;
  p.one_minus_auc = x;
  p.scaled_fairness = y;
  return p;
}

}  // namespace

TEST_CASE("AUC") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8}, y{0, 0, 1, 1};
  CHECK(auc(s, y) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
  CHECK(auc(std::vector<double>(4, 0.3), y) == 0.5);
  CHECK_THROWS_AS(auc(s, std::vector<double>{1, 1, 1, 1}), MetricError);

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + rng.index(60);
    std::vector<double> sc(n), lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = std::round(rng.uniform() * 10.0) / 10.0;  // coarse grid forces ties
      lab[i] = i < 2 ? static_cast<double>(i) : (rng.bernoulli(0.4) ? 1.0 : 0.0);
    }
    CHECK(auc(sc, lab) == brute_auc(sc, lab));
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = std::exp(3.0 * sc[i]) - 7.0;
    CHECK(auc(mapped, lab) == auc(sc, lab));
  }
}

TEST_CASE("Youden threshold") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8}, y{0, 0, 1, 1};
  const double t = choose_threshold(s, y);
  CHECK(t > 0.4);
  CHECK(t <= 0.8);
  const auto pred = threshold_labels(s, t);
  CHECK(pred == std::vector<double>{0, 0, 0, 1});
  CHECK(choose_threshold(std::vector<double>(4, 0.3), y) == 0.3);
  const std::vector<double> sep{0.1, 0.2, 0.7, 0.9};
  CHECK(threshold_labels(sep, choose_threshold(sep, y)) == y);
}

TEST_CASE("statistical parity and equalized odds") {
  // Two groups of 10, positive rates 0.2 and 0.4.
  std::vector<double> pred(20, 0.0);
  std::vector<std::size_t> groups(20, 0);
  for (std::size_t i = 10; i < 20; ++i) groups[i] = 1;
  pred[0] = pred[1] = 1.0;
  pred[10] = pred[11] = pred[12] = pred[13] = 1.0;
  CHECK(sp_ratio(pred, groups) == doctest::Approx(2.0 / 3.0));
  CHECK(sp_ratio(std::vector<double>{1, 0, 1, 0}, std::vector<std::size_t>{0, 0, 1, 1}) == 0.0);
  CHECK_THROWS_AS(sp_ratio(std::vector<double>(4, 0.0), std::vector<std::size_t>{0, 0, 1, 1}), MetricError);

  // Y = 1 strata: group 0 accuracy 0.5, group 1 accuracy 1.0; Y = 0 all correct.
  const std::vector<double> truth{1, 1, 0, 0, 1, 1, 0, 0};
  const std::vector<double> guess{1, 0, 0, 0, 1, 1, 0, 0};
  const std::vector<std::size_t> g{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(eo_ratio(guess, g, truth) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(eo_ratio(guess, std::vector<std::size_t>{0, 0, 1, 1, 1, 1, 1, 1}, truth), MetricError);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 200, k = 2 + rng.index(3);
    std::vector<double> p(n), y(n);
    std::vector<std::size_t> grp(n);
    for (std::size_t i = 0; i < n; ++i) {
      grp[i] = i % k;
      y[i] = (i / k) % 2 == 0 ? 1.0 : 0.0;
      p[i] = rng.bernoulli(0.3 + 0.1 * static_cast<double>(grp[i])) ? 1.0 : 0.0;
    }
    CHECK(sp_ratio(p, grp) == doctest::Approx(brute_sp(p, grp)).epsilon(1e-12));
    CHECK(eo_ratio(p, grp, y) == doctest::Approx(brute_eo(p, grp, y)).epsilon(1e-12));
  }

  // Random predictions at n = 10000 give EO near zero.
  std::vector<double> p(10000), y(10000);
  std::vector<std::size_t> grp(10000);
  for (std::size_t i = 0; i < 10000; ++i) {
    grp[i] = rng.bernoulli(0.5) ? 1 : 0;
    y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    p[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  CHECK(eo_ratio(p, grp, y) <= 0.1);
}

TEST_CASE("Kolmogorov-Smirnov") {
  CHECK(ks_statistic(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) == doctest::Approx(1.0 / 3.0));
  CHECK(ks_statistic(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
  CHECK(ks_statistic(std::vector<double>{1, 2}, std::vector<double>{5, 6}) == 1.0);
  CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, std::vector<double>{1}), MetricError);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(3 + rng.index(30)), b(3 + rng.index(30));
    for (double& v : a) v = std::round(rng.normal() * 4.0);
    for (double& v : b) v = std::round(rng.normal() * 4.0 + 1.0);
    CHECK(ks_statistic(a, b) == doctest::Approx(brute_ks(a, b)).epsilon(1e-12));
  }

  // Two groups with disjoint score ranges: each group is half the pool, KS 0.5 each.
  const std::vector<double> s{0.1, 0.2, 0.3, 5.1, 5.2, 5.3};
  const std::vector<std::size_t> g{0, 0, 0, 1, 1, 1};
  CHECK(ks_sp(s, g) == doctest::Approx(brute_ks({0.1, 0.2, 0.3}, s) + brute_ks({5.1, 5.2, 5.3}, s)));
  CHECK(ks_sp(s, g) == doctest::Approx(1.0));

  // KS-EO terms equal the unmapped conditional KS terms.
  const std::vector<double> y{1, 0, 1, 0, 1, 0};
  double expected = 0.0;
  for (double level : {0.0, 1.0})
    for (std::size_t grp : {0u, 1u}) {
      std::vector<double> sub, pool;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (y[i] == 1.0 - level) {
          pool.push_back(s[i]);
          if (g[i] == grp) sub.push_back(s[i]);
        }
      expected += brute_ks(sub, pool);
    }
  CHECK(ks_eo(s, g, y) == doctest::Approx(expected));
  CHECK(ks_sp(std::vector<double>{1, 2, 1, 2}, std::vector<std::size_t>{0, 0, 1, 1}) == 0.0);
}

TEST_CASE("hypervolume and Pareto front") {
  CHECK(hypervolume_2d(std::vector<TradeoffPoint>{point(0.1, 0.1)}) == doctest::Approx(0.81));
  const std::vector<TradeoffPoint> r{point(0.1, 0.1), point(0.2, 0.2), point(0.05, 0.15)};
  const auto front = pareto_front(r);
  CHECK(front == std::vector<std::size_t>{0, 2});
  CHECK(hypervolume_2d(r) == doctest::Approx(0.8525));
  CHECK_THROWS_AS(hypervolume_2d(std::vector<TradeoffPoint>{point(1.2, 0.1)}), InputError);

  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    std::vector<TradeoffPoint> pts;
    const std::size_t n = 1 + rng.index(6);
    for (std::size_t i = 0; i < n; ++i) pts.push_back(point(rng.uniform(), rng.uniform()));
    const double hv = hypervolume_2d(pts);
    CHECK(std::abs(hv - monte_carlo_hv(pts, rng, 1000000)) <= 0.005);
    auto shuffled = pts;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(hypervolume_2d(shuffled) == doctest::Approx(hv).epsilon(1e-12));
    auto dominated = pts;
    dominated.push_back(point(std::min(1.0, pts[0].one_minus_auc + 0.01), std::min(1.0, pts[0].scaled_fairness + 0.01)));
    CHECK(hypervolume_2d(dominated) == doctest::Approx(hv).epsilon(1e-12));
  }
}

TEST_CASE("consistency and Popoviciu") {
  CHECK(consistency_score(std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
  CHECK(consistency_score(std::vector<double>{0, 1}) == doctest::Approx(std::sqrt(0.5)));
  CHECK_THROWS_AS(consistency_score(std::vector<double>{1}), MetricError);
  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(2 + rng.index(8));
    for (double& x : v) x = rng.uniform(-2.0, 5.0);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    CHECK(var <= (*hi - *lo) * (*hi - *lo) / 4.0);
  }
}

TEST_CASE("aggregate is mean plus or minus two standard errors") {
  const std::vector<double> runs{0.70, 0.72, 0.74, 0.71, 0.73};
  const Aggregate a = aggregate(runs);
  CHECK(a.n == 5);
  CHECK(a.mean == doctest::Approx(0.72));
  // Sample sd of {-2,0,2,-1,1} * 0.01 is sqrt(10/4) * 0.01.
  CHECK(a.two_se == doctest::Approx(2.0 * std::sqrt(2.5) * 0.01 / std::sqrt(5.0)));
  CHECK(aggregate(std::vector<double>{3.0}).two_se == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}), MetricError);
}

TEST_CASE("evaluate_scores fills the task-specific fields") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.2, 0.9}, y{0, 0, 1, 1, 0, 1};
  const std::vector<std::size_t> g{0, 0, 0, 1, 1, 1};
  const FairnessReport c = evaluate_scores(s, y, g, true, 0.3, 0.5);
  REQUIRE(c.auc);
  CHECK(*c.auc == doctest::Approx(brute_auc(s, y)));
  CHECK(c.threshold);
  CHECK(c.hgr_hat == 0.3);
  CHECK(c.to_json().at("task") == "classification");
  const FairnessReport r = evaluate_scores(s, y, g, false, 0.0, 0.0);
  CHECK_FALSE(r.auc);
  CHECK(r.mse);
  CHECK(r.mean_gap == doctest::Approx(std::abs((0.8 + 0.2 + 0.9) / 3 - (0.1 + 0.4 + 0.35) / 3)));
}

TEST_CASE("improvement diagnostics bookkeeping") {
  DiagnosticInputs in;
  in.lambda_f = 2.0;
  in.rho_upstream_original = 0.6;
  in.rho_upstream_transformed = 0.2;
  in.loss_upstream_original = 0.4;
  in.loss_upstream_transformed = 0.45;
  in.loss_upstream_transformed_on_y = 0.5;
  in.check_epsilon = 0.35;
  in.rho_label_upstream_original = 0.7;
  in.rho_label_upstream_transformed = 0.5;
  in.rho_newlabel_upstream_transformed = 0.6;
  DownstreamDiagnosticInput m;
  m.model = "lr";
  m.rho_original = 0.5;
  m.rho_transformed = 0.1;
  m.rho_with_upstream = 0.9;
  m.rho_with_label = 0.6;
  in.models.push_back(m);
  const auto d = improvement_diagnostics(in);
  CHECK(d.delta_f_tilde + in.rho_upstream_transformed == doctest::Approx(in.rho_upstream_original));
  CHECK(d.e_a == doctest::Approx(0.05));
  REQUIRE(d.upstream_lower_bound);
  CHECK(*d.upstream_lower_bound == doctest::Approx((0.5 - 0.05 - 0.35) / 2.0));
  CHECK(d.lower_bound_holds);
  REQUIRE(d.models.size() == 1);
  CHECK(d.models[0].delta_f_k_tilde == doctest::Approx(0.4));
  CHECK(d.models[0].delta_f_k == doctest::Approx(0.1));
  CHECK(d.models[0].d_upstream_model == doctest::Approx(std::sqrt(0.2)));

  DiagnosticInputs same;
  same.rho_upstream_original = same.rho_upstream_transformed = 0.4;
  same.loss_upstream_original = same.loss_upstream_transformed = 0.3;
  const auto z = improvement_diagnostics(same);
  CHECK(z.delta_f_tilde == 0.0);
  CHECK(z.delta_l_tilde == 0.0);

  in.rho_upstream_original = 1.4;
  CHECK_THROWS_AS(improvement_diagnostics(in), InputError);
}
