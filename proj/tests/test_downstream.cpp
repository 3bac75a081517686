// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairprep/downstream.hpp"
#include "fairprep/error.hpp"
#include "fairprep/metrics.hpp"
#include "fairprep/rng.hpp"

using namespace fairprep;

namespace {

double accuracy(const std::vector<double>& scores, const std::vector<double>& y) {
  double hits = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += (scores[i] >= 0.5) == (y[i] == 1.0);
  return hits / static_cast<double>(y.size());
}

void xor_data(std::size_t n, Rng& rng, Matrix& x, std::vector<double>& y) {
  x = Matrix(n, 2);
  y.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    y[i] = (x(i, 0) > 0.0) != (x(i, 1) > 0.0) ? 1.0 : 0.0;
  }
}

}  // namespace

TEST_CASE("logistic regression separates separable data") {
  Rng rng(1);
  Matrix x(200, 2);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = i % 2 == 0 ? 1.0 : 0.0;
    x(i, 0) = rng.normal() * 0.5 + (y[i] == 1.0 ? 2.0 : -2.0);
    x(i, 1) = rng.normal();
  }
  const auto m = fit(ModelKind::logistic_regression, x, y, Task::classification, DownstreamHyperparams{}, 2);
  const auto s = m.score(x);
  CHECK(accuracy(s, y) >= 0.99);
  for (double v : s) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // AUC is rank-based, so a monotone map of the scores leaves it unchanged.
  std::vector<double> logit(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) logit[i] = std::log(s[i] + 1e-12) - std::log1p(-s[i] + 1e-12);
  CHECK(auc(logit, y) == auc(s, y));

  Matrix constant(5, 2, 1.0);
  const auto cs = m.score(constant);
  for (double v : cs) CHECK(v == cs[0]);
  CHECK_THROWS_AS(m.score(Matrix(3, 4)), ShapeError);
}

TEST_CASE("1-NN reproduces its training labels") {
  Rng rng(2);
  Matrix x(50, 3);
  for (double& v : x.values()) v = rng.normal();
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  y[0] = 0.0, y[1] = 1.0;
  DownstreamHyperparams hp;
  hp.knn_k = 1;
  const auto m = fit(ModelKind::knn, x, y, Task::classification, hp, 3);
  CHECK(m.score(x) == y);
}

TEST_CASE("random features lift XOR beyond a linear model") {
  Rng rng(3);
  Matrix x;
  std::vector<double> y;
  xor_data(400, rng, x, y);
  DownstreamHyperparams hp;
  hp.rff_features = 200;
  hp.rff_bandwidth = 0.5;
  hp.linear_iterations = 3000;
  const auto rff = fit(ModelKind::random_feature_linear, x, y, Task::classification, hp, 4);
  const auto lr = fit(ModelKind::logistic_regression, x, y, Task::classification, hp, 4);
  CHECK(accuracy(rff.score(x), y) >= 0.9);
  CHECK(accuracy(lr.score(x), y) <= 0.6);
}

TEST_CASE("identity composition equals a direct fit") {
  Rng rng(4);
  Matrix x(120, 3);
  for (double& v : x.values()) v = rng.normal();
  std::vector<double> y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = x(i, 0) + x(i, 1) > 0.0 ? 1.0 : 0.0;
  for (ModelKind kind : {ModelKind::logistic_regression, ModelKind::knn, ModelKind::small_mlp}) {
    const auto direct = fit(kind, x, y, Task::classification, DownstreamHyperparams{}, 7);
    const auto composed = compose(FeatureMap::identity(3), kind, x, y, Task::classification, DownstreamHyperparams{}, 7);
    CHECK(direct.score(x) == composed.score(x));
  }
  const auto map = FeatureMap::random_fourier(3, 16, 1.0, 9);
  CHECK(map.apply(x) == FeatureMap::random_fourier(3, 16, 1.0, 9).apply(x));
  CHECK(map.apply(x).cols() == 16);
  CHECK(FeatureMap::from_json(map.to_json()).apply(x) == map.apply(x));
}

TEST_CASE("models are deterministic and serialize exactly") {
  Rng rng(5);
  Matrix x(150, 2);
  for (double& v : x.values()) v = rng.normal();
  std::vector<double> y(150), yr(150);
  for (std::size_t i = 0; i < 150; ++i) {
    y[i] = x(i, 0) * x(i, 1) > 0.0 ? 1.0 : 0.0;
    yr[i] = std::sin(x(i, 0)) + 0.1 * rng.normal();
  }
  for (ModelKind kind : default_zoo()) {
    for (Task task : {Task::classification, Task::regression}) {
      const auto& target = task == Task::classification ? y : yr;
      const auto a = fit(kind, x, target, task, DownstreamHyperparams{}, 11);
      const auto b = fit(kind, x, target, task, DownstreamHyperparams{}, 11);
      CHECK(a.score(x) == b.score(x));
      const auto back = DownstreamModel::from_json(a.to_json());
      CHECK(back.score(x) == a.score(x));
      CHECK(back.kind() == kind);
    }
  }
  CHECK(model_kind_from_string(to_string(ModelKind::small_mlp)) == ModelKind::small_mlp);
  CHECK_THROWS_AS(model_kind_from_string("boosting"), InputError);
}

TEST_CASE("classifiers reject degenerate labels") {
  Matrix x(10, 2, 0.5);
  CHECK_THROWS_AS(fit(ModelKind::logistic_regression, x, std::vector<double>(10, 1.0), Task::classification,
                      DownstreamHyperparams{}, 1),
                  FitError);
  CHECK_THROWS_AS(fit(ModelKind::knn, x, std::vector<double>(10, 2.0), Task::classification, DownstreamHyperparams{}, 1),
                  FitError);
  CHECK_THROWS_AS(fit(ModelKind::knn, x, std::vector<double>(9, 1.0), Task::classification, DownstreamHyperparams{}, 1),
                  InputError);
}

TEST_CASE("model loss") {
  const std::vector<double> s{0.5, 0.5}, y{0, 1};
  CHECK(model_loss(s, y, Task::classification) == doctest::Approx(std::log(2.0)));
  CHECK(model_loss(std::vector<double>{1, 3}, std::vector<double>{0, 1}, Task::regression) == doctest::Approx(2.5));
}
