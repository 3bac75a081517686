// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "fairprep/data.hpp"
#include "fairprep/error.hpp"
#include "fairprep/metrics.hpp"
#include "fairprep/preprocess.hpp"

using namespace fairprep;
namespace fs = std::filesystem;

namespace {

PreprocessorConfig quick_config() {
  PreprocessorConfig c;
  c.epochs = 4;
  c.batch_size = 128;
  c.converter_hidden = {16};
  c.upstream_hidden = {16};
  c.critic_hidden = {16};
  c.seed = 3;
  return c;
}

Matrix one_hot_rows(const std::vector<std::size_t>& classes, std::size_t width) {
  Matrix m(classes.size(), width);
  for (std::size_t r = 0; r < classes.size(); ++r) m(r, classes[r]) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("constraint losses") {
  CHECK(constraint_loss(DistanceKind::mean_absolute_error, Matrix{{1.0}, {2.0}}, Matrix{{2.0}, {4.0}}) == 1.5);
  CHECK(constraint_loss(DistanceKind::mean_absolute_error, Matrix{{1.0, 3.0}}, Matrix{{1.0, 3.0}}) == 0.0);
  CHECK(constraint_loss(DistanceKind::categorical_hinge, Matrix{{1.0, 0.0}}, Matrix{{0.9, 0.1}}) ==
        doctest::Approx(0.2));
  CHECK_THROWS_AS(constraint_loss(DistanceKind::mean_absolute_error, Matrix(2, 1), Matrix(3, 1)), InputError);
  CHECK_THROWS_AS(constraint_loss(DistanceKind::categorical_hinge, Matrix{{0.5, 0.5}}, Matrix{{1.0, 0.0}}),
                  InputError);

  // Flipping a growing fraction of binary labels never lowers the hinge distance.
  std::vector<std::size_t> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = i % 2;
  const Matrix original = one_hot_rows(labels, 2);
  double previous = -1.0;
  for (std::size_t flipped = 0; flipped <= 100; flipped += 10) {
    auto changed = labels;
    for (std::size_t i = 0; i < flipped; ++i) changed[i] = 1 - changed[i];
    const double d = constraint_loss(DistanceKind::categorical_hinge, original, one_hot_rows(changed, 2));
    CHECK(d >= previous);
    previous = d;
  }
  CHECK(previous == 2.0);
}

TEST_CASE("dual ascent step") {
  CHECK(dual_ascent_step(0.0, 1.0, 0.3, 0.1) == doctest::Approx(0.2));
  CHECK(dual_ascent_step(0.5, 1.0, 0.05, 0.1) == 0.5);
  CHECK(dual_ascent_step(0.5, 2.0, 0.2, 0.1) == doctest::Approx(0.7));
}

TEST_CASE("config validation and JSON") {
  PreprocessorConfig c;
  c.delta_x = {-0.1};
  try {
    c.validate();
    FAIL("expected a ParameterError");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("preprocessor.delta_x") != std::string::npos);
  }
  c = PreprocessorConfig{};
  c.t_prime = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = PreprocessorConfig{};
  c.lambda_f = -1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);

  PreprocessorConfig d;
  d.delta_x = {0.1, 0.2, 0.3};
  d.fairness_notion = FairnessNotion::separation;
  d.loss = LossKind::squared_error;
  d.seed = 77;
  const auto back = PreprocessorConfig::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
  CHECK_THROWS_AS(PreprocessorConfig::from_json({{"delta_z", 1.0}}), ParameterError);
  CHECK(PreprocessorConfig::from_json(nlohmann::json::object()).epochs == 60);
}

TEST_CASE("network wiring keeps A out of h and Y out of G_X") {
  const Dataset d = toy_classification(300, 1);
  PreprocessorConfig c = quick_config();
  c.epochs = 1;
  c.delta_y = 0.1;
  const auto pp = train(d, c);
  CHECK(pp.upstream().input_width() == d.x.cols());
  CHECK(pp.g_x().input_width() == d.x.cols() + d.a.cols());
  REQUIRE(pp.g_y());
  CHECK(pp.g_y()->input_width() == d.x.cols() + d.a.cols() + 1);
}

TEST_CASE("transform contract") {
  const Dataset d = toy_classification(600, 2);
  const auto pp = train(d, quick_config());
  CHECK_FALSE(pp.g_y());
  const Dataset t = pp.transform(d);
  CHECK(t.y == d.y);
  for (const Block& b : d.x_blocks()) {
    if (b.kind != ColumnKind::categorical) continue;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < b.width; ++c) {
        const double v = t.x(r, b.offset + c);
        CHECK((v == 0.0 || v == 1.0));
        sum += v;
      }
      CHECK(sum == 1.0);
    }
  }
  CHECK(pp.transform_covariates(d.x, d.a) == t.x);
  CHECK_THROWS_AS(pp.transform_covariates(Matrix(3, 2), Matrix(3, 2)), InputError);
  const auto scores = pp.upstream_scores(t.x);
  for (double s : scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("same seed gives identical traces") {
  const Dataset d = toy_classification(500, 3);
  PreprocessorConfig c = quick_config();
  c.delta_y = 0.05;
  const auto a = train(d, c);
  const auto b = train(d, c);
  CHECK(a.trace_json() == b.trace_json());
  CHECK(a.transform(d).x == b.transform(d).x);
  c.seed = 4;
  CHECK(train(d, c).trace_json() != a.trace_json());
}

TEST_CASE("multipliers never decrease and grow on violated epochs") {
  const Dataset d = toy_classification(800, 5);
  PreprocessorConfig c = quick_config();
  c.epochs = 10;
  c.delta_x = {0.01};
  c.delta_y = 0.02;
  c.lambda_f = 8.0;
  const auto pp = train(d, c);
  const auto& tr = pp.trace();
  for (std::size_t e = 0; e < tr.size(); ++e) {
    const auto prev_x = e ? tr[e - 1].lambda_x : std::vector<double>(tr[e].lambda_x.size(), 0.0);
    const double prev_y = e ? tr[e - 1].lambda_y : 0.0;
    for (std::size_t j = 0; j < prev_x.size(); ++j) {
      CHECK(tr[e].lambda_x[j] >= prev_x[j]);
      CHECK(tr[e].lambda_x[j] >= 0.0);
      if (tr[e].delta_x[j] > 0.01) CHECK(tr[e].lambda_x[j] > prev_x[j]);
    }
    CHECK(tr[e].lambda_y >= prev_y);
    if (tr[e].delta_y > 0.02) CHECK(tr[e].lambda_y > prev_y);
  }
}

TEST_CASE("bundle round trip") {
  const Dataset d = toy_classification(400, 6);
  PreprocessorConfig c = quick_config();
  c.delta_y = 0.1;
  const auto pp = train(d, c);
  const fs::path dir = fs::temp_directory_path() / ("fairprep_bundle_" + std::to_string(::getpid()));
  pp.save(dir);
  const auto back = TrainedPreprocessor::load(dir);
  fs::remove_all(dir);
  const Dataset t1 = pp.transform(d), t2 = back.transform(d);
  CHECK(t1.x == t2.x);
  CHECK(t1.y == t2.y);
  CHECK(pp.upstream_scores(t1.x) == back.upstream_scores(t2.x));
  CHECK(back.trace_json() == pp.trace_json());
  CHECK(back.config().to_json() == pp.config().to_json());
  CHECK_THROWS(TrainedPreprocessor::load(dir));
}

TEST_CASE("separation needs a classification outcome") {
  PreprocessorConfig c = quick_config();
  c.fairness_notion = FairnessNotion::separation;
  CHECK_THROWS_AS(train(toy_regression(200, 1), c), ParameterError);
  c.delta_x = {0.1, 0.2};
  c.fairness_notion = FairnessNotion::independence;
  CHECK_THROWS_AS(train(toy_regression(200, 1), c), ParameterError);
}

TEST_CASE("penalty-free training reduces to plain supervised learning") {
  const Dataset all = toy_classification(3000, 7);
  const auto [train_set, test_set] = split(all, 0.2, 7);
  PreprocessorConfig c;
  c.lambda_f = 0.0;
  c.delta_x = {0.0};
  c.epochs = 30;
  c.seed = 7;
  const auto pp = train(train_set, c);
  for (double v : pp.trace().back().delta_x) CHECK(v <= 0.05);
  const double auc_pp = auc(pp.upstream_scores(pp.transform_covariates(test_set.x, test_set.a)), test_set.y);
  const DenseNet h = fit_upstream(train_set.x, train_set.y, Task::classification, c);
  const double auc_h = auc(upstream_scores(h, test_set.x, Task::classification), test_set.y);
  CHECK(std::abs(auc_pp - auc_h) <= 0.02);
}

TEST_CASE("upstream loss") {
  CHECK(upstream_loss(std::vector<double>{0.5}, std::vector<double>{1.0}, Task::classification) ==
        doctest::Approx(std::log(2.0)));
  CHECK(upstream_loss(std::vector<double>{2.0, 0.0}, std::vector<double>{1.0, 0.0}, Task::regression) ==
        doctest::Approx(0.5));
}
