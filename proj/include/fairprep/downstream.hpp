// SPDX-License-Identifier: Apache-2.0
#pragma once

// Downstream model zoo fitted on (transformed) covariates. None of the models
// ever receives the sensitive columns: fit() and score() take covariates only.

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "fairprep/data.hpp"
#include "fairprep/matrix.hpp"
#include "fairprep/nn.hpp"

namespace fairprep {

/// logistic_regression is a least-squares linear model for regression tasks.
/// random_feature_linear expands the input with random Fourier features first.
enum class ModelKind { logistic_regression, knn, small_mlp, random_feature_linear };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);
std::vector<ModelKind> default_zoo();

struct DownstreamHyperparams {
  std::size_t knn_k = 15;
  std::size_t linear_iterations = 500;
  double l2 = 1e-4;
  /// Upstream hidden widths; small_mlp uses half of each.
  std::vector<std::size_t> upstream_hidden{64, 64, 64, 64};
  std::size_t mlp_epochs = 30;
  std::size_t mlp_batch = 200;
  double mlp_learning_rate = 1e-3;
  std::size_t rff_features = 200;
  double rff_bandwidth = 1.0;

  nlohmann::json to_json() const;
  static DownstreamHyperparams from_json(const nlohmann::json& doc);
};

/// Post-hoc feature engineering map f_e applied before a downstream model.
class FeatureMap {
 public:
  enum class Kind { identity, random_fourier };

  static FeatureMap identity(std::size_t width);
  /// phi(x) = sqrt(2 / D) cos(x W + b), W ~ N(0, 1 / bandwidth^2), b ~ U(0, 2 pi).
  static FeatureMap random_fourier(std::size_t input_width, std::size_t features, double bandwidth,
                                   std::uint64_t seed);

  Matrix apply(const Matrix& x) const;
  Kind kind() const { return kind_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t output_width() const { return output_width_; }

  nlohmann::json to_json() const;
  static FeatureMap from_json(const nlohmann::json& doc);

 private:
  Kind kind_ = Kind::identity;
  std::size_t input_width_ = 0;
  std::size_t output_width_ = 0;
  Matrix frequencies_;  // input x features
  std::vector<double> offsets_;
};

class DownstreamModel {
 public:
  ModelKind kind() const { return kind_; }
  Task task() const { return task_; }
  std::size_t input_width() const { return features_.input_width(); }
  const FeatureMap& feature_map() const { return features_; }

  /// Probability of class 1 (classification) or the prediction (regression).
  std::vector<double> score(const Matrix& x) const;

  nlohmann::json to_json() const;
  static DownstreamModel from_json(const nlohmann::json& doc);

 private:
  friend DownstreamModel compose(const FeatureMap&, ModelKind, const Matrix&, std::span<const double>, Task,
                                 const DownstreamHyperparams&, std::uint64_t);

  std::vector<double> score_features(const Matrix& f) const;

  ModelKind kind_ = ModelKind::logistic_regression;
  Task task_ = Task::classification;
  FeatureMap features_;
  // linear models
  std::vector<double> weights_;
  double bias_ = 0.0;
  // knn
  Matrix train_x_;
  std::vector<double> train_y_;
  std::size_t k_ = 1;
  // small_mlp
  DenseNet net_;
};

DownstreamModel fit(ModelKind kind, const Matrix& x, std::span<const double> y, Task task,
                    const DownstreamHyperparams& hp, std::uint64_t seed);
/// h_k o f_e: fits `kind` on feature_map(x).
DownstreamModel compose(const FeatureMap& feature_map, ModelKind kind, const Matrix& x, std::span<const double> y,
                        Task task, const DownstreamHyperparams& hp, std::uint64_t seed);

/// Mean loss of scores against labels: clipped cross-entropy or squared error.
double model_loss(std::span<const double> scores, std::span<const double> y, Task task);

}  // namespace fairprep
