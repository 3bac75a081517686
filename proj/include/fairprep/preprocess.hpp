// SPDX-License-Identifier: Apache-2.0
#pragma once

// Constrained min-max pre-processor. Per mini-batch:
//   inner loop (t_prime times): descend h on l(Y_bar, h(X_bar)), ascend the critic V on R_V;
//   dual ascent on the per-variable multipliers lambda_X and on lambda_Y;
//   descend G_X on l + lambda_F R_V + lambda_X . max(Delta_X - delta_X, 0);
//   descend G_Y on l + lambda_Y max(Delta_Y - delta_Y, 0).
//
// G_X sees (X, A) and never Y; h sees the converted covariates only and never A.
// Both converters are residual: continuous outputs are x + G(.), categorical
// blocks are Gumbel-softmax samples of logits G(.) + margin * onehot(x), soft
// while training and hard (one-hot) at inference.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairprep/data.hpp"
#include "fairprep/hgr.hpp"
#include "fairprep/matrix.hpp"
#include "fairprep/nn.hpp"

namespace fairprep {

enum class FairnessNotion { independence, separation };
enum class LossKind { automatic, cross_entropy, squared_error };
enum class DistanceKind { mean_absolute_error, categorical_hinge };

std::string to_string(FairnessNotion notion);
std::string to_string(LossKind kind);
std::string to_string(DistanceKind kind);
FairnessNotion fairness_notion_from_string(const std::string& name);
LossKind loss_kind_from_string(const std::string& name);

struct PreprocessorConfig {
  /// One budget for every covariate, or one per source covariate column.
  std::vector<double> delta_x{0.1};
  double delta_y = 0.0;
  double lambda_f = 1.0;
  FairnessNotion fairness_notion = FairnessNotion::independence;
  LossKind loss = LossKind::automatic;

  std::size_t epochs = 60;
  std::size_t batch_size = 256;
  std::size_t t_prime = 1;

  double lr_upstream = 5e-3;   // r_h
  double lr_critic = 5e-3;     // r_V
  double lr_converter = 2e-3;  // r_G
  double lr_lambda_x = 1.0;    // r_X
  double lr_lambda_y = 1.0;    // r_Y

  std::vector<std::size_t> converter_hidden{32, 32};
  std::vector<std::size_t> upstream_hidden{32, 32};
  std::vector<std::size_t> critic_hidden{32, 32};
  double dropout = 0.0;
  double temperature = 0.5;
  double category_margin = 4.0;
  double converter_init_scale = 0.01;

  std::uint64_t seed = 0;

  /// Throws ParameterError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static PreprocessorConfig from_json(const nlohmann::json& doc);
};

/// Distance kind of every covariate block, and of the outcome.
struct ConstraintSpec {
  std::vector<Block> blocks;
  std::vector<DistanceKind> kinds;
  DistanceKind outcome = DistanceKind::mean_absolute_error;

  static ConstraintSpec from_dataset(const Dataset& data);
};

/// Mean |x - x~| over all cells, or the mean over rows of
/// max(0, 1 - (s_true - max_{c != true} s_c)) against the one-hot original.
double constraint_loss(DistanceKind kind, const Matrix& original, const Matrix& transformed);
/// One value per block of `spec`.
std::vector<double> constraint_losses(const ConstraintSpec& spec, const Matrix& original, const Matrix& transformed);

/// lambda + rate * max(distance - budget, 0): one dual ascent step on a budget multiplier.
double dual_ascent_step(double lambda, double rate, double distance, double budget);

struct EpochTrace {
  std::vector<double> lambda_x;  // end-of-epoch multipliers
  double lambda_y = 0.0;
  std::vector<double> delta_x;   // epoch-mean per-variable distance
  double delta_y = 0.0;
  double upstream_loss = 0.0;    // epoch-mean l(Y_bar, h(X_bar))
  double dual_value = 0.0;       // epoch-mean R_V
};

class TrainedPreprocessor {
 public:
  TrainedPreprocessor() = default;

  const PreprocessorConfig& config() const { return config_; }
  const Schema& schema() const { return schema_; }
  const ConstraintSpec& constraints() const { return spec_; }
  const std::vector<EpochTrace>& trace() const { return trace_; }
  Task task() const { return task_; }

  const DenseNet& g_x() const { return g_x_; }
  const std::optional<DenseNet>& g_y() const { return g_y_; }
  const DenseNet& upstream() const { return h_up_; }
  const DualCritic& critic() const { return critic_; }

  /// X~ = G_X(X, A); categorical blocks are exactly one-hot. Deterministic given the config seed.
  Matrix transform_covariates(const Matrix& x, const Matrix& a) const;
  /// Y~ = G_Y(X, A, Y); returns y unchanged when delta_y = 0. Classification labels stay in {0, 1}.
  std::vector<double> transform_outcome(const Matrix& x, const Matrix& a, std::span<const double> y) const;
  /// Convenience: transformed copy of a dataset (covariates and outcome).
  Dataset transform(const Dataset& data) const;
  /// Upstream score h~(X~): P(Y = 1) for classification, the prediction for regression.
  std::vector<double> upstream_scores(const Matrix& x_transformed) const;

  nlohmann::json trace_json() const;
  /// Writes g_x.json, g_y.json (when present), h_up.json, critic.json and bundle.json.
  void save(const std::filesystem::path& dir) const;
  static TrainedPreprocessor load(const std::filesystem::path& dir);

 private:
  friend TrainedPreprocessor train(const Dataset& data, const PreprocessorConfig& config);

  PreprocessorConfig config_;
  Schema schema_;
  ConstraintSpec spec_;
  Task task_ = Task::regression;
  std::size_t a_width_ = 0;
  DenseNet g_x_;
  std::optional<DenseNet> g_y_;
  DenseNet h_up_;
  DualCritic critic_;
  std::vector<EpochTrace> trace_;
};

TrainedPreprocessor train(const Dataset& data, const PreprocessorConfig& config);

/// Upstream architecture trained directly on (x, y) with the config's loss,
/// epochs, batch size and learning rate: the reference model h*.
DenseNet fit_upstream(const Matrix& x, std::span<const double> y, Task task, const PreprocessorConfig& config);
std::vector<double> upstream_scores(const DenseNet& net, const Matrix& x, Task task);
/// Mean l(y, score) with the clipped cross-entropy or the squared error.
double upstream_loss(std::span<const double> scores, std::span<const double> y, Task task);

inline constexpr const char* kVersionStamp = "fairprep 0.1.0";

}  // namespace fairprep
