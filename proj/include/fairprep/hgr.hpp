// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hirschfeld-Gebelein-Renyi maximal correlation: the exact value for discrete
// joints, the chi-square variational dual used as a trainable penalty, and
// the d-metric sqrt(2 - 2 rho).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fairprep/matrix.hpp"
#include "fairprep/nn.hpp"
#include "fairprep/rng.hpp"

namespace fairprep {

/// Joint probability table of two discrete variables. Entries are nonnegative,
/// sum to one and both marginals are strictly positive.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Matrix probs);
  /// Empirical joint of two code vectors with the given cardinalities.
  static DiscreteJoint from_codes(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                  std::size_t first_levels, std::size_t second_levels);

  const Matrix& probs() const { return probs_; }
  std::size_t rows() const { return probs_.rows(); }
  std::size_t cols() const { return probs_.cols(); }
  const std::vector<double>& row_marginal() const { return row_marginal_; }
  const std::vector<double>& col_marginal() const { return col_marginal_; }

  /// Joint of (u(S1), S2) where u maps categories i and j of S1 to one category.
  DiscreteJoint merge_rows(std::size_t i, std::size_t j) const;
  DiscreteJoint transposed() const;

 private:
  Matrix probs_;
  std::vector<double> row_marginal_;
  std::vector<double> col_marginal_;
};

/// Second singular value of Q_ij = P_ij / sqrt(p_i q_j).
double hgr_exact_discrete(const DiscreteJoint& joint);
/// chi^2(P_joint, P_row x P_col) = sum_ij P_ij^2 / (p_i q_j) - 1.
double chi2_divergence(const DiscreteJoint& joint);

/// Convex conjugate of the chi-square generator: f*(x) = x^2/4 + x.
inline double chi2_conjugate(double v) { return 0.25 * v * v + v; }
/// mean(v_joint) - mean(f*(v_product)).
double chi2_dual_objective(std::span<const double> v_joint, std::span<const double> v_product);
/// Exact-expectation dual value of a tabulated critic V (same shape as the joint).
double chi2_dual_exact(const DiscreteJoint& joint, const Matrix& critic_table);

/// sqrt(2 - 2 rho) for rho in [0, 1].
double d_metric(double rho);

/// Plug-in HGR of two samples after quantile binning each into at most `bins` levels.
/// Tied values always share a level, so binary samples stay binary.
double hgr_binned(std::span<const double> first, std::span<const double> second, std::size_t bins = 10);
/// Quantile codes 0..levels-1 (ties share a code, empty levels removed). Returns the level count.
std::size_t quantile_codes(std::span<const double> values, std::size_t bins, std::vector<std::size_t>& codes);

struct HgrEstimate {
  double r_value = 0.0;  // dual objective R_V
  double rho_hat = 0.0;  // sqrt(clamp(R_V, 0, 1))
  bool degenerate = false;          // constant scores; rho_hat forced to 0
  std::size_t singleton_strata = 0;  // batches where a Y-stratum had one row (identity permutation)
};

HgrEstimate make_hgr_estimate(double r_value);

struct CriticConfig {
  std::vector<std::size_t> hidden{64, 64, 64};
  double dropout = 0.0;
  double learning_rate = 5e-3;
  std::size_t batch_size = 500;
};

/// Variational critic V for the chi-square dual. Joint and product samples are
/// stacked into one batch so a single forward/backward serves both halves.
class DualCritic {
 public:
  DualCritic() = default;
  DualCritic(std::size_t input_width, CriticConfig config, std::uint64_t seed);
  DualCritic(DenseNet net, CriticConfig config);

  struct Evaluation {
    double value = 0.0;
    Matrix joint_input_grad;    // dR/d(joint inputs)
    Matrix product_input_grad;  // dR/d(product inputs)
    std::vector<double> param_grad;
  };

  /// Dual objective at the current parameters (inference mode).
  double objective(const Matrix& joint, const Matrix& product) const;
  /// Objective value and gradients in training mode; parameters unchanged.
  Evaluation evaluate(const Matrix& joint, const Matrix& product);
  /// One Adam ascent step on the dual objective; returns the pre-step evaluation.
  Evaluation ascend(const Matrix& joint, const Matrix& product);

  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }
  const CriticConfig& config() const { return config_; }

 private:
  DenseNet net_;
  AdamState adam_;
  CriticConfig config_;
};

/// Stacks [score, sensitive columns, (outcome)] into critic inputs.
Matrix critic_input(std::span<const double> scores, const Matrix& sensitive, std::span<const double> outcome = {});

/// Permutation that shuffles rows only among rows sharing the same stratum label.
/// Strata of size one stay fixed; their count is added to `singletons` when given.
std::vector<std::size_t> stratified_permutation(std::span<const double> strata, Rng& rng,
                                                std::size_t* singletons = nullptr);

/// Trains the critic by ascent on the dual with product samples drawn by
/// within-batch permutation of the sensitive rows, then reports R_V on all rows.
HgrEstimate estimate_hgr_independence(std::span<const double> scores, const Matrix& sensitive, DualCritic& critic,
                                      std::size_t steps, Rng& rng);

/// As estimate_hgr_independence, but A' is permuted only within rows of equal
/// outcome and the critic also sees the outcome.
HgrEstimate estimate_hgr_separation(std::span<const double> scores, const Matrix& sensitive,
                                    std::span<const double> outcome, DualCritic& critic, std::size_t steps,
                                    Rng& rng);

}  // namespace fairprep
