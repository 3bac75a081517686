// SPDX-License-Identifier: Apache-2.0
#include "fairprep/hgr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace fairprep {

namespace {
constexpr double kSumTolerance = 1e-12;

std::vector<double> standardized(std::span<const double> values, bool& constant) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  constant = !(sd > 1e-12);
  std::vector<double> out(values.size(), 0.0);
  if (!constant)
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) { return m.gather_rows(idx); }

std::vector<double> select(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

DiscreteJoint::DiscreteJoint(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0 || probs_.cols() == 0) throw InputError("DiscreteJoint: empty table");
  double total = 0.0;
  for (double p : probs_.values()) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("DiscreteJoint: probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > kSumTolerance) throw InputError("DiscreteJoint: probabilities must sum to 1");
  row_marginal_.assign(probs_.rows(), 0.0);
  col_marginal_.assign(probs_.cols(), 0.0);
  for (std::size_t i = 0; i < probs_.rows(); ++i)
    for (std::size_t j = 0; j < probs_.cols(); ++j) {
      row_marginal_[i] += probs_(i, j);
      col_marginal_[j] += probs_(i, j);
    }
  for (double p : row_marginal_)
    if (!(p > 0.0)) throw InputError("DiscreteJoint: zero row marginal (empty category)");
  for (double q : col_marginal_)
    if (!(q > 0.0)) throw InputError("DiscreteJoint: zero column marginal (empty category)");
}

DiscreteJoint DiscreteJoint::from_codes(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                        std::size_t first_levels, std::size_t second_levels) {
  if (first.size() != second.size()) throw InputError("DiscreteJoint::from_codes: length mismatch");
  if (first.empty()) throw InputError("DiscreteJoint::from_codes: empty sample");
  Matrix counts(first_levels, second_levels);
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (first[i] >= first_levels || second[i] >= second_levels) throw InputError("DiscreteJoint::from_codes: code out of range");
    counts(first[i], second[i]) += 1.0;
  }
  const double n = static_cast<double>(first.size());
  for (double& c : counts.values()) c /= n;
  // Renormalize against rounding so the sum check holds exactly.
  const double total = std::accumulate(counts.values().begin(), counts.values().end(), 0.0);
  for (double& c : counts.values()) c /= total;
  return DiscreteJoint(std::move(counts));
}

DiscreteJoint DiscreteJoint::merge_rows(std::size_t i, std::size_t j) const {
  if (i == j || i >= rows() || j >= rows()) throw InputError("DiscreteJoint::merge_rows: invalid rows");
  const std::size_t keep = std::min(i, j), drop = std::max(i, j);
  Matrix merged(rows() - 1, cols());
  for (std::size_t r = 0, out = 0; r < rows(); ++r) {
    if (r == drop) continue;
    for (std::size_t c = 0; c < cols(); ++c) merged(out, c) = probs_(r, c) + (r == keep ? probs_(drop, c) : 0.0);
    ++out;
  }
  return DiscreteJoint(std::move(merged));
}

DiscreteJoint DiscreteJoint::transposed() const {
  Matrix t(cols(), rows());
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j) t(j, i) = probs_(i, j);
  return DiscreteJoint(std::move(t));
}

double hgr_exact_discrete(const DiscreteJoint& joint) {
  if (joint.rows() < 2 || joint.cols() < 2) return 0.0;
  Eigen::MatrixXd q(joint.rows(), joint.cols());
  for (std::size_t i = 0; i < joint.rows(); ++i)
    for (std::size_t j = 0; j < joint.cols(); ++j)
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          joint.probs()(i, j) / std::sqrt(joint.row_marginal()[i] * joint.col_marginal()[j]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(q);
  // The leading singular value is 1 (vectors sqrt(p), sqrt(q)); the maximal correlation is the next one.
  return std::clamp(svd.singularValues()(1), 0.0, 1.0);
}

double chi2_divergence(const DiscreteJoint& joint) {
  double s = 0.0;
  for (std::size_t i = 0; i < joint.rows(); ++i)
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double p = joint.probs()(i, j);
      s += p * p / (joint.row_marginal()[i] * joint.col_marginal()[j]);
    }
  return s - 1.0;
}

double chi2_dual_objective(std::span<const double> v_joint, std::span<const double> v_product) {
  if (v_joint.empty() || v_product.empty()) throw InputError("chi2_dual_objective: empty critic values");
  double joint = 0.0, product = 0.0;
  for (double v : v_joint) joint += v;
  for (double v : v_product) product += chi2_conjugate(v);
  return joint / static_cast<double>(v_joint.size()) - product / static_cast<double>(v_product.size());
}

double chi2_dual_exact(const DiscreteJoint& joint, const Matrix& critic_table) {
  if (critic_table.rows() != joint.rows() || critic_table.cols() != joint.cols())
    throw ShapeError("chi2_dual_exact: critic table shape differs from joint");
  double s = 0.0;
  for (std::size_t i = 0; i < joint.rows(); ++i)
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double v = critic_table(i, j);
      s += joint.probs()(i, j) * v - joint.row_marginal()[i] * joint.col_marginal()[j] * chi2_conjugate(v);
    }
  return s;
}

double d_metric(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ParameterError("d_metric: rho must lie in [0, 1]");
  return std::sqrt(2.0 - 2.0 * rho);
}

std::size_t quantile_codes(std::span<const double> values, std::size_t bins, std::vector<std::size_t>& codes) {
  if (values.empty()) throw InputError("quantile_codes: empty sample");
  if (bins == 0) throw ParameterError("quantile_codes: bins must be >= 1");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  codes.assign(n, 0);
  std::size_t first_rank = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (r > 0 && values[order[r]] != values[order[r - 1]]) first_rank = r;
    codes[order[r]] = first_rank * bins / n;
  }
  std::map<std::size_t, std::size_t> remap;
  for (std::size_t c : codes) remap.emplace(c, 0);
  std::size_t next = 0;
  for (auto& [code, dense] : remap) dense = next++;
  for (std::size_t& c : codes) c = remap[c];
  return next;
}

double hgr_binned(std::span<const double> first, std::span<const double> second, std::size_t bins) {
  if (first.size() != second.size()) throw InputError("hgr_binned: length mismatch");
  std::vector<std::size_t> c1, c2;
  const std::size_t k1 = quantile_codes(first, bins, c1);
  const std::size_t k2 = quantile_codes(second, bins, c2);
  if (k1 < 2 || k2 < 2) return 0.0;
  return hgr_exact_discrete(DiscreteJoint::from_codes(c1, c2, k1, k2));
}

HgrEstimate make_hgr_estimate(double r_value) {
  HgrEstimate e;
  e.r_value = r_value;
  e.rho_hat = std::sqrt(std::clamp(r_value, 0.0, 1.0));
  return e;
}

DualCritic::DualCritic(std::size_t input_width, CriticConfig config, std::uint64_t seed)
    : DualCritic(DenseNet::mlp(input_width, config.hidden, 1, Activation::identity, config.dropout, seed),
                 config) {}

DualCritic::DualCritic(DenseNet net, CriticConfig config)
    : net_(std::move(net)),
      adam_(net_.parameter_count(), AdamConfig{config.learning_rate, 0.0, 0.999, 1e-8}),
      config_(std::move(config)) {
  if (net_.output_width() != 1) throw ShapeError("DualCritic: critic must have a scalar head");
}

double DualCritic::objective(const Matrix& joint, const Matrix& product) const {
  const Matrix vj = net_.predict(joint);
  const Matrix vp = net_.predict(product);
  return chi2_dual_objective(vj.values(), vp.values());
}

DualCritic::Evaluation DualCritic::evaluate(const Matrix& joint, const Matrix& product) {
  if (joint.rows() == 0 || product.rows() == 0) throw InputError("DualCritic: empty batch");
  const Matrix stacked = Matrix::vcat(joint, product);
  const Matrix v = net_.forward(stacked, Mode::training);
  const std::size_t nj = joint.rows(), np = product.rows();
  Evaluation ev;
  ev.value = chi2_dual_objective(std::span<const double>(v.values().data(), nj),
                                 std::span<const double>(v.values().data() + nj, np));
  Matrix dv(nj + np, 1);
  for (std::size_t i = 0; i < nj; ++i) dv(i, 0) = 1.0 / static_cast<double>(nj);
  for (std::size_t i = 0; i < np; ++i) dv(nj + i, 0) = -(0.5 * v(nj + i, 0) + 1.0) / static_cast<double>(np);
  NetGradients g = net_.backward(dv);
  ev.param_grad = std::move(g.params);
  std::vector<std::size_t> head(nj), tail(np);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), nj);
  ev.joint_input_grad = g.input.gather_rows(head);
  ev.product_input_grad = g.input.gather_rows(tail);
  return ev;
}

DualCritic::Evaluation DualCritic::ascend(const Matrix& joint, const Matrix& product) {
  Evaluation ev = evaluate(joint, product);
  adam_.ascend(net_.parameters(), ev.param_grad);
  return ev;
}

Matrix critic_input(std::span<const double> scores, const Matrix& sensitive, std::span<const double> outcome) {
  if (sensitive.rows() != scores.size()) throw InputError("critic_input: scores and sensitive rows differ");
  if (!outcome.empty() && outcome.size() != scores.size()) throw InputError("critic_input: outcome rows differ");
  const std::size_t width = 1 + sensitive.cols() + (outcome.empty() ? 0 : 1);
  Matrix in(scores.size(), width);
  for (std::size_t r = 0; r < scores.size(); ++r) {
    in(r, 0) = scores[r];
    for (std::size_t c = 0; c < sensitive.cols(); ++c) in(r, 1 + c) = sensitive(r, c);
    if (!outcome.empty()) in(r, width - 1) = outcome[r];
  }
  return in;
}

std::vector<std::size_t> stratified_permutation(std::span<const double> strata, Rng& rng, std::size_t* singletons) {
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);
  std::vector<std::size_t> perm(strata.size());
  for (auto& [label, rows] : groups) {
    if (rows.size() == 1 && singletons) ++*singletons;
    std::vector<std::size_t> shuffled = rows;
    rng.shuffle(shuffled);
    for (std::size_t k = 0; k < rows.size(); ++k) perm[rows[k]] = shuffled[k];
  }
  return perm;
}

namespace {

HgrEstimate estimate_hgr(std::span<const double> raw_scores, const Matrix& sensitive, std::span<const double> outcome,
                         DualCritic& critic, std::size_t steps, Rng& rng) {
  const std::size_t n = raw_scores.size();
  if (n == 0) throw InputError("estimate_hgr: empty sample");
  if (sensitive.rows() != n) throw InputError("estimate_hgr: scores and sensitive rows differ");
  if (!outcome.empty() && outcome.size() != n) throw InputError("estimate_hgr: outcome rows differ");
  if (steps == 0) throw ParameterError("estimate_hgr: steps must be >= 1");
  const bool separation = !outcome.empty();
  bool constant = false;
  const std::vector<double> scores = standardized(raw_scores, constant);
  if (constant) {
    HgrEstimate e = make_hgr_estimate(0.0);
    e.degenerate = true;
    return e;
  }

  std::size_t singletons = 0;
  auto product_rows = [&](std::span<const double> batch_outcome, std::size_t batch) {
    return separation ? stratified_permutation(batch_outcome, rng, &singletons) : rng.permutation(batch);
  };

  const std::size_t batch = std::min(critic.config().batch_size, n);
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<std::size_t> idx = rng.permutation(n);
    idx.resize(batch);
    const std::vector<double> s = select(scores, idx);
    const Matrix a = select_rows(sensitive, idx);
    const std::vector<double> y = separation ? select(outcome, idx) : std::vector<double>{};
    const std::vector<std::size_t> perm = product_rows(y, batch);
    critic.ascend(critic_input(s, a, y), critic_input(s, a.gather_rows(perm), y));
  }

  // Report R_V on all rows, averaged over a few product draws.
  constexpr int kDraws = 4;
  double r = 0.0;
  const Matrix joint = critic_input(scores, sensitive, outcome);
  for (int d = 0; d < kDraws; ++d) {
    const std::vector<std::size_t> perm = product_rows(outcome, n);
    r += critic.objective(joint, critic_input(scores, sensitive.gather_rows(perm), outcome));
  }
  HgrEstimate e = make_hgr_estimate(r / kDraws);
  e.singleton_strata = singletons;
  return e;
}

}  // namespace

HgrEstimate estimate_hgr_independence(std::span<const double> scores, const Matrix& sensitive, DualCritic& critic,
                                      std::size_t steps, Rng& rng) {
  return estimate_hgr(scores, sensitive, {}, critic, steps, rng);
}

HgrEstimate estimate_hgr_separation(std::span<const double> scores, const Matrix& sensitive,
                                    std::span<const double> outcome, DualCritic& critic, std::size_t steps,
                                    Rng& rng) {
  if (outcome.empty()) throw InputError("estimate_hgr_separation: outcome required");
  return estimate_hgr(scores, sensitive, outcome, critic, steps, rng);
}

}  // namespace fairprep
