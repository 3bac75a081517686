// SPDX-License-Identifier: Apache-2.0
#include "fairprep/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fairprep/checkpoint.hpp"
#include "fairprep/error.hpp"

namespace fairprep {

namespace {

constexpr std::uint64_t kConverterSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kOutcomeSalt = 0xc2b2ae3d27d4eb4fULL;
constexpr std::uint64_t kUpstreamSalt = 0x165667b19e3779f9ULL;
constexpr std::uint64_t kCriticSalt = 0x27d4eb2f165667c5ULL;
constexpr std::uint64_t kTransformSalt = 0x85ebca77c2b2ae63ULL;

}  // namespace

std::string to_string(FairnessNotion notion) {
  return notion == FairnessNotion::independence ? "independence" : "separation";
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::automatic: return "auto";
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::squared_error: return "squared_error";
  }
  return "auto";
}

std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::mean_absolute_error ? "mean_absolute_error" : "categorical_hinge";
}

FairnessNotion fairness_notion_from_string(const std::string& name) {
  if (name == "independence") return FairnessNotion::independence;
  if (name == "separation") return FairnessNotion::separation;
  throw ParameterError("fairness_notion: expected 'independence' or 'separation', got '" + name + "'");
}

LossKind loss_kind_from_string(const std::string& name) {
  for (auto k : {LossKind::automatic, LossKind::cross_entropy, LossKind::squared_error})
    if (to_string(k) == name) return k;
  throw ParameterError("loss: expected 'auto', 'cross_entropy' or 'squared_error', got '" + name + "'");
}

// ---------------------------------------------------------------- config

void PreprocessorConfig::validate() const {
  auto require = [](bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ParameterError("preprocessor." + field + ": " + what);
  };
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  require(!delta_x.empty(), "delta_x", "must list at least one budget");
  for (double d : delta_x) require(finite_nonneg(d), "delta_x", "budgets must be >= 0");
  require(finite_nonneg(delta_y), "delta_y", "must be >= 0");
  require(finite_nonneg(lambda_f), "lambda_f", "must be >= 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 2, "batch_size", "must be >= 2");
  require(t_prime >= 1, "t_prime", "must be >= 1");
  require(finite_nonneg(lr_upstream), "lr_upstream", "must be >= 0");
  require(finite_nonneg(lr_critic), "lr_critic", "must be >= 0");
  require(finite_nonneg(lr_converter), "lr_converter", "must be >= 0");
  require(finite_nonneg(lr_lambda_x), "lr_lambda_x", "must be >= 0");
  require(finite_nonneg(lr_lambda_y), "lr_lambda_y", "must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  require(std::isfinite(temperature) && temperature > 0.0, "temperature", "must be > 0");
  require(finite_nonneg(category_margin), "category_margin", "must be >= 0");
  require(finite_nonneg(converter_init_scale), "converter_init_scale", "must be >= 0");
  for (const auto* widths : {&converter_hidden, &upstream_hidden, &critic_hidden})
    for (std::size_t w : *widths) require(w >= 1, "hidden", "layer widths must be >= 1");
}

nlohmann::json PreprocessorConfig::to_json() const {
  return {{"delta_x", delta_x},
          {"delta_y", delta_y},
          {"lambda_f", lambda_f},
          {"fairness_notion", to_string(fairness_notion)},
          {"loss", to_string(loss)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"t_prime", t_prime},
          {"lr_upstream", lr_upstream},
          {"lr_critic", lr_critic},
          {"lr_converter", lr_converter},
          {"lr_lambda_x", lr_lambda_x},
          {"lr_lambda_y", lr_lambda_y},
          {"converter_hidden", converter_hidden},
          {"upstream_hidden", upstream_hidden},
          {"critic_hidden", critic_hidden},
          {"dropout", dropout},
          {"temperature", temperature},
          {"category_margin", category_margin},
          {"converter_init_scale", converter_init_scale},
          {"seed", seed}};
}

PreprocessorConfig PreprocessorConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParameterError("preprocessor: expected a JSON object");
  PreprocessorConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : doc.items())
    if (!defaults.contains(key)) throw ParameterError("preprocessor." + key + ": unknown key");
  try {
    if (doc.contains("delta_x")) {
      const auto& d = doc["delta_x"];
      c.delta_x = d.is_array() ? d.get<std::vector<double>>() : std::vector<double>{d.get<double>()};
    }
    c.delta_y = doc.value("delta_y", c.delta_y);
    c.lambda_f = doc.value("lambda_f", c.lambda_f);
    if (doc.contains("fairness_notion")) c.fairness_notion = fairness_notion_from_string(doc["fairness_notion"]);
    if (doc.contains("loss")) c.loss = loss_kind_from_string(doc["loss"]);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.t_prime = doc.value("t_prime", c.t_prime);
    c.lr_upstream = doc.value("lr_upstream", c.lr_upstream);
    c.lr_critic = doc.value("lr_critic", c.lr_critic);
    c.lr_converter = doc.value("lr_converter", c.lr_converter);
    c.lr_lambda_x = doc.value("lr_lambda_x", c.lr_lambda_x);
    c.lr_lambda_y = doc.value("lr_lambda_y", c.lr_lambda_y);
    c.converter_hidden = doc.value("converter_hidden", c.converter_hidden);
    c.upstream_hidden = doc.value("upstream_hidden", c.upstream_hidden);
    c.critic_hidden = doc.value("critic_hidden", c.critic_hidden);
    c.dropout = doc.value("dropout", c.dropout);
    c.temperature = doc.value("temperature", c.temperature);
    c.category_margin = doc.value("category_margin", c.category_margin);
    c.converter_init_scale = doc.value("converter_init_scale", c.converter_init_scale);
    c.seed = doc.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    // Negative numbers for unsigned fields land here as type errors.
    throw ParameterError(std::string("preprocessor: invalid value: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- constraints

ConstraintSpec ConstraintSpec::from_dataset(const Dataset& data) {
  ConstraintSpec spec;
  spec.blocks = data.x_blocks();
  for (const Block& b : spec.blocks)
    spec.kinds.push_back(b.kind == ColumnKind::categorical ? DistanceKind::categorical_hinge
                                                           : DistanceKind::mean_absolute_error);
  spec.outcome = data.task() == Task::classification ? DistanceKind::categorical_hinge
                                                     : DistanceKind::mean_absolute_error;
  return spec;
}

double constraint_loss(DistanceKind kind, const Matrix& original, const Matrix& transformed) {
  if (original.rows() != transformed.rows() || original.cols() != transformed.cols())
    throw InputError("constraint_loss: original and transformed shapes differ");
  if (original.rows() == 0 || original.cols() == 0) throw InputError("constraint_loss: empty input");
  const std::size_t n = original.rows(), w = original.cols();
  double total = 0.0;
  if (kind == DistanceKind::mean_absolute_error) {
    for (std::size_t i = 0; i < original.size(); ++i)
      total += std::abs(original.values()[i] - transformed.values()[i]);
    return total / static_cast<double>(original.size());
  }
  if (w < 2) throw InputError("constraint_loss: categorical hinge needs at least two columns");
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t truth = w;
    for (std::size_t c = 0; c < w; ++c) {
      if (original(r, c) == 1.0 && truth == w) truth = c;
      else if (original(r, c) != 0.0) truth = w + 1;
    }
    if (truth >= w) throw InputError("constraint_loss: original block is not one-hot at row " + std::to_string(r));
    double other = -INFINITY;
    for (std::size_t c = 0; c < w; ++c)
      if (c != truth) other = std::max(other, transformed(r, c));
    total += std::max(0.0, 1.0 - (transformed(r, truth) - other));
  }
  return total / static_cast<double>(n);
}

double dual_ascent_step(double lambda, double rate, double distance, double budget) {
  return lambda + rate * std::max(distance - budget, 0.0);
}

std::vector<double> constraint_losses(const ConstraintSpec& spec, const Matrix& original, const Matrix& transformed) {
  std::vector<double> out;
  out.reserve(spec.blocks.size());
  for (std::size_t j = 0; j < spec.blocks.size(); ++j) {
    const Block& b = spec.blocks[j];
    out.push_back(constraint_loss(spec.kinds[j], original.col_block(b.offset, b.width),
                                  transformed.col_block(b.offset, b.width)));
  }
  return out;
}

namespace {

// Adds scale * d(constraint_loss)/d(transformed) for one block into grad.
void add_constraint_grad(DistanceKind kind, const Block& b, const Matrix& original, const Matrix& transformed,
                         double scale, Matrix& grad) {
  const std::size_t n = original.rows();
  if (kind == DistanceKind::mean_absolute_error) {
    const double unit = scale / static_cast<double>(n * b.width);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = b.offset; c < b.offset + b.width; ++c) {
        const double d = transformed(r, c) - original(r, c);
        grad(r, c) += d > 0.0 ? unit : (d < 0.0 ? -unit : 0.0);
      }
    return;
  }
  const double unit = scale / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t truth = b.offset, best = b.offset;
    double other = -INFINITY;
    for (std::size_t c = b.offset; c < b.offset + b.width; ++c)
      if (original(r, c) == 1.0) truth = c;
    for (std::size_t c = b.offset; c < b.offset + b.width; ++c)
      if (c != truth && transformed(r, c) > other) {
        other = transformed(r, c);
        best = c;
      }
    if (1.0 - (transformed(r, truth) - other) > 0.0) {
      grad(r, truth) -= unit;
      grad(r, best) += unit;
    }
  }
}

// Residual conversion of raw network output into the transformed variables.
struct Converted {
  Matrix value;
  std::vector<Matrix> soft;  // one per block; empty for continuous blocks
};

Converted convert(const Matrix& raw, const Matrix& original, const std::vector<Block>& blocks, double temperature,
                  double margin, bool hard, Rng& rng) {
  Converted out{Matrix(original.rows(), original.cols()), {}};
  out.soft.resize(blocks.size());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Block& b = blocks[j];
    if (b.kind == ColumnKind::continuous) {
      for (std::size_t r = 0; r < raw.rows(); ++r)
        for (std::size_t c = b.offset; c < b.offset + b.width; ++c) out.value(r, c) = original(r, c) + raw(r, c);
      continue;
    }
    Matrix logits(raw.rows(), b.width);
    for (std::size_t r = 0; r < raw.rows(); ++r)
      for (std::size_t c = 0; c < b.width; ++c)
        logits(r, c) = raw(r, b.offset + c) + margin * original(r, b.offset + c);
    GumbelSoftmaxOutput g = gumbel_softmax(logits, temperature, hard, rng);
    for (std::size_t r = 0; r < raw.rows(); ++r)
      for (std::size_t c = 0; c < b.width; ++c) out.value(r, b.offset + c) = g.output(r, c);
    out.soft[j] = std::move(g.soft);
  }
  return out;
}

Matrix convert_backward(const Converted& conv, const Matrix& grad, const std::vector<Block>& blocks,
                        double temperature) {
  Matrix raw_grad(grad.rows(), grad.cols());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Block& b = blocks[j];
    if (b.kind == ColumnKind::continuous) {
      for (std::size_t r = 0; r < grad.rows(); ++r)
        for (std::size_t c = b.offset; c < b.offset + b.width; ++c) raw_grad(r, c) = grad(r, c);
      continue;
    }
    const Matrix g = gumbel_softmax_backward(conv.soft[j], grad.col_block(b.offset, b.width), temperature);
    for (std::size_t r = 0; r < grad.rows(); ++r)
      for (std::size_t c = 0; c < b.width; ++c) raw_grad(r, b.offset + c) = g(r, c);
  }
  return raw_grad;
}

std::vector<Block> outcome_blocks(Task task) {
  return {task == Task::classification ? Block{"y", ColumnKind::categorical, 0, 2}
                                       : Block{"y", ColumnKind::continuous, 0, 1}};
}

Matrix outcome_matrix(std::span<const double> y, Task task) {
  if (task == Task::regression) return Matrix::column(y);
  Matrix m(y.size(), 2);
  for (std::size_t i = 0; i < y.size(); ++i) m(i, y[i] == 1.0 ? 1 : 0) = 1.0;
  return m;
}

LossKind resolve_loss(LossKind kind, Task task) {
  if (kind == LossKind::automatic) return task == Task::classification ? LossKind::cross_entropy : LossKind::squared_error;
  if (kind == LossKind::cross_entropy && task == Task::regression)
    throw ParameterError("preprocessor.loss: cross_entropy needs a classification outcome");
  return kind;
}

LossValue upstream_objective(const Matrix& out, const Matrix& target, LossKind loss) {
  return loss == LossKind::cross_entropy ? cross_entropy(out, target) : squared_error(out, target);
}

// d(loss)/d(target), the path through which G_Y moves the labels.
Matrix loss_target_grad(const Matrix& out, const Matrix& target, LossKind loss) {
  Matrix g(target.rows(), target.cols());
  const double n = static_cast<double>(target.rows());
  for (std::size_t r = 0; r < target.rows(); ++r)
    for (std::size_t c = 0; c < target.cols(); ++c)
      g(r, c) = loss == LossKind::cross_entropy
                    ? -std::log(std::clamp(out(r, c), kProbabilityClip, 1.0 - kProbabilityClip)) / n
                    : -2.0 * (out(r, c) - target(r, c)) / n;
  return g;
}

std::size_t score_column(Task task) { return task == Task::classification ? 1 : 0; }

std::vector<double> column_values(const Matrix& m, std::size_t c) {
  std::vector<double> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

// ---------------------------------------------------------------- training

TrainedPreprocessor train(const Dataset& data, const PreprocessorConfig& config) {
  config.validate();
  data.schema.validate();
  data.validate();
  const Task task = data.task();
  const LossKind loss_kind = resolve_loss(config.loss, task);
  const bool separation = config.fairness_notion == FairnessNotion::separation;
  if (separation && task != Task::classification)
    throw ParameterError("preprocessor.fairness_notion: separation needs a classification outcome");
  if (data.rows() < 2) throw InputError("train: need at least two rows");

  TrainedPreprocessor pp;
  pp.config_ = config;
  pp.schema_ = data.schema;
  pp.spec_ = ConstraintSpec::from_dataset(data);
  pp.task_ = task;
  pp.a_width_ = data.a.cols();

  const ConstraintSpec& spec = pp.spec_;
  const std::size_t vars = spec.blocks.size();
  if (config.delta_x.size() != 1 && config.delta_x.size() != vars)
    throw ParameterError("preprocessor.delta_x: expected 1 or " + std::to_string(vars) + " budgets, got " +
                         std::to_string(config.delta_x.size()));
  std::vector<double> budget(vars);
  for (std::size_t j = 0; j < vars; ++j) budget[j] = config.delta_x.size() == 1 ? config.delta_x[0] : config.delta_x[j];

  const std::size_t dx = data.x.cols(), da = data.a.cols();
  const std::vector<Block> y_blocks = outcome_blocks(task);
  const std::size_t dy = y_blocks[0].width;

  pp.g_x_ = DenseNet::mlp(dx + da, config.converter_hidden, dx, Activation::identity, config.dropout,
                          config.seed ^ kConverterSalt);
  pp.g_x_.scale_output_layer(config.converter_init_scale);
  if (config.delta_y > 0.0) {
    pp.g_y_ = DenseNet::mlp(dx + da + 1, config.converter_hidden, dy, Activation::identity, config.dropout,
                            config.seed ^ kOutcomeSalt);
    pp.g_y_->scale_output_layer(config.converter_init_scale);
  }
  pp.h_up_ = DenseNet::mlp(dx, config.upstream_hidden, dy,
                           task == Task::classification ? Activation::softmax : Activation::identity, config.dropout,
                           config.seed ^ kUpstreamSalt);
  pp.critic_ = DualCritic(1 + da + (separation ? 1 : 0),
                          CriticConfig{config.critic_hidden, 0.0, config.lr_critic, config.batch_size},
                          config.seed ^ kCriticSalt);

  const AdamConfig base{};
  AdamState adam_h(pp.h_up_.parameter_count(), {config.lr_upstream, base.beta1, base.beta2, base.epsilon});
  AdamState adam_gx(pp.g_x_.parameter_count(), {config.lr_converter, base.beta1, base.beta2, base.epsilon});
  AdamState adam_gy(pp.g_y_ ? pp.g_y_->parameter_count() : 0,
                    {config.lr_converter, base.beta1, base.beta2, base.epsilon});

  Rng rng(config.seed);
  std::vector<double> lambda_x(vars, 0.0);
  double lambda_y = 0.0;
  const std::size_t n = data.rows();
  const std::size_t sc = score_column(task);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    EpochTrace tr;
    tr.delta_x.assign(vars, 0.0);
    std::size_t batches = 0;

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      if (end - start < 2) continue;  // nothing to permute against
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const std::size_t m = idx.size();
      const Matrix xb = data.x.gather_rows(idx);
      const Matrix ab = data.a.gather_rows(idx);
      std::vector<double> yb(m);
      for (std::size_t i = 0; i < m; ++i) yb[i] = data.y[idx[i]];
      const Matrix y_orig = outcome_matrix(yb, task);

      // Converters.
      const Matrix raw_x = pp.g_x_.forward(Matrix::hcat(xb, ab), Mode::training);
      const Converted cx = convert(raw_x, xb, spec.blocks, config.temperature, config.category_margin, false, rng);
      std::optional<Converted> cy;
      if (pp.g_y_) {
        const Matrix raw_y = pp.g_y_->forward(Matrix::hcat(Matrix::hcat(xb, ab), Matrix::column(yb)), Mode::training);
        cy = convert(raw_y, y_orig, y_blocks, config.temperature, config.category_margin, false, rng);
      }
      const Matrix& y_bar = cy ? cy->value : y_orig;
      const std::span<const double> strata = separation ? std::span<const double>(yb) : std::span<const double>{};

      auto product_rows = [&]() {
        return separation ? stratified_permutation(yb, rng) : rng.permutation(m);
      };

      // Inner loop: upstream model and critic.
      double dual = 0.0;
      for (std::size_t t = 0; t < config.t_prime; ++t) {
        const Matrix out = pp.h_up_.forward(cx.value, Mode::training);
        const LossValue l = upstream_objective(out, y_bar, loss_kind);
        const NetGradients g = pp.h_up_.backward(l.grad);
        adam_h.step(pp.h_up_.parameters(), g.params);

        const std::vector<double> scores = column_values(pp.h_up_.predict(cx.value), sc);
        const auto perm = product_rows();
        const auto ev = pp.critic_.ascend(critic_input(scores, ab, strata),
                                          critic_input(scores, ab.gather_rows(perm), strata));
        dual = ev.value;
      }

      // Dual ascent on the budget multipliers.
      const std::vector<double> dist_x = constraint_losses(spec, xb, cx.value);
      for (std::size_t j = 0; j < vars; ++j)
        lambda_x[j] = dual_ascent_step(lambda_x[j], config.lr_lambda_x, dist_x[j], budget[j]);
      const double dist_y = cy ? constraint_loss(spec.outcome, y_orig, cy->value) : 0.0;
      if (cy) lambda_y = dual_ascent_step(lambda_y, config.lr_lambda_y, dist_y, config.delta_y);

      // Converter G_X: loss + lambda_F R_V + lambda_X . hinge(Delta_X - delta_X).
      const Matrix out = pp.h_up_.forward(cx.value, Mode::training);
      const LossValue l = upstream_objective(out, y_bar, loss_kind);
      const std::vector<double> scores = column_values(out, sc);
      const auto perm = product_rows();
      const auto ev = pp.critic_.evaluate(critic_input(scores, ab, strata),
                                          critic_input(scores, ab.gather_rows(perm), strata));
      if (!all_finite({l.value, ev.value, dual})) {
        std::ostringstream msg;
        msg << "train: non-finite value at epoch " << epoch << ", batch starting at row " << start
            << " (upstream loss " << l.value << ", dual " << ev.value << ", lambda_y " << lambda_y << ", lambda_x [";
        for (std::size_t j = 0; j < vars; ++j) msg << (j ? ", " : "") << lambda_x[j];
        msg << "])";
        throw TrainingError(msg.str());
      }
      Matrix out_grad = l.grad;
      for (std::size_t r = 0; r < m; ++r)
        out_grad(r, sc) += config.lambda_f * (ev.joint_input_grad(r, 0) + ev.product_input_grad(r, 0));
      Matrix x_grad = pp.h_up_.backward(out_grad).input;
      for (std::size_t j = 0; j < vars; ++j)
        if (dist_x[j] > budget[j] && lambda_x[j] > 0.0)
          add_constraint_grad(spec.kinds[j], spec.blocks[j], xb, cx.value, lambda_x[j], x_grad);
      const NetGradients gx = pp.g_x_.backward(convert_backward(cx, x_grad, spec.blocks, config.temperature));
      adam_gx.step(pp.g_x_.parameters(), gx.params);

      // Converter G_Y: loss + lambda_Y hinge(Delta_Y - delta_Y).
      if (cy) {
        Matrix y_grad = loss_target_grad(out, cy->value, loss_kind);
        if (dist_y > config.delta_y && lambda_y > 0.0)
          add_constraint_grad(spec.outcome, y_blocks[0], y_orig, cy->value, lambda_y, y_grad);
        const NetGradients gy = pp.g_y_->backward(convert_backward(*cy, y_grad, y_blocks, config.temperature));
        adam_gy.step(pp.g_y_->parameters(), gy.params);
      }

      for (std::size_t j = 0; j < vars; ++j) tr.delta_x[j] += dist_x[j];
      tr.delta_y += dist_y;
      tr.upstream_loss += l.value;
      tr.dual_value += dual;
      ++batches;
    }

    if (batches > 0) {
      const double b = static_cast<double>(batches);
      for (double& v : tr.delta_x) v /= b;
      tr.delta_y /= b;
      tr.upstream_loss /= b;
      tr.dual_value /= b;
    }
    tr.lambda_x = lambda_x;
    tr.lambda_y = lambda_y;
    pp.trace_.push_back(std::move(tr));
  }

  pp.g_x_.clear_cache();
  if (pp.g_y_) pp.g_y_->clear_cache();
  pp.h_up_.clear_cache();
  pp.critic_.net().clear_cache();
  return pp;
}

// ---------------------------------------------------------------- inference

Matrix TrainedPreprocessor::transform_covariates(const Matrix& x, const Matrix& a) const {
  if (x.cols() != g_x_.output_width() || a.cols() != a_width_)
    throw InputError("transform_covariates: column layout differs from the training schema");
  if (x.rows() != a.rows()) throw InputError("transform_covariates: x and a rows differ");
  Rng rng(config_.seed ^ kTransformSalt);
  const Matrix raw = g_x_.predict(Matrix::hcat(x, a));
  return convert(raw, x, spec_.blocks, config_.temperature, config_.category_margin, true, rng).value;
}

std::vector<double> TrainedPreprocessor::transform_outcome(const Matrix& x, const Matrix& a,
                                                           std::span<const double> y) const {
  if (y.size() != x.rows()) throw InputError("transform_outcome: y and x rows differ");
  if (!g_y_) return {y.begin(), y.end()};
  if (x.cols() != g_x_.output_width() || a.cols() != a_width_)
    throw InputError("transform_outcome: column layout differs from the training schema");
  Rng rng(config_.seed ^ kTransformSalt ^ kOutcomeSalt);
  const Matrix raw = g_y_->predict(Matrix::hcat(Matrix::hcat(x, a), Matrix::column(y)));
  const std::vector<Block> blocks = outcome_blocks(task_);
  const Matrix out = convert(raw, outcome_matrix(y, task_), blocks, config_.temperature, config_.category_margin,
                             true, rng).value;
  return column_values(out, task_ == Task::classification ? 1 : 0);
}

Dataset TrainedPreprocessor::transform(const Dataset& data) const {
  Dataset out = with_covariates(data, transform_covariates(data.x, data.a));
  out.y = transform_outcome(data.x, data.a, data.y);
  return out;
}

std::vector<double> TrainedPreprocessor::upstream_scores(const Matrix& x_transformed) const {
  return fairprep::upstream_scores(h_up_, x_transformed, task_);
}

nlohmann::json TrainedPreprocessor::trace_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochTrace& t : trace_)
    epochs.push_back({{"lambda_x", t.lambda_x},
                      {"lambda_y", t.lambda_y},
                      {"delta_x", t.delta_x},
                      {"delta_y", t.delta_y},
                      {"upstream_loss", t.upstream_loss},
                      {"dual_value", t.dual_value}});
  return epochs;
}

void TrainedPreprocessor::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_json(to_json(g_x_), dir / "g_x.json");
  if (g_y_) save_json(to_json(*g_y_), dir / "g_y.json");
  else std::filesystem::remove(dir / "g_y.json");
  save_json(to_json(h_up_), dir / "h_up.json");
  nlohmann::json critic = to_json(critic_.net());
  critic["critic"] = {{"hidden", critic_.config().hidden},
                      {"dropout", critic_.config().dropout},
                      {"learning_rate", critic_.config().learning_rate},
                      {"batch_size", critic_.config().batch_size}};
  save_json(critic, dir / "critic.json");
  save_json({{"format", "fairprep.bundle"},
             {"version", kCheckpointVersion},
             {"code_version", kVersionStamp},
             {"task", to_string(task_)},
             {"sensitive_width", a_width_},
             {"has_g_y", g_y_.has_value()},
             {"config", config_.to_json()},
             {"schema", schema_.to_json()},
             {"trace", trace_json()}},
            dir / "bundle.json");
}

TrainedPreprocessor TrainedPreprocessor::load(const std::filesystem::path& dir) {
  const nlohmann::json bundle = load_json(dir / "bundle.json");
  if (bundle.value("format", "") != "fairprep.bundle") throw LoadError("not a fairprep bundle: " + dir.string());
  TrainedPreprocessor pp;
  try {
    pp.config_ = PreprocessorConfig::from_json(bundle.at("config"));
    pp.schema_ = Schema::from_json(bundle.at("schema"));
    pp.task_ = bundle.at("task").get<std::string>() == "classification" ? Task::classification : Task::regression;
    pp.a_width_ = bundle.at("sensitive_width").get<std::size_t>();
    Dataset shape;
    shape.schema = pp.schema_;
    pp.spec_.blocks = shape.x_blocks();
    for (const Block& b : pp.spec_.blocks)
      pp.spec_.kinds.push_back(b.kind == ColumnKind::categorical ? DistanceKind::categorical_hinge
                                                                 : DistanceKind::mean_absolute_error);
    pp.spec_.outcome = pp.task_ == Task::classification ? DistanceKind::categorical_hinge
                                                        : DistanceKind::mean_absolute_error;
    pp.g_x_ = densenet_from_json(load_json(dir / "g_x.json"));
    if (bundle.at("has_g_y").get<bool>()) pp.g_y_ = densenet_from_json(load_json(dir / "g_y.json"));
    pp.h_up_ = densenet_from_json(load_json(dir / "h_up.json"));
    const nlohmann::json critic = load_json(dir / "critic.json");
    const auto& cc = critic.at("critic");
    pp.critic_ = DualCritic(densenet_from_json(critic),
                            CriticConfig{cc.at("hidden").get<std::vector<std::size_t>>(), cc.at("dropout").get<double>(),
                                         cc.at("learning_rate").get<double>(), cc.at("batch_size").get<std::size_t>()});
    for (const auto& e : bundle.at("trace")) {
      EpochTrace t;
      t.lambda_x = e.at("lambda_x").get<std::vector<double>>();
      t.lambda_y = e.at("lambda_y").get<double>();
      t.delta_x = e.at("delta_x").get<std::vector<double>>();
      t.delta_y = e.at("delta_y").get<double>();
      t.upstream_loss = e.at("upstream_loss").get<double>();
      t.dual_value = e.at("dual_value").get<double>();
      pp.trace_.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed bundle " + dir.string() + ": " + e.what());
  }
  return pp;
}

// ---------------------------------------------------------------- reference model

DenseNet fit_upstream(const Matrix& x, std::span<const double> y, Task task, const PreprocessorConfig& config) {
  config.validate();
  if (x.rows() != y.size() || x.rows() < 2) throw InputError("fit_upstream: need aligned rows (at least two)");
  const LossKind loss_kind = resolve_loss(config.loss, task);
  const std::size_t dy = task == Task::classification ? 2 : 1;
  DenseNet net = DenseNet::mlp(x.cols(), config.upstream_hidden, dy,
                               task == Task::classification ? Activation::softmax : Activation::identity,
                               config.dropout, config.seed ^ kUpstreamSalt);
  AdamState adam(net.parameter_count(), {config.lr_upstream, 0.0, 0.999, 1e-8});
  Rng rng(config.seed);
  const Matrix target = outcome_matrix(y, task);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(x.rows());
    for (std::size_t start = 0; start < x.rows(); start += config.batch_size) {
      const std::size_t end = std::min(x.rows(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix out = net.forward(x.gather_rows(idx), Mode::training);
      const LossValue l = upstream_objective(out, target.gather_rows(idx), loss_kind);
      if (!std::isfinite(l.value)) throw TrainingError("fit_upstream: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(net.parameters(), net.backward(l.grad).params);
    }
  }
  net.clear_cache();
  return net;
}

std::vector<double> upstream_scores(const DenseNet& net, const Matrix& x, Task task) {
  return column_values(net.predict(x), score_column(task));
}

double upstream_loss(std::span<const double> scores, std::span<const double> y, Task task) {
  if (scores.size() != y.size() || y.empty()) throw InputError("upstream_loss: length mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (task == Task::classification) {
      const double p = std::clamp(scores[i], kProbabilityClip, 1.0 - kProbabilityClip);
      s -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    } else {
      s += (scores[i] - y[i]) * (scores[i] - y[i]);
    }
  }
  return s / static_cast<double>(y.size());
}

}  // namespace fairprep
