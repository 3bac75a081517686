// SPDX-License-Identifier: Apache-2.0
#include "fairprep/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fairprep/checkpoint.hpp"
#include "fairprep/kernels.hpp"

namespace fairprep {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic_regression: return "logistic_regression";
    case ModelKind::knn: return "knn";
    case ModelKind::small_mlp: return "small_mlp";
    case ModelKind::random_feature_linear: return "random_feature_linear";
  }
  return "logistic_regression";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (auto k : {ModelKind::logistic_regression, ModelKind::knn, ModelKind::small_mlp,
                 ModelKind::random_feature_linear})
    if (to_string(k) == name) return k;
  throw InputError("unknown downstream model '" + name + "'");
}

std::vector<ModelKind> default_zoo() {
  return {ModelKind::logistic_regression, ModelKind::knn, ModelKind::small_mlp, ModelKind::random_feature_linear};
}

nlohmann::json DownstreamHyperparams::to_json() const {
  return {{"knn_k", knn_k},
          {"linear_iterations", linear_iterations},
          {"l2", l2},
          {"upstream_hidden", upstream_hidden},
          {"mlp_epochs", mlp_epochs},
          {"mlp_batch", mlp_batch},
          {"mlp_learning_rate", mlp_learning_rate},
          {"rff_features", rff_features},
          {"rff_bandwidth", rff_bandwidth}};
}

DownstreamHyperparams DownstreamHyperparams::from_json(const nlohmann::json& doc) {
  DownstreamHyperparams hp;
  hp.knn_k = doc.value("knn_k", hp.knn_k);
  hp.linear_iterations = doc.value("linear_iterations", hp.linear_iterations);
  hp.l2 = doc.value("l2", hp.l2);
  hp.upstream_hidden = doc.value("upstream_hidden", hp.upstream_hidden);
  hp.mlp_epochs = doc.value("mlp_epochs", hp.mlp_epochs);
  hp.mlp_batch = doc.value("mlp_batch", hp.mlp_batch);
  hp.mlp_learning_rate = doc.value("mlp_learning_rate", hp.mlp_learning_rate);
  hp.rff_features = doc.value("rff_features", hp.rff_features);
  hp.rff_bandwidth = doc.value("rff_bandwidth", hp.rff_bandwidth);
  if (hp.knn_k == 0) throw ParameterError("downstream: knn_k must be >= 1");
  if (hp.rff_features == 0 || !(hp.rff_bandwidth > 0.0)) throw ParameterError("downstream: invalid random-feature settings");
  return hp;
}

// ---------------------------------------------------------------- FeatureMap

FeatureMap FeatureMap::identity(std::size_t width) {
  FeatureMap f;
  f.kind_ = Kind::identity;
  f.input_width_ = f.output_width_ = width;
  return f;
}

FeatureMap FeatureMap::random_fourier(std::size_t input_width, std::size_t features, double bandwidth,
                                      std::uint64_t seed) {
  if (features == 0 || !(bandwidth > 0.0)) throw ParameterError("random_fourier: need features >= 1 and bandwidth > 0");
  FeatureMap f;
  f.kind_ = Kind::random_fourier;
  f.input_width_ = input_width;
  f.output_width_ = features;
  f.frequencies_ = Matrix(input_width, features);
  Rng rng(seed);
  for (double& w : f.frequencies_.values()) w = rng.normal(0.0, 1.0 / bandwidth);
  f.offsets_.resize(features);
  for (double& b : f.offsets_) b = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return f;
}

Matrix FeatureMap::apply(const Matrix& x) const {
  if (x.cols() != input_width_) throw ShapeError("FeatureMap: input has wrong column count");
  if (kind_ == Kind::identity) return x;
  Matrix z(x.rows(), output_width_);
  kernels::gemm(x.values(), frequencies_.values(), z.values(), x.rows(), input_width_, output_width_);
  const double scale = std::sqrt(2.0 / static_cast<double>(output_width_));
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < output_width_; ++c) z(r, c) = scale * std::cos(z(r, c) + offsets_[c]);
  return z;
}

nlohmann::json FeatureMap::to_json() const {
  nlohmann::json j{{"kind", kind_ == Kind::identity ? "identity" : "random_fourier"},
                   {"input_width", input_width_},
                   {"output_width", output_width_}};
  if (kind_ == Kind::random_fourier) {
    j["frequencies"] = frequencies_.data();
    j["offsets"] = offsets_;
  }
  return j;
}

FeatureMap FeatureMap::from_json(const nlohmann::json& doc) {
  FeatureMap f;
  const auto kind = doc.at("kind").get<std::string>();
  f.input_width_ = doc.at("input_width").get<std::size_t>();
  f.output_width_ = doc.at("output_width").get<std::size_t>();
  if (kind == "identity") return f;
  if (kind != "random_fourier") throw InputError("unknown feature map '" + kind + "'");
  f.kind_ = Kind::random_fourier;
  f.frequencies_ = Matrix(f.input_width_, f.output_width_, doc.at("frequencies").get<std::vector<double>>());
  f.offsets_ = doc.at("offsets").get<std::vector<double>>();
  return f;
}

// ---------------------------------------------------------------- fitting

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void check_labels(std::span<const double> y, Task task) {
  if (task != Task::classification) return;
  std::size_t pos = 0, neg = 0;
  for (double v : y) {
    if (v == 1.0) ++pos;
    else if (v == 0.0) ++neg;
    else throw FitError("fit: classification labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw FitError("fit: classifier needs both classes in the training labels");
}

// Full-batch gradient descent with step 1/L, where L bounds the curvature of the
// mean loss (mean squared row norm, bias column included).
void fit_linear(const Matrix& f, std::span<const double> y, Task task, const DownstreamHyperparams& hp,
                std::vector<double>& w, double& b) {
  const std::size_t n = f.rows(), d = f.cols();
  double norm = 1.0;
  for (double v : f.values()) norm += v * v / static_cast<double>(n);
  const double curvature = (task == Task::classification ? 0.25 : 2.0) * norm + hp.l2;
  const double step = 1.0 / curvature;
  w.assign(d, 0.0);
  b = 0.0;
  std::vector<double> z(n), resid(n), gw(d);
  for (std::size_t it = 0; it < hp.linear_iterations; ++it) {
    kernels::gemm(f.values(), w, z, n, d, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double pred = task == Task::classification ? sigmoid(z[i] + b) : z[i] + b;
      resid[i] = (task == Task::classification ? 1.0 : 2.0) * (pred - y[i]) / static_cast<double>(n);
    }
    kernels::gemm_tn(f.values(), resid, gw, n, d, 1);
    double gb = std::accumulate(resid.begin(), resid.end(), 0.0);
    for (std::size_t j = 0; j < d; ++j) w[j] -= step * (gw[j] + hp.l2 * w[j]);
    b -= step * gb;
  }
}

DenseNet fit_mlp(const Matrix& f, std::span<const double> y, Task task, const DownstreamHyperparams& hp,
                 std::uint64_t seed) {
  std::vector<std::size_t> hidden;
  for (std::size_t w : hp.upstream_hidden) hidden.push_back(std::max<std::size_t>(1, w / 2));
  const bool cls = task == Task::classification;
  DenseNet net = DenseNet::mlp(f.cols(), hidden, cls ? 2 : 1, cls ? Activation::softmax : Activation::identity, 0.0,
                               seed);
  AdamState adam(net.parameter_count(), AdamConfig{hp.mlp_learning_rate, 0.0, 0.999, 1e-8});
  Rng rng(seed ^ 0xa5a5a5a5ULL);
  const std::size_t n = f.rows();
  const std::size_t batch = std::min(hp.mlp_batch, n);
  for (std::size_t epoch = 0; epoch < hp.mlp_epochs; ++epoch) {
    const auto perm = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::span<const std::size_t> idx(perm.data() + start, end - start);
      const Matrix xb = f.gather_rows(idx);
      Matrix target(idx.size(), cls ? 2 : 1);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (cls) target(i, static_cast<std::size_t>(y[idx[i]])) = 1.0;
        else target(i, 0) = y[idx[i]];
      }
      const Matrix out = net.forward(xb, Mode::training);
      const LossValue loss = cls ? cross_entropy(out, target) : squared_error(out, target);
      const NetGradients g = net.backward(loss.grad);
      adam.step(net.parameters(), g.params);
    }
  }
  net.clear_cache();
  return net;
}

}  // namespace

DownstreamModel compose(const FeatureMap& feature_map, ModelKind kind, const Matrix& x, std::span<const double> y,
                        Task task, const DownstreamHyperparams& hp, std::uint64_t seed) {
  if (x.rows() != y.size()) throw InputError("fit: covariate and label rows differ");
  if (x.rows() == 0) throw FitError("fit: empty training set");
  if (feature_map.input_width() != x.cols()) throw ShapeError("compose: feature map input width differs from covariates");
  check_labels(y, task);

  DownstreamModel m;
  m.kind_ = kind;
  m.task_ = task;
  m.features_ = feature_map;
  if (kind == ModelKind::random_feature_linear && feature_map.kind() == FeatureMap::Kind::identity)
    m.features_ = FeatureMap::random_fourier(x.cols(), hp.rff_features, hp.rff_bandwidth, seed ^ 0x3c6ef372ULL);
  const Matrix f = m.features_.apply(x);

  switch (kind) {
    case ModelKind::logistic_regression:
    case ModelKind::random_feature_linear: fit_linear(f, y, task, hp, m.weights_, m.bias_); break;
    case ModelKind::knn:
      if (hp.knn_k == 0) throw ParameterError("knn: k must be >= 1");
      m.train_x_ = f;
      m.train_y_.assign(y.begin(), y.end());
      m.k_ = std::min(hp.knn_k, f.rows());
      break;
    case ModelKind::small_mlp: m.net_ = fit_mlp(f, y, task, hp, seed); break;
  }
  return m;
}

DownstreamModel fit(ModelKind kind, const Matrix& x, std::span<const double> y, Task task,
                    const DownstreamHyperparams& hp, std::uint64_t seed) {
  return compose(FeatureMap::identity(x.cols()), kind, x, y, task, hp, seed);
}

std::vector<double> DownstreamModel::score(const Matrix& x) const {
  if (x.cols() != input_width()) throw ShapeError("score: covariate column count differs from fit");
  return score_features(features_.apply(x));
}

std::vector<double> DownstreamModel::score_features(const Matrix& f) const {
  const std::size_t n = f.rows();
  std::vector<double> out(n);
  switch (kind_) {
    case ModelKind::logistic_regression:
    case ModelKind::random_feature_linear: {
      kernels::gemm(f.values(), weights_, out, n, f.cols(), 1);
      for (double& v : out) v = task_ == Task::classification ? sigmoid(v + bias_) : v + bias_;
      break;
    }
    case ModelKind::knn: {
      constexpr std::size_t kChunk = 256;
      const std::size_t m = train_x_.rows();
      std::vector<double> dist;
      std::vector<std::size_t> order(m);
      for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t rows = std::min(kChunk, n - start);
        dist.assign(rows * m, 0.0);
        kernels::sq_distances(std::span<const double>(f.values().data() + start * f.cols(), rows * f.cols()),
                              train_x_.values(), dist, rows, m, f.cols());
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dr = dist.data() + r * m;
          std::iota(order.begin(), order.end(), std::size_t{0});
          std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_), order.end(),
                            [&](std::size_t a, std::size_t b) { return dr[a] < dr[b] || (dr[a] == dr[b] && a < b); });
          double s = 0.0;
          for (std::size_t j = 0; j < k_; ++j) s += train_y_[order[j]];
          out[start + r] = s / static_cast<double>(k_);
        }
      }
      break;
    }
    case ModelKind::small_mlp: {
      const Matrix p = net_.predict(f);
      for (std::size_t i = 0; i < n; ++i) out[i] = task_ == Task::classification ? p(i, 1) : p(i, 0);
      break;
    }
  }
  return out;
}

nlohmann::json DownstreamModel::to_json() const {
  nlohmann::json j{{"format", "fairprep.downstream"},
                   {"version", 1},
                   {"kind", to_string(kind_)},
                   {"task", fairprep::to_string(task_)},
                   {"features", features_.to_json()}};
  switch (kind_) {
    case ModelKind::logistic_regression:
    case ModelKind::random_feature_linear:
      j["weights"] = weights_;
      j["bias"] = bias_;
      break;
    case ModelKind::knn:
      j["k"] = k_;
      j["train_rows"] = train_x_.rows();
      j["train_x"] = train_x_.data();
      j["train_y"] = train_y_;
      break;
    case ModelKind::small_mlp: j["net"] = fairprep::to_json(net_); break;
  }
  return j;
}

DownstreamModel DownstreamModel::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "fairprep.downstream") throw InputError("not a fairprep.downstream document");
  DownstreamModel m;
  m.kind_ = model_kind_from_string(doc.at("kind").get<std::string>());
  m.task_ = doc.at("task").get<std::string>() == "classification" ? Task::classification : Task::regression;
  m.features_ = FeatureMap::from_json(doc.at("features"));
  switch (m.kind_) {
    case ModelKind::logistic_regression:
    case ModelKind::random_feature_linear:
      m.weights_ = doc.at("weights").get<std::vector<double>>();
      m.bias_ = doc.at("bias").get<double>();
      break;
    case ModelKind::knn: {
      m.k_ = doc.at("k").get<std::size_t>();
      const auto rows = doc.at("train_rows").get<std::size_t>();
      m.train_x_ = Matrix(rows, m.features_.output_width(), doc.at("train_x").get<std::vector<double>>());
      m.train_y_ = doc.at("train_y").get<std::vector<double>>();
      break;
    }
    case ModelKind::small_mlp: m.net_ = densenet_from_json(doc.at("net")); break;
  }
  return m;
}

double model_loss(std::span<const double> scores, std::span<const double> y, Task task) {
  if (scores.size() != y.size() || scores.empty()) throw InputError("model_loss: length mismatch or empty");
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
