// SPDX-License-Identifier: Apache-2.0
#include "fairprep/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fairprep/kernels.hpp"

namespace fairprep {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  if (name == "softmax") return Activation::softmax;
  if (name == "sigmoid") return Activation::sigmoid;
  throw InputError("unknown activation tag '" + name + "'");
}

namespace {

void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::identity: return;
    case Activation::relu:
      for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::sigmoid:
      for (double& v : z.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      return;
    case Activation::softmax: z = softmax_rows(z); return;
  }
}

// dL/dz from dL/dy and the activated output y.
Matrix activation_backward(const Matrix& y, const Matrix& dy, Activation act) {
  Matrix dz = dy;
  switch (act) {
    case Activation::identity: break;
    case Activation::relu:
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (y.values()[i] <= 0.0) dz.values()[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < dz.size(); ++i) {
        const double s = y.values()[i];
        dz.values()[i] *= s * (1.0 - s);
      }
      break;
    case Activation::softmax:
      for (std::size_t r = 0; r < dz.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dz.cols(); ++c) dot += dy(r, c) * y(r, c);
        for (std::size_t c = 0; c < dz.cols(); ++c) dz(r, c) = y(r, c) * (dy(r, c) - dot);
      }
      break;
  }
  return dz;
}

}  // namespace

DenseNet::DenseNet(std::vector<std::size_t> widths, std::vector<Activation> activations, double dropout_rate,
                   std::uint64_t seed)
    : dropout_rate_(dropout_rate), seed_(seed), rng_(seed) {
  if (widths.size() < 2) throw ShapeError("DenseNet: need at least input and output widths");
  if (activations.size() != widths.size() - 1) throw ShapeError("DenseNet: one activation per layer required");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ParameterError("DenseNet: dropout_rate must lie in [0, 1)");
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) throw ShapeError("DenseNet: zero-width layer");
    layers_.push_back({widths[i], widths[i + 1], activations[i]});
    weight_offset_.push_back(offset);
    offset += widths[i] * widths[i + 1];
    bias_offset_.push_back(offset);
    offset += widths[i + 1];
  }
  params_.assign(offset, 0.0);
  // Uniform He-style fan-in initialization; biases start at zero.
  Rng init(seed ^ 0x5bd1e995ULL);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layers_[l].in));
    for (double& w : weights(l)) w = init.uniform(-bound, bound);
  }
}

DenseNet DenseNet::mlp(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                       Activation head, double dropout_rate, std::uint64_t seed) {
  std::vector<std::size_t> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);
  std::vector<Activation> acts(hidden.size(), Activation::relu);
  acts.push_back(head);
  return DenseNet(std::move(widths), std::move(acts), dropout_rate, seed);
}

std::span<double> DenseNet::weights(std::size_t l) {
  return {params_.data() + weight_offset_.at(l), layers_[l].in * layers_[l].out};
}
std::span<double> DenseNet::bias(std::size_t l) { return {params_.data() + bias_offset_.at(l), layers_[l].out}; }
std::span<const double> DenseNet::weights(std::size_t l) const {
  return {params_.data() + weight_offset_.at(l), layers_[l].in * layers_[l].out};
}
std::span<const double> DenseNet::bias(std::size_t l) const {
  return {params_.data() + bias_offset_.at(l), layers_[l].out};
}

void DenseNet::scale_output_layer(double factor) {
  const std::size_t last = layers_.size() - 1;
  for (double& w : weights(last)) w *= factor;
  for (double& b : bias(last)) b *= factor;
}

Matrix DenseNet::affine(std::size_t l, const Matrix& in) const {
  const auto& shape = layers_[l];
  Matrix z(in.rows(), shape.out);
  kernels::gemm(in.values(), weights(l), z.values(), in.rows(), shape.in, shape.out);
  const auto b = bias(l);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto zr = z.row(r);
    for (std::size_t c = 0; c < shape.out; ++c) zr[c] += b[c];
  }
  return z;
}

Matrix DenseNet::predict(const Matrix& input) const {
  if (layers_.empty()) throw StateError("DenseNet: empty network");
  if (input.cols() != input_width()) throw ShapeError("DenseNet::predict: input has wrong column count");
  Matrix h = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = affine(l, h);
    apply_activation(z, layers_[l].activation);
    h = std::move(z);
  }
  return h;
}

Matrix DenseNet::forward(const Matrix& input, Mode mode) {
  if (mode == Mode::inference) return predict(input);
  if (layers_.empty()) throw StateError("DenseNet: empty network");
  if (input.cols() != input_width()) throw ShapeError("DenseNet::forward: input has wrong column count");
  Cache cache;
  Matrix h = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs.push_back(h);
    Matrix z = affine(l, h);
    apply_activation(z, layers_[l].activation);
    cache.outputs.push_back(z);
    const bool hidden = l + 1 < layers_.size();
    if (hidden && dropout_rate_ > 0.0) {
      Matrix mask(z.rows(), z.cols());
      const double keep = 1.0 - dropout_rate_;
      for (double& m : mask.values()) m = rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] *= mask.values()[i];
      cache.masks.push_back(std::move(mask));
    } else {
      cache.masks.emplace_back();
    }
    h = std::move(z);
  }
  cache_ = std::move(cache);
  return h;
}

NetGradients DenseNet::backward(const Matrix& output_grad) const {
  if (!cache_) throw StateError("DenseNet::backward called without a cached training forward pass");
  const Cache& cache = *cache_;
  const std::size_t batch = cache.inputs.front().rows();
  if (output_grad.rows() != batch || output_grad.cols() != output_width())
    throw ShapeError("DenseNet::backward: gradient shape does not match output");

  NetGradients grads;
  grads.params.assign(params_.size(), 0.0);
  Matrix upstream = output_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& shape = layers_[li];
    if (!cache.masks[li].empty())
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream.values()[i] *= cache.masks[li].values()[i];
    Matrix dz = activation_backward(cache.outputs[li], upstream, shape.activation);
    const Matrix& in = cache.inputs[li];
    std::span<double> dw{grads.params.data() + weight_offset_[li], shape.in * shape.out};
    kernels::gemm_tn(in.values(), dz.values(), dw, batch, shape.in, shape.out);
    double* db = grads.params.data() + bias_offset_[li];
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < shape.out; ++c) db[c] += dz(r, c);
    Matrix din(batch, shape.in);
    kernels::gemm_nt(dz.values(), weights(li), din.values(), batch, shape.out, shape.in);
    upstream = std::move(din);
  }
  grads.input = std::move(upstream);
  return grads;
}

DenseNet densenet_from_parts(std::vector<std::size_t> widths, std::vector<Activation> activations,
                             double dropout_rate, std::uint64_t seed, std::vector<double> params,
                             const std::string& rng_state) {
  DenseNet net(std::move(widths), std::move(activations), dropout_rate, seed);
  if (params.size() != net.params_.size()) throw ShapeError("DenseNet: parameter array length does not match layout");
  net.params_ = std::move(params);
  if (!rng_state.empty()) net.rng_.set_state(rng_state);
  return net;
}

AdamState::AdamState(std::size_t parameter_count, AdamConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (config.learning_rate < 0.0) throw ParameterError("Adam: learning_rate must be >= 0");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0) throw ParameterError("Adam: beta1 must lie in [0, 1)");
  if (config.beta2 < 0.0 || config.beta2 >= 1.0) throw ParameterError("Adam: beta2 must lie in [0, 1)");
}

void AdamState::step(std::span<double> params, std::span<const double> grads) { update(params, grads, -1.0); }
void AdamState::ascend(std::span<double> params, std::span<const double> grads) { update(params, grads, 1.0); }

void AdamState::update(std::span<double> params, std::span<const double> grads, double sign) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("Adam: parameter/gradient size mismatch");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] += sign * config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) sum += (o[c] = std::exp(in[c] - mx));
    for (double& v : o) v /= sum;
  }
  return out;
}

GumbelSoftmaxOutput gumbel_softmax(const Matrix& logits, double temperature, bool hard, Rng& rng) {
  if (!(temperature > 0.0)) throw ParameterError("gumbel_softmax: temperature must be > 0");
  Matrix perturbed(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i)
    perturbed.values()[i] = (logits.values()[i] + rng.gumbel()) / temperature;
  GumbelSoftmaxOutput out;
  out.soft = softmax_rows(perturbed);
  if (!hard) {
    out.output = out.soft;
    return out;
  }
  out.output = Matrix(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = perturbed.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out.output(r, best) = 1.0;
  }
  return out;
}

Matrix gumbel_softmax_backward(const Matrix& soft, const Matrix& output_grad, double temperature) {
  if (soft.rows() != output_grad.rows() || soft.cols() != output_grad.cols())
    throw ShapeError("gumbel_softmax_backward: shape mismatch");
  Matrix grad(soft.rows(), soft.cols());
  for (std::size_t r = 0; r < soft.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < soft.cols(); ++c) dot += output_grad(r, c) * soft(r, c);
    for (std::size_t c = 0; c < soft.cols(); ++c) grad(r, c) = soft(r, c) * (output_grad(r, c) - dot) / temperature;
  }
  return grad;
}

LossValue cross_entropy(const Matrix& probs, const Matrix& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    throw ShapeError("cross_entropy: shape mismatch");
  if (probs.rows() == 0) throw InputError("cross_entropy: empty batch");
  LossValue out{0.0, Matrix(probs.rows(), probs.cols())};
  const double n = static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs.values()[i];
    const double t = targets.values()[i];
    const double clipped = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
    out.value -= t * std::log(clipped);
    out.grad.values()[i] = (p == clipped) ? -t / (clipped * n) : 0.0;
  }
  out.value /= n;
  return out;
}

LossValue squared_error(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("squared_error: shape mismatch");
  if (pred.rows() == 0) throw InputError("squared_error: empty batch");
  LossValue out{0.0, Matrix(pred.rows(), pred.cols())};
  const double n = static_cast<double>(pred.rows());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    out.value += d * d;
    out.grad.values()[i] = 2.0 * d / n;
  }
  out.value /= n;
  return out;
}

}  // namespace fairprep
