// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small dense-network engine: feed-forward stacks with hand-written reverse
// mode, Adam, a Gumbel-softmax head and the two supervised losses.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairprep/matrix.hpp"
#include "fairprep/rng.hpp"

namespace fairprep {

enum class Activation { relu, identity, softmax, sigmoid };
enum class Mode { inference, training };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
};

/// Parameter gradients (flat, same layout as DenseNet::parameters) and the
/// gradient with respect to the network input.
struct NetGradients {
  std::vector<double> params;
  Matrix input;
};

/// Feed-forward stack of dense layers. Layer i computes act(x W_i + b_i) with
/// W_i stored row-major as (in x out). Dropout is applied to hidden-layer outputs
/// in training mode only.
class DenseNet {
 public:
  DenseNet() = default;
  /// widths = {input, hidden..., output}; one activation per layer.
  DenseNet(std::vector<std::size_t> widths, std::vector<Activation> activations, double dropout_rate,
           std::uint64_t seed);

  /// ReLU hidden layers followed by a head with the given activation.
  static DenseNet mlp(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                      Activation head, double dropout_rate, std::uint64_t seed);

  /// Training mode applies dropout and caches activations for backward().
  Matrix forward(const Matrix& input, Mode mode);
  /// Inference-mode forward; a pure function of (parameters, input).
  Matrix predict(const Matrix& input) const;
  /// Backpropagates dL/d(output) through the cached training forward pass.
  NetGradients backward(const Matrix& output_grad) const;
  bool has_cache() const { return cache_.has_value(); }
  void clear_cache() { cache_.reset(); }

  std::size_t input_width() const { return layers_.front().in; }
  std::size_t output_width() const { return layers_.back().out; }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<double> bias(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;

  /// Multiplies the last layer's weights and bias; used to start residual converters near identity.
  void scale_output_layer(double factor);

  double dropout_rate() const { return dropout_rate_; }
  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    return a.layers_.size() == b.layers_.size() && a.params_ == b.params_ && a.dropout_rate_ == b.dropout_rate_;
  }

 private:
  struct Cache {
    std::vector<Matrix> inputs;   // input of each layer (after previous dropout)
    std::vector<Matrix> outputs;  // activated output of each layer, before dropout
    std::vector<Matrix> masks;    // scaled keep-masks, empty when no dropout
  };

  Matrix affine(std::size_t layer, const Matrix& in) const;

  std::vector<LayerShape> layers_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<double> params_;
  double dropout_rate_ = 0.0;
  std::uint64_t seed_ = 0;
  Rng rng_;
  std::optional<Cache> cache_;

  friend DenseNet densenet_from_parts(std::vector<std::size_t>, std::vector<Activation>, double, std::uint64_t,
                                      std::vector<double>, const std::string&);
};

/// Rebuilds a network from serialized parts; parameter length must match the layout.
DenseNet densenet_from_parts(std::vector<std::size_t> widths, std::vector<Activation> activations,
                             double dropout_rate, std::uint64_t seed, std::vector<double> params,
                             const std::string& rng_state);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. With beta1 = 0 the update is the raw gradient
/// over the bias-corrected RMS.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamConfig config);

  /// Descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(std::span<double> params, std::span<const double> grads);
  /// Ascent step on the same moments (used by the critic).
  void ascend(std::span<double> params, std::span<const double> grads);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  void update(std::span<double> params, std::span<const double> grads, double sign);

  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

struct GumbelSoftmaxOutput {
  Matrix output;  // one-hot when hard, otherwise equal to soft
  Matrix soft;    // softmax((logits + g) / temperature)
};

/// Gumbel-softmax relaxation. With hard set, the forward value is the one-hot of
/// the perturbed argmax while the backward pass uses the soft sample.
GumbelSoftmaxOutput gumbel_softmax(const Matrix& logits, double temperature, bool hard, Rng& rng);
/// dL/d(logits) given dL/d(output); straight-through for hard samples.
Matrix gumbel_softmax_backward(const Matrix& soft, const Matrix& output_grad, double temperature);

/// Probability clip applied inside the cross-entropy.
inline constexpr double kProbabilityClip = 1e-7;

struct LossValue {
  double value = 0.0;
  Matrix grad;  // d(value)/d(prediction)
};

/// Mean over rows of -sum_c target_c log clip(prob_c). Targets may be soft labels.
LossValue cross_entropy(const Matrix& probs, const Matrix& targets);
/// Mean over rows of sum_c (pred_c - target_c)^2.
LossValue squared_error(const Matrix& pred, const Matrix& target);

}  // namespace fairprep
