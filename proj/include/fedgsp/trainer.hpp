#pragma once

// Local model, mini-batch SGD and evaluation.
//
// Models are stacks of dense layers with tanh between them and a softmax
// cross-entropy head: one layer is multinomial logistic regression, two layers
// is a one-hidden-layer MLP. Parameters live in one flat vector, layer by
// layer, each layer stored as its row-major weight matrix followed by its bias.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedgsp/datagen.hpp"
#include "fedgsp/error.hpp"
#include "fedgsp/rng.hpp"

namespace fedgsp {

enum class ModelKind { softmax_linear, mlp_one_hidden };

struct ModelSpec {
  ModelKind kind = ModelKind::softmax_linear;
  int hidden_units = 32;
  int feature_dim = 16;
  int num_classes = 10;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (feature_dim < 1) throw ConfigError("model feature_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("model num_classes must be >= 2");
    if (kind == ModelKind::mlp_one_hidden && hidden_units < 1) throw ConfigError("model.hidden_units must be >= 1");
  }
};

struct LayerShape {
  int outputs = 0;
  int inputs = 0;

  [[nodiscard]] std::size_t weight_count() const noexcept { return static_cast<std::size_t>(outputs) * inputs; }
  [[nodiscard]] std::size_t param_count() const noexcept { return weight_count() + outputs; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct ModelParams {
  std::vector<double> values;
  std::vector<LayerShape> layers;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  [[nodiscard]] int input_dim() const noexcept { return layers.empty() ? 0 : layers.front().inputs; }
  [[nodiscard]] int output_dim() const noexcept { return layers.empty() ? 0 : layers.back().outputs; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct SgdConfig {
  double learning_rate = 0.01;
  int batch_size = 5;
  int local_epochs = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("sgd.learning_rate must be finite and >= 0");
    }
    if (batch_size < 1) throw ConfigError("sgd.batch_size must be >= 1");
    if (local_epochs < 1) throw ConfigError("sgd.local_epochs must be >= 1");
  }
};

inline std::vector<LayerShape> layer_shapes(const ModelSpec& spec) {
  if (spec.kind == ModelKind::softmax_linear) return {{spec.num_classes, spec.feature_dim}};
  return {{spec.hidden_units, spec.feature_dim}, {spec.num_classes, spec.hidden_units}};
}

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
inline ModelParams init_model(const ModelSpec& spec) {
  spec.validate();
  ModelParams params;
  params.layers = layer_shapes(spec);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerShape& shape = params.layers[l];
    Rng rng(derive_stream(spec.init_seed, "init", {l}));
    const double scale = 1.0 / std::sqrt(static_cast<double>(shape.inputs));
    for (std::size_t i = 0; i < shape.weight_count(); ++i) params.values.push_back(scale * (2.0 * rng.uniform() - 1.0));
    params.values.insert(params.values.end(), shape.outputs, 0.0);
  }
  return params;
}

namespace detail {

/// Per-sample forward/backward workspace.
class Network {
 public:
  explicit Network(const ModelParams& params) : params_(params), activations_(params.layers.size() + 1) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) activations_[l + 1].resize(params.layers[l].outputs);
    offsets_.push_back(0);
    for (const auto& shape : params.layers) offsets_.push_back(offsets_.back() + shape.param_count());
  }

  /// Returns the output logits for one input row.
  std::span<const double> forward(std::span<const double> x) {
    activations_[0].assign(x.begin(), x.end());
    const std::size_t last = params_.layers.size() - 1;
    for (std::size_t l = 0; l <= last; ++l) {
      const LayerShape& shape = params_.layers[l];
      const double* w = params_.values.data() + offsets_[l];
      const double* b = w + shape.weight_count();
      const auto& in = activations_[l];
      auto& out = activations_[l + 1];
      for (int o = 0; o < shape.outputs; ++o) {
        double z = b[o];
        const double* row = w + static_cast<std::size_t>(o) * shape.inputs;
        for (int i = 0; i < shape.inputs; ++i) z += row[i] * in[i];
        out[o] = l == last ? z : std::tanh(z);
      }
    }
    return activations_.back();
  }

  /// Cross-entropy of the last forward pass against `label`; when `grad` is
  /// non-empty, adds `weight` times the parameter gradient to it.
  double backward(int label, std::span<double> grad, double weight) {
    auto& logits = activations_.back();
    const double peak = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - peak);
    const double log_norm = peak + std::log(denom);
    const double loss = log_norm - logits[label];
    if (grad.empty()) return loss;

    delta_.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
      delta_[c] = std::exp(logits[c] - log_norm) - (static_cast<int>(c) == label ? 1.0 : 0.0);
    }
    for (std::size_t l = params_.layers.size(); l-- > 0;) {
      const LayerShape& shape = params_.layers[l];
      const double* w = params_.values.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + shape.weight_count();
      const auto& in = activations_[l];
      for (int o = 0; o < shape.outputs; ++o) {
        const double d = weight * delta_[o];
        double* row = gw + static_cast<std::size_t>(o) * shape.inputs;
        for (int i = 0; i < shape.inputs; ++i) row[i] += d * in[i];
        gb[o] += d;
      }
      if (l == 0) break;
      next_.assign(shape.inputs, 0.0);
      for (int o = 0; o < shape.outputs; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * shape.inputs;
        for (int i = 0; i < shape.inputs; ++i) next_[i] += row[i] * delta_[o];
      }
      for (int i = 0; i < shape.inputs; ++i) next_[i] *= 1.0 - in[i] * in[i];
      delta_.swap(next_);
    }
    return loss;
  }

 private:
  const ModelParams& params_;
  std::vector<std::vector<double>> activations_;
  std::vector<std::size_t> offsets_;
  std::vector<double> delta_;
  std::vector<double> next_;
};

inline void check_compatible(const ModelParams& params, const Dataset& data) {
  if (params.layers.empty()) throw std::invalid_argument("model has no layers");
  if (params.input_dim() != data.feature_dim() || params.output_dim() != data.num_classes()) {
    throw std::invalid_argument("model shape does not match dataset shape");
  }
}

}  // namespace detail

/// Mean cross-entropy over `indices` and its gradient (written to `grad`, which
/// must have params.size() entries).
inline double loss_and_gradient(const ModelParams& params, const Dataset& data, std::span<const std::size_t> indices,
                                std::span<double> grad) {
  detail::check_compatible(params, data);
  std::fill(grad.begin(), grad.end(), 0.0);
  detail::Network net(params);
  const double weight = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) {
    net.forward(data.row(i));
    total += net.backward(data.labels()[i], grad, weight);
  }
  return total / static_cast<double>(indices.size());
}

/// Visiting order of one local epoch. Exposed so that reference trainers can
/// replay the exact schedule.
inline std::vector<std::size_t> batch_order(std::size_t sample_count, std::uint64_t batch_seed, int epoch) {
  Rng rng(derive_stream(batch_seed, "epoch", {static_cast<std::uint64_t>(epoch)}));
  return rng.permutation(sample_count);
}

/// Runs cfg.local_epochs epochs of mini-batch SGD over `data`. Each epoch
/// visits a seeded permutation in consecutive batches of cfg.batch_size; the
/// final short batch is kept and averaged over its own size.
inline ModelParams train_one_client(const ModelParams& params, const Dataset& data, const SgdConfig& cfg,
                                    std::uint64_t batch_seed) {
  cfg.validate();
  detail::check_compatible(params, data);
  ModelParams out = params;
  std::vector<double> grad(out.size());
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto order = batch_order(data.size(), batch_seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = loss_and_gradient(out, data, batch, grad);
      if (!std::isfinite(loss) ||
          !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
        throw TrainingError("non-finite loss or gradient at epoch " + std::to_string(epoch) + ", batch offset " +
                            std::to_string(start) + " (learning rate too large?)");
      }
      for (std::size_t p = 0; p < grad.size(); ++p) out.values[p] -= cfg.learning_rate * grad[p];
    }
  }
  if (!out.all_finite()) throw TrainingError("parameters became non-finite (learning rate too large?)");
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Argmax accuracy (ties go to the lowest class) and mean cross-entropy.
inline Evaluation evaluate(const ModelParams& params, const Dataset& data) {
  detail::check_compatible(params, data);
  detail::Network net(params);
  std::size_t correct = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = net.forward(data.row(i));
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (best == data.labels()[i]) ++correct;
    total += net.backward(data.labels()[i], {}, 0.0);
  }
  return {static_cast<double>(correct) / static_cast<double>(data.size()), total / static_cast<double>(data.size())};
}

/// Unweighted coordinate-wise mean, accumulated in the given order as a
/// running mean (a set of identical models averages to that model exactly).
inline ModelParams average(std::span<const ModelParams> models) {
  if (models.empty()) throw std::invalid_argument("cannot average zero models");
  ModelParams out = models.front();
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (models[m].layers != out.layers) throw std::invalid_argument("cannot average models of different shapes");
    const double count = static_cast<double>(m + 1);
    for (std::size_t p = 0; p < out.size(); ++p) out.values[p] += (models[m].values[p] - out.values[p]) / count;
  }
  return out;
}

}  // namespace fedgsp
