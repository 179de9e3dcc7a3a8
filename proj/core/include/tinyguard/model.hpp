#pragma once

#include <cstdint>
#include <vector>

#include "tinyguard/update.hpp"

namespace tinyguard {

/// Dense example matrix (row-major) with integer class labels.
struct Batch {
  std::vector<double> inputs;
  std::size_t input_dim = 0;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * input_dim, input_dim};
  }
};

/// Flat parameter vector of a feedforward ReLU network with a softmax
/// cross-entropy head. `widths` holds [input, hidden..., output]; the layout
/// has one slice per weight matrix and one per bias vector, in layer order.
struct ModelParams {
  std::vector<double> values;
  LayerLayout layout;
  std::vector<std::size_t> widths;
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Deterministic initialization: weights from a fixed-variance symmetric
/// normal (std 0.1), biases zero. Requires at least [input, output] widths.
ModelParams init_params(const std::vector<std::size_t>& widths, std::uint64_t seed);

/// Mean cross-entropy gradient over the batch, flattened in layout order.
GradientUpdate compute_gradient(const ModelParams& params, const Batch& batch);

/// w' = w - eta * g, element-wise and exact.
ModelParams apply_update(const ModelParams& params, const GradientUpdate& aggregate,
                         double eta);

/// Argmax accuracy (first index wins ties) and mean cross-entropy loss.
Evaluation evaluate(const ModelParams& params, const Batch& dataset);

}  // namespace tinyguard
