#include "tinyguard/model.hpp"

#include <algorithm>
#include <cmath>

#include "tinyguard/errors.hpp"
#include "tinyguard/rng.hpp"

namespace tinyguard {

namespace {

constexpr double kInitStd = 0.1;

struct Shape {
  std::size_t affine_layers;             // number of weight/bias pairs
  const std::vector<std::size_t>& widths;

  std::size_t weight_slice(std::size_t l) const { return 2 * l; }      // l in [0, K)
  std::size_t bias_slice(std::size_t l) const { return 2 * l + 1; }
};

Shape shape_of(const ModelParams& p) {
  if (p.widths.size() < 2) {
    throw ConfigError("model requires at least input and output widths");
  }
  return Shape{p.widths.size() - 1, p.widths};
}

const double* slice_ptr(const ModelParams& p, std::size_t slice) {
  return p.values.data() + p.layout.slices().at(slice).offset;
}

void check_batch(const ModelParams& p, const Batch& batch) {
  if (batch.input_dim != p.widths.front()) {
    throw DimensionError("batch input width does not match the model");
  }
  if (batch.inputs.size() != batch.input_dim * batch.labels.size()) {
    throw DimensionError("batch inputs and labels disagree on example count");
  }
  const int classes = static_cast<int>(p.widths.back());
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) {
      throw ConfigError("label outside the model's class range");
    }
  }
}

// Forward pass for one example; fills activations (post-ReLU) and logits.
// acts[l] has width widths[l]; acts[0] aliases nothing (copied input).
void forward(const ModelParams& p, const Shape& shape, std::span<const double> x,
             std::vector<std::vector<double>>& acts) {
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < shape.affine_layers; ++l) {
    const std::size_t in_w = shape.widths[l];
    const std::size_t out_w = shape.widths[l + 1];
    const double* w = slice_ptr(p, shape.weight_slice(l));
    const double* b = slice_ptr(p, shape.bias_slice(l));
    auto& out = acts[l + 1];
    out.assign(b, b + out_w);
    const auto& in = acts[l];
    for (std::size_t j = 0; j < in_w; ++j) {
      const double aj = in[j];
      if (aj == 0.0) continue;
      const double* wrow = w + j * out_w;
      for (std::size_t k = 0; k < out_w; ++k) out[k] += aj * wrow[k];
    }
    if (l + 1 < shape.affine_layers) {
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
    }
  }
}

// Log-sum-exp over logits, max-subtracted.
double log_sum_exp(const std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - zmax);
  return zmax + std::log(acc);
}

}  // namespace

ModelParams init_params(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.empty()) {
    throw ConfigError("model width list is empty");
  }
  if (widths.size() < 2) {
    throw ConfigError("model requires at least input and output widths");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("model widths must be positive");
  }

  std::vector<LayerSlice> slices;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    slices.push_back({offset, widths[l] * widths[l + 1]});
    offset += widths[l] * widths[l + 1];
    slices.push_back({offset, widths[l + 1]});
    offset += widths[l + 1];
  }

  ModelParams p;
  p.layout = LayerLayout(std::move(slices));
  p.widths = widths;
  p.values.assign(p.layout.total_dim(), 0.0);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto& ws = p.layout.slices()[2 * l];
    for (std::size_t i = 0; i < ws.length; ++i) {
      p.values[ws.offset + i] = kInitStd * rng.normal();
    }
    // Bias slices stay zero.
  }
  return p;
}

GradientUpdate compute_gradient(const ModelParams& params, const Batch& batch) {
  const Shape shape = shape_of(params);
  check_batch(params, batch);
  if (batch.size() == 0) {
    throw ConfigError("gradient of an empty batch");
  }
  if (!all_finite(batch.inputs)) {
    throw NumericError("batch inputs contain non-finite values");
  }

  GradientUpdate g;
  g.layout = params.layout;
  g.values.assign(params.layout.total_dim(), 0.0);

  std::vector<std::vector<double>> acts(shape.affine_layers + 1);
  std::vector<std::vector<double>> delta(shape.affine_layers + 1);
  std::vector<double> probs;

  for (std::size_t e = 0; e < batch.size(); ++e) {
    forward(params, shape, batch.row(e), acts);
    const auto& logits = acts[shape.affine_layers];
    const double lse = log_sum_exp(logits);
    probs.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) probs[k] = std::exp(logits[k] - lse);

    auto& dout = delta[shape.affine_layers];
    dout = probs;
    dout[static_cast<std::size_t>(batch.labels[e])] -= 1.0;

    for (std::size_t l = shape.affine_layers; l-- > 0;) {
      const std::size_t in_w = shape.widths[l];
      const std::size_t out_w = shape.widths[l + 1];
      const auto& d = delta[l + 1];
      const auto& a = acts[l];
      double* gw = g.values.data() + params.layout.slices()[shape.weight_slice(l)].offset;
      double* gb = g.values.data() + params.layout.slices()[shape.bias_slice(l)].offset;
      for (std::size_t j = 0; j < in_w; ++j) {
        const double aj = a[j];
        if (aj != 0.0) {
          double* grow = gw + j * out_w;
          for (std::size_t k = 0; k < out_w; ++k) grow[k] += aj * d[k];
        }
      }
      for (std::size_t k = 0; k < out_w; ++k) gb[k] += d[k];
      if (l > 0) {
        const double* w = slice_ptr(params, shape.weight_slice(l));
        auto& dprev = delta[l];
        dprev.assign(in_w, 0.0);
        for (std::size_t j = 0; j < in_w; ++j) {
          if (a[j] > 0.0) {  // ReLU gate: activation positive iff pre-activation positive
            const double* wrow = w + j * out_w;
            double acc = 0.0;
            for (std::size_t k = 0; k < out_w; ++k) acc += wrow[k] * d[k];
            dprev[j] = acc;
          }
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& v : g.values) v *= inv;
  g.client_id = -1;
  g.sample_count = batch.size();
  return g;
}

ModelParams apply_update(const ModelParams& params, const GradientUpdate& aggregate,
                         double eta) {
  check_consistent(aggregate);
  if (!(params.layout == aggregate.layout) ||
      params.values.size() != aggregate.values.size()) {
    throw DimensionError("update layout does not match the model parameters");
  }
  ModelParams next = params;
  for (std::size_t i = 0; i < next.values.size(); ++i) {
    next.values[i] = params.values[i] - eta * aggregate.values[i];
  }
  return next;
}

Evaluation evaluate(const ModelParams& params, const Batch& dataset) {
  const Shape shape = shape_of(params);
  check_batch(params, dataset);
  if (dataset.size() == 0) {
    throw ConfigError("evaluation dataset is empty");
  }

  std::vector<std::vector<double>> acts(shape.affine_layers + 1);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    forward(params, shape, dataset.row(e), acts);
    const auto& logits = acts[shape.affine_layers];
    const double lse = log_sum_exp(logits);
    loss += lse - logits[static_cast<std::size_t>(dataset.labels[e])];
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == static_cast<std::size_t>(dataset.labels[e])) ++correct;
  }
  Evaluation ev;
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  ev.mean_loss = loss / static_cast<double>(dataset.size());
  return ev;
}

}  // namespace tinyguard
