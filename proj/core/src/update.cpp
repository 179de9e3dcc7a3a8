#include "tinyguard/update.hpp"

#include <cmath>

#include "tinyguard/errors.hpp"

namespace tinyguard {

LayerLayout::LayerLayout(std::vector<LayerSlice> slices) : slices_(std::move(slices)) {
  if (slices_.empty()) {
    throw DimensionError("layout needs at least one layer slice");
  }
  std::size_t expected_offset = 0;
  for (const auto& s : slices_) {
    if (s.length == 0) {
      throw DimensionError("layout slice lengths must be positive");
    }
    if (s.offset != expected_offset) {
      throw DimensionError("layout slices must be contiguous from offset 0");
    }
    expected_offset += s.length;
  }
  total_dim_ = expected_offset;
}

LayerLayout LayerLayout::dense(std::size_t dim) {
  return LayerLayout({{0, dim}});
}

std::span<const double> layer_view(const GradientUpdate& g, std::size_t layer) {
  const auto& s = g.layout.slices().at(layer);
  return {g.values.data() + s.offset, s.length};
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_consistent(const GradientUpdate& g) {
  if (g.values.size() != g.layout.total_dim()) {
    throw DimensionError("update vector length does not match its layout");
  }
}

void check_same_shape(const std::vector<GradientUpdate>& gradients) {
  if (gradients.empty()) return;
  check_consistent(gradients.front());
  for (std::size_t i = 1; i < gradients.size(); ++i) {
    check_consistent(gradients[i]);
    if (!(gradients[i].layout == gradients.front().layout)) {
      throw DimensionError("updates must share one layer layout");
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot product requires equal lengths");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot(a, b) / (na * nb);
}

GradientUpdate mean_update(const std::vector<GradientUpdate>& gradients,
                           const std::vector<std::size_t>& subset) {
  if (gradients.empty() || subset.empty()) {
    throw ConfigError("mean over an empty update set");
  }
  check_same_shape(gradients);
  GradientUpdate out;
  out.layout = gradients.front().layout;
  out.values.assign(out.layout.total_dim(), 0.0);
  std::size_t samples = 0;
  for (std::size_t idx : subset) {
    const auto& g = gradients.at(idx);
    for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] += g.values[j];
    samples += g.sample_count;
  }
  const double inv = 1.0 / static_cast<double>(subset.size());
  for (auto& v : out.values) v *= inv;
  out.client_id = -1;
  out.sample_count = samples > 0 ? samples : 1;
  return out;
}

}  // namespace tinyguard
