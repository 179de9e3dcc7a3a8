#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tinyguard {

struct LayerSlice {
  std::size_t offset = 0;
  std::size_t length = 0;
  bool operator==(const LayerSlice&) const = default;
};

/// Partition of a flat parameter vector into contiguous per-layer slices.
/// Slices start at offset 0, have positive lengths, and tile the vector
/// without gaps or overlap.
class LayerLayout {
 public:
  LayerLayout() = default;
  explicit LayerLayout(std::vector<LayerSlice> slices);

  /// Single-slice layout covering [0, dim).
  static LayerLayout dense(std::size_t dim);

  std::size_t total_dim() const { return total_dim_; }
  std::size_t layer_count() const { return slices_.size(); }
  const std::vector<LayerSlice>& slices() const { return slices_; }

  bool operator==(const LayerLayout&) const = default;

 private:
  std::vector<LayerSlice> slices_;
  std::size_t total_dim_ = 0;
};

/// One client's submitted update: a flat 64-bit vector with its layer layout.
struct GradientUpdate {
  std::vector<double> values;
  LayerLayout layout;
  int client_id = -1;
  std::size_t sample_count = 1;
};

/// View of one layer's slice of an update.
std::span<const double> layer_view(const GradientUpdate& g, std::size_t layer);

bool all_finite(std::span<const double> values);

/// Throws DimensionError unless the update's vector matches its layout.
void check_consistent(const GradientUpdate& g);

/// Throws DimensionError unless all updates share one layout and dimension.
void check_same_shape(const std::vector<GradientUpdate>& gradients);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> values);

/// Cosine similarity with a zero-vector guard (returns 0 if either side is ~0).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Unweighted coordinate mean over the selected subset, summed in ascending
/// index order so independent call sites produce bit-identical results.
GradientUpdate mean_update(const std::vector<GradientUpdate>& gradients,
                           const std::vector<std::size_t>& subset);

}  // namespace tinyguard
