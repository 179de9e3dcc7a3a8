#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tinyguard/model.hpp"

namespace tinyguard {

/// Labeled example matrix. IDX ingestion scales pixel bytes to [0, 1]; the
/// synthetic generator also emits values in [0, 1].
struct Dataset {
  std::vector<double> inputs;
  std::size_t input_dim = 0;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// One client's share of a dataset: unique indices into the parent.
struct Partition {
  int client_id = 0;
  std::vector<std::size_t> example_indices;
};

/// Load an IDX image/label file pair (big-endian, magic 0x00000803 for
/// images and 0x00000801 for labels, unsigned-byte payload).
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Gaussian class-conditional clusters with fixed per-class means, clamped to
/// [0, 1]. Means are drawn deterministically and re-drawn until every pair is
/// at least `separation` noise standard deviations apart.
Dataset generate_synthetic(std::size_t num_examples, std::size_t input_dim,
                           int num_classes, std::uint64_t seed,
                           double separation = 4.0, double noise_sigma = 0.08);

/// Non-IID split: per class, client proportions are drawn from
/// Dirichlet(alpha,...,alpha) and the class's examples are apportioned by
/// largest remainder. Clients left empty receive one example moved from the
/// largest client, so exactly n partitions always come back.
std::vector<Partition> dirichlet_partition(const Dataset& dataset, std::size_t n_clients,
                                           double alpha, std::uint64_t seed);

/// Partition-local label flip y -> C-1-y. The parent dataset is untouched.
std::vector<int> flip_labels(const Dataset& dataset, const Partition& partition);

/// Gather rows into a Batch; label_override (aligned with `indices`) replaces
/// the parent labels when given.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                 const std::vector<int>* label_override = nullptr);

}  // namespace tinyguard
