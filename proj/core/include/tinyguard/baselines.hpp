#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "tinyguard/update.hpp"

namespace tinyguard {

enum class AggregatorKind {
  fedavg,
  tinyguard,
  krum,
  multikrum,
  trimmed_mean,
  coord_median,
  foolsgold,
};

std::string to_string(AggregatorKind kind);
AggregatorKind aggregator_kind_from_string(const std::string& name);

struct AggregatorChoice {
  AggregatorKind kind = AggregatorKind::fedavg;
  int krum_f = -1;              // -1: auto ceil(0.2 * n)
  int multikrum_m = -1;         // -1: auto n - f
  double trim_fraction = 0.2;   // per-side fraction, in [0, 0.5)
  std::size_t foolsgold_window = 0;  // 0: unbounded history
  bool sample_weighted = false;      // fedavg only

  bool operator==(const AggregatorChoice&) const = default;
};

/// Weighted (or unweighted) coordinate mean. Weights are typically sample
/// counts; their number must match the update count.
GradientUpdate fedavg_mean(const std::vector<GradientUpdate>& gradients,
                           const std::vector<double>* weights = nullptr);

/// Krum selection order: each client is scored by the sum of squared L2
/// distances to its n-f-2 nearest neighbours (itself excluded); indices come
/// back sorted by ascending score, ties broken by lower client_id. Requires
/// n >= 2f + 3.
std::vector<std::size_t> krum_select(const std::vector<GradientUpdate>& gradients,
                                     int f, int m);

/// m = 1: the minimizer's own update. m > 1 (Multi-Krum): unweighted mean of
/// the m best-scoring clients.
GradientUpdate krum(const std::vector<GradientUpdate>& gradients, int f, int m = 1);

/// Per coordinate: drop the floor(b*n) smallest and largest values, average
/// the rest. b in [0, 0.5).
GradientUpdate trimmed_mean(const std::vector<GradientUpdate>& gradients,
                            double trim_fraction);

/// Per-coordinate median with the same lower-middle rule as the detector.
GradientUpdate coord_median(const std::vector<GradientUpdate>& gradients);

/// Per-client accumulated update history for FoolsGold. Weights are computed
/// from the history as it stood before the current round, so the very first
/// round is uniform (cold start); the history is updated afterwards.
class FoolsGoldState {
 public:
  explicit FoolsGoldState(std::size_t window = 0) : window_(window) {}

  std::vector<double> weights_for(const std::vector<GradientUpdate>& gradients) const;
  void record(const std::vector<GradientUpdate>& gradients);
  std::size_t rounds_seen() const { return rounds_; }

 private:
  std::size_t window_ = 0;
  std::size_t rounds_ = 0;
  std::unordered_map<int, std::vector<double>> sums_;
  std::unordered_map<int, std::deque<std::vector<double>>> recent_;
};

/// FoolsGold weighting: pairwise cosine similarity of accumulated histories,
/// pardoning rescale, 1 - max-similarity weights with a 1e-5 floor, logit
/// sharpening clipped to [0, 1], then the weighted mean. Updates the history.
GradientUpdate foolsgold(const std::vector<GradientUpdate>& gradients,
                         FoolsGoldState& state);

/// The weight vector FoolsGold would use this round (no history update).
std::vector<double> foolsgold_weights(const std::vector<GradientUpdate>& gradients,
                                      const FoolsGoldState& state);

}  // namespace tinyguard
