#pragma once

#include <string>
#include <vector>

#include "tinyguard/update.hpp"

namespace tinyguard {

/// Compact statistical descriptor of one update. Feature order is frozen:
///   [ l2, l1, linf, layer_ratio_1..L, mean, variance, skewness,
///     sparsity, topk_concentration ]
/// so fingerprints stay comparable across rounds and serializable. Length is
/// always L + 8.
struct Fingerprint {
  std::vector<double> features;
  std::size_t layer_count = 0;

  std::size_t dim() const { return features.size(); }
  double l2() const { return features[0]; }
  double l1() const { return features[1]; }
  double linf() const { return features[2]; }
  double layer_ratio(std::size_t l) const { return features[3 + l]; }
  double mean() const { return features[3 + layer_count]; }
  double variance() const { return features[4 + layer_count]; }
  double skewness() const { return features[5 + layer_count]; }
  double sparsity() const { return features[6 + layer_count]; }
  double topk_concentration() const { return features[7 + layer_count]; }
};

struct Norms {
  double l2 = 0.0;
  double l1 = 0.0;
  double linf = 0.0;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // population variance (divide by d)
  double skewness = 0.0;  // 0 when variance < 1e-24
};

/// Fingerprint knobs forwarded by the detector and the adaptive attacker.
struct FingerprintOptions {
  double epsilon = 1e-6;  // sparsity threshold
  std::size_t topk = 0;   // 0 = max(1, ceil(0.01 * d))
};

Norms compute_norms(const GradientUpdate& g);

/// Per-layer L2 mass relative to the full norm. A zero gradient yields all
/// zeros (degenerate contract).
std::vector<double> compute_layer_ratios(const GradientUpdate& g);

Moments compute_moments(const GradientUpdate& g);

/// Fraction of coordinates with |g_j| < epsilon.
double compute_sparsity(const GradientUpdate& g, double epsilon = 1e-6);

/// Sum of the k largest |g_j| over the l1 norm; 0 when the update is all-zero.
double compute_topk_concentration(const GradientUpdate& g, std::size_t k);

std::size_t default_topk(std::size_t dim);

Fingerprint extract_fingerprint(const GradientUpdate& g, double epsilon = 1e-6,
                                std::size_t k = 0);

inline Fingerprint extract_fingerprint(const GradientUpdate& g,
                                       const FingerprintOptions& opts) {
  return extract_fingerprint(g, opts.epsilon, opts.topk);
}

/// CSV row "client_id,f0,...,fm-1" for offline analysis.
std::string fingerprint_csv_row(int client_id, const Fingerprint& fp);

}  // namespace tinyguard
