#pragma once

#include <string>
#include <vector>

#include "tinyguard/fingerprint.hpp"
#include "tinyguard/update.hpp"

namespace tinyguard {

struct DetectorConfig {
  double lambda = 2.5;               // threshold sensitivity, must be > 0
  bool standardize_features = true;  // per-feature median/MAD rescale before scoring
  double epsilon = 1e-6;             // forwarded to fingerprint extraction
  std::size_t topk = 0;              // forwarded; 0 = auto

  bool operator==(const DetectorConfig&) const = default;
};

/// Per-feature robust standardization: (x - column median) / column MAD.
/// Columns whose MAD falls below min_scale carry no spread and are dropped
/// from distance computations.
class FeatureScaler {
 public:
  static FeatureScaler fit(const std::vector<Fingerprint>& fingerprints,
                           double min_scale = 1e-12);

  /// Standardized coordinates of the kept columns only.
  std::vector<double> transform(const Fingerprint& fp) const;

  const std::vector<std::size_t>& kept_columns() const { return kept_; }
  std::size_t input_dim() const { return center_.size(); }

 private:
  std::vector<double> center_;
  std::vector<double> scale_;
  std::vector<std::size_t> kept_;
};

/// One round's detection outcome.
struct AnomalyReport {
  std::vector<double> raw_scores;         // s_i, aligned with the input order
  std::vector<double> normalized_scores;  // s~_i
  double threshold = 0.0;                 // tau
  std::vector<int> flagged;               // client ids with s~_i > tau
  Fingerprint centroid;
};

/// Coordinate-wise median of the fingerprints (lower-middle rule for even n).
Fingerprint robust_centroid(const std::vector<Fingerprint>& fingerprints);

/// Euclidean distance to the centroid. With standardize=true both the
/// fingerprints and the centroid are first rescaled per feature column by
/// (x - median) / MAD, fitted on the given fingerprints.
std::vector<double> anomaly_scores(const std::vector<Fingerprint>& fingerprints,
                                   const Fingerprint& centroid, bool standardize);

/// s~_i = (s_i - median(s)) / MAD(s); all zeros when MAD(s) < 1e-12.
std::vector<double> normalize_scores(const std::vector<double>& raw);

/// tau = median(s~) + lambda * MAD(s~).
double adaptive_threshold(const std::vector<double>& normalized, double lambda);

struct RoundTimings {
  double extraction_ms = 0.0;
  double scoring_ms = 0.0;
  double aggregation_ms = 0.0;
  double local_training_ms = 0.0;
};

struct AggregateOutput {
  GradientUpdate aggregate;
  AnomalyReport report;
};

/// Full pipeline: fingerprints, robust scoring, adaptive threshold, and the
/// unweighted mean over the trusted set. If every client would be flagged the
/// detector flags none instead (the aggregate must never be empty).
AggregateOutput tinyguard_aggregate(const std::vector<GradientUpdate>& gradients,
                                    const DetectorConfig& config = {},
                                    RoundTimings* timings = nullptr);

/// Audit record for one round: scores, threshold, flagged ids.
std::string anomaly_report_json(const AnomalyReport& report, int round = -1);

}  // namespace tinyguard
