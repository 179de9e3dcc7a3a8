#include "tinyguard/detector.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "tinyguard/errors.hpp"
#include "tinyguard/robust.hpp"

namespace tinyguard {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_equal_feature_dims(const std::vector<Fingerprint>& fps) {
  if (fps.empty()) {
    throw ConfigError("need at least one fingerprint");
  }
  for (const auto& fp : fps) {
    if (fp.dim() != fps.front().dim()) {
      throw DimensionError("fingerprints have mixed feature lengths");
    }
  }
}

}  // namespace

FeatureScaler FeatureScaler::fit(const std::vector<Fingerprint>& fingerprints,
                                 double min_scale) {
  check_equal_feature_dims(fingerprints);
  FeatureScaler sc;
  const std::size_t m = fingerprints.front().dim();
  sc.center_.resize(m);
  sc.scale_.resize(m);
  std::vector<double> column(fingerprints.size());
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
      column[i] = fingerprints[i].features[c];
    }
    sc.center_[c] = median_of(column);
    sc.scale_[c] = mad_of(column);
    if (sc.scale_[c] >= min_scale) sc.kept_.push_back(c);
  }
  return sc;
}

std::vector<double> FeatureScaler::transform(const Fingerprint& fp) const {
  if (fp.dim() != center_.size()) {
    throw DimensionError("fingerprint length does not match the scaler");
  }
  std::vector<double> z(kept_.size());
  for (std::size_t i = 0; i < kept_.size(); ++i) {
    const std::size_t c = kept_[i];
    z[i] = (fp.features[c] - center_[c]) / scale_[c];
  }
  return z;
}

Fingerprint robust_centroid(const std::vector<Fingerprint>& fingerprints) {
  check_equal_feature_dims(fingerprints);
  Fingerprint centroid;
  centroid.layer_count = fingerprints.front().layer_count;
  const std::size_t m = fingerprints.front().dim();
  centroid.features.resize(m);
  std::vector<double> column(fingerprints.size());
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
      column[i] = fingerprints[i].features[c];
    }
    centroid.features[c] = median_of(column);
  }
  return centroid;
}

std::vector<double> anomaly_scores(const std::vector<Fingerprint>& fingerprints,
                                   const Fingerprint& centroid, bool standardize) {
  check_equal_feature_dims(fingerprints);
  if (centroid.dim() != fingerprints.front().dim()) {
    throw DimensionError("centroid length does not match the fingerprints");
  }
  std::vector<double> scores(fingerprints.size());
  if (!standardize) {
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < centroid.dim(); ++c) {
        const double diff = fingerprints[i].features[c] - centroid.features[c];
        acc += diff * diff;
      }
      scores[i] = std::sqrt(acc);
    }
    return scores;
  }
  const FeatureScaler scaler = FeatureScaler::fit(fingerprints);
  const std::vector<double> zc = scaler.transform(centroid);
  for (std::size_t i = 0; i < fingerprints.size(); ++i) {
    const std::vector<double> z = scaler.transform(fingerprints[i]);
    double acc = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double diff = z[c] - zc[c];
      acc += diff * diff;
    }
    scores[i] = std::sqrt(acc);
  }
  return scores;
}

std::vector<double> normalize_scores(const std::vector<double>& raw) {
  if (raw.empty()) {
    throw ConfigError("cannot normalize an empty score list");
  }
  const double med = median_of(raw);
  const double mad = mad_of(raw);
  std::vector<double> out(raw.size(), 0.0);
  if (mad < 1e-12) return out;  // no discriminating signal
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - med) / mad;
  return out;
}

double adaptive_threshold(const std::vector<double>& normalized, double lambda) {
  if (!(lambda > 0.0)) {
    throw ConfigError("threshold sensitivity lambda must be positive");
  }
  return median_of(normalized) + lambda * mad_of(normalized);
}

AggregateOutput tinyguard_aggregate(const std::vector<GradientUpdate>& gradients,
                                    const DetectorConfig& config,
                                    RoundTimings* timings) {
  if (gradients.empty()) {
    throw ConfigError("tinyguard_aggregate needs at least one update");
  }
  if (!(config.lambda > 0.0)) {
    throw ConfigError("detector lambda must be positive");
  }
  check_same_shape(gradients);
  const std::size_t n = gradients.size();

  auto t0 = Clock::now();
  std::vector<Fingerprint> fps;
  fps.reserve(n);
  for (const auto& g : gradients) {
    fps.push_back(extract_fingerprint(g, config.epsilon, config.topk));
  }
  if (timings) timings->extraction_ms = ms_since(t0);

  auto t1 = Clock::now();
  AnomalyReport report;
  report.centroid = robust_centroid(fps);
  report.raw_scores = anomaly_scores(fps, report.centroid, config.standardize_features);
  report.normalized_scores = normalize_scores(report.raw_scores);
  report.threshold = adaptive_threshold(report.normalized_scores, config.lambda);

  std::vector<std::size_t> trusted;
  std::vector<std::size_t> flagged_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (report.normalized_scores[i] > report.threshold) {
      flagged_idx.push_back(i);
    } else {
      trusted.push_back(i);
    }
  }
  if (flagged_idx.size() == n) {
    // Pathological input: never hand back an empty aggregate.
    trusted.resize(n);
    std::iota(trusted.begin(), trusted.end(), std::size_t{0});
    flagged_idx.clear();
  }
  for (std::size_t i : flagged_idx) report.flagged.push_back(gradients[i].client_id);
  if (timings) timings->scoring_ms = ms_since(t1);

  auto t2 = Clock::now();
  AggregateOutput out;
  out.aggregate = mean_update(gradients, trusted);
  out.aggregate.sample_count = trusted.size();
  out.report = std::move(report);
  if (timings) timings->aggregation_ms = ms_since(t2);
  return out;
}

std::string anomaly_report_json(const AnomalyReport& report, int round) {
  nlohmann::ordered_json j;
  if (round >= 0) j["round"] = round;
  j["threshold"] = report.threshold;
  j["raw_scores"] = report.raw_scores;
  j["normalized_scores"] = report.normalized_scores;
  j["flagged"] = report.flagged;
  return j.dump();
}

}  // namespace tinyguard
