#include "tinyguard/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tinyguard/errors.hpp"

namespace tinyguard {

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::tinyguard: return "tinyguard";
    case AggregatorKind::krum: return "krum";
    case AggregatorKind::multikrum: return "multikrum";
    case AggregatorKind::trimmed_mean: return "trimmed_mean";
    case AggregatorKind::coord_median: return "coord_median";
    case AggregatorKind::foolsgold: return "foolsgold";
  }
  return "fedavg";
}

AggregatorKind aggregator_kind_from_string(const std::string& name) {
  if (name == "fedavg") return AggregatorKind::fedavg;
  if (name == "tinyguard") return AggregatorKind::tinyguard;
  if (name == "krum") return AggregatorKind::krum;
  if (name == "multikrum") return AggregatorKind::multikrum;
  if (name == "trimmed_mean") return AggregatorKind::trimmed_mean;
  if (name == "coord_median") return AggregatorKind::coord_median;
  if (name == "foolsgold") return AggregatorKind::foolsgold;
  throw ConfigError("unknown aggregator kind: " + name);
}

GradientUpdate fedavg_mean(const std::vector<GradientUpdate>& gradients,
                           const std::vector<double>* weights) {
  if (gradients.empty()) {
    throw ConfigError("fedavg over an empty update list");
  }
  check_same_shape(gradients);
  if (!weights) {
    std::vector<std::size_t> all(gradients.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return mean_update(gradients, all);
  }
  if (weights->size() != gradients.size()) {
    throw DimensionError("weight count does not match update count");
  }
  double total = 0.0;
  for (double w : *weights) {
    if (w < 0.0) throw ConfigError("fedavg weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) {
    throw ConfigError("fedavg weights sum to zero");
  }
  GradientUpdate out;
  out.layout = gradients.front().layout;
  out.values.assign(out.layout.total_dim(), 0.0);
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    const double w = (*weights)[i];
    for (std::size_t j = 0; j < out.values.size(); ++j) {
      out.values[j] += w * gradients[i].values[j];
    }
  }
  for (auto& v : out.values) v /= total;
  out.client_id = -1;
  return out;
}

std::vector<std::size_t> krum_select(const std::vector<GradientUpdate>& gradients,
                                     int f, int m) {
  const std::size_t n = gradients.size();
  if (f < 0) throw ConfigError("krum byzantine bound must be non-negative");
  if (n < 2 * static_cast<std::size_t>(f) + 3) {
    throw ConfigError("krum requires n >= 2f + 3");
  }
  if (m < 1 || static_cast<std::size_t>(m) > n) {
    throw ConfigError("krum selection count must lie in [1, n]");
  }
  check_same_shape(gradients);

  // Pairwise squared distances (symmetric).
  std::vector<double> dist2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      const auto& a = gradients[i].values;
      const auto& b = gradients[j].values;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double diff = a[c] - b[c];
        acc += diff * diff;
      }
      dist2[i * n + j] = acc;
      dist2[j * n + i] = acc;
    }
  }

  const std::size_t neighbours = n - static_cast<std::size_t>(f) - 2;
  std::vector<double> scores(n, 0.0);
  std::vector<double> row;
  row.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist2[i * n + j]);
    }
    std::sort(row.begin(), row.end());
    double acc = 0.0;
    for (std::size_t k = 0; k < neighbours; ++k) acc += row[k];
    scores[i] = acc;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return gradients[a].client_id < gradients[b].client_id;
  });
  order.resize(static_cast<std::size_t>(m));
  return order;
}

GradientUpdate krum(const std::vector<GradientUpdate>& gradients, int f, int m) {
  auto selected = krum_select(gradients, f, m);
  if (selected.size() == 1) {
    return gradients[selected.front()];
  }
  std::sort(selected.begin(), selected.end());
  return mean_update(gradients, selected);
}

GradientUpdate trimmed_mean(const std::vector<GradientUpdate>& gradients,
                            double trim_fraction) {
  const std::size_t n = gradients.size();
  if (n == 0) throw ConfigError("trimmed mean over an empty update list");
  if (!(trim_fraction >= 0.0) || trim_fraction >= 0.5) {
    throw ConfigError("trim fraction must lie in [0, 0.5)");
  }
  check_same_shape(gradients);
  const auto trim = static_cast<std::size_t>(
      std::floor(trim_fraction * static_cast<double>(n)));
  if (n <= 2 * trim) {
    throw ConfigError("trimming removes every value");
  }

  GradientUpdate out;
  out.layout = gradients.front().layout;
  const std::size_t d = out.layout.total_dim();
  out.values.resize(d);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = gradients[i].values[c];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (std::size_t i = trim; i < n - trim; ++i) acc += column[i];
    out.values[c] = acc / static_cast<double>(n - 2 * trim);
  }
  out.client_id = -1;
  return out;
}

GradientUpdate coord_median(const std::vector<GradientUpdate>& gradients) {
  const std::size_t n = gradients.size();
  if (n == 0) throw ConfigError("median over an empty update list");
  check_same_shape(gradients);

  GradientUpdate out;
  out.layout = gradients.front().layout;
  const std::size_t d = out.layout.total_dim();
  out.values.resize(d);
  const std::size_t mid = (n - 1) / 2;  // lower-middle rule
  std::vector<double> column(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = gradients[i].values[c];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                     column.end());
    out.values[c] = column[mid];
  }
  out.client_id = -1;
  return out;
}

std::vector<double> FoolsGoldState::weights_for(
    const std::vector<GradientUpdate>& gradients) const {
  const std::size_t n = gradients.size();
  if (n == 0) throw ConfigError("foolsgold over an empty update list");
  if (rounds_ == 0 || n == 1) {
    return std::vector<double>(n, 1.0);  // cold start
  }

  std::vector<const std::vector<double>*> hist(n, nullptr);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = sums_.find(gradients[i].client_id);
    if (it != sums_.end()) hist[i] = &it->second;
  }

  // Pairwise cosine similarity of accumulated histories.
  std::vector<double> cs(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sim = 0.0;
      if (hist[i] && hist[j]) sim = cosine_similarity(*hist[i], *hist[j]);
      cs[i * n + j] = sim;
      cs[j * n + i] = sim;
    }
  }

  std::vector<double> maxsim(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double v = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) v = std::max(v, cs[i * n + j]);
    }
    maxsim[i] = v;
  }

  // Pardoning: clients with a low max-similarity get their similarity to
  // high-similarity clients scaled down.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (maxsim[j] > maxsim[i] && maxsim[j] > 0.0) {
        cs[i * n + j] *= maxsim[i] / maxsim[j];
      }
    }
  }

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) v = std::max(v, cs[i * n + j]);
    }
    w[i] = std::clamp(1.0 - v, 0.0, 1.0);
    w[i] = std::max(w[i], 1e-5);  // weight floor
  }

  const double wmax = *std::max_element(w.begin(), w.end());
  for (auto& v : w) v /= wmax;
  for (auto& v : w) {
    if (v == 1.0) v = 0.99;
    v = std::log(v / (1.0 - v)) + 0.5;  // logit sharpening, identity affine
    v = std::clamp(v, 0.0, 1.0);
  }
  return w;
}

void FoolsGoldState::record(const std::vector<GradientUpdate>& gradients) {
  for (const auto& g : gradients) {
    auto& sum = sums_[g.client_id];
    if (sum.empty()) sum.assign(g.values.size(), 0.0);
    if (sum.size() != g.values.size()) {
      throw DimensionError("foolsgold history dimension changed");
    }
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g.values[j];
    if (window_ > 0) {
      auto& dq = recent_[g.client_id];
      dq.push_back(g.values);
      if (dq.size() > window_) {
        const auto& old = dq.front();
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] -= old[j];
        dq.pop_front();
      }
    }
  }
  ++rounds_;
}

std::vector<double> foolsgold_weights(const std::vector<GradientUpdate>& gradients,
                                      const FoolsGoldState& state) {
  return state.weights_for(gradients);
}

GradientUpdate foolsgold(const std::vector<GradientUpdate>& gradients,
                         FoolsGoldState& state) {
  check_same_shape(gradients);
  auto w = state.weights_for(gradients);
  state.record(gradients);
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 1e-12)) {
    // Every weight collapsed; fall back to the plain mean for availability.
    std::vector<std::size_t> all(gradients.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return mean_update(gradients, all);
  }
  return fedavg_mean(gradients, &w);
}

}  // namespace tinyguard
