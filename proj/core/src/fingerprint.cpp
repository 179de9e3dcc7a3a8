#include "tinyguard/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tinyguard/errors.hpp"

namespace tinyguard {

Norms compute_norms(const GradientUpdate& g) {
  check_consistent(g);
  Norms n;
  double sq = 0.0;
  for (double v : g.values) {
    sq += v * v;
    n.l1 += std::abs(v);
    n.linf = std::max(n.linf, std::abs(v));
  }
  n.l2 = std::sqrt(sq);
  return n;
}

std::vector<double> compute_layer_ratios(const GradientUpdate& g) {
  check_consistent(g);
  const std::size_t layers = g.layout.layer_count();
  std::vector<double> ratios(layers, 0.0);
  double total_sq = 0.0;
  std::vector<double> layer_sq(layers, 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    for (double v : layer_view(g, l)) layer_sq[l] += v * v;
    total_sq += layer_sq[l];
  }
  const double total = std::sqrt(total_sq);
  if (total == 0.0) return ratios;  // degenerate: all zeros
  for (std::size_t l = 0; l < layers; ++l) {
    ratios[l] = std::sqrt(layer_sq[l]) / total;
  }
  return ratios;
}

Moments compute_moments(const GradientUpdate& g) {
  check_consistent(g);
  const std::size_t d = g.values.size();
  if (d == 0) throw ConfigError("moments of an empty vector");
  Moments m;
  for (double v : g.values) m.mean += v;
  m.mean /= static_cast<double>(d);
  double m2 = 0.0, m3 = 0.0;
  for (double v : g.values) {
    const double c = v - m.mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m.variance = m2 / static_cast<double>(d);
  if (m.variance < 1e-24) {
    m.skewness = 0.0;  // constant vector guard
  } else {
    const double sigma3 = std::pow(m.variance, 1.5);
    m.skewness = m3 / (static_cast<double>(d) * sigma3);
  }
  return m;
}

double compute_sparsity(const GradientUpdate& g, double epsilon) {
  check_consistent(g);
  if (!(epsilon > 0.0)) throw ConfigError("sparsity threshold must be positive");
  std::size_t below = 0;
  for (double v : g.values) {
    if (std::abs(v) < epsilon) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(g.values.size());
}

std::size_t default_topk(std::size_t dim) {
  const auto k = static_cast<std::size_t>(
      std::ceil(0.01 * static_cast<double>(dim)));
  return std::max<std::size_t>(1, k);
}

double compute_topk_concentration(const GradientUpdate& g, std::size_t k) {
  check_consistent(g);
  const std::size_t d = g.values.size();
  if (k < 1 || k > d) {
    throw ConfigError("top-k count must lie in [1, d]");
  }
  double l1 = 0.0;
  std::vector<double> mags(d);
  for (std::size_t i = 0; i < d; ++i) {
    mags[i] = std::abs(g.values[i]);
    l1 += mags[i];
  }
  if (l1 == 0.0) return 0.0;  // degenerate contract
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   mags.end(), std::greater<double>());
  double top = 0.0;
  for (std::size_t i = 0; i < k; ++i) top += mags[i];
  return top / l1;
}

Fingerprint extract_fingerprint(const GradientUpdate& g, double epsilon, std::size_t k) {
  check_consistent(g);
  const std::size_t d = g.layout.total_dim();
  if (d == 0) throw ConfigError("cannot fingerprint an empty update");
  if (k == 0) k = default_topk(d);

  const Norms n = compute_norms(g);
  const auto ratios = compute_layer_ratios(g);
  const Moments m = compute_moments(g);
  const double rho = compute_sparsity(g, epsilon);
  const double tau = compute_topk_concentration(g, k);

  Fingerprint fp;
  fp.layer_count = g.layout.layer_count();
  fp.features.reserve(fp.layer_count + 8);
  fp.features.push_back(n.l2);
  fp.features.push_back(n.l1);
  fp.features.push_back(n.linf);
  fp.features.insert(fp.features.end(), ratios.begin(), ratios.end());
  fp.features.push_back(m.mean);
  fp.features.push_back(m.variance);
  fp.features.push_back(m.skewness);
  fp.features.push_back(rho);
  fp.features.push_back(tau);
  return fp;
}

std::string fingerprint_csv_row(int client_id, const Fingerprint& fp) {
  std::string row = std::to_string(client_id);
  char buf[40];
  for (double f : fp.features) {
    std::snprintf(buf, sizeof(buf), ",%.17g", f);
    row += buf;
  }
  return row;
}

}  // namespace tinyguard
