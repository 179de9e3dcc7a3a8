#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <random>

namespace tinyguard {

/// Derive a named sub-seed from a master seed. Used to give every random
/// component (partitioning, init, batching, attacks, ...) its own stream so
/// ablations can vary one without disturbing the others.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

/// Deterministic random source. Wraps std::mt19937_64 (whose output sequence
/// is fixed by the standard) and implements all value transforms by hand so
/// that results are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Marsaglia polar method (one spare cached).
  double normal();

  /// Gamma(shape, 1) via Marsaglia-Tsang, with the alpha < 1 boost.
  double gamma(double shape);

  /// Unbiased integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Dirichlet(alpha, ..., alpha) over k components.
  std::vector<double> dirichlet(double alpha, std::size_t k);

  /// k distinct indices from [0, n), in selection order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tinyguard
