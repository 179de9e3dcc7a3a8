#include "tinyguard/rng.hpp"

#include <cmath>
#include <numeric>

#include "tinyguard/errors.hpp"

namespace tinyguard {

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  // FNV-1a over the tag, then a splitmix64 finalizer mixed with the master.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) {
    throw ConfigError("gamma shape must be positive");
  }
  if (shape < 1.0) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) {
    throw ConfigError("Rng::below requires n > 0");
  }
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  // Reject the partial block at the top of the range to stay unbiased.
  const std::uint64_t rem = (UINT64_MAX % un + 1) % un;
  const std::uint64_t limit = UINT64_MAX - rem;
  std::uint64_t x = next_u64();
  while (rem != 0 && x > limit) x = next_u64();
  return static_cast<std::size_t>(x % un);
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
  if (!(alpha > 0.0)) {
    throw ConfigError("dirichlet concentration must be positive");
  }
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& x : p) {
    x = gamma(alpha);
    total += x;
  }
  if (!(total > 0.0)) {
    // All draws underflowed; fall back to the uniform simplex point.
    for (auto& x : p) x = 1.0 / static_cast<double>(k);
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) {
    throw ConfigError("cannot sample more items than the population holds");
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + below(n - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace tinyguard
