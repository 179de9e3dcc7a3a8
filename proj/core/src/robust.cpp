#include "tinyguard/robust.hpp"

#include <algorithm>
#include <cmath>

#include "tinyguard/errors.hpp"

namespace tinyguard {

double median_of(std::vector<double> values) {
  if (values.empty()) {
    throw ConfigError("median of an empty set");
  }
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  return values[mid];
}

double mad_of(const std::vector<double>& values) {
  const double med = median_of(values);
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::abs(values[i] - med);
  return median_of(std::move(dev));
}

}  // namespace tinyguard
