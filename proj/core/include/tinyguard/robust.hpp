#pragma once

#include <vector>

namespace tinyguard {

/// Median with the lower-middle convention: the element at sorted index
/// (n-1)/2. For even n this is the lower of the two middle order statistics,
/// fixed so every consumer (centroid, scores, MAD) agrees bit-for-bit.
double median_of(std::vector<double> values);

/// Median absolute deviation about the lower-middle median. No consistency
/// constant is applied; callers work on the raw MAD scale.
double mad_of(const std::vector<double>& values);

}  // namespace tinyguard
