#pragma once

#include <cmath>
#include <vector>

#include "aerotrack/common.hpp"

namespace aerotrack {

/// C(n,i) t^i (1-t)^(n-i).
inline double bernstein(int n, int i, double t) {
  if (n < 0 || i < 0 || i > n)
    throw IndexOutOfRange("bernstein index " + std::to_string(i) + " outside [0," +
                          std::to_string(n) + "]");
  return binomial(n, i) * std::pow(t, i) * std::pow(1.0 - t, n - i);
}

/// Control points of the derivative curve, d_i = n (c_{i+1} - c_i) / scale,
/// where `scale` maps curve time to the normalized parameter.
template <typename Point>
std::vector<Point> hodograph(const std::vector<Point>& cp, double scale) {
  const int n = static_cast<int>(cp.size()) - 1;
  if (n < 1) throw IndexOutOfRange("hodograph needs degree >= 1");
  std::vector<Point> d;
  d.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d.push_back(n * (cp[i + 1] - cp[i]) / scale);
  return d;
}

/// de Casteljau evaluation at normalized parameter s in [0,1].
template <typename Point>
Point de_casteljau(std::vector<Point> cp, double s) {
  for (std::size_t level = cp.size(); level > 1; --level)
    for (std::size_t i = 0; i + 1 < level; ++i) cp[i] = (1.0 - s) * cp[i] + s * cp[i + 1];
  return cp.front();
}

}  // namespace aerotrack
