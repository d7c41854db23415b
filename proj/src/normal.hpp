#pragma once

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <cstdint>
#include <random>

#include "errors.hpp"

namespace eqcon {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);  // 1/sqrt(2)
}

// Inverse of the standard normal distribution function, p in (0, 1).
//
// Routed through erfc_inv so both tails keep full relative accuracy; the
// 1 - p in the upper branch is exact for p >= 0.5 (Sterbenz), so
// normal_quantile(1 - p) == -normal_quantile(p) whenever 1 - p is exact.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw_invalid("normal_quantile requires p in the open interval (0, 1)");
  }
  constexpr double sqrt2 = 1.41421356237309504880;
  if (p < 0.5) {
    return -sqrt2 * boost::math::erfc_inv(2.0 * p);
  }
  return sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

// Uniform draw on the open interval (0, 1): 53-bit mantissa offset by half an
// ulp so 0 and 1 are unreachable and the value survives a quantile transform.
inline double uniform_open01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draw by inversion. Slower than Box-Muller but consumes a
// fixed number of engine words per draw, which keeps replications and
// thread counts from changing the stream layout.
inline double normal_draw(std::mt19937_64& rng) {
  return normal_quantile(uniform_open01(rng));
}

}  // namespace eqcon
