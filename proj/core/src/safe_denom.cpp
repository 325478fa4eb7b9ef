#include "unpack/safe_denom.hpp"

#include <cmath>

namespace unpack {

SafeDenomResult safe_denom_ex(std::span<const double> r, double beta) {
  double sum = 0.0, mass = 0.0;
  for (double v : r) {
    sum += v;
    mass += std::abs(v);
  }
  const double floor = beta * mass;
  const double sign = sum > 0.0 ? 1.0 : (sum < 0.0 ? -1.0 : 0.0);
  if (std::abs(sum) >= floor) return {sum, false};
  return {sign * floor, true};
}

double safe_denom(std::span<const double> r, double beta) { return safe_denom_ex(r, beta).value; }

}  // namespace unpack
