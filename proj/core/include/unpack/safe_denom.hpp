#pragma once

#include <span>

namespace unpack {

/// sign(sum r) * max(|sum r|, beta * sum |r|); sign(0) is 0, so an all-zero or exactly
/// cancelling list with beta = 0 yields 0 and callers must drop the credit.
double safe_denom(std::span<const double> r, double beta);

/// Same value plus whether the beta floor was the active branch.
struct SafeDenomResult {
  double value = 0.0;
  bool floored = false;
};
SafeDenomResult safe_denom_ex(std::span<const double> r, double beta);

}  // namespace unpack
