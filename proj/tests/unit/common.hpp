#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "unpack/forward.hpp"
#include "unpack/toy_model.hpp"

namespace unpack::test {

inline std::filesystem::path fixture_dir() { return UNPACK_TEST_FIXTURES; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("unpack_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// |a - b| <= tol * max(scale, |b|)
inline ::testing::AssertionResult close(double a, double b, double tol, double scale = 0.0) {
  const double lim = tol * std::max(scale, std::abs(b));
  if (std::abs(a - b) <= lim) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure() << a << " vs " << b << " (diff " << std::abs(a - b) << " > " << lim << ")";
}

struct Shape {
  int layers;
  BlockLayout layout;
  bool rotary;
};

inline std::string shape_name(const ::testing::TestParamInfo<Shape>& info) {
  return "L" + std::to_string(info.param.layers) +
         (info.param.layout == BlockLayout::parallel ? "_parallel" : "_sequential") +
         (info.param.rotary ? "_rotary" : "_learned");
}

inline const std::vector<Shape>& all_shapes() {
  static const std::vector<Shape> s{{2, BlockLayout::sequential, false}, {2, BlockLayout::sequential, true},
                                    {2, BlockLayout::parallel, false},   {2, BlockLayout::parallel, true},
                                    {3, BlockLayout::sequential, false}, {3, BlockLayout::parallel, true}};
  return s;
}

/// LayerNorm of a raw residual row, computed directly in double.
inline VecD layer_norm(const VecD& x, const VecD& w, const VecD& b, double eps) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  return ((x.array() - mu) / std::sqrt(var + eps) * w.array() + b.array()).matrix();
}

}  // namespace unpack::test
