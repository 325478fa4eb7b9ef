#include <random>

#include <gtest/gtest.h>

#include "unpack/safe_denom.hpp"

using unpack::safe_denom;
using unpack::safe_denom_ex;

TEST(SafeDenom, Examples) {
  EXPECT_DOUBLE_EQ(safe_denom(std::vector<double>{2, 1}, 0.8), 3.0);
  EXPECT_NEAR(safe_denom(std::vector<double>{1.0, -0.9}, 0.8), 1.52, 1e-12);
  EXPECT_DOUBLE_EQ(safe_denom(std::vector<double>{-1, -1}, 0.8), -2.0);
  EXPECT_EQ(safe_denom(std::vector<double>{0, 0, 0}, 0.8), 0.0);
  EXPECT_EQ(safe_denom(std::vector<double>{}, 0.8), 0.0);
  EXPECT_EQ(safe_denom(std::vector<double>{1, -1}, 0.0), 0.0);
  EXPECT_NEAR(safe_denom(std::vector<double>{-1.0, 0.9}, 0.8), -1.52, 1e-12);
}

TEST(SafeDenom, FlooredFlag) {
  EXPECT_FALSE(safe_denom_ex(std::vector<double>{2, 1}, 0.8).floored);
  EXPECT_TRUE(safe_denom_ex(std::vector<double>{1.0, -0.9}, 0.8).floored);
}

TEST(SafeDenom, ShareBoundAndPlainSumAgreement) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  const std::vector<double> betas{0.05, 0.1, 0.2, 0.5, 0.8, 1.0, 1.5, 2.0};
  for (int t = 0; t < 100000; ++t) {
    std::vector<double> r(1 + rng() % 12);
    for (double& v : r) v = g(rng) * (rng() % 4 == 0 ? 10.0 : 1.0);
    const double beta = betas[t % betas.size()];
    double sum = 0, mass = 0;
    for (double v : r) sum += v, mass += std::abs(v);
    const double d = safe_denom(r, beta);
    ASSERT_NE(d, 0.0);
    double share = 0;
    for (double v : r) share += std::abs(v / d);
    ASSERT_LE(share, 1.0 / beta * (1 + 1e-12));
    if (std::abs(sum) >= beta * mass) ASSERT_EQ(d, sum);
  }
}
