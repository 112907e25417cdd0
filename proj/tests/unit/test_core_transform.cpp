#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "fst/core_transform.hpp"

namespace {

using namespace fst;

// Root of r/q - (1-r)/(1-q) - mu = 0 by bisection; the left side is
// strictly decreasing in q on (0,1).
double stationary_score(double mu, double r) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double q = 0.5 * (lo + hi);
    const double f = r / q - (1.0 - r) / (1.0 - q) - mu;
    (f > 0.0 ? lo : hi) = q;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> mu_grid() {
  std::vector<double> g;
  for (int i = 0; i < 20; ++i) g.push_back(-20.0 + 40.0 * i / 19.0);
  return g;
}

std::vector<double> r_grid() {
  std::vector<double> g;
  for (int i = 0; i < 20; ++i) g.push_back(0.01 + 0.98 * i / 19.0);
  return g;
}

TEST(BinaryCrossEntropy, UniformIsLog2) {
  EXPECT_NEAR(binary_cross_entropy(0.5, 0.5), std::numbers::ln2, 1e-15);
}

TEST(BinaryCrossEntropy, PerfectPredictionIsZeroUpToClamp) {
  // q = 1 is clamped to 1 - 1e-6, leaving -log(1 - 1e-6) ~ 1e-6.
  EXPECT_NEAR(binary_cross_entropy(1.0, 1.0), 0.0, 2e-6);
  EXPECT_NEAR(binary_cross_entropy(0.0, 0.0), 0.0, 2e-6);
}

TEST(BinaryCrossEntropy, HalfAgainstTransformedHalf) {
  // -0.5 log(q) - 0.5 log(1 - q) at q = 0.292893, evaluated in high precision.
  EXPECT_NEAR(binary_cross_entropy(0.5, 0.292893), 0.787260603, 1e-8);
}

TEST(BinaryCrossEntropy, RejectsOutOfRange) {
  EXPECT_THROW(binary_cross_entropy(1.5, 0.5), std::invalid_argument);
  EXPECT_THROW(binary_cross_entropy(0.5, -0.1), std::invalid_argument);
}

TEST(TransformScore, ZeroMultiplierIsIdentity) {
  EXPECT_DOUBLE_EQ(transform_score(0.0, 0.7), 0.7);
}

TEST(TransformScore, MatchesStationaryRoot) {
  EXPECT_NEAR(transform_score(1.0, 0.5), (2.0 - std::sqrt(2.0)) / 2.0, 1e-12);
  EXPECT_NEAR(transform_score(1.0, 0.5), stationary_score(1.0, 0.5), 1e-12);
  EXPECT_NEAR(transform_score(-1.0, 0.5), 0.7071067812, 1e-10);
  EXPECT_NEAR(transform_score(-1.0, 0.5), stationary_score(-1.0, 0.5), 1e-12);
}

TEST(TransformScore, AgreesWithBisectionOnGrid) {
  for (double mu : mu_grid()) {
    for (double r : r_grid()) {
      EXPECT_NEAR(transform_score(mu, r), stationary_score(mu, r), 1e-12) << mu << ' ' << r;
    }
  }
}

TEST(TransformScore, StationarityResidual) {
  for (double mu : mu_grid()) {
    for (double r : r_grid()) {
      const double q = transform_score(mu, r);
      EXPECT_LE(std::abs(r / q - (1.0 - r) / (1.0 - q) - mu), 1e-8) << mu << ' ' << r;
    }
  }
}

TEST(TransformScore, RangeAndContinuityAtZero) {
  for (double r : r_grid()) {
    EXPECT_LE(std::abs(transform_score(1e-12, r) - r), 1e-9);
    for (double mu : {-1e6, -50.0, 50.0, 1e6}) {
      const double q = transform_score(mu, r);
      EXPECT_GE(q, 0.0);
      EXPECT_LE(q, 1.0);
    }
  }
  EXPECT_GE(transform_score(3.0, 0.0), 0.0);
  EXPECT_LE(transform_score(-3.0, 1.0), 1.0);
}

TEST(TransformScore, RankPreservingAndDecreasingInMultiplier) {
  const auto rs = r_grid();
  const auto mus = mu_grid();
  for (double mu : mus) {
    for (std::size_t i = 1; i < rs.size(); ++i) {
      EXPECT_LT(transform_score(mu, rs[i - 1]), transform_score(mu, rs[i]));
    }
  }
  for (double r : rs) {
    for (std::size_t i = 1; i < mus.size(); ++i) {
      EXPECT_GT(transform_score(mus[i - 1], r), transform_score(mus[i], r));
    }
  }
}

TEST(TransformScore, ComplementSymmetry) {
  for (double mu : mu_grid()) {
    for (double r : r_grid()) {
      EXPECT_NEAR(transform_score(-mu, 1.0 - r), 1.0 - transform_score(mu, r), 1e-10);
    }
  }
}

TEST(TransformScore, RejectsBadInputs) {
  EXPECT_THROW(transform_score(std::nan(""), 0.5), std::invalid_argument);
  EXPECT_THROW(transform_score(INFINITY, 0.5), std::invalid_argument);
  EXPECT_THROW(transform_score(0.0, 1.5), std::invalid_argument);
}

TEST(GValue, AtZeroIsNegativeEntropy) {
  EXPECT_NEAR(g_value(0.0, 0.5), -std::numbers::ln2, 1e-15);
  // r = 1 is clamped to 1 - 1e-6, whose entropy is about 1.5e-5.
  EXPECT_NEAR(g_value(0.0, 1.0), 0.0, 2e-5);
}

TEST(GValue, AtUnitMultiplier) {
  // 0.5 log q + 0.5 log(1-q) - q with q = (2 - sqrt 2)/2, in high precision.
  EXPECT_NEAR(g_value(1.0, 0.5), -1.080153603, 1e-8);
}

TEST(GGrad, IsNegativeTransformedScore) {
  EXPECT_DOUBLE_EQ(g_grad(0.0, 0.5), -0.5);
  EXPECT_DOUBLE_EQ(g_grad(0.0, 0.9), -0.9);
  EXPECT_NEAR(g_grad(1.0, 0.5), -0.292893219, 1e-9);
}

TEST(GHess, ZeroBranch) {
  EXPECT_DOUBLE_EQ(g_hess(0.0, 0.5), 0.25);
  EXPECT_NEAR(g_hess(0.0, 0.9), 0.09, 1e-15);
}

TEST(GHess, AtUnitMultiplier) {
  // 1/2 (1 - 1/sqrt 2), which central differences of g_grad reproduce.
  EXPECT_NEAR(g_hess(1.0, 0.5), 0.5 * (1.0 - 1.0 / std::sqrt(2.0)), 1e-12);
  const double h = 1e-5;
  EXPECT_NEAR(g_hess(1.0, 0.5), (g_grad(1.0 + h, 0.5) - g_grad(1.0 - h, 0.5)) / (2 * h), 1e-9);
}

TEST(GHess, SmoothThroughZero) {
  for (double r : r_grid()) {
    for (double mu : {-1e-3, -1e-6, -1e-9, -1e-13, 1e-13, 1e-9, 1e-6, 1e-3}) {
      const double h = 1e-5;
      const double fd = (g_grad(mu + h, r) - g_grad(mu - h, r)) / (2 * h);
      EXPECT_NEAR(g_hess(mu, r), fd, 1e-8) << mu << ' ' << r;
    }
  }
}

TEST(Derivatives, FiniteDifferencesOnGrid) {
  for (double mu : mu_grid()) {
    for (double r : r_grid()) {
      const double h1 = 1e-6;
      const double fd1 = (g_value(mu + h1, r) - g_value(mu - h1, r)) / (2 * h1);
      EXPECT_LE(std::abs(g_grad(mu, r) - fd1), 1e-6);
      const double h2 = 1e-5;
      const double fd2 = (g_grad(mu + h2, r) - g_grad(mu - h2, r)) / (2 * h2);
      EXPECT_LE(std::abs(g_hess(mu, r) - fd2), 1e-5);
      EXPECT_GE(g_hess(mu, r), 0.0);
    }
  }
}

}  // namespace
