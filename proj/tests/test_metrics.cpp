#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "fairstream/metrics.hpp"
#include "fairstream/rng.hpp"

using namespace fairstream;

namespace {

// Independent two-pass population std.
double oracle_fairness(const std::vector<long double>& xs) {
  long double mean = 0;
  for (auto x : xs) mean += x;
  mean /= xs.size();
  long double ss = 0;
  for (auto x : xs) ss += (x - mean) * (x - mean);
  return static_cast<double>(1.0L - 2.0L * std::sqrt(ss / xs.size()));
}

}  // namespace

TEST(Qoe, FirstSegmentIgnoresPreviousQuality) {
  QoECoefficients c;
  EXPECT_DOUBLE_EQ(qoe({0, 0.7, 0.1, 0.0, 0.0}, c), 0.7);
  EXPECT_DOUBLE_EQ(qoe({0, 0.7, 0.9, 0.0, 0.0}, c), 0.7);
  EXPECT_NEAR(qoe({0, 0.7, 0.0, 0.5, 0.0}, c), 0.7 * std::exp(-0.5), 1e-15);
}

TEST(Qoe, SwitchPenaltyBlendsTowardSmoothness) {
  QoECoefficients c;
  const double same = qoe({3, 0.8, 0.8, 0, 0}, c);
  EXPECT_NEAR(same, (0.8 + 0.025) / 1.025, 1e-15);
  const double jump = qoe({3, 0.8, 0.3, 0, 0}, c);
  EXPECT_NEAR(jump, (0.8 + 0.025 * 0.5) / 1.025, 1e-15);
  EXPECT_LT(jump, same);
}

TEST(Qoe, RebufferPenaltyFactor) {
  QoECoefficients c;
  const double q = 0.9;
  const double v = qoe({5, q, q, 0.0, 0.1}, c);
  const double base = qoe({5, q, q, 0.0, 0.0}, c);
  EXPECT_NEAR(v / base, 0.3678794, 1e-7);
  EXPECT_NEAR(v / base, std::exp(-1.0), 1e-15);
}

TEST(Qoe, BoundedInUnitInterval) {
  QoECoefficients c;
  Rng rng(7);
  for (int k = 0; k < 2000; ++k) {
    QoEInputs in{static_cast<std::int64_t>(uniform_index(rng, 50)), uniform01(rng), uniform01(rng),
                 uniform_real(rng, 0, 3), uniform_real(rng, 0, 3)};
    const double v = qoe(in, c);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Qoe, RejectsBadInputs) {
  QoECoefficients c;
  EXPECT_THROW(qoe({-1, 0.5, 0.5, 0, 0}, c), std::invalid_argument);
  EXPECT_THROW(qoe({0, 0.5, 0.5, -0.1, 0}, c), std::invalid_argument);
  EXPECT_THROW(qoe({0, 1.5, 0.5, 0, 0}, c), std::invalid_argument);
}

TEST(Coefficients, Validation) {
  QoECoefficients c;
  EXPECT_NO_THROW(c.validate());
  c.kappa = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.delta = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Ema, FirstValueEqualsFirstQoe) {
  for (double kappa : {0.0, 0.5, 0.9, 0.99}) {
    auto [state, v] = ema_update({}, 0.4321, 0, kappa);
    EXPECT_EQ(v, 0.4321) << kappa;
    EXPECT_NEAR(state.z, (1 - kappa) * 0.4321, 1e-15);
  }
}

TEST(Ema, ConstantInputIsFixpoint) {
  for (double kappa : {0.0, 0.5, 0.9, 0.99}) {
    EmaState s;
    for (std::int64_t t = 0; t < 100; ++t) {
      auto [next, v] = ema_update(s, 0.77, t, kappa);
      EXPECT_NEAR(v, 0.77, 1e-12) << "kappa " << kappa << " t " << t;
      s = next;
    }
  }
}

TEST(Ema, MatchesDirectWeightedAverage) {
  Rng rng(3);
  const double kappa = 0.9;
  std::vector<double> xs;
  EmaState s;
  for (std::int64_t t = 0; t < 60; ++t) {
    xs.push_back(uniform01(rng));
    auto [next, v] = ema_update(s, xs.back(), t, kappa);
    s = next;
    long double num = 0, den = 0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const long double w = std::pow(static_cast<long double>(kappa), static_cast<long double>(xs.size() - 1 - j));
      num += w * xs[j];
      den += w;
    }
    EXPECT_NEAR(v, static_cast<double>(num / den), 1e-12);
  }
}

TEST(Ema, StepsMustAdvanceByOne) {
  auto [s, v] = ema_update({}, 0.5, 0, 0.9);
  (void)v;
  EXPECT_THROW(ema_update(s, 0.5, 2, 0.9), std::logic_error);
  EXPECT_THROW(ema_update({}, 0.5, 1, 0.9), std::logic_error);
}

TEST(Fairness, Extremes) {
  std::vector<double> same(4, 0.3141592653589793);
  EXPECT_EQ(fairness(same), 1.0);
  std::vector<double> split{0, 0, 1, 1};
  EXPECT_EQ(fairness(split), 0.0);
  std::vector<double> ramp{0.2, 0.4, 0.6, 0.8};
  EXPECT_NEAR(fairness(ramp), 0.5527864, 1e-7);
  EXPECT_NEAR(fairness(ramp), 1.0 - 2.0 * std::sqrt(0.05), 1e-15);
  std::vector<double> one{0.42};
  EXPECT_EQ(fairness(one), 1.0);
}

TEST(Fairness, EmptyThrows) {
  std::vector<double> none;
  EXPECT_THROW(fairness(none), std::invalid_argument);
}

TEST(Fairness, MatchesOracleAndIsPermutationInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 1 + uniform_index(rng, 8);
    std::vector<double> xs(n);
    std::vector<long double> lx(n);
    for (std::size_t k = 0; k < n; ++k) lx[k] = xs[k] = uniform01(rng);
    const double f = fairness(xs);
    EXPECT_NEAR(f, oracle_fairness(lx), 1e-12);
    EXPECT_GE(f, 0.0 - 1e-15);
    EXPECT_LE(f, 1.0);
    shuffle(std::span<double>(xs), rng);
    EXPECT_NEAR(fairness(xs), f, 1e-12);
  }
}

TEST(Utility, Endpoints) {
  EXPECT_DOUBLE_EQ(utility(0.6, 0.2, 1.0), 0.6);
  EXPECT_DOUBLE_EQ(utility(0.6, 0.2, 0.0), 0.2);
  EXPECT_DOUBLE_EQ(utility(0.6, 0.2, 0.25), 0.25 * 0.6 + 0.75 * 0.2);
  EXPECT_DOUBLE_EQ(reward(0.6, 0.2), 0.3);
}
