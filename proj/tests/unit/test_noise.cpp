#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fhn/noise.hpp"
#include "fhn/stats.hpp"

using namespace fhn;

namespace {

double sample_variance(const std::vector<double>& xs) { return stats::variance(xs); }

/// Every `spacing`-th value of z on [0, count * spacing), generated in chunks.
std::vector<double> subsample(const OuProcess& proc, std::size_t count, std::int64_t spacing) {
  std::vector<double> out;
  const std::int64_t chunk = spacing * 1000;
  for (std::int64_t start = 0; out.size() < count; start += chunk) {
    const auto z = ou_series(proc, start, start + chunk - 1);
    for (std::int64_t j = 0; j < chunk && out.size() < count; j += spacing) out.push_back(z[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace

TEST(WienerIncrement, Deterministic) {
  const NoiseSeed s{12345, 1};
  EXPECT_EQ(wiener_increment(s, 0, 0.01), wiener_increment(s, 0, 0.01));
  EXPECT_EQ(wiener_increment(s, -77, 0.01), wiener_increment(s, -77, 0.01));
  EXPECT_NE(wiener_increment(s, 0, 0.01), wiener_increment({12345, 2}, 0, 0.01));
}

TEST(WienerIncrement, MeanWithinCltBand) {
  const double dt = 0.01;
  const int n = 100000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += wiener_increment({99, 1}, k, dt);
  EXPECT_LT(std::abs(sum / n), 4.0 * std::sqrt(dt / n));
}

TEST(WienerIncrement, VarianceMatchesDt) {
  const double dt = 0.01;
  std::vector<double> xs;
  for (int k = 0; k < 100000; ++k) xs.push_back(wiener_increment({7, 2}, k, dt));
  EXPECT_NEAR(sample_variance(xs), dt, 0.05 * dt);
}

TEST(WienerIncrement, RejectsNonPositiveDt) { EXPECT_THROW(wiener_increment({1, 1}, 0, 0.0), std::invalid_argument); }

TEST(WienerPath, AnchorAndSingleIncrement) {
  const WienerPath p{3, 0.01, 0};
  EXPECT_EQ(path_value(p, 1, 0.0), 0.0);
  EXPECT_EQ(path_value(p, 1, 0.01), p.increment(1, 0));
  EXPECT_EQ(path_value(p, 2, -0.01), -p.increment(2, -1));
}

TEST(WienerPath, OffGridTimeRejected) {
  const WienerPath p{3, 0.01, 0};
  EXPECT_THROW(path_value(p, 1, 0.015), GridMisalignment);
  EXPECT_THROW(shift(p, 0.0049), GridMisalignment);
}

TEST(WienerPath, DisjointIncrementsUncorrelated) {
  const WienerPath p{11, 0.01, 0};
  const std::int64_t T = 10;
  const std::size_t n = 20000;
  const auto w = p.values(1, 0, static_cast<std::int64_t>(2 * n) * T);
  std::vector<double> x, y;
  for (std::size_t j = 0; j < n; ++j) {
    x.push_back(w[(2 * j + 1) * T] - w[2 * j * T]);
    y.push_back(w[(2 * j + 2) * T] - w[(2 * j + 1) * T]);
  }
  const double sx = std::sqrt(stats::variance(x));
  const double sy = std::sqrt(stats::variance(y));
  EXPECT_LT(std::abs(stats::covariance(x, y)), 4.0 * sx * sy / std::sqrt(static_cast<double>(n)));
}

TEST(WienerPath, ValuesMatchPointEvaluation) {
  const WienerPath p{5, 0.01, 17};
  const auto v = p.values(1, -50, 40);
  for (std::int64_t k = -50; k <= 40; k += 13) EXPECT_EQ(v[static_cast<std::size_t>(k + 50)], p.value_at_step(1, k));
}

TEST(WienerPath, BackwardExtensionLeavesValuesUnchanged) {
  const WienerPath p{21, 0.01, 0};
  const auto short_range = p.values(2, -1000, 0);
  const auto long_range = p.values(2, -5000, 0);
  for (std::size_t i = 0; i < short_range.size(); ++i) EXPECT_EQ(short_range[i], long_range[4000 + i]);
  const OuProcess z{1.0, p, 2, 0.0};
  const auto z_short = ou_series(z, -1000, 0);
  const auto z_long = ou_series(z, -5000, 0);
  for (std::size_t i = 0; i < z_short.size(); ++i) EXPECT_EQ(z_short[i], z_long[4000 + i]);
}

TEST(Shift, IdentityInverseAndAnchor) {
  const WienerPath p{8, 0.01, 0};
  const WienerPath same = shift(p, 0.0);
  const WienerPath there = shift(p, 2.5);
  const WienerPath back = shift(there, -2.5);
  for (std::int64_t k = -30; k <= 30; ++k) {
    EXPECT_EQ(same.value_at_step(1, k), p.value_at_step(1, k));
    EXPECT_EQ(back.value_at_step(1, k), p.value_at_step(1, k));
  }
  EXPECT_EQ(path_value(there, 1, 0.0), 0.0);
  // (theta_s omega)(t) = omega(s + t) - omega(s)
  EXPECT_NEAR(path_value(there, 1, 0.3), path_value(p, 1, 2.8) - path_value(p, 1, 2.5), 1e-14);
}

TEST(Shift, GroupLawExact) {
  const WienerPath p{9, 0.001, 0};
  for (double a : {-3.0, -0.5, 0.0, 1.25}) {
    for (double b : {-2.0, 0.001, 4.0}) {
      const WienerPath lhs = shift(shift(p, a), b);
      const WienerPath rhs = shift(p, a + b);
      EXPECT_EQ(lhs.offset, rhs.offset);
      for (std::int64_t k = -20; k <= 20; k += 5) EXPECT_EQ(lhs.value_at_step(2, k), rhs.value_at_step(2, k));
    }
  }
}

TEST(Ou, ZeroDriverStaysZero) {
  double z = 0.0;
  for (int i = 0; i < 1000; ++i) z = ou_advance(z, 0.0, 1.3, 0.01);
  EXPECT_EQ(z, 0.0);
}

TEST(Ou, ClosedFormStepConstants) {
  const double d = std::log(2.0);
  EXPECT_NEAR(ou_decay(1.0, d), 0.5, 1e-15);
  EXPECT_NEAR(ou_exact_step_variance(1.0, d), 0.375, 1e-15);
}

TEST(Ou, ConstantIncrementsMatchGeometricSum) {
  const double rate = 0.7, dt = 0.01, c = 0.003, z0 = 0.4;
  const int n = 100000;
  double z = z0;
  for (int i = 0; i < n; ++i) z = ou_advance(z, c, rate, dt);
  const double q = ou_decay(rate, dt);
  const double qn = std::pow(q, n);
  const double exact = qn * z0 + ou_midpoint_damping(rate, dt) * c * (1.0 - qn) / (1.0 - q);
  EXPECT_LE(std::abs(z - exact), 1e-12 * std::abs(exact));
}

TEST(Ou, EvaluateMatchesSeriesAndRejectsOffGrid) {
  const OuProcess z{2.0, {4, 0.01, 0}, 1, 0.0};
  const auto s = ou_series(z, -10, 10);
  EXPECT_EQ(ou_evaluate(z, 0.05), s[15]);
  EXPECT_EQ(ou_evaluate(z, -0.1), s[0]);
  EXPECT_THROW(ou_evaluate(z, 0.005), GridMisalignment);
}

TEST(Ou, ShiftedPathSeesSameProcess) {
  // z(theta_s omega)(t) = z(omega)(t + s) on the grid, bit for bit.
  const WienerPath p{31, 0.01, 0};
  const OuProcess z{1.0, p, 1, 0.0};
  const OuProcess zs{1.0, shift(p, 7.0), 1, 0.0};
  const auto a = ou_series(z, 600, 800);
  const auto b = ou_series(zs, -100, 100);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Ou, StationaryVarianceAtHalfRate) {
  const double rate = 0.5, dt = 0.01;
  const OuProcess z{rate, {2024, dt, 0}, 1, 0.0};
  const auto xs = subsample(z, 100000, static_cast<std::int64_t>(5.0 / rate / dt));
  EXPECT_NEAR(sample_variance(xs), 1.0, 0.05);
}

TEST(Temperedness, ZeroSeries) {
  std::vector<double> z(1001, 0.0);
  const auto probe = temperedness_probe(z, 0.05, 0.5, 4.0);
  for (const auto& [t, v] : probe.series) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(probe.pass);
}

TEST(Temperedness, ConstantSeriesDecays) {
  std::vector<double> z(1001, 1.0);
  const auto probe = temperedness_probe(z, 0.05, 0.5, 4.0);
  for (std::size_t i = 1; i < probe.series.size(); ++i) EXPECT_LT(probe.series[i].second, probe.series[i - 1].second);
  EXPECT_NEAR(probe.series.back().second, std::exp(-0.5 * 50.0), 1e-20);
  EXPECT_TRUE(probe.pass);
}

TEST(Temperedness, StationaryOuTailSmall) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const OuProcess z{1.0, {seed, 0.01, 0}, 1, 0.0};
    const auto probe = temperedness_probe(z, 0.5, 4.0, 50.0, 10);
    EXPECT_TRUE(probe.pass) << "seed " << seed;
    EXPECT_LT(probe.tail_max, 1e-6) << "seed " << seed;
  }
}

TEST(Stats, KsStatisticOfExactQuantiles) {
  std::vector<double> xs;
  const int n = 1000;
  for (int i = 0; i < n; ++i) xs.push_back(rng::inverse_normal_cdf((i + 0.5) / n));
  EXPECT_NEAR(stats::ks_statistic(xs, rng::normal_cdf), 0.5 / n, 1e-9);
  EXPECT_GT(stats::ks_pvalue(0.5 / n, n), 0.99);
  EXPECT_LT(stats::ks_pvalue(0.1, n), 1e-6);
}

TEST(Rng, InverseNormalRoundTrip) {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9}) {
    EXPECT_NEAR(rng::normal_cdf(rng::inverse_normal_cdf(p)), p, 1e-14 + 1e-12 * p);
  }
}
