#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fhn/cocycle.hpp"

using namespace fhn;

namespace {

Grid small_grid() { return Grid{1, 256, 16.0, Boundary::dirichlet0}; }

SolverSpec solver_for(const Grid& g, double dt = 1e-3) {
  SolverSpec s;
  s.dt = dt;
  s.grid = g;
  return s;
}

TildePair family_member(const Grid& g, std::size_t j, double radius = 2.0) {
  FamilySpec fam;
  fam.base_radius = radius;
  fam.sample_count = j + 1;
  return sample_family(fam, 0.0, 0.0, g)[j];
}

bool same(const TildePair& a, const TildePair& b) { return a.u == b.u && a.v == b.v; }

}  // namespace

TEST(Phi, ZeroTimeIsIdentity) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  const TildePair x = family_member(g, 1);
  const auto y = phi({0.0, 3.0, WienerPath{5, 1e-3, 0}, x}, m, solver_for(g));
  EXPECT_TRUE(same(x, y));
}

TEST(Phi, QuietSystemDecaysMonotonically) {
  const Grid g = small_grid();
  ModelParams mp;
  mp.h1 = mp.h2 = mp.g.profile = mp.h.profile = ProfileSpec{"zero", 0.0};
  const ModelSpec m = build_model(g, mp);
  const auto run = run_cocycle({4.0, 1.0, WienerPath{5, 1e-3, 0}, family_member(g, 0, 5.0)}, m, solver_for(g), 10);
  const auto& smp = run.trajectory.samples;
  ASSERT_GT(smp.size(), 100u);
  for (std::size_t i = 1; i < smp.size(); ++i) EXPECT_LE(smp[i].u_l2sq + smp[i].v_l2sq, smp[i - 1].u_l2sq + smp[i - 1].v_l2sq);
  EXPECT_LT(smp.back().energy, 0.1 * smp.front().energy);
}

TEST(Phi, RejectsNegativeTime) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  EXPECT_THROW(phi({-0.5, 0.0, WienerPath{5, 1e-3, 0}, family_member(g, 0)}, m, solver_for(g)), std::invalid_argument);
}

TEST(CocycleLaw, TrivialSplitsAreExact) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  const CocycleInput in{0.0, 0.7, WienerPath{8, 1e-3, 0}, family_member(g, 2)};
  EXPECT_EQ(cocycle_check(0.0, 0.6, in, m, solver_for(g)), 0.0);
  EXPECT_EQ(cocycle_check(0.6, 0.0, in, m, solver_for(g)), 0.0);
}

TEST(CocycleLaw, CanonicalHalfHalf) {
  const Grid g;  // canonical 1-D grid
  const ModelSpec m = build_model(g, ModelParams{});
  const CocycleInput in{0.0, 0.0, WienerPath{42, 1e-3, 0}, family_member(g, 0)};
  EXPECT_LE(cocycle_check(0.5, 0.5, in, m, solver_for(g)), 1e-10);
}

TEST(CocycleLaw, NonzeroAnchors) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  for (double tau : {-3.0, 0.25, 10.0}) {
    const CocycleInput in{0.0, tau, WienerPath{3, 1e-3, 0}, family_member(g, 3)};
    EXPECT_LE(cocycle_check(1.0, 2.0, in, m, solver_for(g)), 1e-10) << tau;
    EXPECT_LE(cocycle_check(2.0, 1.0, in, m, solver_for(g)), 1e-10) << tau;
  }
}

TEST(Pullback, ZeroElapsedReturnsInit) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  const TildePair x = family_member(g, 0);
  EXPECT_TRUE(same(pullback(0.0, 4.0, WienerPath{1, 1e-3, 0}, x, m, solver_for(g)), x));
}

TEST(Pullback, EqualsShiftedPhiBitwise) {
  const Grid g = small_grid();
  const ModelSpec m = build_model(g, ModelParams{});
  const WienerPath w{12, 1e-3, 0};
  const TildePair x = family_member(g, 1);
  const auto a = pullback(3.0, 1.5, w, x, m, solver_for(g));
  const auto b = phi({3.0, 1.5 - 3.0, shift(w, -3.0), x}, m, solver_for(g));
  EXPECT_TRUE(same(a, b));
  const auto c = pullback(3.0, 1.5, w, x, m, solver_for(g));
  EXPECT_TRUE(same(a, c));
}

TEST(Pullback, DistinctInitsConverge) {
  const Grid g;
  const ModelSpec m = build_model(g, ModelParams{});
  const WienerPath w{42, 1e-3, 0};
  FamilySpec fam;
  fam.base_radius = 3.0;
  const auto xs = sample_family(fam, 0.0, 0.0, g);
  const auto a = pullback(32.0, 0.0, w, xs[0], m, solver_for(g));
  const auto b = pullback(32.0, 0.0, w, xs[1], m, solver_for(g));
  EXPECT_GT(product_distance(xs[0], xs[1]), 1.0);
  EXPECT_LT(norm_p(a.u - b.u, 2.0), 1e-4);
  EXPECT_LT(norm_p(a.v - b.v, 2.0), 1e-4);
}

TEST(Family, ZeroRadiusGivesZeroFields) {
  const Grid g = small_grid();
  FamilySpec fam;
  fam.base_radius = 0.0;
  for (const auto& x : sample_family(fam, 0.0, 10.0, g)) {
    EXPECT_EQ(x.u.max_abs(), 0.0);
    EXPECT_EQ(x.v.max_abs(), 0.0);
  }
}

TEST(Family, SamplesInsideBall) {
  const Grid g = small_grid();
  FamilySpec fam;
  fam.base_radius = 3.0;
  fam.growth_rate = 0.2;
  fam.sample_count = 16;
  for (double t : {0.0, 4.0, 16.0}) {
    const double r = fam.radius(t);
    for (const auto& x : sample_family(fam, 0.0, t, g)) EXPECT_LE(l2sq(x.u) + l2sq(x.v), r * r * (1.0 + 1e-12));
  }
}

TEST(Family, ConstantRadiusWithoutGrowth) {
  const Grid g = small_grid();
  FamilySpec fam;
  const auto a = sample_family(fam, 0.0, 0.0, g);
  const auto b = sample_family(fam, 0.0, 50.0, g);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_TRUE(same(a[j], b[j]));
  EXPECT_EQ(fam.radius(0.0), fam.radius(50.0));
}

TEST(Family, DeterministicAndSeedSensitive) {
  const Grid g = small_grid();
  FamilySpec fam;
  const auto a = sample_family(fam, 0.0, 1.0, g);
  const auto b = sample_family(fam, 0.0, 1.0, g);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_TRUE(same(a[j], b[j]));
  fam.seed = 8;
  EXPECT_FALSE(same(a[0], sample_family(fam, 0.0, 1.0, g)[0]));
}

TEST(Family, TemperedGrowthDecays) {
  const double delta = 1.0;
  FamilySpec fam;
  fam.base_radius = 2.0;
  fam.growth_rate = 0.4 * delta;
  EXPECT_TRUE(fam.tempered(delta));
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= 100.0; t += 1.0) {
    const double r = fam.radius(t);
    const double value = std::exp(-delta * t) * r * r;
    EXPECT_NEAR(value, 4.0 * std::exp((2.0 * fam.growth_rate - delta) * t), 1e-12 * 4.0);
    EXPECT_LT(value, prev);
    prev = value;
  }
  EXPECT_LT(prev, 1e-8);
  fam.growth_rate = 0.5 * delta;
  EXPECT_FALSE(fam.tempered(delta));
  EXPECT_THROW(fam.validate(delta), std::invalid_argument);
}
