#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dilatation/dilatation.hpp"
#include "oracles.hpp"

using namespace dilatation;

namespace {

Point p3(double a, double b, double c) {
  Point p(3);
  p << a, b, c;
  return p;
}

SamplePlan projection_plan(int samples = 8) {
  SamplePlan plan;
  plan.samples = samples;
  plan.limit = {make_ladder(14), 1e-6, Acceleration::Richardson};
  return plan;
}

SampledCurve arc_through(const Point& x, double r) {
  return make_curve(
      [x, r](double t) { return heis::mul(x, p3(r * std::sin(t), r * (1 - std::cos(t)), 0.5 * r * r * (t - std::sin(t)))); },
      0.0, 1.0, 32);
}

}  // namespace

TEST(HeisenbergProjection, AxiomsPass) {
  auto q = make_heisenberg_projection();
  auto rep = check_projection_axioms(q, projection_plan());
  for (const auto& e : rep.entries) EXPECT_TRUE(e.pass) << e.axiom << " worst " << e.worst;
  EXPECT_LE(rep.get("I").worst, 1e-12);
  EXPECT_LE(rep.get("III").worst, 1e-12);
  ASSERT_TRUE(rep.get("IV").min_rate);
  EXPECT_GE(*rep.get("IV").min_rate, 0.9);
}

TEST(HeisenbergProjection, InducedDilationsAreSubRiemannian) {
  auto q = make_heisenberg_projection();
  Structure sr = make_heisenberg_sr();
  std::mt19937_64 rng(31);
  for (int i = 0; i < 30; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0), u = random_point(rng, x, 0.5);
    EXPECT_LE(max_dist(induced_dilation(q, x, 0.2, u), dilate(sr, x, 0.2, u)), 1e-14);
  }
}

TEST(HeisenbergProjection, TangentOperationsAgainstOracle) {
  auto q = make_heisenberg_projection();
  Structure ind = induced_structure(q);
  LimitOptions opt{make_ladder(14), 1e-6, Acceleration::Richardson};
  std::mt19937_64 rng(32);
  for (int i = 0; i < 8; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0);
    Point u = random_point(rng, x, 0.4), v = random_point(rng, x, 0.4);
    Point expect = oracle::mul(oracle::mul(x, oracle::inv(u)), v);
    EXPECT_LE(max_dist(tangent_delta(q, x, u, v), expect), 1e-14);
    EXPECT_LE(max_dist(require_limit(delta_limit(ind, x, u, v, opt), "delta"), expect), 1e-6);
  }
}

TEST(HeisenbergProjection, MorphismAndThetaRelation) {
  auto q = make_heisenberg_projection();
  LimitOptions opt{make_ladder(14), 1e-6, Acceleration::Richardson};
  std::mt19937_64 rng(33);
  for (int i = 0; i < 6; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0);
    Point u = random_point(rng, x, 0.4), v = random_point(rng, x, 0.4);
    EXPECT_LE(tangent_projection_residual(q, x, u, v, opt), 1e-6);
    for (double e : {0.5, 0.1, 0.01}) EXPECT_LE(theta_sigma_residual(q, x, e, u, v), 1e-9);
  }
}

TEST(HeisenbergProjection, SupplementaryConditions) {
  auto sup = check_supplementary(make_heisenberg_projection(), projection_plan());
  EXPECT_TRUE(sup.pass_a);
  EXPECT_TRUE(sup.pass_b);
}

TEST(SpiralProjection, LimitAxiomsFail) {
  auto rep = check_projection_axioms(make_spiral_projection(1.0), projection_plan(4));
  EXPECT_FALSE(rep.get("II").pass);
  EXPECT_FALSE(rep.get("IV").pass);
  EXPECT_TRUE(rep.get("I").pass);
}

TEST(IdentityProjection, InducedEqualsBase) {
  auto q = make_identity_projection(make_euclidean(2));
  Structure ind = induced_structure(q);
  Point x = Point::Zero(2), u = Point::Ones(2);
  EXPECT_LE(max_dist(dilate(ind, x, 0.3, u), dilate(q.base, x, 0.3, u)), 0.0);
  EXPECT_TRUE(check_projection_axioms(q, SamplePlan{}).all_pass());
}

TEST(Psi, CommutatorWordEndsOnVerticalAxis) {
  auto q = make_heisenberg_projection();
  Point x = Point::Zero(3), a = x;
  std::vector<Point> letters;
  for (const auto& inc : {p3(1, 0, 0), p3(0, 1, 0), p3(-1, 0, 0), p3(0, -1, 0)}) {
    letters.push_back(heis::mul(a, inc));
    a = psi_zero_step(q, x, a, letters.back());
  }
  Point end = psi_zero_limit(q, x, letters).endpoint();
  Point expect = oracle::commutator(p3(1, 0, 0), p3(0, 1, 0));
  EXPECT_LE(max_dist(end, expect), 1e-6);
  EXPECT_LE(max_dist(end, p3(0, 0, 1)), 1e-6);
}

TEST(Psi, ScaleWordConvergesToLimitRecursion) {
  auto q = make_heisenberg_projection();
  Point x = Point::Zero(3);
  std::vector<Point> letters{p3(0.2, 0.1, 0.05), p3(-0.1, 0.25, 0.0), p3(0.05, -0.1, 0.1)};
  Point ref = psi_zero_limit(q, x, letters).endpoint();
  auto r = extrapolate_limit([&](double e) { return psi_transform(q, e, {}, x, letters).endpoint(); }, q.limit);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(max_dist(*r.extrapolated, ref), 1e-6);
  ASSERT_TRUE(r.empirical_rate);
  EXPECT_GE(*r.empirical_rate, 0.9);
}

TEST(Psi, ZeroWordIsIdempotent) {
  auto q = make_heisenberg_projection();
  Point x = Point::Zero(3);
  std::vector<Point> letters{p3(0.2, 0.1, 0.05), p3(-0.1, 0.25, 0.0)};
  std::vector<double> zeros(2, 0.0), w{0.3, 0.7};
  for (double e : {1.0, 0.5, 0.1}) {
    auto first = psi_transform(q, e, zeros, x, letters);
    std::vector<Point> again(first.images.begin() + 1, first.images.end());
    auto second = psi_transform(q, e, w, x, again);
    for (std::size_t k = 0; k < first.images.size(); ++k) EXPECT_LE(max_dist(first.images[k], second.images[k]), 1e-9);
  }
}

TEST(Psi, RejectsBadScales) {
  auto q = make_heisenberg_projection();
  Point x = Point::Zero(3);
  std::vector<Point> letters{p3(0.1, 0, 0)};
  EXPECT_THROW(psi_transform(q, 1.5, {}, x, letters), Error);
  EXPECT_THROW(psi_transform(q, 0.5, {2.0}, x, letters), Error);
  EXPECT_THROW(psi_zero_limit(q, x, {p3(5, 0, 0)}, 0.5), Error);
}

TEST(Chow, ReachesSeededTargets) {
  auto q = make_heisenberg_projection();
  Point x = Point::Zero(3);
  std::mt19937_64 rng(34);
  for (int i = 0; i < 5; ++i) {
    Point z = random_point(rng, x, 0.05);
    auto r = chow_solve(q, x, z);
    EXPECT_TRUE(r.reached) << "residual " << r.residual;
    EXPECT_TRUE(r.nested);
    EXPECT_EQ(r.letters.size(), 5u);
    auto sc = build_short_curve(q, 1.0, x, r.letters);
    EXPECT_TRUE(horizontality_test(q, sc.trace, 1e-4, short_curve_times(sc)).pass);
    EXPECT_LE(max_dist(sc.trace.at(sc.trace.finish()), z), 1e-6);
  }
}

TEST(Horizontality, LiftPassesVerticalFails) {
  auto q = make_heisenberg_projection();
  Point x = p3(0.5, -0.3, 0.2);
  EXPECT_TRUE(horizontality_test(q, arc_through(x, 0.6), 1e-4).pass);
  auto vertical = make_curve([x](double t) { return heis::mul(x, p3(0.3 * t, 0.0, t)); }, 0.0, 1.0, 16);
  EXPECT_FALSE(horizontality_test(q, vertical, 1e-4).pass);
}
