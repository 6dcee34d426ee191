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

}  // namespace

TEST(Ladder, PowersOfTwo) {
  auto l = make_ladder(5, 2);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_DOUBLE_EQ(l.front(), 0.25);
  EXPECT_DOUBLE_EQ(l.back(), 1.0 / 32.0);
}

TEST(Extrapolation, LinearApproachHasRateOne) {
  auto r = extrapolate_scalar([](double e) { return 2.0 + 3.0 * e; });
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.scalar(), 2.0, 1e-6);
  ASSERT_TRUE(r.empirical_rate);
  EXPECT_NEAR(*r.empirical_rate, 1.0, 0.05);
}

TEST(Extrapolation, RichardsonRemovesFirstOrderTerm) {
  LimitOptions opt{make_ladder(16), 1e-7, Acceleration::Richardson};
  auto r = extrapolate_scalar([](double e) { return 1.0 + e + e * e; }, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.scalar(), 1.0, 1e-8);
}

TEST(Extrapolation, OscillationDoesNotConverge) {
  auto r = extrapolate_scalar([](double e) { return std::sin(std::log(e)); });
  EXPECT_FALSE(r.converged);
  EXPECT_THROW(require_limit(r, "oscillation"), Error);
}

TEST(Extrapolation, PowerFitRecoversExponent) {
  std::vector<double> xs, ys;
  for (double x : make_ladder(10)) {
    xs.push_back(x);
    ys.push_back(4.0 * std::pow(x, 0.5));
  }
  auto fit = power_law_fit(xs, ys);
  EXPECT_NEAR(fit.exponent, 0.5, 1e-12);
}

TEST(Dilate, RejectsBadScaleAndDimension) {
  Structure s = make_euclidean(2);
  Point x = Point::Zero(2), u = Point::Ones(2);
  try {
    dilate(s, x, 0.0, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
  EXPECT_THROW(dilate(s, x, -1.0, u), Error);
  EXPECT_THROW(dilate(s, x, 0.5, Point::Ones(3)), Error);
}

TEST(Dilate, DomainRadiusEnforced) {
  Structure s = make_heisenberg_sr();
  EXPECT_THROW(dilate(s, p3(0, 0, 0), 0.5, p3(20, 0, 0)), Error);
}

TEST(Euclidean, AxiomsAndRescaledDistance) {
  Structure s = make_euclidean(2);
  SamplePlan plan;
  auto rep = check_axioms(s, plan);
  EXPECT_TRUE(rep.all_pass());
  EXPECT_LE(rep.get("A1").worst, 1e-12);
  EXPECT_LE(rep.get("A2").worst, 1e-12);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    Point x = random_point(rng, Point::Zero(2), 1.0);
    Point u = random_point(rng, x, 0.5), v = random_point(rng, x, 0.5);
    // Dividing by e amplifies coordinate roundoff by 1/e.
    for (double e : {0.5, 0.01, 1e-6}) EXPECT_NEAR(rescaled_distance(s, x, e, u, v), s.distance(u, v), 1e-15 / e);
  }
}

TEST(Euclidean, DeltaAndSigmaAreAffine) {
  Structure s = make_euclidean(3);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0);
    Point u = random_point(rng, x, 0.5), v = random_point(rng, x, 0.5);
    EXPECT_LE(max_dist(delta_eps(s, x, 0.3, u, v), x + v - u + 0.3 * (u - x)), 1e-12);
    EXPECT_LE(max_dist(sigma_eps(s, x, 0.3, u, v), u + v - x - 0.3 * (u - x)), 1e-12);
  }
}

TEST(Heisenberg, DeltaLimitMatchesMatrixOracle) {
  Structure s = make_heisenberg_sr();
  std::mt19937_64 rng(42);
  Point x = Point::Zero(3);
  for (int i = 0; i < 25; ++i) {
    Point u = random_point(rng, x, 0.5), v = random_point(rng, x, 0.5);
    auto r = delta_limit(s, x, u, v);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(max_dist(*r.extrapolated, oracle::mul(oracle::inv(u), v)), 1e-6);
    ASSERT_TRUE(r.empirical_rate);
    EXPECT_GE(*r.empirical_rate, 0.9);
    auto q = sigma_limit(s, x, u, v);
    ASSERT_TRUE(q.converged);
    EXPECT_LE(max_dist(*q.extrapolated, oracle::mul(u, v)), 1e-6);
  }
}

TEST(Heisenberg, DeltaOffOriginMatchesOracle) {
  Structure s = make_heisenberg_sr();
  LimitOptions opt{make_ladder(14), 1e-6, Acceleration::Richardson};
  Point x = p3(0.4, -0.2, 0.3);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    Point u = random_point(rng, x, 0.4), v = random_point(rng, x, 0.4);
    Point expect = oracle::mul(x, oracle::mul(oracle::inv(u), v));
    EXPECT_LE(max_dist(require_limit(delta_limit(s, x, u, v, opt), "delta"), expect), 1e-6);
  }
}

TEST(Heisenberg, DilationsComposeAndFixBase) {
  Structure s = make_heisenberg_sr();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0);
    Point u = random_point(rng, x, 0.5);
    EXPECT_LE(max_dist(dilate(s, x, 0.3, dilate(s, x, 0.2, u)), dilate(s, x, 0.06, u)), 1e-12);
    EXPECT_EQ(dilate(s, x, 0.3, x), x);
    Point expect = oracle::mul(x, oracle::scale(oracle::mul(oracle::inv(x), u), 0.3));
    EXPECT_LE(max_dist(dilate(s, x, 0.3, u), expect), 1e-12);
  }
}

TEST(Heisenberg, AxiomsPass) {
  SamplePlan plan;
  plan.samples = 8;
  plan.limit = {make_ladder(14), 1e-6, Acceleration::Richardson};
  EXPECT_TRUE(check_axioms(make_heisenberg_sr(), plan).all_pass());
}

TEST(TangentFiber, ConeAndInverse) {
  Structure s = make_heisenberg_sr();
  Point x = Point::Zero(3);
  auto fiber = make_tangent_fiber(s, x);
  Point u = p3(0.2, -0.1, 0.05), v = p3(-0.3, 0.2, 0.1);
  EXPECT_LE(max_dist(fiber.inverse(u), oracle::inv(u)), 1e-6);
  double d = fiber.local_distance(u, v);
  for (double mu : {0.5, 0.25}) {
    EXPECT_NEAR(fiber.local_distance(dilate(s, x, mu, u), dilate(s, x, mu, v)), mu * d, 1e-9);
  }
}

TEST(TangentFiber, HorizontalElementsGenerateOneParameterGroups) {
  Structure s = make_euclidean(2);
  auto fiber = make_tangent_fiber(s, Point::Zero(2));
  Point u(2);
  u << 0.3, -0.4;
  auto m = dn_membership(s, fiber, u, 1e-6);
  EXPECT_TRUE(m.member) << m.residual;
}

TEST(Equivalence, FrameAgainstAffineAndAnisotropic) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 4; ++i) {
    Point x = random_point(rng, Point::Zero(3), 1.0);
    Point u = random_point(rng, x, 0.5);
    EXPECT_TRUE(equivalence_maps(make_tempered_base(), make_euclidean(3), x, u).equivalent);
    EXPECT_FALSE(equivalence_maps(make_tempered_base(), make_heisenberg_sr(), x, u).equivalent);
  }
}

TEST(Curve, TableValidation) {
  Point a = Point::Zero(2), b = Point::Ones(2);
  EXPECT_THROW(from_table({0.0, 0.0}, {a, b}), Error);
  EXPECT_THROW(from_table({0.0}, {a}), Error);
  Point bad(2);
  bad << std::nan(""), 0.0;
  EXPECT_THROW(from_table({0.0, 1.0}, {a, bad}), Error);
  auto c = from_table({0.0, 1.0}, {a, b});
  EXPECT_LE(max_dist(c.at(0.5), 0.5 * b), 1e-15);
  EXPECT_THROW(c.at(1.5), Error);
}

TEST(Curve, GeodesicInterpolation) {
  SegmentFn seg = [](const Point& p, const Point& q, double s) {
    return Point(heis::mul(p, s * heis::offset(p, q)));
  };
  Point a = p3(0, 0, 0), b = p3(1, 1, 0);
  auto c = from_table({0.0, 1.0}, {a, b}, Interpolation::GroupGeodesicSegment, seg);
  EXPECT_LE(max_dist(c.at(0.5), p3(0.5, 0.5, 0.0)), 1e-15);
}
