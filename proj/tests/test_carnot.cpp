#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dilatation/dilatation.hpp"
#include "oracles.hpp"

using namespace dilatation;

namespace {

Point random_element(std::mt19937_64& rng, int n, double half = 1.0) { return random_point(rng, Point::Zero(n), half); }

double fs_exponent(const GradedAlgebra& alg) {
  Point top = Point::Zero(alg.n);
  top(alg.layer(alg.step).front()) = 0.7;
  std::vector<double> norms, times;
  for (double e : make_ladder(12)) {
    Point a = group_dilation(alg, top, e);
    norms.push_back(a.norm());
    times.push_back(max_abs_time(folland_stein_decompose(alg, a)));
  }
  return power_law_fit(norms, times).exponent;
}

}  // namespace

TEST(Algebra, BuiltinsValidate) {
  for (const auto& alg : {heisenberg_algebra(), engel_algebra()}) {
    auto c = validate_algebra(alg);
    EXPECT_TRUE(c.valid()) << alg.name;
    EXPECT_LE(c.jacobi, 1e-12);
  }
  EXPECT_EQ(engel_algebra().step, 3);
  EXPECT_EQ(heisenberg_algebra().layer_dims(), (std::vector<int>{2, 1}));
}

TEST(Algebra, RejectsUngradedAndNonGenerating) {
  auto flat = make_algebra("flat", {1, 1, 2}, {});
  EXPECT_FALSE(validate_algebra(flat).generates);
  auto ungraded = make_algebra("ungraded", {1, 1, 1}, {{0, 1, 2, 1.0}});
  EXPECT_FALSE(validate_algebra(ungraded).graded);
  EXPECT_THROW(carnot_structure(flat, DistanceBackend::CoordinateGauge), Error);
}

TEST(Algebra, JacobiViolationDetected) {
  // [e3, [e0, e1]] = -e4 while the other two Jacobi terms vanish
  auto alg = make_algebra("broken", {1, 1, 2, 1, 3}, {{0, 1, 2, 1.0}, {2, 3, 4, 1.0}});
  auto c = validate_algebra(alg);
  EXPECT_TRUE(c.graded);
  EXPECT_NEAR(c.jacobi, 1.0, 1e-15);
  EXPECT_FALSE(c.valid());
  EXPECT_THROW(lie_bracket(alg, Point::Zero(5), Point::Zero(3)), Error);
}

TEST(Bch, HeisenbergMatchesMatrixOracle) {
  auto alg = heisenberg_algebra();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    Point a = random_element(rng, 3), b = random_element(rng, 3);
    EXPECT_LE(max_dist(bch_multiply(alg, a, b), oracle::mul(a, b)), 1e-14);
    EXPECT_LE(max_dist(group_dilation(alg, a, 0.3), oracle::scale(a, 0.3)), 1e-15);
  }
}

TEST(Bch, EngelAssociativeAndDilationIsAutomorphism) {
  auto alg = engel_algebra();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    Point a = random_element(rng, 4), b = random_element(rng, 4), c = random_element(rng, 4);
    EXPECT_LE(max_dist(bch_multiply(alg, bch_multiply(alg, a, b), c), bch_multiply(alg, a, bch_multiply(alg, b, c))),
              1e-12);
    EXPECT_LE(max_dist(group_dilation(alg, bch_multiply(alg, a, b), 0.4),
                       bch_multiply(alg, group_dilation(alg, a, 0.4), group_dilation(alg, b, 0.4))),
              1e-12);
    EXPECT_LE(max_norm(bch_multiply(alg, a, group_inverse(a))), 1e-15);
  }
}

TEST(Bch, StepFourUnsupported) {
  auto alg = make_algebra("filiform4", {1, 1, 2, 3, 4}, {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}, {0, 3, 4, 1.0}});
  Point a = Point::Zero(5);
  try {
    bch_multiply(alg, a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedStep);
  }
}

TEST(Bch, MismatchedElement) {
  try {
    bch_multiply(heisenberg_algebra(), Point::Zero(3), Point::Zero(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AlgebraMismatch);
  }
}

TEST(GaugeNorm, Homogeneous) {
  auto alg = engel_algebra();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    Point a = random_element(rng, 4);
    for (double e : {0.5, 0.1}) EXPECT_NEAR(gauge_norm(alg, group_dilation(alg, a, e)), e * gauge_norm(alg, a), 1e-12);
  }
}

TEST(FollandStein, ReconstructionOnSeededElements) {
  for (const auto& alg : {heisenberg_algebra(), engel_algebra()}) {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 100; ++i) {
      Point a = random_element(rng, alg.n);
      auto f = folland_stein_decompose(alg, a);
      for (const auto& x : f) {
        EXPECT_GE(x.generator, 1);
        EXPECT_LE(x.generator, static_cast<int>(alg.layer(1).size()));
      }
      EXPECT_LE(max_dist(compose_factors(alg, f), a), 1e-9) << alg.name;
    }
  }
}

TEST(FollandStein, TimesScaleWithInverseStep) {
  EXPECT_NEAR(fs_exponent(heisenberg_algebra()), 0.5, 0.05);
  EXPECT_NEAR(fs_exponent(engel_algebra()), 1.0 / 3.0, 0.05);
}

TEST(FollandStein, CommutatorOfMatrixOracle) {
  // exp(s e1) exp(s e2) exp(-s e1) exp(-s e2) = (0, 0, s^2)
  for (double s : {0.1, 0.7, 1.3}) {
    Point g = Point::Zero(3), h = Point::Zero(3);
    g(0) = s;
    h(1) = s;
    Point expect = oracle::commutator(g, h);
    auto alg = heisenberg_algebra();
    std::vector<Factor> w{{s, 1}, {s, 2}, {-s, 1}, {-s, 2}};
    EXPECT_LE(max_dist(compose_factors(alg, w), expect), 1e-14);
    EXPECT_NEAR(expect(2), s * s, 1e-14);
  }
}

TEST(CcDistance, UnitHorizontalAndVertical) {
  auto alg = heisenberg_algebra();
  Point o = Point::Zero(3), e1 = Point::Zero(3), z = Point::Zero(3);
  e1(0) = 1.0;
  z(2) = 1.0;
  auto est = cc_distance_estimate(alg, o, e1);
  EXPECT_NEAR(est.value, 1.0, 1e-4);
  double ref = std::sqrt(4.0 * std::numbers::pi);
  EXPECT_NEAR(cc_distance_estimate(alg, o, z).value / ref, 1.0, 0.02);
  EXPECT_EQ(cc_distance_estimate(alg, e1, e1).value, 0.0);
}

TEST(CcDistance, DominatesHorizontalProjection) {
  auto alg = heisenberg_algebra();
  std::mt19937_64 rng(8);
  for (int i = 0; i < 3; ++i) {
    Point p = random_element(rng, 3);
    double d = cc_distance_estimate(alg, Point::Zero(3), p).value;
    EXPECT_GE(d + 1e-9, std::hypot(p(0), p(1)));
  }
}

TEST(CarnotStructure, AgreesWithHandWrittenHeisenberg) {
  Structure a = carnot_structure(heisenberg_algebra(), DistanceBackend::CoordinateGauge);
  Structure b = make_heisenberg_sr();
  std::mt19937_64 rng(6);
  for (int i = 0; i < 30; ++i) {
    Point x = random_element(rng, 3), u = random_point(rng, x, 0.5);
    EXPECT_LE(max_dist(dilate(a, x, 0.3, u), dilate(b, x, 0.3, u)), 1e-14);
  }
}
