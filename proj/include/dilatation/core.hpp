#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dilatation/curve.hpp"
#include "dilatation/errors.hpp"

namespace dilatation {

inline constexpr double kLimitTol = 1e-6;
inline constexpr double kExactTol = 1e-12;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double max_norm(const Point& p) { return p.size() ? p.cwiseAbs().maxCoeff() : 0.0; }
inline double max_dist(const Point& a, const Point& b) { return max_norm(a - b); }

using DistanceFn = std::function<double(const Point&, const Point&)>;
using DilateFn = std::function<Point(const Point&, double, const Point&)>;
using PointMap = std::function<Point(const Point&)>;
using PointOp = std::function<Point(const Point&, const Point&)>;

/**
 * @brief A distance plus a base-point indexed field of dilations.
 *
 * `dilate_raw` is the bare formula. Domain checks and the exact short
 * circuits live in dilate().
 */
struct Structure {
  std::string name;
  int dim = 0;
  DistanceFn distance;
  DilateFn dilate_raw;
  double domain_radius = kInf;
  double cone_a = 2.0;
  double cone_b = 3.0;
  DistanceFn domain_distance;  // cheaper stand-in for domain tests, optional
};

/// Copy of `s` measuring with a different distance.
inline Structure with_distance(Structure s, DistanceFn d, std::string name) {
  if (!s.domain_distance) s.domain_distance = s.distance;
  s.distance = std::move(d);
  s.name = std::move(name);
  return s;
}

/// Scales 2^-k for k = k_min..k_max.
inline std::vector<double> make_ladder(int k_max = 24, int k_min = 1) {
  std::vector<double> out;
  for (int k = k_min; k <= k_max; ++k) out.push_back(std::ldexp(1.0, -k));
  return out;
}

inline Point dilate(const Structure& s, const Point& x, double eps, const Point& u) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorKind::Domain, "scale must be positive and finite");
  if (x.size() != s.dim || u.size() != s.dim) throw Error(ErrorKind::Domain, "point dimension mismatch");
  const DistanceFn& dd = s.domain_distance ? s.domain_distance : s.distance;
  if (dd(x, u) > s.domain_radius) throw Error(ErrorKind::Domain, "point outside the dilation domain");
  if (eps == 1.0) return u;
  if (u == x) return x;
  return s.dilate_raw(x, eps, u);
}

inline double rescaled_distance(const Structure& s, const Point& x, double eps, const Point& u, const Point& v) {
  if (u == v) return 0.0;
  return s.distance(dilate(s, x, eps, u), dilate(s, x, eps, v)) / eps;
}

inline Point delta_eps(const Structure& s, const Point& x, double eps, const Point& u, const Point& v) {
  if (u == v) return u;
  Point du = dilate(s, x, eps, u);
  return dilate(s, du, 1.0 / eps, dilate(s, x, eps, v));
}

inline Point sigma_eps(const Structure& s, const Point& x, double eps, const Point& u, const Point& v) {
  if (v == x) return u;
  Point du = dilate(s, x, eps, u);
  return dilate(s, x, 1.0 / eps, dilate(s, du, eps, v));
}

enum class Acceleration { None, Richardson };

/// Ladder, tolerance and optional single Richardson step for first-order limits.
struct LimitOptions {
  std::vector<double> ladder = make_ladder();
  double tol = kLimitTol;
  Acceleration acceleration = Acceleration::None;
};

/// Outcome of sampling an eps-indexed quantity along a ladder.
struct ConvergenceReport {
  std::vector<double> scales;
  std::vector<Point> samples;
  std::vector<double> differences;  // differences[k] = |samples[k+1] - samples[k]|
  std::vector<Point> accelerated;   // Richardson values, empty unless requested
  std::optional<Point> extrapolated;
  std::optional<double> empirical_rate;
  double residual_tail = kInf;
  bool converged = false;

  const Point& last() const { return samples.back(); }
  double scalar() const { return extrapolated ? (*extrapolated)(0) : samples.back()(0); }
};

/// Least-squares slope of log(y) against log(x).
inline std::optional<double> log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) continue;
    double lx = std::log(xs[i]), ly = std::log(ys[i]);
    n += 1;
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double den = n * sxx - sx * sx;
  if (n < 2 || den <= 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

struct PowerFit {
  double exponent = 0.0;
  double coefficient = 0.0;  // y ~ coefficient * x^exponent
};

/// Least-squares fit of log(y) = log(K) + m log(x); NOCONV on degenerate data.
inline PowerFit power_law_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  auto m = log_log_slope(xs, ys);
  if (!m) throw Error(ErrorKind::NoConv, "power law fit needs two distinct positive abscissae");
  double n = 0, acc = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) continue;
    acc += std::log(ys[i]) - *m * std::log(xs[i]);
    n += 1;
  }
  return {*m, std::exp(acc / n)};
}

/**
 * @brief Sample f along a strictly decreasing ladder and decide convergence.
 *
 * Converged when the last three successive differences are below tol and
 * the tail has not grown relative to the head. The rate is fitted on the
 * finer half of the successive differences that sit above the rounding
 * floor, so coarse pre-asymptotic scales do not bias it. With
 * Richardson acceleration the tolerance test runs on the accelerated
 * sequence while the decay test and the rate still use the raw samples.
 */
inline ConvergenceReport extrapolate_limit(const std::function<Point(double)>& f, const LimitOptions& opt = {}) {
  const auto& ladder = opt.ladder;
  if (ladder.size() < 2) throw Error(ErrorKind::Domain, "ladder needs at least two scales");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0)) throw Error(ErrorKind::Domain, "ladder scales must be positive");
    if (i > 0 && !(ladder[i] < ladder[i - 1])) throw Error(ErrorKind::Domain, "ladder must strictly decrease");
  }
  ConvergenceReport r;
  for (double eps : ladder) {
    Point p;
    try {
      p = f(eps);
    } catch (const Error& e) {
      throw Error(ErrorKind::Eval, std::string("at eps=") + std::to_string(eps) + ": " + e.what());
    }
    if (!p.allFinite()) throw Error(ErrorKind::Eval, "non-finite sample at eps=" + std::to_string(eps));
    r.scales.push_back(eps);
    r.samples.push_back(std::move(p));
  }
  std::vector<double> rate_x, rate_y;
  for (std::size_t k = 1; k < r.samples.size(); ++k) {
    double d = max_dist(r.samples[k], r.samples[k - 1]);
    r.differences.push_back(d);
    double floor = 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + max_norm(r.samples[k]));
    if (d > floor) {
      rate_x.push_back(r.scales[k]);
      rate_y.push_back(d);
    }
  }
  std::vector<double> test = r.differences;
  const std::vector<Point>* values = &r.samples;
  if (opt.acceleration == Acceleration::Richardson) {
    for (std::size_t k = 1; k < r.samples.size(); ++k) {
      double q = r.scales[k - 1] / r.scales[k];
      r.accelerated.push_back((q * r.samples[k] - r.samples[k - 1]) / (q - 1.0));
    }
    test.clear();
    for (std::size_t k = 1; k < r.accelerated.size(); ++k) {
      test.push_back(max_dist(r.accelerated[k], r.accelerated[k - 1]));
    }
    values = &r.accelerated;
  }
  const auto& d = r.differences;
  std::size_t m = d.size();
  std::size_t tail = std::min<std::size_t>(3, m);
  double head = 0.0, tail_mean = 0.0;
  for (std::size_t i = 0; i < tail; ++i) {
    head += d[i] / tail;
    tail_mean += d[m - 1 - i] / tail;
  }
  bool decaying = tail_mean <= head || tail_mean <= 0.1 * opt.tol;
  std::size_t tt = std::min<std::size_t>(3, test.size());
  r.residual_tail = tt ? *std::max_element(test.end() - static_cast<long>(tt), test.end()) : kInf;
  r.converged = tt >= 3 && r.residual_tail <= opt.tol && decaying;
  if (r.converged) r.extrapolated = values->back();
  if (rate_x.size() >= 4) {
    std::size_t from = rate_x.size() - std::max<std::size_t>(4, rate_x.size() / 2);
    r.empirical_rate = log_log_slope({rate_x.begin() + static_cast<long>(from), rate_x.end()},
                                     {rate_y.begin() + static_cast<long>(from), rate_y.end()});
  }
  return r;
}

inline ConvergenceReport extrapolate_scalar(const std::function<double(double)>& f, const LimitOptions& opt = {}) {
  return extrapolate_limit(
      [&](double eps) {
        Point p(1);
        p(0) = f(eps);
        return p;
      },
      opt);
}

inline Point require_limit(const ConvergenceReport& r, const char* what) {
  if (!r.converged) {
    throw Error(ErrorKind::NoConv, std::string(what) + " did not converge (tail " + std::to_string(r.residual_tail) + ")");
  }
  return *r.extrapolated;
}

inline ConvergenceReport delta_limit(const Structure& s, const Point& x, const Point& u, const Point& v,
                                     const LimitOptions& opt = {}) {
  return extrapolate_limit([&](double e) { return delta_eps(s, x, e, u, v); }, opt);
}

inline ConvergenceReport sigma_limit(const Structure& s, const Point& x, const Point& u, const Point& v,
                                     const LimitOptions& opt = {}) {
  return extrapolate_limit([&](double e) { return sigma_eps(s, x, e, u, v); }, opt);
}

inline ConvergenceReport tangent_distance(const Structure& s, const Point& x, const Point& u, const Point& v,
                                          const LimitOptions& opt = {}) {
  return extrapolate_scalar([&](double e) { return rescaled_distance(s, x, e, u, v); }, opt);
}

/// Tangent operations at one base point.
struct TangentFiber {
  Point base;
  PointOp sigma;
  PointOp delta_limit;
  PointMap inverse;
  DistanceFn local_distance;
};

/// Fiber whose operations are the extrapolated limits of `s`; NOCONV on failure.
inline TangentFiber make_tangent_fiber(const Structure& s, const Point& x, const LimitOptions& opt = {}) {
  TangentFiber f;
  f.base = x;
  f.sigma = [s, x, opt](const Point& u, const Point& v) {
    if (v == x) return u;
    if (u == x) return v;
    return require_limit(sigma_limit(s, x, u, v, opt), "sigma");
  };
  f.delta_limit = [s, x, opt](const Point& u, const Point& v) {
    if (u == v) return u;
    if (u == x) return v;
    return require_limit(delta_limit(s, x, u, v, opt), "delta");
  };
  f.inverse = [s, x, opt](const Point& y) {
    if (y == x) return x;
    return require_limit(delta_limit(s, x, y, x, opt), "inverse");
  };
  f.local_distance = [s, x, opt](const Point& u, const Point& v) {
    if (u == v) return 0.0;
    return require_limit(tangent_distance(s, x, u, v, opt), "tangent distance")(0);
  };
  return f;
}

inline Point inv_point(const Structure& s, const Point& x, const Point& y, const LimitOptions& opt = {}) {
  if (y == x) return x;
  return require_limit(delta_limit(s, x, y, x, opt), "inverse");
}

/// Forward and backward dilation quotients of a curve at t.
struct CurveDerivative {
  ConvergenceReport forward;
  ConvergenceReport backward;
  bool converged() const { return forward.converged; }
};

inline CurveDerivative curve_derivative(const Structure& s, const SampledCurve& c, double t,
                                        const LimitOptions& opt = {}, double time_scale = 0.0) {
  if (!(t > c.start()) || !(t < c.finish())) throw Error(ErrorKind::Domain, "derivative needs an interior time");
  double span = time_scale > 0.0 ? time_scale : 0.5 * std::min(t - c.start(), c.finish() - t);
  Point ct = c.at(t);
  CurveDerivative out;
  out.forward = extrapolate_limit([&](double e) { return dilate(s, ct, 1.0 / (span * e), c.at(t + span * e)); },
                                  opt);
  out.backward = extrapolate_limit([&](double e) { return dilate(s, ct, 1.0 / (span * e), c.at(t - span * e)); },
                                   opt);
  return out;
}

struct DnMembership {
  bool member = false;
  double residual = 0.0;
};

/// Whether u generates a one-parameter group: Sigma(d_a u, d_b u) = d_{a+b} u on sampled a, b.
inline DnMembership dn_membership(const Structure& s, const TangentFiber& fiber, const Point& u, double tol) {
  const Point& x = fiber.base;
  if (u == x) return {true, 0.0};
  const double grid[] = {0.25, 0.5, 0.75, 1.0};
  double worst = 0.0;
  for (double a : grid) {
    for (double b : grid) {
      Point lhs = fiber.sigma(dilate(s, x, a, u), dilate(s, x, b, u));
      Point rhs = dilate(s, x, a + b, u);
      worst = std::max(worst, s.distance(lhs, rhs));
    }
  }
  return {worst <= tol, worst};
}

inline ConvergenceReport map_differential(const Structure& src, const Structure& dst, const PointMap& f,
                                          const Point& x, const Point& u, const LimitOptions& opt = {}) {
  Point fx = f(x);
  return extrapolate_limit([&](double e) { return dilate(dst, fx, 1.0 / e, f(dilate(src, x, e, u))); }, opt);
}

struct EquivalenceReport {
  ConvergenceReport p;  // s2 pulled back along s1
  ConvergenceReport q;  // s1 pulled back along s2
  double roundtrip = kInf;
  double lipschitz_low = 0.0;
  double lipschitz_high = kInf;
  bool equivalent = false;
};

inline EquivalenceReport equivalence_maps(const Structure& s1, const Structure& s2, const Point& x, const Point& u,
                                          const LimitOptions& opt = {}) {
  const auto& ladder = opt.ladder;
  const double tol = opt.tol;
  EquivalenceReport r;
  r.p = extrapolate_limit([&](double e) { return dilate(s2, x, 1.0 / e, dilate(s1, x, e, u)); }, opt);
  r.q = extrapolate_limit([&](double e) { return dilate(s1, x, 1.0 / e, dilate(s2, x, e, u)); }, opt);
  if (r.p.converged && r.q.converged) {
    const Point pu = *r.p.extrapolated;
    auto back = extrapolate_limit([&](double e) { return dilate(s1, x, 1.0 / e, dilate(s2, x, e, pu)); }, opt);
    if (back.converged) r.roundtrip = max_dist(*back.extrapolated, u);
  }
  r.lipschitz_low = kInf;
  r.lipschitz_high = 0.0;
  for (std::size_t k = 0; k < std::min<std::size_t>(ladder.size(), 8); ++k) {
    Point w = dilate(s1, x, ladder[k], u);
    double d2 = s2.distance(x, w);
    if (d2 <= 0.0) continue;
    double ratio = s1.distance(x, w) / d2;
    r.lipschitz_low = std::min(r.lipschitz_low, ratio);
    r.lipschitz_high = std::max(r.lipschitz_high, ratio);
  }
  bool lipschitz = r.lipschitz_low >= 1e-3 && r.lipschitz_high <= 1e3;
  r.equivalent = r.p.converged && r.q.converged && r.roundtrip <= 10.0 * tol && lipschitz;
  return r;
}

/// Sampling plan for the axiom verifier.
struct SamplePlan {
  int samples = 16;
  double box = 1.0;
  double radius = 0.5;
  LimitOptions limit;
  std::uint64_t seed = 42;
  double exact_tol = kExactTol;
  bool check_a3 = true;
};

struct AxiomEntry {
  std::string axiom;
  bool pass = true;
  double worst = 0.0;
  std::optional<double> min_rate{};
};

struct AxiomReport {
  std::vector<AxiomEntry> entries;
  bool all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const AxiomEntry& e) { return e.pass; });
  }
  const AxiomEntry& get(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.axiom == name) return e;
    }
    throw Error(ErrorKind::Eval, "no axiom entry " + name);
  }
};

/// Uniform point in the cube of half-width `half` around `center`.
inline Point random_point(std::mt19937_64& rng, const Point& center, double half) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Point p(center.size());
  for (int i = 0; i < p.size(); ++i) p(i) = center(i) + half * U(rng);
  return p;
}

namespace detail {

// Point on the chart ray x + t (dir - x) at distance ~target from x.
inline Point point_at_distance(const Structure& s, const Point& x, const Point& dir, double target) {
  Point step = dir - x;
  double hi = 1.0;
  for (int i = 0; i < 60 && s.distance(x, x + hi * step) < target; ++i) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (s.distance(x, x + mid * step) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return x + lo * step;
}

}  // namespace detail

/**
 * @brief Numerical falsification of A0-A4 on seeded samples.
 *
 * A0 covers the outer inclusions only: points of B(x, eps) pull back into
 * B(x, A), and dilated images of B(x, B) stay inside the domain.
 */
inline AxiomReport check_axioms(const Structure& s, const SamplePlan& plan) {
  std::mt19937_64 rng(plan.seed);
  AxiomEntry a0{"A0"}, a1{"A1"}, a2{"A2"}, a3{"A3"}, a4{"A4"};
  const double scales[] = {0.5, 0.1, 0.01};
  const double pairs[][2] = {{0.5, 0.5}, {0.3, 0.7}, {0.1, 0.2}, {2.0, 0.25}};
  Point origin = Point::Zero(s.dim);
  auto note_rate = [](AxiomEntry& e, const ConvergenceReport& r) {
    if (r.empirical_rate) e.min_rate = e.min_rate ? std::min(*e.min_rate, *r.empirical_rate) : *r.empirical_rate;
  };
  for (int i = 0; i < plan.samples; ++i) {
    Point x = random_point(rng, origin, plan.box);
    Point u = random_point(rng, x, plan.radius);
    Point v = random_point(rng, x, plan.radius);

    double r1 = max_dist(s.dilate_raw(x, 1.0, u), u);
    for (double e : scales) r1 = std::max(r1, max_dist(s.dilate_raw(x, e, x), x));
    a1.worst = std::max(a1.worst, r1);

    for (const auto& pr : pairs) {
      Point lhs = s.dilate_raw(x, pr[0], s.dilate_raw(x, pr[1], u));
      Point rhs = s.dilate_raw(x, pr[0] * pr[1], u);
      a2.worst = std::max(a2.worst, max_dist(lhs, rhs));
    }

    for (double e : scales) {
      Point y = detail::point_at_distance(s, x, u, 0.9 * e);
      double inner = s.distance(x, s.dilate_raw(x, 1.0 / e, y)) / s.cone_a;
      double outer = 0.0;
      if (std::isfinite(s.domain_radius)) {
        Point w = detail::point_at_distance(s, x, u, 0.99 * s.cone_b);
        outer = s.distance(x, s.dilate_raw(x, e, w)) / s.domain_radius;
      }
      a0.worst = std::max({a0.worst, inner, outer});
    }

    if (plan.check_a3) {
      auto r = tangent_distance(s, x, u, v, plan.limit);
      a3.pass = a3.pass && r.converged;
      a3.worst = std::max(a3.worst, r.residual_tail);
      note_rate(a3, r);
    }
    auto r4 = delta_limit(s, x, u, v, plan.limit);
    a4.pass = a4.pass && r4.converged;
    a4.worst = std::max(a4.worst, r4.residual_tail);
    note_rate(a4, r4);
  }
  a0.pass = a0.worst < 1.0;
  a1.pass = a1.worst <= plan.exact_tol;
  a2.pass = a2.worst <= plan.exact_tol;
  AxiomReport rep;
  rep.entries = {a0, a1, a2};
  if (plan.check_a3) rep.entries.push_back(a3);
  rep.entries.push_back(a4);
  return rep;
}

}  // namespace dilatation
