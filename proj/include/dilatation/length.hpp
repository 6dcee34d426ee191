#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dilatation/core.hpp"
#include "dilatation/optim.hpp"
#include "dilatation/projection.hpp"

namespace dilatation {

struct LengthReport {
  double variation = 0.0;
  std::vector<double> refined_variation_history;  // one chord sum per dyadic level
  double metric_derivative_integral = 0.0;
  int grid_levels = 0;
  bool stable = false;
  bool unbounded = false;
};

/**
 * @brief Chord sums over dyadic partitions until the relative change drops below `rel_tol`.
 *
 * Each level refines the previous one, so the history is non-decreasing by
 * the triangle inequality. Geometric growth that never slows sets `unbounded`.
 */
inline LengthReport variation(const Structure& s, const SampledCurve& c, double rel_tol = 1e-4, int max_level = 16) {
  validate_curve(c);
  LengthReport rep;
  const double a = c.start(), b = c.finish();
  std::vector<Point> pts{c.at(a), c.at(b)};
  std::vector<double> changes;
  for (int level = 0; level <= max_level; ++level) {
    if (level > 0) {
      std::vector<Point> next;
      const std::size_t n = pts.size() - 1;
      next.reserve(2 * n + 1);
      for (std::size_t i = 0; i < n; ++i) {
        next.push_back(pts[i]);
        next.push_back(c.at(a + (b - a) * (2.0 * i + 1.0) / (2.0 * n)));
      }
      next.push_back(pts.back());
      pts = std::move(next);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) sum += s.distance(pts[i], pts[i + 1]);
    if (!rep.refined_variation_history.empty()) {
      sum = std::max(sum, rep.refined_variation_history.back());
      double prev = rep.refined_variation_history.back();
      changes.push_back(prev > 0.0 ? (sum - prev) / prev : (sum > 0.0 ? kInf : 0.0));
    }
    rep.refined_variation_history.push_back(sum);
    rep.grid_levels = level;
    if (level >= 4 && !changes.empty() && changes.back() < rel_tol) {
      rep.stable = true;
      break;
    }
  }
  rep.variation = rep.refined_variation_history.back();
  if (!rep.stable && changes.size() >= 3) {
    std::size_t m = changes.size();
    bool geometric = true;
    for (std::size_t i = m - 3; i < m; ++i) geometric = geometric && changes[i] > 0.05;
    rep.unbounded = geometric;
  }
  return rep;
}

namespace detail {

// Quotient d(c(t +/- h), c(t)) / h on one side, h = span * eps.
inline double side_quotient(const Structure& s, const SampledCurve& c, double t, double h, int side) {
  double tt = std::clamp(t + side * h, c.start(), c.finish());
  double hh = std::abs(tt - t);
  return hh > 0.0 ? s.distance(c.at(tt), c.at(t)) / hh : 0.0;
}

}  // namespace detail

/// One-sided metric speed at t (side = +1 or -1) over span * ladder.
inline ConvergenceReport one_sided_speed(const Structure& s, const SampledCurve& c, double t, int side, double span,
                                         const LimitOptions& opt) {
  return extrapolate_scalar([&](double e) { return detail::side_quotient(s, c, t, span * e, side); }, opt);
}

/**
 * @brief Metric derivative at t from both one-sided quotients.
 *
 * Each rung takes the larger of the quotients whose probe point stays in the
 * curve interval, with span half the interval length.
 */
inline ConvergenceReport metric_derivative(const Structure& s, const SampledCurve& c, double t,
                                           const LimitOptions& opt = {}) {
  if (t < c.start() || t > c.finish()) throw Error(ErrorKind::Domain, "metric derivative outside the curve interval");
  const double span = 0.5 * (c.finish() - c.start());
  Point ct = c.at(t);
  return extrapolate_scalar(
      [&](double e) {
        double h = span * e, best = 0.0;
        for (int side : {1, -1}) {
          double tt = t + side * h;
          if (tt < c.start() || tt > c.finish()) continue;
          best = std::max(best, s.distance(c.at(tt), ct) / h);
        }
        return best;
      },
      opt);
}

/**
 * @brief Richardson ladder from `span` down to about `final_step`.
 *
 * Vertical roundoff grows like 1/h^2 at off-origin base points, so the depth
 * is set by the final step rather than fixed.
 */
inline LimitOptions step_ladder(double span, double final_step = 1e-4, double tol = kLimitTol, int min_rungs = 10) {
  int k = static_cast<int>(std::lround(std::log2(span / final_step)));
  return {make_ladder(std::clamp(k, min_rungs, 24)), tol, Acceleration::Richardson};
}

struct LengthOptions {
  LimitOptions speed{make_ladder(12), 1e-6, Acceleration::Richardson};
};

namespace detail {

inline double speed_value(const Structure& s, const SampledCurve& c, double t, int side, double span,
                          const LimitOptions& opt) {
  auto r = one_sided_speed(s, c, t, side, span, opt);
  if (!r.converged) {
    throw Error(ErrorKind::NoConv, "metric derivative did not converge at t=" + std::to_string(t));
  }
  return r.scalar();
}

inline double trapezoid_on(const Structure& s, const SampledCurve& c, const std::vector<double>& grid,
                           const LimitOptions& opt) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double a = grid[i], b = grid[i + 1], h = b - a;
    double left = speed_value(s, c, a, 1, h, opt);
    double right = speed_value(s, c, b, -1, h, opt);
    sum += 0.5 * h * (left + right);
  }
  return sum;
}

}  // namespace detail

/**
 * @brief Integral of the metric derivative by the trapezoid rule on the curve grid, Richardson-refined once.
 *
 * Each interval uses the right derivative at its left end and the left
 * derivative at its right end, so kinks at grid nodes cost nothing.
 */
inline double curve_length(const Structure& s, const SampledCurve& c, const LengthOptions& opt = {}) {
  validate_curve(c);
  const auto& coarse = c.times;
  std::vector<double> fine;
  for (std::size_t i = 0; i + 1 < coarse.size(); ++i) {
    fine.push_back(coarse[i]);
    fine.push_back(0.5 * (coarse[i] + coarse[i + 1]));
  }
  fine.push_back(coarse.back());
  double t1 = detail::trapezoid_on(s, c, coarse, opt.speed);
  double t2 = detail::trapezoid_on(s, c, fine, opt.speed);
  return std::max(0.0, (4.0 * t2 - t1) / 3.0);
}

/// Variation and metric-derivative integral side by side.
inline LengthReport length_report(const Structure& s, const SampledCurve& c, const LengthOptions& opt = {}) {
  LengthReport rep = variation(s, c);
  if (!rep.unbounded) rep.metric_derivative_integral = curve_length(s, c, opt);
  return rep;
}

/**
 * @brief Same trace run at constant speed over [0, length].
 *
 * Cumulative chord length on a fine grid is inverted piecewise linearly.
 */
inline SampledCurve reparametrize_unit_speed(const Structure& s, const SampledCurve& c, int fine = 4096,
                                             int nodes = 64) {
  LengthReport v = variation(s, c);
  if (v.unbounded) throw Error(ErrorKind::Unbounded, "curve has unbounded variation");
  const double a = c.start(), b = c.finish();
  std::vector<double> ts(fine + 1), cum(fine + 1, 0.0);
  Point prev = c.at(a);
  ts[0] = a;
  for (int i = 1; i <= fine; ++i) {
    ts[i] = a + (b - a) * i / fine;
    Point p = c.at(ts[i]);
    cum[i] = cum[i - 1] + s.distance(prev, p);
    prev = std::move(p);
  }
  const double total = cum.back();
  if (!(total > 0.0)) throw Error(ErrorKind::Domain, "constant curve has no unit-speed parametrization");
  auto inverse = [ts, cum](double sigma) {
    auto it = std::lower_bound(cum.begin(), cum.end(), sigma);
    if (it == cum.begin()) return ts.front();
    if (it == cum.end()) return ts.back();
    std::size_t i = static_cast<std::size_t>(it - cum.begin());
    double span = cum[i] - cum[i - 1];
    double w = span > 0.0 ? (sigma - cum[i - 1]) / span : 0.0;
    return ts[i - 1] + w * (ts[i] - ts[i - 1]);
  };
  auto src = c;
  return make_curve([src, inverse](double sigma) { return src.at(inverse(sigma)); }, 0.0, total, nodes);
}

/// Copy of s whose distance is divided by eps.
inline Structure scaled_distance(const Structure& s, double eps) {
  Structure out = s;
  DistanceFn d = s.distance;
  out.distance = [d, eps](const Point& a, const Point& b) { return d(a, b) / eps; };
  return out;
}

/**
 * @brief l_eps^x(c) = length of delta_eps^x c measured with d / eps.
 *
 * Admissibility is checked first: the dilated curve must have bounded
 * variation and Lipschitz constant at most twice its length, otherwise it is
 * reparametrized at unit speed before measuring.
 */
inline double rescaled_length(const Structure& s, const Point& x, double eps, const SampledCurve& c,
                              const LengthOptions& opt = {}) {
  Structure se = scaled_distance(s, eps);
  SampledCurve dc = map_curve(c, [&s, x, eps](const Point& p) { return dilate(s, x, eps, p); });
  LengthReport v = variation(se, dc);
  if (v.unbounded) throw Error(ErrorKind::Inadmissible, "dilated curve has unbounded variation");
  double lip = 0.0;
  const int n = 256;
  Point prev = dc.at(dc.start());
  for (int i = 1; i <= n; ++i) {
    double t = dc.start() + (dc.finish() - dc.start()) * i / n;
    Point p = dc.at(t);
    lip = std::max(lip, se.distance(prev, p) * n / (dc.finish() - dc.start()));
    prev = std::move(p);
  }
  if (v.variation == 0.0) return 0.0;
  if (lip > 2.0 * v.variation) dc = reparametrize_unit_speed(se, dc);
  return curve_length(se, dc, opt);
}

/// lim l_eps^x(c) extrapolated over `ladder`; NOCONV when the ladder does not settle.
inline ConvergenceReport limit_length(const Structure& s, const Point& x, const SampledCurve& c,
                                      const LimitOptions& opt = {make_ladder(12), 1e-6, Acceleration::Richardson},
                                      const LengthOptions& lopt = {}) {
  return extrapolate_scalar([&](double e) { return rescaled_length(s, x, e, c, lopt); }, opt);
}

/// Base length of the projected curve: (1 / eps) bar-l(bar-delta_eps^x Q_eps^x c).
inline double projected_rescaled_length(const CoherentProjection& q, const Point& x, double eps, const SampledCurve& c,
                                        const LengthOptions& opt = {}) {
  SampledCurve qc = map_curve(c, [&q, x, eps](const Point& p) { return project(q, x, eps, p); });
  return rescaled_length(q.base, x, eps, qc, opt);
}

struct HorizontalDistance {
  double value = kInf;
  double lower_bound = 0.0;  // base distance between the endpoints
  std::vector<FlowPiece> pieces;
  SampledCurve curve;
  Point midpoint;
};

struct HorizontalDistanceOptions {
  int free_moves = 2;
  int max_iter = 400;
  double tol = 1e-9;
};

namespace detail {

// Base length of one flow piece: chord sums on 8 and 16 pieces, Richardson-combined.
inline double piece_length(const CoherentProjection& q, const Point& x, const FlowPiece& f) {
  auto chords = [&](int n) {
    double sum = 0.0;
    Point prev = f.start;
    for (int i = 1; i <= n; ++i) {
      Point p = i == n ? f.end : flow_point(q, 1.0, x, f.start, f.letter, f.duration * i / n);
      sum += q.base.distance(prev, p);
      prev = std::move(p);
    }
    return sum;
  };
  double s8 = chords(8), s16 = chords(16);
  return std::max(s16, (4.0 * s16 - s8) / 3.0);
}

struct HorizontalCandidate {
  std::vector<FlowPiece> pieces;
  double length = kInf;
  bool reached = false;
};

inline HorizontalCandidate horizontal_candidate(const CoherentProjection& q, const Point& x, const Point& y,
                                                const std::vector<double>& free, double tol) {
  HorizontalCandidate out;
  Point a = x;
  auto advance = flow_advance(q, 1.0, x);
  const int m = q.horizontal_rank;
  for (std::size_t k = 0; k + static_cast<std::size_t>(m) <= free.size(); k += m) {
    Eigen::VectorXd coef = Eigen::Map<const Eigen::VectorXd>(free.data() + k, m);
    auto [letter, next] = advance(a, coef);
    out.pieces.push_back({a, letter, 1.0, next});
    a = next;
  }
  WordSolve ws = solve_word(q, a, y, 5, advance, false, tol);
  for (std::size_t k = 0; k < ws.word.letters.size(); ++k) {
    out.pieces.push_back({ws.word.images[k], ws.word.letters[k], 1.0, ws.word.images[k + 1]});
  }
  out.reached = ws.residual <= tol;
  out.length = 0.0;
  for (const auto& f : out.pieces) out.length += piece_length(q, x, f);
  return out;
}

}  // namespace detail

/**
 * @brief Upper bound for the horizontal length distance from x to y.
 *
 * Candidates are a few free horizontal flows followed by a closing word
 * solved exactly; the free moves are tuned by Nelder-Mead.
 */
inline HorizontalDistance horizontal_length_distance(const CoherentProjection& q, const Point& x, const Point& y,
                                                     const HorizontalDistanceOptions& opt = {}) {
  HorizontalDistance out;
  out.lower_bound = q.base.distance(x, y);
  if (x == y) {
    out.value = 0.0;
    out.curve = concatenate_flows(q, 1.0, x, {}, x);
    out.midpoint = x;
    return out;
  }
  const int dims = opt.free_moves * q.horizontal_rank;
  auto cost = [&](const std::vector<double>& p) {
    auto c = detail::horizontal_candidate(q, x, y, p, opt.tol);
    return c.reached ? c.length : 1e6 + c.length;
  };
  std::vector<double> p0(dims, 0.0);
  auto best = detail::horizontal_candidate(q, x, y, p0, opt.tol);
  if (dims > 0) {
    double scale = 0.25 * std::max(best.length, out.lower_bound);
    auto res = simplex_minimize(cost, p0, scale > 0.0 ? scale : 0.1, opt.max_iter, 1e-10);
    auto cand = detail::horizontal_candidate(q, x, y, res.x, opt.tol);
    if (cand.reached && cand.length < best.length) best = cand;
  }
  if (!best.reached) throw Error(ErrorKind::NotReached, "no horizontal candidate reaches the target");
  // drop idle pieces
  std::vector<FlowPiece> pieces;
  for (const auto& f : best.pieces) {
    if (q.base.distance(f.start, f.end) > 0.0) pieces.push_back(f);
  }
  out.pieces = pieces;
  out.value = best.length;
  out.curve = concatenate_flows(q, 1.0, x, pieces, x, 8);
  // midpoint at half length
  double half = 0.5 * out.value, acc = 0.0;
  out.midpoint = y;
  for (const auto& f : pieces) {
    double len = detail::piece_length(q, x, f);
    if (acc + len >= half) {
      double lo = 0.0, hi = f.duration;
      for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        FlowPiece part{f.start, f.letter, mid, flow_point(q, 1.0, x, f.start, f.letter, mid)};
        (acc + detail::piece_length(q, x, part) < half ? lo : hi) = mid;
      }
      out.midpoint = flow_point(q, 1.0, x, f.start, f.letter, 0.5 * (lo + hi));
      break;
    }
    acc += len;
  }
  return out;
}

struct TemperedOptions {
  int samples = 16;
  double box = 1.0;
  double radius = 0.3;
  std::uint64_t seed = 42;
  std::vector<double> scales = make_ladder(12);
  LimitOptions tangent{make_ladder(24), 1e-6, Acceleration::None};
  int phi_tail = 4;
};

struct PhiSample {
  Point x;
  Point u;
  double phi = 0.0;
  double tangent = 0.0;  // bar-d^x(x, u)
};

struct TemperedReport {
  std::vector<double> scales;
  std::vector<double> c_per_scale;
  std::vector<double> big_c_per_scale;
  double c = kInf;
  double big_c = 0.0;
  std::vector<PhiSample> phi;
  double sandwich_violation = 0.0;  // worst relative excursion of phi outside [c, C] bar-d^x
  bool stable = false;
  bool tempered = false;
};

/**
 * @brief Envelopes of (1/eps) d(bar-delta u, bar-delta v) / bar-d^x(u, v) per eps and overall.
 *
 * Stable means the per-eps envelopes vary by at most 10% over the finer half
 * of the scales.
 */
inline TemperedReport phi_and_tempered(const Structure& base, const DistanceFn& d, const TemperedOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  TemperedReport rep;
  rep.scales = opt.scales;
  rep.c_per_scale.assign(opt.scales.size(), kInf);
  rep.big_c_per_scale.assign(opt.scales.size(), 0.0);
  Point origin = Point::Zero(base.dim);
  for (int i = 0; i < opt.samples; ++i) {
    Point x = random_point(rng, origin, opt.box);
    Point u = random_point(rng, x, opt.radius);
    Point v = random_point(rng, x, opt.radius);
    double dbar = require_limit(tangent_distance(base, x, u, v, opt.tangent), "tangent distance")(0);
    if (!(dbar > 0.0)) continue;
    for (std::size_t k = 0; k < opt.scales.size(); ++k) {
      double e = opt.scales[k];
      double ratio = d(dilate(base, x, e, u), dilate(base, x, e, v)) / (e * dbar);
      rep.c_per_scale[k] = std::min(rep.c_per_scale[k], ratio);
      rep.big_c_per_scale[k] = std::max(rep.big_c_per_scale[k], ratio);
    }
    PhiSample ps{x, u};
    ps.tangent = require_limit(tangent_distance(base, x, x, u, opt.tangent), "tangent distance")(0);
    std::size_t tail = std::min<std::size_t>(opt.phi_tail, opt.scales.size());
    for (std::size_t k = opt.scales.size() - tail; k < opt.scales.size(); ++k) {
      double e = opt.scales[k];
      ps.phi = std::max(ps.phi, d(x, dilate(base, x, e, u)) / e);
    }
    rep.phi.push_back(ps);
  }
  for (std::size_t k = 0; k < opt.scales.size(); ++k) {
    rep.c = std::min(rep.c, rep.c_per_scale[k]);
    rep.big_c = std::max(rep.big_c, rep.big_c_per_scale[k]);
  }
  for (const auto& ps : rep.phi) {
    if (!(ps.tangent > 0.0)) continue;
    double r = ps.phi / ps.tangent;
    double excess = std::max(rep.c - r, r - rep.big_c) / std::max(r, 1e-300);
    rep.sandwich_violation = std::max(rep.sandwich_violation, std::max(0.0, excess));
  }
  std::size_t from = opt.scales.size() / 2;
  double cmin = kInf, cmax = 0.0, bmin = kInf, bmax = 0.0;
  for (std::size_t k = from; k < opt.scales.size(); ++k) {
    cmin = std::min(cmin, rep.c_per_scale[k]);
    cmax = std::max(cmax, rep.c_per_scale[k]);
    bmin = std::min(bmin, rep.big_c_per_scale[k]);
    bmax = std::max(bmax, rep.big_c_per_scale[k]);
  }
  rep.stable = cmin > 0.0 && cmax <= 1.1 * cmin && bmax <= 1.1 * bmin;
  rep.tempered = rep.stable && rep.c > 0.0 && rep.c <= rep.big_c && std::isfinite(rep.big_c);
  return rep;
}

/// Integral of phi_d(c(t), c'(t)) with c' the base derivative, midpoint rule on n intervals.
inline double phi_integral(const Structure& base, const DistanceFn& d, const SampledCurve& c, int n = 32,
                           int phi_tail = 4, double final_step = 1e-4) {
  const double lo = c.start(), hi = c.finish(), h = (hi - lo) / n;
  const auto tail_scales = make_ladder(12);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = lo + (i + 0.5) * h;
    double span = 0.5 * std::min(t - lo, hi - t);
    auto der = curve_derivative(base, c, t, step_ladder(span, final_step), span);
    const Point v = require_limit(der.forward, "curve derivative");
    Point ct = c.at(t);
    double best = 0.0;
    for (std::size_t k = tail_scales.size() - phi_tail; k < tail_scales.size(); ++k) {
      best = std::max(best, d(ct, dilate(base, ct, tail_scales[k], v)) / tail_scales[k]);
    }
    sum += best;
  }
  return sum * h;
}

struct PhiDistance {
  double value = kInf;
  double start_value = kInf;
  std::vector<Point> vertices;
};

/**
 * @brief inf of the phi_d integral over chart polylines from x to y with `interior` free vertices.
 *
 * The search starts from a seeded perturbation of the straight polyline.
 */
inline PhiDistance phi_length_distance(const Structure& base, const DistanceFn& d, const Point& x, const Point& y,
                                       int interior = 2, std::uint64_t seed = 42, int nodes = 4) {
  const int dim = static_cast<int>(x.size());
  auto vertices_of = [&](const std::vector<double>& p) {
    std::vector<Point> v{x};
    for (int k = 0; k < interior; ++k) v.push_back(Eigen::Map<const Eigen::VectorXd>(p.data() + k * dim, dim));
    v.push_back(y);
    return v;
  };
  auto integral = [&](const std::vector<double>& p) {
    auto v = vertices_of(p);
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      if (max_dist(v[k], v[k + 1]) == 0.0) continue;
      Point a = v[k], b = v[k + 1];
      auto seg = make_curve([a, b](double t) { return Point(a + t * (b - a)); }, 0.0, 1.0, 2);
      sum += phi_integral(base, d, seg, nodes);
    }
    return sum;
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double spread = 0.2 * max_dist(x, y);
  std::vector<double> p0;
  for (int k = 1; k <= interior; ++k) {
    Point v = x + (static_cast<double>(k) / (interior + 1)) * (y - x);
    for (int i = 0; i < dim; ++i) p0.push_back(v(i) + spread * U(rng));
  }
  PhiDistance out;
  out.start_value = integral(p0);
  auto res = simplex_minimize(integral, p0, spread > 0.0 ? spread : 0.1, 2000, 1e-9);
  out.value = std::min(out.start_value, res.value);
  out.vertices = vertices_of(res.value <= out.start_value ? res.x : p0);
  return out;
}

struct RnpPoint {
  double t = 0.0;
  bool derivable = false;
  double speed = 0.0;            // metric derivative
  double tangent_speed = 0.0;    // d^{c(t)}(c(t), c'(t))
  double identity_residual = 0.0;
  double cluster_diameter = 0.0;  // spread of the quotients on the ladder tail
};

struct RnpOptions {
  int points = 101;
  double threshold = 0.95;
  double identity_tol = 0.05;
  double final_step = 1e-4;  // last quotient step, in curve time
  double derivative_tol = 1e-6;
  int cluster_tail = 8;
};

struct RnpReport {
  std::vector<RnpPoint> points;
  double fraction = 0.0;
  double max_identity_residual = 0.0;
  double mean_cluster_diameter = 0.0;
  double lipschitz = 0.0;
  bool pass = false;  // fraction >= threshold and identity within tolerance
};

/**
 * @brief Derivability fraction on a uniform interior grid and the speed identity at derivable points.
 *
 * The cluster diameter is the largest pairwise distance among the last
 * `cluster_tail` forward quotients.
 */
inline RnpReport rnp_probe(const Structure& s, const SampledCurve& c, const RnpOptions& opt = {}) {
  validate_curve(c);
  RnpReport rep;
  const double a = c.start(), b = c.finish();
  {
    const int n = 512;
    Point prev = c.at(a);
    for (int i = 1; i <= n; ++i) {
      Point p = c.at(a + (b - a) * i / n);
      rep.lipschitz = std::max(rep.lipschitz, s.distance(prev, p) * n / (b - a));
      prev = std::move(p);
    }
  }
  if (!std::isfinite(rep.lipschitz)) throw Error(ErrorKind::Domain, "curve is not Lipschitz on the probe grid");
  int derivable = 0;
  double cluster_sum = 0.0;
  for (int i = 1; i <= opt.points; ++i) {
    RnpPoint pt;
    pt.t = a + (b - a) * i / (opt.points + 1);
    double span = 0.5 * std::min(pt.t - a, b - pt.t);
    LimitOptions dopt = step_ladder(span, opt.final_step, opt.derivative_tol);
    auto der = curve_derivative(s, c, pt.t, dopt);
    const auto& samples = der.forward.samples;
    std::size_t tail = std::min<std::size_t>(opt.cluster_tail, samples.size());
    for (std::size_t p = samples.size() - tail; p < samples.size(); ++p) {
      for (std::size_t r = p + 1; r < samples.size(); ++r) {
        pt.cluster_diameter = std::max(pt.cluster_diameter, s.distance(samples[p], samples[r]));
      }
    }
    cluster_sum += pt.cluster_diameter;
    pt.derivable = der.forward.converged && der.backward.converged;
    if (pt.derivable) {
      ++derivable;
      auto md = metric_derivative(s, c, pt.t, step_ladder(0.5 * (b - a), opt.final_step, opt.derivative_tol));
      Point ct = c.at(pt.t);
      auto td = tangent_distance(s, ct, ct, *der.forward.extrapolated, dopt);
      pt.speed = md.scalar();
      pt.tangent_speed = td.scalar();
      double denom = std::max(pt.speed, 1e-12);
      pt.identity_residual = md.converged && td.converged ? std::abs(pt.speed - pt.tangent_speed) / denom : kInf;
      rep.max_identity_residual = std::max(rep.max_identity_residual, pt.identity_residual);
    }
    rep.points.push_back(pt);
  }
  rep.fraction = static_cast<double>(derivable) / opt.points;
  rep.mean_cluster_diameter = cluster_sum / opt.points;
  rep.pass = rep.fraction >= opt.threshold && rep.max_identity_residual <= opt.identity_tol;
  return rep;
}

struct GammaReport {
  std::vector<double> scales;
  std::vector<double> values;  // l_eps at the admissible scales
  std::vector<std::string> notes;
  double limit_value = 0.0;
  double tail_min = kInf;
  double liminf_estimate = kInf;  // smallest first-order extrapolation over tail pairs
  bool liminf_ok = false;
  std::optional<PowerFit> deviation_fit;  // |l_eps - l| against eps
  double deviation_constant = 0.0;        // max |l_eps - l| / eps on the ladder
  double recovery_error = 0.0;
};

/**
 * @brief Records l_eps along the ladder and compares its lower limit with the candidate limit.
 *
 * Members approach at first order, so the lower limit is estimated by
 * linear extrapolation of consecutive tail pairs to eps = 0. Empirical
 * evidence on the tested family only. Inadmissible members are skipped
 * with a note.
 */
inline GammaReport gamma_check(const std::function<double(double)>& functional, double limit_value,
                               const std::vector<double>& ladder, double tol = 1e-6, std::size_t tail = 4) {
  GammaReport rep;
  rep.limit_value = limit_value;
  std::vector<double> xs, ys;
  for (double e : ladder) {
    try {
      double v = functional(e);
      rep.scales.push_back(e);
      rep.values.push_back(v);
      double dev = std::abs(v - limit_value);
      rep.deviation_constant = std::max(rep.deviation_constant, dev / e);
      if (dev > 1e-13 * std::max(1.0, std::abs(limit_value))) {
        xs.push_back(e);
        ys.push_back(dev);
      }
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::Inadmissible) throw;
      rep.notes.push_back("eps=" + std::to_string(e) + " skipped: " + err.what());
    }
  }
  std::size_t n = std::min(tail, rep.values.size());
  for (std::size_t k = rep.values.size() - n; k < rep.values.size(); ++k) {
    rep.tail_min = std::min(rep.tail_min, rep.values[k]);
    if (k == rep.values.size() - n) continue;
    const double e0 = rep.scales[k - 1], e1 = rep.scales[k];
    rep.liminf_estimate =
        std::min(rep.liminf_estimate, (rep.values[k] * e0 - rep.values[k - 1] * e1) / (e0 - e1));
  }
  if (n == 1) rep.liminf_estimate = rep.tail_min;
  rep.liminf_ok = n > 0 && limit_value <= rep.liminf_estimate + tol;
  if (xs.size() >= 2) rep.deviation_fit = power_law_fit(xs, ys);
  return rep;
}

struct Division {
  std::vector<double> nodes;  // t_0 < ... < t_P
  double length = 0.0;
  double min_ratio = 0.0;  // smallest of the mesh quantities bounded below by lambda / 2
  double max_ratio = 0.0;  // largest of the mesh quantities bounded above by lambda
};

/// Division 0 < t_0 < ... < t_P < L with interior steps h in [lambda/2, lambda] and end gaps a h, a = 0.75 lambda.
inline Division make_division(double length, double lambda) {
  Division dv;
  dv.length = length;
  if (!(lambda > 0.0) || lambda >= 1.0) throw Error(ErrorKind::Domain, "lambda must lie in (0, 1)");
  if (!(length > 0.0)) return dv;
  const double a = 0.75 * lambda;
  int p = std::max(1, static_cast<int>(std::ceil(length / lambda - 2.0 * a)));
  double h = length / (p + 2.0 * a);
  for (int k = 0; k <= p; ++k) dv.nodes.push_back(a * h + k * h);
  std::vector<double> q{dv.nodes[0] / h, (length - dv.nodes.back()) / h};
  for (int k = 1; k <= p; ++k) q.push_back(dv.nodes[k] - dv.nodes[k - 1]);
  dv.min_ratio = *std::min_element(q.begin(), q.end());
  dv.max_ratio = *std::max_element(q.begin(), q.end());
  return dv;
}

struct RecoveryResult {
  double lambda = 0.0;
  double eps = 1.0;
  Division division;
  std::vector<FlowPiece> pieces;
  SampledCurve curve;
  double functional = 0.0;      // l_eps^x of the constructed curve
  double limit_value = 0.0;     // l^x of the target curve
  double omega_constant = 0.0;  // C with omega^3(eps) ~ C eps
  double error = 0.0;           // relative gap |functional - limit_value| / limit_value
};

struct RecoveryOptions {
  double horizontality_tol = 1e-4;
  int certificate_points = 9;
  double final_step = 3e-5;
  double derivative_tol = 1e-6;
  LengthOptions length;
};

/**
 * @brief Recovery curve for a horizontal limit curve c : [0, L] at parameter lambda.
 *
 * Velocity flows over the division are joined at every node by a single
 * horizontal move onto the leaf of c(t_{k+1}); the vertical defect collected
 * this way is removed by one closing commutator word at the end. The scale
 * is eps(lambda) = lambda^2 / C with C measured from omega^3.
 */
inline RecoveryResult recovery_sequence(const CoherentProjection& q, const Point& x, const SampledCurve& c,
                                        double lambda, const RecoveryOptions& opt = {}) {
  RecoveryResult out;
  out.lambda = lambda;
  Structure ind = induced_structure(q);
  Point c0 = c.at(c.start()), c1 = c.at(c.finish());
  bool constant = true;
  for (int i = 0; i <= 16 && constant; ++i) {
    constant = c.at(c.start() + (c.finish() - c.start()) * i / 16) == c0;
  }
  if (constant) {
    out.division.length = 0.0;
    out.curve = concatenate_flows(q, 1.0, x, {}, c0);
    return out;
  }
  auto cert = horizontality_test(q, c, opt.horizontality_tol, interior_grid(c, opt.certificate_points));
  if (!cert.pass) throw Error(ErrorKind::NoConv, "target curve lacks a horizontality certificate");
  const double shift = c.start();
  const double length = c.finish() - c.start();
  out.division = make_division(length, lambda);
  const auto& t = out.division.nodes;

  auto velocity = [&](double tk) -> Point {
    double tt = shift + tk;
    double room_fwd = c.finish() - tt, room_bwd = tt - c.start();
    int side = room_fwd >= room_bwd ? 1 : -1;
    double span = 0.5 * std::max(room_fwd, room_bwd);
    Point ct = c.at(tt);
    auto r = extrapolate_limit(
        [&](double e) { return dilate(ind, ct, 1.0 / (span * e), c.at(tt + side * span * e)); },
        step_ladder(span, opt.final_step, opt.derivative_tol));
    Point v = require_limit(r, "curve velocity");
    // a backward quotient converges to the tangent inverse of the velocity
    if (side < 0) v = tangent_delta(q, ct, v, ct);
    // velocity transported to x: Delta^x(c(t), c'(t))
    return tangent_delta(q, x, ct, v);
  };

  auto build = [&](double eps) {
    std::vector<FlowPiece> pieces;
    auto join = flow_advance(q, eps, x);
    Point p = c0;
    auto horizontal_join = [&](const Point& target) {
      WordSolve ws = solve_word(q, p, target, 1, join, true, 1e-12);
      FlowPiece f{p, ws.word.letters[0], 1.0, ws.word.images[1]};
      if (q.base.distance(f.start, f.end) > 0.0) pieces.push_back(f);
      p = f.end;
    };
    horizontal_join(c.at(shift + t.front()));
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
      double h = t[k + 1] - t[k];
      Point letter = tangent_sigma(q, x, p, velocity(t[k]));
      FlowPiece f = make_flow(q, eps, x, p, letter, h);
      pieces.push_back(f);
      p = f.end;
      horizontal_join(c.at(shift + t[k + 1]));
    }
    horizontal_join(c1);
    WordSolve close = solve_word(q, p, c1, 5, join, false, 1e-12);
    if (close.residual > 1e-9) throw Error(ErrorKind::NotReached, "closing word does not reach the curve end");
    for (std::size_t k = 0; k < close.word.letters.size(); ++k) {
      FlowPiece f{close.word.images[k], close.word.letters[k], 1.0, close.word.images[k + 1]};
      if (q.base.distance(f.start, f.end) > 0.0) pieces.push_back(f);
    }
    return pieces;
  };
  auto functional = [&](double eps, const std::vector<FlowPiece>& pieces) {
    SampledCurve cl = concatenate_flows(q, eps, x, pieces, c0, 2);
    return rescaled_length(ind, x, eps, cl, opt.length);
  };

  out.limit_value = require_limit(limit_length(ind, x, c), "limit length")(0);
  const double probe = 1.0 / 16.0;
  auto pieces_probe = build(probe);
  double l1 = functional(probe, pieces_probe), l2 = functional(0.5 * probe, build(0.5 * probe));
  out.omega_constant = 2.0 * std::abs(l1 - l2) / probe;
  double eps = out.omega_constant > 0.0 ? lambda * lambda / out.omega_constant : 0.5;
  out.eps = std::clamp(eps, std::ldexp(1.0, -12), 0.5);
  out.pieces = build(out.eps);
  out.curve = concatenate_flows(q, out.eps, x, out.pieces, c0, 2);
  out.functional = rescaled_length(ind, x, out.eps, out.curve, opt.length);
  out.error = std::abs(out.functional - out.limit_value) / out.limit_value;
  return out;
}

}  // namespace dilatation
