#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dilatation/core.hpp"
#include "dilatation/instances.hpp"

namespace dilatation {

using ScaledMap = std::function<Point(const Point&, double, const Point&)>;
using BasedOp = std::function<Point(const Point&, const Point&, const Point&)>;

/**
 * @brief Field of projections Q_eps^x over a base structure.
 *
 * The limit projection, the tangent operations of the induced structure and
 * the horizontal chart are optional closed forms. Missing limits are
 * extrapolated with `limit`.
 */
struct CoherentProjection {
  std::string name;
  Structure base;
  ScaledMap project;
  std::function<Point(const Point&, const Point&)> limit_project;
  BasedOp sigma;  // (x, u, v) -> Sigma^x(u, v) of the induced structure
  BasedOp delta;  // (x, u, v) -> Delta^x(u, v) of the induced structure
  int horizontal_rank = 0;
  std::function<Point(const Point&, const Point&)> horizontal;  // (x, coefficients) -> point of Q^x U(x)
  LimitOptions limit;
};

inline Point project(const CoherentProjection& q, const Point& x, double eps, const Point& u) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorKind::Domain, "projection scale must be positive");
  if (x.size() != q.base.dim || u.size() != q.base.dim) throw Error(ErrorKind::Domain, "point dimension mismatch");
  if (eps == 1.0 || u == x) return u;
  return q.project(x, eps, u);
}

inline Point limit_project(const CoherentProjection& q, const Point& x, const Point& u) {
  if (u == x) return x;
  if (q.limit_project) return q.limit_project(x, u);
  return require_limit(extrapolate_limit([&](double e) { return project(q, x, e, u); }, q.limit), "limit projection");
}

/// delta_eps^x = base dilation composed with Q_eps^x.
inline Point induced_dilation(const CoherentProjection& q, const Point& x, double eps, const Point& u) {
  return dilate(q.base, x, eps, project(q, x, eps, u));
}

/// Structure carrying the induced dilations with the base distance.
inline Structure induced_structure(const CoherentProjection& q) {
  Structure s = q.base;
  s.name = q.name + "_induced";
  s.dilate_raw = [q](const Point& x, double e, const Point& u) {
    return q.base.dilate_raw(x, e, e == 1.0 ? u : q.project(x, e, u));
  };
  return s;
}

inline Point theta_op(const CoherentProjection& q, const Point& x, double eps, const Point& u, const Point& v) {
  Point y = induced_dilation(q, x, eps, u);
  Point w = dilate(q.base, x, eps, project(q, x, eps, v));
  return dilate(q.base, x, 1.0 / eps, project(q, y, 1.0 / eps, w));
}

inline ConvergenceReport theta_limit(const CoherentProjection& q, const Point& x, const Point& u, const Point& v,
                                     const LimitOptions& opt) {
  return extrapolate_limit([&](double e) { return theta_op(q, x, e, u, v); }, opt);
}

/// |Theta_eps^x(u, v) - base Sigma_eps^x(Q_eps^x u, Delta_eps^x(u, v))|.
inline double theta_sigma_residual(const CoherentProjection& q, const Point& x, double eps, const Point& u,
                                   const Point& v) {
  Structure ind = induced_structure(q);
  Point rhs = sigma_eps(q.base, x, eps, project(q, x, eps, u), delta_eps(ind, x, eps, u, v));
  return q.base.distance(theta_op(q, x, eps, u, v), rhs);
}

inline Point tangent_sigma(const CoherentProjection& q, const Point& x, const Point& u, const Point& v) {
  if (q.sigma) return q.sigma(x, u, v);
  return make_tangent_fiber(induced_structure(q), x, q.limit).sigma(u, v);
}

inline Point tangent_delta(const CoherentProjection& q, const Point& x, const Point& u, const Point& v) {
  if (q.delta) return q.delta(x, u, v);
  return make_tangent_fiber(induced_structure(q), x, q.limit).delta_limit(u, v);
}

/// |Q^x Delta^x(u, v) - base Delta^x(Q^x u, Q^x v)| with base limits extrapolated.
inline double tangent_projection_residual(const CoherentProjection& q, const Point& x, const Point& u,
                                          const Point& v, const LimitOptions& base_opt) {
  Point lhs = limit_project(q, x, tangent_delta(q, x, u, v));
  Point qu = limit_project(q, x, u), qv = limit_project(q, x, v);
  Point rhs = qu == qv ? qu : require_limit(delta_limit(q.base, x, qu, qv, base_opt), "base delta");
  return q.base.distance(lhs, rhs);
}

namespace detail {

inline Point frame_scale(const Point& off, double horizontal, double vertical) {
  Point out(3);
  out << horizontal * off(0), horizontal * off(1), vertical * off(2);
  return out;
}

}  // namespace detail

/// Heisenberg projection over the tempered base: frame offsets (a, b, c) -> (a, b, eps c).
inline CoherentProjection make_heisenberg_projection() {
  CoherentProjection q;
  q.name = "heisenberg_projection";
  q.base = make_tempered_base();
  q.project = [](const Point& x, double e, const Point& u) {
    return heis::mul(x, detail::frame_scale(heis::offset(x, u), 1.0, e));
  };
  q.limit_project = [](const Point& x, const Point& u) {
    return heis::mul(x, detail::frame_scale(heis::offset(x, u), 1.0, 0.0));
  };
  q.sigma = [](const Point& x, const Point& u, const Point& v) { return heis::mul(heis::mul(u, heis::inv(x)), v); };
  q.delta = [](const Point& x, const Point& u, const Point& v) { return heis::mul(heis::mul(x, heis::inv(u)), v); };
  q.horizontal_rank = 2;
  q.horizontal = [](const Point& x, const Point& c) {
    Point h(3);
    h << c(0), c(1), 0.0;
    return heis::mul(x, h);
  };
  q.limit.ladder = make_ladder(14);
  q.limit.acceleration = Acceleration::Richardson;
  return q;
}

/// Q_eps = identity over `base`.
inline CoherentProjection make_identity_projection(const Structure& base) {
  CoherentProjection q;
  q.name = "identity_projection_" + base.name;
  q.base = base;
  q.project = [](const Point&, double, const Point& u) { return u; };
  q.limit_project = [](const Point&, const Point& u) { return u; };
  return q;
}

/// Falsification fixture: frame offsets (a, b, c) -> (R(theta ln eps)(a, b), eps c). No limit projection exists.
inline CoherentProjection make_spiral_projection(double theta) {
  CoherentProjection q;
  q.name = "spiral_projection";
  q.base = make_tempered_base();
  q.project = [theta](const Point& x, double e, const Point& u) {
    Point off = heis::offset(x, u);
    Eigen::Vector2d h = rotation(theta * std::log(e)) * Eigen::Vector2d(off(0), off(1));
    Point out(3);
    out << h(0), h(1), e * off(2);
    return heis::mul(x, out);
  };
  q.limit.ladder = make_ladder(14);
  return q;
}

/**
 * @brief Sampled checks of (I)-(IV) plus Q_1 = id, Q_eps^x x = x and the eps, 1/eps round trip.
 *
 * (II) and (IV) are limits and use plan.limit; the rest are exact identities
 * compared with plan.exact_tol.
 */
inline AxiomReport check_projection_axioms(const CoherentProjection& q, const SamplePlan& plan) {
  std::mt19937_64 rng(plan.seed);
  AxiomEntry ident{"identity"}, roundtrip{"roundtrip"}, c1{"I"}, c2{"II"}, c3{"III"}, c4{"IV"};
  const double scales[] = {0.5, 0.1, 0.01};
  const double pairs[][2] = {{0.5, 0.5}, {0.3, 0.7}, {0.1, 0.2}, {0.02, 0.5}};
  Point origin = Point::Zero(q.base.dim);
  auto note_rate = [](AxiomEntry& e, const ConvergenceReport& r) {
    if (r.empirical_rate) e.min_rate = e.min_rate ? std::min(*e.min_rate, *r.empirical_rate) : *r.empirical_rate;
  };
  for (int i = 0; i < plan.samples; ++i) {
    Point x = random_point(rng, origin, plan.box);
    Point u = random_point(rng, x, plan.radius);
    Point v = random_point(rng, x, plan.radius);

    double r0 = max_dist(q.project(x, 1.0, u), u);
    for (double e : scales) r0 = std::max(r0, max_dist(q.project(x, e, x), x));
    ident.worst = std::max(ident.worst, r0);

    for (double e : scales) {
      roundtrip.worst = std::max(roundtrip.worst, max_dist(q.project(x, 1.0 / e, q.project(x, e, u)), u));
    }
    for (const auto& pr : pairs) {
      double e = pr[0], mu = pr[1];
      Point lhs = q.project(x, e, q.base.dilate_raw(x, mu, u));
      Point rhs = q.base.dilate_raw(x, mu, q.project(x, e, u));
      c1.worst = std::max(c1.worst, max_dist(lhs, rhs));
      c3.worst = std::max(c3.worst, max_dist(q.project(x, e, q.project(x, mu, u)), q.project(x, e * mu, u)));
    }

    auto r2 = extrapolate_limit([&](double e) { return project(q, x, e, u); }, plan.limit);
    double gap = 0.0;
    if (r2.converged && q.limit_project) gap = max_dist(*r2.extrapolated, q.limit_project(x, u));
    c2.pass = c2.pass && r2.converged && gap <= plan.limit.tol;
    c2.worst = std::max({c2.worst, r2.residual_tail, gap});
    note_rate(c2, r2);

    auto r4 = theta_limit(q, x, u, v, plan.limit);
    c4.pass = c4.pass && r4.converged;
    c4.worst = std::max(c4.worst, r4.residual_tail);
    note_rate(c4, r4);
  }
  ident.pass = ident.worst <= plan.exact_tol;
  roundtrip.pass = roundtrip.worst <= 1e3 * plan.exact_tol;
  c1.pass = c1.worst <= plan.exact_tol;
  c3.pass = c3.worst <= plan.exact_tol;
  AxiomReport rep;
  rep.entries = {ident, roundtrip, c1, c2, c3, c4};
  return rep;
}

struct HorizontalityReport {
  std::vector<double> times;
  std::vector<double> residuals;  // infinite where the derivative did not converge
  std::vector<bool> converged;
  double max_residual = 0.0;
  bool pass = true;
};

/// n uniform interior times of the curve interval.
inline std::vector<double> interior_grid(const SampledCurve& c, int n) {
  std::vector<double> out;
  for (int i = 1; i <= n; ++i) out.push_back(c.start() + (c.finish() - c.start()) * i / (n + 1));
  return out;
}

/**
 * @brief Residual |Q^{c(t)} c'(t) - c'(t)| at each t, with c' the induced-structure derivative.
 *
 * The derivative ladder is short because deep scales only add cancellation
 * noise in the vertical direction; one Richardson step removes the
 * curvature term.
 */
inline HorizontalityReport horizontality_test(const CoherentProjection& q, const SampledCurve& c, double tol,
                                              std::vector<double> times = {}) {
  if (times.empty()) times = interior_grid(c, 9);
  Structure ind = induced_structure(q);
  LimitOptions opt{make_ladder(12), tol, Acceleration::Richardson};
  HorizontalityReport rep;
  for (double t : times) {
    rep.times.push_back(t);
    auto d = curve_derivative(ind, c, t, opt);
    if (!d.forward.converged) {
      rep.residuals.push_back(kInf);
      rep.converged.push_back(false);
      rep.max_residual = kInf;
      rep.pass = false;
      continue;
    }
    Point ct = c.at(t);
    const Point& dc = *d.forward.extrapolated;
    double r = q.base.distance(limit_project(q, ct, dc), dc);
    rep.residuals.push_back(r);
    rep.converged.push_back(true);
    rep.max_residual = std::max(rep.max_residual, r);
    if (r > tol) rep.pass = false;
  }
  return rep;
}

struct SupplementaryReport {
  std::vector<double> scales;
  std::vector<double> lipschitz_per_scale;  // condition (A), one envelope per eps
  double lipschitz = 0.0;
  double lipschitz_projected = 0.0;  // same bound through base dilation of Q_eps
  std::vector<double> ratio_a;       // condition (B) arc ratio per a
  double ratio_deviation = 0.0;      // |ratio - 1| at the smallest a
  double horizontality = 0.0;
  bool pass_a = false;
  bool pass_b = false;
};

namespace detail {

inline double polyline_length(const DistanceFn& d, const std::function<Point(double)>& f, double a, double b,
                              int pieces) {
  double sum = 0.0;
  Point prev = f(a);
  for (int i = 1; i <= pieces; ++i) {
    Point next = f(a + (b - a) * i / pieces);
    sum += d(prev, next);
    prev = std::move(next);
  }
  return sum;
}

}  // namespace detail

inline SupplementaryReport check_supplementary(const CoherentProjection& q, const SamplePlan& plan, double tol = 1e-4) {
  std::mt19937_64 rng(plan.seed);
  SupplementaryReport rep;
  rep.scales = {0.5, 0.1, 0.01};
  rep.lipschitz_per_scale.assign(rep.scales.size(), 0.0);
  const double arcs[] = {0.5, 0.1, 0.01, 0.001};
  rep.ratio_a.assign(4, 1.0);
  Point origin = Point::Zero(q.base.dim);
  const auto& d = q.base.distance;
  rep.pass_b = true;
  for (int i = 0; i < plan.samples; ++i) {
    Point x = random_point(rng, origin, plan.box);
    Point u = random_point(rng, x, 0.2 * plan.radius);
    Point v = random_point(rng, x, 0.2 * plan.radius);
    double duv = d(u, v);
    for (std::size_t k = 0; k < rep.scales.size(); ++k) {
      double e = rep.scales[k];
      double l1 = d(induced_dilation(q, x, e, u), induced_dilation(q, x, e, v)) / (e * duv);
      double l2 = d(dilate(q.base, x, e, project(q, x, e, u)), dilate(q.base, x, e, project(q, x, e, v))) / (e * duv);
      rep.lipschitz_per_scale[k] = std::max(rep.lipschitz_per_scale[k], l1);
      rep.lipschitz = std::max(rep.lipschitz, l1);
      rep.lipschitz_projected = std::max(rep.lipschitz_projected, l2);
    }

    Point h = limit_project(q, x, random_point(rng, x, plan.radius));
    if (h == x) continue;
    auto flow = [&](double t) { return t <= 0.0 ? Point(x) : dilate(q.base, x, t, h); };
    for (int k = 0; k < 4; ++k) {
      double a = arcs[k];
      double ratio = detail::polyline_length(d, flow, 0.0, a, 256) / d(x, flow(a));
      if (std::abs(ratio - 1.0) > std::abs(rep.ratio_a[k] - 1.0)) rep.ratio_a[k] = ratio;
    }
    auto hr = horizontality_test(q, make_curve(flow, 0.0, 1.0, 16), tol);
    rep.horizontality = std::max(rep.horizontality, hr.max_residual);
    rep.pass_b = rep.pass_b && hr.pass;
  }
  rep.ratio_deviation = std::abs(rep.ratio_a.back() - 1.0);
  rep.pass_a = std::isfinite(rep.lipschitz) && rep.lipschitz > 0.0;
  rep.pass_b = rep.pass_b && rep.ratio_deviation <= tol;
  return rep;
}

/// A base point, its letters and the Psi images of every prefix; images[0] is the base point.
struct WordState {
  Point base;
  std::vector<Point> letters;
  std::vector<Point> images;
  const Point& endpoint() const { return images.back(); }
};

namespace detail {

inline void check_nested(const CoherentProjection& q, const Point& letter, const Point& image, double rho,
                         std::size_t k) {
  if (q.base.distance(letter, image) > rho) {
    throw Error(ErrorKind::Domain, "letter " + std::to_string(k + 1) + " leaves the nested domain");
  }
}

}  // namespace detail

/**
 * @brief Psi recursion at scale eps over a word of projection scales.
 *
 * An empty `w` uses Q_eps at every step. A scale 0 in `w` stands for the
 * limit projection Q.
 */
inline WordState psi_transform(const CoherentProjection& q, double eps, const std::vector<double>& w, const Point& x,
                               const std::vector<Point>& letters, double rho = kInf) {
  if (!(eps > 0.0) || eps > 1.0) throw Error(ErrorKind::Domain, "psi scale must lie in (0, 1]");
  if (!w.empty() && w.size() < letters.size()) throw Error(ErrorKind::Domain, "scale word shorter than the letters");
  for (double s : w) {
    if (!(s >= 0.0) || s > 1.0) throw Error(ErrorKind::Domain, "word scales must lie in [0, 1]");
  }
  WordState st{x, letters, {x}};
  for (std::size_t k = 0; k < letters.size(); ++k) {
    detail::check_nested(q, letters[k], st.images[k], rho, k);
    Point a = induced_dilation(q, x, eps, st.images[k]);
    Point b = induced_dilation(q, x, eps, letters[k]);
    double s = w.empty() ? eps : w[k];
    Point p = s == 0.0 ? limit_project(q, a, b) : project(q, a, s, b);
    st.images.push_back(induced_dilation(q, x, 1.0 / eps, p));
  }
  return st;
}

/// Next image of the limit recursion: Sigma^x(A, Q^x Delta^x(A, letter)).
inline Point psi_zero_step(const CoherentProjection& q, const Point& x, const Point& a, const Point& letter) {
  return tangent_sigma(q, x, a, limit_project(q, x, tangent_delta(q, x, a, letter)));
}

inline WordState psi_zero_limit(const CoherentProjection& q, const Point& x, const std::vector<Point>& letters,
                                double rho = kInf) {
  WordState st{x, letters, {x}};
  for (std::size_t k = 0; k < letters.size(); ++k) {
    detail::check_nested(q, letters[k], st.images[k], rho, k);
    st.images.push_back(psi_zero_step(q, x, st.images[k], letters[k]));
  }
  return st;
}

/// One dilation flow s -> delta^x_{1/eps} bar-delta^{W}_s Q^{W} delta^x_eps letter, W = delta^x_eps start.
struct FlowPiece {
  Point start;
  Point letter;
  double duration = 1.0;
  Point end;
};

inline Point flow_point(const CoherentProjection& q, double eps, const Point& x, const Point& start,
                        const Point& letter, double s) {
  if (s <= 0.0) return start;
  Point w = induced_dilation(q, x, eps, start);
  Point p = limit_project(q, w, induced_dilation(q, x, eps, letter));
  if (p == w) return start;
  return induced_dilation(q, x, 1.0 / eps, dilate(q.base, w, s, p));
}

inline FlowPiece make_flow(const CoherentProjection& q, double eps, const Point& x, const Point& start,
                           const Point& letter, double duration) {
  return {start, letter, duration, flow_point(q, eps, x, start, letter, duration)};
}

/// Concatenation of flows parametrized by elapsed flow time; a constant curve when empty.
inline SampledCurve concatenate_flows(const CoherentProjection& q, double eps, const Point& x,
                                      const std::vector<FlowPiece>& pieces, const Point& origin,
                                      int nodes_per_piece = 2) {
  if (pieces.empty()) {
    Point p = origin;
    SampledCurve c = from_table({0.0, 1.0}, {p, p});
    c.exact = [p](double) { return p; };
    return c;
  }
  std::vector<double> offsets{0.0};
  for (const auto& f : pieces) offsets.push_back(offsets.back() + f.duration);
  auto eval = [q, eps, x, pieces, offsets](double t) -> Point {
    auto it = std::upper_bound(offsets.begin(), offsets.end(), t);
    std::size_t k = it == offsets.begin() ? 0 : static_cast<std::size_t>(it - offsets.begin()) - 1;
    k = std::min(k, pieces.size() - 1);
    const FlowPiece& f = pieces[k];
    double s = std::clamp(t - offsets[k], 0.0, f.duration);
    if (s >= f.duration) return f.end;
    return flow_point(q, eps, x, f.start, f.letter, s);
  };
  SampledCurve c;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    for (int j = 0; j < nodes_per_piece; ++j) {
      double t = offsets[k] + pieces[k].duration * j / nodes_per_piece;
      if (!c.times.empty() && !(t > c.times.back())) continue;
      c.times.push_back(t);
      c.points.push_back(eval(t));
    }
  }
  c.times.push_back(offsets.back());
  c.points.push_back(pieces.back().end);
  c.exact = eval;
  validate_curve(c);
  return c;
}

/// Step of a parametrized word: (current image, horizontal coefficients) -> (letter, next image).
using WordAdvance = std::function<std::pair<Point, Point>(const Point&, const Eigen::VectorXd&)>;

struct WordSolve {
  WordState word;
  double residual = kInf;
  int iterations = 0;
};

namespace detail {

// One horizontal move followed, when n >= 5, by a commutator of the first two
// horizontal directions with signed area p(m); extra letters are idle moves.
inline WordState param_word(const CoherentProjection& q, const Point& start, const Eigen::VectorXd& p, int n,
                            const WordAdvance& advance) {
  const int m = q.horizontal_rank;
  std::vector<Eigen::VectorXd> coeffs;
  coeffs.push_back(p.head(m));
  if (n >= 5) {
    double sigma = p(m);
    double s = std::copysign(std::sqrt(std::abs(sigma)), sigma), t = std::sqrt(std::abs(sigma));
    for (int k = 0; k < 4; ++k) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
      if (k % 2 == 0) {
        c(0) = k == 0 ? s : -s;
      } else {
        c(1) = k == 1 ? t : -t;
      }
      coeffs.push_back(c);
    }
  }
  while (static_cast<int>(coeffs.size()) < n) coeffs.push_back(Eigen::VectorXd::Zero(m));
  WordState st{start, {}, {start}};
  for (const auto& c : coeffs) {
    auto [letter, next] = advance(st.images.back(), c);
    st.letters.push_back(std::move(letter));
    st.images.push_back(std::move(next));
  }
  return st;
}

}  // namespace detail

/**
 * @brief Damped Gauss-Newton on the parameters of a word from `start` toward `target`.
 *
 * With `horizontal_only` the residual is the offset of the endpoint from the
 * horizontal leaf Q^{target} through the target, so only the horizontal
 * mismatch is removed.
 */
inline WordSolve solve_word(const CoherentProjection& q, const Point& start, const Point& target, int n,
                            const WordAdvance& advance, bool horizontal_only, double tol = 1e-10, int max_iter = 60) {
  if (!q.horizontal || q.horizontal_rank < 1) {
    throw Error(ErrorKind::UnsupportedStep, "projection has no horizontal chart");
  }
  if (n < 1) throw Error(ErrorKind::Domain, "word length must be positive");
  if (n >= 5 && q.horizontal_rank < 2) throw Error(ErrorKind::UnsupportedStep, "commutator needs two directions");
  const int params = q.horizontal_rank + (n >= 5 ? 1 : 0);
  auto residual = [&](const Eigen::VectorXd& pp) -> Point {
    Point end = detail::param_word(q, start, pp, n, advance).images.back();
    return horizontal_only ? Point(limit_project(q, target, end) - target) : Point(end - target);
  };
  auto size = [&](const Point& r) { return q.base.distance(target + r, target); };
  Eigen::VectorXd p = Eigen::VectorXd::Zero(params);
  Point r = residual(p);
  double best = size(r);
  int it = 0;
  for (; it < max_iter && best > tol; ++it) {
    Eigen::MatrixXd jac(r.size(), params);
    for (int j = 0; j < params; ++j) {
      double h = 1e-6 * std::max(1.0, std::abs(p(j)));
      Eigen::VectorXd pp = p, pm = p;
      pp(j) += h;
      pm(j) -= h;
      jac.col(j) = (residual(pp) - residual(pm)) / (2.0 * h);
    }
    Eigen::VectorXd step = jac.completeOrthogonalDecomposition().solve(-r);
    double lambda = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, lambda *= 0.5) {
      Eigen::VectorXd trial = p + lambda * step;
      Point rt = residual(trial);
      double v = size(rt);
      if (v < best) {
        p = trial;
        r = rt;
        best = v;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return {detail::param_word(q, start, p, n, advance), best, it};
}

/// Advance of the limit recursion based at x.
inline WordAdvance limit_advance(const CoherentProjection& q, const Point& x) {
  return [&q, x](const Point& a, const Eigen::VectorXd& c) {
    Point letter = tangent_sigma(q, x, a, q.horizontal(x, c));
    return std::make_pair(letter, psi_zero_step(q, x, a, letter));
  };
}

/// Advance by a unit-time flow at scale eps seen from x.
inline WordAdvance flow_advance(const CoherentProjection& q, double eps, const Point& x) {
  return [&q, eps, x](const Point& a, const Eigen::VectorXd& c) {
    Point letter = tangent_sigma(q, x, a, q.horizontal(x, c));
    return std::make_pair(letter, flow_point(q, eps, x, a, letter, 1.0));
  };
}

struct ChowOptions {
  int n = 5;
  double rho = 0.5;
  double tol = 1e-10;
  int max_iter = 60;
};

struct ChowResult {
  std::vector<Point> letters;
  std::vector<Point> images;
  std::vector<double> increments;  // base distance between consecutive images
  double residual = kInf;
  bool reached = false;
  bool nested = false;
  int iterations = 0;
  double max_increment() const {
    return increments.empty() ? 0.0 : *std::max_element(increments.begin(), increments.end());
  }
};

/**
 * @brief Letters y_1..y_N whose limit Psi endpoint from x hits z.
 *
 * One horizontal move plus a commutator word, solved by damped Newton. A
 * stall is reported through `reached` together with the best residual.
 */
inline ChowResult chow_solve(const CoherentProjection& q, const Point& x, const Point& z, const ChowOptions& opt = {}) {
  WordSolve ws = solve_word(q, x, z, opt.n, limit_advance(q, x), false, opt.tol, opt.max_iter);
  ChowResult out;
  out.letters = ws.word.letters;
  out.images = ws.word.images;
  const auto& d = q.base.distance;
  for (std::size_t k = 0; k + 1 < out.images.size(); ++k) out.increments.push_back(d(out.images[k], out.images[k + 1]));
  out.residual = ws.residual;
  out.reached = ws.residual <= opt.tol;
  out.nested = true;
  for (std::size_t k = 0; k < out.letters.size(); ++k) {
    if (d(out.letters[k], out.images[k]) > opt.rho) out.nested = false;
  }
  out.iterations = ws.iterations;
  return out;
}

struct ShortCurve {
  std::vector<FlowPiece> segments;
  SampledCurve trace;
};

/**
 * @brief Concatenation of horizontal dilation flows realizing a word at scale eps.
 *
 * Segment k runs over [k, k + 1] from the k-th Psi image (limit-projection
 * word) along its letter, so that it ends at the next Psi image.
 */
inline ShortCurve build_short_curve(const CoherentProjection& q, double eps, const Point& x,
                                    const std::vector<Point>& letters, int nodes_per_segment = 16) {
  ShortCurve sc;
  WordState st = psi_transform(q, eps, std::vector<double>(letters.size(), 0.0), x, letters);
  for (std::size_t k = 0; k < letters.size(); ++k) {
    FlowPiece f = make_flow(q, eps, x, st.images[k], letters[k], 1.0);
    f.end = st.images[k + 1];
    sc.segments.push_back(f);
  }
  sc.trace = concatenate_flows(q, eps, x, sc.segments, x, nodes_per_segment);
  return sc;
}

/// Segment-interior sample times of a short curve.
inline std::vector<double> short_curve_times(const ShortCurve& sc) {
  std::vector<double> out;
  for (std::size_t k = 0; k < sc.segments.size(); ++k) {
    for (double f : {0.25, 0.5, 0.75}) out.push_back(static_cast<double>(k) + f);
  }
  return out;
}

}  // namespace dilatation
