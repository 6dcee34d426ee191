#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dilatation/carnot.hpp"
#include "dilatation/core.hpp"
#include "dilatation/instances.hpp"
#include "dilatation/lab/config.hpp"
#include "dilatation/lab/report.hpp"
#include "dilatation/length.hpp"
#include "dilatation/projection.hpp"

namespace dilatation::lab {

namespace detail {

class Recorder {
 public:
  Recorder(RunReport& rep, std::string instance) : rep_(rep), instance_(std::move(instance)) {}

  void add(const std::string& name, double residual, double tolerance, bool pass,
           std::optional<double> eps = std::nullopt, std::optional<double> rate = std::nullopt) {
    rep_.rows.push_back({name, instance_, eps, residual, tolerance, pass ? kPass : kFail, rate});
  }
  /// Row passing iff residual <= tolerance.
  void bound(const std::string& name, double residual, double tolerance, std::optional<double> eps = std::nullopt,
             std::optional<double> rate = std::nullopt) {
    add(name, residual, tolerance, residual <= tolerance, eps, rate);
  }
  void set_instance(std::string s) { instance_ = std::move(s); }

 private:
  RunReport& rep_;
  std::string instance_;
};

inline Point heis_point(double a, double b, double c) {
  Point p(3);
  p << a, b, c;
  return p;
}

inline bool is_heisenberg(const Structure& s) {
  return s.name.rfind("heisenberg_sr", 0) == 0 || s.name.rfind("carnot_heisenberg", 0) == 0;
}

/// Closed-form tangent operations where the instance has them.
struct TangentClosedForm {
  std::function<Point(const Point&, const Point&, const Point&)> delta;
  std::function<Point(const Point&, const Point&, const Point&)> sigma;
};

inline std::optional<TangentClosedForm> tangent_closed_form(const Structure& s) {
  if (s.name.rfind("euclidean", 0) == 0 || s.name == "tempered_base") {
    // tempered base dilations are affine in exponential coordinates
    return TangentClosedForm{[](const Point& x, const Point& u, const Point& v) { return Point(x + v - u); },
                             [](const Point& x, const Point& u, const Point& v) { return Point(u + v - x); }};
  }
  if (is_heisenberg(s)) {
    return TangentClosedForm{
        [](const Point& x, const Point& u, const Point& v) { return heis::mul(x, heis::mul(heis::inv(u), v)); },
        [](const Point& x, const Point& u, const Point& v) { return heis::mul(u, heis::mul(heis::inv(x), v)); }};
  }
  return std::nullopt;
}

/**
 * @brief l^x(c) for the Heisenberg SR dilations measured with the coordinate distance.
 *
 * With w = x^-1 c the integrand is |(w1', w2', (x1 w2' - x2 w1') / 2)|;
 * derivatives by central differences, Simpson rule on n intervals.
 */
inline double heisenberg_frame_length(const Point& x, const SampledCurve& c, int n = 400) {
  const double a = c.start(), b = c.finish(), h = (b - a) / n;
  auto w = [&](double t) { return heis::offset(x, c.at(std::clamp(t, a, b))); };
  auto speed = [&](double t) {
    double dt = 1e-5 * (b - a);
    double lo = std::max(a, t - dt), hi = std::min(b, t + dt);
    Point d = (w(hi) - w(lo)) / (hi - lo);
    return std::sqrt(d(0) * d(0) + d(1) * d(1) + 0.25 * std::pow(x(0) * d(1) - x(1) * d(0), 2));
  };
  double sum = speed(a) + speed(b);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * speed(a + i * h);
  return sum * h / 3.0;
}

/// Induced structure of the Heisenberg projection: SR dilations with the coordinate distance.
inline Structure sr_with_coordinate_distance() { return induced_structure(make_heisenberg_projection()); }

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

inline void run_axioms(const ExperimentConfig& cfg, RunReport& rep) {
  Structure s = build_instance(cfg.instance);
  detail::Recorder rec(rep, s.name);
  SamplePlan plan = cfg.plan();
  auto ax = check_axioms(s, plan);
  for (const auto& e : ax.entries) {
    double tol = e.axiom == "A0" ? 1.0 : (e.axiom == "A1" || e.axiom == "A2") ? plan.exact_tol : plan.limit.tol;
    rec.add(e.axiom, e.worst, tol, e.pass, std::nullopt, e.min_rate);
  }
  if (cfg.param("rescaled_equals_distance", false)) {
    std::mt19937_64 rng(cfg.seed + 1);
    Point origin = Point::Zero(s.dim);
    double worst = 0.0;
    for (int i = 0; i < cfg.samples; ++i) {
      Point x = random_point(rng, origin, cfg.box);
      Point u = random_point(rng, x, cfg.radius);
      Point v = random_point(rng, x, cfg.radius);
      for (double e : {0.5, 0.1, 0.01}) {
        worst = std::max(worst, std::abs(rescaled_distance(s, x, e, u, v) - s.distance(u, v)));
      }
    }
    rec.bound("rescaled_distance", worst, plan.exact_tol);
  }
}

inline void run_tangent(const ExperimentConfig& cfg, RunReport& rep) {
  Structure s = build_instance(cfg.instance);
  detail::Recorder rec(rep, s.name);
  const double min_rate = cfg.tol("rate", 0.9);
  Point x = cfg.params.contains("base") ? lab::detail::point(cfg.params.at("base"), "params.base")
                                        : Point(Point::Zero(s.dim));
  if (x.size() != s.dim) invalid("params.base has the wrong dimension");
  auto closed = detail::tangent_closed_form(s);
  std::mt19937_64 rng(cfg.seed);
  struct Acc {
    double gap = 0.0;
    double tail = 0.0;
    double rate = std::numeric_limits<double>::infinity();
    bool converged = true;
  } delta, sigma;
  auto note = [&](Acc& a, const ConvergenceReport& r, const std::optional<Point>& expect) {
    a.converged = a.converged && r.converged;
    a.tail = std::max(a.tail, r.residual_tail);
    if (r.empirical_rate) a.rate = std::min(a.rate, *r.empirical_rate);
    if (r.converged && expect) a.gap = std::max(a.gap, max_dist(*r.extrapolated, *expect));
    if (!r.converged) a.gap = kInf;
  };
  const int pairs = cfg.param("pairs", cfg.samples);
  double inverse_gap = 0.0;
  for (int i = 0; i < pairs; ++i) {
    Point u = random_point(rng, x, cfg.radius);
    Point v = random_point(rng, x, cfg.radius);
    auto rd = delta_limit(s, x, u, v, cfg.limit);
    auto rs = sigma_limit(s, x, u, v, cfg.limit);
    note(delta, rd, closed ? std::optional<Point>(closed->delta(x, u, v)) : std::nullopt);
    note(sigma, rs, closed ? std::optional<Point>(closed->sigma(x, u, v)) : std::nullopt);
    if (closed && i < 8) {
      inverse_gap = std::max(inverse_gap, max_dist(inv_point(s, x, u, cfg.limit), closed->delta(x, u, x)));
    }
  }
  auto row = [&](const std::string& name, const Acc& a) {
    double residual = std::max(a.gap, a.tail);
    std::optional<double> rate = std::isfinite(a.rate) ? std::optional<double>(a.rate) : std::nullopt;
    bool rate_ok = !rate || *rate >= min_rate || a.tail <= 1e3 * std::numeric_limits<double>::epsilon();
    rec.add(name, residual, cfg.limit.tol, a.converged && residual <= cfg.limit.tol && rate_ok, std::nullopt, rate);
  };
  row("delta_limit", delta);
  row("sigma_limit", sigma);
  if (closed) rec.bound("inverse", inverse_gap, cfg.limit.tol);

  // cone property of the tangent distance
  const double cone_tol = cfg.tol("cone", 1e-9);
  const int cone_samples = cfg.param("cone_samples", std::min(pairs, 8));
  const double cone_scale = cfg.param("cone_scale", 0.0);
  auto dx = [&](const Point& u, const Point& v) {
    if (cone_scale > 0.0) return rescaled_distance(s, x, cone_scale, u, v);
    return require_limit(tangent_distance(s, x, u, v, cfg.limit), "tangent distance")(0);
  };
  std::vector<double> mus = cfg.param("mu", std::vector<double>{0.5, 0.25});
  std::mt19937_64 crng(cfg.seed + 7);
  std::vector<std::pair<Point, Point>> cone_pairs;
  for (int i = 0; i < cone_samples; ++i) {
    Point u = random_point(crng, x, cfg.radius);
    Point v = random_point(crng, x, cfg.radius);
    cone_pairs.emplace_back(u, v);
  }
  std::vector<double> base_values;
  for (const auto& [u, v] : cone_pairs) base_values.push_back(dx(u, v));
  for (double mu : mus) {
    double worst = 0.0;
    for (std::size_t i = 0; i < cone_pairs.size(); ++i) {
      const auto& [u, v] = cone_pairs[i];
      double lhs = dx(dilate(s, x, mu, u), dilate(s, x, mu, v));
      double rhs = mu * base_values[i];
      if (rhs > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / rhs);
    }
    rec.bound("cone_mu=" + detail::fmt(mu), worst, cone_tol);
  }
}

inline GradedAlgebra algebra_of(const ExperimentConfig& cfg) {
  if (cfg.params.contains("algebra")) return build_algebra(cfg.params.at("algebra"));
  if (!cfg.instance.is_null() && cfg.instance.contains("algebra")) return build_algebra(cfg.instance.at("algebra"));
  return heisenberg_algebra();
}

inline void run_carnot(const ExperimentConfig& cfg, RunReport& rep) {
  GradedAlgebra alg = algebra_of(cfg);
  detail::Recorder rec(rep, alg.name);
  auto check = validate_algebra(alg);
  rec.bound("jacobi", check.jacobi, 1e-12);
  rec.add("bracket_generating", check.generates ? 0.0 : 1.0, 0.0, check.generates);

  std::mt19937_64 rng(cfg.seed);
  Point origin = Point::Zero(alg.n);
  double recon = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    Point a = random_point(rng, origin, cfg.box);
    recon = std::max(recon, max_dist(compose_factors(alg, folland_stein_decompose(alg, a)), a));
  }
  rec.bound("fs_reconstruction", recon, cfg.tol("reconstruction", 1e-9));

  // factor size against the coordinate norm along a dilation family of a top-layer element
  Point top = Point::Zero(alg.n);
  top(alg.layer(alg.step).front()) = cfg.param("top_coefficient", 0.7);
  std::vector<double> norms, times;
  double constant = 0.0;
  for (double e : make_ladder(cfg.param("fs_levels", 12))) {
    Point a = group_dilation(alg, top, e);
    double t = max_abs_time(folland_stein_decompose(alg, a));
    norms.push_back(a.norm());
    times.push_back(t);
    constant = std::max(constant, t / std::pow(a.norm(), 1.0 / alg.step));
  }
  auto fit = power_law_fit(norms, times);
  double expected = 1.0 / alg.step;
  rec.add("fs_exponent", std::abs(fit.exponent - expected), cfg.tol("exponent", 0.05),
          std::abs(fit.exponent - expected) <= cfg.tol("exponent", 0.05), std::nullopt, fit.exponent);
  rec.add("fs_constant", constant, kInf, std::isfinite(constant) && constant > 0.0);
}

inline void run_ccdist(const ExperimentConfig& cfg, RunReport& rep) {
  GradedAlgebra alg = algebra_of(cfg);
  detail::Recorder rec(rep, alg.name + "_cc");
  CcOptions cc;
  cc.segments = cfg.param("segments", 64);
  cc.seed = cfg.seed;
  const double rel = cfg.tol("relative", 0.02);
  Point origin = Point::Zero(alg.n);
  auto d = [&](const Point& a, const Point& b) { return cc_distance_estimate(alg, a, b, cc).value; };

  Point e1 = Point::Zero(alg.n);
  e1(0) = 1.0;
  rec.bound("unit_e1", std::abs(d(origin, e1) - 1.0), cfg.tol("unit", 1e-4));

  std::mt19937_64 rng(cfg.seed);
  const double eps = cfg.param("epsilon", 0.5);
  double homog = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    Point p = random_point(rng, origin, cfg.box);
    double dp = d(origin, p);
    double de = d(origin, group_dilation(alg, p, eps));
    homog = std::max(homog, std::abs(de - eps * dp) / (eps * dp));
  }
  rec.bound("homogeneity", homog, rel, eps);

  double invariance = 0.0;
  const int pairs = cfg.param("invariance_pairs", 5);
  for (int i = 0; i < pairs; ++i) {
    Point g = random_point(rng, origin, cfg.box);
    Point a = random_point(rng, origin, cfg.box);
    Point b = random_point(rng, origin, cfg.box);
    double dab = d(a, b);
    double dg = d(bch_multiply(alg, g, a), bch_multiply(alg, g, b));
    invariance = std::max(invariance, std::abs(dg - dab) / dab);
  }
  rec.bound("left_invariance", invariance, rel);

  if (alg.name == "heisenberg") {
    // known value for this bracket normalization: d(0, (0,0,1)) = sqrt(4 pi)
    Point z = Point::Zero(3);
    z(2) = 1.0;
    double ref = std::sqrt(4.0 * std::numbers::pi);
    rec.bound("vertical_unit", std::abs(d(origin, z) - ref) / ref, rel);
  }
}

inline void run_projection(const ExperimentConfig& cfg, RunReport& rep) {
  CoherentProjection q = build_projection(cfg.projection);
  detail::Recorder rec(rep, q.name);
  SamplePlan plan = cfg.plan();
  const double min_rate = cfg.tol("rate", 0.9);
  auto ax = check_projection_axioms(q, plan);
  for (const auto& e : ax.entries) {
    double tol = e.axiom == "roundtrip" ? 1e3 * plan.exact_tol
                 : (e.axiom == "II" || e.axiom == "IV") ? plan.limit.tol
                                                         : plan.exact_tol;
    bool pass = e.pass;
    if (e.axiom == "IV" && e.min_rate) pass = pass && *e.min_rate >= min_rate;
    rec.add(e.axiom, e.worst, tol, pass, std::nullopt, e.min_rate);
  }
  if (!cfg.param("extended", true)) return;

  std::mt19937_64 rng(cfg.seed + 1);
  Point origin = Point::Zero(q.base.dim);
  double morphism = 0.0, relation = 0.0;
  const int n = std::min(cfg.samples, cfg.param("extended_samples", 8));
  for (int i = 0; i < n; ++i) {
    Point x = random_point(rng, origin, plan.box);
    Point u = random_point(rng, x, plan.radius);
    Point v = random_point(rng, x, plan.radius);
    morphism = std::max(morphism, tangent_projection_residual(q, x, u, v, plan.limit));
    for (double e : {0.5, 0.1, 0.01}) relation = std::max(relation, theta_sigma_residual(q, x, e, u, v));
  }
  rec.bound("tangent_projection_morphism", morphism, cfg.tol("morphism", 1e-6));
  rec.bound("theta_sigma_relation", relation, cfg.tol("relation", 1e-9));

  auto sup = check_supplementary(q, plan);
  rec.add("lipschitz_bound", sup.lipschitz, kInf, sup.pass_a);
  rec.add("dilation_flow_arc_ratio", sup.ratio_deviation, cfg.tol("arc_ratio", 1e-4), sup.pass_b);

  auto curves = build_curves(cfg.curves);
  Structure ind = induced_structure(q);
  const double len_tol = cfg.tol("length_identity", 0.01);
  for (const auto& f : curves) {
    double worst = 0.0;
    for (double e : {0.5, 0.1, 0.01}) {
      double direct = rescaled_length(ind, f.base, e, f.curve);
      double projected = projected_rescaled_length(q, f.base, e, f.curve);
      worst = std::max(worst, std::abs(direct - projected) / std::max(direct, 1e-300));
    }
    rec.bound("projected_length_identity[" + f.name + "]", worst, len_tol);
  }
}

inline void run_chow(const ExperimentConfig& cfg, RunReport& rep) {
  CoherentProjection q = build_projection(cfg.projection);
  detail::Recorder rec(rep, q.name);
  const int dim = q.base.dim;
  Point x = cfg.params.contains("base") ? lab::detail::point(cfg.params.at("base"), "params.base")
                                        : Point(Point::Zero(dim));
  const double min_rate = cfg.tol("rate", 0.9);
  std::mt19937_64 rng(cfg.seed);

  // Psi at scale eps against the limit recursion
  {
    double gap = 0.0, rate = kInf;
    bool conv = true;
    const int words = cfg.param("psi_words", 4);
    for (int i = 0; i < words; ++i) {
      std::vector<Point> letters;
      for (int k = 0; k < 3; ++k) letters.push_back(random_point(rng, x, 0.3));
      Point ref = psi_zero_limit(q, x, letters).endpoint();
      auto r = extrapolate_limit([&](double e) { return psi_transform(q, e, {}, x, letters).endpoint(); }, q.limit);
      conv = conv && r.converged;
      if (r.converged) gap = std::max(gap, max_dist(*r.extrapolated, ref));
      if (r.empirical_rate) rate = std::min(rate, *r.empirical_rate);
    }
    std::optional<double> rr = std::isfinite(rate) ? std::optional<double>(rate) : std::nullopt;
    rec.add("psi_limit", gap, q.limit.tol, conv && gap <= q.limit.tol && rr && *rr >= min_rate, std::nullopt, rr);
  }
  // commutator word from x
  if (dim == 3) {
    Point a = x;
    std::vector<Point> letters;
    for (const auto& inc : {detail::heis_point(1, 0, 0), detail::heis_point(0, 1, 0), detail::heis_point(-1, 0, 0),
                            detail::heis_point(0, -1, 0)}) {
      Point l = heis::mul(a, inc);
      letters.push_back(l);
      a = psi_zero_step(q, x, a, l);
    }
    Point expect = heis::mul(x, detail::heis_point(0, 0, 1));
    rec.bound("commutator_word", max_dist(psi_zero_limit(q, x, letters).endpoint(), expect), 1e-6);
  }
  // idempotence and rescaling under the zero-scale word
  {
    double idem = 0.0, rescale = 0.0;
    for (int i = 0; i < 4; ++i) {
      std::vector<Point> letters;
      for (int k = 0; k < 3; ++k) letters.push_back(random_point(rng, x, 0.3));
      std::vector<double> zeros(letters.size(), 0.0), w;
      for (std::size_t k = 0; k < letters.size(); ++k) w.push_back(std::uniform_real_distribution<double>(0.05, 1.0)(rng));
      for (double e : {1.0, 0.5, 0.1}) {
        auto first = psi_transform(q, e, zeros, x, letters);
        std::vector<Point> again(first.images.begin() + 1, first.images.end());
        auto second = psi_transform(q, e, w, x, again);
        for (std::size_t k = 0; k < first.images.size(); ++k) {
          idem = std::max(idem, max_dist(first.images[k], second.images[k]));
        }
        std::vector<Point> scaled;
        for (const auto& l : letters) scaled.push_back(induced_dilation(q, x, e, l));
        Point rhs = induced_dilation(q, x, 1.0 / e, psi_transform(q, 1.0, zeros, x, scaled).endpoint());
        rescale = std::max(rescale, max_dist(first.endpoint(), rhs));
      }
    }
    rec.bound("psi_idempotence", idem, cfg.tol("idempotence", 1e-9));
    rec.bound("psi_rescaling", rescale, cfg.tol("idempotence", 1e-9));
  }
  // generalized Chow on seeded targets
  {
    ChowOptions opt;
    opt.n = cfg.param("n", 5);
    opt.rho = cfg.param("rho", 0.5);
    const int targets = cfg.param("targets", 50);
    const double radius = cfg.param("radius", 0.1);
    const double min_radius = cfg.param("min_radius", 1e-4);
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst = 0.0, horizontal = 0.0;
    bool all_reached = true, all_nested = true;
    std::vector<double> etas, incs;
    for (int i = 0; i < targets; ++i) {
      Point dir(dim);
      for (int k = 0; k < dim; ++k) dir(k) = N(rng);
      double r = min_radius * std::pow(radius / min_radius, U(rng));
      Point z = x + r * dir.normalized();
      auto res = chow_solve(q, x, z, opt);
      all_reached = all_reached && res.reached;
      all_nested = all_nested && res.nested;
      worst = std::max(worst, res.residual);
      etas.push_back(q.base.distance(x, z));
      incs.push_back(res.max_increment());
      auto sc = build_short_curve(q, 1.0, x, res.letters);
      auto hr = horizontality_test(q, sc.trace, cfg.tol("horizontality", 1e-4), short_curve_times(sc));
      horizontal = std::max(horizontal, hr.max_residual);
    }
    rec.add("chow_reach", worst, cfg.tol("reach", 1e-4), all_reached && worst <= cfg.tol("reach", 1e-4));
    rec.add("chow_nested", all_nested ? 0.0 : 1.0, 0.0, all_nested);
    auto fit = power_law_fit(etas, incs);
    double dev = std::abs(fit.exponent - 0.5);
    rec.add("chow_increment_exponent", dev, cfg.tol("exponent", 0.1), dev <= cfg.tol("exponent", 0.1), std::nullopt,
            fit.exponent);
    rec.bound("short_curve_horizontal", horizontal, cfg.tol("horizontality", 1e-4));
  }
}

inline void run_gamma(const ExperimentConfig& cfg, RunReport& rep) {
  Structure s = cfg.instance.is_null() ? detail::sr_with_coordinate_distance() : build_instance(cfg.instance);
  detail::Recorder rec(rep, s.name);
  auto curves = build_curves(cfg.curves);
  const auto ladder = cfg.params.contains("ladder") ? lab::detail::parse_ladder(cfg.params.at("ladder")) : make_ladder(12);
  const double linear = cfg.tol("linear_constant", 1.0);
  const double liminf_tol = cfg.tol("liminf", 1e-6);
  const bool frame = s.name == "heisenberg_projection_induced";
  for (const auto& f : curves) {
    const Point& x = f.base;
    double limit = require_limit(limit_length(s, x, f.curve), "limit length")(0);
    if (frame && s.dim == 3) {
      double closed = detail::heisenberg_frame_length(x, f.curve);
      rec.bound("limit_dual_route[" + f.name + "]", std::abs(closed - limit) / std::max(closed, 1e-300),
                cfg.tol("dual_route", 1e-4));
    }
    auto g = gamma_check([&](double e) { return rescaled_length(s, x, e, f.curve); }, limit, ladder, liminf_tol);
    for (std::size_t k = 0; k < g.scales.size(); ++k) {
      double dev = std::abs(g.values[k] - limit);
      rec.bound("l_eps[" + f.name + "]", dev, linear * g.scales[k] + liminf_tol, g.scales[k]);
    }
    rec.add("liminf[" + f.name + "]", std::max(0.0, limit - g.liminf_estimate), liminf_tol, g.liminf_ok);
    std::optional<double> rate = g.deviation_fit ? std::optional<double>(g.deviation_fit->exponent) : std::nullopt;
    rec.add("deviation_constant[" + f.name + "]", g.deviation_constant, linear, g.deviation_constant <= linear,
            std::nullopt, rate);
  }
  // rescaled distances of the tempered base along a sequence, lengths against the tangent length
  if (cfg.param("tempered_sequence", false)) {
    Structure tb = make_tempered_base();
    rec.set_instance(tb.name);
    for (const auto& f : curves) {
      const Point& x = f.base;
      LimitOptions t_opt{make_ladder(12), 1e-9, Acceleration::None};
      Structure tangent = with_distance(
          tb,
          [tb, x, t_opt](const Point& u, const Point& v) {
            return require_limit(tangent_distance(tb, x, u, v, t_opt), "tangent distance")(0);
          },
          "tempered_tangent");
      double target = curve_length(tangent, f.curve);
      for (double e : {0.5, 0.25, 0.125, 0.0625}) {
        Structure dn = with_distance(
            tb, [tb, x, e](const Point& u, const Point& v) { return rescaled_distance(tb, x, e, u, v); },
            "tempered_rescaled");
        double value = curve_length(dn, f.curve);
        rec.bound("rescaled_distance_length[" + f.name + "]", std::abs(value - target) / target, cfg.tol("sequence", 1e-4),
                  e);
      }
    }
  }
}

inline void run_rnp(const ExperimentConfig& cfg, RunReport& rep) {
  Structure s = build_instance(cfg.instance);
  detail::Recorder rec(rep, s.name);
  auto curves = build_curves(cfg.curves);
  RnpOptions opt;
  opt.points = cfg.param("points", 101);
  opt.threshold = cfg.tol("fraction", 0.95);
  opt.identity_tol = cfg.tol("identity", 0.05);
  for (const auto& f : curves) {
    auto r = rnp_probe(s, f.curve, opt);
    rec.bound("derivable_fraction[" + f.name + "]", 1.0 - r.fraction, 1.0 - opt.threshold);
    if (r.fraction > 0.0) rec.bound("speed_identity[" + f.name + "]", r.max_identity_residual, opt.identity_tol);
    if (cfg.params.contains("cluster_ratio_min") && f.velocity) {
      double ratio = r.mean_cluster_diameter / f.velocity->norm();
      double need = cfg.params.at("cluster_ratio_min").get<double>();
      rec.add("cluster_diameter[" + f.name + "]", ratio, need, ratio >= need);
    }
  }
}

inline void run_tempered(const ExperimentConfig& cfg, RunReport& rep) {
  Structure base = build_instance(cfg.instance);
  detail::Recorder rec(rep, base.name);
  DistanceFn d = base.distance;
  TemperedOptions opt;
  opt.samples = cfg.samples;
  opt.box = cfg.box;
  opt.radius = cfg.radius;
  opt.seed = cfg.seed;
  auto r = phi_and_tempered(base, d, opt);
  for (std::size_t k = 0; k < r.scales.size(); ++k) {
    rec.add("envelope", r.big_c_per_scale[k] - r.c_per_scale[k], kInf,
            r.c_per_scale[k] > 0.0 && std::isfinite(r.big_c_per_scale[k]), r.scales[k]);
  }
  rec.add("c_global", r.c, 0.0, r.c > 0.0);
  rec.add("C_global", r.big_c, kInf, std::isfinite(r.big_c));
  // per-eps against global envelopes
  double discrepancy = 0.0;
  for (std::size_t k = 0; k < r.scales.size(); ++k) {
    discrepancy = std::max({discrepancy, r.c_per_scale[k] - r.c, r.big_c - r.big_c_per_scale[k]});
  }
  rec.bound("envelope_discrepancy", discrepancy, cfg.tol("discrepancy", 0.1));
  rec.bound("phi_sandwich", r.sandwich_violation, cfg.tol("sandwich", 1e-6));
  rec.add("tempered", r.big_c / std::max(r.c, 1e-300) - 1.0, kInf, r.tempered);
  if (cfg.param("phi_distance", false)) {
    std::mt19937_64 rng(cfg.seed + 3);
    Point origin = Point::Zero(base.dim);
    double worst = 0.0;
    for (int i = 0; i < cfg.param("phi_pairs", 3); ++i) {
      Point x = random_point(rng, origin, cfg.box);
      Point y = random_point(rng, x, cfg.radius);
      auto pd = phi_length_distance(base, d, x, y, 2, cfg.seed + i);
      worst = std::max(worst, std::abs(pd.value - d(x, y)) / d(x, y));
    }
    rec.bound("phi_distance", worst, cfg.tol("phi_distance", 0.02));
  }
}

inline void run_recovery(const ExperimentConfig& cfg, RunReport& rep) {
  CoherentProjection q = build_projection(cfg.projection);
  detail::Recorder rec(rep, q.name);
  auto curves = build_curves(cfg.curves);
  std::vector<double> lambdas = cfg.param("lambdas", std::vector<double>{0.1, 0.03, 0.01});
  const double tol = cfg.tol("recovery", 0.05);
  const double floor = cfg.tol("noise_floor", 1e-8);
  for (const auto& f : curves) {
    std::vector<double> errors;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      auto r = recovery_sequence(q, f.base, f.curve, lambdas[k]);
      errors.push_back(r.error);
      bool last = k + 1 == lambdas.size();
      rec.bound("recovery[" + f.name + "] lambda=" + detail::fmt(lambdas[k]), r.error, last ? tol : 1.0, r.eps);
    }
    double increase = 0.0;
    for (std::size_t k = 1; k < errors.size(); ++k) increase = std::max(increase, errors[k] - errors[k - 1]);
    rec.bound("recovery_monotone[" + f.name + "]", increase, floor);
  }
}

inline void run_equivalence(const ExperimentConfig& cfg, RunReport& rep) {
  if (!cfg.params.contains("pairs") || !cfg.params.at("pairs").is_array()) invalid("params.pairs must be an array");
  detail::Recorder rec(rep, "");
  for (const auto& pr : cfg.params.at("pairs")) {
    if (!pr.contains("first") || !pr.contains("second") || !pr.contains("equivalent")) {
      invalid("params.pairs entries need first, second and equivalent");
    }
    Structure s1 = build_instance(pr.at("first"));
    Structure s2 = build_instance(pr.at("second"));
    if (s1.dim != s2.dim) invalid("equivalence pair with different dimensions");
    const bool expect = pr.at("equivalent").get<bool>();
    rec.set_instance(s1.name + "~" + s2.name);
    std::mt19937_64 rng(cfg.seed);
    Point origin = Point::Zero(s1.dim);
    bool all = true;
    double worst = 0.0, rate = kInf;
    for (int i = 0; i < cfg.samples; ++i) {
      Point x = random_point(rng, origin, cfg.box);
      Point u = random_point(rng, x, cfg.radius);
      auto r = equivalence_maps(s1, s2, x, u, cfg.limit);
      all = all && r.equivalent;
      worst = std::max(worst, r.roundtrip);
      if (r.p.empirical_rate) rate = std::min(rate, *r.p.empirical_rate);
    }
    std::optional<double> rr = std::isfinite(rate) ? std::optional<double>(rate) : std::nullopt;
    rec.add(expect ? "equivalent" : "not_equivalent", worst, 10.0 * cfg.limit.tol, all == expect, std::nullopt, rr);
  }
}

/// Runs one experiment; failures inside a suite become FAIL rows named after the error kind.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  RunReport rep;
  rep.experiment = cfg.experiment;
  rep.seed = cfg.seed;
  rep.expect_fail = cfg.expect_fail;
  rep.config = cfg.raw;
  rep.config["seed"] = cfg.seed;
  static const std::map<std::string, void (*)(const ExperimentConfig&, RunReport&)> table{
      {"axioms", run_axioms},     {"tangent", run_tangent},   {"carnot", run_carnot},
      {"projection", run_projection}, {"chow", run_chow},     {"ccdist", run_ccdist},
      {"gamma", run_gamma},       {"rnp", run_rnp},           {"tempered", run_tempered},
      {"recovery", run_recovery}, {"equivalence", run_equivalence}};
  auto it = table.find(cfg.experiment);
  if (it == table.end()) throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + cfg.experiment + "'");
  try {
    it->second(cfg, rep);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid || e.kind() == ErrorKind::UnknownExperiment) throw;
    rep.rows.push_back({std::string("error:") + to_string(e.kind()), "", std::nullopt, kInf, 0.0, kFail, std::nullopt});
    rep.notes.push_back(e.what());
  }
  if (!rep.rows.empty()) rep.instance = rep.rows.front().instance;
  if (cfg.expect_fail) {
    bool detected = false;
    for (auto& r : rep.rows) {
      if (r.verdict == kFail && r.check_name.rfind("error:", 0) != 0) {
        r.verdict = kFailAsExpected;
        detected = true;
      }
    }
    if (!detected) rep.rows.push_back({"expected_failure_detected", rep.instance, std::nullopt, 0.0, 0.0, kFail, std::nullopt});
  }
  return rep;
}

}  // namespace dilatation::lab
