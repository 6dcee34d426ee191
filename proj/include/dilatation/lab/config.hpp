#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dilatation/carnot.hpp"
#include "dilatation/curve.hpp"
#include "dilatation/instances.hpp"
#include "dilatation/projection.hpp"

namespace dilatation::lab {

using nlohmann::json;

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"axioms", "tangent", "carnot",    "projection", "chow",       "ccdist",
                                              "gamma",  "rnp",     "tempered", "recovery",   "equivalence"};
  return names;
}

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  json instance;
  json projection;
  int samples = 16;
  double box = 1.0;
  double radius = 0.5;
  LimitOptions limit;
  double exact_tol = kExactTol;
  json tolerances = json::object();
  json params = json::object();
  json curves = json::array();
  bool expect_fail = false;
  json raw;

  SamplePlan plan() const {
    SamplePlan p;
    p.samples = samples;
    p.box = box;
    p.radius = radius;
    p.limit = limit;
    p.seed = seed;
    p.exact_tol = exact_tol;
    return p;
  }
  double tol(const std::string& key, double fallback) const { return tolerances.value(key, fallback); }
  template <class T>
  T param(const std::string& key, T fallback) const {
    return params.value(key, fallback);
  }
};

[[noreturn]] inline void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

namespace detail {

inline void allow_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) invalid(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) invalid("unknown key '" + k + "' in " + where);
  }
}

inline double number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) invalid(where + "." + key + " is required");
  if (!j.at(key).is_number()) invalid(where + "." + key + " must be a number");
  double v = j.at(key).get<double>();
  if (!std::isfinite(v)) invalid(where + "." + key + " must be finite");
  return v;
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

inline double positive_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  double v = number_or(j, key, fallback, where);
  if (!(v > 0.0)) invalid(where + "." + key + " must be positive");
  return v;
}

inline Point point(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) invalid(where + " must be a non-empty array of numbers");
  Point p(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) invalid(where + " must contain numbers only");
    p(static_cast<int>(i)) = j[i].get<double>();
  }
  if (!p.allFinite()) invalid(where + " must be finite");
  return p;
}

inline std::vector<double> parse_ladder(const json& j) {
  std::vector<double> ladder;
  if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number()) invalid("sampling.ladder entries must be numbers");
      ladder.push_back(v.get<double>());
    }
  } else if (j.is_object()) {
    allow_keys(j, {"k_min", "k_max"}, "sampling.ladder");
    int kmin = j.value("k_min", 1), kmax = j.value("k_max", 24);
    if (kmin < 0 || kmax < kmin || kmax > 60) invalid("sampling.ladder needs 0 <= k_min <= k_max <= 60");
    ladder = make_ladder(kmax, kmin);
  } else {
    invalid("sampling.ladder must be an array or {k_min, k_max}");
  }
  if (ladder.size() < 3) invalid("sampling.ladder needs at least three scales");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0) || ladder[i] > 1.0) invalid("sampling.ladder scales must lie in (0, 1]");
    if (i > 0 && !(ladder[i] < ladder[i - 1])) invalid("sampling.ladder must strictly decrease");
  }
  return ladder;
}

}  // namespace detail

/// Validates the schema and fills defaults; nothing is computed here.
inline ExperimentConfig parse_config(const json& j) {
  detail::allow_keys(j,
                     {"experiment", "seed", "instance", "projection", "sampling", "tolerances", "params", "curves",
                      "expect_fail", "description"},
                     "config");
  ExperimentConfig c;
  c.raw = j;
  if (!j.contains("experiment") || !j.at("experiment").is_string()) invalid("config.experiment must be a string");
  c.experiment = j.at("experiment").get<std::string>();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end()) {
    throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + c.experiment + "'");
  }
  if (!j.contains("seed")) invalid("config.seed is required");
  if (!j.at("seed").is_number_unsigned()) invalid("config.seed must be a non-negative integer");
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("instance")) {
    if (!j.at("instance").is_object() || !j.at("instance").contains("name")) invalid("config.instance needs a name");
    c.instance = j.at("instance");
  }
  if (j.contains("projection")) {
    if (!j.at("projection").is_object() || !j.at("projection").contains("name")) {
      invalid("config.projection needs a name");
    }
    c.projection = j.at("projection");
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    detail::allow_keys(s, {"samples", "box", "radius", "ladder", "acceleration", "limit_tol"}, "sampling");
    if (s.contains("samples")) {
      if (!s.at("samples").is_number_integer() || s.at("samples").get<int>() < 1) {
        invalid("sampling.samples must be a positive integer");
      }
      c.samples = s.at("samples").get<int>();
    }
    c.box = detail::positive_or(s, "box", c.box, "sampling");
    c.radius = detail::positive_or(s, "radius", c.radius, "sampling");
    if (s.contains("ladder")) c.limit.ladder = detail::parse_ladder(s.at("ladder"));
    c.limit.tol = detail::positive_or(s, "limit_tol", c.limit.tol, "sampling");
    if (s.contains("acceleration")) {
      auto a = s.at("acceleration");
      if (a == "none") {
        c.limit.acceleration = Acceleration::None;
      } else if (a == "richardson") {
        c.limit.acceleration = Acceleration::Richardson;
      } else {
        invalid("sampling.acceleration must be 'none' or 'richardson'");
      }
    }
  }
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    if (!t.is_object()) invalid("config.tolerances must be an object");
    for (const auto& [k, v] : t.items()) {
      if (!v.is_number() || !(v.get<double>() >= 0.0)) invalid("tolerances." + k + " must be a non-negative number");
    }
    c.tolerances = t;
    c.exact_tol = t.value("exact", c.exact_tol);
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) invalid("config.params must be an object");
    c.params = j.at("params");
  }
  if (j.contains("curves")) {
    if (!j.at("curves").is_array()) invalid("config.curves must be an array");
    c.curves = j.at("curves");
  }
  if (j.contains("expect_fail")) {
    if (!j.at("expect_fail").is_boolean()) invalid("config.expect_fail must be a boolean");
    c.expect_fail = j.at("expect_fail").get<bool>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    invalid(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline GradedAlgebra build_algebra(const json& j) {
  if (j.is_string()) {
    if (j == "heisenberg") return heisenberg_algebra();
    if (j == "engel") return engel_algebra();
    invalid("unknown algebra '" + j.get<std::string>() + "'");
  }
  detail::allow_keys(j, {"name", "degrees", "brackets"}, "algebra");
  if (!j.contains("degrees") || !j.at("degrees").is_array()) invalid("algebra.degrees must be an array");
  std::vector<int> degrees;
  for (const auto& d : j.at("degrees")) {
    if (!d.is_number_integer() || d.get<int>() < 1) invalid("algebra.degrees must be positive integers");
    degrees.push_back(d.get<int>());
  }
  std::vector<Bracket> brackets;
  for (const auto& b : j.value("brackets", json::array())) {
    if (!b.is_array() || b.size() != 4 || !b[0].is_number_integer() || !b[1].is_number_integer() ||
        !b[2].is_number_integer() || !b[3].is_number()) {
      invalid("algebra.brackets entries must be [i, j, k, value]");
    }
    brackets.emplace_back(b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<double>());
  }
  auto alg = make_algebra(j.value("name", std::string("custom")), degrees, brackets);
  auto check = validate_algebra(alg);
  if (!check.valid()) invalid("algebra '" + alg.name + "' fails validation");
  return alg;
}

/// Instance from {"name": ..., parameters}.
inline Structure build_instance(const json& j) {
  if (!j.is_object() || !j.contains("name") || !j.at("name").is_string()) invalid("instance needs a string name");
  const auto name = j.at("name").get<std::string>();
  if (name == "euclidean") {
    detail::allow_keys(j, {"name", "n", "norm"}, "instance");
    int n = j.value("n", 2);
    if (n < 1) invalid("instance.n must be positive");
    auto norm = j.value("norm", std::string("L2"));
    if (norm != "L2" && norm != "LINF") invalid("instance.norm must be L2 or LINF");
    return make_euclidean(n, norm == "L2" ? VectorNorm::L2 : VectorNorm::LInf);
  }
  if (name == "complex_exponent") {
    detail::allow_keys(j, {"name", "theta"}, "instance");
    return make_complex_exponent(detail::number_or(j, "theta", 1.0, "instance"));
  }
  if (name == "heisenberg_sr") {
    detail::allow_keys(j, {"name", "distance", "segments"}, "instance");
    auto d = j.value("distance", std::string("gauge"));
    if (d != "gauge" && d != "cc") invalid("instance.distance must be gauge or cc");
    CcOptions cc;
    cc.segments = j.value("segments", cc.segments);
    return make_heisenberg_sr(d == "gauge" ? SrDistance::Gauge : SrDistance::CcEstimate, cc);
  }
  if (name == "tempered_base") {
    detail::allow_keys(j, {"name"}, "instance");
    return make_tempered_base();
  }
  if (name == "carnot") {
    detail::allow_keys(j, {"name", "algebra", "distance", "segments"}, "instance");
    if (!j.contains("algebra")) invalid("instance.algebra is required for carnot");
    auto alg = build_algebra(j.at("algebra"));
    auto d = j.value("distance", std::string("gauge"));
    if (d != "gauge" && d != "cc") invalid("instance.distance must be gauge or cc");
    CcOptions cc;
    cc.segments = j.value("segments", cc.segments);
    return carnot_structure(alg, d == "gauge" ? DistanceBackend::CoordinateGauge : DistanceBackend::CcEstimate, cc);
  }
  invalid("unknown instance '" + name + "'");
}

inline CoherentProjection build_projection(const json& j) {
  if (!j.is_object() || !j.contains("name")) invalid("projection needs a name");
  const auto name = j.at("name").get<std::string>();
  if (name == "heisenberg") {
    detail::allow_keys(j, {"name"}, "projection");
    return make_heisenberg_projection();
  }
  if (name == "spiral") {
    detail::allow_keys(j, {"name", "theta"}, "projection");
    return make_spiral_projection(detail::number_or(j, "theta", 1.0, "projection"));
  }
  if (name == "identity") {
    detail::allow_keys(j, {"name", "base"}, "projection");
    if (!j.contains("base")) invalid("projection.base is required for identity");
    return make_identity_projection(build_instance(j.at("base")));
  }
  invalid("unknown projection '" + name + "'");
}

struct CurveFixture {
  std::string name;
  SampledCurve curve;
  Point base;                     // base point of the family, when the fixture declares one
  std::optional<Point> velocity;  // constant chart velocity of straight lines
  bool horizontal = false;
};

namespace detail {

// x . w(t) with w the horizontal lift of a planar path (p1, p2, z).
inline SampledCurve heis_lift(const Point& x, std::function<Point(double)> w, double t1, int nodes) {
  return make_curve([x, w](double t) { return heis::mul(x, w(t)); }, 0.0, t1, nodes);
}

inline Point p3(double a, double b, double c) {
  Point p(3);
  p << a, b, c;
  return p;
}

}  // namespace detail

/**
 * @brief Curve from a formula name plus parameters, or an explicit table.
 *
 * Heisenberg formulas are horizontal lifts through the base point `x`.
 */
inline CurveFixture build_curve(const json& j, int index) {
  if (!j.is_object()) invalid("curves entries must be objects");
  CurveFixture f;
  f.name = j.value("name", "curve" + std::to_string(index));
  const std::string where = "curves[" + std::to_string(index) + "]";
  if (!j.contains("kind") || !j.at("kind").is_string()) invalid(where + ".kind must be a string");
  const auto kind = j.at("kind").get<std::string>();
  int nodes = j.value("nodes", 32);
  if (nodes < 2) invalid(where + ".nodes must be at least 2");
  double t1 = detail::positive_or(j, "t1", 1.0, where);
  auto base = [&](int dim) {
    Point x = j.contains("x") ? detail::point(j.at("x"), where + ".x") : Point(Point::Zero(dim));
    if (x.size() != dim) invalid(where + ".x must have dimension " + std::to_string(dim));
    return x;
  };
  using detail::p3;
  if (kind == "segment") {
    Point a = detail::point(j.value("from", json()), where + ".from");
    Point b = detail::point(j.value("to", json()), where + ".to");
    if (a.size() != b.size()) invalid(where + " endpoints differ in dimension");
    f.curve = make_curve([a, b, t1](double t) { return Point(a + (t / t1) * (b - a)); }, 0.0, t1, nodes);
    f.base = a;
    f.velocity = (b - a) / t1;
  } else if (kind == "circle") {
    Point c = detail::point(j.value("center", json::array({0.0, 0.0})), where + ".center");
    if (c.size() != 2) invalid(where + ".center must be planar");
    double r = detail::positive_or(j, "radius", 1.0, where);
    double t0 = detail::number_or(j, "t0", 0.0, where);
    f.curve = make_curve([c, r](double t) { return Point(c + r * Point(Eigen::Vector2d(std::cos(t), std::sin(t)))); },
                         t0, t0 + t1, nodes);
    f.base = f.curve.at(t0);
  } else if (kind == "polyline") {
    if (!j.contains("points") || !j.at("points").is_array() || j.at("points").size() < 2) {
      invalid(where + ".points needs at least two points");
    }
    std::vector<double> times;
    std::vector<Point> pts;
    for (std::size_t i = 0; i < j.at("points").size(); ++i) {
      times.push_back(t1 * static_cast<double>(i) / static_cast<double>(j.at("points").size() - 1));
      pts.push_back(detail::point(j.at("points")[i], where + ".points"));
    }
    f.curve = from_table(times, pts);
    f.base = pts.front();
  } else if (kind == "table") {
    if (!j.contains("times") || !j.contains("points")) invalid(where + " needs times and points");
    std::vector<double> times;
    std::vector<Point> pts;
    for (const auto& t : j.at("times")) {
      if (!t.is_number()) invalid(where + ".times must be numbers");
      times.push_back(t.get<double>());
    }
    for (const auto& p : j.at("points")) pts.push_back(detail::point(p, where + ".points"));
    try {
      f.curve = from_table(times, pts);
    } catch (const Error& e) {
      invalid(where + ": " + e.what());
    }
    f.base = pts.front();
  } else if (kind == "constant") {
    Point p = detail::point(j.value("point", json()), where + ".point");
    f.curve = make_curve([p](double) { return p; }, 0.0, t1, nodes);
    f.base = p;
    f.horizontal = true;
  } else if (kind == "vertical") {
    Point x = base(3);
    double height = detail::number_or(j, "height", 1.0, where);
    f.curve = make_curve([x, height, t1](double t) { return heis::mul(x, p3(0, 0, height * t / t1)); }, 0.0, t1, nodes);
    f.base = x;
  } else if (kind == "heis_line") {
    Point x = base(3);
    Point v = detail::point(j.value("v", json::array({1.0, 0.0})), where + ".v");
    if (v.size() != 2) invalid(where + ".v must be planar");
    f.curve = detail::heis_lift(x, [v](double t) { return p3(v(0) * t, v(1) * t, 0.0); }, t1, nodes);
    f.base = x;
    f.horizontal = true;
  } else if (kind == "heis_arc") {
    Point x = base(3);
    double r = detail::positive_or(j, "r", 0.6, where);
    f.curve = detail::heis_lift(
        x, [r](double t) { return p3(r * std::sin(t), r * (1 - std::cos(t)), 0.5 * r * r * (t - std::sin(t))); }, t1,
        nodes);
    f.base = x;
    f.horizontal = true;
  } else if (kind == "heis_circle") {
    Point x = base(3);
    double r = detail::positive_or(j, "r", 1.0, where);
    // loop through x, so the lift stays in frame coordinates around it
    f.curve = detail::heis_lift(
        x,
        [r](double t) {
          return p3(r * (std::cos(t) - 1.0), r * std::sin(t), 0.5 * r * r * (t - std::sin(t)));
        },
        t1, nodes);
    f.base = x;
    f.horizontal = true;
  } else if (kind == "heis_wave") {
    Point x = base(3);
    double a = detail::number_or(j, "a", 1.0, where);
    double b = detail::number_or(j, "b", 0.3, where);
    double w = detail::positive_or(j, "omega", 3.0, where);
    f.curve = detail::heis_lift(
        x,
        [a, b, w](double t) {
          return p3(a * t, b * std::sin(w * t), 0.5 * a * b * (t * std::sin(w * t) + 2.0 * (std::cos(w * t) - 1.0) / w));
        },
        t1, nodes);
    f.base = x;
    f.horizontal = true;
  } else if (kind == "heis_parabola") {
    Point x = base(3);
    double k = detail::number_or(j, "k", 1.0, where);
    f.curve = detail::heis_lift(x, [k](double t) { return p3(t, k * t * t, k * t * t * t / 6.0); }, t1, nodes);
    f.base = x;
    f.horizontal = true;
  } else {
    invalid(where + ": unknown curve kind '" + kind + "'");
  }
  return f;
}

inline std::vector<CurveFixture> build_curves(const json& arr) {
  std::vector<CurveFixture> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(build_curve(arr[i], static_cast<int>(i)));
  return out;
}

}  // namespace dilatation::lab
