#pragma once

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dilatation/errors.hpp"

namespace dilatation {

using Point = Eigen::VectorXd;

enum class Interpolation { LinearChart, GroupGeodesicSegment };

/// Interpolant between two consecutive samples, s in [0, 1].
using SegmentFn = std::function<Point(const Point&, const Point&, double)>;

/**
 * @brief Curve carried by a strictly increasing time grid.
 *
 * Between grid nodes the curve is evaluated through `exact` when a closed
 * form is attached, otherwise through the declared interpolation.
 */
struct SampledCurve {
  std::vector<double> times;
  std::vector<Point> points;
  Interpolation interpolation = Interpolation::LinearChart;
  SegmentFn segment;                    // used for GroupGeodesicSegment
  std::function<Point(double)> exact;   // optional closed form

  double start() const { return times.front(); }
  double finish() const { return times.back(); }
  int dim() const { return static_cast<int>(points.front().size()); }

  Point at(double t) const {
    if (t < start() - 1e-12 || t > finish() + 1e-12) {
      throw Error(ErrorKind::Domain, "curve evaluated outside its time interval");
    }
    if (exact) return exact(std::clamp(t, start(), finish()));
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    if (i + 1 >= times.size()) return points.back();
    double s = (t - times[i]) / (times[i + 1] - times[i]);
    if (s <= 0.0) return points[i];
    if (interpolation == Interpolation::GroupGeodesicSegment && segment) {
      return segment(points[i], points[i + 1], s);
    }
    return points[i] + s * (points[i + 1] - points[i]);
  }
};

inline void validate_curve(const SampledCurve& c) {
  if (c.times.size() < 2 || c.times.size() != c.points.size()) {
    throw Error(ErrorKind::Domain, "curve needs at least two samples with matching times");
  }
  for (std::size_t i = 1; i < c.times.size(); ++i) {
    if (!(c.times[i] > c.times[i - 1])) throw Error(ErrorKind::Domain, "curve times not strictly increasing");
  }
  for (const auto& p : c.points) {
    if (!p.allFinite()) throw Error(ErrorKind::Domain, "curve point not finite");
  }
}

/// Curve given by a closed form, tabulated on n + 1 uniform nodes.
inline SampledCurve make_curve(std::function<Point(double)> f, double a, double b, int n = 64) {
  SampledCurve c;
  for (int i = 0; i <= n; ++i) {
    double t = a + (b - a) * i / n;
    c.times.push_back(t);
    c.points.push_back(f(t));
  }
  c.exact = std::move(f);
  validate_curve(c);
  return c;
}

inline SampledCurve from_table(std::vector<double> times, std::vector<Point> points,
                               Interpolation interp = Interpolation::LinearChart, SegmentFn segment = {}) {
  SampledCurve c;
  c.times = std::move(times);
  c.points = std::move(points);
  c.interpolation = interp;
  c.segment = std::move(segment);
  validate_curve(c);
  return c;
}

/// Image of a curve under a point map, keeping the parametrization.
inline SampledCurve map_curve(const SampledCurve& c, const std::function<Point(const Point&)>& f) {
  SampledCurve out;
  out.times = c.times;
  for (const auto& p : c.points) out.points.push_back(f(p));
  auto src = c;
  out.exact = [src, f](double t) { return f(src.at(t)); };
  return out;
}

}  // namespace dilatation
