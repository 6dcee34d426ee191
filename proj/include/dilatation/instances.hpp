#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dilatation/carnot.hpp"
#include "dilatation/core.hpp"

namespace dilatation {

enum class VectorNorm { L2, LInf };

inline Structure make_euclidean(int n, VectorNorm norm = VectorNorm::L2) {
  if (n < 1) throw Error(ErrorKind::Domain, "dimension must be positive");
  Structure s;
  s.name = "euclidean" + std::to_string(n) + (norm == VectorNorm::L2 ? "" : "_linf");
  s.dim = n;
  s.dilate_raw = [](const Point& x, double e, const Point& u) -> Point { return x + e * (u - x); };
  if (norm == VectorNorm::L2) {
    s.distance = [](const Point& a, const Point& b) { return (a - b).norm(); };
  } else {
    s.distance = [](const Point& a, const Point& b) { return max_dist(a, b); };
  }
  return s;
}

inline Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

/// Plane with dilations x + eps R(theta ln eps)(y - x).
inline Structure make_complex_exponent(double theta) {
  Structure s;
  s.name = "complex_exponent";
  s.dim = 2;
  s.dilate_raw = [theta](const Point& x, double e, const Point& u) -> Point {
    return x + e * (rotation(theta * std::log(e)) * (u - x));
  };
  s.distance = [](const Point& a, const Point& b) { return (a - b).norm(); };
  return s;
}

/// Heisenberg group law in exponential coordinates, written out by hand.
namespace heis {

inline Point mul(const Point& a, const Point& b) {
  Point out(3);
  out << a(0) + b(0), a(1) + b(1), a(2) + b(2) + 0.5 * (a(0) * b(1) - a(1) * b(0));
  return out;
}

inline Point inv(const Point& a) { return -a; }

/// Frame coordinates of u seen from x.
inline Point offset(const Point& x, const Point& u) { return mul(inv(x), u); }

inline Point sr_scale(const Point& a, double e) {
  Point out(3);
  out << e * a(0), e * a(1), e * e * a(2);
  return out;
}

inline double gauge(const Point& a) { return std::max(std::hypot(a(0), a(1)), std::sqrt(std::abs(a(2)))); }

}  // namespace heis

/**
 * @brief Left-invariant frame X1 = dx - (y/2) dz, X2 = dy + (x/2) dz, X3 = dz.
 */
struct FrameChart {
  int dim = 3;
  std::vector<int> degrees{1, 1, 2};

  Point field(int i, const Point& p) const {
    Point v = Point::Zero(3);
    if (i == 0) v << 1.0, 0.0, -0.5 * p(1);
    if (i == 1) v << 0.0, 1.0, 0.5 * p(0);
    if (i == 2) v << 0.0, 0.0, 1.0;
    return v;
  }

  /// Flow of the i-th field for time t by classical RK4.
  Point flow(int i, const Point& p, double t, int steps = 16) const {
    Point y = p;
    double h = t / steps;
    for (int k = 0; k < steps; ++k) {
      Point k1 = field(i, y);
      Point k2 = field(i, y + 0.5 * h * k1);
      Point k3 = field(i, y + 0.5 * h * k2);
      Point k4 = field(i, y + h * k3);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
  }

  /// |(flow commutator of X1, X2 at step h)(p) - p| / h^2 compared with X3(p).
  double bracket_residual(const Point& p, double h) const {
    Point q = flow(1, flow(0, flow(1, flow(0, p, h), h), -h), -h);
    return max_dist((q - p) / (h * h), field(2, p));
  }

  /// Linear independence of the frame at p, as |det|.
  double frame_determinant(const Point& p) const {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) m.col(i) = field(i, p);
    return std::abs(m.determinant());
  }
};

enum class SrDistance { Gauge, CcEstimate };

/// Sub-Riemannian Heisenberg structure: x . (eps a, eps b, eps^2 c) in frame offsets.
inline Structure make_heisenberg_sr(SrDistance backend = SrDistance::Gauge, const CcOptions& cc = {}) {
  Structure s;
  s.name = backend == SrDistance::Gauge ? "heisenberg_sr" : "heisenberg_sr_cc";
  s.dim = 3;
  s.domain_radius = 10.0;
  s.dilate_raw = [](const Point& x, double e, const Point& u) {
    return heis::mul(x, heis::sr_scale(heis::offset(x, u), e));
  };
  s.domain_distance = [](const Point& a, const Point& b) { return heis::gauge(heis::offset(a, b)); };
  if (backend == SrDistance::Gauge) {
    s.distance = s.domain_distance;
  } else {
    GradedAlgebra alg = heisenberg_algebra();
    s.distance = [alg, cc](const Point& a, const Point& b) { return cc_distance_estimate(alg, a, b, cc).value; };
  }
  return s;
}

/// Isotropic frame dilations x . (eps (x^-1 u)) with the coordinate Euclidean distance.
inline Structure make_tempered_base() {
  Structure s;
  s.name = "tempered_base";
  s.dim = 3;
  s.domain_radius = 10.0;
  s.dilate_raw = [](const Point& x, double e, const Point& u) { return heis::mul(x, e * heis::offset(x, u)); };
  s.distance = [](const Point& a, const Point& b) { return (a - b).norm(); };
  return s;
}

}  // namespace dilatation
