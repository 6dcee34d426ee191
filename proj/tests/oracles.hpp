#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>

// Reference computations that share no code with the library.

namespace oracle {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Heisenberg element (a, b, c) in exponential coordinates as an upper unipotent matrix.
inline Mat3 to_matrix(const Eigen::VectorXd& p) {
  Mat3 m = Mat3::Identity();
  m(0, 1) = p(0);
  m(1, 2) = p(1);
  m(0, 2) = p(2) + 0.5 * p(0) * p(1);
  return m;
}

inline Eigen::VectorXd from_matrix(const Mat3& m) {
  Eigen::VectorXd p(3);
  p << m(0, 1), m(1, 2), m(0, 2) - 0.5 * m(0, 1) * m(1, 2);
  return p;
}

inline Eigen::VectorXd mul(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return from_matrix(to_matrix(a) * to_matrix(b));
}

inline Eigen::VectorXd inv(const Eigen::VectorXd& a) { return from_matrix(to_matrix(a).inverse()); }

/// Group dilation (eps a, eps b, eps^2 c) acting on the matrix entries directly.
inline Eigen::VectorXd scale(const Eigen::VectorXd& a, double e) {
  Mat3 m = to_matrix(a);
  Mat3 d = Mat3::Identity();
  d(0, 1) = e * m(0, 1);
  d(1, 2) = e * m(1, 2);
  d(0, 2) = e * e * m(0, 2);
  return from_matrix(d);
}

/// Commutator g h g^-1 h^-1 of matrices.
inline Eigen::VectorXd commutator(const Eigen::VectorXd& g, const Eigen::VectorXd& h) {
  Mat3 G = to_matrix(g), H = to_matrix(h);
  return from_matrix(G * H * G.inverse() * H.inverse());
}

/**
 * @brief Limit length of x . w(t) for SR dilations measured in coordinates.
 *
 * `dw` is the analytic planar derivative (w1', w2'); 10-point Gauss-Legendre
 * on `panels` panels.
 */
inline double frame_length(const Eigen::VectorXd& x, const std::function<std::array<double, 2>(double)>& dw,
                           double a, double b, int panels = 64) {
  static const double nodes[] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244, 0.8650633666889845,
                                 0.9739065285171717};
  static const double weights[] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                                   0.0666713443086881};
  auto speed = [&](double t) {
    auto d = dw(t);
    double z = 0.5 * (x(0) * d[1] - x(1) * d[0]);
    return std::sqrt(d[0] * d[0] + d[1] * d[1] + z * z);
  };
  double h = (b - a) / panels, sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    double mid = a + (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) {
      sum += weights[i] * (speed(mid - 0.5 * h * nodes[i]) + speed(mid + 0.5 * h * nodes[i]));
    }
  }
  return 0.5 * h * sum;
}

}  // namespace oracle
