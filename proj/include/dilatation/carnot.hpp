#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "dilatation/core.hpp"
#include "dilatation/optim.hpp"

namespace dilatation {

/**
 * @brief Graded nilpotent Lie algebra in a fixed basis e_0..e_{n-1}.
 *
 * Structure constants are stored densely: [e_i, e_j] = sum_k c(i,j,k) e_k.
 */
struct GradedAlgebra {
  std::string name;
  int n = 0;
  std::vector<int> degrees;
  std::vector<double> constants;
  int step = 1;

  double c(int i, int j, int k) const { return constants[(static_cast<std::size_t>(i) * n + j) * n + k]; }

  void set_bracket(int i, int j, int k, double v) {
    constants[(static_cast<std::size_t>(i) * n + j) * n + k] = v;
    constants[(static_cast<std::size_t>(j) * n + i) * n + k] = -v;
  }

  std::vector<int> layer(int d) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i) {
      if (degrees[i] == d) out.push_back(i);
    }
    return out;
  }

  std::vector<int> layer_dims() const {
    std::vector<int> out;
    for (int d = 1; d <= step; ++d) out.push_back(static_cast<int>(layer(d).size()));
    return out;
  }
};

using Bracket = std::tuple<int, int, int, double>;

/// Algebra from degrees and sparse brackets (i, j, k, value), i.e. [e_i, e_j] += value e_k.
inline GradedAlgebra make_algebra(std::string name, std::vector<int> degrees, const std::vector<Bracket>& brackets) {
  GradedAlgebra a;
  a.name = std::move(name);
  a.n = static_cast<int>(degrees.size());
  if (a.n == 0) throw Error(ErrorKind::AlgebraMismatch, "algebra needs at least one generator");
  a.degrees = std::move(degrees);
  a.constants.assign(static_cast<std::size_t>(a.n) * a.n * a.n, 0.0);
  a.step = *std::max_element(a.degrees.begin(), a.degrees.end());
  for (const auto& [i, j, k, v] : brackets) {
    if (i < 0 || j < 0 || k < 0 || i >= a.n || j >= a.n || k >= a.n) {
      throw Error(ErrorKind::AlgebraMismatch, "bracket index out of range");
    }
    a.set_bracket(i, j, k, v);
  }
  return a;
}

inline GradedAlgebra heisenberg_algebra() { return make_algebra("heisenberg", {1, 1, 2}, {{0, 1, 2, 1.0}}); }

inline GradedAlgebra engel_algebra() {
  return make_algebra("engel", {1, 1, 2, 3}, {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}});
}

inline void require_same(const GradedAlgebra& alg, const Point& a) {
  if (a.size() != alg.n) throw Error(ErrorKind::AlgebraMismatch, "element does not belong to " + alg.name);
}

inline Point lie_bracket(const GradedAlgebra& alg, const Point& a, const Point& b) {
  require_same(alg, a);
  require_same(alg, b);
  Point out = Point::Zero(alg.n);
  for (int i = 0; i < alg.n; ++i) {
    if (a(i) == 0.0) continue;
    for (int j = 0; j < alg.n; ++j) {
      if (b(j) == 0.0) continue;
      double w = a(i) * b(j);
      for (int k = 0; k < alg.n; ++k) out(k) += w * alg.c(i, j, k);
    }
  }
  return out;
}

struct AlgebraCheck {
  double antisymmetry = 0.0;
  double jacobi = 0.0;
  bool graded = true;
  int generated_rank = 0;
  bool generates = false;
  bool valid() const { return antisymmetry == 0.0 && jacobi <= 1e-12 && graded && generates; }
};

inline AlgebraCheck validate_algebra(const GradedAlgebra& alg) {
  AlgebraCheck r;
  const int n = alg.n;
  auto e = [n](int i) {
    Point p = Point::Zero(n);
    p(i) = 1.0;
    return p;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        r.antisymmetry = std::max(r.antisymmetry, std::abs(alg.c(i, j, k) + alg.c(j, i, k)));
        if (alg.c(i, j, k) != 0.0 && alg.degrees[k] != alg.degrees[i] + alg.degrees[j]) r.graded = false;
        Point jac = lie_bracket(alg, e(i), lie_bracket(alg, e(j), e(k))) +
                    lie_bracket(alg, e(j), lie_bracket(alg, e(k), e(i))) +
                    lie_bracket(alg, e(k), lie_bracket(alg, e(i), e(j)));
        r.jacobi = std::max(r.jacobi, max_norm(jac));
      }
    }
  }
  std::vector<Point> span;
  for (int i : alg.layer(1)) span.push_back(e(i));
  std::vector<Point> frontier = span;
  for (int d = 2; d <= alg.step; ++d) {
    std::vector<Point> next;
    for (int i : alg.layer(1)) {
      for (const auto& f : frontier) next.push_back(lie_bracket(alg, e(i), f));
    }
    span.insert(span.end(), next.begin(), next.end());
    frontier = next;
  }
  Eigen::MatrixXd m(n, static_cast<int>(span.size()));
  for (std::size_t c = 0; c < span.size(); ++c) m.col(static_cast<int>(c)) = span[c];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-12);
  r.generated_rank = static_cast<int>(lu.rank());
  r.generates = r.generated_rank == n;
  return r;
}

inline constexpr int kMaxBchStep = 3;

/// Group product in exponential coordinates, BCH truncated at the algebra step.
inline Point bch_multiply(const GradedAlgebra& alg, const Point& a, const Point& b) {
  require_same(alg, a);
  require_same(alg, b);
  if (alg.step > kMaxBchStep) throw Error(ErrorKind::UnsupportedStep, "BCH truncation implemented up to step 3");
  Point z = a + b;
  if (alg.step >= 2) {
    Point ab = lie_bracket(alg, a, b);
    z += 0.5 * ab;
    if (alg.step >= 3) z += (lie_bracket(alg, a, ab) - lie_bracket(alg, b, ab)) / 12.0;
  }
  return z;
}

inline Point group_inverse(const Point& a) { return -a; }

inline Point group_dilation(const GradedAlgebra& alg, const Point& a, double eps) {
  require_same(alg, a);
  Point out(alg.n);
  for (int i = 0; i < alg.n; ++i) {
    double f = eps;
    for (int d = 1; d < alg.degrees[i]; ++d) f *= eps;
    out(i) = a(i) * f;
  }
  return out;
}

/// Homogeneous quasi-norm max_d |a_d|^(1/d) over the layers.
inline double gauge_norm(const GradedAlgebra& alg, const Point& a) {
  double out = 0.0;
  for (int d = 1; d <= alg.step; ++d) {
    double sq = 0.0;
    for (int i : alg.layer(d)) sq += a(i) * a(i);
    double layer_norm = std::sqrt(sq);
    out = std::max(out, d == 1 ? layer_norm : std::pow(layer_norm, 1.0 / d));
  }
  return out;
}

inline double gauge_distance(const GradedAlgebra& alg, const Point& x, const Point& y) {
  return gauge_norm(alg, bch_multiply(alg, group_inverse(x), y));
}

/// One factor exp(t e_g) of a horizontal decomposition; `generator` is 1-based.
struct Factor {
  double t = 0.0;
  int generator = 1;
};

inline Point compose_factors(const GradedAlgebra& alg, const std::vector<Factor>& factors) {
  Point out = Point::Zero(alg.n);
  for (const auto& f : factors) {
    Point step = Point::Zero(alg.n);
    step(f.generator - 1) = f.t;
    out = bch_multiply(alg, out, step);
  }
  return out;
}

namespace detail {

inline void append_commutator(std::vector<Factor>& out, double s, int i, int j) {
  out.push_back({s, i + 1});
  out.push_back({s, j + 1});
  out.push_back({-s, i + 1});
  out.push_back({-s, j + 1});
}

// exp(coef [e_i, e_j]) up to higher layers.
inline std::vector<Factor> commutator_word(double coef, int i, int j) {
  std::vector<Factor> out;
  double s = std::sqrt(std::abs(coef));
  if (coef >= 0.0) {
    append_commutator(out, s, i, j);
  } else {
    append_commutator(out, s, j, i);
  }
  return out;
}

inline std::vector<Factor> inverse_word(const std::vector<Factor>& w) {
  std::vector<Factor> out;
  for (auto it = w.rbegin(); it != w.rend(); ++it) out.push_back({-it->t, it->generator});
  return out;
}

// Least-squares coefficients expressing `target` on the columns of `cols`.
inline Eigen::VectorXd solve_columns(const std::vector<Point>& cols, const Point& target) {
  Eigen::MatrixXd m(target.size(), static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<int>(c)) = cols[c];
  return m.completeOrthogonalDecomposition().solve(target);
}

inline Point restrict_to_layer(const GradedAlgebra& alg, const Point& p, int d) {
  Point out = Point::Zero(alg.n);
  for (int i : alg.layer(d)) out(i) = p(i);
  return out;
}

}  // namespace detail

/**
 * @brief Write a as a product of exponentials of first-layer generators.
 *
 * First-layer coordinates become single factors; each higher layer is
 * cleared with commutator words, scaled so that |t| is of order the
 * (1/degree)-th power of the coordinate being corrected.
 */
inline std::vector<Factor> folland_stein_decompose(const GradedAlgebra& alg, const Point& a) {
  require_same(alg, a);
  if (alg.step > kMaxBchStep) throw Error(ErrorKind::UnsupportedStep, "decomposition implemented up to step 3");
  std::vector<Factor> out;
  if (a.isZero(0.0)) return out;
  const auto v1 = alg.layer(1);
  for (int i : v1) {
    if (a(i) != 0.0) out.push_back({a(i), i + 1});
  }
  if (alg.step >= 2) {
    Point r = bch_multiply(alg, group_inverse(compose_factors(alg, out)), a);
    Point target = detail::restrict_to_layer(alg, r, 2);
    if (!target.isZero(0.0)) {
      std::vector<Point> cols;
      std::vector<std::pair<int, int>> words;
      for (std::size_t p = 0; p < v1.size(); ++p) {
        for (std::size_t q = p + 1; q < v1.size(); ++q) {
          Point ei = Point::Zero(alg.n), ej = Point::Zero(alg.n);
          ei(v1[p]) = 1.0;
          ej(v1[q]) = 1.0;
          cols.push_back(lie_bracket(alg, ei, ej));
          words.emplace_back(v1[p], v1[q]);
        }
      }
      Eigen::VectorXd coef = detail::solve_columns(cols, target);
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (coef(static_cast<int>(w)) == 0.0) continue;
        auto word = detail::commutator_word(coef(static_cast<int>(w)), words[w].first, words[w].second);
        out.insert(out.end(), word.begin(), word.end());
      }
    }
  }
  if (alg.step >= 3) {
    Point r = bch_multiply(alg, group_inverse(compose_factors(alg, out)), a);
    Point target = detail::restrict_to_layer(alg, r, 3);
    if (!target.isZero(0.0)) {
      std::vector<Point> cols;
      std::vector<std::tuple<int, int, int>> words;
      for (int i : v1) {
        for (std::size_t p = 0; p < v1.size(); ++p) {
          for (std::size_t q = p + 1; q < v1.size(); ++q) {
            Point ei = Point::Zero(alg.n), ej = Point::Zero(alg.n), ek = Point::Zero(alg.n);
            ei(i) = 1.0;
            ej(v1[p]) = 1.0;
            ek(v1[q]) = 1.0;
            cols.push_back(lie_bracket(alg, ei, lie_bracket(alg, ej, ek)));
            words.emplace_back(i, v1[p], v1[q]);
          }
        }
      }
      Eigen::VectorXd coef = detail::solve_columns(cols, target);
      for (std::size_t w = 0; w < words.size(); ++w) {
        double c = coef(static_cast<int>(w));
        if (c == 0.0) continue;
        auto [i, j, k] = words[w];
        double t = std::cbrt(std::abs(c));
        double s = c > 0.0 ? t : -t;
        std::vector<Factor> inner;
        detail::append_commutator(inner, t, j, k);
        out.push_back({s, i + 1});
        out.insert(out.end(), inner.begin(), inner.end());
        out.push_back({-s, i + 1});
        auto back = detail::inverse_word(inner);
        out.insert(out.end(), back.begin(), back.end());
      }
    }
  }
  double err = max_dist(compose_factors(alg, out), a);
  if (err > 1e-9 * std::max(1.0, max_norm(a))) {
    throw Error(ErrorKind::NoConv, "horizontal decomposition residual " + std::to_string(err));
  }
  return out;
}

inline double max_abs_time(const std::vector<Factor>& f) {
  double m = 0.0;
  for (const auto& x : f) m = std::max(m, std::abs(x.t));
  return m;
}

enum class NormMethod { CcOptimized, CoordinateGauge };

struct NormCertificate {
  int segments = 0;
  int restarts = 0;
  long evaluations = 0;
  double endpoint_residual = 0.0;
};

struct HomogeneousNormEstimate {
  double value = 0.0;
  NormMethod method = NormMethod::CcOptimized;
  NormCertificate certificate;
};

struct CcOptions {
  int segments = 64;        // cap for segment doubling
  int start_segments = 8;
  int restarts = 4;
  int modes = 3;            // Fourier modes of the oscillating control
  std::uint64_t seed = 1;
  double improvement = 0.005;
  int max_iter = 3000;
};

namespace detail {

// Piecewise constant controls: u_j = m + s w_j, w built from Fourier modes and
// normalized to zero mean and unit RMS.
struct ControlShape {
  int segments;
  int d1;
  int modes;

  std::vector<Eigen::VectorXd> oscillation(const std::vector<double>& p) const {
    std::vector<Eigen::VectorXd> w(segments, Eigen::VectorXd::Zero(d1));
    for (int j = 0; j < segments; ++j) {
      double t = (j + 0.5) / segments;
      for (int k = 0; k < modes; ++k) {
        double cs = std::cos(2.0 * std::numbers::pi * (k + 1) * t);
        double sn = std::sin(2.0 * std::numbers::pi * (k + 1) * t);
        for (int a = 0; a < d1; ++a) {
          w[j](a) += p[(2 * k) * d1 + a] * cs + p[(2 * k + 1) * d1 + a] * sn;
        }
      }
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d1);
    for (const auto& x : w) mean += x / segments;
    double sq = 0.0;
    for (auto& x : w) {
      x -= mean;
      sq += x.squaredNorm() / segments;
    }
    if (sq > 0.0) {
      for (auto& x : w) x /= std::sqrt(sq);
    }
    return w;
  }
};

}  // namespace detail

/**
 * @brief Upper bound for the Carnot-Caratheodory distance from x to y.
 *
 * Length of the best piecewise-constant horizontal control found by a
 * seeded multistart simplex search. For step 2 with a one-dimensional
 * second layer the endpoint is matched exactly by solving a quadratic in
 * the oscillation amplitude; otherwise the endpoint mismatch is penalized.
 */
inline HomogeneousNormEstimate cc_distance_estimate(const GradedAlgebra& alg, const Point& x, const Point& y,
                                                    const CcOptions& opt = {}) {
  require_same(alg, x);
  require_same(alg, y);
  if (opt.segments < 1) throw Error(ErrorKind::Domain, "segments must be at least 1");
  HomogeneousNormEstimate est;
  est.method = NormMethod::CcOptimized;
  Point g = bch_multiply(alg, group_inverse(x), y);
  if (g.isZero(0.0)) return est;
  const auto v1 = alg.layer(1);
  const int d1 = static_cast<int>(v1.size());
  Eigen::VectorXd m(d1);
  for (int a = 0; a < d1; ++a) m(a) = g(v1[a]);
  const auto v2 = alg.layer(2);
  const bool exact = alg.step == 2 && v2.size() == 1;
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(d1, d1);
  if (exact) {
    for (int a = 0; a < d1; ++a) {
      for (int b = 0; b < d1; ++b) omega(a, b) = alg.c(v1[a], v1[b], v2[0]);
    }
  }
  const double target_v = exact ? g(v2[0]) : 0.0;
  const double scale = gauge_norm(alg, g);

  auto evaluate = [&](const detail::ControlShape& shape, const std::vector<double>& p, double& residual) {
    const int S = shape.segments;
    const double tau = 1.0 / S;
    auto w = shape.oscillation(p);
    if (exact) {
      double lin = 0.0, quad = 0.0;
      Eigen::VectorXd prefix = Eigen::VectorXd::Zero(d1);
      Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d1);
      for (int j = 0; j < S; ++j) {
        quad += prefix.dot(omega * w[j]);
        prefix += w[j];
        weighted += (2.0 * (j + 1) - 1.0 - S) * w[j];
      }
      lin = m.dot(omega * weighted);
      double A = 0.5 * tau * tau * quad, B = 0.5 * tau * tau * lin, C = -target_v;
      double s;
      if (std::abs(A) < 1e-300) {
        if (C == 0.0) {
          s = 0.0;
        } else if (std::abs(B) > 0.0) {
          s = -C / B;
        } else {
          residual = std::abs(C);
          return 1e6 * (1.0 + std::abs(C));
        }
      } else {
        double disc = B * B - 4.0 * A * C;
        if (disc < 0.0) {
          residual = std::abs(C);
          return 1e6 * (1.0 + std::abs(disc));
        }
        double sq = std::sqrt(disc);
        double q = -0.5 * (B + (B >= 0.0 ? sq : -sq));
        double r1 = q / A;
        double r2 = q != 0.0 ? C / q : r1;
        s = std::abs(r1) < std::abs(r2) ? r1 : r2;
      }
      residual = 0.0;
      double len = 0.0;
      for (int j = 0; j < S; ++j) len += tau * (m + s * w[j]).norm();
      return len;
    }
    // Penalized route: u_j = m + w_j without normalization of amplitude.
    Point end = Point::Zero(alg.n);
    double len = 0.0;
    double amp = p.back();
    for (int j = 0; j < S; ++j) {
      Eigen::VectorXd u = m + amp * w[j];
      len += tau * u.norm();
      Point stepv = Point::Zero(alg.n);
      for (int a = 0; a < d1; ++a) stepv(v1[a]) = tau * u(a);
      end = bch_multiply(alg, end, stepv);
    }
    residual = gauge_norm(alg, bch_multiply(alg, group_inverse(end), g));
    return len + 10.0 * residual;
  };

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int nparams = 2 * opt.modes * d1 + (exact ? 0 : 1);
  std::vector<double> best_p;
  double best = kInf, best_residual = 0.0;
  int used_segments = 0;
  long evals = 0;
  for (int S = std::min(opt.start_segments, opt.segments);; S = std::min(2 * S, opt.segments)) {
    detail::ControlShape shape{S, d1, opt.modes};
    double level_best = kInf;
    std::vector<double> level_p;
    double level_residual = 0.0;
    for (int r = 0; r <= opt.restarts; ++r) {
      std::vector<double> p0(nparams);
      if (r == 0 && !best_p.empty()) {
        p0 = best_p;
      } else {
        for (auto& v : p0) v = U(rng);
        if (!exact) p0.back() = scale * std::abs(U(rng));
      }
      auto f = [&](const std::vector<double>& p) {
        double res;
        return evaluate(shape, p, res);
      };
      SimplexResult sr = simplex_minimize(f, p0, 0.5, opt.max_iter, 1e-10);
      evals += sr.evaluations;
      double res = 0.0;
      double val = evaluate(shape, sr.x, res);
      if (val < level_best) {
        level_best = val;
        level_p = sr.x;
        level_residual = res;
      }
    }
    double prev = best;
    used_segments = S;
    if (level_best < best) {
      best = level_best;
      best_p = level_p;
      best_residual = level_residual;
    }
    bool small_gain = std::isfinite(prev) && (prev - best) <= opt.improvement * prev;
    if (small_gain || S >= opt.segments) break;
  }
  est.value = exact ? best : best - 10.0 * best_residual;
  est.certificate = {used_segments, opt.restarts, evals, best_residual};
  return est;
}

enum class DistanceBackend { CcEstimate, CoordinateGauge };

/// Dilatation structure delta_eps^x u = x . delta_eps(x^-1 u) with a left-invariant distance.
inline Structure carnot_structure(const GradedAlgebra& alg, DistanceBackend backend, const CcOptions& cc = {},
                                  double domain_radius = 10.0) {
  if (alg.step > kMaxBchStep) throw Error(ErrorKind::UnsupportedStep, "carnot structure implemented up to step 3");
  if (!validate_algebra(alg).valid()) throw Error(ErrorKind::AlgebraMismatch, "invalid graded algebra " + alg.name);
  Structure s;
  s.name = "carnot_" + alg.name + (backend == DistanceBackend::CcEstimate ? "_cc" : "_gauge");
  s.dim = alg.n;
  s.domain_radius = domain_radius;
  s.dilate_raw = [alg](const Point& x, double e, const Point& u) {
    return bch_multiply(alg, x, group_dilation(alg, bch_multiply(alg, group_inverse(x), u), e));
  };
  s.domain_distance = [alg](const Point& x, const Point& y) { return gauge_distance(alg, x, y); };
  if (backend == DistanceBackend::CoordinateGauge) {
    s.distance = s.domain_distance;
  } else {
    s.distance = [alg, cc](const Point& x, const Point& y) { return cc_distance_estimate(alg, x, y, cc).value; };
  }
  return s;
}

}  // namespace dilatation
