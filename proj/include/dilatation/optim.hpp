#pragma once

#include <functional>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace dilatation {

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  long evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;

namespace detail {

struct SimplexContext {
  const Objective* f;
  long evaluations;
  std::vector<double> scratch;
};

inline double simplex_trampoline(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<SimplexContext*>(params);
  for (std::size_t i = 0; i < v->size; ++i) ctx->scratch[i] = gsl_vector_get(v, i);
  ++ctx->evaluations;
  return (*ctx->f)(ctx->scratch);
}

}  // namespace detail

/// Nelder-Mead minimization (GSL nmsimplex2) from x0 with initial edge `step`.
inline SimplexResult simplex_minimize(const Objective& f, const std::vector<double>& x0, double step,
                                      int max_iter = 2000, double size_tol = 1e-9) {
  gsl_set_error_handler_off();
  const std::size_t n = x0.size();
  detail::SimplexContext ctx{&f, 0, std::vector<double>(n)};
  gsl_multimin_function fn;
  fn.n = n;
  fn.f = &detail::simplex_trampoline;
  fn.params = &ctx;
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, x0[i]);
    gsl_vector_set(ss, i, step);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) break;
  }
  SimplexResult out;
  out.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.x[i] = gsl_vector_get(s->x, i);
  out.value = s->fval;
  out.evaluations = ctx.evaluations;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(ss);
  return out;
}

}  // namespace dilatation
