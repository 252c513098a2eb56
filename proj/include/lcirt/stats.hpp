#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "lcirt/error.hpp"

namespace lcirt {

// logistic(x) = 1 / (1 + exp(-x)), stable over the whole double range.
inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow; log1pexp(x) ~ x for large x.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Bernoulli log-probabilities of a success logit eta:
//   log p(1) = -log1pexp(-eta),  log p(0) = -log1pexp(eta).
inline double log_sigmoid(double eta) { return -log1pexp(-eta); }

inline double log_sum_exp(std::span<const double> terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;  // all -inf (or a NaN propagates below)
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

namespace detail {

// Regularized lower incomplete gamma P(a, x) by series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
  const int max_iter = 2000;
  const double eps = 1e-16;
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < max_iter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * eps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw_numeric("incomplete gamma series failed to converge");
}

// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction
// (x >= a + 1).
inline double gamma_q_contfrac(double a, double x) {
  const int max_iter = 2000;
  const double eps = 1e-16;
  const double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= max_iter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw_numeric("incomplete gamma continued fraction failed to converge");
}

}  // namespace detail

// Upper-tail probability of a chi-squared variable with df degrees of
// freedom: Q(df/2, x/2).
inline double chi2_sf(double x, int df) {
  if (df <= 0) throw_usage("chi2_sf: df must be positive");
  if (x < 0.0) throw_usage("chi2_sf: x must be nonnegative");
  if (x == 0.0) return 1.0;
  const double a = 0.5 * static_cast<double>(df);
  const double z = 0.5 * x;
  if (z < a + 1.0) return 1.0 - detail::gamma_p_series(a, z);
  return detail::gamma_q_contfrac(a, z);
}

}  // namespace lcirt
