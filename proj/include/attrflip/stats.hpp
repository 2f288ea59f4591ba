#pragma once

#include <cmath>
#include <vector>

#include "attrflip/core.hpp"

namespace attrflip {

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz.
inline double incbeta_cf(double x, double a, double b) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double mult = d * c;
    h *= mult;
    if (std::fabs(mult - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), documented precision ~1e-10.
inline double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0) || std::isnan(x)) return std::nan("");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * detail::incbeta_cf(x, a, b) / a;
  return 1.0 - std::exp(log_front) * detail::incbeta_cf(1.0 - x, b, a) / b;
}

// Student-t CDF with `dof` degrees of freedom.
inline double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) return std::nan("");
  const double ib = regularized_incomplete_beta(dof / (dof + t * t), 0.5 * dof, 0.5);
  return t >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

struct TTestResult {
  double t = 0.0;
  int dof = 0;
  double p = 1.0;  // two-sided
};

// Two-sided paired t-test on per-attribute error vectors. Zero-variance
// differences with zero mean return t=0, p=1 by convention.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw ConfigError("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTestResult r;
  r.dof = static_cast<int>(n) - 1;
  if (var == 0.0) {
    if (mean == 0.0) return r;  // t=0, p=1
    r.t = mean > 0.0 ? HUGE_VAL : -HUGE_VAL;
    r.p = 0.0;
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p = 2.0 * (1.0 - student_t_cdf(std::fabs(r.t), static_cast<double>(r.dof)));
  if (r.p > 1.0) r.p = 1.0;
  if (r.p < 0.0) r.p = 0.0;
  return r;
}

}  // namespace attrflip
