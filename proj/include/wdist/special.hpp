#pragma once

#include <wdist/types.hpp>

#include <algorithm>
#include <cmath>

namespace wdist {

namespace detail {

// Series for P(a, x), good for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x), good for x >= a + 1.
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  require(a > 0.0, "gamma_p: a must be positive");
  require(x >= 0.0, "gamma_p: x must be non-negative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
  require(a > 0.0, "gamma_q: a must be positive");
  require(x >= 0.0, "gamma_q: x must be non-negative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

/// Upper-alpha quantile of chi-square with `df` degrees of freedom:
/// the x with P(chi2_df > x) = alpha.
inline double chisq_quantile(Index df, double alpha) {
  require(df >= 1, "chisq_quantile: degrees of freedom must be >= 1");
  require(alpha > 0.0 && alpha < 1.0, "chisq_quantile: alpha must lie in (0, 1)");
  const double k = double(df);
  const double a = 0.5 * k;

  double lo = 0.0, hi = 1.0;
  auto upper = [&](double x) { return gamma_q(a, 0.5 * x); };
  while (upper(hi) > alpha) hi *= 2.0;

  // Wilson-Hilferty start, with a rational approximation of the normal
  // upper quantile (Abramowitz-Stegun 26.2.23).
  const double q = std::min(alpha, 1.0 - alpha);
  const double t = std::sqrt(-2.0 * std::log(q));
  double zq = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                      (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
  if (alpha > 0.5) zq = -zq;
  const double c = 2.0 / (9.0 * k);
  double x = k * std::pow(std::max(1.0 - c + zq * std::sqrt(c), 1e-3), 3.0);
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

  // Safeguarded Newton on f(x) = Q(a, x/2) - alpha; f is decreasing.
  for (int it = 0; it < 200; ++it) {
    const double f = upper(x) - alpha;
    if (f > 0.0)
      lo = x;
    else
      hi = x;
    const double log_pdf = (a - 1.0) * std::log(0.5 * x) - 0.5 * x - std::lgamma(a) - std::log(2.0);
    const double pdf = std::exp(log_pdf);
    double next = x + f / pdf;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-14 * std::max(1.0, x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

}  // namespace wdist
