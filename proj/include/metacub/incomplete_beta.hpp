#pragma once

#include <cmath>
#include <limits>

#include "metacub/errors.hpp"

namespace metacub {

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
      throw ParameterError("Beta shape parameters must be finite and positive");
  }
};

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a,b).
// Converges quickly for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

// x^a (1-x)^b / (a B(a,b)), evaluated in log space.
inline double beta_front(double a, double b, double x) {
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  return std::exp(log_front);
}

}  // namespace detail

/// Both tails of the Beta CDF, each computed directly so that differences of
/// nearby values keep their precision on either side of the mode.
struct BetaTails {
  double lower;  // I_z(a,b)
  double upper;  // 1 - I_z(a,b)
};

inline BetaTails beta_tails(double z, const BetaParams& p) {
  p.validate();
  if (!std::isfinite(z) || z < 0.0 || z > 1.0)
    throw DomainError("incomplete beta argument must lie in [0,1]");
  if (z == 0.0) return {0.0, 1.0};
  if (z == 1.0) return {1.0, 0.0};
  const double a = p.alpha, b = p.beta;
  if (z < (a + 1.0) / (a + b + 2.0)) {
    const double lower = detail::beta_front(a, b, z) * detail::beta_continued_fraction(a, b, z) / a;
    return {lower, 1.0 - lower};
  }
  const double upper =
      detail::beta_front(b, a, 1.0 - z) * detail::beta_continued_fraction(b, a, 1.0 - z) / b;
  return {1.0 - upper, upper};
}

/// Regularized incomplete beta I_z(alpha, beta), the Beta(alpha, beta) CDF.
inline double regularized_beta_cdf(double z, const BetaParams& p) {
  const double v = beta_tails(z, p).lower;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

}  // namespace metacub
