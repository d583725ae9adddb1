#pragma once

// Independent reference implementations used only by the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "metacub/delay_kernel.hpp"

namespace oracle {

struct Posting {
  int round;
  int resource;
  double base_reward;
};

/// Direct double sum: y(t) = sum over postings u <= t of K_r(t - u) * base.
inline double brute_force_reward(const std::vector<Posting>& history,
                                 const std::vector<metacub::DelayKernel>& kernels, int t) {
  double y = 0.0;
  for (const auto& p : history) {
    if (p.round > t) continue;
    y += kernels[static_cast<std::size_t>(p.resource)].at(t - p.round) * p.base_reward;
  }
  return y;
}

/// Composite Simpson on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// I_z(a, b) by quadrature. Shapes below 1 use u = v^(1/a) (and the mirror
/// near 1) to remove the endpoint singularity.
inline double beta_cdf_quadrature(double z, double a, double b) {
  const double norm = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  auto partial = [](double zz, double p, double q) {  // integral_0^zz u^(p-1)(1-u)^(q-1) du
    if (p >= 1.0) {
      auto f = [&](double u) { return std::pow(u, p - 1.0) * std::pow(1.0 - u, q - 1.0); };
      return simpson(f, 0.0, zz, 20000);
    }
    auto g = [&](double v) { return std::pow(1.0 - std::pow(v, 1.0 / p), q - 1.0); };
    return simpson(g, 0.0, std::pow(zz, p), 20000) / p;
  };
  return z <= 0.5 ? partial(z, a, b) / norm : 1.0 - partial(1.0 - z, b, a) / norm;
}

}  // namespace oracle

namespace oracle {

/// Central finite differences of a scalar function at theta.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& theta, double eps = 1e-5) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(j) += eps;
    tm(j) -= eps;
    g(j) = (f(tp) - f(tm)) / (2.0 * eps);
  }
  return g;
}

/// Largest elementwise relative error, with a 1e-6 floor on the scale.
inline double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::fabs(analytic(i)), std::fabs(numeric(i)), 1e-6});
    worst = std::max(worst, std::fabs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}

}  // namespace oracle
