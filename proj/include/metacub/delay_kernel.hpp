#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "metacub/errors.hpp"
#include "metacub/incomplete_beta.hpp"

namespace metacub {

using ResourceId = int;

/// Per-resource temporal weight vector over offsets 0..T-1 with unit mass.
struct DelayKernel {
  ResourceId resource = 0;
  std::vector<double> weights;

  int horizon() const noexcept { return static_cast<int>(weights.size()); }

  double at(int tau) const noexcept {
    return (tau < 0 || tau >= horizon()) ? 0.0 : weights[static_cast<std::size_t>(tau)];
  }

  /// Mass realized at offsets 0..max_offset inclusive.
  double mass_through(int max_offset) const noexcept {
    if (max_offset < 0) return 0.0;
    const int end = std::min(max_offset + 1, horizon());
    return std::accumulate(weights.begin(), weights.begin() + end, 0.0);
  }
};

namespace detail {
inline void renormalize(std::vector<double>& w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(sum > 0.0)) throw ParameterError("delay kernel has no mass");
  for (double& v : w) v /= sum;
}
}  // namespace detail

inline DelayKernel make_delay_kernel(const BetaParams& p, int horizon, ResourceId resource) {
  p.validate();
  if (horizon < 1) throw ParameterError("kernel horizon must be >= 1");
  DelayKernel k{resource, std::vector<double>(static_cast<std::size_t>(horizon))};
  const double T = horizon;
  BetaTails prev = beta_tails(0.0, p);
  for (int tau = 0; tau < horizon; ++tau) {
    const BetaTails next = beta_tails(tau + 1 == horizon ? 1.0 : (tau + 1) / T, p);
    // Difference the smaller tail to avoid cancellation near 0 or 1.
    double w = (next.lower <= 0.5) ? next.lower - prev.lower : prev.upper - next.upper;
    k.weights[static_cast<std::size_t>(tau)] = w < 0.0 ? 0.0 : w;
    prev = next;
  }
  detail::renormalize(k.weights);
  return k;
}

struct MixtureComponent {
  double weight = 1.0;
  BetaParams params;
};

inline DelayKernel make_mixture_kernel(const std::vector<MixtureComponent>& components, int horizon,
                                       ResourceId resource) {
  if (components.empty()) throw ParameterError("mixture kernel needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw ParameterError("mixture weights must be nonnegative");
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ParameterError("mixture weights must sum to 1");

  DelayKernel k{resource, std::vector<double>(static_cast<std::size_t>(horizon), 0.0)};
  for (const auto& c : components) {
    const DelayKernel part = make_delay_kernel(c.params, horizon, resource);
    for (std::size_t i = 0; i < k.weights.size(); ++i) k.weights[i] += c.weight * part.weights[i];
  }
  detail::renormalize(k.weights);
  return k;
}

inline DelayKernel immediate_kernel(int horizon, ResourceId resource) {
  if (horizon < 1) throw ParameterError("kernel horizon must be >= 1");
  DelayKernel k{resource, std::vector<double>(static_cast<std::size_t>(horizon), 0.0)};
  k.weights[0] = 1.0;
  return k;
}

/// CSV rows `kernel_type,resource_id,tau,weight`.
inline void write_kernel_rows(std::ostream& os, const std::string& kernel_type, const DelayKernel& k) {
  char buf[64];
  for (int tau = 0; tau < k.horizon(); ++tau) {
    std::snprintf(buf, sizeof buf, "%.12g", k.weights[static_cast<std::size_t>(tau)]);
    os << kernel_type << ',' << k.resource << ',' << tau << ',' << buf << '\n';
  }
}

}  // namespace metacub
