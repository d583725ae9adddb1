#pragma once

#include <vector>

#include "metacub/delay_kernel.hpp"
#include "metacub/errors.hpp"

namespace metacub {

/// Scheduled delayed rewards indexed by absolute round 1..T. Mass that would
/// land after round T is dropped and tallied in lost_mass().
class RewardLedger {
 public:
  explicit RewardLedger(int horizon)
      : horizon_(horizon),
        scheduled_(static_cast<std::size_t>(horizon) + 1, 0.0),
        consumed_(static_cast<std::size_t>(horizon) + 1, false) {
    if (horizon < 1) throw ParameterError("ledger horizon must be >= 1");
  }

  int horizon() const noexcept { return horizon_; }
  double lost_mass() const noexcept { return lost_; }
  double posted_total() const noexcept { return posted_; }

  double scheduled(int t) const noexcept {
    return (t < 1 || t > horizon_) ? 0.0 : scheduled_[static_cast<std::size_t>(t)];
  }

  void post_allocation(int t_alloc, double base_reward, const DelayKernel& kernel) {
    if (t_alloc < 1 || t_alloc > horizon_) throw DomainError("allocation round outside [1,T]");
    posted_ += base_reward;
    if (base_reward == 0.0) return;
    for (int tau = 0; tau < kernel.horizon(); ++tau) {
      const double w = kernel.weights[static_cast<std::size_t>(tau)];
      if (w == 0.0) continue;
      const int t = t_alloc + tau;
      if (t > horizon_) {
        lost_ += base_reward * w;
      } else {
        if (consumed_[static_cast<std::size_t>(t)])
          throw StateError("posting into an already realized round");
        scheduled_[static_cast<std::size_t>(t)] += base_reward * w;
      }
    }
  }

  double realize(int t) {
    if (t < 1 || t > horizon_) throw DomainError("realize round outside [1,T]");
    auto idx = static_cast<std::size_t>(t);
    if (consumed_[idx]) throw StateError("round already realized");
    consumed_[idx] = true;
    return scheduled_[idx];
  }

  bool realized(int t) const noexcept {
    return t >= 1 && t <= horizon_ && consumed_[static_cast<std::size_t>(t)];
  }

 private:
  int horizon_;
  std::vector<double> scheduled_;
  std::vector<bool> consumed_;
  double lost_ = 0.0;
  double posted_ = 0.0;
};

}  // namespace metacub
