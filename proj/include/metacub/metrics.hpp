#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "metacub/environment.hpp"
#include "metacub/errors.hpp"
#include "metacub/reward_ledger.hpp"

namespace metacub {

/// What the policy faced at one round.
struct RoundSnapshot {
  int round = 0;
  std::vector<Action> eligible;
  std::vector<int> remaining_budgets;
  int capacity = 0;  // number of actions the policy took
};

struct OracleChoice {
  std::vector<Action> actions;
  double reward = 0.0;  // sum of true means of the chosen actions
};

/// Greedy set on the snapshot: pairs ranked by true mean times the kernel
/// mass that lands inside the horizon, at most one resource per individual,
/// within remaining budgets, up to `capacity` actions.
inline OracleChoice oracle_reward(const RoundSnapshot& snap, const std::vector<IndividualRecord>& population,
                                  const std::vector<DelayKernel>& kernels, int horizon) {
  OracleChoice out;
  if (snap.eligible.empty() || snap.capacity <= 0) return out;
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(snap.eligible.size());
  for (std::size_t j = 0; j < snap.eligible.size(); ++j) {
    const auto& a = snap.eligible[j];
    const double mu = population[static_cast<std::size_t>(a.individual)].true_means[static_cast<std::size_t>(a.resource)];
    const double mass = kernels[static_cast<std::size_t>(a.resource)].mass_through(horizon - snap.round);
    ranked.push_back({mu * mass, j});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> budgets = snap.remaining_budgets;
  std::vector<IndividualId> taken;
  for (const auto& [value, j] : ranked) {
    if (static_cast<int>(out.actions.size()) >= snap.capacity) break;
    const auto& a = snap.eligible[j];
    if (budgets[static_cast<std::size_t>(a.resource)] <= 0) continue;
    if (std::find(taken.begin(), taken.end(), a.individual) != taken.end()) continue;
    --budgets[static_cast<std::size_t>(a.resource)];
    taken.push_back(a.individual);
    out.actions.push_back(a);
    out.reward += population[static_cast<std::size_t>(a.individual)].true_means[static_cast<std::size_t>(a.resource)];
  }
  return out;
}

struct RegretPoint {
  int round = 0;
  double y = 0.0;  // realized (noisy) y(t) of the run
  double cum_regret = 0.0;
};

struct RegretCurve {
  std::uint64_t seed = 0;
  std::vector<RegretPoint> points;
  double final_regret() const noexcept { return points.empty() ? 0.0 : points.back().cum_regret; }
};

/// regret(t) = sum_{s <= t} (oracle_y(s) - policy_y(s)).
inline RegretCurve cumulative_regret(const std::vector<double>& policy_y, const std::vector<double>& oracle_y,
                                     const std::vector<double>& observed_y = {}, std::uint64_t seed = 0) {
  if (policy_y.size() != oracle_y.size()) throw DomainError("regret traces differ in length");
  if (!observed_y.empty() && observed_y.size() != policy_y.size()) throw DomainError("observed trace length differs");
  RegretCurve c;
  c.seed = seed;
  double cum = 0.0;
  for (std::size_t t = 0; t < policy_y.size(); ++t) {
    cum += oracle_y[t] - policy_y[t];
    c.points.push_back({static_cast<int>(t) + 1, observed_y.empty() ? policy_y[t] : observed_y[t], cum});
  }
  return c;
}

/// Expected-reward traces: the true means of the policy's and the oracle's
/// allocations are posted through the same kernels, and each round's
/// realized mass is read back.
class ExpectedRewardTracker {
 public:
  ExpectedRewardTracker(int horizon, const std::vector<DelayKernel>& kernels)
      : kernels_(&kernels), policy_(horizon), oracle_(horizon) {}

  void post(int t, const std::vector<Action>& policy_actions, const OracleChoice& oracle,
            const std::vector<IndividualRecord>& population) {
    for (const auto& a : policy_actions)
      policy_.post_allocation(t, mean(population, a), (*kernels_)[static_cast<std::size_t>(a.resource)]);
    for (const auto& a : oracle.actions)
      oracle_.post_allocation(t, mean(population, a), (*kernels_)[static_cast<std::size_t>(a.resource)]);
    policy_y_.push_back(policy_.realize(t));
    oracle_y_.push_back(oracle_.realize(t));
  }

  const std::vector<double>& policy_y() const noexcept { return policy_y_; }
  const std::vector<double>& oracle_y() const noexcept { return oracle_y_; }

 private:
  static double mean(const std::vector<IndividualRecord>& pop, const Action& a) {
    return pop[static_cast<std::size_t>(a.individual)].true_means[static_cast<std::size_t>(a.resource)];
  }
  const std::vector<DelayKernel>* kernels_;
  RewardLedger policy_;
  RewardLedger oracle_;
  std::vector<double> policy_y_;
  std::vector<double> oracle_y_;
};

struct GroupFairness {
  GroupId group = 0;
  long count = 0;
  long size = 0;
  double ratio = 0.0;
};

/// ratio_k = (count_k / n_k) / (sum counts / N).
inline std::vector<GroupFairness> fairness_ratios(const std::vector<long>& counts, const std::vector<long>& sizes) {
  if (counts.size() != sizes.size()) throw DomainError("counts and sizes differ in length");
  long total = 0, n = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] <= 0) throw ConfigError("group size must be positive");
    total += counts[k];
    n += sizes[k];
  }
  if (total == 0) throw DomainError("no allocations to compute fairness over");
  const double overall = static_cast<double>(total) / static_cast<double>(n);
  std::vector<GroupFairness> out;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    out.push_back({static_cast<GroupId>(k), counts[k], sizes[k],
                   (static_cast<double>(counts[k]) / static_cast<double>(sizes[k])) / overall});
  return out;
}

inline std::vector<GroupFairness> fairness_ratios(const std::vector<AllocationEvent>& log,
                                                  const std::vector<long>& sizes) {
  std::vector<long> counts(sizes.size(), 0);
  for (const auto& e : log) {
    if (e.group < 0 || static_cast<std::size_t>(e.group) >= sizes.size()) throw DomainError("event group out of range");
    ++counts[static_cast<std::size_t>(e.group)];
  }
  return fairness_ratios(counts, sizes);
}

/// max_k mean_k - min_k mean_k.
inline double disparity(const std::vector<std::vector<double>>& outcomes_by_group) {
  if (outcomes_by_group.empty()) throw DomainError("no groups");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& g : outcomes_by_group) {
    if (g.empty()) throw DomainError("group without outcomes");
    const double m = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  return hi - lo;
}

/// Per-individual outcome = sum of drawn base rewards over its allocations
/// (0 when never allocated), grouped by group.
inline std::vector<std::vector<double>> outcomes_by_group(const std::vector<AllocationEvent>& log,
                                                          const std::vector<GroupId>& group_of, int n_groups) {
  std::vector<double> per(group_of.size(), 0.0);
  for (const auto& e : log) per[static_cast<std::size_t>(e.individual)] += e.base_reward;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n_groups));
  for (std::size_t i = 0; i < per.size(); ++i) out[static_cast<std::size_t>(group_of[i])].push_back(per[i]);
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for one value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace metacub
