#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metacub/data_io.hpp"
#include "metacub/delay_kernel.hpp"
#include "metacub/errors.hpp"
#include "metacub/reward_ledger.hpp"
#include "metacub/rng.hpp"

namespace metacub {

struct IndividualRecord {
  IndividualId id = 0;  // dense index into the population
  std::string label;
  GroupId group = 0;
  Eigen::VectorXd features;       // context vector x
  std::vector<double> true_means; // hidden expected outcome per resource
};

struct ResourceSpec {
  ResourceId id = 0;
  int budget = 0;
  DelayKernel kernel;
  std::vector<int> cooldown_support{1};

  void validate(int horizon) const {
    if (budget < 0) throw ConfigError("resource budget must be >= 0");
    if (cooldown_support.empty()) throw ConfigError("cooldown support must be nonempty");
    for (int c : cooldown_support)
      if (c < 1 || c >= horizon) throw ConfigError("cooldown values must lie in [1, T)");
    if (kernel.horizon() != horizon) throw ConfigError("kernel length must equal the horizon");
  }
};

struct Action {
  IndividualId individual = 0;
  ResourceId resource = 0;
  auto operator<=>(const Action&) const = default;
};

struct AllocationEvent {
  int round = 0;
  IndividualId individual = 0;
  ResourceId resource = 0;
  GroupId group = 0;
  double base_reward = 0.0;
  double predicted_reward = 0.0;
  int drawn_cooldown = 0;
};

class CohortSchedule {
 public:
  CohortSchedule() = default;
  CohortSchedule(int block_length, int horizon, std::vector<std::vector<IndividualId>> cohorts, int n_individuals)
      : block_length_(block_length), horizon_(horizon), cohorts_(std::move(cohorts)),
        cohort_of_(static_cast<std::size_t>(n_individuals), -1) {
    for (std::size_t h = 0; h < cohorts_.size(); ++h)
      for (IndividualId i : cohorts_[h]) {
        if (i < 0 || i >= n_individuals) throw ConfigError("cohort member outside the population");
        if (cohort_of_[static_cast<std::size_t>(i)] != -1) throw ConfigError("cohorts must be disjoint");
        cohort_of_[static_cast<std::size_t>(i)] = static_cast<int>(h);
      }
  }

  int block_length() const noexcept { return block_length_; }
  int horizon() const noexcept { return horizon_; }
  int size() const noexcept { return static_cast<int>(cohorts_.size()); }
  const std::vector<IndividualId>& members(int h) const { return cohorts_.at(static_cast<std::size_t>(h)); }
  const std::vector<std::vector<IndividualId>>& cohorts() const noexcept { return cohorts_; }

  /// 0-based cohort index active at 1-based round t.
  int active_cohort(int t) const noexcept { return (t - 1) / block_length_; }
  int first_round(int h) const noexcept { return h * block_length_ + 1; }
  int last_round(int h) const noexcept { return std::min((h + 1) * block_length_, horizon_); }
  bool is_cohort_start(int t) const noexcept { return (t - 1) % block_length_ == 0; }

  /// Cohort of individual i, or -1 when i never becomes active.
  int cohort_of(IndividualId i) const noexcept {
    return (i < 0 || static_cast<std::size_t>(i) >= cohort_of_.size()) ? -1 : cohort_of_[static_cast<std::size_t>(i)];
  }

 private:
  int block_length_ = 1;
  int horizon_ = 1;
  std::vector<std::vector<IndividualId>> cohorts_;
  std::vector<int> cohort_of_;
};

/// Shuffle then deal consecutive slices; the first N mod H cohorts get one extra member.
inline CohortSchedule build_schedule(int n_individuals, int block_length, int horizon, Rng& rng) {
  if (block_length < 1 || horizon < 1) throw ConfigError("L and T must be >= 1");
  const int H = (horizon + block_length - 1) / block_length;
  if (n_individuals < H) throw ConfigError("fewer individuals than cohorts");
  std::vector<IndividualId> order(static_cast<std::size_t>(n_individuals));
  for (int i = 0; i < n_individuals; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<IndividualId>> cohorts(static_cast<std::size_t>(H));
  const int base = n_individuals / H, extra = n_individuals % H;
  std::size_t pos = 0;
  for (int h = 0; h < H; ++h) {
    const int size = base + (h < extra ? 1 : 0);
    auto& c = cohorts[static_cast<std::size_t>(h)];
    c.assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(c.begin(), c.end());
    pos += static_cast<std::size_t>(size);
  }
  return CohortSchedule(block_length, horizon, std::move(cohorts), n_individuals);
}

struct EnvConfig {
  int horizon = 1;
  bool budget_reset_per_cohort = false;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

/// Environment counters keyed by (seed, individual, resource, round): any run
/// with the same seed sees the same noise and cooldown draw for a given action.
inline double reward_noise(std::uint64_t seed, IndividualId i, ResourceId r, int t) {
  return counter_normal(derive_seed(seed, "noise"), static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r),
                        static_cast<std::uint64_t>(t));
}

inline int draw_cooldown(std::uint64_t seed, const std::vector<int>& support, IndividualId i, ResourceId r, int t) {
  const double u = counter_uniform(derive_seed(seed, "cooldowns"), static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(t));
  auto idx = static_cast<std::size_t>(u * static_cast<double>(support.size()));
  return support[std::min(idx, support.size() - 1)];
}

class Environment {
 public:
  Environment(std::vector<IndividualRecord> population, std::vector<ResourceSpec> resources, CohortSchedule schedule,
              EnvConfig config)
      : population_(std::move(population)),
        resources_(std::move(resources)),
        schedule_(std::move(schedule)),
        config_(config),
        ledger_(config.horizon),
        remaining_(resources_.size()),
        used_(resources_.size(), 0),
        next_free_(population_.size() * resources_.size(), 1) {
    if (schedule_.horizon() != config_.horizon) throw ConfigError("schedule horizon differs from the environment");
    for (std::size_t r = 0; r < resources_.size(); ++r) {
      if (resources_[r].id != static_cast<ResourceId>(r)) throw ConfigError("resource ids must be dense 0..R-1");
      resources_[r].validate(config_.horizon);
      remaining_[r] = resources_[r].budget;
    }
    for (std::size_t i = 0; i < population_.size(); ++i) {
      if (population_[i].id != static_cast<IndividualId>(i)) throw ConfigError("individual ids must be dense");
      if (population_[i].true_means.size() != resources_.size())
        throw ConfigError("each individual needs one true mean per resource");
    }
  }

  int round() const noexcept { return round_; }
  bool done() const noexcept { return round_ > config_.horizon; }
  int horizon() const noexcept { return config_.horizon; }
  int n_resources() const noexcept { return static_cast<int>(resources_.size()); }
  const std::vector<IndividualRecord>& population() const noexcept { return population_; }
  const std::vector<ResourceSpec>& resources() const noexcept { return resources_; }
  const CohortSchedule& schedule() const noexcept { return schedule_; }
  const EnvConfig& config() const noexcept { return config_; }
  const RewardLedger& ledger() const noexcept { return ledger_; }
  const std::vector<AllocationEvent>& history() const noexcept { return history_; }
  int remaining_budget(ResourceId r) const { return remaining_.at(static_cast<std::size_t>(r)); }
  int used_budget(ResourceId r) const { return used_.at(static_cast<std::size_t>(r)); }
  int active_cohort() const noexcept { return schedule_.active_cohort(round_); }

  /// Rounds remaining on the (i, r) cooldown clock at the current round.
  int cooldown_clock(IndividualId i, ResourceId r) const {
    return std::max(0, next_free_[index(i, r)] - round_);
  }

  bool is_eligible(IndividualId i, ResourceId r) const {
    if (done() || i < 0 || static_cast<std::size_t>(i) >= population_.size() || r < 0 || r >= n_resources())
      return false;
    return schedule_.cohort_of(i) == active_cohort() && remaining_[static_cast<std::size_t>(r)] > 0 &&
           next_free_[index(i, r)] <= round_;
  }

  /// Eligible pairs in ascending (individual, resource) order.
  std::vector<Action> eligible_actions() const {
    std::vector<Action> out;
    if (done()) return out;
    for (IndividualId i : schedule_.members(active_cohort()))
      for (ResourceId r = 0; r < n_resources(); ++r)
        if (is_eligible(i, r)) out.push_back({i, r});
    return out;
  }

  /// Applies the round's allocations, realizes y(t) and advances the round.
  /// `predicted` is parallel to `actions` (may be empty).
  double step(const std::vector<Action>& actions, const std::vector<double>& predicted = {}) {
    if (done()) throw StateError("environment horizon exhausted");
    if (!predicted.empty() && predicted.size() != actions.size())
      throw ParameterError("predictions must be parallel to actions");
    std::vector<IndividualId> seen;
    seen.reserve(actions.size());
    for (const auto& a : actions) {
      if (!is_eligible(a.individual, a.resource))
        throw ConstraintViolation("ineligible action (" + std::to_string(a.individual) + "," +
                                  std::to_string(a.resource) + ") at round " + std::to_string(round_));
      if (std::find(seen.begin(), seen.end(), a.individual) != seen.end())
        throw ConstraintViolation("individual " + std::to_string(a.individual) + " allocated twice at round " +
                                  std::to_string(round_));
      seen.push_back(a.individual);
    }
    // Eligibility is checked against budgets before decrements, so several
    // same-resource actions in one round must fit the remaining budget jointly.
    std::vector<int> demand(resources_.size(), 0);
    for (const auto& a : actions) ++demand[static_cast<std::size_t>(a.resource)];
    for (std::size_t r = 0; r < resources_.size(); ++r)
      if (demand[r] > remaining_[r])
        throw ConstraintViolation("round " + std::to_string(round_) + " exceeds the budget of resource " +
                                  std::to_string(r));

    for (std::size_t k = 0; k < actions.size(); ++k) {
      const auto& a = actions[k];
      const auto& res = resources_[static_cast<std::size_t>(a.resource)];
      const auto& who = population_[static_cast<std::size_t>(a.individual)];
      const double base = who.true_means[static_cast<std::size_t>(a.resource)] +
                          config_.noise_sd * reward_noise(config_.seed, a.individual, a.resource, round_);
      const int cd = draw_cooldown(config_.seed, res.cooldown_support, a.individual, a.resource, round_);
      --remaining_[static_cast<std::size_t>(a.resource)];
      ++used_[static_cast<std::size_t>(a.resource)];
      next_free_[index(a.individual, a.resource)] = round_ + cd + 1;
      ledger_.post_allocation(round_, base, res.kernel);
      history_.push_back({round_, a.individual, a.resource, who.group, base, predicted.empty() ? 0.0 : predicted[k], cd});
    }
    const double y = ledger_.realize(round_);
    ++round_;
    if (config_.budget_reset_per_cohort && !done() && schedule_.is_cohort_start(round_))
      for (std::size_t r = 0; r < resources_.size(); ++r) remaining_[r] = resources_[r].budget;
    return y;
  }

 private:
  std::size_t index(IndividualId i, ResourceId r) const noexcept {
    return static_cast<std::size_t>(i) * resources_.size() + static_cast<std::size_t>(r);
  }

  std::vector<IndividualRecord> population_;
  std::vector<ResourceSpec> resources_;
  CohortSchedule schedule_;
  EnvConfig config_;
  RewardLedger ledger_;
  std::vector<int> remaining_;
  std::vector<int> used_;
  std::vector<int> next_free_;  // first round at which (i, r) is free again
  std::vector<AllocationEvent> history_;
  int round_ = 1;
};

// ---------------------------------------------------------------------------
// Post-hoc audit, independent of the engine's own bookkeeping.

enum class ViolationKind { OnePerRound, Budget, Cooldown, Cohort };

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::OnePerRound: return "one_per_round";
    case ViolationKind::Budget: return "budget";
    case ViolationKind::Cooldown: return "cooldown";
    case ViolationKind::Cohort: return "cohort";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  int round = 0;
  IndividualId individual = -1;
  ResourceId resource = -1;
  std::string detail;
};

struct AuditConfig {
  int horizon = 1;
  int block_length = 1;
  std::vector<int> budgets;
  bool budget_reset_per_cohort = false;
  std::vector<int> cohort_of;  // per individual; -1 = never active
};

inline AuditConfig audit_config_for(const Environment& env) {
  AuditConfig c;
  c.horizon = env.horizon();
  c.block_length = env.schedule().block_length();
  for (const auto& r : env.resources()) c.budgets.push_back(r.budget);
  c.budget_reset_per_cohort = env.config().budget_reset_per_cohort;
  for (std::size_t i = 0; i < env.population().size(); ++i)
    c.cohort_of.push_back(env.schedule().cohort_of(static_cast<IndividualId>(i)));
  return c;
}

inline std::vector<Violation> audit_trace(const std::vector<AllocationEvent>& history, const AuditConfig& cfg) {
  std::vector<Violation> out;
  std::map<std::pair<int, IndividualId>, int> per_round;
  std::map<std::pair<ResourceId, int>, int> budget_use;
  std::map<std::pair<IndividualId, ResourceId>, std::vector<const AllocationEvent*>> by_pair;

  for (const auto& e : history) {
    if (++per_round[{e.round, e.individual}] == 2)
      out.push_back({ViolationKind::OnePerRound, e.round, e.individual, e.resource,
                     "more than one resource in a round"});
    const int scope = cfg.budget_reset_per_cohort ? (e.round - 1) / cfg.block_length : 0;
    const int budget = (e.resource >= 0 && static_cast<std::size_t>(e.resource) < cfg.budgets.size())
                           ? cfg.budgets[static_cast<std::size_t>(e.resource)]
                           : 0;
    if (++budget_use[{e.resource, scope}] == budget + 1)
      out.push_back({ViolationKind::Budget, e.round, e.individual, e.resource, "budget exceeded"});
    const int h = (e.individual >= 0 && static_cast<std::size_t>(e.individual) < cfg.cohort_of.size())
                      ? cfg.cohort_of[static_cast<std::size_t>(e.individual)]
                      : -1;
    const int lo = h * cfg.block_length + 1, hi = std::min((h + 1) * cfg.block_length, cfg.horizon);
    if (h < 0 || e.round < lo || e.round > hi)
      out.push_back({ViolationKind::Cohort, e.round, e.individual, e.resource, "outside the cohort window"});
    by_pair[{e.individual, e.resource}].push_back(&e);
  }
  for (auto& [key, events] : by_pair) {
    std::stable_sort(events.begin(), events.end(), [](auto* a, auto* b) { return a->round < b->round; });
    for (std::size_t k = 1; k < events.size(); ++k) {
      const auto* prev = events[k - 1];
      if (events[k]->round <= prev->round + prev->drawn_cooldown && events[k]->round != prev->round)
        out.push_back({ViolationKind::Cooldown, events[k]->round, key.first, key.second,
                       "allocated within cooldown " + std::to_string(prev->drawn_cooldown) + " of round " +
                           std::to_string(prev->round)});
    }
  }
  return out;
}

}  // namespace metacub
