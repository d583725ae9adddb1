#pragma once

#include <memory>
#include <vector>

#include "metacub/all.hpp"

namespace fixture {

using namespace metacub;

/// Population with 1-d contexts and true means mu[i][r].
inline std::vector<IndividualRecord> population(const std::vector<std::vector<double>>& mu,
                                                const std::vector<GroupId>& groups) {
  std::vector<IndividualRecord> pop;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    IndividualRecord rec;
    rec.id = static_cast<IndividualId>(i);
    rec.label = std::to_string(i);
    rec.group = groups[i];
    rec.features = Eigen::VectorXd::Constant(1, static_cast<double>(i));
    rec.true_means = mu[i];
    pop.push_back(rec);
  }
  return pop;
}

/// Single cohort containing everyone.
inline CohortSchedule single_cohort(int n, int horizon) {
  std::vector<IndividualId> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  return CohortSchedule(horizon, horizon, {all}, n);
}

inline std::vector<ResourceSpec> resources(int R, int budget, int horizon, std::vector<int> cooldown = {1}) {
  std::vector<ResourceSpec> out;
  for (int r = 0; r < R; ++r) out.push_back({r, budget, immediate_kernel(horizon, r), cooldown});
  return out;
}

inline std::shared_ptr<PolicyContext> context_for(const Environment& env, int n_groups) {
  auto ctx = std::make_shared<PolicyContext>();
  ctx->horizon = env.horizon();
  ctx->n_groups = n_groups;
  ctx->n_resources = env.n_resources();
  for (const auto& p : env.population()) {
    ctx->contexts.push_back(p.features);
    ctx->groups.push_back(p.group);
  }
  ctx->schedule = env.schedule();
  for (const auto& r : env.resources()) {
    ctx->kernels.push_back(r.kernel);
    ctx->budgets.push_back(r.budget);
  }
  ctx->budget_reset_per_cohort = env.config().budget_reset_per_cohort;
  return ctx;
}

/// Drives a policy through a full run; returns the realized y(t) trace.
inline std::vector<double> drive(Environment& env, Policy& policy) {
  std::vector<double> ys;
  while (!env.done()) {
    const int t = env.round();
    const auto eligible = env.eligible_actions();
    std::vector<int> rem;
    for (int r = 0; r < env.n_resources(); ++r) rem.push_back(env.remaining_budget(r));
    auto d = policy.select(PolicyView{t, eligible, rem});
    const double y = env.step(d.actions, d.predicted);
    policy.observe(t, y);
    ys.push_back(y);
  }
  return ys;
}

}  // namespace fixture
