#pragma once

#include <algorithm>
#include <climits>
#include <vector>

#include "metacub/meta_level.hpp"
#include "metacub/policy.hpp"

namespace metacub {

struct ScoredCandidate {
  IndividualId individual = 0;
  ResourceId resource = 0;
  double predicted = 0.0;
  double uncertainty = 0.0;
  double score = 0.0;
};

struct BaseAllocation {
  std::vector<Action> actions;
  std::vector<double> predicted;
  std::vector<int> cell_counts;  // row-major by group
  std::vector<int> caps;         // effective per-cell caps after budget apportionment
};

/// Scores every eligible pair, then fills cells greedily in descending G
/// (ties by ascending individual, resource). An individual taken by one
/// cell is unavailable to the others in the same round.
///  quota_k_r = floor(z * |I_k|), capped by `allowance` (per cell, may be
///  INT_MAX), the cell's eligible count, and a largest-remainder share of
///  each resource's remaining budget.
template <class ScoreFn>
BaseAllocation base_allocate(const MetaPolicy& z, const std::vector<int>& group_sizes,
                             const std::vector<Action>& eligible, const std::vector<GroupId>& group_of,
                             const std::vector<int>& allowance, const std::vector<int>& remaining_budgets,
                             ScoreFn&& score) {
  z.validate();
  const int K = z.n_groups, R = z.n_resources;
  const auto cells = static_cast<std::size_t>(K * R);
  std::vector<int> eligible_count(cells, 0);
  for (const auto& a : eligible)
    ++eligible_count[static_cast<std::size_t>(group_of[static_cast<std::size_t>(a.individual)] * R + a.resource)];

  BaseAllocation out;
  out.caps.assign(cells, 0);
  for (int k = 0; k < K; ++k)
    for (int r = 0; r < R; ++r) {
      const auto c = static_cast<std::size_t>(k * R + r);
      int q = cell_quota(z.at(k, r), static_cast<std::size_t>(group_sizes[static_cast<std::size_t>(k)]));
      q = std::min({q, allowance.empty() ? INT_MAX : allowance[c], eligible_count[c]});
      out.caps[c] = std::max(q, 0);
    }
  for (int r = 0; r < R; ++r) {
    int demand = 0;
    std::vector<double> w(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      demand += out.caps[static_cast<std::size_t>(k * R + r)];
      w[static_cast<std::size_t>(k)] = out.caps[static_cast<std::size_t>(k * R + r)];
    }
    const int budget = remaining_budgets[static_cast<std::size_t>(r)];
    if (demand <= budget) continue;
    const auto share = apportion(budget, w);
    for (int k = 0; k < K; ++k) out.caps[static_cast<std::size_t>(k * R + r)] = share[static_cast<std::size_t>(k)];
  }

  std::vector<ScoredCandidate> cand;
  cand.reserve(eligible.size());
  for (const auto& a : eligible) {
    const auto c = static_cast<std::size_t>(group_of[static_cast<std::size_t>(a.individual)] * R + a.resource);
    if (out.caps[c] == 0) continue;
    cand.push_back(score(a));
  }
  std::stable_sort(cand.begin(), cand.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.individual != b.individual) return a.individual < b.individual;
    return a.resource < b.resource;
  });

  out.cell_counts.assign(cells, 0);
  std::vector<IndividualId> taken;
  for (const auto& sc : cand) {
    const auto c = static_cast<std::size_t>(group_of[static_cast<std::size_t>(sc.individual)] * R + sc.resource);
    if (out.cell_counts[c] >= out.caps[c]) continue;
    if (std::find(taken.begin(), taken.end(), sc.individual) != taken.end()) continue;
    taken.push_back(sc.individual);
    ++out.cell_counts[c];
    out.actions.push_back({sc.individual, sc.resource});
    out.predicted.push_back(sc.predicted);
  }
  return out;
}

struct MetaCubParams {
  MetaOptimizerConfig meta;
  ExplorationSchedule beta{ExplorationSchedule::Kind::SqrtLog, 1.0};
  int refit_window = 25;
  double credit_min_mass = 0.5;
  double equity_band = 0.1;  // relative; <= 0 disables the projection
  bool pace_budget = true;   // split remaining budget evenly over the remaining cohorts
};

class MetaCubPolicy final : public Policy {
 public:
  MetaCubPolicy(std::shared_ptr<const PolicyContext> ctx, MetaCubParams params, Rng rng)
      : ctx_(std::move(ctx)), params_(std::move(params)), rng_(rng),
        online_(*ctx_, params_.refit_window, params_.credit_min_mass) {
    params_.meta.validate();
  }

  std::string_view name() const noexcept override { return "metacub"; }
  std::vector<CohortPlan> plans() const override { return plans_; }
  int replans() const noexcept { return static_cast<int>(plans_.size()); }
  const MetaPolicy& current_plan() const noexcept { return z_; }

  Decision select(const PolicyView& view) override {
    const int h = ctx_->schedule.active_cohort(view.round);
    if (h != planned_cohort_) replan(h, view);
    const double beta = params_.beta(view.round);
    const auto& pred = online_.predictor();
    auto score = [&](const Action& a) {
      const auto& x = ctx_->contexts[static_cast<std::size_t>(a.individual)];
      const GroupId k = ctx_->groups[static_cast<std::size_t>(a.individual)];
      ScoredCandidate sc{a.individual, a.resource, pred.predict(x, a.resource), 0.0, 0.0};
      sc.uncertainty = pred.uncertainty(x, a.resource, online_.cell_count(k, a.resource), view.round);
      sc.score = sc.predicted + beta * sc.uncertainty;
      return sc;
    };
    auto alloc = base_allocate(z_, group_sizes_, view.eligible, ctx_->groups, allowance_, view.remaining_budgets, score);
    for (std::size_t c = 0; c < allowance_.size(); ++c) allowance_[c] -= alloc.cell_counts[c];
    online_.record(view.round, alloc.actions);
    return {std::move(alloc.actions), std::move(alloc.predicted)};
  }

  void observe(int round, double y) override { online_.observe(round, y); }

 private:
  void replan(int h, const PolicyView& view) {
    planned_cohort_ = h;
    const int K = ctx_->n_groups, R = ctx_->n_resources;
    const auto& members = ctx_->schedule.members(h);
    group_sizes_.assign(static_cast<std::size_t>(K), 0);
    for (IndividualId i : members) ++group_sizes_[static_cast<std::size_t>(ctx_->groups[static_cast<std::size_t>(i)])];

    CohortPredictions preds(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) preds[static_cast<std::size_t>(k)].resize(group_sizes_[static_cast<std::size_t>(k)], R);
    std::vector<Eigen::Index> fill(static_cast<std::size_t>(K), 0);
    const auto& pred = online_.predictor();
    for (IndividualId i : members) {
      const auto k = static_cast<std::size_t>(ctx_->groups[static_cast<std::size_t>(i)]);
      for (int r = 0; r < R; ++r) preds[k](fill[k], r) = pred.predict(ctx_->contexts[static_cast<std::size_t>(i)], r);
      ++fill[k];
    }

    std::vector<int> cohort_budget(static_cast<std::size_t>(R));
    const int cohorts_left = ctx_->schedule.size() - h;
    for (int r = 0; r < R; ++r) {
      const int rem = view.remaining_budgets[static_cast<std::size_t>(r)];
      cohort_budget[static_cast<std::size_t>(r)] = params_.pace_budget && !ctx_->budget_reset_per_cohort
                                                       ? rem / cohorts_left
                                                       : rem;
    }
    if (cohorts_left == 1) cohort_budget.assign(view.remaining_budgets.begin(), view.remaining_budgets.end());

    MetaProjection project;
    if (params_.equity_band > 0.0)
      project = [&, band = params_.equity_band](const MetaPolicy& z) {
        return equity_project(z, group_sizes_, cohort_budget, band);
      };
    z_ = meta_optimize(params_.meta, preds, rng_.split("meta", static_cast<std::uint64_t>(h)), project).best;

    allowance_.assign(static_cast<std::size_t>(K * R), 0);
    for (int r = 0; r < R; ++r) {
      std::vector<double> w(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) w[static_cast<std::size_t>(k)] = cell_weight(z_, k, r, group_sizes_);
      const auto share = apportion(cohort_budget[static_cast<std::size_t>(r)], w);
      for (int k = 0; k < K; ++k) allowance_[static_cast<std::size_t>(k * R + r)] = share[static_cast<std::size_t>(k)];
    }
    plans_.push_back({h, z_.cells});
  }

  std::shared_ptr<const PolicyContext> ctx_;
  MetaCubParams params_;
  Rng rng_;
  OnlineModel online_;
  int planned_cohort_ = -1;
  MetaPolicy z_;
  std::vector<int> group_sizes_;
  std::vector<int> allowance_;
  std::vector<CohortPlan> plans_;
};

}  // namespace metacub
