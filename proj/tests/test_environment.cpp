#include <gtest/gtest.h>

#include <set>

#include "support/fixtures.hpp"

using namespace metacub;

TEST(Schedule, Examples) {
  Rng rng(1);
  auto a = build_schedule(10, 5, 10, rng);
  ASSERT_EQ(a.size(), 2);
  EXPECT_EQ(a.members(0).size(), 5u);
  EXPECT_EQ(a.members(1).size(), 5u);

  auto b = build_schedule(10, 4, 10, rng);
  ASSERT_EQ(b.size(), 3);
  std::multiset<std::size_t> sizes{b.members(0).size(), b.members(1).size(), b.members(2).size()};
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{4, 3, 3}));
  EXPECT_EQ(b.first_round(2), 9);
  EXPECT_EQ(b.last_round(2), 10);

  auto c = build_schedule(7, 10, 10, rng);
  ASSERT_EQ(c.size(), 1);
  EXPECT_EQ(c.members(0).size(), 7u);

  EXPECT_THROW(build_schedule(2, 4, 10, rng), ConfigError);
  EXPECT_THROW(build_schedule(5, 0, 10, rng), ConfigError);
}

TEST(Schedule, PartitionAndWindows) {
  Rng rng(9);
  auto s = build_schedule(53, 7, 40, rng);
  ASSERT_EQ(s.size(), 6);
  std::set<IndividualId> seen;
  for (int h = 0; h < s.size(); ++h)
    for (IndividualId i : s.members(h)) {
      EXPECT_TRUE(seen.insert(i).second);
      EXPECT_EQ(s.cohort_of(i), h);
    }
  EXPECT_EQ(seen.size(), 53u);
  for (int t = 1; t <= 40; ++t) {
    const int h = s.active_cohort(t);
    EXPECT_GE(t, s.first_round(h));
    EXPECT_LE(t, s.last_round(h));
  }
  Rng again(9);
  EXPECT_EQ(build_schedule(53, 7, 40, again).cohorts(), s.cohorts());
}

TEST(Environment, FreshEligibility) {
  Rng rng(2);
  auto sched = build_schedule(10, 5, 10, rng);
  Environment env(fixture::population(std::vector<std::vector<double>>(10, {0.1, 0.2, 0.3}), std::vector<GroupId>(10, 0)),
                  fixture::resources(3, 4, 10), sched, {10, false, 0.0, 1});
  EXPECT_EQ(env.eligible_actions().size(), 5u * 3u);
  for (const auto& a : env.eligible_actions()) EXPECT_EQ(sched.cohort_of(a.individual), 0);
}

TEST(Environment, CooldownTrace) {
  const int T = 8;
  Environment env(fixture::population({{1.0}, {1.0}}, {0, 0}), fixture::resources(1, 10, T, {3}),
                  fixture::single_cohort(2, T), {T, false, 0.0, 1});
  env.step({{0, 0}});
  EXPECT_EQ(env.history().back().drawn_cooldown, 3);
  for (int t = 2; t <= 4; ++t) {
    EXPECT_FALSE(env.is_eligible(0, 0)) << t;
    EXPECT_EQ(env.cooldown_clock(0, 0), 5 - t);
    env.step({});
  }
  EXPECT_TRUE(env.is_eligible(0, 0));
  EXPECT_EQ(env.cooldown_clock(0, 0), 0);
}

TEST(Environment, StepExamples) {
  const int T = 4;
  std::vector<ResourceSpec> res{{0, 5, immediate_kernel(T, 0), {1}}, {1, 1, DelayKernel{1, {0.5, 0.5, 0, 0}}, {1}}};
  Environment env(fixture::population({{0.6, 2.0}, {0.3, 0.4}}, {0, 1}), res, fixture::single_cohort(2, T),
                  {T, false, 0.0, 1});
  EXPECT_DOUBLE_EQ(env.step({{0, 0}, {1, 1}}, {0.5, 0.5}), 0.6 + 0.2);
  // Budget-1 resource is gone; the delayed half still arrives.
  for (const auto& a : env.eligible_actions()) EXPECT_NE(a.resource, 1);
  EXPECT_DOUBLE_EQ(env.step({}), 0.2);
  EXPECT_EQ(env.remaining_budget(0), 4);
  EXPECT_EQ(env.remaining_budget(1), 0);
  EXPECT_EQ(env.history().size(), 2u);
  EXPECT_EQ(env.history()[0].predicted_reward, 0.5);
}

TEST(Environment, ConstraintViolationsAreHardErrors) {
  const int T = 6;
  Rng rng(5);
  auto sched = build_schedule(4, 3, T, rng);
  Environment env(fixture::population(std::vector<std::vector<double>>(4, {1.0, 1.0}), {0, 0, 1, 1}),
                  fixture::resources(2, 1, T), sched, {T, false, 0.0, 1});
  const IndividualId in = sched.members(0)[0], out = sched.members(1)[0];
  EXPECT_THROW(env.step({{out, 0}}), ConstraintViolation);
  EXPECT_THROW(env.step({{in, 0}, {in, 1}}), ConstraintViolation);
  EXPECT_THROW(env.step({{in, 0}, {sched.members(0)[1], 0}}), ConstraintViolation);  // budget 1
  EXPECT_THROW(env.step({{in, 7}}), ConstraintViolation);
  EXPECT_EQ(env.round(), 1);
  env.step({{in, 0}});
  EXPECT_THROW(env.step({{in, 0}}), ConstraintViolation);
}

TEST(Environment, InvariantsUnderRandomPolicy) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int T = 40, N = 24, R = 3;
    std::vector<std::vector<double>> mu(N, std::vector<double>(R));
    std::vector<GroupId> g(N);
    for (int i = 0; i < N; ++i) {
      g[i] = i % 3;
      for (auto& m : mu[i]) m = rng.normal();
    }
    std::vector<ResourceSpec> res;
    for (int r = 0; r < R; ++r)
      res.push_back({r, 6 + r, make_delay_kernel({1.0 + r, 2.0}, T, r), {1, 2, 3}});
    auto sched = build_schedule(N, 10, T, rng);
    Environment env(fixture::population(mu, g), res, sched, {T, seed % 2 == 0, 0.5, seed});
    double total_y = 0.0, total_base = 0.0;
    while (!env.done()) {
      auto el = env.eligible_actions();
      rng.shuffle(el.begin(), el.end());
      std::vector<Action> pick;
      std::vector<int> rem;
      for (int r = 0; r < R; ++r) rem.push_back(env.remaining_budget(r));
      for (const auto& a : el) {
        if (rng.uniform() < 0.5 || rem[a.resource] == 0) continue;
        bool dup = false;
        for (const auto& p : pick) dup |= p.individual == a.individual;
        if (dup) continue;
        --rem[a.resource];
        pick.push_back(a);
      }
      total_y += env.step(pick);
      if (!env.config().budget_reset_per_cohort)
        for (int r = 0; r < R; ++r) {
          long used = 0;
          for (const auto& e : env.history()) used += e.resource == r;
          EXPECT_EQ(env.remaining_budget(r) + used, res[r].budget);
        }
    }
    for (const auto& e : env.history()) {
      total_base += e.base_reward;
      EXPECT_EQ(sched.cohort_of(e.individual), sched.active_cohort(e.round));
    }
    EXPECT_NEAR(total_y, total_base - env.ledger().lost_mass(), 1e-9);
    EXPECT_TRUE(audit_trace(env.history(), audit_config_for(env)).empty());
  }
}

TEST(Environment, CommonRandomNumbers) {
  EXPECT_EQ(reward_noise(5, 1, 2, 3), reward_noise(5, 1, 2, 3));
  EXPECT_NE(reward_noise(5, 1, 2, 3), reward_noise(5, 1, 2, 4));
  std::vector<int> support{1, 2, 3};
  std::vector<int> hits(4, 0);
  for (int t = 0; t < 3000; ++t) ++hits[draw_cooldown(7, support, 0, 0, t)];
  for (int c = 1; c <= 3; ++c) EXPECT_NEAR(hits[c] / 3000.0, 1.0 / 3.0, 0.04);
}

namespace {

AuditConfig small_audit() {
  AuditConfig c;
  c.horizon = 10;
  c.block_length = 10;
  c.budgets = {2, 5};
  c.cohort_of = {0, 0, 0};
  return c;
}

AllocationEvent ev(int t, IndividualId i, ResourceId r, int cd) { return {t, i, r, 0, 0.0, 0.0, cd}; }

}  // namespace

TEST(Audit, CleanTrace) {
  EXPECT_TRUE(audit_trace({ev(1, 0, 0, 1), ev(3, 0, 0, 1), ev(1, 1, 1, 2)}, small_audit()).empty());
}

TEST(Audit, CooldownViolation) {
  const auto v = audit_trace({ev(4, 0, 1, 2), ev(5, 0, 1, 2)}, small_audit());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Cooldown);
  EXPECT_EQ(v[0].round, 5);
  // c = 2 blocks t+1..t+2 only.
  EXPECT_TRUE(audit_trace({ev(4, 0, 1, 2), ev(7, 0, 1, 2)}, small_audit()).empty());
  EXPECT_EQ(audit_trace({ev(4, 0, 1, 2), ev(6, 0, 1, 2)}, small_audit()).size(), 1u);
}

TEST(Audit, BudgetViolation) {
  const auto v = audit_trace({ev(1, 0, 0, 1), ev(1, 1, 0, 1), ev(1, 2, 0, 1)}, small_audit());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Budget);
}

TEST(Audit, OnePerRoundAndCohort) {
  auto cfg = small_audit();
  auto v = audit_trace({ev(2, 0, 0, 1), ev(2, 0, 1, 1)}, cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::OnePerRound);
  cfg.block_length = 5;
  cfg.cohort_of = {0, 1, 1};
  v = audit_trace({ev(3, 1, 0, 1)}, cfg);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Cohort);
}

TEST(Audit, PerCohortBudgetReset) {
  auto cfg = small_audit();
  cfg.block_length = 5;
  const std::vector<AllocationEvent> trace{ev(1, 0, 0, 1), ev(2, 1, 0, 1), ev(6, 0, 0, 1), ev(7, 1, 0, 1)};
  cfg.cohort_of = {0, 0, 0};
  cfg.budget_reset_per_cohort = true;
  // Cohort violations aside, the budget check resets at round 6.
  for (const auto& v : audit_trace(trace, cfg)) EXPECT_NE(v.kind, ViolationKind::Budget);
  cfg.budget_reset_per_cohort = false;
  int budget = 0;
  for (const auto& v : audit_trace(trace, cfg)) budget += v.kind == ViolationKind::Budget;
  EXPECT_EQ(budget, 1);
}
