#include <gtest/gtest.h>

#include <functional>

#include "support/fixtures.hpp"

using namespace metacub;

namespace {

/// Context with N individuals (one group each unless given), one cohort.
std::shared_ptr<PolicyContext> bandit_context(int N, int R, int T, std::vector<GroupId> groups = {}) {
  auto ctx = std::make_shared<PolicyContext>();
  ctx->horizon = T;
  ctx->n_resources = R;
  if (groups.empty()) groups.assign(static_cast<std::size_t>(N), 0);
  ctx->groups = groups;
  ctx->n_groups = *std::max_element(groups.begin(), groups.end()) + 1;
  for (int i = 0; i < N; ++i) ctx->contexts.push_back(Eigen::VectorXd::Constant(1, i));
  ctx->schedule = fixture::single_cohort(N, T);
  for (int r = 0; r < R; ++r) {
    ctx->kernels.push_back(immediate_kernel(T, r));
    ctx->budgets.push_back(1 << 20);
  }
  return ctx;
}

std::vector<Action> all_arms(int N, int R) {
  std::vector<Action> out;
  for (int i = 0; i < N; ++i)
    for (int r = 0; r < R; ++r) out.push_back({i, r});
  return out;
}

/// Runs a bandit loop with every arm always eligible; reward(t, action) gives y.
std::vector<Action> play(Policy& p, const std::vector<Action>& arms, int T,
                         const std::function<double(int, const Action&)>& reward, int R = 1) {
  std::vector<int> budgets(static_cast<std::size_t>(R), 1 << 20);
  std::vector<Action> seq;
  for (int t = 1; t <= T; ++t) {
    auto d = p.select(PolicyView{t, arms, budgets});
    double y = 0.0;
    for (const auto& a : d.actions) {
      y += reward(t, a);
      seq.push_back(a);
    }
    p.observe(t, y);
  }
  return seq;
}

Environment desk_env(std::uint64_t seed, int T, std::vector<ResourceSpec>* res_out = nullptr) {
  Rng rng(seed);
  const int N = 30, R = 2;
  std::vector<std::vector<double>> mu(N, std::vector<double>(R));
  std::vector<GroupId> g(N);
  for (int i = 0; i < N; ++i) {
    g[i] = i % 3;
    for (auto& m : mu[i]) m = 1.0 + 0.5 * rng.normal();
  }
  std::vector<ResourceSpec> res{{0, 15, make_delay_kernel({2.0, 6.0}, T, 0), {1, 2, 3}},
                                {1, 15, make_delay_kernel({3.0, 5.0}, T, 1), {1, 2, 3}}};
  if (res_out) *res_out = res;
  return Environment(fixture::population(mu, g), res, build_schedule(N, 10, T, rng), {T, false, 0.3, seed});
}

std::vector<AllocationEvent> run_on_desk(std::uint64_t seed, const std::function<std::unique_ptr<Policy>(std::shared_ptr<PolicyContext>)>& make) {
  const int T = 60;
  auto env = desk_env(seed, T);
  auto ctx = fixture::context_for(env, 3);
  ctx->reward_lo = -1.0;
  ctx->reward_hi = 3.0;
  auto p = make(ctx);
  fixture::drive(env, *p);
  EXPECT_TRUE(audit_trace(env.history(), audit_config_for(env)).empty()) << p->name();
  return env.history();
}

std::vector<Action> actions_of(const std::vector<AllocationEvent>& h) {
  std::vector<Action> out;
  for (const auto& e : h) out.push_back({e.individual, e.resource});
  return out;
}

}  // namespace

TEST(Exploration, Schedule) {
  ExplorationSchedule s{ExplorationSchedule::Kind::SqrtLog, 2.0};
  EXPECT_DOUBLE_EQ(s(1), 2.0 * std::sqrt(std::log(2.0)));
  EXPECT_DOUBLE_EQ(s(100), 2.0 * std::sqrt(std::log(100.0)));
  EXPECT_DOUBLE_EQ((ExplorationSchedule{ExplorationSchedule::Kind::Constant, 0.3})(50), 0.3);
}

TEST(Credit, NaiveSplitsOverLastSet) {
  NaiveCredit c;
  double total = 0.0;
  c.credit(5.0, [&](const Action&, double s) { total += s; });
  EXPECT_EQ(total, 0.0);
  c.record({{0, 0}, {1, 0}});
  c.record({});
  std::vector<double> shares;
  c.credit(3.0, [&](const Action&, double s) { shares.push_back(s); });
  EXPECT_EQ(shares, (std::vector<double>{1.5, 1.5}));
}

TEST(Credit, KernelWeightsSumToInHorizonMass) {
  const int T = 12;
  std::vector<DelayKernel> kernels{make_delay_kernel({2.0, 3.0}, T, 0), make_delay_kernel({1.0, 1.0}, T, 1)};
  KernelCredit c(&kernels);
  RewardLedger ledger(T);
  Rng rng(3);
  for (int t = 1; t <= T; ++t) {
    std::vector<Action> acts;
    if (t % 3 != 0) acts.push_back({t, t % 2});
    c.record(t, acts);
    for (const auto& a : acts) ledger.post_allocation(t, 1.0, kernels[static_cast<std::size_t>(a.resource)]);
    c.credit(t, ledger.realize(t));
  }
  for (const auto& e : c.entries()) {
    EXPECT_NEAR(e.mass, kernels[static_cast<std::size_t>(e.action.resource)].mass_through(T - e.round), 1e-12);
    // All base rewards are 1, so every credited estimate is exactly 1.
    EXPECT_NEAR(e.credited / e.mass, 1.0, 1e-12);
  }
}

TEST(Ucb, Examples) {
  auto ctx = bandit_context(3, 1, 10);
  UcbPolicy p(ctx);
  const auto arms = all_arms(3, 1);
  std::vector<int> b{100};
  // Unpulled arms go first in stable order.
  for (int t = 1; t <= 3; ++t) {
    auto d = p.select(PolicyView{t, arms, b});
    ASSERT_EQ(d.actions.size(), 1u);
    EXPECT_EQ(d.actions[0].individual, t - 1);
    p.observe(t, 0.5);
  }
  // Identical statistics: lowest index.
  EXPECT_EQ(p.select(PolicyView{4, arms, b}).actions[0].individual, 0);

  auto ctx2 = bandit_context(2, 1, 1000);
  UcbPolicy q(ctx2);
  const auto seq = play(q, all_arms(2, 1), 1000, [](int, const Action& a) { return a.individual == 0 ? 0.1 : 0.9; });
  EXPECT_EQ(q.select(PolicyView{1001, all_arms(2, 1), b}).actions[0].individual, 1);
  EXPECT_GT(q.stats({1, 0}).count, 900);
}

TEST(Cucb, Examples) {
  auto ctx = bandit_context(3, 2, 20);
  const auto arms = all_arms(3, 2);
  std::vector<int> b{100, 100};
  auto reward = [](int, const Action& a) { return 0.1 * a.individual + 0.05 * a.resource; };

  UcbPolicy u(ctx);
  CucbPolicy c1(ctx, 1);
  EXPECT_EQ(play(u, arms, 20, reward, 2), play(c1, arms, 20, reward, 2));

  CucbPolicy all(ctx, 10);
  auto d = all.select(PolicyView{1, arms, b});
  ASSERT_EQ(d.actions.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(d.actions[static_cast<std::size_t>(i)].individual, i);

  // (2,1) and (2,0) share an individual: only the higher index survives.
  CucbPolicy two(ctx, 2);
  for (const auto& a : arms) {
    auto dd = two.select(PolicyView{1, std::vector<Action>{a}, b});
    two.observe(1, a.individual == 2 ? (a.resource == 1 ? 1.0 : 0.9) : 0.0);
  }
  auto pick = two.select(PolicyView{7, arms, b});
  ASSERT_EQ(pick.actions.size(), 2u);
  EXPECT_EQ(pick.actions[0].individual, 2);
  EXPECT_EQ(pick.actions[0].resource, 1);
  EXPECT_NE(pick.actions[1].individual, 2);

  std::vector<int> one_left{1, 0};
  auto capped = all.select(PolicyView{2, arms, one_left});
  ASSERT_EQ(capped.actions.size(), 1u);
  EXPECT_EQ(capped.actions[0].resource, 0);
}

TEST(Exp3, Distributions) {
  auto ctx = bandit_context(4, 1, 10);
  const auto arms = all_arms(4, 1);
  Exp3Policy p(ctx, 0.05, Rng(1));
  for (double q : p.probabilities(arms)) EXPECT_DOUBLE_EQ(q, 0.25);

  Exp3Policy greedy(ctx, 0.0, Rng(1));
  std::vector<int> b{100};
  auto d = greedy.select(PolicyView{1, arms, b});
  greedy.observe(1, 1.0);  // r/p = 4, weight *= exp(0)
  for (double q : greedy.probabilities(arms)) EXPECT_DOUBLE_EQ(q, 0.25);

  EXPECT_THROW(Exp3Policy(ctx, 1.5, Rng(1)), ConfigError);
  auto bad = bandit_context(2, 1, 10);
  bad->reward_hi = bad->reward_lo;
  EXPECT_THROW(Exp3Policy(bad, 0.1, Rng(1)), ConfigError);
}

TEST(Exp3, ClipsOutOfRangeRewards) {
  auto ctx = bandit_context(2, 1, 10);
  Exp3Policy p(ctx, 0.1, Rng(4));
  play(p, all_arms(2, 1), 10, [](int, const Action&) { return 5.0; });
  EXPECT_EQ(p.clipped(), 10);
}

TEST(Exp3, Converges) {
  auto ctx = bandit_context(2, 1, 2000);
  const auto arms = all_arms(2, 1);
  Exp3Policy p(ctx, 0.05, Rng(11));
  play(p, arms, 2000, [](int, const Action& a) { return a.individual == 0 ? 1.0 : 0.0; });
  EXPECT_GT(p.probabilities(arms)[0], 0.9);
}

TEST(Mexp3, SingleEntryCatalog) {
  auto ctx = bandit_context(6, 2, 10, {0, 0, 0, 1, 1, 1});
  MetaPolicy z{2, 2, {0.4, 0.0, 0.0, 0.3}};
  Mexp3Policy p(ctx, 0.1, std::vector<MetaPolicy>{z}, Rng(2));
  const auto arms = all_arms(6, 2);
  std::vector<int> b{100, 100};
  for (int t = 1; t <= 10; ++t) {
    auto d = p.select(PolicyView{t, arms, b});
    // floor(0.4 * 3) = 1 of group 0 on r=0, floor(0.3 * 3) = 0 of group 1.
    ASSERT_EQ(d.actions.size(), 1u);
    EXPECT_LT(d.actions[0].individual, 3);
    EXPECT_EQ(d.actions[0].resource, 0);
    p.observe(t, 1.0);
  }
  EXPECT_DOUBLE_EQ(p.probabilities()[0], 1.0);
  EXPECT_THROW(Mexp3Policy(ctx, 0.1, std::vector<MetaPolicy>{}, Rng(1)), ConfigError);
}

TEST(Mexp3, Converges) {
  auto ctx = bandit_context(6, 1, 3000, {0, 0, 0, 1, 1, 1});
  MetaPolicy good{2, 1, {0.5, 0.0}}, bad{2, 1, {0.0, 0.5}};
  Mexp3Policy p(ctx, 0.05, std::vector<MetaPolicy>{good, bad}, Rng(5));
  play(p, all_arms(6, 1), 3000, [&](int, const Action& a) { return ctx->groups[a.individual] == 0 ? 1.0 : 0.0; });
  EXPECT_GT(p.probabilities()[0], 0.9);
}

TEST(LinUcb, Examples) {
  auto ctx = bandit_context(2, 2, 10);
  ctx->contexts = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 3.0)};
  LinUcbPolicy p(ctx, 1.0);
  const auto arms = all_arms(2, 2);
  std::vector<int> b{100, 100};
  // theta = 0: widest confidence (largest |x|) wins, lowest resource on ties.
  auto d = p.select(PolicyView{1, arms, b});
  EXPECT_EQ(d.actions[0].individual, 1);
  EXPECT_EQ(d.actions[0].resource, 0);
  EXPECT_DOUBLE_EQ(d.predicted[0], 0.0);
  p.observe(1, 2.0);
  LinUcbPolicy greedy(ctx, 0.0);
  greedy.select(PolicyView{1, std::vector<Action>{{0, 1}}, b});
  greedy.observe(1, -1.0);
  // Only resource 0 still predicts 0 > negative.
  EXPECT_EQ(greedy.select(PolicyView{2, arms, b}).actions[0].resource, 0);
}

TEST(LinUcb, FindsBestPairOnLinearTruth) {
  const int N = 20, T = 2000;
  Rng rng(8);
  auto ctx = bandit_context(N, 2, T);
  for (auto& x : ctx->contexts) x = Eigen::VectorXd::Constant(1, rng.normal());
  auto mean = [&](const Action& a) {
    const double x = ctx->contexts[static_cast<std::size_t>(a.individual)](0);
    return a.resource == 0 ? 0.5 + x : 0.2 - x;
  };
  LinUcbPolicy p(ctx, 1.0);
  std::vector<int> b{1 << 20, 1 << 20};
  int hits = 0, counted = 0;
  for (int t = 1; t <= T; ++t) {
    std::vector<Action> eligible;
    for (int j = 0; j < 4; ++j) eligible.push_back({static_cast<IndividualId>(rng.below(N)), j % 2});
    std::sort(eligible.begin(), eligible.end());
    eligible.erase(std::unique(eligible.begin(), eligible.end()), eligible.end());
    const auto d = p.select(PolicyView{t, eligible, b});
    double best = -1e9;
    for (const auto& a : eligible) best = std::max(best, mean(a));
    if (t > T / 2) {
      ++counted;
      hits += mean(d.actions[0]) == best;
    }
    p.observe(t, mean(d.actions[0]) + 0.1 * rng.normal());
  }
  EXPECT_GE(hits, 0.9 * counted);
}

TEST(Degeneracy, DiscountOneAndFullWindowMatchUcb) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ucb = actions_of(run_on_desk(seed, [](auto c) { return std::make_unique<UcbPolicy>(c); }));
    const auto ducb = actions_of(run_on_desk(seed, [](auto c) { return std::make_unique<DucbPolicy>(c, 1.0); }));
    const auto sw = actions_of(run_on_desk(seed, [](auto c) { return std::make_unique<SwucbPolicy>(c, 60); }));
    EXPECT_EQ(ucb, ducb) << seed;
    EXPECT_EQ(ucb, sw) << seed;
  }
}

TEST(Ducb, TinyDiscountAlternates) {
  auto ctx = bandit_context(2, 1, 40);
  DucbPolicy p(ctx, 1e-9);
  const auto seq = play(p, all_arms(2, 1), 40, [](int, const Action& a) { return a.individual == 0 ? 1.0 : 0.0; });
  // Only the latest observation survives, so the less recently pulled arm's
  // bonus dominates every time.
  for (std::size_t t = 1; t < seq.size(); ++t) EXPECT_NE(seq[t].individual, seq[t - 1].individual) << t;
  EXPECT_THROW(DucbPolicy(ctx, 0.0), ConfigError);
}

TEST(Swucb, UnitWindowUsesLatestObservation) {
  auto ctx = bandit_context(2, 1, 10);
  SwucbPolicy p(ctx, 1);
  const auto arms = all_arms(2, 1);
  std::vector<int> b{10};
  p.select(PolicyView{1, arms, b});
  p.observe(1, 5.0);
  // Round 2: arm 0's round-1 observation has left the window; both unpulled.
  EXPECT_EQ(p.select(PolicyView{2, arms, b}).actions[0].individual, 0);
  EXPECT_THROW(SwucbPolicy(ctx, 0), ConfigError);
}

namespace {

/// Arm 0 pays Bernoulli(0.9) until T/2 and Bernoulli(0.1) after; arm 1 pays
/// Bernoulli(0.5) throughout. Returns pulls of arm 1 and regret over the
/// quarter-horizon after the shift.
std::pair<long, double> mean_shift(Policy& p, int T, std::uint64_t seed) {
  Rng rng(seed);
  long pulls = 0;
  double regret = 0.0;
  play(p, all_arms(2, 1), T, [&](int t, const Action& a) {
    const bool after = t > T / 2;
    const double mu = a.individual == 1 ? 0.5 : (after ? 0.1 : 0.9);
    if (after && t <= T / 2 + T / 4) {
      pulls += a.individual == 1;
      regret += 0.5 - mu;
    }
    return rng.uniform() < mu ? 1.0 : 0.0;
  });
  return {pulls, regret};
}

}  // namespace

TEST(NonStationary, ForgettingPoliciesTrackMeanShift) {
  const int T = 2000;
  double ucb_pulls = 0, ducb_pulls = 0, ucb_regret = 0, sw_regret = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto ctx = bandit_context(2, 1, T);
    UcbPolicy u(ctx);
    DucbPolicy d(ctx, 0.95);
    SwucbPolicy s(ctx, 50);
    const auto [up, ur] = mean_shift(u, T, seed);
    const auto [dp, dr] = mean_shift(d, T, seed);
    const auto [sp, sr] = mean_shift(s, T, seed);
    ucb_pulls += static_cast<double>(up);
    ducb_pulls += static_cast<double>(dp);
    ucb_regret += ur;
    sw_regret += sr;
  }
  EXPECT_GT(ducb_pulls, ucb_pulls);
  EXPECT_LT(sw_regret, ucb_regret);
}

TEST(Ccucb, MatchesHandTrace) {
  // 3 individuals, 2 resources, T = 5, immediate rewards, no refit inside T.
  const int T = 5;
  std::vector<Observation> offline;
  Rng rng(21);
  for (int j = 0; j < 30; ++j) {
    Eigen::VectorXd x(1);
    x(0) = rng.normal();
    offline.push_back({x, j % 2, (j % 2 == 0 ? 1.0 : -0.5) * x(0) + 0.1 * rng.normal()});
  }
  ActionFeaturizer feat{1, 1, 2, false, true};
  auto pred = std::make_shared<RewardPredictor>(RewardPredictor::fit(feat, offline, ModelKind::Ridge));

  auto env_ptr = std::make_unique<Environment>(fixture::population({{0.5, 0.1}, {0.2, 0.9}, {0.4, 0.3}}, {0, 0, 0}),
                                               fixture::resources(2, 2, T, {1}), fixture::single_cohort(3, T),
                                               EnvConfig{T, false, 0.0, 1});
  auto& env = *env_ptr;
  auto ctx = fixture::context_for(env, 1);
  ctx->contexts = {Eigen::VectorXd::Constant(1, -0.7), Eigen::VectorXd::Constant(1, 0.4), Eigen::VectorXd::Constant(1, 1.3)};
  ctx->predictor = pred;
  const double c = 0.8;
  CcucbPolicy policy(ctx, {ExplorationSchedule::Kind::Constant, c}, 100, 0.5);

  // Oracle: lines of the algorithm, executed by hand.
  std::vector<long> counts(2, 0);
  std::vector<int> budget{2, 2};
  std::vector<int> next_free(6, 1);
  for (int t = 1; t <= T; ++t) {
    double best = -1e300;
    Action pick{-1, -1};
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < 2; ++r) {
        if (budget[r] == 0 || next_free[i * 2 + r] > t) continue;
        const auto& x = ctx->contexts[i];
        const double g = pred->predict(x, r) + c * pred->uncertainty(x, r, counts[r], t);
        if (g > best) {
          best = g;
          pick = {i, r};
        }
      }
    const auto eligible = env.eligible_actions();
    std::vector<int> rem{env.remaining_budget(0), env.remaining_budget(1)};
    const auto d = policy.select(PolicyView{t, eligible, rem});
    if (pick.individual < 0) {
      EXPECT_TRUE(d.actions.empty()) << t;
    } else {
      ASSERT_EQ(d.actions.size(), 1u) << t;
      EXPECT_EQ(d.actions[0], pick) << t;
      --budget[pick.resource];
      ++counts[pick.resource];
      next_free[pick.individual * 2 + pick.resource] = t + 2;  // cooldown 1
    }
    policy.observe(t, env.step(d.actions, d.predicted));
  }
}

TEST(Ccucb, ZeroBetaIsGreedyAndEqualPredictionsUseUncertainty) {
  std::vector<Observation> offline;
  for (int j = 0; j < 10; ++j) offline.push_back({Eigen::VectorXd::Constant(1, j - 4.5), j % 2, 1.0});
  ActionFeaturizer feat{1, 1, 2, false, false};
  auto pred = std::make_shared<RewardPredictor>(RewardPredictor::fit(feat, offline, ModelKind::Ridge));
  auto ctx = bandit_context(3, 2, 10);
  ctx->predictor = pred;
  ctx->contexts = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 20.0), Eigen::VectorXd::Constant(1, 5.0)};
  const auto arms = all_arms(3, 2);
  std::vector<int> b{5, 5};
  CcucbPolicy greedy(ctx, {ExplorationSchedule::Kind::Constant, 0.0}, 25, 0.5);
  const auto scored = greedy.score_all(PolicyView{1, arms, b});
  std::size_t arg = 0;
  for (std::size_t j = 1; j < scored.size(); ++j)
    if (scored[j].predicted > scored[arg].predicted) arg = j;
  EXPECT_EQ(greedy.select(PolicyView{1, arms, b}).actions[0], arms[arg]);

  // Symmetric design and constant labels give a zero slope, so every
  // prediction is equal and the far-out context wins on uncertainty.
  CcucbPolicy explore(ctx, {ExplorationSchedule::Kind::Constant, 5.0}, 25, 0.5);
  EXPECT_EQ(explore.select(PolicyView{1, arms, b}).actions[0].individual, 1);
}

TEST(AllPolicies, AuditCleanAndBudgetExhaustionIsSilent) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto h = run_on_desk(seed, [](auto c) { return std::make_unique<CucbPolicy>(c, 4); });
    long used = 0;
    for (const auto& e : h) used += e.resource == 0;
    EXPECT_EQ(used, 15);
    run_on_desk(seed, [seed](auto c) { return std::make_unique<Exp3Policy>(c, 0.05, Rng(seed)); });
    run_on_desk(seed, [seed](auto c) { return std::make_unique<Mexp3Policy>(c, 0.05, 8, Rng(seed)); });
    run_on_desk(seed, [](auto c) { return std::make_unique<LinUcbPolicy>(c, 1.0); });
  }
}
