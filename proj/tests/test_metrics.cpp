#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace metacub;

namespace {

std::vector<IndividualRecord> three_pairs() { return fixture::population({{0.9}, {0.5}, {0.1}}, {0, 0, 1}); }

}  // namespace

TEST(Oracle, Examples) {
  const auto pop = three_pairs();
  const std::vector<DelayKernel> k{immediate_kernel(10, 0)};
  EXPECT_EQ(oracle_reward({1, {}, {5}, 1}, pop, k, 10).reward, 0.0);
  EXPECT_DOUBLE_EQ(oracle_reward({1, {{1, 0}}, {5}, 1}, pop, k, 10).reward, 0.5);
  EXPECT_DOUBLE_EQ(oracle_reward({1, {{0, 0}, {1, 0}, {2, 0}}, {5}, 1}, pop, k, 10).reward, 0.9);
  EXPECT_DOUBLE_EQ(oracle_reward({1, {{0, 0}, {1, 0}, {2, 0}}, {5}, 2}, pop, k, 10).reward, 1.4);
  EXPECT_DOUBLE_EQ(oracle_reward({1, {{0, 0}, {1, 0}, {2, 0}}, {1}, 3}, pop, k, 10).reward, 0.9);
  EXPECT_EQ(oracle_reward({1, {{0, 0}}, {5}, 0}, pop, k, 10).reward, 0.0);
}

TEST(Oracle, OneResourcePerIndividualAndInHorizonMass) {
  const auto pop = fixture::population({{1.0, 0.8}, {0.3, 0.2}}, {0, 0});
  // Resource 0 pays only after 5 rounds; near the end it lands past T.
  const std::vector<DelayKernel> k{DelayKernel{0, {0, 0, 0, 0, 0, 1.0}}, immediate_kernel(6, 1)};
  const std::vector<Action> all{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  auto early = oracle_reward({1, all, {5, 5}, 2}, pop, k, 6);
  EXPECT_EQ(early.actions, (std::vector<Action>{{0, 0}, {1, 0}}));
  auto late = oracle_reward({3, all, {5, 5}, 2}, pop, k, 6);
  EXPECT_EQ(late.actions, (std::vector<Action>{{0, 1}, {1, 1}}));
  EXPECT_DOUBLE_EQ(late.reward, 1.0);
}

TEST(Regret, Examples) {
  const std::vector<double> same{0.3, 0.1, 0.7};
  for (const auto& p : cumulative_regret(same, same).points) EXPECT_EQ(p.cum_regret, 0.0);
  const auto c = cumulative_regret(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0), {}, 9);
  EXPECT_DOUBLE_EQ(c.final_regret(), 10.0);
  EXPECT_EQ(c.points.size(), 10u);
  EXPECT_EQ(c.points[3].round, 4);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(cumulative_regret({1.0}, {1.0, 2.0}), DomainError);
  EXPECT_THROW(cumulative_regret({1.0}, {1.0}, {1.0, 2.0}), DomainError);
  const auto obs = cumulative_regret({1.0, 2.0}, {1.0, 2.5}, {1.1, 1.9});
  EXPECT_EQ(obs.points[1].y, 1.9);
  EXPECT_DOUBLE_EQ(obs.final_regret(), 0.5);
}

TEST(Regret, RandomPolicyAgainstHandExpansion) {
  const int T = 12;
  Rng rng(31);
  std::vector<std::vector<double>> mu(6, std::vector<double>(2));
  for (auto& m : mu)
    for (auto& v : m) v = rng.uniform();
  const auto pop = fixture::population(mu, {0, 0, 0, 1, 1, 1});
  const std::vector<DelayKernel> k{make_delay_kernel({2.0, 3.0}, T, 0), immediate_kernel(T, 1)};
  ExpectedRewardTracker tracker(T, k);
  std::vector<oracle::Posting> pol, orc;
  for (int t = 1; t <= T; ++t) {
    RoundSnapshot snap{t, {}, {100, 100}, 0};
    for (int i = 0; i < 6; ++i)
      for (int r = 0; r < 2; ++r)
        if (rng.uniform() < 0.5) snap.eligible.push_back({i, r});
    std::vector<Action> pick;
    for (const auto& a : snap.eligible)
      if (rng.uniform() < 0.3 && (pick.empty() || pick.back().individual != a.individual)) pick.push_back(a);
    snap.capacity = static_cast<int>(pick.size());
    const auto o = oracle_reward(snap, pop, k, T);
    tracker.post(t, pick, o, pop);
    for (const auto& a : pick) pol.push_back({t, a.resource, mu[a.individual][a.resource]});
    for (const auto& a : o.actions) orc.push_back({t, a.resource, mu[a.individual][a.resource]});
  }
  const auto curve = cumulative_regret(tracker.policy_y(), tracker.oracle_y());
  double cum = 0.0;
  for (int t = 1; t <= T; ++t) {
    cum += oracle::brute_force_reward(orc, k, t) - oracle::brute_force_reward(pol, k, t);
    EXPECT_NEAR(curve.points[static_cast<std::size_t>(t - 1)].cum_regret, cum, 1e-12) << t;
  }
}

TEST(Fairness, Examples) {
  for (const auto& g : fairness_ratios(std::vector<long>{3, 3, 3}, std::vector<long>{5, 5, 5})) EXPECT_DOUBLE_EQ(g.ratio, 1.0);
  const auto r = fairness_ratios(std::vector<long>{8, 2}, std::vector<long>{10, 10});
  EXPECT_DOUBLE_EQ(r[0].ratio, 1.6);
  EXPECT_DOUBLE_EQ(r[1].ratio, 0.4);
  EXPECT_THROW(fairness_ratios(std::vector<long>{1, 1}, std::vector<long>{0, 2}), ConfigError);
  EXPECT_THROW(fairness_ratios(std::vector<long>{0, 0}, std::vector<long>{1, 2}), DomainError);
}

TEST(Fairness, WeightedMeanIsOne) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<long> counts(4), sizes(4);
    long n = 0;
    for (int k = 0; k < 4; ++k) {
      sizes[k] = 1 + static_cast<long>(rng.below(30));
      counts[k] = static_cast<long>(rng.below(20)) + (k == 0);
      n += sizes[k];
    }
    double wmean = 0.0;
    for (const auto& g : fairness_ratios(counts, sizes)) {
      EXPECT_GE(g.ratio, 0.0);
      wmean += g.ratio * static_cast<double>(g.size) / static_cast<double>(n);
    }
    EXPECT_NEAR(wmean, 1.0, 1e-12);
  }
}

TEST(Fairness, FromLog) {
  std::vector<AllocationEvent> log{{1, 0, 0, 0, 1.0, 0.0, 1}, {2, 1, 0, 0, 1.0, 0.0, 1}, {3, 2, 0, 1, 1.0, 0.0, 1}};
  const auto r = fairness_ratios(log, std::vector<long>{4, 2});
  EXPECT_EQ(r[0].count, 2);
  EXPECT_DOUBLE_EQ(r[0].ratio, (2.0 / 4.0) / (3.0 / 6.0));
  EXPECT_DOUBLE_EQ(r[1].ratio, (1.0 / 2.0) / (3.0 / 6.0));
}

TEST(Disparity, Examples) {
  EXPECT_EQ(disparity({{0.4, 0.6}, {0.5}}), 0.0);
  EXPECT_NEAR(disparity({{0.8}, {0.5}, {0.3}}), 0.5, 1e-15);
  std::vector<std::vector<double>> g{{0.1, 0.7}, {2.0, -1.0, 0.4}, {0.25}};
  const double d = disparity(g);
  for (auto& v : g)
    for (auto& x : v) x += 3.75;
  EXPECT_NEAR(disparity(g), d, 1e-12);
  EXPECT_GE(d, 0.0);
  EXPECT_THROW(disparity({{1.0}, {}}), DomainError);
  EXPECT_THROW(disparity({}), DomainError);
}

TEST(Disparity, OutcomesByGroup) {
  std::vector<AllocationEvent> log{{1, 0, 0, 0, 1.5, 0.0, 1}, {4, 0, 1, 0, 0.5, 0.0, 1}, {2, 2, 0, 1, -1.0, 0.0, 1}};
  const auto g = outcomes_by_group(log, {0, 0, 1, 1}, 2);
  EXPECT_EQ(g[0], (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(g[1], (std::vector<double>{-1.0, 0.0}));
}

TEST(Summary, MeanStd) {
  const auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({7.0}).std, 0.0);
}
