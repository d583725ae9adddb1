#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "metacub/baselines.hpp"
#include "metacub/config.hpp"
#include "metacub/data_io.hpp"
#include "metacub/environment.hpp"
#include "metacub/metacub_policy.hpp"
#include "metacub/metrics.hpp"
#include "metacub/predictor.hpp"

namespace metacub {

struct ModelMetric {
  std::string split;  // train | eval
  std::string group;  // group label or "all"
  long n = 0;
  std::string metric;  // mse | accuracy
  double value = 0.0;
};

/// Everything shared read-only by the runs of one experiment.
struct World {
  std::vector<IndividualRecord> population;
  std::vector<GroupId> group_of;
  std::vector<std::string> group_labels;
  int n_resources = 1;
  std::shared_ptr<const RewardPredictor> predictor;
  double noise_sd = 0.0;
  double reward_lo = 0.0;
  double reward_hi = 1.0;
  std::vector<ModelMetric> model_metrics;
  std::vector<std::string> warnings;

  int n_groups() const noexcept { return static_cast<int>(group_labels.size()); }

  std::vector<long> group_sizes() const {
    std::vector<long> s(group_labels.size(), 0);
    for (GroupId g : group_of) ++s[static_cast<std::size_t>(g)];
    return s;
  }
};

namespace detail {

inline std::vector<Observation> observations(const std::vector<DataRow>& rows, const ActionFeaturizer& f) {
  std::vector<Observation> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({f.context(r.features, r.group), r.logged_resource, r.outcome});
  return out;
}

inline void add_model_metrics(World& w, const std::string& split, const std::vector<Observation>& obs,
                              const std::vector<DataRow>& rows, bool binary) {
  const int K = w.n_groups();
  std::vector<double> acc(static_cast<std::size_t>(K + 1), 0.0);
  std::vector<long> n(static_cast<std::size_t>(K + 1), 0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double p = w.predictor->predict(obs[i].context, obs[i].resource);
    const double v = binary ? ((p >= 0.5) == (obs[i].outcome >= 0.5) ? 1.0 : 0.0)
                            : (p - obs[i].outcome) * (p - obs[i].outcome);
    for (auto k : {static_cast<std::size_t>(rows[i].group), static_cast<std::size_t>(K)}) {
      acc[k] += v;
      ++n[k];
    }
  }
  for (int k = 0; k <= K; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    if (n[idx] == 0) continue;
    w.model_metrics.push_back({split, k == K ? "all" : w.group_labels[idx], n[idx], binary ? "accuracy" : "mse",
                               acc[idx] / static_cast<double>(n[idx])});
  }
}

}  // namespace detail

inline Dataset load_experiment_dataset(const DatasetConfig& d) {
  if (d.synthetic) return generate_synthetic(*d.synthetic);
  return load_dataset(d.csv_path, d.schema);
}

/// Split, standardize on train, fit f on the logged training outcomes, and
/// attach ground truth to the evaluation population.
inline World build_world(const ExperimentConfig& cfg) {
  Dataset ds = load_experiment_dataset(cfg.dataset);
  const int R = static_cast<int>(cfg.resources.size());
  const bool has_resource_info = cfg.dataset.synthetic || !cfg.dataset.schema.resource_column.empty() || ds.has_truth();
  if (has_resource_info && ds.n_resources != R)
    throw ConfigError("dataset has " + std::to_string(ds.n_resources) + " resources but the config lists " +
                      std::to_string(R));

  World w;
  w.group_labels = ds.group_labels;
  w.n_resources = R;
  Rng split_rng(derive_seed(cfg.dataset.split_seed, "split"));
  SplitResult parts = split(ds, cfg.dataset.train_fraction, split_rng);
  for (GroupId g : parts.singleton_groups)
    w.warnings.push_back("group '" + ds.group_labels[static_cast<std::size_t>(g)] + "' has one member; kept in train");
  const Standardizer st = Standardizer::fit(parts.train, ds.feature_names);
  for (const auto& name : st.degenerate) w.warnings.push_back("constant feature column '" + name + "' (sd set to 1)");
  st.apply(parts.train);
  st.apply(parts.eval);
  if (parts.eval.empty()) throw ConfigError("evaluation split is empty");

  ActionFeaturizer feat;
  feat.n_features = static_cast<int>(ds.feature_names.size());
  feat.n_groups = ds.n_groups();
  feat.n_resources = R;
  feat.group_indicators = cfg.dataset.group_indicators;
  feat.resource_specific = has_resource_info && R > 1;

  const auto train_obs = detail::observations(parts.train, feat);
  const auto eval_obs = detail::observations(parts.eval, feat);
  w.predictor = std::make_shared<const RewardPredictor>(
      RewardPredictor::fit(feat, train_obs, cfg.model_kind, cfg.model_options));
  const bool binary = ds.outcome_kind == OutcomeKind::Binary;
  detail::add_model_metrics(w, "train", train_obs, parts.train, binary);
  detail::add_model_metrics(w, "eval", eval_obs, parts.eval, binary);

  // Ground truth: carried truth columns, else an oracle fit on all rows.
  std::optional<RewardPredictor> oracle;
  double residual = 0.0;
  if (!ds.has_truth()) {
    std::vector<Observation> all = train_obs;
    all.insert(all.end(), eval_obs.begin(), eval_obs.end());
    oracle = RewardPredictor::fit(feat, all, binary ? ModelKind::Logistic : ModelKind::Ridge, cfg.model_options);
    for (const auto& o : all) residual += std::pow(oracle->predict(o.context, o.resource) - o.outcome, 2);
    residual = std::sqrt(residual / static_cast<double>(all.size()));
  }
  for (std::size_t i = 0; i < parts.eval.size(); ++i) {
    const auto& row = parts.eval[i];
    IndividualRecord rec;
    rec.id = static_cast<IndividualId>(i);
    rec.label = row.id;
    rec.group = row.group;
    rec.features = eval_obs[i].context;
    for (int r = 0; r < R; ++r)
      rec.true_means.push_back(oracle ? oracle->predict(rec.features, r) : row.truth[static_cast<std::size_t>(r)]);
    w.group_of.push_back(rec.group);
    w.population.push_back(std::move(rec));
  }
  w.noise_sd = cfg.noise_sd.value_or(cfg.dataset.synthetic ? cfg.dataset.synthetic->noise_sd : residual);

  if (cfg.reward_bounds) {
    w.reward_lo = cfg.reward_bounds->first;
    w.reward_hi = cfg.reward_bounds->second;
  } else {
    w.reward_lo = std::numeric_limits<double>::infinity();
    w.reward_hi = -w.reward_lo;
    for (const auto& r : parts.train) {
      w.reward_lo = std::min(w.reward_lo, r.outcome);
      w.reward_hi = std::max(w.reward_hi, r.outcome);
    }
    if (!(w.reward_hi > w.reward_lo)) w.reward_hi = w.reward_lo + 1.0;
  }
  return w;
}

// ---------------------------------------------------------------------------

struct CellKey {
  std::string policy;
  Regime regime = Regime::Delayed;
  std::string kernel_type;  // "none" in the immediate regime
  std::uint64_t seed = 0;
};

struct CellResult {
  CellKey key;
  RegretCurve regret;
  std::vector<AllocationEvent> events;
  std::vector<GroupFairness> fairness;  // empty when nothing was allocated
  double disparity = 0.0;
  std::vector<CohortPlan> plans;
  std::vector<Violation> violations;
  double lost_mass = 0.0;
};

inline std::unique_ptr<Policy> make_policy(const PolicyConfig& pc, std::shared_ptr<const PolicyContext> ctx, Rng rng) {
  const auto& n = pc.name;
  auto window = static_cast<int>(pc.number("refit_window", 25));
  const double min_mass = pc.number("credit_min_mass", 0.5);
  ExplorationSchedule beta{ExplorationSchedule::Kind::SqrtLog, pc.number("beta_scale", 1.0)};
  if (pc.params.value("beta_kind", std::string("sqrt-log")) == "constant") beta.kind = ExplorationSchedule::Kind::Constant;
  if (n == "ucb") return std::make_unique<UcbPolicy>(ctx);
  if (n == "ducb") return std::make_unique<DucbPolicy>(ctx, pc.number("gamma", 0.95));
  if (n == "swucb") return std::make_unique<SwucbPolicy>(ctx, static_cast<int>(pc.number("window", 50)));
  if (n == "cucb") return std::make_unique<CucbPolicy>(ctx, static_cast<int>(pc.number("per_round", 3)));
  if (n == "exp3") return std::make_unique<Exp3Policy>(ctx, pc.number("eta", 0.05), rng);
  if (n == "mexp3")
    return std::make_unique<Mexp3Policy>(ctx, pc.number("eta", 0.05), static_cast<int>(pc.number("catalog", 16)), rng);
  if (n == "linucb") return std::make_unique<LinUcbPolicy>(ctx, pc.number("alpha", 1.0));
  if (n == "ccucb") return std::make_unique<CcucbPolicy>(ctx, beta, window, min_mass);
  if (n == "metacub") {
    MetaCubParams p;
    p.meta.iterations = static_cast<int>(pc.number("meta_iterations", p.meta.iterations));
    p.meta.initial = static_cast<int>(pc.number("meta_initial", p.meta.initial));
    p.meta.candidates = static_cast<int>(pc.number("meta_candidates", p.meta.candidates));
    p.meta.rollouts = static_cast<int>(pc.number("meta_rollouts", p.meta.rollouts));
    p.meta.beta.scale = pc.number("meta_beta_scale", 1.0);
    p.beta = beta;
    p.refit_window = window;
    p.credit_min_mass = min_mass;
    p.equity_band = pc.number("equity_band", p.equity_band);
    p.pace_budget = pc.params.value("pace_budget", true);
    return std::make_unique<MetaCubPolicy>(ctx, p, rng);
  }
  throw ConfigError("unknown policy '" + n + "'");
}

inline std::vector<DelayKernel> regime_kernels(const ExperimentConfig& cfg, Regime regime, const std::string& family) {
  std::vector<DelayKernel> k;
  const int R = static_cast<int>(cfg.resources.size());
  if (regime == Regime::Immediate) {
    for (int r = 0; r < R; ++r) k.push_back(immediate_kernel(cfg.horizon, r));
    return k;
  }
  for (const auto& f : cfg.kernel_families)
    if (f.name == family) {
      for (int r = 0; r < R; ++r) k.push_back(f.per_resource[static_cast<std::size_t>(r)].build(cfg.horizon, r));
      return k;
    }
  throw ConfigError("unknown kernel type '" + family + "'");
}

inline CohortSchedule schedule_for_seed(const ExperimentConfig& cfg, const World& w, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "schedule"));
  return build_schedule(static_cast<int>(w.population.size()), cfg.block_length, cfg.horizon, rng);
}

inline CellResult run_cell(const ExperimentConfig& cfg, const World& w, const PolicyConfig& pc, const CellKey& key) {
  const auto kernels = regime_kernels(cfg, key.regime, key.kernel_type);
  CohortSchedule schedule = schedule_for_seed(cfg, w, key.seed);
  std::vector<ResourceSpec> resources;
  for (std::size_t r = 0; r < cfg.resources.size(); ++r)
    resources.push_back({static_cast<ResourceId>(r), cfg.resources[r].budget, kernels[r], cfg.resources[r].cooldown});
  Environment env(w.population, resources, schedule,
                  EnvConfig{cfg.horizon, cfg.budget_reset_per_cohort, w.noise_sd, derive_seed(key.seed, "environment")});

  auto ctx = std::make_shared<PolicyContext>();
  ctx->horizon = cfg.horizon;
  ctx->n_groups = w.n_groups();
  ctx->n_resources = w.n_resources;
  for (const auto& p : w.population) ctx->contexts.push_back(p.features);
  ctx->groups = w.group_of;
  ctx->schedule = schedule;
  ctx->kernels = kernels;
  for (const auto& r : cfg.resources) ctx->budgets.push_back(r.budget);
  ctx->budget_reset_per_cohort = cfg.budget_reset_per_cohort;
  ctx->reward_lo = w.reward_lo;
  ctx->reward_hi = w.reward_hi;
  ctx->predictor = w.predictor;
  auto policy = make_policy(pc, ctx, Rng(derive_seed(key.seed, "policy:" + pc.name)));

  ExpectedRewardTracker tracker(cfg.horizon, kernels);
  std::vector<double> observed;
  std::vector<int> remaining(resources.size());
  while (!env.done()) {
    const int t = env.round();
    RoundSnapshot snap;
    snap.round = t;
    snap.eligible = env.eligible_actions();
    for (std::size_t r = 0; r < resources.size(); ++r) remaining[r] = env.remaining_budget(static_cast<ResourceId>(r));
    snap.remaining_budgets = remaining;
    Decision d = policy->select(PolicyView{t, snap.eligible, snap.remaining_budgets});
    snap.capacity = static_cast<int>(d.actions.size());
    const OracleChoice oracle = oracle_reward(snap, w.population, kernels, cfg.horizon);
    const double y = env.step(d.actions, d.predicted);
    tracker.post(t, d.actions, oracle, w.population);
    policy->observe(t, y);
    observed.push_back(y);
  }

  CellResult res;
  res.key = key;
  res.regret = cumulative_regret(tracker.policy_y(), tracker.oracle_y(), observed, key.seed);
  res.events = env.history();
  res.violations = audit_trace(res.events, audit_config_for(env));
  if (!res.events.empty()) res.fairness = fairness_ratios(res.events, w.group_sizes());
  res.disparity = disparity(outcomes_by_group(res.events, w.group_of, w.n_groups()));
  res.plans = policy->plans();
  res.lost_mass = env.ledger().lost_mass();
  return res;
}

struct GridCell {
  const PolicyConfig* policy;
  CellKey key;
};

/// Canonical order: regime, kernel type, policy (config order), seed.
inline std::vector<GridCell> experiment_grid(const ExperimentConfig& cfg) {
  std::vector<GridCell> cells;
  for (Regime regime : cfg.regimes) {
    std::vector<std::string> families;
    if (regime == Regime::Immediate) families.push_back("none");
    else
      for (const auto& f : cfg.kernel_families) families.push_back(f.name);
    for (const auto& family : families)
      for (const auto& pc : cfg.policies) {
        if (std::find(pc.regimes.begin(), pc.regimes.end(), regime) == pc.regimes.end()) continue;
        for (auto seed : cfg.seeds) cells.push_back({&pc, {pc.name, regime, family, seed}});
      }
  }
  return cells;
}

inline int worker_count(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("METACUB_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  if (cfg.workers >= 1) return cfg.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every grid cell; results come back in grid order regardless of the
/// worker count.
inline std::vector<CellResult> run_grid(const ExperimentConfig& cfg, const World& w, int workers) {
  const auto grid = experiment_grid(cfg);
  std::vector<CellResult> results(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t j = next++; j < grid.size(); j = next++) {
      try {
        results[j] = run_cell(cfg, w, *grid[j].policy, grid[j].key);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = grid.size();
      }
    }
  };
  workers = std::max(1, std::min<int>(workers, static_cast<int>(grid.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace metacub
