#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "metacub/meta_level.hpp"
#include "metacub/metacub_policy.hpp"
#include "metacub/policy.hpp"

namespace metacub {

namespace detail {

/// Index used by the UCB family; +inf marks an unpulled arm.
inline double ucb_index(double mean, double count, int t) {
  if (!(count > 0.0)) return std::numeric_limits<double>::infinity();
  return mean + std::sqrt(2.0 * std::log(static_cast<double>(std::max(t, 1))) / count);
}

/// Position of the first maximum; +inf entries tie among themselves and the
/// first (lowest stable arm order) wins.
inline std::size_t first_argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

/// Top-m by index, at most one resource per individual, within remaining budgets.
inline std::vector<std::size_t> top_m_dedup(const std::vector<Action>& eligible, const std::vector<double>& index,
                                            int m, std::vector<int> budgets) {
  std::vector<std::size_t> order(eligible.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return index[a] > index[b]; });
  std::vector<std::size_t> out;
  std::vector<IndividualId> taken;
  for (std::size_t j : order) {
    if (static_cast<int>(out.size()) >= m) break;
    const auto& a = eligible[j];
    if (std::find(taken.begin(), taken.end(), a.individual) != taken.end()) continue;
    if (budgets[static_cast<std::size_t>(a.resource)] <= 0) continue;
    --budgets[static_cast<std::size_t>(a.resource)];
    taken.push_back(a.individual);
    out.push_back(j);
  }
  return out;
}

inline double rescale(double y, double lo, double hi, long& clipped) {
  double v = (y - lo) / (hi - lo);
  if (v < 0.0 || v > 1.0) {
    ++clipped;
    v = std::clamp(v, 0.0, 1.0);
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct ArmStatistics {
  long count = 0;
  double sum = 0.0;
  double mean() const noexcept { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
};

/// Each (individual, resource) pair is an arm.
class UcbPolicy : public Policy {
 public:
  explicit UcbPolicy(std::shared_ptr<const PolicyContext> ctx)
      : ctx_(std::move(ctx)), stats_(static_cast<std::size_t>(ctx_->n_individuals() * ctx_->n_resources)) {}

  std::string_view name() const noexcept override { return "ucb"; }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    std::vector<double> idx(view.eligible.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = stats_[arm_index(view.eligible[j], ctx_->n_resources)];
      idx[j] = detail::ucb_index(s.mean(), static_cast<double>(s.count), view.round);
    }
    const auto j = detail::first_argmax(idx);
    d.actions.push_back(view.eligible[j]);
    d.predicted.push_back(stats_[arm_index(view.eligible[j], ctx_->n_resources)].mean());
    credit_.record(d.actions);
    return d;
  }

  void observe(int, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      auto& s = stats_[arm_index(a, ctx_->n_resources)];
      ++s.count;
      s.sum += share;
    });
  }

  const ArmStatistics& stats(const Action& a) const { return stats_[arm_index(a, ctx_->n_resources)]; }

 private:
  std::shared_ptr<const PolicyContext> ctx_;
  std::vector<ArmStatistics> stats_;
  NaiveCredit credit_;
};

/// Discounted UCB: sums decay by gamma per round, applied lazily.
class DucbPolicy : public Policy {
 public:
  DucbPolicy(std::shared_ptr<const PolicyContext> ctx, double gamma)
      : ctx_(std::move(ctx)), gamma_(gamma), arms_(static_cast<std::size_t>(ctx_->n_individuals() * ctx_->n_resources)) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ducb gamma must be in (0, 1]");
  }

  std::string_view name() const noexcept override { return "ducb"; }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    std::vector<double> idx(view.eligible.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = arms_[arm_index(view.eligible[j], ctx_->n_resources)];
      const double decay = std::pow(gamma_, view.round - s.last);
      const double n = s.count * decay;
      idx[j] = detail::ucb_index(n > 0.0 ? (s.sum * decay) / n : 0.0, n, view.round);
    }
    const auto j = detail::first_argmax(idx);
    d.actions.push_back(view.eligible[j]);
    d.predicted.push_back(0.0);
    credit_.record(d.actions);
    return d;
  }

  void observe(int round, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      auto& s = arms_[arm_index(a, ctx_->n_resources)];
      const double decay = std::pow(gamma_, round - s.last);
      s.count = s.count * decay + 1.0;
      s.sum = s.sum * decay + share;
      s.last = round;
    });
  }

 private:
  struct Discounted {
    double count = 0.0;
    double sum = 0.0;
    int last = 0;
  };
  std::shared_ptr<const PolicyContext> ctx_;
  double gamma_;
  std::vector<Discounted> arms_;
  NaiveCredit credit_;
};

/// Sliding-window UCB over observations from the last tau_w rounds.
class SwucbPolicy : public Policy {
 public:
  SwucbPolicy(std::shared_ptr<const PolicyContext> ctx, int window)
      : ctx_(std::move(ctx)), window_(window), arms_(static_cast<std::size_t>(ctx_->n_individuals() * ctx_->n_resources)) {
    if (window < 1) throw ConfigError("swucb window must be >= 1");
  }

  std::string_view name() const noexcept override { return "swucb"; }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    std::vector<double> idx(view.eligible.size());
    const int t_eff = std::min(view.round, window_);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto& obs = arms_[arm_index(view.eligible[j], ctx_->n_resources)];
      while (!obs.empty() && obs.front().first <= view.round - window_) obs.pop_front();
      long n = 0;
      double sum = 0.0;
      for (const auto& o : obs) {
        ++n;
        sum += o.second;
      }
      idx[j] = detail::ucb_index(n > 0 ? sum / static_cast<double>(n) : 0.0, static_cast<double>(n), t_eff);
    }
    const auto j = detail::first_argmax(idx);
    d.actions.push_back(view.eligible[j]);
    d.predicted.push_back(0.0);
    credit_.record(d.actions);
    return d;
  }

  void observe(int round, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      arms_[arm_index(a, ctx_->n_resources)].push_back({round, share});
    });
  }

 private:
  std::shared_ptr<const PolicyContext> ctx_;
  int window_;
  std::vector<std::deque<std::pair<int, double>>> arms_;
  NaiveCredit credit_;
};

/// Combinatorial UCB: top-m pair indices per round.
class CucbPolicy : public Policy {
 public:
  CucbPolicy(std::shared_ptr<const PolicyContext> ctx, int per_round)
      : ctx_(std::move(ctx)), m_(per_round), stats_(static_cast<std::size_t>(ctx_->n_individuals() * ctx_->n_resources)) {
    if (per_round < 1) throw ConfigError("cucb per-round count must be >= 1");
  }

  std::string_view name() const noexcept override { return "cucb"; }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    std::vector<double> idx(view.eligible.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = stats_[arm_index(view.eligible[j], ctx_->n_resources)];
      idx[j] = detail::ucb_index(s.mean(), static_cast<double>(s.count), view.round);
    }
    for (std::size_t j : detail::top_m_dedup(view.eligible, idx, m_, view.remaining_budgets)) {
      d.actions.push_back(view.eligible[j]);
      d.predicted.push_back(stats_[arm_index(view.eligible[j], ctx_->n_resources)].mean());
    }
    credit_.record(d.actions);
    return d;
  }

  void observe(int, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      auto& s = stats_[arm_index(a, ctx_->n_resources)];
      ++s.count;
      s.sum += share;
    });
  }

 private:
  std::shared_ptr<const PolicyContext> ctx_;
  int m_;
  std::vector<ArmStatistics> stats_;
  NaiveCredit credit_;
};

/// EXP3 over (individual, resource) arms restricted to the eligible set.
class Exp3Policy : public Policy {
 public:
  Exp3Policy(std::shared_ptr<const PolicyContext> ctx, double eta, Rng rng)
      : ctx_(std::move(ctx)), eta_(eta), rng_(rng),
        weights_(static_cast<std::size_t>(ctx_->n_individuals() * ctx_->n_resources), 1.0) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("exp3 eta must be in [0, 1]");
    if (!(ctx_->reward_hi > ctx_->reward_lo)) throw ConfigError("exp3 needs reward bounds lo < hi");
  }

  std::string_view name() const noexcept override { return "exp3"; }
  long clipped() const noexcept { return clipped_; }

  /// Sampling distribution over `eligible`.
  std::vector<double> probabilities(const std::vector<Action>& eligible) const {
    double total = 0.0;
    for (const auto& a : eligible) total += weights_[arm_index(a, ctx_->n_resources)];
    std::vector<double> p(eligible.size());
    const double uniform = 1.0 / static_cast<double>(eligible.size());
    for (std::size_t j = 0; j < p.size(); ++j)
      p[j] = (1.0 - eta_) * weights_[arm_index(eligible[j], ctx_->n_resources)] / total + eta_ * uniform;
    return p;
  }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    const auto p = probabilities(view.eligible);
    const double u = rng_.uniform();
    std::size_t j = 0;
    double acc = p[0];
    while (j + 1 < p.size() && u >= acc) acc += p[++j];
    d.actions.push_back(view.eligible[j]);
    d.predicted.push_back(0.0);
    credit_.record(d.actions);
    last_prob_ = p[j];
    last_size_ = view.eligible.size();
    return d;
  }

  void observe(int, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      const double r = detail::rescale(share, ctx_->reward_lo, ctx_->reward_hi, clipped_);
      const double est = r / last_prob_;
      weights_[arm_index(a, ctx_->n_resources)] *= std::exp(eta_ * est / static_cast<double>(last_size_));
    });
    const double mx = *std::max_element(weights_.begin(), weights_.end());
    if (mx > 1e100)
      for (double& w : weights_) w /= mx;
  }

 private:
  std::shared_ptr<const PolicyContext> ctx_;
  double eta_;
  Rng rng_;
  std::vector<double> weights_;
  NaiveCredit credit_;
  double last_prob_ = 1.0;
  std::size_t last_size_ = 1;
  long clipped_ = 0;
};

/// EXP3 over a fixed catalog of meta-policies; the drawn entry is expanded
/// to an allocation by random within-group selection.
class Mexp3Policy : public Policy {
 public:
  Mexp3Policy(std::shared_ptr<const PolicyContext> ctx, double eta, int catalog_size, Rng rng)
      : ctx_(std::move(ctx)), eta_(eta), rng_(rng) {
    if (catalog_size < 1) throw ConfigError("mexp3 catalog must be nonempty");
    if (!(ctx_->reward_hi > ctx_->reward_lo)) throw ConfigError("mexp3 needs reward bounds lo < hi");
    Rng cat = rng_.split("catalog");
    for (int j = 0; j < catalog_size; ++j) catalog_.push_back(sample_sub_simplex(ctx_->n_groups, ctx_->n_resources, cat));
    weights_.assign(catalog_.size(), 1.0);
  }

  Mexp3Policy(std::shared_ptr<const PolicyContext> ctx, double eta, std::vector<MetaPolicy> catalog, Rng rng)
      : ctx_(std::move(ctx)), eta_(eta), rng_(rng), catalog_(std::move(catalog)), weights_(catalog_.size(), 1.0) {
    if (catalog_.empty()) throw ConfigError("mexp3 catalog must be nonempty");
  }

  std::string_view name() const noexcept override { return "mexp3"; }

  std::vector<double> probabilities() const {
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    std::vector<double> p(weights_.size());
    for (std::size_t j = 0; j < p.size(); ++j)
      p[j] = (1.0 - eta_) * weights_[j] / total + eta_ / static_cast<double>(p.size());
    return p;
  }

  Decision select(const PolicyView& view) override {
    const auto p = probabilities();
    const double u = rng_.uniform();
    std::size_t j = 0;
    double acc = p[0];
    while (j + 1 < p.size() && u >= acc) acc += p[++j];
    last_arm_ = j;
    last_prob_ = p[j];
    Decision d = expand(catalog_[j], view);
    pending_ = !d.actions.empty();
    credit_.record(d.actions);
    return d;
  }

  void observe(int, double y) override {
    if (!pending_) return;
    // The meta-arm's reward is the per-action share of y(t).
    double share = 0.0;
    credit_.credit(y, [&](const Action&, double s) { share = s; });
    const double r = detail::rescale(share, ctx_->reward_lo, ctx_->reward_hi, clipped_);
    weights_[last_arm_] *= std::exp(eta_ * (r / last_prob_) / static_cast<double>(weights_.size()));
    const double mx = *std::max_element(weights_.begin(), weights_.end());
    if (mx > 1e100)
      for (double& w : weights_) w /= mx;
  }

  const std::vector<MetaPolicy>& catalog() const noexcept { return catalog_; }

 private:
  Decision expand(const MetaPolicy& z, const PolicyView& view) {
    const int K = ctx_->n_groups, R = ctx_->n_resources;
    const int h = ctx_->schedule.active_cohort(view.round);
    std::vector<int> sizes(static_cast<std::size_t>(K), 0);
    for (IndividualId i : ctx_->schedule.members(h)) ++sizes[static_cast<std::size_t>(ctx_->groups[static_cast<std::size_t>(i)])];
    std::vector<Action> pool = view.eligible;
    rng_.shuffle(pool.begin(), pool.end());
    std::vector<int> budgets = view.remaining_budgets;
    std::vector<int> quota(static_cast<std::size_t>(K * R));
    for (int k = 0; k < K; ++k)
      for (int r = 0; r < R; ++r)
        quota[static_cast<std::size_t>(k * R + r)] = cell_quota(z.at(k, r), static_cast<std::size_t>(sizes[static_cast<std::size_t>(k)]));
    Decision d;
    std::vector<IndividualId> taken;
    for (const auto& a : pool) {
      auto& q = quota[static_cast<std::size_t>(ctx_->groups[static_cast<std::size_t>(a.individual)] * R + a.resource)];
      if (q <= 0 || budgets[static_cast<std::size_t>(a.resource)] <= 0) continue;
      if (std::find(taken.begin(), taken.end(), a.individual) != taken.end()) continue;
      --q;
      --budgets[static_cast<std::size_t>(a.resource)];
      taken.push_back(a.individual);
      d.actions.push_back(a);
      d.predicted.push_back(0.0);
    }
    std::sort(d.actions.begin(), d.actions.end());
    return d;
  }

  std::shared_ptr<const PolicyContext> ctx_;
  double eta_;
  Rng rng_;
  std::vector<MetaPolicy> catalog_;
  std::vector<double> weights_;
  NaiveCredit credit_;
  std::size_t last_arm_ = 0;
  double last_prob_ = 1.0;
  bool pending_ = false;
  long clipped_ = 0;
};

/// Disjoint LinUCB with one ridge state per resource over the individual's
/// context (plus a bias term).
class LinUcbPolicy : public Policy {
 public:
  LinUcbPolicy(std::shared_ptr<const PolicyContext> ctx, double alpha) : ctx_(std::move(ctx)), alpha_(alpha) {
    const Eigen::Index d = dim();
    for (int r = 0; r < ctx_->n_resources; ++r) {
      a_inv_.push_back(Eigen::MatrixXd::Identity(d, d));
      b_.push_back(Eigen::VectorXd::Zero(d));
    }
  }

  std::string_view name() const noexcept override { return "linucb"; }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    std::vector<double> idx(view.eligible.size()), mean(view.eligible.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& a = view.eligible[j];
      const Eigen::VectorXd x = feature(a.individual);
      const auto r = static_cast<std::size_t>(a.resource);
      const Eigen::VectorXd theta = a_inv_[r] * b_[r];
      mean[j] = theta.dot(x);
      idx[j] = mean[j] + alpha_ * std::sqrt(std::max(0.0, x.dot(a_inv_[r] * x)));
    }
    const auto j = detail::first_argmax(idx);
    d.actions.push_back(view.eligible[j]);
    d.predicted.push_back(mean[j]);
    credit_.record(d.actions);
    return d;
  }

  void observe(int, double y) override {
    credit_.credit(y, [&](const Action& a, double share) {
      const Eigen::VectorXd x = feature(a.individual);
      const auto r = static_cast<std::size_t>(a.resource);
      const Eigen::VectorXd ax = a_inv_[r] * x;
      a_inv_[r] -= (ax * ax.transpose()) / (1.0 + x.dot(ax));  // Sherman-Morrison
      b_[r] += share * x;
    });
  }

 private:
  Eigen::Index dim() const { return ctx_->contexts.empty() ? 1 : ctx_->contexts.front().size() + 1; }

  Eigen::VectorXd feature(IndividualId i) const {
    Eigen::VectorXd x(dim());
    x(0) = 1.0;
    x.tail(x.size() - 1) = ctx_->contexts[static_cast<std::size_t>(i)];
    return x;
  }

  std::shared_ptr<const PolicyContext> ctx_;
  double alpha_;
  std::vector<Eigen::MatrixXd> a_inv_;
  std::vector<Eigen::VectorXd> b_;
  NaiveCredit credit_;
};

/// Constrained contextual UCB: one action per round by f-prediction plus
/// beta_t times the model's uncertainty, with kernel-aware credit.
class CcucbPolicy : public Policy {
 public:
  CcucbPolicy(std::shared_ptr<const PolicyContext> ctx, ExplorationSchedule beta, int refit_window, double min_mass)
      : ctx_(std::move(ctx)), beta_(beta), online_(*ctx_, refit_window, min_mass) {}

  std::string_view name() const noexcept override { return "ccucb"; }

  std::vector<ScoredCandidate> score_all(const PolicyView& view) const {
    std::vector<ScoredCandidate> out;
    const double beta = beta_(view.round);
    const auto& pred = online_.predictor();
    for (const auto& a : view.eligible) {
      const auto& x = ctx_->contexts[static_cast<std::size_t>(a.individual)];
      const GroupId k = ctx_->groups[static_cast<std::size_t>(a.individual)];
      ScoredCandidate sc{a.individual, a.resource, pred.predict(x, a.resource), 0.0, 0.0};
      sc.uncertainty = pred.uncertainty(x, a.resource, online_.cell_count(k, a.resource), view.round);
      sc.score = sc.predicted + beta * sc.uncertainty;
      out.push_back(sc);
    }
    return out;
  }

  Decision select(const PolicyView& view) override {
    Decision d;
    if (view.eligible.empty()) return d;
    const auto scored = score_all(view);
    std::size_t best = 0;
    for (std::size_t j = 1; j < scored.size(); ++j)
      if (scored[j].score > scored[best].score) best = j;
    d.actions.push_back({scored[best].individual, scored[best].resource});
    d.predicted.push_back(scored[best].predicted);
    online_.record(view.round, d.actions);
    return d;
  }

  void observe(int round, double y) override { online_.observe(round, y); }

 private:
  std::shared_ptr<const PolicyContext> ctx_;
  ExplorationSchedule beta_;
  OnlineModel online_;
};

}  // namespace metacub
