#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "metacub/delay_kernel.hpp"
#include "metacub/environment.hpp"
#include "metacub/errors.hpp"
#include "metacub/predictor.hpp"

namespace metacub {

/// Read-only facts a policy may use for a whole run. Ground-truth outcomes
/// are deliberately absent.
struct PolicyContext {
  int horizon = 1;
  int n_groups = 1;
  int n_resources = 1;
  std::vector<Eigen::VectorXd> contexts;  // per individual
  std::vector<GroupId> groups;            // per individual
  CohortSchedule schedule;
  std::vector<DelayKernel> kernels;       // per resource, for the active regime
  std::vector<int> budgets;
  bool budget_reset_per_cohort = false;
  double reward_lo = 0.0;  // configured outcome bounds (EXP3 rescaling)
  double reward_hi = 1.0;
  std::shared_ptr<const RewardPredictor> predictor;  // offline-fitted f

  int n_individuals() const noexcept { return static_cast<int>(contexts.size()); }
};

struct PolicyView {
  int round = 1;
  const std::vector<Action>& eligible;  // ascending (individual, resource)
  const std::vector<int>& remaining_budgets;
};

struct Decision {
  std::vector<Action> actions;
  std::vector<double> predicted;  // parallel to actions
};

/// Group x resource fractions chosen for one cohort (MetaCUB only).
struct CohortPlan {
  int cohort = 0;
  std::vector<double> cells;  // row-major by group
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const noexcept = 0;
  virtual Decision select(const PolicyView& view) = 0;
  /// Realized y(t) for the round whose decision was just applied.
  virtual void observe(int round, double y) = 0;
  virtual std::vector<CohortPlan> plans() const { return {}; }
};

struct ExplorationSchedule {
  enum class Kind { SqrtLog, Constant };
  Kind kind = Kind::SqrtLog;
  double scale = 1.0;

  double operator()(int t) const noexcept {
    if (kind == Kind::Constant) return scale;
    return scale * std::sqrt(std::log(std::max(t, 2)));
  }
};

// ---------------------------------------------------------------------------
// Credit assignment for blended delayed rewards.

/// y(t) is split equally over the most recent nonempty action set.
class NaiveCredit {
 public:
  void record(const std::vector<Action>& actions) {
    if (!actions.empty()) last_ = actions;
  }

  template <class Fn>
  void credit(double y, Fn&& fn) const {
    if (last_.empty()) return;
    const double share = y / static_cast<double>(last_.size());
    for (const auto& a : last_) fn(a, share);
  }

  const std::vector<Action>& last() const noexcept { return last_; }

 private:
  std::vector<Action> last_;
};

/// Each pending allocation receives the fraction K_a(t - u_a) / sum_b K_b(t - u_b)
/// of y(t); its base-reward estimate is credited / realized kernel mass.
class KernelCredit {
 public:
  struct Entry {
    int round = 0;
    Action action;
    double credited = 0.0;
    double mass = 0.0;
  };

  explicit KernelCredit(const std::vector<DelayKernel>* kernels = nullptr) : kernels_(kernels) {}

  void record(int round, const std::vector<Action>& actions) {
    for (const auto& a : actions) entries_.push_back({round, a, 0.0, 0.0});
  }

  void credit(int t, double y) {
    double total = 0.0;
    weights_.assign(entries_.size(), 0.0);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      if (e.round > t) continue;
      weights_[k] = (*kernels_)[static_cast<std::size_t>(e.action.resource)].at(t - e.round);
      total += weights_[k];
    }
    if (!(total > 0.0)) return;
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (weights_[k] == 0.0) continue;
      entries_[k].credited += weights_[k] / total * y;
      entries_[k].mass += weights_[k];
    }
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  const std::vector<DelayKernel>* kernels_;
  std::vector<Entry> entries_;
  std::vector<double> weights_;
};

/// Keeps a private copy of f and refits it every `window` rounds with the
/// kernel-credited estimates whose realized mass has reached `min_mass`.
class OnlineModel {
 public:
  OnlineModel() = default;
  OnlineModel(const PolicyContext& ctx, int window, double min_mass)
      : ctx_(&ctx), credit_(&ctx.kernels), window_(window), min_mass_(min_mass),
        cell_counts_(static_cast<std::size_t>(ctx.n_groups * ctx.n_resources), 0) {
    if (!ctx.predictor) throw ConfigError("policy requires a fitted outcome model");
    if (window < 1) throw ConfigError("refit window must be >= 1");
    predictor_ = *ctx.predictor;
  }

  const RewardPredictor& predictor() const noexcept { return predictor_; }

  long cell_count(GroupId k, ResourceId r) const {
    return cell_counts_[static_cast<std::size_t>(k * ctx_->n_resources + r)];
  }

  void record(int round, const std::vector<Action>& actions) {
    credit_.record(round, actions);
    for (const auto& a : actions)
      ++cell_counts_[static_cast<std::size_t>(ctx_->groups[static_cast<std::size_t>(a.individual)] *
                                                  ctx_->n_resources +
                                              a.resource)];
  }

  void observe(int round, double y) {
    credit_.credit(round, y);
    if (round % window_ != 0) return;
    std::vector<Observation> extra;
    for (const auto& e : credit_.entries())
      if (e.mass >= min_mass_ && e.mass > 0.0)
        extra.push_back({ctx_->contexts[static_cast<std::size_t>(e.action.individual)], e.action.resource,
                         e.credited / e.mass});
    predictor_.refit(extra);
  }

 private:
  const PolicyContext* ctx_ = nullptr;
  RewardPredictor predictor_;
  KernelCredit credit_;
  int window_ = 25;
  double min_mass_ = 0.5;
  std::vector<long> cell_counts_;
};

inline std::size_t arm_index(const Action& a, int n_resources) noexcept {
  return static_cast<std::size_t>(a.individual) * static_cast<std::size_t>(n_resources) +
         static_cast<std::size_t>(a.resource);
}

}  // namespace metacub
