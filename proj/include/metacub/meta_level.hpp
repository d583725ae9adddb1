#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "metacub/errors.hpp"
#include "metacub/policy.hpp"
#include "metacub/rng.hpp"

namespace metacub {

/// Fractions z^k_r over group x resource cells on the sub-simplex sum <= 1.
struct MetaPolicy {
  int n_groups = 0;
  int n_resources = 0;
  std::vector<double> cells;  // row-major by group

  static constexpr double kSlack = 1e-9;

  double at(int k, int r) const { return cells[static_cast<std::size_t>(k * n_resources + r)]; }
  double& at(int k, int r) { return cells[static_cast<std::size_t>(k * n_resources + r)]; }
  double total() const noexcept { return std::accumulate(cells.begin(), cells.end(), 0.0); }

  bool feasible() const noexcept {
    if (cells.size() != static_cast<std::size_t>(n_groups * n_resources)) return false;
    for (double c : cells)
      if (!(c >= 0.0)) return false;
    return total() <= 1.0 + kSlack;
  }

  void validate() const {
    if (!feasible()) throw ParameterError("meta policy outside the sub-simplex");
  }

  /// Cell with the largest fraction; ties go to the lowest index.
  std::pair<int, int> argmax_cell() const {
    const auto it = std::max_element(cells.begin(), cells.end());
    const int idx = static_cast<int>(it - cells.begin());
    return {idx / n_resources, idx % n_resources};
  }
};

/// Uniform on {z >= 0 : sum z <= 1}: a symmetric Dirichlet(1, ..., 1) draw of
/// dim + 1 components with the slack component dropped.
inline MetaPolicy sample_sub_simplex(int n_groups, int n_resources, Rng& rng) {
  const int dim = n_groups * n_resources;
  if (dim < 1) throw ParameterError("meta policy dimension must be >= 1");
  std::vector<double> e(static_cast<std::size_t>(dim + 1));
  for (auto& v : e) v = rng.exponential();
  const double sum = std::accumulate(e.begin(), e.end(), 0.0);
  MetaPolicy z{n_groups, n_resources, std::vector<double>(static_cast<std::size_t>(dim))};
  for (int j = 0; j < dim; ++j) z.cells[static_cast<std::size_t>(j)] = e[static_cast<std::size_t>(j)] / sum;
  return z;
}

/// Model predictions for the members of one cohort, per group: rows are
/// members, columns are resources.
using CohortPredictions = std::vector<Eigen::MatrixXd>;

inline int cell_quota(double z, std::size_t group_size) noexcept {
  // Guard against z * n landing a hair under an integer.
  return static_cast<int>(std::floor(z * static_cast<double>(group_size) + 1e-9));
}

/// One stochastic rollout of the surrogate utility sum_k sum_r z^k_r mu^k_r(z).
inline double simulate_utility(const MetaPolicy& z, const CohortPredictions& groups, Rng& rng) {
  z.validate();
  if (groups.size() != static_cast<std::size_t>(z.n_groups)) throw ParameterError("group count mismatch");
  double total = 0.0;
  std::vector<Eigen::Index> order;
  for (int k = 0; k < z.n_groups; ++k) {
    const auto& preds = groups[static_cast<std::size_t>(k)];
    const auto n_k = static_cast<std::size_t>(preds.rows());
    order.resize(n_k);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order.begin(), order.end());
    std::size_t pos = 0;
    for (int r = 0; r < z.n_resources; ++r) {
      const auto n = static_cast<std::size_t>(cell_quota(z.at(k, r), n_k));
      if (n == 0) continue;
      double mu = 0.0;
      for (std::size_t j = pos; j < pos + n; ++j) mu += preds(order[j], r);
      mu /= static_cast<double>(n);
      pos += n;
      total += z.at(k, r) * mu;
    }
  }
  return total;
}

struct MetaOptimizerConfig {
  int iterations = 64;      // T_m
  int initial = 16;         // n_0
  int candidates = 64;      // |S|
  int rollouts = 8;         // B
  ExplorationSchedule beta{ExplorationSchedule::Kind::SqrtLog, 1.0};

  void validate() const {
    if (initial < 1) throw ConfigError("meta n0 must be >= 1");
    if (iterations < initial) throw ConfigError("meta T_m must be >= n0");
    if (candidates < 1) throw ConfigError("meta candidate set size must be >= 1");
    if (rollouts < 1) throw ConfigError("meta rollouts must be >= 1");
  }
};

struct MetaEvaluation {
  MetaPolicy policy;
  double mu = 0.0;
  double sigma = 0.0;
  double score = 0.0;
};

struct MetaRecord {
  MetaPolicy policy;
  double utility = 0.0;
};

struct MetaResult {
  MetaPolicy best;
  std::vector<MetaRecord> data;  // D in evaluation order
};

inline MetaEvaluation evaluate_candidate(MetaPolicy z, const CohortPredictions& groups, int rollouts, double beta,
                                         Rng rng) {
  std::vector<double> u(static_cast<std::size_t>(rollouts));
  for (auto& v : u) v = simulate_utility(z, groups, rng);
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / rollouts;
  double var = 0.0;
  for (double v : u) var += (v - mu) * (v - mu);
  const double sigma = rollouts > 1 ? std::sqrt(var / (rollouts - 1)) : 0.0;
  return {std::move(z), mu, sigma, mu + beta * sigma};
}

/// Index of the first maximal score.
inline std::size_t select_candidate(const std::vector<MetaEvaluation>& evals) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < evals.size(); ++j)
    if (evals[j].score > evals[best].score) best = j;
  return best;
}

using MetaProjection = std::function<MetaPolicy(const MetaPolicy&)>;

/// Random-candidate UCB search over the sub-simplex. Every sampled point is
/// passed through `project` (identity when empty) before evaluation.
inline MetaResult meta_optimize(const MetaOptimizerConfig& cfg, const CohortPredictions& groups, const Rng& rng,
                                const MetaProjection& project = {}) {
  cfg.validate();
  if (groups.empty()) throw ParameterError("meta optimization needs at least one group");
  const int K = static_cast<int>(groups.size());
  const int R = static_cast<int>(groups.front().cols());
  auto draw = [&](std::string_view stream, std::uint64_t idx) {
    Rng r = rng.split(stream, idx);
    MetaPolicy z = sample_sub_simplex(K, R, r);
    return project ? project(z) : z;
  };

  MetaResult out;
  for (int j = 0; j < cfg.initial; ++j) {
    MetaPolicy z = draw("initial", static_cast<std::uint64_t>(j));
    Rng r = rng.split("initial-eval", static_cast<std::uint64_t>(j));
    const double u = simulate_utility(z, groups, r);
    out.data.push_back({std::move(z), u});
  }
  std::vector<MetaEvaluation> evals(static_cast<std::size_t>(cfg.candidates));
  for (int tm = cfg.initial + 1; tm <= cfg.iterations; ++tm) {
    const double beta = cfg.beta(tm);
    for (int c = 0; c < cfg.candidates; ++c) {
      const auto idx = static_cast<std::uint64_t>(tm) * static_cast<std::uint64_t>(cfg.candidates) +
                       static_cast<std::uint64_t>(c);
      evals[static_cast<std::size_t>(c)] =
          evaluate_candidate(draw("candidate", idx), groups, cfg.rollouts, beta, rng.split("rollouts", idx));
    }
    MetaPolicy chosen = evals[select_candidate(evals)].policy;
    Rng r = rng.split("acquire-eval", static_cast<std::uint64_t>(tm));
    const double u = simulate_utility(chosen, groups, r);
    out.data.push_back({std::move(chosen), u});
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < out.data.size(); ++j)
    if (out.data[j].utility > out.data[best].utility) best = j;
  out.best = out.data[best].policy;
  return out;
}

// ---------------------------------------------------------------------------
// Equity band

/// Weight of cell (k, r) in the split of a cohort budget: z^k_r |I_k|, or 0
/// when the per-round quota floor(z^k_r |I_k|) is 0 and the cell can never
/// allocate.
inline double cell_weight(const MetaPolicy& z, int k, int r, const std::vector<int>& group_sizes) {
  const int n = group_sizes[static_cast<std::size_t>(k)];
  return cell_quota(z.at(k, r), static_cast<std::size_t>(n)) > 0 ? z.at(k, r) * n : 0.0;
}

/// Expected allocations per group when the cohort budget of each resource is
/// split across groups by cell weight.
inline std::vector<double> expected_group_allocations(const MetaPolicy& z, const std::vector<int>& group_sizes,
                                                      const std::vector<int>& cohort_budgets) {
  std::vector<double> a(static_cast<std::size_t>(z.n_groups), 0.0);
  for (int r = 0; r < z.n_resources; ++r) {
    double w = 0.0;
    for (int k = 0; k < z.n_groups; ++k) w += cell_weight(z, k, r, group_sizes);
    if (!(w > 0.0)) continue;
    for (int k = 0; k < z.n_groups; ++k)
      a[static_cast<std::size_t>(k)] += cohort_budgets[static_cast<std::size_t>(r)] * cell_weight(z, k, r, group_sizes) / w;
  }
  return a;
}

/// True when every group's share of expected allocations is within a
/// relative band `eps` of its population share.
inline bool within_equity_band(const MetaPolicy& z, const std::vector<int>& group_sizes,
                               const std::vector<int>& cohort_budgets, double eps) {
  const auto a = expected_group_allocations(z, group_sizes, cohort_budgets);
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  const double n = std::accumulate(group_sizes.begin(), group_sizes.end(), 0.0);
  if (!(total > 0.0)) return true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (group_sizes[k] == 0) continue;
    const double ratio = (a[k] / total) / (group_sizes[k] / n);
    if (std::fabs(ratio - 1.0) > eps) return false;
  }
  return true;
}

/// Mixes z toward the uniform point of the same total mass with the smallest
/// weight (on a 1/20 grid) that lands inside the equity band.
inline MetaPolicy equity_project(const MetaPolicy& z, const std::vector<int>& group_sizes,
                                 const std::vector<int>& cohort_budgets, double eps) {
  const double u = z.total() / static_cast<double>(z.cells.size());
  for (int step = 0; step <= 20; ++step) {
    const double lambda = step / 20.0;
    MetaPolicy m = z;
    for (double& c : m.cells) c = (1.0 - lambda) * c + lambda * u;
    if (step == 20 || within_equity_band(m, group_sizes, cohort_budgets, eps)) return m;
  }
  return z;
}

}  // namespace metacub

namespace metacub {

/// Largest-remainder split of `total` units in proportion to `weights`;
/// remainder ties go to the lowest index. All-zero weights give all zeros.
inline std::vector<int> apportion(int total, const std::vector<double>& weights) {
  std::vector<int> out(weights.size(), 0);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0) || total <= 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double exact = total * weights[j] / sum;
    out[j] = static_cast<int>(std::floor(exact));
    assigned += out[j];
    rem.push_back({exact - out[j], j});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total && j < rem.size(); ++j, ++assigned) ++out[rem[j].second];
  return out;
}

}  // namespace metacub
