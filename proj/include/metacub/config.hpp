#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "metacub/data_io.hpp"
#include "metacub/delay_kernel.hpp"
#include "metacub/errors.hpp"
#include "metacub/meta_level.hpp"
#include "metacub/outcome_model.hpp"

namespace metacub {

using Json = nlohmann::ordered_json;

inline constexpr const char* kConfigSchema = "metacub-experiment/1";

inline const std::vector<std::string>& policy_keys() {
  static const std::vector<std::string> keys{"ucb",  "linucb", "cucb",  "exp3",   "mexp3",
                                             "ducb", "swucb",  "ccucb", "metacub"};
  return keys;
}

enum class Regime { Immediate, Delayed };

inline std::string to_string(Regime r) { return r == Regime::Immediate ? "immediate" : "delayed"; }

inline Regime parse_regime(const std::string& s) {
  if (s == "immediate") return Regime::Immediate;
  if (s == "delayed") return Regime::Delayed;
  throw ConfigError("unknown regime '" + s + "'");
}

/// Kernel of one resource: a single Beta or a mixture of Betas.
struct KernelSpec {
  std::vector<MixtureComponent> components;

  DelayKernel build(int horizon, ResourceId r) const {
    if (components.size() == 1) return make_delay_kernel(components.front().params, horizon, r);
    return make_mixture_kernel(components, horizon, r);
  }
};

struct KernelFamily {
  std::string name;
  std::vector<KernelSpec> per_resource;
};

struct ResourceConfig {
  int budget = 0;
  std::vector<int> cooldown{1, 2, 3};
};

struct PolicyConfig {
  std::string name;
  Json params = Json::object();
  std::vector<Regime> regimes;  // regimes this policy runs in

  double number(const std::string& key, double fallback) const {
    return params.contains(key) ? params.at(key).get<double>() : fallback;
  }
};

struct DatasetConfig {
  std::optional<SyntheticSpec> synthetic;
  std::string csv_path;
  DatasetSchema schema;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 1;
  bool group_indicators = true;
};

struct ExperimentConfig {
  int horizon = 500;
  int block_length = 100;
  std::vector<std::uint64_t> seeds;
  bool budget_reset_per_cohort = false;
  std::optional<double> noise_sd;  // defaults to the synthetic noise or the oracle residual
  std::optional<std::pair<double, double>> reward_bounds;
  DatasetConfig dataset;
  ModelKind model_kind = ModelKind::Ridge;
  ModelOptions model_options;
  std::vector<ResourceConfig> resources;
  std::vector<KernelFamily> kernel_families;
  std::vector<Regime> regimes{Regime::Immediate, Regime::Delayed};
  std::vector<PolicyConfig> policies;
  std::string output_dir = "report";
  int workers = 0;  // 0 = hardware concurrency
  Json source;      // the parsed document, echoed into the report
};

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline std::vector<Regime> default_regimes(const std::string& policy) {
  // Evaluation matrix: combinatorial baselines immediate-only, forgetting
  // baselines delayed-only, everything else in both regimes.
  if (policy == "cucb" || policy == "mexp3") return {Regime::Immediate};
  if (policy == "ducb" || policy == "swucb") return {Regime::Delayed};
  return {Regime::Immediate, Regime::Delayed};
}

inline KernelSpec parse_kernel(const Json& j) {
  KernelSpec k;
  if (j.contains("mixture")) {
    for (const auto& c : j.at("mixture"))
      k.components.push_back({c.at("weight").get<double>(), {c.at("alpha").get<double>(), c.at("beta").get<double>()}});
  } else {
    k.components.push_back({1.0, {j.at("alpha").get<double>(), j.at("beta").get<double>()}});
  }
  return k;
}

inline SyntheticSpec parse_synthetic(const Json& j) {
  SyntheticSpec s;
  s.n_individuals = get_or(j, "n_individuals", s.n_individuals);
  s.n_groups = get_or(j, "n_groups", s.n_groups);
  s.n_features = get_or(j, "n_features", s.n_features);
  s.n_resources = get_or(j, "n_resources", s.n_resources);
  s.noise_sd = get_or(j, "noise_sd", s.noise_sd);
  s.slope_scale = get_or(j, "slope_scale", s.slope_scale);
  s.group_slope_scale = get_or(j, "group_slope_scale", s.group_slope_scale);
  s.quadratic = get_or(j, "quadratic", s.quadratic);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  const auto kind = get_or<std::string>(j, "outcome_kind", "continuous");
  if (kind != "continuous" && kind != "binary") throw ConfigError("outcome_kind must be continuous or binary");
  s.outcome_kind = kind == "binary" ? OutcomeKind::Binary : OutcomeKind::Continuous;
  if (j.contains("effects")) {
    // Either a flat list or a list of per-group rows.
    for (const auto& v : j.at("effects")) {
      if (v.is_array())
        for (const auto& x : v) s.effects.push_back(x.get<double>());
      else
        s.effects.push_back(v.get<double>());
    }
  }
  return s;
}

inline DatasetSchema parse_schema(const Json& j) {
  DatasetSchema s;
  s.id_column = get_or<std::string>(j, "id_column", s.id_column);
  s.group_column = get_or<std::string>(j, "group_column", s.group_column);
  s.outcome_column = get_or<std::string>(j, "outcome_column", s.outcome_column);
  s.resource_column = get_or<std::string>(j, "resource_column", "");
  s.feature_columns = get_or<std::vector<std::string>>(j, "feature_columns", {});
  s.truth_columns = get_or<std::vector<std::string>>(j, "truth_columns", {});
  const auto kind = get_or<std::string>(j, "outcome_kind", "continuous");
  if (kind != "continuous" && kind != "binary") throw ConfigError("outcome_kind must be continuous or binary");
  s.outcome_kind = kind == "binary" ? OutcomeKind::Binary : OutcomeKind::Continuous;
  return s;
}

}  // namespace detail

/// Parses and validates; every problem found is reported in one ConfigError.
inline ExperimentConfig parse_config(const Json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  c.source = j;
  try {
    if (!j.is_object()) throw ConfigError("config must be an object");
    if (j.value("schema", std::string{}) != kConfigSchema)
      errors.push_back(std::string("schema must be \"") + kConfigSchema + "\"");
    c.horizon = detail::get_or(j, "horizon", c.horizon);
    c.block_length = detail::get_or(j, "block_length", c.block_length);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      if (s.is_object()) {
        const auto start = detail::get_or<std::uint64_t>(s, "start", 1);
        const auto count = detail::get_or<int>(s, "count", 0);
        for (int i = 0; i < count; ++i) c.seeds.push_back(start + static_cast<std::uint64_t>(i));
      } else {
        c.seeds = s.get<std::vector<std::uint64_t>>();
      }
    }
    c.budget_reset_per_cohort = detail::get_or(j, "budget_reset_per_cohort", false);
    if (j.contains("noise_sd")) c.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("reward_bounds")) {
      const auto b = j.at("reward_bounds").get<std::vector<double>>();
      if (b.size() != 2) errors.push_back("reward_bounds must have two entries");
      else c.reward_bounds = std::pair{b[0], b[1]};
    }
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
    c.workers = detail::get_or(j, "workers", 0);

    if (!j.contains("dataset")) {
      errors.push_back("dataset section is required");
    } else {
      const auto& d = j.at("dataset");
      if (d.contains("synthetic")) c.dataset.synthetic = detail::parse_synthetic(d.at("synthetic"));
      c.dataset.csv_path = detail::get_or<std::string>(d, "csv", "");
      if (d.contains("schema")) c.dataset.schema = detail::parse_schema(d.at("schema"));
      c.dataset.train_fraction = detail::get_or(d, "train_fraction", c.dataset.train_fraction);
      c.dataset.split_seed = detail::get_or<std::uint64_t>(d, "split_seed", c.dataset.split_seed);
      c.dataset.group_indicators = detail::get_or(d, "group_indicators", true);
      if (c.dataset.synthetic.has_value() == !c.dataset.csv_path.empty())
        errors.push_back("dataset needs exactly one of 'synthetic' or 'csv'");
      if (!c.dataset.csv_path.empty() && c.dataset.schema.feature_columns.empty())
        errors.push_back("csv dataset needs a schema with feature_columns");
    }

    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model_kind = parse_model_kind(detail::get_or<std::string>(m, "kind", "ridge"));
      auto& o = c.model_options;
      o.lambda = detail::get_or(m, "lambda", o.lambda);
      o.logistic_l2 = detail::get_or(m, "logistic_l2", o.logistic_l2);
      o.mlp_hidden = detail::get_or(m, "hidden", o.mlp_hidden);
      o.mlp_step = detail::get_or(m, "step", o.mlp_step);
      o.mlp_epochs = detail::get_or(m, "epochs", o.mlp_epochs);
      o.mlp_adam = detail::get_or(m, "adam", o.mlp_adam);
      o.seed = detail::get_or<std::uint64_t>(m, "seed", o.seed);
    }

    for (const auto& r : j.value("resources", Json::array())) {
      ResourceConfig rc;
      rc.budget = detail::get_or(r, "budget", 0);
      rc.cooldown = detail::get_or<std::vector<int>>(r, "cooldown", rc.cooldown);
      c.resources.push_back(rc);
    }
    if (j.contains("kernel_types"))
      for (const auto& [name, list] : j.at("kernel_types").items()) {
        KernelFamily f{name, {}};
        for (const auto& k : list) f.per_resource.push_back(detail::parse_kernel(k));
        c.kernel_families.push_back(std::move(f));
      }
    if (j.contains("regimes")) {
      c.regimes.clear();
      for (const auto& r : j.at("regimes")) c.regimes.push_back(parse_regime(r.get<std::string>()));
    }
    for (const auto& p : j.value("policies", Json::array())) {
      PolicyConfig pc;
      if (p.is_string()) {
        pc.name = p.get<std::string>();
      } else {
        pc.name = p.at("name").get<std::string>();
        pc.params = p;
      }
      const auto& keys = policy_keys();
      if (std::find(keys.begin(), keys.end(), pc.name) == keys.end()) {
        errors.push_back("unknown policy '" + pc.name + "'");
        continue;
      }
      if (pc.params.contains("regimes")) {
        for (const auto& r : pc.params.at("regimes")) pc.regimes.push_back(parse_regime(r.get<std::string>()));
      } else {
        pc.regimes = detail::default_regimes(pc.name);
      }
      c.policies.push_back(std::move(pc));
    }
  } catch (const nlohmann::json::exception& e) {
    errors.push_back(std::string("malformed config: ") + e.what());
  } catch (const Error& e) {
    errors.push_back(e.what());
  }

  if (c.seeds.empty()) errors.push_back("seeds must be nonempty");
  if (c.block_length < 1) errors.push_back("block_length must be >= 1");
  if (c.horizon < c.block_length) errors.push_back("horizon must be >= block_length");
  if (c.resources.empty()) errors.push_back("at least one resource is required");
  for (std::size_t r = 0; r < c.resources.size(); ++r) {
    if (c.resources[r].budget < 0) errors.push_back("resource " + std::to_string(r) + ": budget must be >= 0");
    if (c.resources[r].cooldown.empty()) errors.push_back("resource " + std::to_string(r) + ": cooldown support is empty");
    for (int v : c.resources[r].cooldown)
      if (v < 1 || v >= c.horizon)
        errors.push_back("resource " + std::to_string(r) + ": cooldown values must lie in [1, horizon)");
  }
  const bool delayed = std::find(c.regimes.begin(), c.regimes.end(), Regime::Delayed) != c.regimes.end();
  if (delayed && c.kernel_families.empty()) errors.push_back("delayed regime needs kernel_types");
  for (const auto& f : c.kernel_families) {
    if (f.per_resource.size() != c.resources.size())
      errors.push_back("kernel type '" + f.name + "' must list one kernel per resource");
    for (const auto& k : f.per_resource) try {
        (void)k.build(std::max(c.horizon, 1), 0);
      } catch (const Error& e) {
        errors.push_back("kernel type '" + f.name + "': " + e.what());
      }
  }
  if (c.policies.empty()) errors.push_back("at least one policy is required");
  if (c.dataset.synthetic) try {
      c.dataset.synthetic->validate();
      if (c.dataset.synthetic->n_resources != static_cast<int>(c.resources.size()))
        errors.push_back("synthetic n_resources must equal the number of resources");
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  if (!(c.dataset.train_fraction > 0.0 && c.dataset.train_fraction < 1.0))
    errors.push_back("train_fraction must be in (0, 1)");
  if (c.reward_bounds && !(c.reward_bounds->second > c.reward_bounds->first))
    errors.push_back("reward_bounds must satisfy lo < hi");
  for (const auto& p : c.policies) {
    if (p.name == "metacub") try {
        MetaOptimizerConfig m;
        m.iterations = static_cast<int>(p.number("meta_iterations", m.iterations));
        m.initial = static_cast<int>(p.number("meta_initial", m.initial));
        m.candidates = static_cast<int>(p.number("meta_candidates", m.candidates));
        m.rollouts = static_cast<int>(p.number("meta_rollouts", m.rollouts));
        m.validate();
      } catch (const Error& e) {
        errors.push_back(std::string("metacub: ") + e.what());
      }
    if (p.name == "ducb" && !(p.number("gamma", 0.95) > 0.0 && p.number("gamma", 0.95) <= 1.0))
      errors.push_back("ducb: gamma must be in (0, 1]");
    if (p.name == "swucb" && p.number("window", 50) < 1) errors.push_back("swucb: window must be >= 1");
  }

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace metacub
