#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "metacub/all.hpp"

namespace fs = std::filesystem;
using namespace metacub;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override, int workers, bool plots) {
  ExperimentConfig cfg = load_config(config_path);
  const fs::path out = out_override.empty() ? fs::path(cfg.output_dir) : fs::path(out_override);
  const auto start = std::chrono::steady_clock::now();
  const World world = build_world(cfg);
  for (const auto& w : world.warnings) std::cerr << "warning: " << w << '\n';
  const int n_workers = workers > 0 ? workers : worker_count(cfg);
  const auto cells = run_grid(cfg, world, n_workers);
  write_reports(out, cfg, world, cells);
  if (plots) render_plots(out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::size_t bad = 0;
  for (const auto& c : cells) {
    if (c.violations.empty()) continue;
    ++bad;
    std::cerr << "audit: " << c.violations.size() << " violation(s) in run seed=" << c.key.seed
              << " policy=" << c.key.policy << " regime=" << to_string(c.key.regime)
              << " kernel_type=" << c.key.kernel_type << "; trace: " << (out / "allocations.csv").string() << '\n';
  }
  std::printf("%zu runs in %.1f s, report written to %s\n", cells.size(), secs, out.string().c_str());
  return bad == 0 ? 0 : 3;
}

int cmd_audit(const std::string& dir) {
  const auto audit = audit_report(dir);
  for (const auto& [run, v] : audit.violations)
    std::printf("%s: %s at round %d (individual %d, resource %d): %s\n", run.c_str(),
                std::string(to_string(v.kind)).c_str(), v.round, v.individual, v.resource, v.detail.c_str());
  if (audit.violations.empty()) {
    std::printf("clean (%zu runs)\n", audit.runs);
    return 0;
  }
  std::printf("%zu violation(s) across %zu runs\n", audit.violations.size(), audit.runs);
  return 1;
}

int cmd_synth(const std::string& spec_path, const std::string& out_path) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open " + spec_path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec is not valid JSON: ") + e.what());
  }
  const SyntheticSpec spec = detail::parse_synthetic(j.contains("synthetic") ? j.at("synthetic") : j);
  const Dataset ds = generate_synthetic(spec);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  write_dataset(out, ds);
  std::printf("wrote %zu rows to %s\n", ds.rows.size(), out_path.c_str());
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  std::printf("ok: %zu runs (%zu policies, %zu seeds)\n", experiment_grid(cfg).size(), cfg.policies.size(),
              cfg.seeds.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-level contextual bandit simulator for resource allocation under delayed feedback"};
  app.require_subcommand(1);

  std::string config, out, dir, spec, csv_out;
  int workers = 0;
  bool plots = false;
  auto* run = app.add_subcommand("run", "run an experiment grid and write the report");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("-o,--out", out, "report directory (overrides output_dir)");
  run->add_option("-j,--workers", workers, "parallel runs (default: METACUB_WORKERS or cores)");
  run->add_flag("--plots", plots, "also render SVG charts");

  auto* plot = app.add_subcommand("plot", "render SVG charts from a report directory");
  plot->add_option("report_dir", dir)->required();

  auto* audit = app.add_subcommand("audit", "check a report's allocation log against the constraints");
  audit->add_option("report_dir", dir)->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset CSV");
  synth->add_option("spec", spec, "synthetic spec (JSON)")->required();
  synth->add_option("out", csv_out, "output CSV")->required();

  auto* validate = app.add_subcommand("validate", "validate a config without running it");
  validate->add_option("config", config)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, workers, plots);
    if (*plot) {
      for (const auto& p : render_plots(dir)) std::printf("%s\n", p.string().c_str());
      return 0;
    }
    if (*audit) return cmd_audit(dir);
    if (*synth) return cmd_synth(spec, csv_out);
    if (*validate) return cmd_validate(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
