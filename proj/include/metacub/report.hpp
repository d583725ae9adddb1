#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "metacub/config.hpp"
#include "metacub/data_io.hpp"
#include "metacub/environment.hpp"
#include "metacub/experiment.hpp"
#include "metacub/metrics.hpp"

namespace metacub {

namespace fs = std::filesystem;

inline std::string fmt(double v) { return csv::format_value(v); }

inline std::ofstream open_report(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline void write_reports(const fs::path& dir, const ExperimentConfig& cfg, const World& w,
                          const std::vector<CellResult>& cells) {
  fs::create_directories(dir);
  const auto& labels = w.group_labels;
  auto id = [](const CellKey& k) {
    return k.policy + ',' + to_string(k.regime) + ',' + k.kernel_type;
  };

  {
    auto out = open_report(dir / "regret.csv");
    out << "seed,policy,regime,kernel_type,round,y,cum_regret\n";
    for (const auto& c : cells)
      for (const auto& p : c.regret.points)
        out << c.key.seed << ',' << id(c.key) << ',' << p.round << ',' << fmt(p.y) << ',' << fmt(p.cum_regret) << '\n';
  }
  {
    auto out = open_report(dir / "fairness.csv");
    out << "policy,regime,kernel_type,seed,group,count,size,ratio\n";
    for (const auto& c : cells)
      for (const auto& g : c.fairness)
        out << id(c.key) << ',' << c.key.seed << ',' << labels[static_cast<std::size_t>(g.group)] << ',' << g.count << ','
            << g.size << ',' << fmt(g.ratio) << '\n';
  }
  {
    auto out = open_report(dir / "disparity.csv");
    out << "policy,regime,kernel_type,seed,disparity\n";
    for (const auto& c : cells) out << id(c.key) << ',' << c.key.seed << ',' << fmt(c.disparity) << '\n';
  }
  {
    auto out = open_report(dir / "allocations.csv");
    out << "seed,policy,regime,kernel_type,round,individual_id,group,resource,base_reward,predicted_reward,"
           "drawn_cooldown\n";
    for (const auto& c : cells)
      for (const auto& e : c.events)
        out << c.key.seed << ',' << id(c.key) << ',' << e.round << ',' << e.individual << ','
            << labels[static_cast<std::size_t>(e.group)] << ',' << e.resource << ',' << fmt(e.base_reward) << ','
            << fmt(e.predicted_reward) << ',' << e.drawn_cooldown << '\n';
  }
  {
    auto out = open_report(dir / "cohorts.csv");
    out << "seed,individual_id,label,group,cohort\n";
    for (auto seed : cfg.seeds) {
      const auto schedule = schedule_for_seed(cfg, w, seed);
      for (const auto& p : w.population)
        out << seed << ',' << p.id << ',' << p.label << ',' << labels[static_cast<std::size_t>(p.group)] << ','
            << schedule.cohort_of(p.id) << '\n';
    }
  }
  {
    auto out = open_report(dir / "kernels.csv");
    out << "kernel_type,resource_id,tau,weight\n";
    for (const auto& f : cfg.kernel_families)
      for (const auto& k : regime_kernels(cfg, Regime::Delayed, f.name)) write_kernel_rows(out, f.name, k);
  }
  {
    auto out = open_report(dir / "metapolicy.csv");
    out << "seed,policy,regime,kernel_type,cohort,group,resource,fraction\n";
    const int R = w.n_resources;
    for (const auto& c : cells)
      for (const auto& plan : c.plans)
        for (std::size_t j = 0; j < plan.cells.size(); ++j)
          out << c.key.seed << ',' << id(c.key) << ',' << plan.cohort << ',' << labels[j / static_cast<std::size_t>(R)]
              << ',' << j % static_cast<std::size_t>(R) << ',' << fmt(plan.cells[j]) << '\n';
  }
  {
    auto out = open_report(dir / "model.csv");
    out << "split,group,n,metric,value\n";
    for (const auto& m : w.model_metrics)
      out << m.split << ',' << m.group << ',' << m.n << ',' << m.metric << ',' << fmt(m.value) << '\n';
  }
  {
    // Per (policy, regime, kernel_type) over seeds, in grid order.
    auto out = open_report(dir / "summary.csv");
    out << "policy,regime,kernel_type,runs,final_regret_mean,final_regret_std,max_fairness_dev_mean,disparity_mean,"
           "allocations_mean,violations\n";
    std::vector<std::string> order;
    std::map<std::string, std::vector<const CellResult*>> by;
    for (const auto& c : cells) {
      if (!by.count(id(c.key))) order.push_back(id(c.key));
      by[id(c.key)].push_back(&c);
    }
    for (const auto& k : order) {
      std::vector<double> regret, dev, disp, alloc;
      std::size_t violations = 0;
      for (const auto* c : by[k]) {
        regret.push_back(c->regret.final_regret());
        double d = 0.0;
        for (const auto& g : c->fairness) d = std::max(d, std::fabs(g.ratio - 1.0));
        dev.push_back(d);
        disp.push_back(c->disparity);
        alloc.push_back(static_cast<double>(c->events.size()));
        violations += c->violations.size();
      }
      const auto r = mean_std(regret);
      out << k << ',' << regret.size() << ',' << fmt(r.mean) << ',' << fmt(r.std) << ',' << fmt(mean_std(dev).mean) << ','
          << fmt(mean_std(disp).mean) << ',' << fmt(mean_std(alloc).mean) << ',' << violations << '\n';
    }
  }
  {
    auto out = open_report(dir / "config.json");
    out << cfg.source.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Audit of a written report directory.

struct RunTrace {
  std::uint64_t seed = 0;
  std::string policy, regime, kernel_type;
  std::vector<AllocationEvent> events;
};

struct ReportAudit {
  std::size_t runs = 0;
  std::vector<std::pair<std::string, Violation>> violations;  // (run id, violation)
};

inline long parse_long(const std::string& s, const std::string& where) {
  auto v = csv::parse_double(s);
  if (!v || *v != std::floor(*v)) throw ParseError(where + ": expected an integer, got '" + s + "'");
  return static_cast<long>(*v);
}

inline ReportAudit audit_report(const fs::path& dir) {
  const ExperimentConfig cfg = load_config((dir / "config.json").string());
  const auto cohorts = csv::read_file((dir / "cohorts.csv").string());
  const auto c_seed = cohorts.column("seed"), c_id = cohorts.column("individual_id"), c_h = cohorts.column("cohort");
  std::map<std::uint64_t, std::vector<int>> cohort_of;
  for (std::size_t i = 0; i < cohorts.rows.size(); ++i) {
    const auto& row = cohorts.rows[i];
    const std::string where = "cohorts.csv row " + std::to_string(i + 2);
    auto& v = cohort_of[static_cast<std::uint64_t>(parse_long(row[c_seed], where))];
    const auto idx = static_cast<std::size_t>(parse_long(row[c_id], where));
    if (v.size() <= idx) v.resize(idx + 1, -1);
    v[idx] = static_cast<int>(parse_long(row[c_h], where));
  }

  const auto alloc = csv::read_file((dir / "allocations.csv").string());
  const auto a_seed = alloc.column("seed"), a_pol = alloc.column("policy"), a_reg = alloc.column("regime"),
             a_ker = alloc.column("kernel_type"), a_round = alloc.column("round"), a_id = alloc.column("individual_id"),
             a_res = alloc.column("resource"), a_cd = alloc.column("drawn_cooldown"),
             a_base = alloc.column("base_reward");
  std::vector<std::string> order;
  std::map<std::string, RunTrace> runs;
  for (std::size_t i = 0; i < alloc.rows.size(); ++i) {
    const auto& row = alloc.rows[i];
    const std::string where = "allocations.csv row " + std::to_string(i + 2);
    const std::string key = row[a_seed] + ',' + row[a_pol] + ',' + row[a_reg] + ',' + row[a_ker];
    auto [it, fresh] = runs.try_emplace(key);
    if (fresh) {
      order.push_back(key);
      it->second.seed = static_cast<std::uint64_t>(parse_long(row[a_seed], where));
    }
    AllocationEvent e;
    e.round = static_cast<int>(parse_long(row[a_round], where));
    e.individual = static_cast<IndividualId>(parse_long(row[a_id], where));
    e.resource = static_cast<ResourceId>(parse_long(row[a_res], where));
    e.drawn_cooldown = static_cast<int>(parse_long(row[a_cd], where));
    auto base = csv::parse_double(row[a_base]);
    if (!base) throw ParseError(where + ": bad base_reward");
    e.base_reward = *base;
    it->second.events.push_back(e);
  }

  ReportAudit out;
  for (const auto& key : order) {
    const auto& run = runs[key];
    AuditConfig ac;
    ac.horizon = cfg.horizon;
    ac.block_length = cfg.block_length;
    for (const auto& r : cfg.resources) ac.budgets.push_back(r.budget);
    ac.budget_reset_per_cohort = cfg.budget_reset_per_cohort;
    auto it = cohort_of.find(run.seed);
    if (it == cohort_of.end()) throw FormatError("cohorts.csv has no rows for seed " + std::to_string(run.seed));
    ac.cohort_of = it->second;
    for (auto& v : audit_trace(run.events, ac)) out.violations.push_back({key, std::move(v)});
    ++out.runs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG charts

struct Series {
  std::string label;
  std::vector<double> x, mean, lo, hi;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"};
  return colors[i % 10];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace detail

inline std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<Series>& series) {
  const double W = 720, H = 440, L = 70, Rm = 150, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.lo[i]);
      y1 = std::max(y1, s.hi[i]);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - Rm); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - Rm << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4, xv = x0 + (x1 - x0) * i / 4;
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(std::round(yv * 1000) / 1000) << "</text>\n";
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << fmt(std::round(xv * 100) / 100) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - Rm) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << detail::escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">"
    << detail::escape(ylabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = detail::palette(k);
    o << "<polygon fill=\"" << col << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << fmt(px(s.x[i])) << ',' << fmt(py(s.hi[i])) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;) o << fmt(px(s.x[i])) << ',' << fmt(py(s.lo[i])) << ' ';
    o << "\"/>\n<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << fmt(px(s.x[i])) << ',' << fmt(py(s.mean[i])) << ' ';
    o << "\"/>\n";
    o << "<rect x=\"" << W - Rm + 12 << "\" y=\"" << T + 18 * k << "\" width=\"12\" height=\"3\" fill=\"" << col << "\"/>\n";
    o << "<text x=\"" << W - Rm + 30 << "\" y=\"" << T + 18 * k + 5 << "\">" << detail::escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Mean +- 1 std regret band per policy, one chart per (regime, kernel type).
inline std::map<std::string, std::vector<Series>> regret_series(const csv::Table& t) {
  const auto c_seed = t.column("seed"), c_pol = t.column("policy"), c_reg = t.column("regime"),
             c_ker = t.column("kernel_type"), c_round = t.column("round"), c_cum = t.column("cum_regret");
  // chart -> policy -> round -> values over seeds
  std::map<std::string, std::vector<std::string>> policy_order;
  std::map<std::string, std::map<std::string, std::map<int, std::vector<double>>>> data;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string chart = row[c_reg] + "_" + row[c_ker];
    auto& pols = policy_order[chart];
    if (std::find(pols.begin(), pols.end(), row[c_pol]) == pols.end()) pols.push_back(row[c_pol]);
    auto v = csv::parse_double(row[c_cum]);
    auto r = csv::parse_double(row[c_round]);
    if (!v || !r || !csv::parse_double(row[c_seed])) throw FormatError("regret.csv row " + std::to_string(i + 2) + " is malformed");
    data[chart][row[c_pol]][static_cast<int>(*r)].push_back(*v);
  }
  std::map<std::string, std::vector<Series>> out;
  for (const auto& [chart, pols] : policy_order)
    for (const auto& p : pols) {
      Series s{p, {}, {}, {}, {}};
      for (const auto& [round, vals] : data[chart][p]) {
        const auto m = mean_std(vals);
        s.x.push_back(round);
        s.mean.push_back(m.mean);
        s.lo.push_back(m.mean - m.std);
        s.hi.push_back(m.mean + m.std);
      }
      out[chart].push_back(std::move(s));
    }
  return out;
}

inline std::map<std::string, std::vector<Series>> kernel_series(const csv::Table& t) {
  const auto c_type = t.column("kernel_type"), c_res = t.column("resource_id"), c_tau = t.column("tau"),
             c_w = t.column("weight");
  std::map<std::string, std::map<std::string, Series>> acc;
  std::map<std::string, std::vector<std::string>> order;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    auto tau = csv::parse_double(row[c_tau]);
    auto w = csv::parse_double(row[c_w]);
    if (!tau || !w) throw FormatError("kernels.csv row " + std::to_string(i + 2) + " is malformed");
    const std::string label = "resource " + row[c_res];
    auto& s = acc[row[c_type]][label];
    if (s.label.empty()) {
      s.label = label;
      order[row[c_type]].push_back(label);
    }
    s.x.push_back(*tau);
    s.mean.push_back(*w);
    s.lo.push_back(*w);
    s.hi.push_back(*w);
  }
  std::map<std::string, std::vector<Series>> out;
  for (auto& [type, labels] : order)
    for (const auto& l : labels) out[type].push_back(std::move(acc[type][l]));
  return out;
}

/// Writes regret_<regime>_<kernel>.svg and kernel_<type>.svg; returns the paths.
inline std::vector<fs::path> render_plots(const fs::path& dir) {
  std::vector<fs::path> written;
  const auto regret = csv::read_file((dir / "regret.csv").string());
  for (const auto& [chart, series] : regret_series(regret)) {
    const auto p = dir / ("regret_" + chart + ".svg");
    open_report(p) << line_chart_svg("Cumulative regret (" + chart + ")", "round", "cumulative regret", series);
    written.push_back(p);
  }
  if (fs::exists(dir / "kernels.csv")) {
    const auto kernels = csv::read_file((dir / "kernels.csv").string());
    for (const auto& [type, series] : kernel_series(kernels)) {
      const auto p = dir / ("kernel_" + type + ".svg");
      open_report(p) << line_chart_svg("Delay kernels (" + type + ")", "tau", "weight", series);
      written.push_back(p);
    }
  }
  return written;
}

}  // namespace metacub
