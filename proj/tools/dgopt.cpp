// dgopt: evaluate, optimize and analyse DG placements on radial feeders.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgopt/dgopt.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> n_dg;
  std::optional<std::size_t> pop_size;
  std::optional<int> max_iter;
  std::string placements;
  std::string out;
};

struct OracleOptions {
  double grid_step = 0.1;
  std::string buses;
  std::string sizes;
  std::optional<double> cap;
  bool table = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override market.seed (master seed for stats)");
  cmd->add_option("--n-dg", o.n_dg, "Override the number of DGs (default 3)");
  cmd->add_option("--pop-size", o.pop_size, "Override market.pop_size (default 50)");
  cmd->add_option("--max-iter", o.max_iter, "Override market.max_iter (default 50)");
  cmd->add_option("--out", o.out, "Write CSV output to this path");
}

dgopt::Scenario load(const CommonOptions& o) {
  auto cfg = dgopt::load_scenario_config(o.config);
  if (o.seed) cfg.market.seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.n_dg) cfg.n_dg = *o.n_dg;
  if (o.pop_size) cfg.market.pop_size = *o.pop_size;
  if (o.max_iter) cfg.market.max_iter = *o.max_iter;
  cfg.validate();
  return dgopt::Scenario::load(cfg);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dgopt::ConfigError("cannot write " + path);
  return out;
}

void echo_config(const dgopt::Scenario& s, const std::string& out) {
  const auto j = dgopt::to_json(s.config);
  std::cout << "Resolved configuration:\n" << j.dump(2) << "\n\n";
  if (!out.empty()) open_out(out + ".config.json") << j.dump(2) << '\n';
}

void print_objective_table(const std::vector<std::pair<std::string, dgopt::ObjectiveValues>>& rows,
                           double baseline_f1) {
  std::cout << std::left << std::setw(14) << "Case" << std::right << std::setw(10) << "F1 (pu)"
            << std::setw(10) << "F2 (pu)" << std::setw(10) << "VSI (pu)" << std::setw(10)
            << "F3 (pu)" << std::setw(10) << "Penalty" << std::setw(10) << "Obj"
            << std::setw(12) << "Loss red %" << '\n';
  std::cout << std::fixed;
  for (const auto& [label, v] : rows) {
    std::cout << std::left << std::setw(14) << label << std::right << std::setprecision(4)
              << std::setw(10) << v.f1 << std::setw(10) << v.f2 << std::setw(10) << v.vsi_min
              << std::setw(10) << v.f3 << std::setw(10) << v.penalty << std::setw(10) << v.of
              << std::setprecision(2) << std::setw(12) << dgopt::loss_reduction(baseline_f1, v.f1)
              << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
}

void print_placements(const std::vector<dgopt::DgPlacement>& placements) {
  std::cout << "Location  Size (MW)\n";
  for (const auto& p : placements) {
    std::cout << std::setw(8) << p.bus << "  " << std::fixed << std::setprecision(4) << p.p_mw
              << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
}

void print_violations(const dgopt::PenaltyResult& limits) {
  if (limits.violations.empty()) return;
  std::cout << limits.violations.size() << " operating-limit violation(s):";
  for (const auto& v : limits.violations) {
    const char* what = v.kind == dgopt::LimitViolation::Kind::kOverCurrent ? "branch " : "bus ";
    const auto index = v.kind == dgopt::LimitViolation::Kind::kOverCurrent ? v.index + 1 : v.index;
    std::cout << ' ' << what << index << '=' << std::setprecision(5) << v.value;
  }
  std::cout << '\n';
}

int cmd_evaluate(const CommonOptions& o) {
  const auto s = load(o);
  echo_config(s, o.out);
  const auto base = s.evaluate({});
  std::vector<std::pair<std::string, dgopt::ObjectiveValues>> rows{{"baseline", base.values}};
  const auto placements = dgopt::parse_placements(o.placements);
  if (!placements.empty()) {
    const auto with = s.evaluate(placements);
    rows.emplace_back("with DGs", with.values);
    print_placements(placements);
    print_objective_table(rows, base.values.f1);
    print_violations(with.limits);
  } else {
    print_objective_table(rows, base.values.f1);
    print_violations(base.limits);
  }
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    dgopt::write_objectives_csv(out, rows, base.values.f1);
  }
  return 0;
}

int cmd_optimize(const CommonOptions& o) {
  const auto s = load(o);
  echo_config(s, o.out);
  const auto baseline = s.baseline();
  const auto run = dgopt::run_optimize(s, s.config.market.seed, baseline);
  std::cout << "Best placement (seed " << run.seed << ", " << run.trace.evaluations
            << " evaluations):\n";
  print_placements(run.placements);
  print_objective_table({{"baseline", baseline}, {"EMA", run.values}}, baseline.f1);
  std::cout << "\nConvergence (best Obj per iteration):\n";
  const auto& series = run.trace.best_cost_per_iteration;
  for (std::size_t t = 0; t < series.size(); ++t) {
    std::cout << "  " << std::setw(3) << t << "  " << std::setprecision(6) << series[t] << '\n';
  }
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    const std::vector<dgopt::RunResult> runs{run};
    dgopt::write_runs_csv(out, runs);
    auto trace = open_out(o.out + ".trace.csv");
    dgopt::write_trace_csv(trace, run.trace);
  }
  return 0;
}

int cmd_stats(const CommonOptions& o) {
  const auto s = load(o);
  echo_config(s, o.out);
  const auto report = dgopt::run_stats(s, s.config.runs);
  std::cout << "Per-run best objective:\n";
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    const auto& r = report.runs[i];
    std::cout << "  run " << std::setw(3) << i + 1 << "  seed " << std::setw(20) << r.seed
              << "  Obj " << std::fixed << std::setprecision(4) << r.values.of << "  placements ";
    std::cout.unsetf(std::ios::floatfield);
    for (const auto& p : r.placements) std::cout << p.bus << ':' << std::setprecision(4) << p.p_mw << ' ';
    std::cout << '\n';
  }
  const auto& st = report.stats;
  std::cout << "\nSystem        Mean      Best     Worst    Variance        SD\n"
            << std::left << std::setw(10) << (s.config.name.empty() ? "scenario" : s.config.name)
            << std::right << std::fixed << std::setprecision(4) << std::setw(10) << st.mean
            << std::setw(10) << st.best << std::setw(10) << st.worst << std::scientific
            << std::setprecision(3) << std::setw(12) << st.variance << std::fixed
            << std::setprecision(4) << std::setw(10) << st.sd << '\n';
  std::cout.unsetf(std::ios::floatfield);
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    dgopt::write_runs_csv(out, report.runs);
    auto summary = open_out(o.out + ".summary.csv");
    dgopt::write_stats_csv(summary, st);
  }
  return 0;
}

int cmd_profile(const CommonOptions& o) {
  const auto s = load(o);
  echo_config(s, o.out);
  const auto placements = dgopt::parse_placements(o.placements);
  const auto before = dgopt::voltage_profile(s);
  std::optional<std::vector<dgopt::ProfilePoint>> after;
  if (!placements.empty()) after = dgopt::voltage_profile(s, placements);
  if (o.out.empty()) {
    std::cout << "# before\n";
    dgopt::write_profile_csv(std::cout, before);
    if (after) {
      std::cout << "# after\n";
      dgopt::write_profile_csv(std::cout, *after);
    }
    return 0;
  }
  auto b = open_out(o.out + "_before.csv");
  dgopt::write_profile_csv(b, before);
  std::cout << "wrote " << o.out << "_before.csv\n";
  if (after) {
    auto a = open_out(o.out + "_after.csv");
    dgopt::write_profile_csv(a, *after);
    std::cout << "wrote " << o.out << "_after.csv\n";
  }
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  for (auto field : dgopt::detail::split_fields(text)) {
    const auto v = dgopt::detail::parse_number<T>(field);
    if (!v) throw dgopt::ConfigError("bad list entry '" + std::string(field) + "'");
    out.push_back(*v);
  }
  return out;
}

int cmd_oracle(const CommonOptions& o, const OracleOptions& oo) {
  const auto s = load(o);
  echo_config(s, o.out);
  std::vector<int> buses;
  if (oo.buses.empty()) {
    for (int b = 2; b <= static_cast<int>(s.bus_count()); ++b) buses.push_back(b);
  } else {
    buses = parse_list<int>(oo.buses);
  }
  const auto sizes =
      oo.sizes.empty() ? dgopt::size_grid(oo.grid_step, s.config.p_max) : parse_list<double>(oo.sizes);
  const double cap = oo.cap.value_or(s.config.oracle_cap);
  const auto result = dgopt::grid_oracle(s, buses, sizes, s.config.n_dg, cap, oo.table);
  std::cout << "Exhaustive grid: " << buses.size() << " buses x " << sizes.size() << " sizes, "
            << s.config.n_dg << " DG(s), " << result.evaluated << " evaluations\n";
  print_placements(result.best);
  const auto baseline = s.baseline();
  print_objective_table({{"baseline", baseline}, {"oracle", result.values}}, baseline.f1);
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    if (oo.table) {
      dgopt::write_oracle_csv(out, result.table);
    } else {
      const std::vector<dgopt::OracleEntry> best{{result.best, result.values.of}};
      dgopt::write_oracle_csv(out, best);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgopt: optimal DG siting and sizing on radial distribution feeders"};
  app.require_subcommand(1);

  CommonOptions common;
  OracleOptions oracle;

  auto* evaluate = app.add_subcommand("evaluate", "Objective values for the baseline or fixed placements");
  add_common(evaluate, common);
  evaluate->add_option("--placements", common.placements, "Fixed DGs as bus:mw,bus:mw,...");

  auto* optimize = app.add_subcommand("optimize", "Run the market optimizer once");
  add_common(optimize, common);

  auto* stats = app.add_subcommand("stats", "Repeat the optimizer and summarise the best objective");
  add_common(stats, common);
  stats->add_option("--runs", common.runs, "Number of runs (default from config, 20)")
      ->check(CLI::Range(2, 1000000));

  auto* profile = app.add_subcommand("profile", "Bus voltage profile CSV (before/after DGs)");
  add_common(profile, common);
  profile->add_option("--placements", common.placements, "DGs for the 'after' profile");

  auto* grid = app.add_subcommand("oracle", "Exhaustive grid search over DG placements");
  add_common(grid, common);
  grid->add_option("--grid-step", oracle.grid_step, "DG size step in MW (default 0.1)");
  grid->add_option("--buses", oracle.buses, "Candidate buses, comma separated (default all)");
  grid->add_option("--sizes", oracle.sizes, "Explicit DG sizes in MW, comma separated");
  grid->add_option("--cap", oracle.cap, "Maximum number of evaluations (default oracle_cap)");
  grid->add_flag("--table", oracle.table, "Write every evaluated combination to --out");

  CLI11_PARSE(app, argc, argv);

  try {
    if (evaluate->parsed()) return cmd_evaluate(common);
    if (optimize->parsed()) return cmd_optimize(common);
    if (stats->parsed()) return cmd_stats(common);
    if (profile->parsed()) return cmd_profile(common);
    if (grid->parsed()) return cmd_oracle(common, oracle);
  } catch (const std::exception& e) {
    std::cerr << "dgopt: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
