#pragma once

// Scenario configuration and the batch runners behind the dgopt CLI:
// fixed-placement evaluation, single optimization runs, repeated-run
// statistics, voltage profiles and the exhaustive grid oracle.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dgopt/ema.hpp"
#include "dgopt/errors.hpp"
#include "dgopt/network.hpp"
#include "dgopt/objectives.hpp"
#include "dgopt/powerflow.hpp"

namespace dgopt {

// Cost assigned to candidates whose power flow diverges or collapses.
inline constexpr double kFailedCost = 1e6;

struct ScenarioConfig {
  std::string name;
  std::string bus_file;
  std::string branch_file;
  PerUnitBase base;
  std::size_t n_dg = 3;
  double p_max = 1.2;  // MW per DG
  double power_factor = 1.0;
  ObjectiveWeights weights;
  OperatingLimits limits;
  MarketConfig market;
  SweepOptions sweep;
  std::size_t runs = 20;
  double oracle_cap = 1e6;

  void validate() const {
    if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
    if (power_factor != 1.0) throw ConfigError("only unity power factor DGs are supported");
    if (!(sweep.tol > 0.0) || sweep.max_iter < 1) {
      throw ConfigError("sweep requires tol > 0 and max_iter >= 1");
    }
    if (!(oracle_cap >= 1.0)) throw ConfigError("oracle_cap must be at least 1");
    weights.validate();
    limits.validate();
    market.validate();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// Relative data paths resolve against `base_dir` (normally the config file's
// directory).
inline ScenarioConfig scenario_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {}) {
  using detail::read_if;
  ScenarioConfig c;
  try {
    detail::reject_unknown(j,
                           {"name", "network", "base", "n_dg", "p_max_mw", "power_factor",
                            "weights", "limits", "market", "sweep", "runs", "oracle_cap"},
                           "config");
    read_if(j, "name", c.name);
    const auto& net = j.at("network");
    detail::reject_unknown(net, {"bus_file", "branch_file"}, "network");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
    };
    c.bus_file = resolve(net.at("bus_file").get<std::string>());
    c.branch_file = resolve(net.at("branch_file").get<std::string>());
    if (j.contains("base")) {
      const auto& b = j.at("base");
      detail::reject_unknown(b, {"s_base_mva", "v_base_kv"}, "base");
      c.base = PerUnitBase(b.value("s_base_mva", 1.0), b.value("v_base_kv", 12.66));
    }
    read_if(j, "n_dg", c.n_dg);
    read_if(j, "p_max_mw", c.p_max);
    read_if(j, "power_factor", c.power_factor);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      detail::reject_unknown(w, {"p1", "p2", "v_rated"}, "weights");
      read_if(w, "p1", c.weights.p1);
      read_if(w, "p2", c.weights.p2);
      read_if(w, "v_rated", c.weights.v_rated);
    }
    if (j.contains("limits")) {
      const auto& l = j.at("limits");
      detail::reject_unknown(l, {"v_min", "v_max", "penalty_v", "penalty_i"}, "limits");
      read_if(l, "v_min", c.limits.v_min);
      read_if(l, "v_max", c.limits.v_max);
      read_if(l, "penalty_v", c.limits.penalty_v);
      read_if(l, "penalty_i", c.limits.penalty_i);
    }
    if (j.contains("market")) {
      const auto& m = j.at("market");
      detail::reject_unknown(m, {"pop_size", "max_iter", "g1", "g2", "g3", "eta2_0", "eta3_0", "seed"},
                             "market");
      read_if(m, "pop_size", c.market.pop_size);
      read_if(m, "max_iter", c.market.max_iter);
      read_if(m, "g1", c.market.g1);
      read_if(m, "g2", c.market.g2);
      read_if(m, "g3", c.market.g3);
      read_if(m, "eta2_0", c.market.eta2_0);
      read_if(m, "eta3_0", c.market.eta3_0);
      read_if(m, "seed", c.market.seed);
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      detail::reject_unknown(s, {"tol", "max_iter", "flat_start"}, "sweep");
      read_if(s, "tol", c.sweep.tol);
      read_if(s, "max_iter", c.sweep.max_iter);
      read_if(s, "flat_start", c.sweep.flat_start);
    }
    read_if(j, "runs", c.runs);
    read_if(j, "oracle_cap", c.oracle_cap);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return scenario_from_json(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  return {
      {"name", c.name},
      {"network", {{"bus_file", c.bus_file}, {"branch_file", c.branch_file}}},
      {"base", {{"s_base_mva", c.base.s_base()}, {"v_base_kv", c.base.v_base()}}},
      {"n_dg", c.n_dg},
      {"p_max_mw", c.p_max},
      {"power_factor", c.power_factor},
      {"weights", {{"p1", c.weights.p1}, {"p2", c.weights.p2}, {"v_rated", c.weights.v_rated}}},
      {"limits",
       {{"v_min", c.limits.v_min},
        {"v_max", c.limits.v_max},
        {"penalty_v", c.limits.penalty_v},
        {"penalty_i", c.limits.penalty_i}}},
      {"market",
       {{"pop_size", c.market.pop_size},
        {"max_iter", c.market.max_iter},
        {"g1", c.market.g1},
        {"g2", c.market.g2},
        {"g3", c.market.g3},
        {"eta2_0", c.market.eta2_0},
        {"eta3_0", c.market.eta3_0},
        {"seed", c.market.seed}}},
      {"sweep",
       {{"tol", c.sweep.tol}, {"max_iter", c.sweep.max_iter}, {"flat_start", c.sweep.flat_start}}},
      {"runs", c.runs},
      {"oracle_cap", c.oracle_cap},
  };
}

// A configuration bound to its loaded feeder.
struct Scenario {
  ScenarioConfig config;
  Feeder feeder;

  static Scenario load(const ScenarioConfig& config) {
    config.validate();
    return from_network(config, load_network(config.bus_file, config.branch_file, config.base));
  }

  static Scenario from_network(const ScenarioConfig& config, Network net) {
    net.base = config.base;
    const auto report = validate_radial(net);
    if (!report.ok()) {
      throw InvalidStateError("network is not radial: " + report.violations.front().detail);
    }
    return Scenario{config, Feeder::from(net)};
  }

  std::size_t bus_count() const { return feeder.net.bus_count(); }

  Evaluation evaluate(std::span<const DgPlacement> placements) const {
    for (const auto& p : placements) {
      if (p.p_mw > config.p_max + 1e-12) {
        throw PlacementError("DG size " + std::to_string(p.p_mw) + " MW exceeds p_max");
      }
    }
    return evaluate_detailed(feeder, placements, config.weights, config.limits, config.sweep);
  }

  ObjectiveValues baseline() const { return evaluate({}).values; }
};

// Share-vector fitness for the optimizer. Any library error (divergence,
// voltage collapse) maps to kFailedCost so ranking stays total.
class PlacementFitness {
 public:
  explicit PlacementFitness(const Scenario& scenario) : scenario_(&scenario) {}

  double operator()(std::span<const double> shares) const {
    const auto placements = decode_shares(shares, scenario_->bus_count());
    try {
      return evaluate_placement(scenario_->feeder, placements, scenario_->config.weights,
                                scenario_->config.limits, scenario_->config.sweep)
          .of;
    } catch (const Error&) {
      return kFailedCost;
    }
  }

 private:
  const Scenario* scenario_;
};

inline std::vector<DgPlacement> sorted_by_bus(std::vector<DgPlacement> placements) {
  std::stable_sort(placements.begin(), placements.end(),
                   [](const DgPlacement& a, const DgPlacement& b) { return a.bus < b.bus; });
  return placements;
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<DgPlacement> placements;
  ObjectiveValues values;
  double loss_reduction = 0.0;
  OptimizationTrace trace;
};

inline RunResult run_optimize(const Scenario& scenario, std::uint64_t seed,
                              const ObjectiveValues& baseline) {
  RunResult out;
  out.seed = seed;
  if (scenario.config.n_dg == 0) {
    out.values = baseline;
    out.trace.best_cost_per_iteration = {baseline.of};
    return out;
  }
  auto market = scenario.config.market;
  market.seed = seed;
  const auto bounds =
      placement_bounds(scenario.bus_count(), scenario.config.n_dg, scenario.config.p_max);
  out.trace = optimize(PlacementFitness(scenario), market, bounds);
  out.placements = sorted_by_bus(decode_shares(out.trace.best_member.shares, scenario.bus_count()));
  try {
    out.values = scenario.evaluate(out.placements).values;
  } catch (const Error&) {
    out.values.of = kFailedCost;
  }
  out.loss_reduction = loss_reduction(baseline.f1, out.values.f1);
  return out;
}

inline RunResult run_optimize(const Scenario& scenario) {
  return run_optimize(scenario, scenario.config.market.seed, scenario.baseline());
}

struct Statistics {
  std::size_t count = 0;
  double mean = 0.0;
  double best = 0.0;
  double worst = 0.0;
  double variance = 0.0;  // sample variance (n - 1)
  double sd = 0.0;
};

inline Statistics compute_statistics(std::span<const double> values) {
  if (values.size() < 2) throw ConfigError("statistics need at least two runs");
  Statistics s;
  s.count = values.size();
  const double n = static_cast<double>(values.size());
  // Shifted by the first value so identical runs give an exact mean and zero spread.
  double shift = 0.0;
  for (double v : values) shift += v - values.front();
  s.mean = values.front() + shift / n;
  s.best = *std::min_element(values.begin(), values.end());
  s.worst = *std::max_element(values.begin(), values.end());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.variance = ss / (n - 1.0);
  s.sd = std::sqrt(s.variance);
  return s;
}

inline std::vector<std::uint64_t> derive_seeds(std::uint64_t master, std::size_t runs) {
  std::vector<std::uint64_t> seeds(runs);
  for (std::size_t k = 0; k < runs; ++k) seeds[k] = splitmix64(master + k);
  return seeds;
}

namespace detail {

inline std::size_t worker_count(std::size_t jobs) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(hw, jobs));
}

// Runs job(i) for i in [0, n) on a small pool; results must be written by index.
template <typename Job>
void parallel_for(std::size_t n, Job&& job) {
  const std::size_t workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) job(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = n;
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

struct StatsReport {
  ObjectiveValues baseline;
  std::vector<RunResult> runs;
  Statistics stats;
};

inline StatsReport run_stats(const Scenario& scenario, std::span<const std::uint64_t> seeds) {
  StatsReport report;
  report.baseline = scenario.baseline();
  report.runs.resize(seeds.size());
  detail::parallel_for(seeds.size(), [&](std::size_t i) {
    report.runs[i] = run_optimize(scenario, seeds[i], report.baseline);
  });
  std::vector<double> costs;
  costs.reserve(report.runs.size());
  for (const auto& r : report.runs) costs.push_back(r.values.of);
  report.stats = compute_statistics(costs);
  return report;
}

inline StatsReport run_stats(const Scenario& scenario, std::size_t runs) {
  const auto seeds = derive_seeds(scenario.config.market.seed, runs);
  return run_stats(scenario, seeds);
}

struct ProfilePoint {
  int bus = 0;
  double v_mag = 0.0;
};

inline std::vector<ProfilePoint> voltage_profile(const Scenario& scenario,
                                                 std::span<const DgPlacement> placements = {}) {
  const auto e = scenario.evaluate(placements);
  std::vector<ProfilePoint> out;
  out.reserve(e.solution.states.size());
  for (std::size_t b = 0; b < e.solution.states.size(); ++b) {
    out.push_back({static_cast<int>(b + 1), e.solution.states[b].v_mag});
  }
  return out;
}

struct OracleEntry {
  std::vector<DgPlacement> placements;
  double of = 0.0;
};

struct OracleResult {
  std::vector<DgPlacement> best;
  ObjectiveValues values;
  std::size_t evaluated = 0;
  std::vector<OracleEntry> table;  // filled only on request, enumeration order
};

// Exhaustive argmin over explicit candidate placement sets. Ties resolve to
// the earliest candidate.
inline OracleResult oracle_argmin(const Scenario& scenario,
                                  std::span<const std::vector<DgPlacement>> candidates,
                                  bool keep_table = false) {
  if (candidates.empty()) throw ConfigError("oracle needs at least one candidate");
  std::vector<double> costs(candidates.size());
  detail::parallel_for(candidates.size(), [&](std::size_t i) {
    try {
      costs[i] = scenario.evaluate(candidates[i]).values.of;
    } catch (const Error&) {
      costs[i] = kFailedCost;
    }
  });
  const auto best = static_cast<std::size_t>(std::min_element(costs.begin(), costs.end()) - costs.begin());
  OracleResult out;
  out.best = candidates[best];
  out.values = scenario.evaluate(out.best).values;
  out.evaluated = candidates.size();
  if (keep_table) {
    for (std::size_t i = 0; i < candidates.size(); ++i) out.table.push_back({candidates[i], costs[i]});
  }
  return out;
}

// 0, step, 2 step, ... up to p_max (p_max itself always included).
inline std::vector<double> size_grid(double step, double p_max) {
  if (!(step > 0.0)) throw ConfigError("grid step must be positive");
  std::vector<double> sizes;
  for (std::size_t i = 0;; ++i) {
    const double s = std::round(static_cast<double>(i) * step * 1e9) / 1e9;
    if (s > p_max + 1e-9) break;
    sizes.push_back(std::min(s, p_max));
  }
  if (p_max - sizes.back() > 1e-9) sizes.push_back(p_max);
  return sizes;
}

// Enumerates every ordered n_dg-tuple of (bus, size) pairs:
// (|buses| * |sizes|)^n_dg evaluations, bounded by `cap`.
inline OracleResult grid_oracle(const Scenario& scenario, std::span<const int> buses,
                                std::span<const double> sizes, std::size_t n_dg, double cap,
                                bool keep_table = false) {
  if (buses.empty() || sizes.empty() || n_dg == 0) {
    throw ConfigError("oracle grid needs buses, sizes and n_dg >= 1");
  }
  const double options = static_cast<double>(buses.size() * sizes.size());
  const double total = std::pow(options, static_cast<double>(n_dg));
  if (total > cap) throw EnumerationCapError(total, cap);
  const auto count = static_cast<std::size_t>(total);
  const std::size_t per_dg = buses.size() * sizes.size();

  std::vector<std::vector<DgPlacement>> candidates(count);
  for (std::size_t index = 0; index < count; ++index) {
    auto rest = index;
    auto& c = candidates[index];
    c.resize(n_dg);
    for (std::size_t k = n_dg; k-- > 0;) {
      const auto option = rest % per_dg;
      rest /= per_dg;
      c[k] = {buses[option / sizes.size()], sizes[option % sizes.size()], 1.0};
    }
  }
  return oracle_argmin(scenario, candidates, keep_table);
}

namespace detail {
inline std::string format_placements(std::span<const DgPlacement> placements) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (std::size_t i = 0; i < placements.size(); ++i) {
    if (i) os << ' ';
    os << placements[i].bus << ':' << placements[i].p_mw;
  }
  return os.str();
}
}  // namespace detail

// Parses "bus:mw,bus:mw,...".
inline std::vector<DgPlacement> parse_placements(std::string_view text) {
  std::vector<DgPlacement> out;
  text = detail::trim(text);
  if (text.empty()) return out;
  for (auto field : detail::split_fields(text)) {
    const auto colon = field.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("placement '" + std::string(field) + "' is not bus:mw");
    }
    const auto bus = detail::parse_number<int>(detail::trim(field.substr(0, colon)));
    const auto mw = detail::parse_number<double>(detail::trim(field.substr(colon + 1)));
    if (!bus || !mw) throw ConfigError("placement '" + std::string(field) + "' is not bus:mw");
    out.push_back({*bus, *mw, 1.0});
  }
  return out;
}

inline void write_objectives_csv(std::ostream& os,
                                 std::span<const std::pair<std::string, ObjectiveValues>> rows,
                                 double baseline_f1) {
  os << "case,f1_pu,f2_pu,vsi_min,f3_pu,penalty,of,loss_reduction_pct\n";
  os << std::setprecision(10);
  for (const auto& [label, v] : rows) {
    os << label << ',' << v.f1 << ',' << v.f2 << ',' << v.vsi_min << ',' << v.f3 << ','
       << v.penalty << ',' << v.of << ',' << loss_reduction(baseline_f1, v.f1) << '\n';
  }
}

inline void write_runs_csv(std::ostream& os, std::span<const RunResult> runs) {
  os << "run,seed,placements,f1_pu,f2_pu,vsi_min,f3_pu,penalty,of,loss_reduction_pct,evaluations\n";
  os << std::setprecision(10);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    os << i + 1 << ',' << r.seed << ',' << detail::format_placements(r.placements) << ','
       << r.values.f1 << ',' << r.values.f2 << ',' << r.values.vsi_min << ',' << r.values.f3 << ','
       << r.values.penalty << ',' << r.values.of << ',' << r.loss_reduction << ','
       << r.trace.evaluations << '\n';
  }
}

inline void write_trace_csv(std::ostream& os, const OptimizationTrace& trace) {
  os << "iteration,best_of\n" << std::setprecision(12);
  for (std::size_t t = 0; t < trace.best_cost_per_iteration.size(); ++t) {
    os << t << ',' << trace.best_cost_per_iteration[t] << '\n';
  }
}

inline void write_stats_csv(std::ostream& os, const Statistics& s) {
  os << "runs,mean,best,worst,variance,sd\n" << std::setprecision(12);
  os << s.count << ',' << s.mean << ',' << s.best << ',' << s.worst << ',' << s.variance << ','
     << s.sd << '\n';
}

inline void write_profile_csv(std::ostream& os, std::span<const ProfilePoint> profile) {
  os << "bus_id,v_mag\n" << std::setprecision(10);
  for (const auto& p : profile) os << p.bus << ',' << p.v_mag << '\n';
}

inline void write_oracle_csv(std::ostream& os, std::span<const OracleEntry> table) {
  os << "placements,of\n" << std::setprecision(10);
  for (const auto& e : table) os << detail::format_placements(e.placements) << ',' << e.of << '\n';
}

}  // namespace dgopt
