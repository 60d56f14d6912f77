#pragma once

// Backward/forward sweep power flow for radial feeders, plus an independent
// admittance-form residual check of the bus power balance.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgopt/errors.hpp"
#include "dgopt/network.hpp"

namespace dgopt {

using Complex = std::complex<double>;

struct BusState {
  double v_mag = 1.0;  // pu
  double v_ang = 0.0;  // rad

  Complex phasor() const { return std::polar(v_mag, v_ang); }
};

struct BranchFlow {
  int send_bus = 0;  // upstream end (towards the slack)
  int recv_bus = 0;
  double i_mag = 0.0;
  Complex s_send;  // power entering at the sending end
  Complex s_recv;  // power delivered at the receiving end
  double loss_p = 0.0;
};

struct PowerFlowSolution {
  std::vector<BusState> states;   // indexed by bus id - 1
  std::vector<BranchFlow> flows;  // parallel to Network::branches
  int iterations = 0;
  bool converged = false;
  double max_mismatch = 0.0;
  Complex slack_power;  // net injection at the slack bus

  const BusState& state(int bus) const { return states.at(static_cast<std::size_t>(bus - 1)); }

  double min_voltage() const {
    return std::min_element(states.begin(), states.end(),
                            [](const BusState& a, const BusState& b) { return a.v_mag < b.v_mag; })
        ->v_mag;
  }
  int min_voltage_bus() const {
    const auto it = std::min_element(
        states.begin(), states.end(),
        [](const BusState& a, const BusState& b) { return a.v_mag < b.v_mag; });
    return static_cast<int>(it - states.begin()) + 1;
  }
};

struct SweepOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double flat_start = 1.0;
};

// Residual bound reported as "converged": the two formulations agree to 100x
// the sweep voltage tolerance.
inline double mismatch_tolerance(const SweepOptions& opts) { return 100.0 * opts.tol; }

// Slack-rooted orientation of a radial network. Index 0 is the slack bus.
struct RadialTree {
  std::vector<std::size_t> order;          // breadth-first bus indices, slack first
  std::vector<std::size_t> parent;         // parent bus index (self for the slack)
  std::vector<std::size_t> feeder_branch;  // branch feeding each bus (unused for slack)
  std::vector<std::vector<std::size_t>> children;
};

inline RadialTree build_tree(const Network& net) {
  const auto report = validate_radial(net);
  if (!report.ok()) {
    throw InvalidStateError("network is not radial: " + report.violations.front().detail);
  }
  const std::size_t n = net.bus_count();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency(n);
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto a = static_cast<std::size_t>(net.branches[k].from_bus - 1);
    const auto b = static_cast<std::size_t>(net.branches[k].to_bus - 1);
    adjacency[a].emplace_back(b, k);
    adjacency[b].emplace_back(a, k);
  }
  RadialTree tree;
  tree.parent.assign(n, 0);
  tree.feeder_branch.assign(n, 0);
  tree.children.assign(n, {});
  std::vector<bool> seen(n, false);
  tree.order.push_back(0);
  seen[0] = true;
  for (std::size_t head = 0; head < tree.order.size(); ++head) {
    const auto v = tree.order[head];
    for (const auto& [w, k] : adjacency[v]) {
      if (seen[w]) continue;
      seen[w] = true;
      tree.parent[w] = v;
      tree.feeder_branch[w] = k;
      tree.children[v].push_back(w);
      tree.order.push_back(w);
    }
  }
  return tree;
}

struct AdmittanceEntry {
  double y_mag = 0.0;
  double y_ang = 0.0;

  Complex value() const { return std::polar(y_mag, y_ang); }
};

// Sparse bus admittance matrix, series branches only.
class AdmittanceTable {
 public:
  explicit AdmittanceTable(std::size_t buses) : rows_(buses) {}

  std::size_t size() const noexcept { return rows_.size(); }

  // Nonzero entries of row `bus` (1-based ids), diagonal included.
  const std::vector<std::pair<int, AdmittanceEntry>>& row(int bus) const {
    return rows_.at(static_cast<std::size_t>(bus - 1));
  }

  std::optional<AdmittanceEntry> entry(int i, int j) const {
    for (const auto& [col, e] : row(i)) {
      if (col == j) return e;
    }
    return std::nullopt;
  }

  void add(int i, int j, Complex y) {
    auto& r = rows_.at(static_cast<std::size_t>(i - 1));
    for (auto& [col, e] : r) {
      if (col == j) {
        const Complex sum = e.value() + y;
        e = {std::abs(sum), std::arg(sum)};
        return;
      }
    }
    r.emplace_back(j, AdmittanceEntry{std::abs(y), std::arg(y)});
  }

 private:
  std::vector<std::vector<std::pair<int, AdmittanceEntry>>> rows_;
};

inline AdmittanceTable build_admittance(const Network& net) {
  if (net.units != Units::kPerUnit) {
    throw InvalidStateError("admittance table requires a per-unit network");
  }
  AdmittanceTable y(net.bus_count());
  for (std::size_t i = 1; i <= net.bus_count(); ++i) {
    y.add(static_cast<int>(i), static_cast<int>(i), Complex{});
  }
  for (const auto& br : net.branches) {
    const Complex z(br.r, br.x);
    if (z == Complex{}) {
      throw SingularBranchError("branch (" + std::to_string(br.from_bus) + "," +
                                std::to_string(br.to_bus) + ") has zero impedance");
    }
    const Complex series = 1.0 / z;
    y.add(br.from_bus, br.to_bus, -series);
    y.add(br.to_bus, br.from_bus, -series);
    y.add(br.from_bus, br.from_bus, series);
    y.add(br.to_bus, br.to_bus, series);
  }
  return y;
}

struct BusMismatch {
  int bus = 0;
  double dp = 0.0;
  double dq = 0.0;
};

// Evaluates the polar power-balance equations
//   dP_i = P_g,i - P_d,i - V_i sum_j V_j Y_ij cos(d_i - d_j - theta_ij)
//   dQ_i = Q_g,i - Q_d,i - V_i sum_j V_j Y_ij sin(d_i - d_j - theta_ij)
// for every non-slack bus. DG output is already folded into the net demand.
inline std::vector<BusMismatch> mismatch(const Network& net, const AdmittanceTable& y,
                                         std::span<const BusState> states) {
  if (states.size() != net.bus_count()) {
    throw InvalidStateError("state vector does not cover every bus");
  }
  std::vector<BusMismatch> out;
  out.reserve(net.bus_count());
  for (const auto& bus : net.buses) {
    if (bus.is_slack) continue;
    const auto& si = states[static_cast<std::size_t>(bus.id - 1)];
    double p = 0.0;
    double q = 0.0;
    // No shunts, so Y_ii = -sum of the row's off-diagonals; folding the
    // diagonal into each pair keeps equal voltages at exactly zero flow.
    for (const auto& [j, e] : y.row(bus.id)) {
      if (j == bus.id) continue;
      const auto& sj = states[static_cast<std::size_t>(j - 1)];
      const double angle = si.v_ang - sj.v_ang - e.y_ang;
      p += e.y_mag * (sj.v_mag * std::cos(angle) - si.v_mag * std::cos(-e.y_ang));
      q += e.y_mag * (sj.v_mag * std::sin(angle) - si.v_mag * std::sin(-e.y_ang));
    }
    out.push_back({bus.id, -bus.p_load - si.v_mag * p, -bus.q_load - si.v_mag * q});
  }
  return out;
}

inline std::vector<BusMismatch> mismatch(const Network& net, std::span<const BusState> states) {
  return mismatch(net, build_admittance(net), states);
}

inline double max_abs_mismatch(std::span<const BusMismatch> residuals) {
  double worst = 0.0;
  for (const auto& m : residuals) worst = std::max({worst, std::abs(m.dp), std::abs(m.dq)});
  return worst;
}

inline PowerFlowSolution solve(const Network& net, const RadialTree& tree,
                               const SweepOptions& opts = {}) {
  if (net.units != Units::kPerUnit) {
    throw InvalidStateError("power flow requires a per-unit network");
  }
  if (!(opts.tol > 0.0) || opts.max_iter < 1) {
    throw ConfigError("sweep options require tol > 0 and max_iter >= 1");
  }
  const std::size_t n = net.bus_count();
  std::vector<Complex> v(n, Complex(opts.flat_start, 0.0));
  v[0] = Complex(1.0, 0.0);
  std::vector<Complex> load(n);
  std::vector<Complex> z(n);
  for (std::size_t b = 0; b < n; ++b) {
    load[b] = Complex(net.buses[b].p_load, net.buses[b].q_load);
  }
  for (std::size_t idx = 1; idx < tree.order.size(); ++idx) {
    const auto b = tree.order[idx];
    const auto& br = net.branches[tree.feeder_branch[b]];
    z[b] = Complex(br.r, br.x);
  }

  std::vector<Complex> current(n);  // branch current into each bus from its parent
  PowerFlowSolution sol;
  double change = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    for (auto pos = tree.order.size(); pos-- > 1;) {
      const auto b = tree.order[pos];
      Complex j = std::conj(load[b] / v[b]);
      for (auto c : tree.children[b]) j += current[c];
      current[b] = j;
    }
    change = 0.0;
    for (std::size_t idx = 1; idx < tree.order.size(); ++idx) {
      const auto b = tree.order[idx];
      const Complex updated = v[tree.parent[b]] - z[b] * current[b];
      change = std::max(change, std::abs(updated - v[b]));
      v[b] = updated;
    }
    if (!std::isfinite(change)) break;
    if (!sol.converged && change <= opts.tol) {
      sol.iterations = it;
      sol.converged = true;
    }
    // A few extra sweeps past the threshold so the reported currents and
    // voltages agree well below tol (loss bookkeeping depends on it).
    if (sol.converged && (change <= 1e-3 * opts.tol || change >= previous)) break;
    previous = change;
  }
  if (!sol.converged) throw DivergedError(opts.max_iter, change);

  sol.states.resize(n);
  for (std::size_t b = 0; b < n; ++b) sol.states[b] = {std::abs(v[b]), std::arg(v[b])};
  sol.states[0] = {1.0, 0.0};

  sol.flows.resize(net.branches.size());
  for (std::size_t idx = 1; idx < tree.order.size(); ++idx) {
    const auto b = tree.order[idx];
    const auto u = tree.parent[b];
    auto& f = sol.flows[tree.feeder_branch[b]];
    f.send_bus = static_cast<int>(u + 1);
    f.recv_bus = static_cast<int>(b + 1);
    f.i_mag = std::abs(current[b]);
    f.s_send = v[u] * std::conj(current[b]);
    f.s_recv = v[b] * std::conj(current[b]);
    f.loss_p = z[b].real() * f.i_mag * f.i_mag;
    if (u == 0) sol.slack_power += f.s_send;
  }
  sol.max_mismatch = max_abs_mismatch(mismatch(net, sol.states));
  return sol;
}

inline PowerFlowSolution solve(const Network& net, const SweepOptions& opts = {}) {
  return solve(net, build_tree(net), opts);
}

}  // namespace dgopt
