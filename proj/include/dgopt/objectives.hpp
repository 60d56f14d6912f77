#pragma once

// Objective terms for one operating point and the weighted composite used as
// the optimizer fitness.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dgopt/errors.hpp"
#include "dgopt/network.hpp"
#include "dgopt/powerflow.hpp"

namespace dgopt {

struct ObjectiveWeights {
  double p1 = 0.6;   // voltage-deviation weight
  double p2 = 0.35;  // inverse-VSI weight
  double v_rated = 1.0;

  void validate() const {
    if (!(p1 >= 0.0) || !(p2 >= 0.0) || !(v_rated > 0.0)) {
      throw ConfigError("weights require p1 >= 0, p2 >= 0, v_rated > 0");
    }
  }
};

struct OperatingLimits {
  double v_min = 0.95;
  double v_max = 1.05;
  double penalty_v = 0.0;  // zero weights: report only
  double penalty_i = 0.0;

  void validate() const {
    if (!(v_min > 0.0) || !(v_min < v_max) || penalty_v < 0.0 || penalty_i < 0.0) {
      throw ConfigError("limits require 0 < v_min < v_max and non-negative penalty weights");
    }
  }
};

struct VsiRecord {
  int bus = 0;  // receiving bus
  double si = 0.0;
};

struct VsiResult {
  std::vector<VsiRecord> records;  // one per non-slack bus, ascending bus id
  double vsi_min = 0.0;
  int weakest_bus = 0;
};

struct LimitViolation {
  enum class Kind { kUnderVoltage, kOverVoltage, kOverCurrent };
  Kind kind;
  int index = 0;  // bus id, or 0-based branch index for currents
  double value = 0.0;
  double limit = 0.0;
};

struct PenaltyResult {
  double penalty = 0.0;
  std::vector<LimitViolation> violations;
};

struct ObjectiveValues {
  double f1 = 0.0;
  double f2 = 0.0;
  double vsi_min = 0.0;
  double f3 = 0.0;
  double penalty = 0.0;
  double of = 0.0;
};

namespace detail {
inline void require_converged(const PowerFlowSolution& sol) {
  if (!sol.converged) throw InvalidStateError("objective needs a converged power flow");
}
}  // namespace detail

// Total active loss, sum over branches of R_j * I_j^2 (pu).
inline double f1_loss(const PowerFlowSolution& sol, const Network& net) {
  detail::require_converged(sol);
  double loss = 0.0;
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const double i = sol.flows[k].i_mag;
    loss += net.branches[k].r * i * i;
  }
  return loss;
}

// Sum of squared deviations from v_rated over all buses (slack included).
inline double f2_deviation(const PowerFlowSolution& sol, const ObjectiveWeights& w = {}) {
  detail::require_converged(sol);
  double dev = 0.0;
  for (const auto& s : sol.states) {
    const double d = s.v_mag - w.v_rated;
    dev += d * d;
  }
  return dev;
}

// Per-branch stability index at the receiving bus v fed from u:
//   si(v) = |V_u|^4 - 4 (P X - Q R)^2 - 4 (P R + Q X) |V_u|^2
// where P + jQ is the power delivered into v (downstream demand and losses).
inline VsiResult vsi_all(const PowerFlowSolution& sol, const Network& net) {
  detail::require_converged(sol);
  VsiResult out;
  out.records.reserve(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& f = sol.flows[k];
    const auto& br = net.branches[k];
    const double vu2 = sol.state(f.send_bus).v_mag * sol.state(f.send_bus).v_mag;
    const double p = f.s_recv.real();
    const double q = f.s_recv.imag();
    const double a = p * br.x - q * br.r;
    const double b = p * br.r + q * br.x;
    out.records.push_back({f.recv_bus, vu2 * vu2 - 4.0 * a * a - 4.0 * b * vu2});
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const VsiRecord& l, const VsiRecord& r) { return l.bus < r.bus; });
  out.vsi_min = std::numeric_limits<double>::infinity();
  for (const auto& r : out.records) {
    if (r.si < out.vsi_min) {
      out.vsi_min = r.si;
      out.weakest_bus = r.bus;
    }
  }
  return out;
}

inline double f3_inverse_vsi(double vsi_min) {
  if (!(vsi_min > 0.0)) throw VoltageCollapseError(vsi_min);
  return 1.0 / vsi_min;
}

inline double composite(double f1, double f2, double f3, const ObjectiveWeights& w = {},
                        double penalty = 0.0) {
  return f1 + w.p1 * f2 + w.p2 * f3 + penalty;
}

inline PenaltyResult penalties(const PowerFlowSolution& sol, const Network& net,
                               const OperatingLimits& lim) {
  detail::require_converged(sol);
  PenaltyResult out;
  double v_sum = 0.0;
  for (std::size_t b = 0; b < sol.states.size(); ++b) {
    const double v = sol.states[b].v_mag;
    const int bus = static_cast<int>(b + 1);
    if (v < lim.v_min) {
      out.violations.push_back({LimitViolation::Kind::kUnderVoltage, bus, v, lim.v_min});
      v_sum += (lim.v_min - v) * (lim.v_min - v);
    } else if (v > lim.v_max) {
      out.violations.push_back({LimitViolation::Kind::kOverVoltage, bus, v, lim.v_max});
      v_sum += (v - lim.v_max) * (v - lim.v_max);
    }
  }
  double i_sum = 0.0;
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& cap = net.branches[k].ampacity;
    if (!cap) continue;
    const double i = sol.flows[k].i_mag;
    if (i > *cap) {
      out.violations.push_back(
          {LimitViolation::Kind::kOverCurrent, static_cast<int>(k), i, *cap});
      i_sum += (i - *cap) * (i - *cap);
    }
  }
  out.penalty = lim.penalty_v * v_sum + lim.penalty_i * i_sum;
  return out;
}

inline double loss_reduction(double f1_base, double f1_with_dg) {
  if (!(f1_base > 0.0)) throw InvalidStateError("baseline loss must be positive");
  return 100.0 * (f1_base - f1_with_dg) / f1_base;
}

// A per-unit feeder with its precomputed slack-rooted orientation.
struct Feeder {
  Network net;
  RadialTree tree;

  static Feeder from(const Network& network) {
    Feeder f{network.units == Units::kPerUnit ? network : to_per_unit(network), {}};
    f.tree = build_tree(f.net);
    return f;
  }
};

struct Evaluation {
  ObjectiveValues values;
  PowerFlowSolution solution;
  VsiResult vsi;
  PenaltyResult limits;
};

inline Evaluation evaluate_detailed(const Feeder& feeder, std::span<const DgPlacement> placements,
                                    const ObjectiveWeights& w = {},
                                    const OperatingLimits& lim = {},
                                    const SweepOptions& opts = {}) {
  const Network loaded = apply_dg(feeder.net, placements);
  Evaluation e;
  e.solution = solve(loaded, feeder.tree, opts);
  e.vsi = vsi_all(e.solution, loaded);
  e.limits = penalties(e.solution, loaded, lim);
  auto& v = e.values;
  v.f1 = f1_loss(e.solution, loaded);
  v.f2 = f2_deviation(e.solution, w);
  v.vsi_min = e.vsi.vsi_min;
  v.f3 = f3_inverse_vsi(v.vsi_min);
  v.penalty = e.limits.penalty;
  v.of = composite(v.f1, v.f2, v.f3, w, v.penalty);
  return e;
}

// Fitness of a DG placement: applies the DGs, solves the power flow and
// returns every objective term. Divergence and collapse propagate as errors.
inline ObjectiveValues evaluate_placement(const Feeder& feeder,
                                          std::span<const DgPlacement> placements,
                                          const ObjectiveWeights& w = {},
                                          const OperatingLimits& lim = {},
                                          const SweepOptions& opts = {}) {
  return evaluate_detailed(feeder, placements, w, lim, opts).values;
}

inline ObjectiveValues evaluate_placement(const Network& net,
                                          std::span<const DgPlacement> placements,
                                          const ObjectiveWeights& w = {},
                                          const OperatingLimits& lim = {},
                                          const SweepOptions& opts = {}) {
  return evaluate_placement(Feeder::from(net), placements, w, lim, opts);
}

}  // namespace dgopt
