#pragma once

// Exchange-market style population optimizer.
//
// Members are ranked by cost and split into three groups. Group 1 (the elite)
// is never modified. Each iteration runs two market modes over groups 2 and 3:
//
//   balanced    group 2: x' = r .* best + (1 - r) .* x        (per-dim r)
//               group 3: x' = x + 2 r1 (best - x) + 2 r2 (elite - x)
//   unbalanced  x' = x + eta (2 r - 1) .* (hi - lo),  eta = eta0 (1 - t/T)
//
// with a re-evaluation and re-ranking after each mode. Every update is
// clamped to the box. All random draws for a mode happen before any of that
// mode's evaluations, in ascending rank order, dimensions ascending.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dgopt/errors.hpp"
#include "dgopt/network.hpp"

namespace dgopt {

// Uniform doubles from mt19937_64 via a fixed 53-bit conversion, so the
// stream does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t index(std::size_t n) {
    const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return std::min(i, n - 1);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<bool> open_hi;  // true: the dimension lives in [lo, hi)

  std::size_t dim() const noexcept { return lo.size(); }

  void add(double low, double high, bool open = false) {
    lo.push_back(low);
    hi.push_back(high);
    open_hi.push_back(open);
  }

  double upper(std::size_t d) const {
    return open_hi[d] ? std::nextafter(hi[d], lo[d]) : hi[d];
  }

  double clamp(std::size_t d, double x) const {
    if (std::isnan(x)) return lo[d];
    return std::clamp(x, lo[d], upper(d));
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t d = 0; d < dim(); ++d) {
      if (x[d] < lo[d] || x[d] > upper(d)) return false;
    }
    return true;
  }

  void validate() const {
    if (hi.size() != lo.size() || open_hi.size() != lo.size()) {
      throw ConfigError("bounds: lo/hi size mismatch");
    }
    for (std::size_t d = 0; d < dim(); ++d) {
      if (!(lo[d] < hi[d])) throw ConfigError("bounds: lo < hi required in every dimension");
    }
  }
};

struct Member {
  std::vector<double> shares;
  double cost = std::numeric_limits<double>::infinity();
  std::size_t id = 0;  // creation index, used for tie-breaks
};

struct GroupSizes {
  std::size_t g1 = 0;
  std::size_t g2 = 0;
  std::size_t g3 = 0;

  friend bool operator==(const GroupSizes&, const GroupSizes&) = default;
};

struct MarketConfig {
  std::size_t pop_size = 50;
  int max_iter = 50;
  double g1 = 0.2;
  double g2 = 0.3;
  double g3 = 0.5;
  double eta2_0 = 0.10;
  double eta3_0 = 0.20;
  std::uint64_t seed = 1;

  // Group 1 and 2 sizes round to nearest; group 3 takes the rest.
  GroupSizes group_sizes(std::size_t n) const {
    GroupSizes s;
    s.g1 = std::min(n, static_cast<std::size_t>(std::llround(g1 * static_cast<double>(n))));
    s.g2 = std::min(n - s.g1, static_cast<std::size_t>(std::llround(g2 * static_cast<double>(n))));
    s.g3 = n - s.g1 - s.g2;
    return s;
  }

  void validate() const {
    if (pop_size < 4) throw ConfigError("market: pop_size must be at least 4");
    if (max_iter < 1) throw ConfigError("market: max_iter must be at least 1");
    if (!(g1 > 0.0 && g2 > 0.0 && g3 > 0.0) || std::abs(g1 + g2 + g3 - 1.0) > 1e-9) {
      throw ConfigError("market: group fractions must be positive and sum to 1");
    }
    if (eta2_0 < 0.0 || eta3_0 < 0.0) throw ConfigError("market: eta values must be >= 0");
    const auto s = group_sizes(pop_size);
    if (s.g1 == 0 || s.g2 == 0 || s.g3 == 0) {
      throw ConfigError("market: every group needs at least one member");
    }
  }
};

struct OptimizationTrace {
  std::vector<double> best_cost_per_iteration;  // entry 0 is the initial population
  Member best_member;
  std::size_t evaluations = 0;
};

// Sorts ascending by cost, ties by creation id, and returns the group sizes.
inline GroupSizes rank_and_group(std::vector<Member>& population, const MarketConfig& cfg) {
  std::sort(population.begin(), population.end(), [](const Member& a, const Member& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.id < b.id;
  });
  return cfg.group_sizes(population.size());
}

inline void balanced_update_group2(std::span<double> x, std::span<const double> best,
                                   std::span<const double> r, const Bounds& bounds) {
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = bounds.clamp(d, r[d] * best[d] + (1.0 - r[d]) * x[d]);
  }
}

inline void balanced_update_group2(std::span<double> x, std::span<const double> best,
                                   const Bounds& bounds, Rng& rng) {
  std::vector<double> r(x.size());
  for (auto& v : r) v = rng.uniform();
  balanced_update_group2(x, best, r, bounds);
}

inline void balanced_update_group3(std::span<double> x, std::span<const double> best,
                                   std::span<const double> elite, double r1, double r2,
                                   const Bounds& bounds) {
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = bounds.clamp(d, x[d] + 2.0 * r1 * (best[d] - x[d]) + 2.0 * r2 * (elite[d] - x[d]));
  }
}

inline double unbalanced_eta(int group, int t, const MarketConfig& cfg) {
  const double eta0 = group == 2 ? cfg.eta2_0 : cfg.eta3_0;
  return eta0 * (1.0 - static_cast<double>(t) / static_cast<double>(cfg.max_iter));
}

inline void unbalanced_update(std::span<double> x, double eta, std::span<const double> r,
                              const Bounds& bounds) {
  for (std::size_t d = 0; d < x.size(); ++d) {
    x[d] = bounds.clamp(d, x[d] + eta * (2.0 * r[d] - 1.0) * (bounds.hi[d] - bounds.lo[d]));
  }
}

inline void unbalanced_update(std::span<double> x, int group, int t, const MarketConfig& cfg,
                              const Bounds& bounds, Rng& rng) {
  std::vector<double> r(x.size());
  for (auto& v : r) v = rng.uniform();
  unbalanced_update(x, unbalanced_eta(group, t, cfg), r, bounds);
}

enum class MarketPhase { kInitial, kBalanced, kUnbalanced };

// Observer hook: called before and after each mode with the ranked population.
struct PhaseEvent {
  MarketPhase phase;
  int iteration;
  bool after;
};

struct NoObserver {
  void operator()(const PhaseEvent&, std::span<const Member>, const GroupSizes&) const {}
};

namespace detail {

template <typename Evaluator>
double checked_cost(Evaluator& evaluate, std::span<const double> shares) {
  const double c = evaluate(shares);
  return std::isnan(c) ? std::numeric_limits<double>::infinity() : c;
}

}  // namespace detail

template <typename Evaluator>
std::vector<Member> initialize(Evaluator& evaluate, const MarketConfig& cfg, const Bounds& bounds,
                               Rng& rng, std::size_t* evaluations = nullptr) {
  std::vector<Member> pop(cfg.pop_size);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    pop[i].id = i;
    pop[i].shares.resize(bounds.dim());
    for (std::size_t d = 0; d < bounds.dim(); ++d) {
      pop[i].shares[d] = bounds.clamp(d, bounds.lo[d] + rng.uniform() * (bounds.hi[d] - bounds.lo[d]));
    }
  }
  for (auto& m : pop) m.cost = detail::checked_cost(evaluate, m.shares);
  if (evaluations) *evaluations += pop.size();
  rank_and_group(pop, cfg);
  return pop;
}

template <typename Evaluator, typename Observer = NoObserver>
OptimizationTrace optimize(Evaluator&& evaluate, const MarketConfig& cfg, const Bounds& bounds,
                           Rng& rng, Observer&& observe = {}) {
  cfg.validate();
  bounds.validate();
  OptimizationTrace trace;
  auto pop = initialize(evaluate, cfg, bounds, rng, &trace.evaluations);
  auto sizes = cfg.group_sizes(pop.size());
  observe(PhaseEvent{MarketPhase::kInitial, 0, true}, pop, sizes);
  trace.best_cost_per_iteration.push_back(pop.front().cost);

  const std::size_t g2_begin = sizes.g1;
  const std::size_t g3_begin = sizes.g1 + sizes.g2;
  const std::size_t dim = bounds.dim();
  std::vector<double> r(dim);

  auto evaluate_tail = [&] {
    for (std::size_t i = g2_begin; i < pop.size(); ++i) {
      pop[i].cost = detail::checked_cost(evaluate, pop[i].shares);
    }
    trace.evaluations += pop.size() - g2_begin;
  };

  for (int t = 1; t <= cfg.max_iter; ++t) {
    observe(PhaseEvent{MarketPhase::kBalanced, t, false}, pop, sizes);
    const std::vector<double> best = pop.front().shares;
    for (std::size_t i = g2_begin; i < g3_begin; ++i) {
      for (auto& v : r) v = rng.uniform();
      balanced_update_group2(pop[i].shares, best, r, bounds);
    }
    for (std::size_t i = g3_begin; i < pop.size(); ++i) {
      const auto& elite = pop[rng.index(sizes.g1)].shares;
      const double r1 = rng.uniform();
      const double r2 = rng.uniform();
      balanced_update_group3(pop[i].shares, best, elite, r1, r2, bounds);
    }
    evaluate_tail();
    sizes = rank_and_group(pop, cfg);
    observe(PhaseEvent{MarketPhase::kBalanced, t, true}, pop, sizes);

    observe(PhaseEvent{MarketPhase::kUnbalanced, t, false}, pop, sizes);
    const double eta2 = unbalanced_eta(2, t, cfg);
    const double eta3 = unbalanced_eta(3, t, cfg);
    for (std::size_t i = g2_begin; i < pop.size(); ++i) {
      for (auto& v : r) v = rng.uniform();
      unbalanced_update(pop[i].shares, i < g3_begin ? eta2 : eta3, r, bounds);
    }
    evaluate_tail();
    sizes = rank_and_group(pop, cfg);
    observe(PhaseEvent{MarketPhase::kUnbalanced, t, true}, pop, sizes);

    trace.best_cost_per_iteration.push_back(pop.front().cost);
  }
  trace.best_member = pop.front();
  return trace;
}

// Seeds the random stream from cfg.seed.
template <typename Evaluator>
OptimizationTrace optimize(Evaluator&& evaluate, const MarketConfig& cfg, const Bounds& bounds) {
  Rng rng(cfg.seed);
  return optimize(std::forward<Evaluator>(evaluate), cfg, bounds, rng);
}

inline std::size_t expected_evaluations(const MarketConfig& cfg) {
  const auto s = cfg.group_sizes(cfg.pop_size);
  return cfg.pop_size + 2 * static_cast<std::size_t>(cfg.max_iter) * (s.g2 + s.g3);
}

// DG share vectors interleave (location, size) per DG. A location share l in
// [2, n_b + 1) decodes to bus floor(l); sizes pass through.
inline Bounds placement_bounds(std::size_t bus_count, std::size_t n_dg, double p_max) {
  Bounds b;
  for (std::size_t k = 0; k < n_dg; ++k) {
    b.add(2.0, static_cast<double>(bus_count) + 1.0, true);
    b.add(0.0, p_max);
  }
  return b;
}

inline std::vector<DgPlacement> decode_shares(std::span<const double> shares,
                                              std::size_t bus_count) {
  std::vector<DgPlacement> out;
  out.reserve(shares.size() / 2);
  for (std::size_t k = 0; k + 1 < shares.size(); k += 2) {
    int bus = static_cast<int>(std::floor(shares[k]));
    bus = std::clamp(bus, 2, static_cast<int>(bus_count));
    out.push_back({bus, shares[k + 1], 1.0});
  }
  return out;
}

inline std::vector<double> encode_placements(std::span<const DgPlacement> placements) {
  std::vector<double> shares;
  shares.reserve(2 * placements.size());
  for (const auto& p : placements) {
    shares.push_back(static_cast<double>(p.bus) + 0.5);
    shares.push_back(p.p_mw);
  }
  return shares;
}

}  // namespace dgopt
