#pragma once

// Radial feeder model: CSV ingestion, per-unit scaling, radiality checks and
// DG injection.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgopt/errors.hpp"

namespace dgopt {

struct Bus {
  int id = 0;
  double p_load = 0.0;  // MW, or pu once scaled
  double q_load = 0.0;  // MVAr, or pu once scaled
  bool is_slack = false;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;  // ohm, or pu once scaled
  double x = 0.0;
  std::optional<double> ampacity;  // pu; empty means unconstrained
};

class PerUnitBase {
 public:
  PerUnitBase() = default;
  PerUnitBase(double s_base_mva, double v_base_kv) : s_base_(s_base_mva), v_base_(v_base_kv) {
    if (!(s_base_mva > 0.0) || !(v_base_kv > 0.0)) {
      throw ConfigError("per-unit base values must be positive");
    }
  }

  double s_base() const noexcept { return s_base_; }
  double v_base() const noexcept { return v_base_; }
  double z_base() const noexcept { return v_base_ * v_base_ / s_base_; }

  friend bool operator==(const PerUnitBase&, const PerUnitBase&) = default;

 private:
  double s_base_ = 1.0;
  double v_base_ = 12.66;
};

enum class Units { kPhysical, kPerUnit };

struct Network {
  std::vector<Bus> buses;  // ordered by id, buses[i].id == i + 1
  std::vector<Branch> branches;
  PerUnitBase base;
  Units units = Units::kPhysical;

  std::size_t bus_count() const noexcept { return buses.size(); }
  const Bus& bus(int id) const { return buses.at(static_cast<std::size_t>(id - 1)); }
  Bus& bus(int id) { return buses.at(static_cast<std::size_t>(id - 1)); }

  double total_p_load() const {
    return std::accumulate(buses.begin(), buses.end(), 0.0,
                           [](double acc, const Bus& b) { return acc + b.p_load; });
  }
  double total_q_load() const {
    return std::accumulate(buses.begin(), buses.end(), 0.0,
                           [](double acc, const Bus& b) { return acc + b.q_load; });
  }
};

struct DgPlacement {
  int bus = 0;
  double p_mw = 0.0;
  double power_factor = 1.0;

  friend bool operator==(const DgPlacement&, const DgPlacement&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view field) {
  T value{};
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string_view> fields;
};

// Splits text into non-blank rows. The first non-blank row must match
// `header` (case-sensitive, optional trailing columns given by `optional`).
// Returns the number of header columns found.
inline std::size_t read_table(std::string_view text, std::string_view table,
                              std::span<const std::string_view> header,
                              std::span<const std::string_view> optional,
                              std::vector<CsvRow>& rows) {
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (columns == 0) {
      const bool prefix_ok =
          fields.size() >= header.size() && fields.size() <= header.size() + optional.size() &&
          std::equal(header.begin(), header.end(), fields.begin()) &&
          std::equal(fields.begin() + static_cast<std::ptrdiff_t>(header.size()), fields.end(),
                     optional.begin());
      if (!prefix_ok) {
        throw ParseError(ParseErrorKind::kMissingHeader, std::string(table), line_no,
                         std::string(line));
      }
      columns = fields.size();
      continue;
    }
    if (fields.size() != columns) {
      throw ParseError(ParseErrorKind::kMalformedRow, std::string(table), line_no,
                       "expected " + std::to_string(columns) + " fields, got " +
                           std::to_string(fields.size()));
    }
    rows.push_back({line_no, std::move(fields)});
  }
  if (columns == 0) {
    throw ParseError(ParseErrorKind::kMissingHeader, std::string(table), 0, "empty table");
  }
  return columns;
}

template <typename T>
T field_as(const CsvRow& row, std::size_t index, std::string_view table, std::string_view name) {
  const auto value = parse_number<T>(row.fields[index]);
  if (!value) {
    throw ParseError(ParseErrorKind::kMalformedRow, std::string(table), row.line,
                     "bad " + std::string(name) + " '" + std::string(row.fields[index]) + "'");
  }
  return *value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// Parses the bus and branch tables (schemas in README). Loads come in as
// kW/kVAr and are stored in MW/MVAr; the network is left in physical units.
inline Network parse_network(std::string_view bus_table, std::string_view branch_table,
                             PerUnitBase base = {}) {
  using detail::CsvRow;
  constexpr std::string_view kBusHeader[] = {"bus_id", "p_load_kw", "q_load_kvar"};
  constexpr std::string_view kBranchHeader[] = {"from_bus", "to_bus", "r_ohm", "x_ohm"};
  constexpr std::string_view kBranchOptional[] = {"ampacity_pu"};

  std::vector<CsvRow> bus_rows;
  detail::read_table(bus_table, "bus table", kBusHeader, {}, bus_rows);

  Network net;
  net.base = base;
  net.units = Units::kPhysical;

  std::vector<std::size_t> line_of;  // source line per bus, for error messages
  for (const auto& row : bus_rows) {
    Bus b;
    b.id = detail::field_as<int>(row, 0, "bus table", "bus_id");
    b.p_load = detail::field_as<double>(row, 1, "bus table", "p_load_kw") / 1000.0;
    b.q_load = detail::field_as<double>(row, 2, "bus table", "q_load_kvar") / 1000.0;
    if (b.id < 1) {
      throw ParseError(ParseErrorKind::kInvalidValue, "bus table", row.line,
                       "bus ids start at 1");
    }
    if (b.p_load < 0.0 || b.q_load < 0.0) {
      throw ParseError(ParseErrorKind::kInvalidValue, "bus table", row.line,
                       "negative load on bus " + std::to_string(b.id));
    }
    const auto dup = std::find_if(net.buses.begin(), net.buses.end(),
                                  [&](const Bus& other) { return other.id == b.id; });
    if (dup != net.buses.end()) {
      throw ParseError(ParseErrorKind::kDuplicateBus, "bus table", row.line,
                       "bus " + std::to_string(b.id));
    }
    b.is_slack = (b.id == 1);
    net.buses.push_back(b);
    line_of.push_back(row.line);
  }

  std::vector<std::size_t> order(net.buses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return net.buses[a].id < net.buses[b].id; });
  std::vector<Bus> sorted;
  sorted.reserve(order.size());
  for (auto i : order) sorted.push_back(net.buses[i]);

  if (sorted.empty() || sorted.front().id != 1) {
    throw ParseError(ParseErrorKind::kMissingSlack, "bus table", 0, "bus 1 not present");
  }
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].id != static_cast<int>(i + 1)) {
      throw ParseError(ParseErrorKind::kInvalidValue, "bus table", 0,
                       "bus ids are not contiguous: bus " + std::to_string(i + 1) + " missing");
    }
  }
  if (sorted.front().p_load != 0.0 || sorted.front().q_load != 0.0) {
    throw ParseError(ParseErrorKind::kInvalidValue, "bus table", line_of[order.front()],
                     "slack bus 1 must carry zero load");
  }
  net.buses = std::move(sorted);

  std::vector<CsvRow> branch_rows;
  const auto columns =
      detail::read_table(branch_table, "branch table", kBranchHeader, kBranchOptional, branch_rows);
  const int n = static_cast<int>(net.buses.size());
  for (const auto& row : branch_rows) {
    Branch br;
    br.from_bus = detail::field_as<int>(row, 0, "branch table", "from_bus");
    br.to_bus = detail::field_as<int>(row, 1, "branch table", "to_bus");
    br.r = detail::field_as<double>(row, 2, "branch table", "r_ohm");
    br.x = detail::field_as<double>(row, 3, "branch table", "x_ohm");
    if (columns == 5 && !row.fields[4].empty()) {
      br.ampacity = detail::field_as<double>(row, 4, "branch table", "ampacity_pu");
    }
    for (int end : {br.from_bus, br.to_bus}) {
      if (end < 1 || end > n) {
        throw ParseError(ParseErrorKind::kUnknownBus, "branch table", row.line,
                         "bus " + std::to_string(end));
      }
    }
    if (br.from_bus == br.to_bus) {
      throw ParseError(ParseErrorKind::kInvalidValue, "branch table", row.line,
                       "branch connects bus " + std::to_string(br.from_bus) + " to itself");
    }
    if (!(br.r > 0.0) || br.x < 0.0) {
      throw ParseError(ParseErrorKind::kInvalidValue, "branch table", row.line,
                       "require r > 0 and x >= 0");
    }
    if (br.ampacity && !(*br.ampacity > 0.0)) {
      throw ParseError(ParseErrorKind::kInvalidValue, "branch table", row.line,
                       "ampacity must be positive");
    }
    net.branches.push_back(br);
  }
  return net;
}

inline Network load_network(const std::string& bus_path, const std::string& branch_path,
                            PerUnitBase base = {}) {
  return parse_network(detail::read_file(bus_path), detail::read_file(branch_path), base);
}

inline Network to_per_unit(const Network& net) {
  if (net.units != Units::kPhysical) {
    throw InvalidStateError("network is already in per-unit");
  }
  Network out = net;
  const double z_base = net.base.z_base();
  const double s_base = net.base.s_base();
  for (auto& b : out.buses) {
    b.p_load /= s_base;
    b.q_load /= s_base;
  }
  for (auto& br : out.branches) {
    br.r /= z_base;
    br.x /= z_base;
  }
  out.units = Units::kPerUnit;
  return out;
}

inline Network to_physical(const Network& net) {
  if (net.units != Units::kPerUnit) {
    throw InvalidStateError("network is already in physical units");
  }
  Network out = net;
  const double z_base = net.base.z_base();
  const double s_base = net.base.s_base();
  for (auto& b : out.buses) {
    b.p_load *= s_base;
    b.q_load *= s_base;
  }
  for (auto& br : out.branches) {
    br.r *= z_base;
    br.x *= z_base;
  }
  out.units = Units::kPhysical;
  return out;
}

enum class ViolationKind { kBranchCountMismatch, kCycle, kDisconnected, kBadEndpoint, kSlack };

struct TopologyViolation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<TopologyViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const TopologyViolation& v) { return v.kind == kind; });
  }
};

// Collects every radiality violation instead of stopping at the first one.
inline ValidationReport validate_radial(const Network& net) {
  ValidationReport report;
  const std::size_t n = net.bus_count();
  if (net.branches.size() + 1 != n) {
    report.violations.push_back({ViolationKind::kBranchCountMismatch,
                                 std::to_string(net.branches.size()) + " branches for " +
                                     std::to_string(n) + " buses"});
  }
  const auto slack_count = std::count_if(net.buses.begin(), net.buses.end(),
                                         [](const Bus& b) { return b.is_slack; });
  if (slack_count != 1 || n == 0 || !net.buses.front().is_slack) {
    report.violations.push_back({ViolationKind::kSlack, "exactly one slack bus (bus 1) required"});
  }

  // Union-find for cycle detection.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  std::vector<std::vector<std::size_t>> adjacency(n);
  for (const auto& br : net.branches) {
    const bool in_range = br.from_bus >= 1 && br.to_bus >= 1 &&
                          static_cast<std::size_t>(br.from_bus) <= n &&
                          static_cast<std::size_t>(br.to_bus) <= n && br.from_bus != br.to_bus;
    const std::string name = "(" + std::to_string(br.from_bus) + "," + std::to_string(br.to_bus) + ")";
    if (!in_range) {
      report.violations.push_back({ViolationKind::kBadEndpoint, "branch " + name});
      continue;
    }
    const auto a = static_cast<std::size_t>(br.from_bus - 1);
    const auto b = static_cast<std::size_t>(br.to_bus - 1);
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
    const auto ra = find(a);
    const auto rb = find(b);
    if (ra == rb) {
      report.violations.push_back({ViolationKind::kCycle, "branch " + name + " closes a loop"});
    } else {
      parent[ra] = rb;
    }
  }

  if (n > 0) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : adjacency[v]) {
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (!seen[v]) {
        report.violations.push_back({ViolationKind::kDisconnected,
                                     "bus " + std::to_string(v + 1) + " unreachable from slack"});
      }
    }
  }
  return report;
}

// DGs are negative constant-P loads. Sizes are in MW and scaled by s_base when
// the network is per-unit.
inline Network apply_dg(const Network& net, std::span<const DgPlacement> placements) {
  Network out = net;
  const int n = static_cast<int>(net.bus_count());
  const double scale = net.units == Units::kPerUnit ? 1.0 / net.base.s_base() : 1.0;
  for (const auto& dg : placements) {
    if (dg.bus < 2 || dg.bus > n) {
      throw PlacementError("DG bus " + std::to_string(dg.bus) + " outside 2.." + std::to_string(n));
    }
    if (!std::isfinite(dg.p_mw) || dg.p_mw < 0.0) {
      throw PlacementError("DG size must be finite and non-negative");
    }
    if (dg.power_factor != 1.0) {
      throw PlacementError("only unity power factor DGs are modeled");
    }
    out.bus(dg.bus).p_load -= dg.p_mw * scale;
  }
  return out;
}

inline Network apply_dg(const Network& net, std::initializer_list<DgPlacement> placements) {
  return apply_dg(net, std::span<const DgPlacement>(placements.begin(), placements.size()));
}

}  // namespace dgopt
