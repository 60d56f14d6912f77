#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dgopt/network.hpp"
#include "support/oracles.hpp"

namespace dgopt {
namespace {

using testing::data_path;

constexpr const char* kTwoBusBuses = "bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,100,50\n";
constexpr const char* kTwoBusBranches = "from_bus,to_bus,r_ohm,x_ohm\n1,2,0.5,0.25\n";

ParseError parse_error(const std::string& buses, const std::string& branches) {
  try {
    parse_network(buses, branches);
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "expected a parse error";
  return ParseError(ParseErrorKind::kMalformedRow, "none", 0, "");
}

TEST(ParseNetwork, MinimalTwoBus) {
  const auto net = parse_network(kTwoBusBuses, kTwoBusBranches);
  ASSERT_EQ(net.bus_count(), 2u);
  ASSERT_EQ(net.branches.size(), 1u);
  EXPECT_TRUE(net.bus(1).is_slack);
  EXPECT_FALSE(net.bus(2).is_slack);
  EXPECT_DOUBLE_EQ(net.bus(2).p_load, 0.1);
  EXPECT_DOUBLE_EQ(net.bus(2).q_load, 0.05);
  EXPECT_EQ(net.units, Units::kPhysical);
  EXPECT_FALSE(net.branches[0].ampacity.has_value());
}

TEST(ParseNetwork, Ieee33TotalsMatchColumnSums) {
  // Column sums straight from the file, without the library's CSV reader.
  std::ifstream in(data_path("ieee33_bus.csv"));
  std::string line;
  std::getline(in, line);
  double p_kw = 0.0;
  double q_kvar = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, p, q;
    std::getline(ss, id, ',');
    std::getline(ss, p, ',');
    std::getline(ss, q, ',');
    p_kw += std::stod(p);
    q_kvar += std::stod(q);
    ++rows;
  }
  EXPECT_EQ(rows, 33);
  EXPECT_DOUBLE_EQ(p_kw, 3715.0);
  EXPECT_DOUBLE_EQ(q_kvar, 2300.0);

  const auto net = testing::ieee33();
  EXPECT_EQ(net.bus_count(), 33u);
  EXPECT_EQ(net.branches.size(), 32u);
  EXPECT_NEAR(net.total_p_load(), p_kw / 1000.0, 1e-12);
  EXPECT_NEAR(net.total_q_load(), q_kvar / 1000.0, 1e-12);
}

TEST(ParseNetwork, Ieee69Shape) {
  const auto net = testing::ieee69();
  EXPECT_EQ(net.bus_count(), 69u);
  EXPECT_EQ(net.branches.size(), 68u);
  EXPECT_NEAR(net.total_p_load(), 3.8021, 1e-12);
}

TEST(ParseNetwork, UnknownBusNamesLine) {
  const auto e = parse_error(kTwoBusBuses,
                             "from_bus,to_bus,r_ohm,x_ohm\n1,2,0.5,0.25\n2,99,0.1,0.1\n");
  EXPECT_EQ(e.kind(), ParseErrorKind::kUnknownBus);
  EXPECT_EQ(e.line(), 3u);
  EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
}

TEST(ParseNetwork, DistinctErrorKinds) {
  EXPECT_EQ(parse_error("bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,1,1\n2,3,3\n", kTwoBusBranches).kind(),
            ParseErrorKind::kDuplicateBus);
  EXPECT_EQ(parse_error("bus_id,p_load_kw,q_load_kvar\n2,1,1\n3,1,1\n", kTwoBusBranches).kind(),
            ParseErrorKind::kMissingSlack);
  const auto malformed =
      parse_error("bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,abc,1\n", kTwoBusBranches);
  EXPECT_EQ(malformed.kind(), ParseErrorKind::kMalformedRow);
  EXPECT_EQ(malformed.line(), 3u);
  EXPECT_EQ(parse_error("bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,1\n", kTwoBusBranches).kind(),
            ParseErrorKind::kMalformedRow);
  EXPECT_EQ(parse_error("id,p,q\n1,0,0\n", kTwoBusBranches).kind(), ParseErrorKind::kMissingHeader);
  EXPECT_EQ(parse_error(kTwoBusBuses, "from_bus,to_bus,r_ohm,x_ohm\n1,2,0,0.1\n").kind(),
            ParseErrorKind::kInvalidValue);
  EXPECT_EQ(parse_error("bus_id,p_load_kw,q_load_kvar\n1,5,0\n2,1,1\n", kTwoBusBranches).kind(),
            ParseErrorKind::kInvalidValue);
}

TEST(ParseNetwork, OptionalAmpacityColumn) {
  const auto net = parse_network(
      "bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,10,5\n3,10,5\n",
      "from_bus,to_bus,r_ohm,x_ohm,ampacity_pu\n1,2,0.5,0.25,0.8\n2,3,0.5,0.25,\n");
  ASSERT_TRUE(net.branches[0].ampacity.has_value());
  EXPECT_DOUBLE_EQ(*net.branches[0].ampacity, 0.8);
  EXPECT_FALSE(net.branches[1].ampacity.has_value());
}

TEST(PerUnit, BaseImpedance) {
  const PerUnitBase base(1.0, 12.66);
  EXPECT_DOUBLE_EQ(base.z_base(), 12.66 * 12.66);
  EXPECT_NEAR(base.z_base(), 160.2756, 1e-10);
  EXPECT_THROW(PerUnitBase(0.0, 12.66), ConfigError);
}

TEST(PerUnit, ScalesImpedanceAndPower) {
  const auto net = parse_network("bus_id,p_load_kw,q_load_kvar\n1,0,0\n2,100,40\n",
                                 "from_bus,to_bus,r_ohm,x_ohm\n1,2,160.2756,80.1378\n");
  const auto pu = to_per_unit(net);
  EXPECT_EQ(pu.units, Units::kPerUnit);
  EXPECT_NEAR(pu.branches[0].r, 1.0, 1e-12);
  EXPECT_NEAR(pu.branches[0].x, 0.5, 1e-12);
  EXPECT_NEAR(pu.bus(2).p_load, 0.1, 1e-15);
  EXPECT_NEAR(pu.bus(2).q_load, 0.04, 1e-15);
  EXPECT_THROW(to_per_unit(pu), InvalidStateError);
}

TEST(PerUnit, RoundTripProperty) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto net = testing::ieee69();
    net.base = PerUnitBase(u(gen), u(gen) * 5.0);
    for (auto& b : net.buses) {
      if (!b.is_slack) b.p_load = u(gen);
    }
    for (auto& br : net.branches) br.r = u(gen);
    const auto back = to_physical(to_per_unit(net));
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      EXPECT_NEAR(back.buses[i].p_load, net.buses[i].p_load, 1e-12 * std::abs(net.buses[i].p_load));
      EXPECT_NEAR(back.buses[i].q_load, net.buses[i].q_load, 1e-12 * std::abs(net.buses[i].q_load));
    }
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      EXPECT_NEAR(back.branches[k].r, net.branches[k].r, 1e-12 * net.branches[k].r);
      EXPECT_NEAR(back.branches[k].x, net.branches[k].x, 1e-12 * net.branches[k].x);
      EXPECT_EQ(back.branches[k].from_bus, net.branches[k].from_bus);
    }
  }
}

TEST(ValidateRadial, ShippedFeedersAreTrees) {
  for (const auto& net : {testing::ieee33(), testing::ieee69()}) {
    EXPECT_TRUE(validate_radial(net).ok());
    // Independent check: n - 1 branches and a traversal from bus 1 reaches everything.
    ASSERT_EQ(net.branches.size() + 1, net.bus_count());
    std::vector<std::vector<int>> adj(net.bus_count() + 1);
    for (const auto& br : net.branches) {
      adj[br.from_bus].push_back(br.to_bus);
      adj[br.to_bus].push_back(br.from_bus);
    }
    std::vector<int> seen(net.bus_count() + 1, 0);
    std::vector<int> queue{1};
    seen[1] = 1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      for (int w : adj[queue[h]]) {
        if (!seen[w]) {
          seen[w] = 1;
          queue.push_back(w);
        }
      }
    }
    EXPECT_EQ(queue.size(), net.bus_count());
  }
}

TEST(ValidateRadial, DuplicateBranchIsCycle) {
  auto net = testing::ieee33();
  net.branches.push_back({2, 3, 0.493, 0.2511, {}});
  const auto report = validate_radial(net);
  EXPECT_TRUE(report.has(ViolationKind::kCycle));
  EXPECT_TRUE(report.has(ViolationKind::kBranchCountMismatch));
  EXPECT_FALSE(report.has(ViolationKind::kDisconnected));
}

TEST(ValidateRadial, RemovedBranchDisconnects) {
  auto net = testing::ieee33();
  std::erase_if(net.branches, [](const Branch& b) { return b.from_bus == 2 && b.to_bus == 3; });
  const auto report = validate_radial(net);
  EXPECT_TRUE(report.has(ViolationKind::kDisconnected));
  EXPECT_TRUE(report.has(ViolationKind::kBranchCountMismatch));
  EXPECT_FALSE(report.has(ViolationKind::kCycle));
}

TEST(ApplyDg, EmptyIsIdentity) {
  const auto net = testing::ieee33();
  const auto out = apply_dg(net, std::vector<DgPlacement>{});
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    EXPECT_EQ(out.buses[i].p_load, net.buses[i].p_load);
    EXPECT_EQ(out.buses[i].q_load, net.buses[i].q_load);
  }
}

TEST(ApplyDg, SubtractsActivePowerOnly) {
  const auto net = testing::ieee33();
  const auto out = apply_dg(net, {{13, 0.963, 1.0}});
  EXPECT_DOUBLE_EQ(out.bus(13).p_load, net.bus(13).p_load - 0.963);
  EXPECT_EQ(out.bus(13).q_load, net.bus(13).q_load);
  EXPECT_EQ(net.bus(13).p_load, 0.06);  // input untouched

  const auto twice = apply_dg(net, {{10, 0.5, 1.0}, {10, 0.5, 1.0}});
  EXPECT_DOUBLE_EQ(twice.bus(10).p_load, net.bus(10).p_load - 1.0);
}

TEST(ApplyDg, ScalesInPerUnit) {
  auto net = testing::ieee33();
  net.base = PerUnitBase(10.0, 12.66);
  const auto pu = to_per_unit(net);
  const auto out = apply_dg(pu, {{13, 1.0, 1.0}});
  EXPECT_DOUBLE_EQ(out.bus(13).p_load, pu.bus(13).p_load - 0.1);
}

TEST(ApplyDg, RejectsSlackAndOutOfRange) {
  const auto net = testing::ieee33();
  EXPECT_THROW(apply_dg(net, {{1, 0.5, 1.0}}), PlacementError);
  EXPECT_THROW(apply_dg(net, {{34, 0.5, 1.0}}), PlacementError);
  EXPECT_THROW(apply_dg(net, {{5, -0.1, 1.0}}), PlacementError);
  EXPECT_THROW(apply_dg(net, {{5, 0.1, 0.9}}), PlacementError);
}

TEST(ApplyDg, LinearInPlacementsProperty) {
  const auto net = testing::ieee69();
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> bus(2, 69);
  std::uniform_real_distribution<double> mw(0.0, 1.2);
  for (int trial = 0; trial < 100; ++trial) {
    const DgPlacement a{bus(gen), mw(gen), 1.0};
    const DgPlacement b{bus(gen), mw(gen), 1.0};
    const auto stepwise = apply_dg(apply_dg(net, {a}), {b});
    const auto joint = apply_dg(net, {a, b});
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      EXPECT_EQ(stepwise.buses[i].p_load, joint.buses[i].p_load);
      EXPECT_EQ(joint.buses[i].q_load, net.buses[i].q_load);
    }
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      EXPECT_EQ(joint.branches[k].r, net.branches[k].r);
      EXPECT_EQ(joint.branches[k].x, net.branches[k].x);
      EXPECT_EQ(joint.branches[k].from_bus, net.branches[k].from_bus);
      EXPECT_EQ(joint.branches[k].to_bus, net.branches[k].to_bus);
    }
  }
}

}  // namespace
}  // namespace dgopt
