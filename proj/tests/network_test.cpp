#include "persmon/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace persmon {
namespace {

NetworkGraph line3() {
  std::vector<Target> ts;
  for (int i = 0; i < 3; ++i) {
    ts.emplace_back(make_target(i, {static_cast<double>(i), 0.0}, 0.1, 0.1, 1.0, 1.0, 4.0));
  }
  return NetworkGraph(std::move(ts), {{0, 1}, {1, 2}});
}

TEST(NetworkTest, NeighborSets) {
  const auto g = line3();
  EXPECT_EQ(g.neighbors(0), (std::vector<TargetId>{1}));
  EXPECT_EQ(g.neighbors(0, true), (std::vector<TargetId>{0, 1}));
  EXPECT_EQ(g.neighbors(1), (std::vector<TargetId>{0, 2}));
  EXPECT_EQ(g.neighbors(1, true), (std::vector<TargetId>{1, 0, 2}));
  EXPECT_THROW(g.neighbors(3), std::out_of_range);
  EXPECT_DOUBLE_EQ(g.rho(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(g.rho(1, 0), 1.0);
  EXPECT_THROW(g.rho(0, 2), std::out_of_range);
  EXPECT_DOUBLE_EQ(g.shortest_travel_times()[0][2], 2.0);
}

TEST(NetworkTest, FullyConnectedTriangle) {
  std::vector<Target> ts;
  ts.emplace_back(make_target(0, {0.0, 0.0}, 0.1, 0.1, 1.0, 1.0, 4.0));
  ts.emplace_back(make_target(1, {1.0, 0.0}, 0.1, 0.1, 1.0, 1.0, 4.0));
  ts.emplace_back(make_target(2, {0.0, 1.0}, 0.1, 0.1, 1.0, 1.0, 4.0));
  const NetworkGraph g(std::move(ts), {{0, 1}, {1, 2}, {2, 0}});
  EXPECT_EQ(g.neighbors(0), (std::vector<TargetId>{1, 2}));
  EXPECT_TRUE(g.connected());
  EXPECT_EQ(g.edge_list().size(), 3u);
}

TEST(NetworkTest, DerivedQuantities) {
  for (double A : {-0.7, -0.01, 0.0, 0.01, 0.4, 30.0}) {
    const Target t(make_target(0, {0, 0}, A, 0.1, 1.3, 1.0, 3.0));
    const auto& d = t.derived;
    EXPECT_GT(d.v1, 0.0);
    EXPECT_LT(d.v2, 0.0);
    EXPECT_NEAR(d.v1 * d.v2, -t.params.G / t.params.Q, 1e-15);
    EXPECT_DOUBLE_EQ(d.omega_ss, 1.0 / d.v1);
    if (A < 0.0) {
      EXPECT_LT(d.omega_ss, d.omega_bar_ss);
    } else {
      EXPECT_TRUE(std::isinf(d.omega_bar_ss));
    }
  }
}

TEST(NetworkTest, RejectsInvalidTargets) {
  EXPECT_THROW(make_target(0, {0, 0}, 0.1, 0.1, 0.0, 1.0, 1.0), ConfigError);
  EXPECT_THROW(make_target(0, {0, 0}, 0.1, 0.1, 1.0, 1.0, -1.0), ConfigError);
  EXPECT_THROW(make_target(0, {0, 0}, 0.1, 0.1, 1.0, 0.0, 1.0), ConfigError);
}

TEST(NetworkTest, GeneratedConfigsSatisfyInvariants) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cfg = generate_pc({.num_targets = 10, .num_agents = 4, .sigma = 0.45, .seed = seed});
    cfg.validate();
    EXPECT_TRUE(cfg.graph.connected());
    for (int i = 0; i < cfg.num_targets(); ++i) {
      const auto& t = cfg.graph.target(i);
      EXPECT_TRUE(in_invariant_band(t, cfg.omega0[i]));
      EXPECT_LE(cfg.omega0[i], 10.0 * t.derived.omega_ss);
      EXPECT_GE(t.params.A, 0.01);
      EXPECT_LE(t.params.A, 0.41);
      EXPECT_GE(t.params.R, 2.0);
      EXPECT_LE(t.params.R, 10.0);
      EXPECT_NEAR(t.derived.v1 * t.derived.v2, -t.params.G / t.params.Q, 1e-15);
      for (int j : cfg.graph.neighbors(i)) {
        const auto& a = t.params.position;
        const auto& b = cfg.graph.target(j).params.position;
        EXPECT_LT(std::hypot(a[0] - b[0], a[1] - b[1]), 0.45);
      }
    }
    EXPECT_EQ(cfg.agent_start_targets, (std::vector<TargetId>{0, 1, 2, 3}));
  }
}

TEST(NetworkTest, GenerationIsDeterministic) {
  const auto a = generate_pc({.num_targets = 7, .num_agents = 2, .sigma = 0.7, .seed = 5});
  const auto b = generate_pc({.num_targets = 7, .num_agents = 2, .sigma = 0.7, .seed = 5});
  ASSERT_EQ(a.num_targets(), b.num_targets());
  for (int i = 0; i < a.num_targets(); ++i) {
    const auto& pa = a.graph.target(i).params;
    const auto& pb = b.graph.target(i).params;
    EXPECT_EQ(pa.position, pb.position);
    EXPECT_EQ(pa.A, pb.A);
    EXPECT_EQ(pa.Q, pb.Q);
    EXPECT_EQ(pa.R, pb.R);
    EXPECT_EQ(a.omega0[i], b.omega0[i]);
  }
  EXPECT_EQ(a.graph.edge_list(), b.graph.edge_list());
}

TEST(NetworkTest, UnconnectableGenerationNamesSeed) {
  try {
    generate_pc({.num_targets = 7, .num_agents = 2, .sigma = 0.01, .seed = 42});
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_EQ(e.seed(), 42u);
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
}

TEST(NetworkTest, ValidateCatchesBadConfigs) {
  auto cfg = generate_pc({.num_targets = 5, .num_agents = 2, .sigma = 0.9, .seed = 3});
  auto bad = cfg;
  bad.agent_start_targets = {1, 1};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.omega0.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.horizon_T = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace persmon
