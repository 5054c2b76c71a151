#include "persmon/learning.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "persmon/experiment.hpp"
#include "test_support.hpp"

namespace persmon {
namespace {

// Two Gaussian blobs split by the line x0 + x1 = 0 with a margin.
std::vector<Sample> separable(std::uint64_t seed, int n = 40) {
  Rng rng(seed);
  std::vector<Sample> out;
  while (static_cast<int>(out.size()) < n) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    const double s = x[0] + x[1];
    if (std::abs(s) < 0.3) continue;
    out.push_back({x, s > 0.0 ? 1 : 0});
  }
  return out;
}

// Brute-force linear separability over a grid of directions and offsets.
bool linearly_separable(const std::vector<Sample>& d) {
  for (int a = 0; a < 360; ++a) {
    const double th = a * M_PI / 180.0;
    for (double off = -3.0; off <= 3.0; off += 0.01) {
      bool ok = true;
      for (const auto& s : d) {
        const double v = std::cos(th) * s.x[0] + std::sin(th) * s.x[1] - off;
        if ((v > 0.0) != (s.label == 1)) {
          ok = false;
          break;
        }
      }
      if (ok) return true;
    }
  }
  return false;
}

double weight_norm(const Mlp& m) { return std::sqrt(m.W1.squaredNorm() + m.W2.squaredNorm()); }

TEST(LearningTest, SeparableSetIsLearned) {
  const auto d = separable(41);
  ASSERT_TRUE(linearly_separable(d));
  TrainReport rep;
  const Mlp m = train(d, 2, {}, &rep);
  EXPECT_GE(training_accuracy(m, d), 0.95);
  EXPECT_LE(rep.final_loss, rep.initial_loss);
  EXPECT_TRUE(rep.monotone);
  EXPECT_EQ(m.hidden(), 10);
}

TEST(LearningTest, SingleLabelDataset) {
  std::vector<Sample> d;
  Rng rng(42);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd x(3);
    x << rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1);
    d.push_back({x, 2});
  }
  const Mlp m = train(d, 3, {});
  for (const auto& s : d) EXPECT_EQ(predict(m, s.x).label, 2);
}

TEST(LearningTest, GradientMatchesCentralDifferences) {
  const auto d = separable(43, 20);
  TrainOptions o;
  o.init_scale = 1.0;
  for (int rep = 0; rep < 5; ++rep) {
    o.seed = 100 + rep;
    Mlp m = init_mlp(2, 3, o);
    std::vector<Sample> d3 = d;
    for (std::size_t k = 0; k < d3.size(); ++k) d3[k].label = static_cast<int>(k % 3);
    fit_normalization(m, d3);
    Eigen::VectorXd g;
    cross_entropy(m, d3, &g);
    const Eigen::VectorXd theta = flatten(m);
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double h = 1e-6;
      Mlp p = m, q = m;
      Eigen::VectorXd tp = theta, tq = theta;
      tp[k] += h;
      tq[k] -= h;
      unflatten(p, tp);
      unflatten(q, tq);
      const double fd = (cross_entropy(p, d3) - cross_entropy(q, d3)) / (2.0 * h);
      EXPECT_LE(std::abs(fd - g[k]), 1e-5 * std::max(std::abs(fd), 1e-3)) << "param " << k;
    }
  }
}

TEST(LearningTest, PosteriorsAreNormalized) {
  Rng rng(44);
  TrainOptions o;
  o.init_scale = 3.0;
  const Mlp m = init_mlp(4, 5, o);
  for (int n = 0; n < 200; ++n) {
    Eigen::VectorXd x(4);
    for (int k = 0; k < 4; ++k) x[k] = rng.uniform(-50.0, 50.0);
    const auto p = predict(m, x);
    EXPECT_NEAR(p.posterior.sum(), 1.0, 1e-12);
    EXPECT_GT(p.posterior.minCoeff(), 0.0);
    EXPECT_GE(p.mismatch(), 0.0);
    EXPECT_LE(p.mismatch(), 1.0 - 1.0 / 5.0 + 1e-15);
  }
}

TEST(LearningTest, ZeroModelIsUniform) {
  TrainOptions o;
  o.init_scale = 0.0;
  const Mlp m = init_mlp(3, 4, o);
  const auto p = predict(m, Eigen::VectorXd::Ones(3));
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(p.posterior[k], 0.25);
  EXPECT_EQ(p.label, 0);
  EXPECT_NEAR(p.mismatch(), 0.75, 1e-15);
}

TEST(LearningTest, DimensionMismatchThrows) {
  const Mlp m = init_mlp(3, 2, {});
  EXPECT_THROW(predict(m, Eigen::VectorXd::Ones(4)), std::invalid_argument);
}

TEST(LearningTest, LargerRegularizationShrinksWeights) {
  const auto d = separable(45);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-3, 1e-1, 1.0}) {
    TrainOptions o;
    o.lambda = lambda;
    const double n = weight_norm(train(d, 2, o));
    EXPECT_LT(n, prev) << "lambda " << lambda;
    prev = n;
  }
}

TEST(LearningTest, TrainingIsDeterministic) {
  const auto d = separable(46);
  const Mlp a = train(d, 2, {});
  const Mlp b = train(d, 2, {});
  EXPECT_EQ(flatten(a), flatten(b));
}

TEST(LearningTest, ModelJsonRoundTrip) {
  const auto d = separable(47);
  const Mlp a = train(d, 2, {});
  const Mlp b = mlp_from_json(nlohmann::json::parse(mlp_to_json(a).dump()));
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.scale, b.scale);
  for (const auto& s : d) EXPECT_EQ(predict(a, s.x).posterior, predict(b, s.x).posterior);
}

TEST(LearningTest, ConfidentModelRarelyFallsBack) {
  const auto d = separable(48);
  const Mlp m = train(d, 2, {});
  int confident = 0, gated = 0;
  for (const auto& s : d) {
    const auto p = predict(m, s.x);
    if (p.posterior.maxCoeff() < 0.9 || p.label != s.label) continue;
    ++confident;
    gated += p.mismatch() > 0.25;
  }
  ASSERT_GT(confident, 0);
  EXPECT_LT(static_cast<double>(gated) / confident, 0.1);
}

ProblemConfig pc(std::uint64_t seed, double T) {
  GenerateOptions go;
  go.seed = seed;
  go.horizon_T = T;
  return generate_pc(go);
}

SimResult run(const ProblemConfig& cfg, const std::string& name, LearningOptions lo = {}) {
  RunSpec rs;
  rs.controller = name;
  rs.learning = lo;
  return run_controller(cfg, rs);
}

void expect_same_trajectory(const SimResult& a, const SimResult& b) {
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    EXPECT_EQ(a.events[k].time, b.events[k].time);
    EXPECT_EQ(a.events[k].j, b.events[k].j);
    EXPECT_EQ(a.events[k].u_i, b.events[k].u_i);
  }
  EXPECT_EQ(a.summary.J_T, b.summary.J_T);
}

TEST(LearningTest, SingleNeighborMatchesRhc) {
  std::vector<Target> ts;
  for (int k = 0; k < 2; ++k) ts.emplace_back(make_target(k, {0.6 * k, 0.0}, 0.1 + 0.1 * k, 0.2, 1.0, 1.0, 4.0));
  ProblemConfig cfg;
  cfg.graph = NetworkGraph(std::move(ts), {{0, 1}});
  cfg.agent_start_targets = {0};
  cfg.omega0 = {3.0, 3.0};
  cfg.horizon_T = 300.0;
  const auto a = run(cfg, "rhc");
  const auto b = run(cfg, "rhc-l");
  expect_same_trajectory(a, b);
  EXPECT_GT(b.controller_stats.at("learned_decisions"), 0.0);
}

TEST(LearningTest, GateAtZeroIsRhc) {
  const auto cfg = pc(2, 100.0);
  LearningOptions lo;
  lo.delta = 0.0;
  const auto a = run(cfg, "rhc");
  const auto b = run(cfg, "rhc-al", lo);
  expect_same_trajectory(a, b);
  EXPECT_EQ(b.controller_stats.at("learned_decisions"), 0.0);
  EXPECT_GT(b.controller_stats.at("trainings"), 1.0);
}

TEST(LearningTest, GateAtOneIsRhcL) {
  const auto cfg = pc(3, 200.0);
  LearningOptions lo;
  lo.delta = 1.0;
  expect_same_trajectory(run(cfg, "rhc-l", lo), run(cfg, "rhc-al", lo));
}

TEST(LearningTest, CorrectPredictionReproducesFullDecision) {
  Rng rng(49);
  for (int n = 0; n < 100; ++n) {
    const auto s = testing::random_star(rng, 2 + n % 3);
    ProblemConfig cfg;
    cfg.graph = s.graph;
    std::vector<AgentId> cover(s.graph.size(), -1);
    cover[0] = 0;
    const WorldView w{0.0, 100.0, cfg.graph, s.omega, cover};
    ControllerOptions o;
    for (auto type : {RhcpType::kArrival, RhcpType::kDeparture}) {
      const auto full = rhc_decide(type, 0, 0, w, o);
      if (full.wait) continue;
      const auto one = solve_for_neighbor(type, local_state(w, 0, uncovered_neighbors(w, 0, 0)), 0,
                                          full.decision.next, cfg.graph, o.H);
      EXPECT_EQ(one.decision.u_i, full.decision.u_i);
      EXPECT_EQ(one.decision.u_j, full.decision.u_j);
    }
  }
}

TEST(LearningTest, DatasetInvariants) {
  const auto cfg = pc(4, 300.0);
  LearningOptions lo;
  LearningRhcController c(cfg, {}, lo, "rhc-l");
  const auto r = simulate(cfg, c, {});
  bool trained = false;
  for (const auto& [key, slot] : c.slots()) {
    const TargetId i = std::get<1>(key);
    const auto dim = cfg.graph.neighbors(i, true).size();
    const int labels = static_cast<int>(cfg.graph.neighbors(i).size());
    EXPECT_LE(static_cast<int>(slot.data.size()), lo.dataset_size);
    for (const auto& s : slot.data) {
      EXPECT_EQ(static_cast<std::size_t>(s.x.size()), dim);
      EXPECT_GE(s.label, 0);
      EXPECT_LT(s.label, labels);
    }
    if (slot.model) {
      trained = true;
      EXPECT_EQ(static_cast<int>(slot.data.size()), lo.dataset_size);
      EXPECT_EQ(slot.model->outputs(), labels);
    }
  }
  EXPECT_TRUE(trained);
  for (const auto& d : r.decisions) {
    if (d.learned) EXPECT_EQ(d.solver_calls, 1);
  }
}

TEST(LearningTest, ActiveDatasetCappedFifo) {
  const auto cfg = pc(5, 150.0);
  LearningOptions lo;
  lo.mode = LearningMode::kActiveLearn;
  lo.delta = 0.0;
  lo.dataset_size = 5;
  LearningRhcController c(cfg, {}, lo, "rhc-al");
  simulate(cfg, c, {});
  for (const auto& [key, slot] : c.slots()) {
    EXPECT_LE(static_cast<int>(slot.data.size()), lo.cap_factor * lo.dataset_size);
  }
}

}  // namespace
}  // namespace persmon
