#include "persmon/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "persmon/covariance.hpp"

namespace persmon {

double effective_horizon(const ControllerOptions& o, const WorldView& w) {
  return o.horizon_remaining ? std::max(w.T - w.t, 0.0) : o.H;
}

std::vector<TargetId> uncovered_neighbors(const WorldView& w, TargetId i, AgentId a) {
  std::vector<TargetId> out;
  for (TargetId k : w.graph.neighbors(i)) {
    if (w.free_for(k, a)) out.push_back(k);
  }
  return out;
}

LocalState local_state(const WorldView& w, TargetId i, const std::vector<TargetId>& nbrs) {
  LocalState s;
  s.t = w.t;
  s.omega[i] = w.omega[i];
  for (TargetId k : nbrs) s.omega[k] = w.omega[k];
  return s;
}

AgentDecision rhc_decide(RhcpType type, AgentId a, TargetId i, const WorldView& w,
                         const ControllerOptions& o) {
  AgentDecision out;
  const auto cands = uncovered_neighbors(w, i, a);
  if (cands.empty()) {
    out.wait = true;
    return out;
  }
  try {
    const auto res = solve_rhcp(type, local_state(w, i, cands), i, cands, w.graph,
                                effective_horizon(o, w), o.solver);
    out.decision = res.decision;
    out.solver_calls = res.solver_calls;
  } catch (const EmptyNeighborhood&) {
    out.wait = true;
  }
  return out;
}

double bdc_dwell(const Target& t, double omega, double eps) {
  return covariance::active_time_to_reach(t, omega, (1.0 + eps) * t.derived.omega_ss);
}

TargetId argmax_covariance(const std::vector<TargetId>& candidates,
                           const std::vector<double>& omega) {
  TargetId best = -1;
  for (TargetId k : candidates) {
    if (best < 0 || omega[k] > omega[best] || (omega[k] == omega[best] && k < best)) best = k;
  }
  return best;
}

RhcController::RhcController(const ProblemConfig& cfg, ControllerOptions o)
    : cfg_(cfg), opts_(std::move(o)) {}

AgentDecision RhcController::on_arrival(AgentId a, TargetId i, const WorldView& w) {
  return rhc_decide(RhcpType::kArrival, a, i, w, opts_);
}

AgentDecision RhcController::on_dwell_end(AgentId a, TargetId i, const WorldView& w) {
  return rhc_decide(RhcpType::kDeparture, a, i, w, opts_);
}

BdcController::BdcController(const ProblemConfig& cfg, ControllerOptions o)
    : cfg_(cfg), opts_(std::move(o)) {}

AgentDecision BdcController::on_arrival(AgentId, TargetId i, const WorldView& w) {
  AgentDecision out;
  out.decision.u_i = bdc_dwell(w.graph.target(i), w.omega[i], opts_.bdc_epsilon);
  return out;
}

AgentDecision BdcController::on_dwell_end(AgentId a, TargetId i, const WorldView& w) {
  AgentDecision out;
  const TargetId j = argmax_covariance(uncovered_neighbors(w, i, a), w.omega);
  if (j < 0) {
    out.wait = true;
    return out;
  }
  out.decision.next = j;
  return out;
}

namespace {

NetworkGraph cycle_travel_graph(const ProblemConfig& cfg, const CycleAssignment& plan) {
  const NetworkGraph& g = cfg.graph;
  auto edges = g.edge_list();
  for (std::size_t a = 0; a < plan.cycles.size(); ++a) {
    const auto& c = plan.cycles[a];
    // A 2-cycle is one segment travelled both ways.
    const std::size_t segments = c.size() > 2 ? c.size() : c.size() - 1;
    for (std::size_t p = 0; p < segments; ++p) {
      edges.emplace_back(c[p], c[(p + 1) % c.size()]);
    }
    const TargetId s = cfg.agent_start_targets[a];
    if (std::find(c.begin(), c.end(), s) == c.end()) {
      TargetId near = c.front();
      for (TargetId m : c) {
        if (straight_travel(g, s, m) < straight_travel(g, s, near)) near = m;
      }
      edges.emplace_back(s, near);
    }
  }
  return NetworkGraph(g.targets(), edges, g.speed());
}

}  // namespace

PeriodicController::PeriodicController(const ProblemConfig& cfg, ControllerOptions o,
                                       PeriodicDwell dwell, CycleAssignment plan)
    : cfg_(cfg),
      opts_(std::move(o)),
      dwell_(dwell),
      plan_(std::move(plan)),
      travel_(cycle_travel_graph(cfg, plan_)) {}

std::string PeriodicController::name() const {
  switch (dwell_) {
    case PeriodicDwell::kFixed: return "mtsp";
    case PeriodicDwell::kRhc: return "rhc-p";
    case PeriodicDwell::kBdc: return "bdc-p";
  }
  return "periodic";
}

bool PeriodicController::on_cycle(AgentId a, TargetId i) const {
  const auto& c = plan_.cycles[a];
  return std::find(c.begin(), c.end(), i) != c.end();
}

TargetId PeriodicController::successor(AgentId a, TargetId i) const {
  const auto& c = plan_.cycles[a];
  const auto it = std::find(c.begin(), c.end(), i);
  if (it != c.end()) return c[(static_cast<std::size_t>(it - c.begin()) + 1) % c.size()];
  TargetId near = c.front();
  for (TargetId m : c) {
    if (straight_travel(cfg_.graph, i, m) < straight_travel(cfg_.graph, i, near)) near = m;
  }
  return near;
}

TargetId PeriodicController::predecessor(AgentId a, TargetId i) const {
  const auto& c = plan_.cycles[a];
  const auto it = std::find(c.begin(), c.end(), i);
  if (it == c.end()) return -1;
  const std::size_t p = static_cast<std::size_t>(it - c.begin());
  return c[(p + c.size() - 1) % c.size()];
}

AgentDecision PeriodicController::on_arrival(AgentId a, TargetId i, const WorldView& w) {
  AgentDecision out;
  const TargetId j = successor(a, i);
  out.decision.next = j;
  if (!on_cycle(a, i)) return out;  // in transit to the cycle
  if (j == i) {
    // Single-target cycle: hold for the rest of the mission.
    out.decision.u_i = w.T - w.t + 1.0;
    return out;
  }
  switch (dwell_) {
    case PeriodicDwell::kFixed:
      out.decision.u_i = plan_.dwell[i];
      break;
    case PeriodicDwell::kBdc:
      out.decision.u_i = bdc_dwell(w.graph.target(i), w.omega[i], opts_.bdc_epsilon);
      break;
    case PeriodicDwell::kRhc: {
      std::vector<TargetId> nbrs{j};
      const TargetId p = predecessor(a, i);
      if (p != j) nbrs.push_back(p);
      const auto sol = solve_for_neighbor(RhcpType::kArrival, local_state(w, i, nbrs), i, j,
                                          travel_, effective_horizon(opts_, w), opts_.solver);
      if (sol.j < 0) {
        out.decision.u_i = bdc_dwell(w.graph.target(i), w.omega[i], opts_.bdc_epsilon);
      } else {
        out.decision = sol.decision;
        out.solver_calls = 1;
      }
      break;
    }
  }
  return out;
}

AgentDecision PeriodicController::on_dwell_end(AgentId a, TargetId i, const WorldView& w) {
  AgentDecision out;
  const TargetId j = successor(a, i);
  if (j == i || !w.free_for(j, a)) {
    out.wait = true;
    return out;
  }
  out.decision.next = j;
  return out;
}

std::unique_ptr<Controller> make_basic_controller(const std::string& name,
                                                  const ProblemConfig& cfg,
                                                  const ControllerOptions& o) {
  if (name == "rhc") return std::make_unique<RhcController>(cfg, o);
  if (name == "bdc") return std::make_unique<BdcController>(cfg, o);
  PeriodicDwell d;
  if (name == "mtsp") {
    d = PeriodicDwell::kFixed;
  } else if (name == "rhc-p") {
    d = PeriodicDwell::kRhc;
  } else if (name == "bdc-p") {
    d = PeriodicDwell::kBdc;
  } else {
    return nullptr;
  }
  return std::make_unique<PeriodicController>(cfg, o, d, mtsp_plan(cfg, o.seed));
}

}  // namespace persmon
