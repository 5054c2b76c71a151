#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "persmon/mtsp.hpp"
#include "persmon/network.hpp"
#include "persmon/rhcp.hpp"

namespace persmon {

/// Read-only snapshot handed to a controller at a decision instant.
struct WorldView {
  double t = 0.0;
  double T = 0.0;
  const NetworkGraph& graph;
  const std::vector<double>& omega;   // covariance of every target at t
  const std::vector<AgentId>& cover;  // covering agent per target, -1 if none

  bool free_for(TargetId k, AgentId a) const { return cover[k] < 0 || cover[k] == a; }
};

/// Controller output. For an arrival decision u_i is the dwell to commit; for
/// a dwell-end decision `next` is the target to depart to. `wait` means no
/// admissible next visit exists and the agent holds until an uncovering event.
struct AgentDecision {
  ControlDecision decision;
  bool wait = false;
  int solver_calls = 0;
  bool learned = false;   // next visit taken from a classifier
  bool fallback = false;  // classifier path rejected, full RHC used
};

struct ControllerOptions {
  double H = 10.0;
  // Use H = T - t instead of the fixed bound.
  bool horizon_remaining = false;
  double bdc_epsilon = 0.075;
  SolverOptions solver;
  std::uint64_t seed = 1;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;

  /// Graph whose edges the agents travel. Periodic controllers add straight
  /// cycle segments that need not be edges of the problem graph.
  virtual const NetworkGraph& travel_graph() const = 0;

  /// Dwell decision at target i (arrival, re-solve, or leaving a wait).
  virtual AgentDecision on_arrival(AgentId a, TargetId i, const WorldView& w) = 0;

  /// Next-visit decision when the committed dwell at i ends.
  virtual AgentDecision on_dwell_end(AgentId a, TargetId i, const WorldView& w) = 0;

  /// Whether dwelling agents re-solve when a neighbor is covered or uncovered.
  virtual bool resolves_on_cover_change() const { return false; }

  /// Controller-specific counters reported with the run summary.
  virtual std::map<std::string, double> stats() const { return {}; }
};

/// Planning horizon in effect at time t.
double effective_horizon(const ControllerOptions& o, const WorldView& w);

/// Uncovered neighbors of i (for agent a), ascending.
std::vector<TargetId> uncovered_neighbors(const WorldView& w, TargetId i, AgentId a);

/// Local state over self plus the given neighbors at the view's time.
LocalState local_state(const WorldView& w, TargetId i, const std::vector<TargetId>& nbrs);

/// Full RHC decision over the uncovered neighborhood: RHCP1 on arrival,
/// RHCP2 at dwell end. Waits when no candidate is feasible.
AgentDecision rhc_decide(RhcpType type, AgentId a, TargetId i, const WorldView& w,
                         const ControllerOptions& o);

/// Dwell that brings omega down to (1 + eps) omega_ss; 0 when already there.
double bdc_dwell(const Target& t, double omega, double eps);

/// argmax of omega over the candidates, ties to the lowest id; -1 when empty.
TargetId argmax_covariance(const std::vector<TargetId>& candidates,
                           const std::vector<double>& omega);

class RhcController : public Controller {
 public:
  RhcController(const ProblemConfig& cfg, ControllerOptions o);
  std::string name() const override { return "rhc"; }
  const NetworkGraph& travel_graph() const override { return cfg_.graph; }
  AgentDecision on_arrival(AgentId a, TargetId i, const WorldView& w) override;
  AgentDecision on_dwell_end(AgentId a, TargetId i, const WorldView& w) override;
  bool resolves_on_cover_change() const override { return true; }

 protected:
  const ProblemConfig& cfg_;
  ControllerOptions opts_;
};

class BdcController : public Controller {
 public:
  BdcController(const ProblemConfig& cfg, ControllerOptions o);
  std::string name() const override { return "bdc"; }
  const NetworkGraph& travel_graph() const override { return cfg_.graph; }
  AgentDecision on_arrival(AgentId a, TargetId i, const WorldView& w) override;
  AgentDecision on_dwell_end(AgentId a, TargetId i, const WorldView& w) override;

 private:
  const ProblemConfig& cfg_;
  ControllerOptions opts_;
};

enum class PeriodicDwell { kFixed, kRhc, kBdc };

/// Cycle-following controllers: MTSP (fixed dwell), RHC-P and BDC-P. An agent
/// starting outside its cycle first travels to the nearest cycle target.
class PeriodicController : public Controller {
 public:
  PeriodicController(const ProblemConfig& cfg, ControllerOptions o, PeriodicDwell dwell,
                     CycleAssignment plan);
  std::string name() const override;
  const NetworkGraph& travel_graph() const override { return travel_; }
  AgentDecision on_arrival(AgentId a, TargetId i, const WorldView& w) override;
  AgentDecision on_dwell_end(AgentId a, TargetId i, const WorldView& w) override;

  const CycleAssignment& plan() const { return plan_; }
  /// Cycle successor of i for agent a, or the nearest cycle target when i is
  /// not on the cycle. Equals i for a single-target cycle.
  TargetId successor(AgentId a, TargetId i) const;
  /// Cycle predecessor of i for agent a; -1 when i is off the cycle.
  TargetId predecessor(AgentId a, TargetId i) const;

 private:
  bool on_cycle(AgentId a, TargetId i) const;

  const ProblemConfig& cfg_;
  ControllerOptions opts_;
  PeriodicDwell dwell_;
  CycleAssignment plan_;
  NetworkGraph travel_;
};

/// Factory for rhc | bdc | mtsp | rhc-p | bdc-p.
std::unique_ptr<Controller> make_basic_controller(const std::string& name,
                                                  const ProblemConfig& cfg,
                                                  const ControllerOptions& o);

}  // namespace persmon
