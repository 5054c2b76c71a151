#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace persmon {

using TargetId = int;
using AgentId = int;

/// Raised for malformed or infeasible problem configurations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when random configuration generation cannot produce a connected graph.
class GenerationError : public ConfigError {
 public:
  GenerationError(const std::string& what, std::uint64_t seed)
      : ConfigError(what), seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Below this magnitude the inactive-mode closed forms switch to their A -> 0
// limits.
inline constexpr double kSingularA = 1e-9;

/// Per-target scalar model parameters. The sensing gain G = H^2 / R is kept
/// in sync by make_target().
struct TargetParams {
  TargetId id = 0;
  std::array<double, 2> position{0.0, 0.0};
  double A = 0.0;  // state dynamics coefficient (1/s)
  double B = 1.0;  // control input coefficient
  double Q = 1.0;  // process noise intensity
  double Hm = 1.0; // observation gain
  double R = 1.0;  // measurement noise intensity
  double G = 1.0;  // Hm^2 / R
};

TargetParams make_target(TargetId id, std::array<double, 2> position, double A,
                         double B, double Q, double Hm, double R);

/// Quantities of the active-mode Riccati solution derived from TargetParams.
struct TargetDerived {
  double lambda = 0.0;       // 2 sqrt(A^2 + Q G)
  double v1 = 0.0;           // (-A + sqrt(A^2 + Q G)) / Q, positive
  double v2 = 0.0;           // (-A - sqrt(A^2 + Q G)) / Q, negative
  double omega_ss = 0.0;     // permanent-sensing limit, equals 1 / v1
  double omega_bar_ss = 0.0; // permanent-neglect limit, +inf unless A < 0
};

TargetDerived derive(const TargetParams& p);

/// A target together with its derived constants; the unit the covariance
/// module works on.
struct Target {
  TargetParams params;
  TargetDerived derived;

  Target() = default;
  explicit Target(const TargetParams& p) : params(p), derived(derive(p)) {}
};

/// True when omega lies in the positively invariant band: (omega_ss,
/// omega_bar_ss) for A < 0, (omega_ss, inf) otherwise. A positive rel_tol
/// widens both ends; trajectories converge onto the ends in floating point.
bool in_invariant_band(const Target& t, double omega, double rel_tol = 0.0);

/// Undirected target graph with straight-line trajectory segments travelled at
/// unit speed. Edges are stored in both directions.
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(std::vector<Target> targets,
               const std::vector<std::pair<TargetId, TargetId>>& undirected_edges,
               double agent_speed = 1.0);

  int size() const { return static_cast<int>(targets_.size()); }
  const Target& target(TargetId i) const;
  const std::vector<Target>& targets() const { return targets_; }

  bool has_edge(TargetId i, TargetId j) const;
  /// Travel time along edge (i, j); throws if the edge is absent.
  double rho(TargetId i, TargetId j) const;
  double speed() const { return speed_; }

  /// Neighbor set N_i sorted ascending; with include_self the neighborhood
  /// N_i U {i} with i placed first.
  std::vector<TargetId> neighbors(TargetId i, bool include_self = false) const;

  /// Unordered edge list (i < j), ascending.
  std::vector<std::pair<TargetId, TargetId>> edge_list() const;

  bool connected() const;

  /// All-pairs shortest travel times over the graph (Floyd-Warshall).
  std::vector<std::vector<double>> shortest_travel_times() const;

 private:
  void check(TargetId i) const;

  std::vector<Target> targets_;
  std::vector<std::vector<TargetId>> adjacency_;
  std::vector<std::vector<double>> rho_;
  double speed_ = 1.0;
};

struct ProblemConfig {
  NetworkGraph graph;
  std::vector<TargetId> agent_start_targets;
  std::vector<double> omega0;
  double horizon_T = 50.0;
  double fixed_H = 10.0;
  std::uint64_t rng_seed = 0;

  int num_agents() const { return static_cast<int>(agent_start_targets.size()); }
  int num_targets() const { return graph.size(); }

  /// Throws ConfigError when any structural invariant is broken.
  void validate() const;
};

struct GenerateOptions {
  int num_targets = 7;
  int num_agents = 2;
  double sigma = 0.7;
  std::uint64_t seed = 1;
  double horizon_T = 50.0;
  double fixed_H = 10.0;
  int retry_budget = 100;
};

/// Random problem configuration: uniform positions in the unit square,
/// A, B ~ U[0.01, 0.41], Q ~ U[0.1, 2.1], R ~ U[2, 10], Hm = 1, an edge for
/// every pair closer than sigma, and initial covariances inside the invariant
/// band. Positions are redrawn until the graph is connected.
ProblemConfig generate_pc(const GenerateOptions& opts);

/// Round-robin start targets: agent a starts at target a mod M.
std::vector<TargetId> round_robin_starts(int num_agents, int num_targets);

}  // namespace persmon
