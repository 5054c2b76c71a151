#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "persmon/covariance.hpp"
#include "persmon/network.hpp"

namespace persmon {

/// Covariances an agent at target i sees when it decides: self plus the
/// uncovered neighbors that enter the objective.
struct LocalState {
  double t = 0.0;
  std::map<TargetId, double> omega;
};

/// Raised when no neighbor is available to plan a visit to.
class EmptyNeighborhood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RhcpType { kArrival = 1, kDeparture = 2 };

struct ControlDecision {
  double u_i = 0.0;
  TargetId next = -1;
  double u_j = 0.0;
  double value = 0.0;
};

/// Targets and covariances entering one (i, j) objective. `others` are the
/// neighbors of i other than j that stay unvisited over the horizon.
struct RhcpInstance {
  const Target* ti = nullptr;
  const Target* tj = nullptr;
  double omega_i = 0.0;
  double omega_j = 0.0;
  double rho = 0.0;
  std::vector<const Target*> others;
  std::vector<double> omega_others;
};

RhcpInstance make_instance(const LocalState& state, TargetId i, TargetId j,
                           const NetworkGraph& graph);

// Below this |A| the exponential-sum coefficient forms lose too many digits to
// cancellation and evaluation switches to direct composition of the
// covariance-module integrals.
inline constexpr double kCoefficientMinA = 1e-3;

/// RHCP2 objective -A(u)/(A(u)+B(u)) with
///   A(u) = c1 + c2 log(1 + c3 e^{-lambda_j u}) + c4 u
///   B(u) = c5 + c6 u + sum_k c7[k] e^{two_a[k] u}
/// where k runs over the neighborhood of i (self included) minus j.
struct Rhcp2Coefficients {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0, c5 = 0.0, c6 = 0.0;
  std::vector<double> c7;
  std::vector<double> two_a;
  double lambda_j = 0.0;
  bool direct = false;
  RhcpInstance instance;
};

/// RHCP1 objective -A/(A+B) with
///   A = a1 + a2 log(1 + a3 e^{-lambda_i u_i})
///       + a4 log|1 + a5 e^{2A_j u_i} + a6 e^{-lambda_j u_j} + a7 e^{2A_j u_i - lambda_j u_j}|
///       + a8 u_i + a9 u_j
///   B = b1 + b2 u_i + b3 u_j + b4 e^{2A_j u_i} + b5 e^{2A_i u_j}
///       + sum_k b6[k] e^{2A_k (u_i + u_j)} + C
///   C = c1 (1 + c2 e^{-lambda_i u_i} + c3 e^{2A_i u_j} + c4 e^{-lambda_i u_i + 2A_i u_j})
///          / (1 + c5 e^{-lambda_i u_i})
/// with k over the neighbors of i other than j.
struct Rhcp1Coefficients {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0, a9 = 0;
  double b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0;
  std::vector<double> b6;
  double c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0;
  double lambda_i = 0, lambda_j = 0, two_ai = 0, two_aj = 0;
  std::vector<double> two_ak;
  bool direct = false;
  RhcpInstance instance;
};

/// A and B parts of an objective with their partial derivatives.
struct ObjectiveParts {
  double A = 0.0, B = 0.0;
  double dA_ui = 0.0, dA_uj = 0.0;
  double dB_ui = 0.0, dB_uj = 0.0;
};

struct Objective1 {
  double value = 0.0;
  double d_ui = 0.0;
  double d_uj = 0.0;
};

struct Objective2 {
  double value = 0.0;
  double derivative = 0.0;
};

Rhcp2Coefficients build_rhcp2(const LocalState& state, TargetId i, TargetId j,
                              const NetworkGraph& graph);
Rhcp2Coefficients build_rhcp2(const RhcpInstance& inst);
Rhcp1Coefficients build_rhcp1(const LocalState& state, TargetId i, TargetId j,
                              const NetworkGraph& graph);
Rhcp1Coefficients build_rhcp1(const RhcpInstance& inst);

ObjectiveParts rhcp2_parts(const Rhcp2Coefficients& c, double u_j);
ObjectiveParts rhcp1_parts(const Rhcp1Coefficients& c, double u_i, double u_j);

/// Same objective evaluated by composing covariance-module integrals along
/// the planned trajectory; RHCP2 is the u_i = 0 restriction.
ObjectiveParts direct_parts(const RhcpInstance& inst, double u_i, double u_j);

Objective2 eval_rhcp2(const Rhcp2Coefficients& c, double u_j);
Objective1 eval_rhcp1(const Rhcp1Coefficients& c, double u_i, double u_j);

/// -A/(A+B) and its gradient by the quotient rule; 0 when A + B = 0.
Objective1 objective_from_parts(const ObjectiveParts& p);

struct SolverOptions {
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  int max_iterations = 200;
  double pg_tolerance = 1e-8;
  double min_step = 1e-12;
  // Barzilai-Borwein trial step after the first iteration.
  bool bb_step = true;
};

struct Rhcp2Solution {
  double u_j = 0.0;
  double value = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct Rhcp1Solution {
  double u_i = 0.0;
  double u_j = 0.0;
  double value = 0.0;
  int iterations = 0;
  bool converged = true;
};

Rhcp2Solution solve_rhcp2(const Rhcp2Coefficients& c, double u_max,
                          const SolverOptions& opts = {});
Rhcp1Solution solve_rhcp1(const Rhcp1Coefficients& c, double budget,
                          const SolverOptions& opts = {});

enum class Rhcp1Axis { kUi, kUj };

/// RHCP1 restricted to one axis (the other dwell time held at 0).
Rhcp1Solution solve_rhcp1_axis(const Rhcp1Coefficients& c, double budget, Rhcp1Axis axis,
                               const SolverOptions& opts = {});

/// Euclidean projection onto {u_i, u_j >= 0, u_i + u_j <= budget}.
std::pair<double, double> project_triangle(double u_i, double u_j, double budget);

/// Argmin of (neighbor, value) pairs; ties go to the lowest target id.
TargetId select_next_visit(const std::vector<std::pair<TargetId, double>>& values);

struct NeighborSolution {
  TargetId j = -1;
  ControlDecision decision;
  bool converged = true;
};

/// Solves one RHCP instance for a fixed next-visit candidate j. The planning
/// horizon H bounds u_i + rho_ij + u_j. Returns j = -1 when rho_ij > H.
NeighborSolution solve_for_neighbor(RhcpType type, const LocalState& state, TargetId i,
                                    TargetId j, const NetworkGraph& graph, double H,
                                    const SolverOptions& opts = {});

struct RhcpResult {
  ControlDecision decision;
  std::vector<NeighborSolution> per_neighbor;
  int solver_calls = 0;
};

/// Full RHCP: solves for every candidate with rho_ij <= H and selects j*.
/// Throws EmptyNeighborhood when no candidate is feasible.
RhcpResult solve_rhcp(RhcpType type, const LocalState& state, TargetId i,
                      const std::vector<TargetId>& candidates, const NetworkGraph& graph,
                      double H, const SolverOptions& opts = {});

}  // namespace persmon
