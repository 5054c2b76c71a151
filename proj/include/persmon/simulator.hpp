#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "persmon/controllers.hpp"
#include "persmon/covariance.hpp"
#include "persmon/network.hpp"

namespace persmon {

/// Event kinds in tie-break order at equal times.
enum class EventKind { kDwellEnd = 0, kArrival = 1, kCovering = 2, kUncovering = 3, kMissionEnd = 4 };

const char* event_kind_name(EventKind k);

/// One processed event. Decision fields are filled for arrival and dwell-end
/// events (and for re-solves triggered by covering or uncovering events).
struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::kMissionEnd;
  AgentId agent = -1;
  TargetId target = -1;
  double u_i = 0.0;
  TargetId j = -1;
  double u_j = 0.0;
  int solver_calls = 0;
  double solver_wall_us = 0.0;
};

/// One controller invocation.
struct DecisionRecord {
  double time = 0.0;
  AgentId agent = -1;
  TargetId target = -1;
  bool arrival = true;  // arrival-type (dwell) decision, else dwell-end
  int solver_calls = 0;
  double wall_us = 0.0;
  bool learned = false;
  bool fallback = false;
  bool wait = false;
};

struct MetricsSample {
  double t = 0.0;
  double sum_omega = 0.0;
  double J_t = 0.0;     // (1/t) integral of sum omega over [0, t]
  double Jhat_t = 0.0;  // -(active part) / (total) over [0, t]
  // Same quantities over the window since the previous sample (instantaneous
  // at t = 0).
  double J_window = 0.0;
  double Jhat_window = 0.0;
  double cum_total = 0.0;   // integral of sum omega over [0, t]
  double cum_active = 0.0;  // its active-mode part
  std::vector<double> omega;
};

/// Piece of a covariance trajectory with constant mode.
struct OmegaSegment {
  double t0 = 0.0;
  double omega0 = 0.0;
  Mode mode = Mode::kInactive;
};

struct TrackingOptions {
  double C = 1.0;
  double D = 0.0;
  double K = 2.0;
  double amplitude = 10.0;
  double frequency = 2.0;
  double dt = 1e-3;
  // Feed the controller the true state instead of the estimate.
  bool oracle_state = false;
  bool process_noise = true;
  bool measurement_noise = true;
  // Start truth and estimate on the reference (zero initial output error).
  bool start_on_reference = false;
};

/// Reference r(t) = amplitude sin(frequency t + i) for target i and its rate.
double tracking_reference(const TrackingOptions& o, TargetId i, double t);
double tracking_reference_rate(const TrackingOptions& o, TargetId i, double t);

/// Feedback law that gives the output error e = C phi + D - r the dynamics
/// de/dt = -K e when phi_hat = phi. Throws std::invalid_argument when B C = 0.
double tracking_control(const TargetParams& p, const TrackingOptions& o, TargetId i, double t,
                        double phi_hat);

struct TrackingTrace {
  std::vector<double> t, phi, phi_hat, error;
  double J_C = 0.0;  // (1/T) integral of |e| by the trapezoid rule
};

/// Euler-Maruyama integration of the true state and explicit Euler of the
/// Kalman-Bucy estimate along a covariance trajectory given as segments.
/// Samples every `record_every` steps (0 records nothing but J_C).
TrackingTrace integrate_truth_and_estimate(const Target& t, const TrackingOptions& o,
                                           const std::vector<OmegaSegment>& segments, double T,
                                           std::uint64_t seed, double phi0, double phi_hat0,
                                           int record_every = 0);

struct SimOptions {
  double sample_dt = 0.5;
  bool tracking = false;
  TrackingOptions tracking_opts;
  std::uint64_t seed = 1;
  bool check_invariants = true;
  // Relative slack of the invariant-band check at event boundaries.
  double band_tolerance = 1e-9;
};

struct Summary {
  double J_T = 0.0;
  double Jhat_T = 0.0;
  double J_W = 0.0;
  double J_C = 0.0;  // NaN without tracking
  long decisions = 0;
  long solver_calls = 0;
  double mean_solver_wall_us = 0.0;
  int max_occupancy = 0;
};

struct SimResult {
  std::string controller;
  std::vector<EventRecord> events;
  std::vector<DecisionRecord> decisions;
  std::vector<MetricsSample> samples;
  std::vector<std::vector<OmegaSegment>> segments;  // per target
  std::vector<double> j_active, j_inactive;          // per target accumulators
  std::vector<double> omega_final;
  std::vector<double> J_C_per_target;
  std::vector<int> agent_final_target;
  std::map<std::string, double> controller_stats;
  Summary summary;
};

/// Raised on a protocol or covariance-band violation; carries the event log
/// up to the failure.
class SimulationError : public InvariantViolation {
 public:
  SimulationError(const std::string& what, std::vector<EventRecord> log)
      : InvariantViolation(what), log_(std::move(log)) {}
  const std::vector<EventRecord>& event_log() const { return log_; }

 private:
  std::vector<EventRecord> log_;
};

/// Runs the mission [0, T] of the configuration under the controller.
SimResult simulate(const ProblemConfig& cfg, Controller& controller, const SimOptions& opts);

}  // namespace persmon
