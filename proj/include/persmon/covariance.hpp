#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>

#include "persmon/network.hpp"

namespace persmon {

/// Signals that a covariance left the invariant band it is guaranteed to stay
/// in (for example a nonpositive log argument in the active-mode integral).
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kInactive = 0, kActive = 1 };

struct CovarianceState {
  double omega = 0.0;
  double t = 0.0;
  Mode mode = Mode::kInactive;
};

struct ContributionBreakdown {
  double j_active = 0.0;
  double j_inactive = 0.0;
  double j_total() const { return j_active + j_inactive; }
};

namespace covariance {

// Closed-form scalar error covariance propagation. All functions are pure and
// throw std::invalid_argument on w < 0 or omega0 <= 0.

/// Covariance after sensing for w seconds starting from omega0.
double propagate_active(const Target& t, double omega0, double w);

/// Covariance after w seconds without sensing. Uses the A -> 0 limit
/// omega0 + Q w when |A| < kSingularA.
double propagate_inactive(const Target& t, double omega0, double w);

double propagate(const Target& t, Mode mode, double omega0, double w);

/// Integral of the covariance over [0, w] while sensed.
double contribution_active(const Target& t, double omega0, double w);

/// Integral of the covariance over [0, w] while not sensed.
double contribution_inactive(const Target& t, double omega0, double w);

double contribution(const Target& t, Mode mode, double omega0, double w);

/// d/d(omega0) of contribution_active.
double contribution_active_sensitivity(const Target& t, double omega0, double w);

/// d/d(omega0) of contribution_inactive, i.e. (e^{2Aw} - 1) / 2A.
double contribution_inactive_sensitivity(const Target& t, double w);

/// Right-hand side of the scalar Riccati equation.
inline double riccati_rate(const Target& t, Mode mode, double omega) {
  const auto& p = t.params;
  const double eta = mode == Mode::kActive ? 1.0 : 0.0;
  return 2.0 * p.A * omega + p.Q - eta * p.G * omega * omega;
}

/// (omega_ss, omega_bar_ss); the second is +inf when A >= 0.
std::pair<double, double> steady_states(const Target& t);

/// Duration of sensing needed to bring omega0 down to `level`, the inverse of
/// propagate_active. Returns 0 when omega0 <= level; +inf when level is at or
/// below omega_ss.
double active_time_to_reach(const Target& t, double omega0, double level);

/// Matrix Riccati propagation through the Hamiltonian exponential:
/// [C; D] = exp(Psi w) [Omega0; I], Omega(w) = C D^{-1}, with
/// Psi = [[A, Q], [eta G, -A^T]]. Throws InvariantViolation when D is
/// numerically singular.
Eigen::MatrixXd propagate_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                                 const Eigen::MatrixXd& G, const Eigen::MatrixXd& omega0,
                                 Mode mode, double w);

}  // namespace covariance
}  // namespace persmon
