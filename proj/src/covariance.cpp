#include "persmon/covariance.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

namespace persmon::covariance {
namespace {

void check_args(double omega0, double w) {
  if (!(omega0 > 0.0)) {
    std::ostringstream msg;
    msg << "covariance must be positive, got " << omega0;
    throw std::invalid_argument(msg.str());
  }
  if (!(w >= 0.0)) {
    std::ostringstream msg;
    msg << "duration must be nonnegative, got " << w;
    throw std::invalid_argument(msg.str());
  }
}

// (e^x - 1) / x, continuous at 0.
double expm1_over_x(double x) {
  if (std::abs(x) < 1e-8) return 1.0 + 0.5 * x;
  return std::expm1(x) / x;
}

// (e^x - 1 - x) / x^2, continuous at 0.
double phi2(double x) {
  if (std::abs(x) < 1e-2) {
    return 0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0)));
  }
  return (std::expm1(x) - x) / (x * x);
}

// Normalized active-mode log argument
// (v1 c1 + v2 c2 e^{-lambda w}) / (v2 - v1) written as 1 + delta.
double active_log_delta(const Target& t, double omega0, double w) {
  const auto& d = t.derived;
  const double c2 = 1.0 - d.v1 * omega0;
  return d.v2 * c2 * std::expm1(-d.lambda * w) / (d.v2 - d.v1);
}

}  // namespace

double propagate_active(const Target& t, double omega0, double w) {
  check_args(omega0, w);
  const auto& d = t.derived;
  const double c1 = d.v2 * omega0 - 1.0;
  const double c2 = 1.0 - d.v1 * omega0;
  const double e = std::exp(-d.lambda * w);
  return (c1 + c2 * e) / (d.v1 * c1 + d.v2 * c2 * e);
}

double propagate_inactive(const Target& t, double omega0, double w) {
  check_args(omega0, w);
  const auto& p = t.params;
  if (std::abs(p.A) < kSingularA) return omega0 + p.Q * w;
  const double x = 2.0 * p.A * w;
  return omega0 * std::exp(x) + p.Q * w * expm1_over_x(x);
}

double propagate(const Target& t, Mode mode, double omega0, double w) {
  return mode == Mode::kActive ? propagate_active(t, omega0, w)
                               : propagate_inactive(t, omega0, w);
}

double contribution_active(const Target& t, double omega0, double w) {
  check_args(omega0, w);
  const double delta = active_log_delta(t, omega0, w);
  if (!(delta > -1.0)) {
    std::ostringstream msg;
    msg << "active contribution log argument nonpositive for target " << t.params.id
        << " (omega0=" << omega0 << ", w=" << w << ")";
    throw InvariantViolation(msg.str());
  }
  return std::log1p(delta) / t.params.G + w / t.derived.v1;
}

double contribution_inactive(const Target& t, double omega0, double w) {
  check_args(omega0, w);
  const auto& p = t.params;
  if (std::abs(p.A) < kSingularA) return omega0 * w + 0.5 * p.Q * w * w;
  const double x = 2.0 * p.A * w;
  return omega0 * w * expm1_over_x(x) + p.Q * w * w * phi2(x);
}

double contribution(const Target& t, Mode mode, double omega0, double w) {
  return mode == Mode::kActive ? contribution_active(t, omega0, w)
                               : contribution_inactive(t, omega0, w);
}

double contribution_active_sensitivity(const Target& t, double omega0, double w) {
  check_args(omega0, w);
  const auto& d = t.derived;
  const double arg = 1.0 + active_log_delta(t, omega0, w);
  const double one_minus_e = -std::expm1(-d.lambda * w);
  return -one_minus_e / (t.params.Q * (d.v2 - d.v1) * arg);
}

double contribution_inactive_sensitivity(const Target& t, double w) {
  const double A = t.params.A;
  if (std::abs(A) < kSingularA) return w;
  return w * expm1_over_x(2.0 * A * w);
}

std::pair<double, double> steady_states(const Target& t) {
  return {t.derived.omega_ss, t.derived.omega_bar_ss};
}

double active_time_to_reach(const Target& t, double omega0, double level) {
  if (!(omega0 > 0.0)) throw std::invalid_argument("covariance must be positive");
  if (omega0 <= level) return 0.0;
  const auto& d = t.derived;
  if (level <= d.omega_ss) return std::numeric_limits<double>::infinity();
  const double c1 = d.v2 * omega0 - 1.0;
  const double c2 = 1.0 - d.v1 * omega0;
  const double e = c1 * (1.0 - level * d.v1) / (c2 * (level * d.v2 - 1.0));
  return -std::log(e) / d.lambda;
}

Eigen::MatrixXd propagate_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                                 const Eigen::MatrixXd& G, const Eigen::MatrixXd& omega0,
                                 Mode mode, double w) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n || G.rows() != n || G.cols() != n ||
      omega0.rows() != n || omega0.cols() != n) {
    throw std::invalid_argument("propagate_matrix: dimension mismatch");
  }
  if (!(w >= 0.0)) throw std::invalid_argument("propagate_matrix: negative duration");
  if (w == 0.0) return omega0;

  const double eta = mode == Mode::kActive ? 1.0 : 0.0;
  Eigen::MatrixXd psi(2 * n, 2 * n);
  psi << A, Q, eta * G, -A.transpose();
  const Eigen::MatrixXd expo = (psi * w).exp();

  Eigen::MatrixXd stacked(2 * n, n);
  stacked << omega0, Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd cd = expo * stacked;
  const Eigen::MatrixXd C = cd.topRows(n);
  const Eigen::MatrixXd D = cd.bottomRows(n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(D.transpose());
  if (!lu.isInvertible() || lu.rcond() < 1e-13) {
    throw InvariantViolation("propagate_matrix: D is numerically singular");
  }
  // Omega = C D^{-1}  <=>  D^T Omega^T = C^T.
  Eigen::MatrixXd omega = lu.solve(C.transpose()).transpose();
  return 0.5 * (omega + omega.transpose());
}

}  // namespace persmon::covariance
