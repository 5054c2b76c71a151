#include "persmon/rhcp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace persmon {
namespace {

namespace cov = covariance;

double omega_of(const LocalState& s, TargetId k) {
  const auto it = s.omega.find(k);
  if (it == s.omega.end()) {
    throw std::invalid_argument("local state has no covariance for target " + std::to_string(k));
  }
  return it->second;
}

bool small_a(const Target& t) { return std::abs(t.params.A) < kCoefficientMinA; }

template <std::size_t N>
using Vec = std::array<double, N>;

template <std::size_t N>
double dot(const Vec<N>& a, const Vec<N>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < N; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t N>
struct PgdResult {
  Vec<N> x{};
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Projected gradient descent with Armijo backtracking along the projection
// arc. Eval returns (value, gradient); Project maps onto the feasible set.
template <std::size_t N, class Eval, class Project>
PgdResult<N> pgd(const Eval& eval, const Project& project, Vec<N> x0,
                 const SolverOptions& o) {
  PgdResult<N> r;
  Vec<N> x = project(x0);
  auto [f, g] = eval(x);
  double bb = o.initial_step;
  int it = 0;
  for (; it < o.max_iterations; ++it) {
    Vec<N> probe;
    for (std::size_t k = 0; k < N; ++k) probe[k] = x[k] - g[k];
    probe = project(probe);
    double pg2 = 0.0;
    for (std::size_t k = 0; k < N; ++k) pg2 += (x[k] - probe[k]) * (x[k] - probe[k]);
    if (std::sqrt(pg2) <= o.pg_tolerance) {
      r.converged = true;
      break;
    }

    double t = (it == 0 || !o.bb_step) ? o.initial_step : bb;
    bool accepted = false;
    Vec<N> xn{}, gn{};
    double fn = 0.0;
    while (t >= o.min_step) {
      for (std::size_t k = 0; k < N; ++k) xn[k] = x[k] - t * g[k];
      xn = project(xn);
      Vec<N> d;
      for (std::size_t k = 0; k < N; ++k) d[k] = xn[k] - x[k];
      if (dot(d, d) == 0.0) break;
      auto [fv, gv] = eval(xn);
      if (fv <= f + o.armijo * dot(g, d)) {
        fn = fv;
        gn = gv;
        accepted = true;
        break;
      }
      t *= o.shrink;
    }
    if (!accepted) {
      // No decrease is representable at this point.
      r.converged = true;
      break;
    }
    Vec<N> s, y;
    for (std::size_t k = 0; k < N; ++k) {
      s[k] = xn[k] - x[k];
      y[k] = gn[k] - g[k];
    }
    const double sy = dot(s, y);
    bb = sy > 0.0 ? std::clamp(dot(s, s) / sy, 1e-10, 1e10) : std::max(2.0 * t, o.initial_step);
    x = xn;
    f = fn;
    g = gn;
  }
  r.x = x;
  r.value = f;
  r.iterations = it;
  return r;
}

}  // namespace

RhcpInstance make_instance(const LocalState& state, TargetId i, TargetId j,
                           const NetworkGraph& graph) {
  if (!graph.has_edge(i, j)) {
    throw std::invalid_argument("target " + std::to_string(j) + " is not a neighbor of " +
                                std::to_string(i));
  }
  RhcpInstance inst;
  inst.ti = &graph.target(i);
  inst.tj = &graph.target(j);
  inst.omega_i = omega_of(state, i);
  inst.omega_j = omega_of(state, j);
  inst.rho = graph.rho(i, j);
  for (const auto& [k, om] : state.omega) {
    if (k == i || k == j) continue;
    if (!graph.has_edge(i, k)) {
      throw std::invalid_argument("local state target " + std::to_string(k) +
                                  " is not a neighbor of " + std::to_string(i));
    }
    inst.others.push_back(&graph.target(k));
    inst.omega_others.push_back(om);
  }
  return inst;
}

ObjectiveParts direct_parts(const RhcpInstance& inst, double u_i, double u_j) {
  const Target& ti = *inst.ti;
  const Target& tj = *inst.tj;
  const double rho = inst.rho;
  const double w = u_i + rho + u_j;

  const double om_i_end = cov::propagate_active(ti, inst.omega_i, u_i);
  const double om_j_arr = cov::propagate_inactive(tj, inst.omega_j, u_i + rho);

  ObjectiveParts p;
  p.A = cov::contribution_active(ti, inst.omega_i, u_i) +
        cov::contribution_active(tj, om_j_arr, u_j);
  p.dA_ui = om_i_end + cov::contribution_active_sensitivity(tj, om_j_arr, u_j) *
                           cov::riccati_rate(tj, Mode::kInactive, om_j_arr);
  p.dA_uj = cov::propagate_active(tj, om_j_arr, u_j);

  p.B = cov::contribution_inactive(ti, om_i_end, rho + u_j) +
        cov::contribution_inactive(tj, inst.omega_j, u_i + rho);
  p.dB_ui = cov::contribution_inactive_sensitivity(ti, rho + u_j) *
                cov::riccati_rate(ti, Mode::kActive, om_i_end) +
            om_j_arr;
  p.dB_uj = cov::propagate_inactive(ti, om_i_end, rho + u_j);
  for (std::size_t k = 0; k < inst.others.size(); ++k) {
    const Target& tk = *inst.others[k];
    const double om = inst.omega_others[k];
    p.B += cov::contribution_inactive(tk, om, w);
    const double end = cov::propagate_inactive(tk, om, w);
    p.dB_ui += end;
    p.dB_uj += end;
  }
  return p;
}

Objective1 objective_from_parts(const ObjectiveParts& p) {
  const double s = p.A + p.B;
  if (s == 0.0) return {};
  // Only e^{2A u} terms with A > 0 can overflow. They enter B linearly and A
  // at most logarithmically, so the objective has reached its limit 0.
  if (!std::isfinite(s) || !std::isfinite(p.A)) return {};
  Objective1 o;
  o.value = -p.A / s;
  const double s2 = s * s;
  o.d_ui = -(p.dA_ui * p.B - p.A * p.dB_ui) / s2;
  o.d_uj = -(p.dA_uj * p.B - p.A * p.dB_uj) / s2;
  return o;
}

Rhcp2Coefficients build_rhcp2(const LocalState& state, TargetId i, TargetId j,
                              const NetworkGraph& graph) {
  return build_rhcp2(make_instance(state, i, j, graph));
}

Rhcp2Coefficients build_rhcp2(const RhcpInstance& inst) {
  Rhcp2Coefficients c;
  c.instance = inst;
  const auto& pj = inst.tj->params;
  const auto& dj = inst.tj->derived;
  const double rho = inst.rho;

  const double om_arr = cov::propagate_inactive(*inst.tj, inst.omega_j, rho);
  c.lambda_j = dj.lambda;
  c.c2 = 1.0 / pj.G;
  c.c3 = -(pj.G * om_arr + pj.Q * dj.v2) / (pj.G * om_arr + pj.Q * dj.v1);
  c.c1 = -c.c2 * std::log1p(c.c3);
  c.c4 = 1.0 / dj.v1;

  c.c5 = cov::contribution_inactive(*inst.tj, inst.omega_j, rho);
  auto add = [&](const Target& t, double om) {
    const auto& p = t.params;
    if (small_a(t)) c.direct = true;
    const double h = p.Q / (2.0 * p.A);
    c.c7.push_back((om + h) * std::exp(2.0 * p.A * rho) / (2.0 * p.A));
    c.two_a.push_back(2.0 * p.A);
    c.c6 -= h;
    c.c5 -= (om + h) / (2.0 * p.A) + h * rho;
  };
  add(*inst.ti, inst.omega_i);
  for (std::size_t k = 0; k < inst.others.size(); ++k) add(*inst.others[k], inst.omega_others[k]);
  return c;
}

ObjectiveParts rhcp2_parts(const Rhcp2Coefficients& c, double u) {
  if (c.direct) return direct_parts(c.instance, 0.0, u);
  ObjectiveParts p;
  const double e = std::exp(-c.lambda_j * u);
  // c1 + c2 log(1 + c3 e) regrouped so that the value at u = 0 is exactly 0.
  p.A = c.c2 * std::log1p(c.c3 * std::expm1(-c.lambda_j * u) / (1.0 + c.c3)) + c.c4 * u;
  p.dA_uj = -c.c2 * c.lambda_j * c.c3 * e / (1.0 + c.c3 * e) + c.c4;
  p.B = c.c5 + c.c6 * u;
  p.dB_uj = c.c6;
  for (std::size_t k = 0; k < c.c7.size(); ++k) {
    const double ek = c.c7[k] * std::exp(c.two_a[k] * u);
    p.B += ek;
    p.dB_uj += c.two_a[k] * ek;
  }
  return p;
}

Objective2 eval_rhcp2(const Rhcp2Coefficients& c, double u_j) {
  const auto o = objective_from_parts(rhcp2_parts(c, u_j));
  return {o.value, o.d_uj};
}

Rhcp1Coefficients build_rhcp1(const LocalState& state, TargetId i, TargetId j,
                              const NetworkGraph& graph) {
  return build_rhcp1(make_instance(state, i, j, graph));
}

Rhcp1Coefficients build_rhcp1(const RhcpInstance& inst) {
  Rhcp1Coefficients c;
  c.instance = inst;
  const auto& pi = inst.ti->params;
  const auto& di = inst.ti->derived;
  const auto& pj = inst.tj->params;
  const auto& dj = inst.tj->derived;
  const double rho = inst.rho;
  const double om_i = inst.omega_i;
  const double om_j = inst.omega_j;

  c.direct = small_a(*inst.ti) || small_a(*inst.tj);
  c.lambda_i = di.lambda;
  c.lambda_j = dj.lambda;
  c.two_ai = 2.0 * pi.A;
  c.two_aj = 2.0 * pj.A;

  c.a2 = 1.0 / pi.G;
  c.a3 = -(pi.G * om_i + pi.Q * di.v2) / (pi.G * om_i + pi.Q * di.v1);
  c.a4 = 1.0 / pj.G;
  c.a5 = -dj.v2 * (2.0 * pj.A * om_j + pj.Q) * std::exp(2.0 * pj.A * rho) /
         (pj.Q * dj.v2 + 2.0 * pj.A);
  c.a6 = -(pj.G - 2.0 * pj.A * dj.v2) / (pj.G - 2.0 * pj.A * dj.v1);
  c.a7 = -c.a5;
  c.a8 = 1.0 / di.v1;
  c.a9 = 1.0 / dj.v1;
  c.a1 = -c.a2 * std::log1p(c.a3) - c.a4 * std::log(std::abs(1.0 + c.a6));

  auto q4 = [](const TargetParams& p) { return p.Q / (4.0 * p.A * p.A); };
  c.b1 = -q4(pi) * (1.0 + 2.0 * pi.A * rho) - q4(pj) * (1.0 + 2.0 * pj.A * rho) -
         om_j / (2.0 * pj.A);
  c.b2 = -pj.Q / (2.0 * pj.A);
  c.b3 = -pi.Q / (2.0 * pi.A);
  c.b4 = (pj.Q + 2.0 * pj.A * om_j) * std::exp(2.0 * pj.A * rho) / (4.0 * pj.A * pj.A);
  c.b5 = pi.Q * std::exp(2.0 * pi.A * rho) / (4.0 * pi.A * pi.A);
  for (std::size_t k = 0; k < inst.others.size(); ++k) {
    const auto& pk = inst.others[k]->params;
    const double om = inst.omega_others[k];
    if (small_a(*inst.others[k])) c.direct = true;
    c.b1 -= q4(pk) * (1.0 + 2.0 * pk.A * rho) + om / (2.0 * pk.A);
    c.b2 -= pk.Q / (2.0 * pk.A);
    c.b3 -= pk.Q / (2.0 * pk.A);
    c.b6.push_back((pk.Q + 2.0 * pk.A * om) * std::exp(2.0 * pk.A * rho) / (4.0 * pk.A * pk.A));
    c.two_ak.push_back(2.0 * pk.A);
  }

  c.c1 = -1.0 / (2.0 * pi.A * di.v1);
  c.c2 = -(di.v1 * om_i - 1.0) / (di.v2 * om_i - 1.0);
  c.c3 = -std::exp(2.0 * pi.A * rho);
  c.c4 = c.c2 * c.c3;
  c.c5 = c.a3;
  return c;
}

ObjectiveParts rhcp1_parts(const Rhcp1Coefficients& c, double u_i, double u_j) {
  if (c.direct) return direct_parts(c.instance, u_i, u_j);
  ObjectiveParts p;
  const double ei = std::exp(-c.lambda_i * u_i);
  const double ej = std::exp(-c.lambda_j * u_j);
  const double one_minus_ej = -std::expm1(-c.lambda_j * u_j);
  const double fj = std::exp(c.two_aj * u_i);
  const double fi = std::exp(c.two_ai * u_j);

  // Log terms regrouped around their u = 0 values, which a1 cancels.
  const double t1 = c.a2 * std::log1p(c.a3 * std::expm1(-c.lambda_i * u_i) / (1.0 + c.a3));
  const double dt1 = -c.a2 * c.lambda_i * c.a3 * ei / (1.0 + c.a3 * ei);
  const double lead = c.a5 * fj - c.a6;
  const double s = (1.0 + c.a6) + lead * one_minus_ej;
  const double t2 = c.a4 * std::log1p(lead * one_minus_ej / (1.0 + c.a6));
  const double dt2_ui = c.a4 * c.two_aj * c.a5 * fj * one_minus_ej / s;
  const double dt2_uj = c.a4 * lead * c.lambda_j * ej / s;
  p.A = t1 + t2 + c.a8 * u_i + c.a9 * u_j;
  p.dA_ui = dt1 + dt2_ui + c.a8;
  p.dA_uj = dt2_uj + c.a9;

  p.B = c.b1 + c.b2 * u_i + c.b3 * u_j + c.b4 * fj + c.b5 * fi;
  p.dB_ui = c.b2 + c.two_aj * c.b4 * fj;
  p.dB_uj = c.b3 + c.two_ai * c.b5 * fi;
  for (std::size_t k = 0; k < c.b6.size(); ++k) {
    const double ek = c.b6[k] * std::exp(c.two_ak[k] * (u_i + u_j));
    p.B += ek;
    p.dB_ui += c.two_ak[k] * ek;
    p.dB_uj += c.two_ak[k] * ek;
  }
  const double num = 1.0 + c.c2 * ei + c.c3 * fi + c.c4 * ei * fi;
  const double den = 1.0 + c.c5 * ei;
  p.B += c.c1 * num / den;
  const double dnum_ui = -c.lambda_i * ei * (c.c2 + c.c4 * fi);
  const double dden_ui = -c.lambda_i * c.c5 * ei;
  p.dB_ui += c.c1 * (dnum_ui * den - num * dden_ui) / (den * den);
  p.dB_uj += c.c1 * c.two_ai * fi * (c.c3 + c.c4 * ei) / den;
  return p;
}

Objective1 eval_rhcp1(const Rhcp1Coefficients& c, double u_i, double u_j) {
  return objective_from_parts(rhcp1_parts(c, u_i, u_j));
}

std::pair<double, double> project_triangle(double u_i, double u_j, double budget) {
  const double ci = std::max(u_i, 0.0), cj = std::max(u_j, 0.0);
  if (ci + cj <= budget) return {ci, cj};
  // Otherwise the nearest feasible point lies on the hypotenuse.
  const double a = std::clamp(0.5 * (u_i - u_j + budget), 0.0, budget);
  return {a, budget - a};
}

Rhcp2Solution solve_rhcp2(const Rhcp2Coefficients& c, double u_max, const SolverOptions& opts) {
  if (!(u_max >= 0.0)) throw std::invalid_argument("solve_rhcp2: negative dwell bound");
  Rhcp2Solution sol;
  if (u_max == 0.0) {
    sol.value = eval_rhcp2(c, 0.0).value;
    return sol;
  }
  auto eval = [&](const Vec<1>& x) {
    const auto o = eval_rhcp2(c, x[0]);
    return std::pair<double, Vec<1>>{o.value, {o.derivative}};
  };
  auto project = [&](const Vec<1>& x) { return Vec<1>{std::clamp(x[0], 0.0, u_max)}; };
  const auto r = pgd<1>(eval, project, {0.5 * u_max}, opts);
  sol.u_j = r.x[0];
  sol.value = r.value;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  return sol;
}

Rhcp1Solution solve_rhcp1_axis(const Rhcp1Coefficients& c, double budget, Rhcp1Axis axis,
                               const SolverOptions& opts) {
  if (!(budget >= 0.0)) throw std::invalid_argument("solve_rhcp1_axis: negative budget");
  const bool on_ui = axis == Rhcp1Axis::kUi;
  auto at = [&](double u) { return on_ui ? eval_rhcp1(c, u, 0.0) : eval_rhcp1(c, 0.0, u); };
  Rhcp1Solution sol;
  if (budget == 0.0) {
    sol.value = at(0.0).value;
    return sol;
  }
  auto eval = [&](const Vec<1>& x) {
    const auto o = at(x[0]);
    return std::pair<double, Vec<1>>{o.value, {on_ui ? o.d_ui : o.d_uj}};
  };
  auto project = [&](const Vec<1>& x) { return Vec<1>{std::clamp(x[0], 0.0, budget)}; };
  const auto r = pgd<1>(eval, project, {0.5 * budget}, opts);
  (on_ui ? sol.u_i : sol.u_j) = r.x[0];
  sol.value = r.value;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  return sol;
}

Rhcp1Solution solve_rhcp1(const Rhcp1Coefficients& c, double budget, const SolverOptions& opts) {
  if (!(budget >= 0.0)) throw std::invalid_argument("solve_rhcp1: negative budget");
  Rhcp1Solution best;
  if (budget == 0.0) {
    best.value = eval_rhcp1(c, 0.0, 0.0).value;
    return best;
  }
  auto eval = [&](const Vec<2>& x) {
    const auto o = eval_rhcp1(c, x[0], x[1]);
    return std::pair<double, Vec<2>>{o.value, {o.d_ui, o.d_uj}};
  };
  auto project = [&](const Vec<2>& x) {
    const auto [a, b] = project_triangle(x[0], x[1], budget);
    return Vec<2>{a, b};
  };
  const std::array<Vec<2>, 4> starts{
      Vec<2>{budget / 3.0, budget / 3.0}, Vec<2>{0.0, 0.0}, Vec<2>{budget, 0.0},
      Vec<2>{0.0, budget}};
  bool first = true;
  for (const auto& x0 : starts) {
    const auto r = pgd<2>(eval, project, x0, opts);
    best.iterations += r.iterations;
    if (first || r.value < best.value) {
      best.u_i = r.x[0];
      best.u_j = r.x[1];
      best.value = r.value;
      best.converged = r.converged;
      first = false;
    }
  }
  return best;
}

TargetId select_next_visit(const std::vector<std::pair<TargetId, double>>& values) {
  if (values.empty()) throw EmptyNeighborhood("no feasible next-visit candidate");
  TargetId best = values.front().first;
  double best_v = values.front().second;
  for (const auto& [j, v] : values) {
    if (v < best_v || (v == best_v && j < best)) {
      best = j;
      best_v = v;
    }
  }
  return best;
}

NeighborSolution solve_for_neighbor(RhcpType type, const LocalState& state, TargetId i,
                                    TargetId j, const NetworkGraph& graph, double H,
                                    const SolverOptions& opts) {
  NeighborSolution out;
  const double rho = graph.rho(i, j);
  if (rho > H) return out;
  const RhcpInstance inst = make_instance(state, i, j, graph);
  out.j = j;
  out.decision.next = j;
  if (type == RhcpType::kDeparture) {
    const auto sol = solve_rhcp2(build_rhcp2(inst), H - rho, opts);
    out.decision.u_j = sol.u_j;
    out.decision.value = sol.value;
    out.converged = sol.converged;
  } else {
    const auto sol = solve_rhcp1(build_rhcp1(inst), H - rho, opts);
    out.decision.u_i = sol.u_i;
    out.decision.u_j = sol.u_j;
    out.decision.value = sol.value;
    out.converged = sol.converged;
  }
  return out;
}

RhcpResult solve_rhcp(RhcpType type, const LocalState& state, TargetId i,
                      const std::vector<TargetId>& candidates, const NetworkGraph& graph,
                      double H, const SolverOptions& opts) {
  RhcpResult res;
  std::vector<std::pair<TargetId, double>> values;
  for (TargetId j : candidates) {
    auto s = solve_for_neighbor(type, state, i, j, graph, H, opts);
    if (s.j < 0) continue;
    ++res.solver_calls;
    values.emplace_back(j, s.decision.value);
    res.per_neighbor.push_back(std::move(s));
  }
  if (values.empty()) {
    throw EmptyNeighborhood("no feasible neighbor of target " + std::to_string(i));
  }
  const TargetId best = select_next_visit(values);
  for (const auto& s : res.per_neighbor) {
    if (s.j == best) res.decision = s.decision;
  }
  return res;
}

}  // namespace persmon
