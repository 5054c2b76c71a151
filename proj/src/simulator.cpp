#include "persmon/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "persmon/random.hpp"

namespace persmon {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::kDwellEnd: return "dwell_end";
    case EventKind::kArrival: return "arrival";
    case EventKind::kCovering: return "covering";
    case EventKind::kUncovering: return "uncovering";
    case EventKind::kMissionEnd: return "mission_end";
  }
  return "unknown";
}

double tracking_reference(const TrackingOptions& o, TargetId i, double t) {
  return o.amplitude * std::sin(o.frequency * t + i);
}

double tracking_reference_rate(const TrackingOptions& o, TargetId i, double t) {
  return o.amplitude * o.frequency * std::cos(o.frequency * t + i);
}

double tracking_control(const TargetParams& p, const TrackingOptions& o, TargetId i, double t,
                        double phi_hat) {
  const double bc = p.B * o.C;
  if (bc == 0.0) throw std::invalid_argument("tracking control needs B C != 0");
  const double r = tracking_reference(o, i, t);
  const double rdot = tracking_reference_rate(o, i, t);
  return -(o.C * (p.A + o.K) * phi_hat + o.K * o.D - (rdot + o.K * r)) / bc;
}

TrackingTrace integrate_truth_and_estimate(const Target& tg, const TrackingOptions& o,
                                           const std::vector<OmegaSegment>& segments, double T,
                                           std::uint64_t seed, double phi0, double phi_hat0,
                                           int record_every) {
  if (segments.empty()) throw std::invalid_argument("empty covariance trajectory");
  const auto& p = tg.params;
  const long steps = std::lround(T / o.dt);
  const double dt = o.dt;
  const double sq_q = std::sqrt(p.Q * dt);
  const double sq_r = std::sqrt(p.R * dt);
  Rng rng(seed);
  TrackingTrace tr;
  double phi = phi0, phi_hat = phi_hat0;
  std::size_t seg = 0;
  double prev_abs = 0.0, integral = 0.0;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double e = o.C * phi + o.D - tracking_reference(o, p.id, t);
    if (!std::isfinite(e) || !std::isfinite(phi_hat)) {
      std::ostringstream msg;
      msg << "non-finite tracking state at target " << p.id << ", t=" << t;
      throw InvariantViolation(msg.str());
    }
    if (k > 0) integral += 0.5 * (prev_abs + std::abs(e)) * dt;
    prev_abs = std::abs(e);
    if (record_every > 0 && k % record_every == 0) {
      tr.t.push_back(t);
      tr.phi.push_back(phi);
      tr.phi_hat.push_back(phi_hat);
      tr.error.push_back(e);
    }
    if (k == steps) break;

    while (seg + 1 < segments.size() && segments[seg + 1].t0 <= t) ++seg;
    const auto& s = segments[seg];
    const double omega = covariance::propagate(tg, s.mode, s.omega0, t - s.t0);
    const double eta = s.mode == Mode::kActive ? 1.0 : 0.0;

    const double u = tracking_control(p, o, p.id, t, o.oracle_state ? phi : phi_hat);
    const double n1 = rng.normal();
    const double n2 = rng.normal();
    const double dw = o.process_noise ? sq_q * n1 : 0.0;
    const double dv = o.measurement_noise ? sq_r * n2 : 0.0;
    const double dz = p.Hm * phi * dt + dv;
    const double phi_next = phi + (p.A * phi + p.B * u) * dt + dw;
    phi_hat += (p.A * phi_hat + p.B * u) * dt + eta * omega * p.Hm / p.R * (dz - p.Hm * phi_hat * dt);
    phi = phi_next;
  }
  tr.J_C = T > 0.0 ? integral / T : 0.0;
  return tr;
}

namespace {

using Clock = std::chrono::steady_clock;

struct QueuedEvent {
  double time;
  EventKind kind;
  std::uint64_t seq;
  AgentId agent;
  TargetId target;
  std::uint64_t version;

  bool operator>(const QueuedEvent& o) const {
    if (time != o.time) return time > o.time;
    if (kind != o.kind) return static_cast<int>(kind) > static_cast<int>(o.kind);
    return seq > o.seq;
  }
};

struct TargetState {
  double omega = 0.0;
  double t = 0.0;
  Mode mode = Mode::kInactive;
};

struct AgentState {
  TargetId at = -1;  // target while at a target, -1 while travelling
  bool waiting = false;
  // Waiting for a next visit after the dwell ended, else for a dwell decision.
  bool waiting_to_depart = false;
  std::uint64_t version = 0;
};

class Engine {
 public:
  Engine(const ProblemConfig& cfg, Controller& ctrl, const SimOptions& opts)
      : cfg_(cfg), g_(cfg.graph), ctrl_(ctrl), opts_(opts) {}

  SimResult run();

 private:
  void push(double t, EventKind k, AgentId a, TargetId i, std::uint64_t version = 0) {
    queue_.push({t, k, seq_++, a, i, version});
  }
  void advance_to(double t);
  void emit_sample(double s);
  void set_mode(TargetId i, Mode m);
  void check_state();
  [[noreturn]] void fail(const std::string& what);
  WorldView view() const { return {now_, cfg_.horizon_T, g_, omega_now_, cover_}; }
  AgentDecision timed(bool arrival, AgentId a, TargetId i, EventRecord& row);
  void decide_dwell(AgentId a, TargetId i, EventRecord& row);
  void on_dwell_end(AgentId a, TargetId i, EventRecord& row);
  void on_cover_change(const QueuedEvent& e, EventRecord& row);
  void run_tracking();

  const ProblemConfig& cfg_;
  const NetworkGraph& g_;
  Controller& ctrl_;
  SimOptions opts_;

  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  std::vector<TargetState> ts_;
  std::vector<double> omega_now_;
  std::vector<AgentId> cover_;
  std::vector<AgentState> agents_;
  std::vector<double> sample_times_;
  std::size_t next_sample_ = 0;
  double j_w_ = 0.0;
  SimResult res_;
};

void Engine::fail(const std::string& what) {
  std::ostringstream msg;
  msg << what << " at t=" << now_ << " (" << res_.events.size() << " events processed)";
  throw SimulationError(msg.str(), res_.events);
}

void Engine::emit_sample(double s) {
  MetricsSample m;
  m.t = s;
  double total = 0.0, active = 0.0, inst_active = 0.0;
  for (int i = 0; i < g_.size(); ++i) {
    const auto& st = ts_[i];
    const Target& tg = g_.target(i);
    const double w = s - st.t;
    const double om = covariance::propagate(tg, st.mode, st.omega, w);
    const double part = covariance::contribution(tg, st.mode, st.omega, w);
    m.omega.push_back(om);
    m.sum_omega += om;
    const double a_i = res_.j_active[i] + (st.mode == Mode::kActive ? part : 0.0);
    total += a_i + res_.j_inactive[i] + (st.mode == Mode::kInactive ? part : 0.0);
    active += a_i;
    if (st.mode == Mode::kActive) inst_active += om;
  }
  m.cum_total = total;
  m.cum_active = active;
  if (s > 0.0) {
    m.J_t = total / s;
    m.Jhat_t = active > 0.0 ? -active / total : 0.0;
  } else {
    m.J_t = m.sum_omega;
    m.Jhat_t = inst_active > 0.0 ? -inst_active / m.sum_omega : 0.0;
  }
  if (res_.samples.empty() || !(s > res_.samples.back().t)) {
    m.J_window = m.J_t;
    m.Jhat_window = m.Jhat_t;
  } else {
    const auto& prev = res_.samples.back();
    const double dt = s - prev.t;
    const double dj = total - prev.cum_total;
    const double da = active - prev.cum_active;
    m.J_window = dj / dt;
    m.Jhat_window = da > 0.0 && dj > 0.0 ? std::clamp(-da / dj, -1.0, 0.0) : 0.0;
  }
  res_.samples.push_back(std::move(m));
}

void Engine::advance_to(double t) {
  while (next_sample_ < sample_times_.size() && sample_times_[next_sample_] <= t) {
    emit_sample(sample_times_[next_sample_++]);
  }
  for (int i = 0; i < g_.size(); ++i) {
    auto& st = ts_[i];
    const double w = t - st.t;
    if (w > 0.0) {
      const Target& tg = g_.target(i);
      const double part = covariance::contribution(tg, st.mode, st.omega, w);
      (st.mode == Mode::kActive ? res_.j_active[i] : res_.j_inactive[i]) += part;
      st.omega = covariance::propagate(tg, st.mode, st.omega, w);
      st.t = t;
      j_w_ = std::max(j_w_, st.omega);
    }
    omega_now_[i] = st.omega;
  }
  now_ = t;
}

void Engine::set_mode(TargetId i, Mode m) {
  auto& st = ts_[i];
  st.mode = m;
  auto& segs = res_.segments[i];
  if (!segs.empty() && segs.back().t0 == now_) {
    segs.back() = {now_, st.omega, m};
  } else {
    segs.push_back({now_, st.omega, m});
  }
}

void Engine::check_state() {
  if (!opts_.check_invariants) return;
  for (int i = 0; i < g_.size(); ++i) {
    const Target& tg = g_.target(i);
    const double om = ts_[i].omega;
    if (!in_invariant_band(tg, om, opts_.band_tolerance)) {
      std::ostringstream msg;
      msg << "covariance of target " << i << " left the invariant band (omega=" << om << ")";
      fail(msg.str());
    }
    const double slope = 2.0 * om * tg.params.A + tg.params.Q;
    if (!(slope > -opts_.band_tolerance * tg.params.Q)) {
      std::ostringstream msg;
      msg << "2 omega A + Q <= 0 at target " << i;
      fail(msg.str());
    }
  }
  std::vector<int> occ(g_.size(), 0);
  for (const auto& ag : agents_) {
    if (ag.at >= 0) ++occ[ag.at];
  }
  for (int c : occ) {
    res_.summary.max_occupancy = std::max(res_.summary.max_occupancy, c);
    if (c > 1) fail("simultaneous target sharing");
  }
}

AgentDecision Engine::timed(bool arrival, AgentId a, TargetId i, EventRecord& row) {
  const auto w = view();
  const auto t0 = Clock::now();
  AgentDecision d = arrival ? ctrl_.on_arrival(a, i, w) : ctrl_.on_dwell_end(a, i, w);
  const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  DecisionRecord rec;
  rec.time = now_;
  rec.agent = a;
  rec.target = i;
  rec.arrival = arrival;
  rec.solver_calls = d.solver_calls;
  rec.wall_us = us;
  rec.learned = d.learned;
  rec.fallback = d.fallback;
  rec.wait = d.wait;
  res_.decisions.push_back(rec);
  row.solver_calls += d.solver_calls;
  row.solver_wall_us += us;
  return d;
}

void Engine::decide_dwell(AgentId a, TargetId i, EventRecord& row) {
  auto& ag = agents_[a];
  const AgentDecision d = timed(true, a, i, row);
  ++ag.version;
  if (d.wait) {
    ag.waiting = true;
    ag.waiting_to_depart = false;
    return;
  }
  ag.waiting = false;
  const double u = std::max(d.decision.u_i, 0.0);
  if (row.kind == EventKind::kArrival) {
    row.u_i = u;
    row.j = d.decision.next;
    row.u_j = d.decision.u_j;
  }
  if (now_ + u <= cfg_.horizon_T) push(now_ + u, EventKind::kDwellEnd, a, i, ag.version);
}

void Engine::on_dwell_end(AgentId a, TargetId i, EventRecord& row) {
  auto& ag = agents_[a];
  const AgentDecision d = timed(false, a, i, row);
  if (d.wait) {
    ag.waiting = true;
    ag.waiting_to_depart = true;
    return;
  }
  const TargetId j = d.decision.next;
  const NetworkGraph& travel = ctrl_.travel_graph();
  if (j < 0 || j >= g_.size() || j == i || cover_[j] >= 0 || !travel.has_edge(i, j)) {
    std::ostringstream msg;
    msg << "agent " << a << " chose inadmissible next visit " << j << " from " << i;
    fail(msg.str());
  }
  row.j = j;
  row.u_j = d.decision.u_j;
  set_mode(i, Mode::kInactive);
  cover_[i] = -1;
  cover_[j] = a;
  ag.at = -1;
  ag.waiting = false;
  ++ag.version;
  push(now_, EventKind::kUncovering, a, i);
  push(now_, EventKind::kCovering, a, j);
  push(now_ + travel.rho(i, j), EventKind::kArrival, a, j);
}

void Engine::on_cover_change(const QueuedEvent& e, EventRecord& row) {
  for (AgentId b = 0; b < static_cast<AgentId>(agents_.size()); ++b) {
    const auto& ag = agents_[b];
    if (b == e.agent || ag.at < 0) continue;
    if (ag.waiting) {
      if (e.kind != EventKind::kUncovering) continue;
      if (ag.waiting_to_depart) {
        on_dwell_end(b, ag.at, row);
      } else {
        decide_dwell(b, ag.at, row);
      }
    } else if (ctrl_.resolves_on_cover_change() && g_.has_edge(ag.at, e.target)) {
      decide_dwell(b, ag.at, row);
    }
  }
}

void Engine::run_tracking() {
  const int m = g_.size();
  res_.J_C_per_target.assign(m, 0.0);
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    Rng init(derive_seed(opts_.seed, 2 * static_cast<std::uint64_t>(i)));
    const double draw = init.normal();
    const auto& to = opts_.tracking_opts;
    double phi_hat0 = 0.0;
    double phi0 = std::sqrt(cfg_.omega0[i]) * draw;
    if (to.start_on_reference) {
      phi0 = (tracking_reference(to, i, 0.0) - to.D) / to.C;
      phi_hat0 = phi0;
    }
    const auto tr = integrate_truth_and_estimate(
        g_.target(i), opts_.tracking_opts, res_.segments[i], cfg_.horizon_T,
        derive_seed(opts_.seed, 2 * static_cast<std::uint64_t>(i) + 1), phi0, phi_hat0);
    res_.J_C_per_target[i] = tr.J_C;
    sum += tr.J_C;
  }
  res_.summary.J_C = sum / m;
}

SimResult Engine::run() {
  cfg_.validate();
  const int m = g_.size();
  const double T = cfg_.horizon_T;
  res_.controller = ctrl_.name();
  res_.j_active.assign(m, 0.0);
  res_.j_inactive.assign(m, 0.0);
  res_.segments.assign(m, {});
  ts_.resize(m);
  omega_now_.resize(m);
  cover_.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    ts_[i] = {cfg_.omega0[i], 0.0, Mode::kInactive};
    omega_now_[i] = cfg_.omega0[i];
    res_.segments[i].push_back({0.0, cfg_.omega0[i], Mode::kInactive});
    j_w_ = std::max(j_w_, cfg_.omega0[i]);
  }
  if (!(opts_.sample_dt > 0.0)) throw std::invalid_argument("sample_dt must be positive");
  for (long k = 0;; ++k) {
    const double s = static_cast<double>(k) * opts_.sample_dt;
    if (s > T * (1.0 + 1e-12)) break;
    sample_times_.push_back(std::min(s, T));
  }
  if (sample_times_.back() < T) sample_times_.push_back(T);

  agents_.resize(cfg_.num_agents());
  for (AgentId a = 0; a < cfg_.num_agents(); ++a) {
    const TargetId s = cfg_.agent_start_targets[a];
    cover_[s] = a;
    push(0.0, EventKind::kArrival, a, s);
  }
  push(T, EventKind::kMissionEnd, -1, -1);

  while (!queue_.empty()) {
    const QueuedEvent e = queue_.top();
    queue_.pop();
    if (e.kind == EventKind::kDwellEnd && e.version != agents_[e.agent].version) continue;
    advance_to(e.time);
    EventRecord row;
    row.time = e.time;
    row.kind = e.kind;
    row.agent = e.agent;
    row.target = e.target;
    switch (e.kind) {
      case EventKind::kArrival: {
        auto& ag = agents_[e.agent];
        if (cover_[e.target] != e.agent) fail("arrival at a target covered by another agent");
        ag.at = e.target;
        set_mode(e.target, Mode::kActive);
        check_state();
        decide_dwell(e.agent, e.target, row);
        break;
      }
      case EventKind::kDwellEnd:
        check_state();
        on_dwell_end(e.agent, e.target, row);
        break;
      case EventKind::kCovering:
      case EventKind::kUncovering:
        check_state();
        on_cover_change(e, row);
        break;
      case EventKind::kMissionEnd:
        check_state();
        break;
    }
    res_.events.push_back(row);
    if (e.kind == EventKind::kMissionEnd) break;
  }

  for (int i = 0; i < m; ++i) res_.omega_final.push_back(ts_[i].omega);
  for (const auto& ag : agents_) res_.agent_final_target.push_back(ag.at);
  double ja = 0.0, jt = 0.0;
  for (int i = 0; i < m; ++i) {
    ja += res_.j_active[i];
    jt += res_.j_active[i] + res_.j_inactive[i];
  }
  auto& s = res_.summary;
  s.J_T = jt / T;
  s.Jhat_T = ja > 0.0 ? -ja / jt : 0.0;
  s.J_W = j_w_;
  s.decisions = static_cast<long>(res_.decisions.size());
  double wall = 0.0;
  for (const auto& d : res_.decisions) {
    s.solver_calls += d.solver_calls;
    wall += d.wall_us;
  }
  s.mean_solver_wall_us = s.decisions > 0 ? wall / static_cast<double>(s.decisions) : 0.0;
  s.J_C = std::numeric_limits<double>::quiet_NaN();
  if (opts_.tracking) run_tracking();
  res_.controller_stats = ctrl_.stats();
  return std::move(res_);
}

}  // namespace

SimResult simulate(const ProblemConfig& cfg, Controller& controller, const SimOptions& opts) {
  Engine engine(cfg, controller, opts);
  return engine.run();
}

}  // namespace persmon
