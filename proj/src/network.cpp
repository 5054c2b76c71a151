#include "persmon/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include "persmon/random.hpp"

namespace persmon {

TargetParams make_target(TargetId id, std::array<double, 2> position, double A,
                         double B, double Q, double Hm, double R) {
  if (!(Q > 0.0)) throw ConfigError("target " + std::to_string(id) + ": Q must be positive");
  if (!(R > 0.0)) throw ConfigError("target " + std::to_string(id) + ": R must be positive");
  if (Hm == 0.0) throw ConfigError("target " + std::to_string(id) + ": H must be nonzero");
  TargetParams p;
  p.id = id;
  p.position = position;
  p.A = A;
  p.B = B;
  p.Q = Q;
  p.Hm = Hm;
  p.R = R;
  p.G = Hm * Hm / R;
  return p;
}

TargetDerived derive(const TargetParams& p) {
  TargetDerived d;
  const double root = std::sqrt(p.A * p.A + p.Q * p.G);
  d.lambda = 2.0 * root;
  // (root - A) / Q cancels for A >> sqrt(QG); the conjugate form does not.
  d.v1 = p.A > 0.0 ? p.G / (root + p.A) : (root - p.A) / p.Q;
  d.v2 = -p.G / (p.Q * d.v1);
  d.omega_ss = 1.0 / d.v1;
  d.omega_bar_ss = p.A < 0.0 ? -p.Q / (2.0 * p.A)
                             : std::numeric_limits<double>::infinity();
  return d;
}

bool in_invariant_band(const Target& t, double omega, double rel_tol) {
  if (rel_tol == 0.0) return omega > t.derived.omega_ss && omega < t.derived.omega_bar_ss;
  return omega >= t.derived.omega_ss * (1.0 - rel_tol) &&
         omega <= t.derived.omega_bar_ss * (1.0 + rel_tol);
}

NetworkGraph::NetworkGraph(std::vector<Target> targets,
                           const std::vector<std::pair<TargetId, TargetId>>& undirected_edges,
                           double agent_speed)
    : targets_(std::move(targets)), speed_(agent_speed) {
  if (!(speed_ > 0.0)) throw ConfigError("agent speed must be positive");
  const int n = size();
  for (int i = 0; i < n; ++i) {
    if (targets_[i].params.id != i) {
      throw ConfigError("target ids must be 0..M-1 in order");
    }
  }
  adjacency_.assign(n, {});
  rho_.assign(n, std::vector<double>(n, std::numeric_limits<double>::infinity()));
  for (auto [i, j] : undirected_edges) {
    check(i);
    check(j);
    if (i == j) throw ConfigError("self-loop edge at target " + std::to_string(i));
    if (has_edge(i, j)) continue;
    const auto& a = targets_[i].params.position;
    const auto& b = targets_[j].params.position;
    const double len = std::hypot(a[0] - b[0], a[1] - b[1]);
    if (!(len > 0.0)) {
      throw ConfigError("coincident targets " + std::to_string(i) + " and " + std::to_string(j));
    }
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
    rho_[i][j] = rho_[j][i] = len / speed_;
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

void NetworkGraph::check(TargetId i) const {
  if (i < 0 || i >= size()) {
    throw std::out_of_range("invalid target id " + std::to_string(i));
  }
}

const Target& NetworkGraph::target(TargetId i) const {
  check(i);
  return targets_[i];
}

bool NetworkGraph::has_edge(TargetId i, TargetId j) const {
  check(i);
  check(j);
  return std::binary_search(adjacency_[i].begin(), adjacency_[i].end(), j);
}

double NetworkGraph::rho(TargetId i, TargetId j) const {
  if (!has_edge(i, j)) {
    throw std::out_of_range("no edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  }
  return rho_[i][j];
}

std::vector<TargetId> NetworkGraph::neighbors(TargetId i, bool include_self) const {
  check(i);
  std::vector<TargetId> out;
  out.reserve(adjacency_[i].size() + 1);
  if (include_self) out.push_back(i);
  out.insert(out.end(), adjacency_[i].begin(), adjacency_[i].end());
  return out;
}

std::vector<std::pair<TargetId, TargetId>> NetworkGraph::edge_list() const {
  std::vector<std::pair<TargetId, TargetId>> out;
  for (int i = 0; i < size(); ++i) {
    for (int j : adjacency_[i]) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

bool NetworkGraph::connected() const {
  if (size() == 0) return true;
  std::vector<char> seen(size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == size();
}

std::vector<std::vector<double>> NetworkGraph::shortest_travel_times() const {
  const int n = size();
  auto d = rho_;
  for (int i = 0; i < n; ++i) d[i][i] = 0.0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

void ProblemConfig::validate() const {
  const int m = graph.size();
  if (m < 1) throw ConfigError("configuration has no targets");
  if (static_cast<int>(omega0.size()) != m) {
    throw ConfigError("omega0 must have one entry per target");
  }
  if (num_agents() > m) throw ConfigError("more agents than targets");
  for (int i = 0; i < m; ++i) {
    if (!(omega0[i] > 0.0)) {
      throw ConfigError("omega0 of target " + std::to_string(i) + " must be positive");
    }
    if (num_agents() > 0 && graph.neighbors(i).empty() && m > 1) {
      throw ConfigError("target " + std::to_string(i) + " is isolated");
    }
  }
  std::vector<char> used(m, 0);
  for (TargetId s : agent_start_targets) {
    if (s < 0 || s >= m) throw ConfigError("agent start target out of range");
    if (used[s]) throw ConfigError("two agents share start target " + std::to_string(s));
    used[s] = 1;
  }
  if (!(horizon_T > 0.0)) throw ConfigError("mission length T must be positive");
  if (!(fixed_H > 0.0)) throw ConfigError("planning horizon H must be positive");
}

std::vector<TargetId> round_robin_starts(int num_agents, int num_targets) {
  std::vector<TargetId> out(num_agents);
  for (int a = 0; a < num_agents; ++a) out[a] = a % num_targets;
  return out;
}

ProblemConfig generate_pc(const GenerateOptions& opts) {
  if (opts.num_targets < 2) throw ConfigError("need at least two targets");
  if (opts.num_agents < 1) throw ConfigError("need at least one agent");
  if (opts.num_agents > opts.num_targets) throw ConfigError("more agents than targets");
  if (!(opts.sigma > 0.0)) throw ConfigError("sigma must be positive");

  Rng rng(opts.seed);
  const int m = opts.num_targets;

  struct Draw {
    double A, B, Q, R;
  };
  std::vector<Draw> draws(m);
  for (auto& d : draws) {
    d.A = rng.uniform(0.01, 0.41);
    d.B = rng.uniform(0.01, 0.41);
    d.Q = rng.uniform(0.1, 2.1);
    d.R = rng.uniform(2.0, 10.0);
  }

  for (int attempt = 0; attempt < opts.retry_budget; ++attempt) {
    std::vector<std::array<double, 2>> pos(m);
    for (auto& p : pos) p = {rng.uniform(), rng.uniform()};

    std::vector<std::pair<TargetId, TargetId>> edges;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (std::hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]) < opts.sigma)
          edges.emplace_back(i, j);

    std::vector<Target> targets;
    targets.reserve(m);
    for (int i = 0; i < m; ++i) {
      targets.emplace_back(make_target(i, pos[i], draws[i].A, draws[i].B, draws[i].Q, 1.0,
                                       draws[i].R));
    }
    NetworkGraph graph(std::move(targets), edges);
    if (!graph.connected()) continue;

    ProblemConfig cfg;
    cfg.omega0.resize(m);
    for (int i = 0; i < m; ++i) {
      const auto& d = graph.target(i).derived;
      const double hi = std::isfinite(d.omega_bar_ss) ? d.omega_bar_ss : 10.0 * d.omega_ss;
      cfg.omega0[i] = rng.uniform(d.omega_ss, hi);
    }
    cfg.graph = std::move(graph);
    cfg.agent_start_targets = round_robin_starts(opts.num_agents, m);
    cfg.horizon_T = opts.horizon_T;
    cfg.fixed_H = opts.fixed_H;
    cfg.rng_seed = opts.seed;
    return cfg;
  }
  std::ostringstream msg;
  msg << "could not generate a connected graph with sigma=" << opts.sigma << " after "
      << opts.retry_budget << " attempts (seed " << opts.seed << ")";
  throw GenerationError(msg.str(), opts.seed);
}

}  // namespace persmon
