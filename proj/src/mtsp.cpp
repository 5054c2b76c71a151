#include "persmon/mtsp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "persmon/covariance.hpp"
#include "persmon/random.hpp"

namespace persmon {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd similarity(const NetworkGraph& g) {
  const int n = g.size();
  const auto edges = g.edge_list();
  double mean_len = 0.0;
  for (auto [i, j] : edges) mean_len += g.rho(i, j) * g.speed();
  if (!edges.empty()) mean_len /= static_cast<double>(edges.size());
  const double s2 = mean_len > 0.0 ? mean_len * mean_len : 1.0;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : edges) {
    const double d = g.rho(i, j) * g.speed();
    W(i, j) = W(j, i) = std::exp(-d * d / (2.0 * s2));
  }
  return W;
}

// Relabels so that cluster ids follow the order of their smallest member.
void canonical_labels(std::vector<int>& labels, int k) {
  std::vector<int> map(k, -1);
  int next = 0;
  for (int& l : labels) {
    if (map[l] < 0) map[l] = next++;
    l = map[l];
  }
}

std::vector<int> kmeans(const Eigen::MatrixXd& X, int k, Rng& rng, int restarts) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> best;
  double best_inertia = kInf;
  for (int r = 0; r < restarts; ++r) {
    // k-means++ seeding.
    Eigen::MatrixXd C(k, X.cols());
    C.row(0) = X.row(static_cast<int>(rng.uniform() * n) % n);
    Eigen::VectorXd d2(n);
    for (int c = 1; c < k; ++c) {
      for (int p = 0; p < n; ++p) {
        double m = kInf;
        for (int q = 0; q < c; ++q) m = std::min(m, (X.row(p) - C.row(q)).squaredNorm());
        d2[p] = m;
      }
      const double total = d2.sum();
      int pick = n - 1;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (int p = 0; p < n; ++p) {
          u -= d2[p];
          if (u <= 0.0) {
            pick = p;
            break;
          }
        }
      } else {
        pick = static_cast<int>(rng.uniform() * n) % n;
      }
      C.row(c) = X.row(pick);
    }

    std::vector<int> lab(n, -1);
    for (int it = 0; it < 100; ++it) {
      bool changed = false;
      for (int p = 0; p < n; ++p) {
        int arg = 0;
        double m = kInf;
        for (int c = 0; c < k; ++c) {
          const double v = (X.row(p) - C.row(c)).squaredNorm();
          if (v < m) m = v, arg = c;
        }
        if (lab[p] != arg) lab[p] = arg, changed = true;
      }
      // An empty cluster takes the point farthest from its centroid.
      for (int c = 0; c < k; ++c) {
        if (std::count(lab.begin(), lab.end(), c) > 0) continue;
        int far = 0;
        double fd = -1.0;
        for (int p = 0; p < n; ++p) {
          if (std::count(lab.begin(), lab.end(), lab[p]) < 2) continue;
          const double v = (X.row(p) - C.row(lab[p])).squaredNorm();
          if (v > fd) fd = v, far = p;
        }
        lab[far] = c;
        changed = true;
      }
      C.setZero();
      std::vector<int> cnt(k, 0);
      for (int p = 0; p < n; ++p) {
        C.row(lab[p]) += X.row(p);
        ++cnt[lab[p]];
      }
      for (int c = 0; c < k; ++c) C.row(c) /= static_cast<double>(cnt[c]);
      if (!changed) break;
    }
    double inertia = 0.0;
    for (int p = 0; p < n; ++p) inertia += (X.row(p) - C.row(lab[p])).squaredNorm();
    if (inertia < best_inertia - 1e-12) {
      best_inertia = inertia;
      best = lab;
    }
  }
  return best;
}

// Fixed point of one period of a single target: active for d, inactive for
// rest. The period map is increasing and concave, so the crossing is unique.
double periodic_fixed_point(const Target& t, double d, double rest) {
  namespace cov = covariance;
  const double ss = t.derived.omega_ss;
  if (!(d > 0.0)) return t.params.A < 0.0 ? t.derived.omega_bar_ss : kInf;
  auto f = [&](double x) { return cov::propagate_inactive(t, cov::propagate_active(t, x, d), rest); };
  double lo = ss;
  double hi = std::max(f(1e15 * ss), ss);
  if (!std::isfinite(hi)) return kInf;
  if (f(lo) <= lo) return lo;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > mid ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double straight_travel(const NetworkGraph& g, TargetId a, TargetId b) {
  const auto& p = g.target(a).params.position;
  const auto& q = g.target(b).params.position;
  return std::hypot(p[0] - q[0], p[1] - q[1]) / g.speed();
}

std::vector<int> spectral_clusters(const NetworkGraph& g, int k, std::uint64_t seed) {
  const int n = g.size();
  if (k < 1 || k > n) throw std::invalid_argument("cluster count must be in [1, M]");
  if (k == 1) return std::vector<int>(n, 0);
  if (k == n) {
    std::vector<int> l(n);
    std::iota(l.begin(), l.end(), 0);
    return l;
  }
  const Eigen::MatrixXd W = similarity(g);
  const Eigen::VectorXd deg = W.rowwise().sum();
  Eigen::VectorXd dinv = deg.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 0.0; });
  const Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n) - dinv.asDiagonal() * W * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  Eigen::MatrixXd U = es.eigenvectors().leftCols(k);
  for (int p = 0; p < n; ++p) {
    const double nr = U.row(p).norm();
    if (nr > 0.0) U.row(p) /= nr;
  }
  Rng rng(seed);
  auto labels = kmeans(U, k, rng, 10);
  canonical_labels(labels, k);
  return labels;
}

double normalized_cut(const NetworkGraph& g, const std::vector<int>& labels, int k) {
  const Eigen::MatrixXd W = similarity(g);
  std::vector<double> cut(k, 0.0), vol(k, 0.0);
  for (int i = 0; i < g.size(); ++i) {
    for (int j = 0; j < g.size(); ++j) {
      vol[labels[i]] += W(i, j);
      if (labels[i] != labels[j]) cut[labels[i]] += W(i, j);
    }
  }
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += vol[c] > 0.0 ? cut[c] / vol[c] : kInf;
  return s;
}

void repair_clusters(const NetworkGraph& g, std::vector<int>& labels, int k) {
  const int n = g.size();
  for (int pass = 0; pass < n; ++pass) {
    std::vector<char> orphan(n, 0);
    for (int c = 0; c < k; ++c) {
      std::vector<int> comp(n, -1);
      int ncomp = 0, best = -1, best_size = 0;
      for (int s = 0; s < n; ++s) {
        if (labels[s] != c || comp[s] >= 0) continue;
        int size = 0;
        std::vector<int> stack{s};
        comp[s] = ncomp;
        while (!stack.empty()) {
          const int u = stack.back();
          stack.pop_back();
          ++size;
          for (int v : g.neighbors(u)) {
            if (labels[v] == c && comp[v] < 0) {
              comp[v] = ncomp;
              stack.push_back(v);
            }
          }
        }
        if (size > best_size) best_size = size, best = ncomp;
        ++ncomp;
      }
      for (int s = 0; s < n; ++s) {
        if (labels[s] == c && comp[s] != best) orphan[s] = 1;
      }
    }
    bool moved = false;
    for (int v = 0; v < n; ++v) {
      if (!orphan[v]) continue;
      int target = -1;
      double d = kInf;
      for (int u : g.neighbors(v)) {
        if (labels[u] == labels[v] || orphan[u]) continue;
        const double du = straight_travel(g, u, v);
        if (du < d) d = du, target = u;
      }
      if (target >= 0) {
        labels[v] = labels[target];
        moved = true;
      }
    }
    if (!moved) break;
  }
}

std::vector<TargetId> build_cycle(const NetworkGraph& g, std::vector<TargetId> members) {
  std::sort(members.begin(), members.end());
  const int n = static_cast<int>(members.size());
  if (n <= 2) return members;
  std::vector<TargetId> tour{members.front()};
  std::vector<char> used(n, 0);
  used[0] = 1;
  for (int step = 1; step < n; ++step) {
    int arg = -1;
    double d = kInf;
    for (int p = 0; p < n; ++p) {
      if (used[p]) continue;
      const double v = straight_travel(g, tour.back(), members[p]);
      if (v < d) d = v, arg = p;
    }
    used[arg] = 1;
    tour.push_back(members[arg]);
  }
  auto dist = [&](int a, int b) { return straight_travel(g, tour[a], tour[b % n]); };
  bool improved = true;
  while (improved) {
    improved = false;
    for (int a = 0; a < n - 1; ++a) {
      for (int b = a + 2; b < n; ++b) {
        if (a == 0 && b == n - 1) continue;
        const double delta = dist(a, b) + dist(a + 1, b + 1) - dist(a, a + 1) - dist(b, b + 1);
        if (delta < -1e-12) {
          std::reverse(tour.begin() + a + 1, tour.begin() + b + 1);
          improved = true;
        }
      }
    }
  }
  return tour;
}

double cycle_travel_time(const NetworkGraph& g, const std::vector<TargetId>& cycle) {
  const std::size_t n = cycle.size();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t p = 0; p < n; ++p) s += straight_travel(g, cycle[p], cycle[(p + 1) % n]);
  return s;
}

std::vector<double> dwell_weights(const NetworkGraph& g, const std::vector<TargetId>& cycle) {
  const double lap = cycle_travel_time(g, cycle);
  std::vector<double> w;
  double total = 0.0;
  for (TargetId k : cycle) {
    const Target& t = g.target(k);
    const double ss = t.derived.omega_ss;
    w.push_back(covariance::propagate_inactive(t, ss, lap) - ss);
    total += w.back();
  }
  const double mean = total / static_cast<double>(cycle.size());
  for (double& v : w) v = mean > 0.0 ? v / mean : 1.0;
  return w;
}

double periodic_peak(const NetworkGraph& g, const std::vector<TargetId>& cycle,
                     const std::vector<double>& dwell) {
  double period = cycle_travel_time(g, cycle);
  for (TargetId k : cycle) period += dwell[k];
  double peak = 0.0;
  for (TargetId k : cycle) {
    peak = std::max(peak, periodic_fixed_point(g.target(k), dwell[k], period - dwell[k]));
  }
  return peak;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

CycleAssignment mtsp_plan(const ProblemConfig& cfg, std::uint64_t seed) {
  const NetworkGraph& g = cfg.graph;
  const int k = cfg.num_agents();
  const int n = g.size();
  CycleAssignment plan;
  plan.cluster_of = spectral_clusters(g, k, seed);
  repair_clusters(g, plan.cluster_of, k);

  std::vector<std::vector<TargetId>> members(k);
  for (int i = 0; i < n; ++i) members[plan.cluster_of[i]].push_back(i);
  std::vector<std::vector<TargetId>> cycles;
  for (auto& m : members) cycles.push_back(build_cycle(g, m));

  // Agent-to-cycle matching by total start distance.
  auto cost = [&](int a, int c) {
    const TargetId s = cfg.agent_start_targets[a];
    double best = kInf;
    for (TargetId m : cycles[c]) best = std::min(best, m == s ? 0.0 : straight_travel(g, s, m));
    return best;
  };
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  if (k <= 8) {
    double best = kInf;
    do {
      double s = 0.0;
      for (int a = 0; a < k; ++a) s += cost(a, perm[a]);
      if (s < best - 1e-12) best = s, best_perm = perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> taken(k, 0);
    for (int a = 0; a < k; ++a) {
      int arg = -1;
      double d = kInf;
      for (int c = 0; c < k; ++c) {
        if (!taken[c] && cost(a, c) < d) d = cost(a, c), arg = c;
      }
      taken[arg] = 1;
      best_perm[a] = arg;
    }
  }
  plan.cycles.resize(k);
  for (int a = 0; a < k; ++a) plan.cycles[a] = cycles[best_perm[a]];

  plan.dwell.assign(n, kInf);
  for (const auto& cyc : plan.cycles) {
    if (cyc.size() < 2) continue;
    const auto w = dwell_weights(g, cyc);
    auto objective = [&](double s) {
      std::vector<double> d(n, 0.0);
      for (std::size_t p = 0; p < cyc.size(); ++p) d[cyc[p]] = s * w[p];
      return periodic_peak(g, cyc, d);
    };
    const double s = golden_section(objective, 1e-3, kMaxDwellScale, 1e-6);
    for (std::size_t p = 0; p < cyc.size(); ++p) plan.dwell[cyc[p]] = s * w[p];
  }
  return plan;
}

}  // namespace persmon
