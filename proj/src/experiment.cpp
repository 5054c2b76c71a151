#include "persmon/experiment.hpp"

#include <omp.h>

#include <cmath>
#include <map>

#include "persmon/random.hpp"

namespace persmon {

const std::vector<std::string>& controller_names() {
  static const std::vector<std::string> names{"rhc",  "bdc",   "mtsp",   "rhc-p",
                                              "bdc-p", "rhc-l", "rhc-al", "rhc-le"};
  return names;
}

std::unique_ptr<Controller> make_controller(const std::string& name, const ProblemConfig& cfg,
                                            const ControllerOptions& o,
                                            const LearningOptions& lo) {
  if (auto c = make_basic_controller(name, cfg, o)) return c;
  LearningOptions l = lo;
  if (name == "rhc-l") {
    l.mode = LearningMode::kLearn;
  } else if (name == "rhc-le") {
    l.mode = LearningMode::kLearn;
    l.dataset_size = 3 * lo.dataset_size;
  } else if (name == "rhc-al") {
    l.mode = LearningMode::kActiveLearn;
  } else {
    throw ConfigError("unknown controller '" + name + "'");
  }
  return std::make_unique<LearningRhcController>(cfg, o, l, name);
}

SimResult run_controller(const ProblemConfig& cfg, const RunSpec& spec) {
  auto ctrl = make_controller(spec.controller, cfg, spec.control, spec.learning);
  return simulate(cfg, *ctrl, spec.sim);
}

WindowStats window_stats(const SimResult& r, double lo, double hi) {
  WindowStats w;
  int n = 0;
  for (const auto& s : r.samples) {
    if (s.t >= lo && s.t <= hi) {
      w.mean_J_t += s.J_t;
      ++n;
    }
  }
  if (n > 0) w.mean_J_t /= n;
  long learned = 0;
  double learned_wall = 0.0, learned_calls = 0.0;
  for (const auto& d : r.decisions) {
    if (d.time < lo || d.time > hi) continue;
    ++w.decisions;
    w.mean_wall_us += d.wall_us;
    w.mean_solver_calls += d.solver_calls;
    if (d.learned) {
      ++learned;
      learned_wall += d.wall_us;
      learned_calls += d.solver_calls;
    }
  }
  if (w.decisions > 0) {
    const double dn = static_cast<double>(w.decisions);
    w.mean_wall_us /= dn;
    w.mean_solver_calls /= dn;
    w.learned_fraction = static_cast<double>(learned) / dn;
  }
  if (learned > 0) {
    w.mean_learned_wall_us = learned_wall / static_cast<double>(learned);
    w.mean_learned_solver_calls = learned_calls / static_cast<double>(learned);
  }
  return w;
}

namespace {

struct CellTask {
  int config;
  int controller;
  int rep;
};

std::vector<CellTask> tasks_of(const CompareSpec& spec) {
  std::vector<CellTask> t;
  for (int c = 0; c < static_cast<int>(spec.configs.size()); ++c)
    for (int k = 0; k < static_cast<int>(spec.controllers.size()); ++k)
      for (int r = 0; r < spec.reps; ++r) t.push_back({c, k, r});
  return t;
}

CellResult run_cell(const CompareSpec& spec, const CellTask& task) {
  CellResult out;
  out.config = task.config;
  out.controller = spec.controllers[task.controller];
  out.rep = task.rep;
  out.seed = derive_seed(spec.base_seed, static_cast<std::uint64_t>(task.rep));
  RunSpec rs = spec.base;
  rs.controller = out.controller;
  rs.control.seed = out.seed;
  rs.learning.train.seed = out.seed;
  rs.sim.seed = out.seed;
  try {
    const auto r = run_controller(spec.configs[task.config], rs);
    out.summary = r.summary;
    if (spec.window_hi > spec.window_lo) out.window = window_stats(r, spec.window_lo, spec.window_hi);
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

struct Moments {
  double s = 0.0, s2 = 0.0;
  int n = 0;
  void add(double v) {
    s += v;
    s2 += v * v;
    ++n;
  }
  double mean() const { return n > 0 ? s / n : std::nan(""); }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (s2 - n * m * m) / (n - 1)));
  }
};

CellAggregate aggregate(int config, const std::string& ctrl, const std::vector<const CellResult*>& cells) {
  CellAggregate a;
  a.config = config;
  a.controller = ctrl;
  Moments jt, jh, jw, jc, wall, win;
  for (const CellResult* c : cells) {
    ++a.runs;
    if (!c->ok) {
      ++a.failures;
      continue;
    }
    jt.add(c->summary.J_T);
    jh.add(c->summary.Jhat_T);
    jw.add(c->summary.J_W);
    if (std::isfinite(c->summary.J_C)) jc.add(c->summary.J_C);
    wall.add(c->summary.mean_solver_wall_us);
    win.add(c->window.mean_J_t);
  }
  a.J_T_mean = jt.mean();
  a.J_T_std = jt.stddev();
  a.Jhat_T_mean = jh.mean();
  a.Jhat_T_std = jh.stddev();
  a.J_W_mean = jw.mean();
  a.J_W_std = jw.stddev();
  a.J_C_mean = jc.n > 0 ? jc.mean() : std::nan("");
  a.J_C_std = jc.stddev();
  a.wall_us_mean = wall.mean();
  a.window_J_t_mean = win.mean();
  return a;
}

CompareResult finish(const CompareSpec& spec, std::vector<CellResult> cells) {
  CompareResult res;
  res.cells = std::move(cells);
  for (const auto& c : res.cells) res.failures += !c.ok;
  const int nc = static_cast<int>(spec.configs.size());
  for (int c = 0; c < nc; ++c) {
    for (const auto& name : spec.controllers) {
      std::vector<const CellResult*> group;
      for (const auto& cell : res.cells) {
        if (cell.config == c && cell.controller == name) group.push_back(&cell);
      }
      res.aggregates.push_back(aggregate(c, name, group));
    }
  }
  // Averages row: mean over configurations of the per-config means.
  for (const auto& name : spec.controllers) {
    CellAggregate avg;
    avg.config = -1;
    avg.controller = name;
    Moments jt, jh, jw, jc, wall, win;
    for (const auto& a : res.aggregates) {
      if (a.controller != name) continue;
      avg.runs += a.runs;
      avg.failures += a.failures;
      if (a.failures == a.runs) continue;
      jt.add(a.J_T_mean);
      jh.add(a.Jhat_T_mean);
      jw.add(a.J_W_mean);
      if (std::isfinite(a.J_C_mean)) jc.add(a.J_C_mean);
      wall.add(a.wall_us_mean);
      win.add(a.window_J_t_mean);
    }
    avg.J_T_mean = jt.mean();
    avg.J_T_std = jt.stddev();
    avg.Jhat_T_mean = jh.mean();
    avg.Jhat_T_std = jh.stddev();
    avg.J_W_mean = jw.mean();
    avg.J_W_std = jw.stddev();
    avg.J_C_mean = jc.n > 0 ? jc.mean() : std::nan("");
    avg.J_C_std = jc.stddev();
    avg.wall_us_mean = wall.mean();
    avg.window_J_t_mean = win.mean();
    res.averages.push_back(avg);
  }
  return res;
}

}  // namespace

CompareResult run_compare_serial(const CompareSpec& spec) {
  const auto tasks = tasks_of(spec);
  std::vector<CellResult> cells;
  cells.reserve(tasks.size());
  for (const auto& t : tasks) cells.push_back(run_cell(spec, t));
  return finish(spec, std::move(cells));
}

CompareResult run_compare_parallel(const CompareSpec& spec) {
  const auto tasks = tasks_of(spec);
  std::vector<CellResult> cells(tasks.size());
  const long n = static_cast<long>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < n; ++k) cells[k] = run_cell(spec, tasks[k]);
  return finish(spec, std::move(cells));
}

}  // namespace persmon
