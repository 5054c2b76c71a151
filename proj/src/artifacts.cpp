#include "persmon/artifacts.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace persmon {

using nlohmann::json;

namespace {

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field '") + key + "': " + e.what());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

json config_to_json(const ProblemConfig& cfg) {
  json targets = json::array();
  for (const auto& t : cfg.graph.targets()) {
    const auto& p = t.params;
    targets.push_back({{"id", p.id},
                       {"pos", {p.position[0], p.position[1]}},
                       {"A", p.A},
                       {"B", p.B},
                       {"Q", p.Q},
                       {"H", p.Hm},
                       {"R", p.R}});
  }
  json edges = json::array();
  for (const auto& [i, j] : cfg.graph.edge_list()) edges.push_back({i, j});
  return {{"schema", kSchemaVersion},
          {"targets", targets},
          {"edges", edges},
          {"agents", cfg.agent_start_targets},
          {"omega0", cfg.omega0},
          {"T", cfg.horizon_T},
          {"H", cfg.fixed_H},
          {"seed", cfg.rng_seed},
          {"speed", cfg.graph.speed()}};
}

ProblemConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: not a JSON object");
  if (j.contains("schema") && field<int>(j, "schema") != kSchemaVersion)
    throw ConfigError("config: unsupported schema version");
  std::vector<Target> targets;
  const auto jt = field<json>(j, "targets");
  if (!jt.is_array()) throw ConfigError("config: 'targets' must be an array");
  for (const auto& t : jt) {
    const auto pos = field<std::vector<double>>(t, "pos");
    if (pos.size() != 2) throw ConfigError("config: 'pos' must have two entries");
    const int id = field<int>(t, "id");
    if (id != static_cast<int>(targets.size())) throw ConfigError("config: target ids must be 0..M-1 in order");
    const double R = field<double>(t, "R");
    if (!(R > 0.0)) throw ConfigError("config: R must be positive");
    targets.emplace_back(make_target(id, {pos[0], pos[1]}, field<double>(t, "A"),
                                     field<double>(t, "B"), field<double>(t, "Q"),
                                     field<double>(t, "H"), R));
  }
  std::vector<std::pair<TargetId, TargetId>> edges;
  for (const auto& e : field<json>(j, "edges")) {
    const auto ij = e.get<std::vector<int>>();
    if (ij.size() != 2) throw ConfigError("config: edges must be pairs");
    edges.emplace_back(ij[0], ij[1]);
  }
  const double speed = j.contains("speed") ? field<double>(j, "speed") : 1.0;
  ProblemConfig cfg;
  try {
    cfg.graph = NetworkGraph(std::move(targets), edges, speed);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.agent_start_targets = field<std::vector<int>>(j, "agents");
  cfg.omega0 = field<std::vector<double>>(j, "omega0");
  cfg.horizon_T = field<double>(j, "T");
  cfg.fixed_H = j.contains("H") ? field<double>(j, "H") : 10.0;
  cfg.rng_seed = j.contains("seed") ? field<std::uint64_t>(j, "seed") : 0;
  cfg.validate();
  return cfg;
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config(const std::filesystem::path& path, const ProblemConfig& cfg) {
  write_json(path, config_to_json(cfg));
}

ProblemConfig read_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_events_csv(const std::filesystem::path& path, const std::vector<EventRecord>& events,
                      bool timing) {
  auto out = open_out(path);
  out << "time,kind,agent,target,u_i,j,u_j,solver_calls,solver_wall_us\n";
  for (const auto& e : events) {
    out << format_double(e.time) << ',' << event_kind_name(e.kind) << ',' << e.agent << ','
        << e.target << ',' << format_double(e.u_i) << ',' << e.j << ',' << format_double(e.u_j)
        << ',' << e.solver_calls << ',' << format_double(timing ? e.solver_wall_us : 0.0) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsSample>& samples) {
  auto out = open_out(path);
  out << "t,sum_trace_omega,J_t,Jhat_t,J_window,Jhat_window";
  const std::size_t m = samples.empty() ? 0 : samples.front().omega.size();
  for (std::size_t i = 0; i < m; ++i) out << ",omega_" << i;
  out << '\n';
  for (const auto& s : samples) {
    out << format_double(s.t) << ',' << format_double(s.sum_omega) << ',' << format_double(s.J_t)
        << ',' << format_double(s.Jhat_t) << ',' << format_double(s.J_window) << ','
        << format_double(s.Jhat_window);
    for (double w : s.omega) out << ',' << format_double(w);
    out << '\n';
  }
}

json summary_to_json(const SimResult& r, bool timing) {
  const auto& s = r.summary;
  // Solver calls per decision split by the path that produced it.
  long n_learned = 0, n_full = 0, c_learned = 0, c_full = 0;
  for (const auto& d : r.decisions) {
    if (d.learned) {
      ++n_learned;
      c_learned += d.solver_calls;
    } else {
      ++n_full;
      c_full += d.solver_calls;
    }
  }
  auto per = [](long c, long n) { return n > 0 ? json(static_cast<double>(c) / n) : json(nullptr); };
  const json breakdown = {
      {"learned", {{"decisions", n_learned}, {"mean_solver_calls", per(c_learned, n_learned)}}},
      {"full", {{"decisions", n_full}, {"mean_solver_calls", per(c_full, n_full)}}}};
  json stats = json::object();
  for (const auto& [k, v] : r.controller_stats) stats[k] = nullable(v);
  return {{"schema", kSchemaVersion},
          {"controller", r.controller},
          {"J_T", s.J_T},
          {"Jhat_T", s.Jhat_T},
          {"J_W", s.J_W},
          {"J_C", nullable(s.J_C)},
          {"J_C_per_target", r.J_C_per_target},
          {"decisions", s.decisions},
          {"solver_calls", s.solver_calls},
          {"mean_solver_wall_us", timing ? nullable(s.mean_solver_wall_us) : json(nullptr)},
          {"events", r.events.size()},
          {"max_occupancy", s.max_occupancy},
          {"omega_final", r.omega_final},
          {"decision_breakdown", breakdown},
          {"controller_stats", stats}};
}

namespace {

json aggregate_json(const CellAggregate& a, bool timing) {
  return {{"config", a.config < 0 ? json("Average") : json(a.config)},
          {"controller", a.controller},
          {"runs", a.runs},
          {"failures", a.failures},
          {"J_T", {{"mean", nullable(a.J_T_mean)}, {"std", nullable(a.J_T_std)}}},
          {"Jhat_T", {{"mean", nullable(a.Jhat_T_mean)}, {"std", nullable(a.Jhat_T_std)}}},
          {"J_W", {{"mean", nullable(a.J_W_mean)}, {"std", nullable(a.J_W_std)}}},
          {"J_C", {{"mean", nullable(a.J_C_mean)}, {"std", nullable(a.J_C_std)}}},
          {"mean_solver_wall_us", timing ? nullable(a.wall_us_mean) : json(nullptr)},
          {"window_J_t", nullable(a.window_J_t_mean)}};
}

}  // namespace

json compare_to_json(const CompareSpec& spec, const CompareResult& r, bool timing) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json cell = {{"config", c.config}, {"controller", c.controller}, {"rep", c.rep},
                 {"seed", c.seed},     {"ok", c.ok}};
    if (c.ok) {
      cell["J_T"] = c.summary.J_T;
      cell["Jhat_T"] = c.summary.Jhat_T;
      cell["J_W"] = c.summary.J_W;
      cell["J_C"] = nullable(c.summary.J_C);
      cell["decisions"] = c.summary.decisions;
      cell["solver_calls"] = c.summary.solver_calls;
      cell["mean_solver_wall_us"] = timing ? nullable(c.summary.mean_solver_wall_us) : json(nullptr);
      if (spec.window_hi > spec.window_lo) {
        const auto& w = c.window;
        cell["window"] = {{"lo", spec.window_lo},
                          {"hi", spec.window_hi},
                          {"mean_J_t", w.mean_J_t},
                          {"decisions", w.decisions},
                          {"mean_solver_calls", w.mean_solver_calls},
                          {"learned_fraction", w.learned_fraction},
                          {"mean_learned_solver_calls", w.mean_learned_solver_calls}};
        if (timing) {
          cell["window"]["mean_wall_us"] = w.mean_wall_us;
          cell["window"]["mean_learned_wall_us"] = w.mean_learned_wall_us;
        }
      }
    } else {
      cell["error"] = c.error;
    }
    cells.push_back(std::move(cell));
  }
  json aggs = json::array();
  for (const auto& a : r.aggregates) aggs.push_back(aggregate_json(a, timing));
  json avgs = json::array();
  for (const auto& a : r.averages) avgs.push_back(aggregate_json(a, timing));
  return {{"schema", kSchemaVersion},
          {"controllers", spec.controllers},
          {"configs", spec.configs.size()},
          {"reps", spec.reps},
          {"base_seed", spec.base_seed},
          {"failures", r.failures},
          {"cells", cells},
          {"aggregates", aggs},
          {"averages", avgs}};
}

void write_compare_csv(const std::filesystem::path& path, const CompareResult& r, bool timing) {
  auto out = open_out(path);
  out << "config,controller,runs,failures,J_T_mean,J_T_std,Jhat_T_mean,Jhat_T_std,J_W_mean,"
         "J_W_std,J_C_mean,J_C_std,mean_solver_wall_us\n";
  auto row = [&](const CellAggregate& a) {
    out << (a.config < 0 ? std::string("Average") : std::to_string(a.config)) << ','
        << a.controller << ',' << a.runs << ',' << a.failures << ','
        << format_double(a.J_T_mean) << ',' << format_double(a.J_T_std) << ','
        << format_double(a.Jhat_T_mean) << ',' << format_double(a.Jhat_T_std) << ','
        << format_double(a.J_W_mean) << ',' << format_double(a.J_W_std) << ','
        << format_double(a.J_C_mean) << ',' << format_double(a.J_C_std) << ','
        << (timing ? format_double(a.wall_us_mean) : std::string("nan")) << '\n';
  };
  for (const auto& a : r.aggregates) row(a);
  for (const auto& a : r.averages) row(a);
}

}  // namespace persmon
