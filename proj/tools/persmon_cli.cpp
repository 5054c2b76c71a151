// persmon: generate configurations, run simulations, compare controllers.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "persmon/artifacts.hpp"
#include "persmon/experiment.hpp"

namespace fs = std::filesystem;
using namespace persmon;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitPartial = 4;

struct GenFlags {
  int targets = 7;
  int agents = 2;
  double sigma = 0.7;
};

struct RunFlags {
  std::string H = "10";
  double T = 0.0;  // 0 keeps the configuration's horizon
  std::uint64_t seed = 1;
  bool tracking = false;
  bool oracle_state = false;
  bool no_process_noise = false;
  bool start_on_reference = false;
  int dataset_size = 25;
  double al_threshold = 0.25;
  double dt = 1e-3;
  double sample_dt = 0.5;
  bool timing = false;
};

void add_gen_flags(CLI::App* c, GenFlags& g) {
  c->add_option("--targets", g.targets, "Number of targets")->check(CLI::PositiveNumber);
  c->add_option("--agents", g.agents, "Number of agents")->check(CLI::PositiveNumber);
  c->add_option("--sigma", g.sigma, "Edge distance threshold")->check(CLI::PositiveNumber);
}

void add_run_flags(CLI::App* c, RunFlags& r) {
  c->add_option("--H", r.H, "Planning horizon bound, or 'remaining' for T - t");
  c->add_option("--T", r.T, "Mission horizon (overrides the configuration)");
  c->add_option("--seed", r.seed, "Seed");
  c->add_flag("--tracking", r.tracking, "Run the tracking-control study");
  c->add_flag("--oracle-state", r.oracle_state, "Tracking controller sees the true state");
  c->add_flag("--no-process-noise", r.no_process_noise, "Disable tracking process noise");
  c->add_flag("--start-on-reference", r.start_on_reference,
              "Tracking starts with zero output error");
  c->add_option("--dataset-size", r.dataset_size, "Learning data set size L")
      ->check(CLI::PositiveNumber);
  c->add_option("--al-threshold", r.al_threshold, "Active-learning mismatch threshold");
  c->add_option("--dt", r.dt, "Tracking integration step")->check(CLI::PositiveNumber);
  c->add_option("--sample-dt", r.sample_dt, "Metrics sampling interval")
      ->check(CLI::PositiveNumber);
  c->add_flag("--timing", r.timing, "Record solver wall times in the artifacts");
}

RunSpec make_run_spec(const RunFlags& f, const std::string& controller) {
  RunSpec s;
  s.controller = controller;
  if (f.H == "remaining") {
    s.control.horizon_remaining = true;
  } else {
    try {
      s.control.H = std::stod(f.H);
    } catch (const std::exception&) {
      throw ConfigError("--H must be a number or 'remaining'");
    }
    if (!(s.control.H > 0.0)) throw ConfigError("--H must be positive");
  }
  s.control.seed = f.seed;
  s.learning.dataset_size = f.dataset_size;
  s.learning.delta = f.al_threshold;
  s.learning.train.seed = f.seed;
  s.sim.seed = f.seed;
  s.sim.sample_dt = f.sample_dt;
  s.sim.tracking = f.tracking;
  s.sim.tracking_opts.dt = f.dt;
  s.sim.tracking_opts.oracle_state = f.oracle_state;
  s.sim.tracking_opts.process_noise = !f.no_process_noise;
  s.sim.tracking_opts.start_on_reference = f.start_on_reference;
  return s;
}

ProblemConfig apply_overrides(ProblemConfig cfg, const RunFlags& f, const RunSpec& s) {
  if (f.T > 0.0) cfg.horizon_T = f.T;
  if (!s.control.horizon_remaining) cfg.fixed_H = s.control.H;
  cfg.validate();
  return cfg;
}

ProblemConfig generated(const GenFlags& g, std::uint64_t seed, double T) {
  GenerateOptions o;
  o.num_targets = g.targets;
  o.num_agents = g.agents;
  o.sigma = g.sigma;
  o.seed = seed;
  if (T > 0.0) o.horizon_T = T;
  return generate_pc(o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent persistent monitoring simulator"};
  app.require_subcommand(1);

  GenFlags gen;
  std::uint64_t gen_seed = 1;
  double gen_T = 50.0;
  std::string gen_out = "config.json";
  auto* cg = app.add_subcommand("generate", "Generate a random problem configuration");
  add_gen_flags(cg, gen);
  cg->add_option("--seed", gen_seed, "Generator seed");
  cg->add_option("--T", gen_T, "Mission horizon")->check(CLI::PositiveNumber);
  cg->add_option("--out", gen_out, "Output configuration file");

  RunFlags run;
  GenFlags run_gen;
  std::string run_config, run_controller_name = "rhc", run_out = "out";
  auto* cr = app.add_subcommand("run", "Simulate one controller on one configuration");
  cr->add_option("--config", run_config, "Configuration file (generated from --seed if absent)");
  cr->add_option("--controller", run_controller_name, "Controller name");
  cr->add_option("--out", run_out, "Output directory");
  add_gen_flags(cr, run_gen);
  add_run_flags(cr, run);

  RunFlags cmp;
  GenFlags cmp_gen;
  std::vector<std::string> cmp_configs;
  std::vector<std::string> cmp_controllers{"rhc", "bdc", "mtsp", "rhc-p", "bdc-p"};
  int cmp_pcs = 4, cmp_reps = 1;
  std::uint64_t cmp_pc_seed = 1;
  std::vector<double> cmp_window;
  std::string cmp_out = "out";
  bool cmp_serial = false;
  auto* cc = app.add_subcommand("compare", "Run a controller comparison grid");
  cc->add_option("--config", cmp_configs, "Configuration files (repeatable)");
  cc->add_option("--pcs", cmp_pcs, "Generated configurations when no --config is given")
      ->check(CLI::PositiveNumber);
  cc->add_option("--pc-seed", cmp_pc_seed, "Seed of the first generated configuration");
  cc->add_option("--controller", cmp_controllers, "Controller names")->delimiter(',');
  cc->add_option("--reps", cmp_reps, "Replications per cell")->check(CLI::PositiveNumber);
  cc->add_option("--window", cmp_window, "Steady-state window lo hi")->expected(2);
  cc->add_option("--out", cmp_out, "Output directory");
  cc->add_flag("--serial", cmp_serial, "Run cells on one thread");
  add_gen_flags(cc, cmp_gen);
  add_run_flags(cc, cmp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cg) {
      const ProblemConfig cfg = generated(gen, gen_seed, gen_T);
      write_config(gen_out, cfg);
      std::cout << "wrote " << gen_out << " (" << cfg.num_targets() << " targets, "
                << cfg.num_agents() << " agents, " << cfg.graph.edge_list().size()
                << " edges)\n";
      return 0;
    }

    if (*cr) {
      const RunSpec spec = make_run_spec(run, run_controller_name);
      ProblemConfig base = run_config.empty() ? generated(run_gen, run.seed, run.T)
                                              : read_config(run_config);
      const ProblemConfig cfg = apply_overrides(std::move(base), run, spec);
      const fs::path dir(run_out);
      const std::string stem = run_controller_name + "_";
      try {
        const SimResult r = run_controller(cfg, spec);
        write_config(dir / (stem + "config.json"), cfg);
        write_events_csv(dir / (stem + "events.csv"), r.events, run.timing);
        write_metrics_csv(dir / (stem + "metrics.csv"), r.samples);
        write_json(dir / (stem + "summary.json"), summary_to_json(r, run.timing));
        std::cout << run_controller_name << ": J_T=" << format_double(r.summary.J_T)
                  << " Jhat_T=" << format_double(r.summary.Jhat_T)
                  << " J_W=" << format_double(r.summary.J_W);
        if (spec.sim.tracking) std::cout << " J_C=" << format_double(r.summary.J_C);
        std::cout << " decisions=" << r.summary.decisions << '\n';
      } catch (const SimulationError& e) {
        const fs::path log = dir / (stem + "events_failed.csv");
        write_events_csv(log, e.event_log(), run.timing);
        std::cerr << "invariant violation: " << e.what() << "\nevent log: " << log.string()
                  << '\n';
        return kExitInvariant;
      }
      return 0;
    }

    if (*cc) {
      CompareSpec spec;
      spec.controllers = cmp_controllers;
      const auto& known = controller_names();
      for (const auto& c : spec.controllers) {
        if (std::find(known.begin(), known.end(), c) == known.end())
          throw ConfigError("unknown controller '" + c + "'");
      }
      spec.reps = cmp_reps;
      spec.base_seed = cmp.seed;
      spec.base = make_run_spec(cmp, "");
      if (!cmp_window.empty()) {
        spec.window_lo = cmp_window[0];
        spec.window_hi = cmp_window[1];
      }
      if (cmp_configs.empty()) {
        for (int k = 0; k < cmp_pcs; ++k) {
          spec.configs.push_back(apply_overrides(
              generated(cmp_gen, cmp_pc_seed + static_cast<std::uint64_t>(k), cmp.T), cmp,
              spec.base));
        }
      } else {
        for (const auto& p : cmp_configs)
          spec.configs.push_back(apply_overrides(read_config(p), cmp, spec.base));
      }
      const CompareResult r = cmp_serial ? run_compare_serial(spec) : run_compare_parallel(spec);
      const fs::path dir(cmp_out);
      write_json(dir / "compare.json", compare_to_json(spec, r, cmp.timing));
      write_compare_csv(dir / "compare.csv", r, cmp.timing);
      for (const auto& a : r.averages) {
        std::cout << "Average " << a.controller << ": J_T=" << format_double(a.J_T_mean)
                  << " Jhat_T=" << format_double(a.Jhat_T_mean) << '\n';
      }
      if (r.failures > 0) {
        for (const auto& c : r.cells) {
          if (!c.ok) {
            std::cerr << "cell failed: config " << c.config << ' ' << c.controller << " rep "
                      << c.rep << ": " << c.error << '\n';
          }
        }
        return kExitPartial;
      }
      return 0;
    }
  } catch (const GenerationError& e) {
    std::cerr << "generation failed (seed " << e.seed() << "): " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SimulationError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return 0;
}
