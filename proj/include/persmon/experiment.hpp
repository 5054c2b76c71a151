#pragma once

#include <memory>
#include <string>
#include <vector>

#include "persmon/learning.hpp"
#include "persmon/simulator.hpp"

namespace persmon {

/// Controller names accepted by make_controller.
const std::vector<std::string>& controller_names();

/// rhc | bdc | mtsp | rhc-p | bdc-p | rhc-l | rhc-al | rhc-le. rhc-le is
/// rhc-l with three times the dataset size. Throws ConfigError on an unknown
/// name.
std::unique_ptr<Controller> make_controller(const std::string& name, const ProblemConfig& cfg,
                                            const ControllerOptions& o,
                                            const LearningOptions& lo = {});

struct RunSpec {
  std::string controller = "rhc";
  ControllerOptions control;
  LearningOptions learning;
  SimOptions sim;
};

SimResult run_controller(const ProblemConfig& cfg, const RunSpec& spec);

/// Steady-window statistics of a run over [lo, hi].
struct WindowStats {
  double mean_J_t = 0.0;           // mean of the sampled running J_t
  double mean_wall_us = 0.0;       // mean decision wall time
  double mean_solver_calls = 0.0;  // mean solver calls per decision
  long decisions = 0;
  double learned_fraction = 0.0;   // classifier-path share of the decisions
  double mean_learned_wall_us = 0.0;
  double mean_learned_solver_calls = 0.0;
};

WindowStats window_stats(const SimResult& r, double lo, double hi);

struct CellResult {
  int config = 0;
  std::string controller;
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  Summary summary;
  WindowStats window;
};

struct CellAggregate {
  int config = 0;
  std::string controller;
  int runs = 0;
  int failures = 0;
  double J_T_mean = 0.0, J_T_std = 0.0;
  double Jhat_T_mean = 0.0, Jhat_T_std = 0.0;
  double J_W_mean = 0.0, J_W_std = 0.0;
  double J_C_mean = 0.0, J_C_std = 0.0;
  double wall_us_mean = 0.0;
  double window_J_t_mean = 0.0;
};

struct CompareSpec {
  std::vector<std::string> controllers;
  std::vector<ProblemConfig> configs;
  int reps = 1;
  std::uint64_t base_seed = 1;
  RunSpec base;
  double window_lo = 0.0, window_hi = 0.0;  // steady window; empty when equal
};

struct CompareResult {
  std::vector<CellResult> cells;         // ordered by (config, controller, rep)
  std::vector<CellAggregate> aggregates; // ordered by (config, controller)
  std::vector<CellAggregate> averages;   // per controller across configs
  int failures = 0;
};

/// Runs every (config, controller, rep) cell. The parallel runner spreads
/// cells over OpenMP threads; both produce identical results.
CompareResult run_compare_serial(const CompareSpec& spec);
CompareResult run_compare_parallel(const CompareSpec& spec);

}  // namespace persmon
