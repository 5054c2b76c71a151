#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "persmon/experiment.hpp"
#include "persmon/network.hpp"
#include "persmon/simulator.hpp"

namespace persmon {

inline constexpr int kSchemaVersion = 1;

/// Configuration document:
///   {schema, targets:[{id,pos,A,B,Q,H,R}], edges:[[i,j]], agents:[start],
///    omega0:[...], T, H, seed, speed}
nlohmann::json config_to_json(const ProblemConfig& cfg);
/// Throws ConfigError on a malformed document.
ProblemConfig config_from_json(const nlohmann::json& j);

void write_config(const std::filesystem::path& path, const ProblemConfig& cfg);
ProblemConfig read_config(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Columns: time,kind,agent,target,u_i,j,u_j,solver_calls,solver_wall_us.
/// Wall times are written as 0 unless `timing` is set.
void write_events_csv(const std::filesystem::path& path, const std::vector<EventRecord>& events,
                      bool timing);

/// Columns: t,sum_trace_omega,J_t,Jhat_t,J_window,Jhat_window,omega_0..omega_{M-1}.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsSample>& samples);

/// {schema, controller, J_T, Jhat_T, J_W, J_C, decisions, mean_solver_wall_us,
///  solver_calls, events, max_occupancy, controller_stats}. J_C is null without
/// tracking, mean_solver_wall_us null unless `timing` is set.
nlohmann::json summary_to_json(const SimResult& r, bool timing);

/// Comparison document with per-cell runs, per-(config, controller) means and
/// standard deviations, and the per-controller averages row.
nlohmann::json compare_to_json(const CompareSpec& spec, const CompareResult& r, bool timing);

/// Table with one row per (config, controller) plus "Average" rows.
void write_compare_csv(const std::filesystem::path& path, const CompareResult& r, bool timing);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace persmon
