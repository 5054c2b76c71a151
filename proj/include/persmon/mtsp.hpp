#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "persmon/network.hpp"

namespace persmon {

/// Offline periodic plan: one closed visiting cycle per agent and a dwell time
/// per target. Cycles partition the targets.
struct CycleAssignment {
  std::vector<std::vector<TargetId>> cycles;  // indexed by agent
  std::vector<double> dwell;                  // indexed by target
  std::vector<int> cluster_of;                // indexed by target
};

/// Normalized-Laplacian spectral clustering of the graph into k groups.
/// Similarity exp(-d^2 / 2 s^2) on edges, s the mean edge length; k-means on
/// the row-normalized leading eigenvectors with seeded k-means++ restarts.
std::vector<int> spectral_clusters(const NetworkGraph& g, int k, std::uint64_t seed);

/// Normalized cut of a labelling under the same similarity matrix.
double normalized_cut(const NetworkGraph& g, const std::vector<int>& labels, int k);

/// Moves targets that are cut off from the largest graph component of their
/// cluster to the cluster of their nearest adjacent target.
void repair_clusters(const NetworkGraph& g, std::vector<int>& labels, int k);

/// Closed tour over `members` by nearest neighbor from the lowest id followed
/// by 2-opt, on straight-line travel times.
std::vector<TargetId> build_cycle(const NetworkGraph& g, std::vector<TargetId> members);

/// Straight-line travel time between two targets.
double straight_travel(const NetworkGraph& g, TargetId a, TargetId b);

double cycle_travel_time(const NetworkGraph& g, const std::vector<TargetId>& cycle);

/// Relative dwell weights on a cycle: covariance growth from omega_ss over one
/// dwell-free lap, normalized to mean 1.
std::vector<double> dwell_weights(const NetworkGraph& g, const std::vector<TargetId>& cycle);

/// Largest covariance over one period of the periodic steady state reached
/// when the cycle is repeated with the given dwell times (by target id).
double periodic_peak(const NetworkGraph& g, const std::vector<TargetId>& cycle,
                     const std::vector<double>& dwell);

/// Golden-section minimizer on [lo, hi] to an interval width of tol.
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol);

inline constexpr double kMaxDwellScale = 10.0;

/// Cluster, route and dwell-search plan for the configuration. Agents are
/// matched to clusters to minimize the total distance from their start.
CycleAssignment mtsp_plan(const ProblemConfig& cfg, std::uint64_t seed);

}  // namespace persmon
