#pragma once

#include "camtraj/solver.hpp"
#include "camtraj/tracking.hpp"

#include <string>
#include <vector>

namespace camtraj {

struct TimingPerturbation {
  double fraction = 0.3;
  /// Follow the auto trajectory's own (θ_i, t_i) pairs instead of keyframe tags.
  bool self_consistent = false;
};

struct ComparisonRow {
  std::string label;
  Trajectory traj;
  MetricsReport metrics;
  std::vector<double> tags;      // baseline only
  std::vector<double> passage;
  double max_tag_deviation = 0.0;
  double auto_objective = 0.0;   // objective under the auto-mode weights
};

struct Comparison {
  ComparisonRow auto_row;
  ComparisonRow baseline_row;
};

/// Auto-timed solve of `req`, then the quasi-hard baseline following its
/// passage times perturbed by `perturbation` (same total duration).
Comparison compareWithBaseline(const SolveRequest& req, const TimingPerturbation& perturbation = {});

/// Fixed-width text table, one row per mode.
std::string comparisonTable(const Comparison& c);
/// Same content as CSV.
std::string comparisonCsv(const Comparison& c);

}  // namespace camtraj
