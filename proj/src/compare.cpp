#include "camtraj/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace camtraj {

namespace {

ComparisonRow makeRow(std::string label, Trajectory traj, const SolveRequest& auto_req) {
  ComparisonRow row;
  row.label = std::move(label);
  row.metrics = metrics(traj, auto_req.params);
  row.passage = passageTimes(traj);
  row.auto_objective = objectiveUnder(traj, auto_req, auto_req.weights);
  row.traj = std::move(traj);
  return row;
}

TimingOverlay stageTiming(const Trajectory& traj) {
  std::vector<double> thetas, times;
  const double tol = 1e-9 * std::max(1.0, traj.path_length);
  for (int i = 0; i <= traj.horizon; ++i) {
    const double th = traj.progress[i].theta;
    if (!thetas.empty() && !(th > thetas.back() + tol)) continue;
    thetas.push_back(th);
    times.push_back(i * traj.dt);
  }
  return TimingOverlay::fromPairs(std::move(thetas), std::move(times));
}

}  // namespace

Comparison compareWithBaseline(const SolveRequest& req, const TimingPerturbation& perturbation) {
  Comparison c;
  c.auto_row = makeRow("auto", solve(req), req);

  SolveRequest rb = req;
  const std::vector<double> tags = perturbation.self_consistent
                                       ? c.auto_row.passage
                                       : perturbTimings(c.auto_row.passage, perturbation.fraction);
  rb.keyframes = withTimeTags(req.keyframes, tags);
  if (perturbation.self_consistent) rb.timing_override = stageTiming(c.auto_row.traj);
  c.baseline_row = makeRow("quasi-hard", solveTimedBaseline(rb), req);
  c.baseline_row.tags = tags;
  for (std::size_t k = 0; k < tags.size() && k < c.baseline_row.passage.size(); ++k) {
    c.baseline_row.max_tag_deviation =
        std::max(c.baseline_row.max_tag_deviation, std::abs(c.baseline_row.passage[k] - tags[k]));
  }
  return c;
}

std::string comparisonTable(const Comparison& c) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-11s %-15s %9s %14s %16s %11s %13s %12s %11s\n", "mode", "status", "T [s]",
                "jerk^2 [m2/s6]", "ang^2 [deg2/s6]", "max jerk", "max ang jerk", "objective", "tag dev [s]");
  out << buf;
  for (const ComparisonRow* r : {&c.auto_row, &c.baseline_row}) {
    const MetricsReport& m = r->metrics;
    std::snprintf(buf, sizeof buf, "%-11s %-15s %9.3f %14.6g %16.6g %11.4g %13.4g %12.6g %11.3f\n",
                  r->label.c_str(), toString(r->traj.diagnostics.status).c_str(), r->traj.T, m.mean_sq_jerk,
                  m.mean_sq_angular_jerk, m.max_jerk, m.max_angular_jerk, r->auto_objective,
                  r->max_tag_deviation);
    out << buf;
  }
  return out.str();
}

std::string comparisonCsv(const Comparison& c) {
  std::ostringstream out;
  out.precision(17);
  out << "mode,status,T,mean_sq_jerk,mean_sq_angular_jerk_deg,max_jerk,max_angular_jerk_deg,objective,"
         "max_tag_deviation\n";
  for (const ComparisonRow* r : {&c.auto_row, &c.baseline_row}) {
    const MetricsReport& m = r->metrics;
    out << r->label << "," << toString(r->traj.diagnostics.status) << "," << r->traj.T << "," << m.mean_sq_jerk
        << "," << m.mean_sq_angular_jerk << "," << m.max_jerk << "," << m.max_angular_jerk << ","
        << r->auto_objective << "," << r->max_tag_deviation << "\n";
  }
  return out.str();
}

}  // namespace camtraj
