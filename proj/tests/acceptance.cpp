#include "camtraj/compare.hpp"
#include "camtraj/io.hpp"
#include "camtraj/scenarios.hpp"
#include "camtraj/solver.hpp"
#include "camtraj/tracking.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

using namespace camtraj;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string summary;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      details.push_back("failed: " + what);
    }
  }
  void note(const std::string& line) { details.push_back(line); }
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

SolveRequest autoRequest(const std::vector<Keyframe>& keyframes) {
  SolveRequest req;
  req.keyframes = keyframes;
  req.weights = resolveWeights(surveyPreset(), Mode::kAuto);
  return req;
}

Keyframe keyframe(double x, double y, double z) {
  Keyframe k;
  k.position = {x, y, z};
  return k;
}

struct Invariants {
  bool ok = true;
  std::string failure;
};

Invariants checkInvariants(const Trajectory& t, const ModelParams& params) {
  Invariants r;
  auto fail = [&](const std::string& why) {
    if (r.ok) r.failure = why;
    r.ok = false;
  };
  if (!t.converged()) fail("status " + toString(t.diagnostics.status) + " (" + t.diagnostics.message + ")");
  const double terminal = std::abs(t.progress.back().theta - t.path_length);
  if (terminal > 1e-3 * t.path_length) fail(fmt("terminal progress error %.3g", terminal));
  for (int i = 0; i < t.horizon; ++i) {
    if (t.progress[i + 1].theta < t.progress[i].theta - 1e-8) fail(fmt("progress decreases at stage %d", i));
  }
  const double residual = dynamicsResidual(t, params);
  if (residual > 1e-8) fail(fmt("dynamics residual %.3g", residual));
  for (int i = 0; i <= t.horizon; ++i) {
    const SystemInput u = i < t.horizon ? t.inputs[i] : SystemInput{};
    if (!checkBounds(t.states[i], u, params, 1e-4).empty()) fail(fmt("bounds violated at stage %d", i));
  }
  return r;
}

Verdict terminalAndFeasibility() {
  Verdict v;
  double slowest = 0.0;
  for (const auto& c : cannedScenarios()) {
    const SolveRequest req = autoRequest(c.keyframes);
    const auto start = std::chrono::steady_clock::now();
    const Trajectory t = solve(req);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    slowest = std::max(slowest, seconds);
    const Invariants inv = checkInvariants(t, req.params);
    v.note(fmt("%-12s T %7.3f s  |theta_N - L|/L %.2e  dyn residual %.1e  %.2f s", c.name.c_str(), t.T,
               std::abs(t.progress.back().theta - t.path_length) / t.path_length, dynamicsResidual(t, req.params),
               seconds));
    v.require(inv.ok, c.name + ": " + inv.failure);
    v.require(seconds < 30.0, c.name + fmt(": runtime %.1f s", seconds));
  }
  v.summary = fmt("%zu scenarios, slowest %.2f s", cannedScenarios().size(), slowest);
  return v;
}

Verdict smoothnessDominance() {
  Verdict v;
  int wins = 0, total = 0;
  for (const auto& c : cannedScenarios()) {
    const Comparison cmp = compareWithBaseline(autoRequest(c.keyframes), {0.3, false});
    const MetricsReport& a = cmp.auto_row.metrics;
    const MetricsReport& b = cmp.baseline_row.metrics;
    v.note(fmt("%-12s jerk^2 %.4g vs %.4g   ang^2 [deg] %.4g vs %.4g   baseline %s", c.name.c_str(), a.mean_sq_jerk,
               b.mean_sq_jerk, a.mean_sq_angular_jerk, b.mean_sq_angular_jerk,
               toString(cmp.baseline_row.traj.diagnostics.status).c_str()));
    const bool both = a.mean_sq_jerk < b.mean_sq_jerk && a.mean_sq_angular_jerk < b.mean_sq_angular_jerk;
    ++total;
    wins += both;
    if (a.mean_sq_jerk >= b.mean_sq_jerk) v.require(false, c.name + ": baseline has lower or equal jerk");
    if (a.mean_sq_angular_jerk >= b.mean_sq_angular_jerk) {
      v.require(false, c.name + ": baseline has lower or equal angular jerk");
    }
  }
  v.summary = fmt("auto wins both columns on %d of %d scenarios (timing perturbation 0.3)", wins, total);
  return v;
}

Verdict fixedLength() {
  Verdict v;
  double worst = 0.0;
  int runs = 0;
  for (const auto& c : cannedScenarios()) {
    const SolveRequest base = autoRequest(c.keyframes);
    const Trajectory a = solve(base);
    std::vector<double> targets;
    for (double f : {0.7, 1.0, 1.4, 2.0}) targets.push_back(f * a.T);
    if (0.7 * a.T <= 20.0 && 20.0 <= 2.0 * a.T) targets.push_back(20.0);
    std::string line = fmt("%-12s auto T %.3f:", c.name.c_str(), a.T);
    for (double t_len : targets) {
      if (t_len < base.params.t_min) {
        line += fmt("  %.3f below t_min, skipped", t_len);
        continue;
      }
      SolveRequest req = base;
      req.mode = Mode::kFixedLength;
      req.weights = resolveWeights(surveyPreset(), Mode::kFixedLength, t_len);
      const Trajectory t = solve(req);
      const double gap = std::abs(t.T - t_len);
      worst = std::max(worst, gap);
      ++runs;
      line += fmt("  %.3f->%.3f", t_len, t.T);
      v.require(t.converged(), c.name + fmt(" t_len %.3f did not converge", t_len));
      v.require(gap <= 0.1, c.name + fmt(" t_len %.3f gives T %.3f", t_len, t.T));
    }
    v.note(line);
  }
  v.summary = fmt("%d solves, worst |T - t_len| %.4f s", runs, worst);
  return v;
}

double worstPassageGap(const Trajectory& t, const std::vector<double>& tags) {
  const auto p = passageTimes(t);
  double worst = 0.0;
  for (std::size_t k = 0; k < tags.size(); ++k) worst = std::max(worst, std::abs(p[k] - tags[k]));
  return worst;
}

Verdict quasiHardTiming() {
  Verdict v;
  double worst = 0.0;
  // Each scenario's own auto timing as a dense reference: feasible by construction.
  for (const auto& c : cannedScenarios()) {
    const Comparison cmp = compareWithBaseline(autoRequest(c.keyframes), {0.0, true});
    const double gap = cmp.baseline_row.max_tag_deviation;
    worst = std::max(worst, gap);
    v.note(fmt("%-12s auto timing as reference, worst passage gap %.4f s", c.name.c_str(), gap));
    v.require(cmp.baseline_row.traj.converged(), c.name + ": baseline did not converge");
    v.require(gap <= 0.1, c.name + fmt(": passage gap %.3f s", gap));
  }
  // Evenly spaced tags along a straight 30 m dolly with two intermediate keys.
  for (double speed : {1.0, 2.0, 3.0}) {
    const std::vector<Keyframe> kfs{keyframe(0, 0, 2), keyframe(10, 0, 2), keyframe(20, 0, 2), keyframe(30, 0, 2)};
    std::vector<double> tags;
    for (int k = 0; k < 4; ++k) tags.push_back(10.0 * k / speed);
    const Trajectory t = solveTimedBaseline(autoRequest(withTimeTags(kfs, tags)));
    const double gap = worstPassageGap(t, tags);
    worst = std::max(worst, gap);
    v.note(fmt("dolly %.0f m/s  evenly spaced tags, worst passage gap %.4f s", speed, gap));
    v.require(t.converged(), fmt("dolly %.0f m/s: baseline did not converge", speed));
    v.require(gap <= 0.1, fmt("dolly %.0f m/s: passage gap %.3f s", speed, gap));
  }
  // Not gated: sparse tags at the auto passage times. Between and before the tags the
  // interpolated reference asks for full speed from rest, which no trajectory can follow.
  for (const auto& c : cannedScenarios()) {
    const SolveRequest req = autoRequest(c.keyframes);
    const std::vector<double> tags = passageTimes(solve(req));
    SolveRequest timed = req;
    timed.keyframes = withTimeTags(req.keyframes, tags);
    v.note(fmt("%-12s info: sparse auto passage tags, worst gap %.4f s", c.name.c_str(),
               worstPassageGap(solveTimedBaseline(timed), tags)));
  }
  v.summary = fmt("timing weight %.0e, worst passage gap %.4f s over feasible tag sets", kQuasiHardTimingWeight, worst);
  return v;
}

Verdict velocityMode() {
  Verdict v;
  std::vector<Keyframe> kfs{keyframe(0, 0, 2), keyframe(20, 0, 2)};
  for (auto& k : kfs) k.speed = 2.0;
  SolveRequest req = autoRequest(kfs);
  req.mode = Mode::kVelocity;
  req.weights = resolveWeights(interactivePreset(), Mode::kVelocity);
  const Trajectory t = solve(req);
  v.require(t.converged(), "velocity solve did not converge");
  int mid = 0;
  for (int i = 0; i <= t.horizon; ++i) {
    if (std::abs(t.progress[i].theta - 0.5 * t.path_length) < std::abs(t.progress[mid].theta - 0.5 * t.path_length)) {
      mid = i;
    }
  }
  double worst = 0.0;
  std::string speeds;
  for (int i = std::max(0, mid - 2); i <= std::min(t.horizon, mid + 2); ++i) {
    const SystemState& s = t.states[i];
    const double speed = std::hypot(s.at(kVel, kX), s.at(kVel, kY), s.at(kVel, kZ));
    speeds += fmt(" %.4f", speed);
    worst = std::max(worst, std::abs(speed - 2.0) / 2.0);
  }
  v.note("speeds around mid-path [m/s]:" + speeds);
  v.require(worst <= 0.05, fmt("relative speed error %.4f", worst));
  v.summary = fmt("T %.3f s, mid-path stage %d of %d, worst relative error %.4f", t.T, mid, t.horizon, worst);
  return v;
}

Verdict oracleSuites() {
  using namespace camtraj::testing;
  Verdict v;
  std::mt19937_64 rng(2024);

  double zoh = 0.0;
  const ModelParams p = ModelParams::defaults();
  std::uniform_real_distribution<double> sx(-2.0, 2.0), su(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    SystemState x;
    for (int k = 0; k < kDynStates; ++k) x.v[k] = sx(rng);
    x.setEndTime(7.5);
    SystemInput u;
    for (int k = 0; k < kInputDim; ++k) u.v[k] = su(rng);
    for (double dt : {0.05, 0.2, 0.5, 1.0}) {
      const DynVec exact = propagate(discretize(p, dt), x, u).dynamic();
      const DynVec fine = rk4(p, x.dynamic(), u.v, dt, 10000);
      zoh = std::max(zoh, (exact - fine).cwiseAbs().maxCoeff() / std::max(1.0, fine.cwiseAbs().maxCoeff()));
    }
  }
  v.require(zoh <= 1e-6, fmt("zero-order hold vs fine integration %.2e", zoh));

  const CostWorld world = makeCostWorld();
  double split = 0.0;
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_real_distribution<double> th(0.3, world.path.length() - 0.3);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Vector3d r(nd(rng), nd(rng), nd(rng));
    const QuadraticLocalFit fit = fitQuadraticWindow(world.path, th(rng), 0.8);
    const LagContour lc = lagContourError(fit.center, r, fit);
    const double e2 = lc.e.squaredNorm();
    split = std::max(split, std::abs(lc.lag * lc.lag + lc.contour * lc.contour - e2) / std::max(1.0, e2));
  }
  v.require(split <= 1e-9, fmt("lag/contour split %.2e", split));

  double gradient = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const CostWeights w = randomWeights(rng, trial % 2 == 1);
    const QuadraticLocalFit fit = fitQuadraticWindow(world.path, th(rng), 0.5 + 0.02 * trial);
    gradient = std::max(gradient, gradientGap(randomContext(rng, world, fit, trial), w));
  }
  v.require(gradient <= 1e-5, fmt("gradient vs central differences %.2e", gradient));

  double interp = 0.0, overshoot = 0.0;
  std::uniform_real_distribution<double> pos(-20.0, 20.0), ang(-3.0, 3.0), step(0.0, 3.0), gap(0.1, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Keyframe> kfs;
    for (int k = 0; k < 2 + trial % 7; ++k) {
      Keyframe kf = keyframe(pos(rng), pos(rng), pos(rng));
      kf.yaw = ang(rng);
      kf.pitch = ang(rng);
      kfs.push_back(kf);
    }
    const ReferencePath path = ReferencePath::build(kfs);
    for (std::size_t k = 0; k < kfs.size(); ++k) {
      interp = std::max(interp, (path.eval(path.knots()[k]).value - kfs[k].pose()).cwiseAbs().maxCoeff());
    }
    std::vector<double> xs{0.0}, ys{step(rng)};
    for (int k = 1; k < 8; ++k) {
      xs.push_back(xs.back() + gap(rng));
      ys.push_back(ys.back() + (k % 3 == 0 ? 0.0 : step(rng) * step(rng)));
    }
    const Pchip pc(xs, ys);
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      for (int s = 0; s <= 1000; ++s) {
        const double y = pc.value(xs[k] + (xs[k + 1] - xs[k]) * s / 1000.0);
        overshoot = std::max({overshoot, ys[k] - y, y - ys[k + 1]});
      }
    }
  }
  v.require(interp <= 1e-9, fmt("interpolation at knots %.2e", interp));
  v.require(overshoot <= 1e-12, fmt("monotone overshoot %.2e", overshoot));

  double jump = 0.0;
  std::uniform_real_distribution<double> wide(-3.0 * std::numbers::pi, 3.0 * std::numbers::pi);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Keyframe> kfs;
    for (int k = 0; k < 8; ++k) {
      Keyframe kf = keyframe(k, 0, 0);
      kf.yaw = wide(rng);
      kf.pitch = wide(rng);
      kfs.push_back(kf);
    }
    const auto out = unwrapAngles(kfs);
    for (std::size_t k = 1; k < out.size(); ++k) {
      jump = std::max({jump, std::abs(out[k].yaw - out[k - 1].yaw), std::abs(out[k].pitch - out[k - 1].pitch)});
    }
  }
  jump *= 180.0 / std::numbers::pi;
  v.require(jump <= 180.0 + 1e-9, fmt("unwrapped step %.6f deg", jump));

  v.summary = fmt("zoh %.1e, split %.1e, gradient %.1e, knots %.1e, overshoot %.1e, max unwrap step %.2f deg", zoh,
                  split, gradient, interp, overshoot, jump);
  return v;
}

Verdict tracking() {
  Verdict v;
  const SolveRequest req = autoRequest(cannedScenario("flyby").keyframes);
  const Trajectory t = solve(req);
  v.require(t.converged(), "fly-by did not converge");
  const TrackerGains g = designLqr(discretize(req.params, t.dt));
  const Rollout clean = simulate(t, req.params, g);
  v.require(clean.rms_position_error <= 1e-6, fmt("undisturbed RMS %.2e m", clean.rms_position_error));

  int worse_open = 0;
  double worst_closed = 0.0, mean_closed = 0.0, mean_open = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Rollout closed = simulate(t, req.params, g, {0.1, seed});
    const Rollout open = simulate(t, req.params, g, {0.1, seed}, false);
    worst_closed = std::max(worst_closed, closed.max_position_error);
    mean_closed += closed.rms_position_error / 100.0;
    mean_open += open.rms_position_error / 100.0;
    worse_open += open.rms_position_error > closed.rms_position_error;
    v.require(std::isfinite(closed.max_position_error), fmt("seed %llu diverged", (unsigned long long)seed));
  }
  v.require(worst_closed <= 0.5, fmt("closed-loop error reached %.3f m", worst_closed));
  v.require(worse_open == 100, fmt("open loop worse on only %d of 100 seeds", worse_open));
  v.summary = fmt("undisturbed RMS %.1e m; sigma 0.1: worst closed-loop error %.4f m, mean RMS %.4f closed vs %.4f open, "
                  "open worse on %d/100 seeds",
                  clean.rms_position_error, worst_closed, mean_closed, mean_open, worse_open);
  return v;
}

std::vector<double> compareRow(const std::string& csv, const std::string& label) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(label + ",", 0) != 0) continue;
    std::vector<double> cells;
    std::stringstream ls(line);
    std::string cell;
    int k = 0;
    while (std::getline(ls, cell, ',')) {
      if (k++ >= 2) cells.push_back(std::stod(cell));
    }
    return cells;
  }
  return {};
}

Verdict endToEnd(const std::string& cli) {
  Verdict v;
  const fs::path out = fs::temp_directory_path() / "camtraj_acceptance_cli";
  fs::remove_all(out);
  const std::string cmd = cli + " plan flyby --compare --out-dir " + out.string() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string output;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while (pipe && (n = fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
  const int status = pipe ? pclose(pipe) : -1;
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  v.require(code == 0, fmt("exit code %d", code));
  for (const char* f : {"flyby.csv", "flyby.metrics.json", "flyby.log", "flyby.baseline.csv",
                        "flyby.baseline.metrics.json", "flyby.baseline.log", "flyby.compare.csv"}) {
    v.require(fs::exists(out / f) && fs::file_size(out / f) > 0, std::string("missing artifact ") + f);
  }
  v.require(output.find("quasi-hard") != std::string::npos, "no comparison table printed");
  std::istringstream lines(output);
  for (std::string line; std::getline(lines, line);) v.note(line);
  if (fs::exists(out / "flyby.compare.csv")) {
    const std::string csv = readFile((out / "flyby.compare.csv").string());
    const auto a = compareRow(csv, "auto"), b = compareRow(csv, "quasi-hard");
    // columns after mode and status: T, mean_sq_jerk, mean_sq_angular_jerk_deg, ...
    v.require(a.size() >= 3 && b.size() >= 3, "comparison CSV lacks rows");
    if (a.size() >= 3 && b.size() >= 3) {
      v.require(a[1] < b[1], "auto does not win the jerk column");
      v.require(a[2] < b[2], "auto does not win the angular jerk column");
      v.summary = fmt("exit %d, 7 artifacts, jerk^2 %.4g vs %.4g, ang^2 %.4g vs %.4g", code, a[1], b[1], a[2], b[2]);
    }
  }
  if (v.summary.empty()) v.summary = fmt("exit %d", code);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one PASS/FAIL line each"};
  std::vector<std::string> only;
  bool quiet = false;
  std::string cli = CAMTRAJ_CLI;
  app.add_option("--only", only, "Criteria to run (A1..A8)");
  app.add_flag("--quiet", quiet, "Verdict lines only");
  app.add_option("--cli", cli, "Path of the camtraj executable");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::tuple<std::string, std::string, std::function<Verdict()>>> criteria{
      {"A1", "terminal progress and feasibility", terminalAndFeasibility},
      {"A2", "smoothness dominance over quasi-hard timing", smoothnessDominance},
      {"A3", "fixed-length control", fixedLength},
      {"A4", "quasi-hard timing fidelity", quasiHardTiming},
      {"A5", "velocity mode", velocityMode},
      {"A6", "oracle and identity suites", oracleSuites},
      {"A7", "tracking", tracking},
      {"A8", "end-to-end CLI", [&] { return endToEnd(cli); }},
  };

  bool all = true;
  int ran = 0;
  for (const auto& [id, title, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ++ran;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.summary = std::string("exception: ") + e.what();
    }
    if (!quiet) {
      for (const auto& d : v.details) std::cout << "    " << id << " | " << d << "\n";
    }
    std::cout << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << title << ": " << v.summary << std::endl;
    all = all && v.pass;
  }
  if (ran == 0) {
    std::cerr << "no criteria selected\n";
    return 1;
  }
  return all ? 0 : 1;
}
