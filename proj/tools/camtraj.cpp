#include "camtraj/compare.hpp"
#include "camtraj/io.hpp"
#include "camtraj/scenarios.hpp"
#include "camtraj/service.hpp"
#include "camtraj/tracking.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <filesystem>
#include <iostream>

using namespace camtraj;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNotConverged = 2;

struct PlanFlags {
  std::string scenario;
  std::string mode;
  std::string preset;
  std::vector<std::string> set;
  double t_len = 0.0;
  std::string model;
  int horizon = 0;
  std::string out_dir = "out";
  bool compare = false;
  double perturb = 0.3;
  bool self_consistent = false;
  std::uint64_t seed = 0;
  double sigma = 0.0;
};

void addSolveFlags(CLI::App* cmd, PlanFlags& f) {
  cmd->add_option("scenario", f.scenario, "Scenario JSON file or built-in scenario name")->required();
  cmd->add_option("--mode", f.mode, "auto | fixed-length | soft-timed | velocity");
  cmd->add_option("--weights-preset", f.preset, "survey | interactive");
  cmd->add_option("--set", f.set, "Weight override name=value (repeatable)");
  cmd->add_option("--t-len", f.t_len, "Shot length for fixed-length mode [s]");
  cmd->add_option("--model", f.model, "Model parameter file (key = value)");
  cmd->add_option("--horizon", f.horizon, "Number of stages");
  cmd->add_option("--out-dir", f.out_dir, "Artifact directory");
  cmd->add_option("--perturb", f.perturb, "Relative timing perturbation for the baseline");
}

Scenario resolveScenario(const std::string& arg) {
  if (fs::exists(arg)) return loadScenario(arg);
  for (const auto& c : cannedScenarios()) {
    if (c.name == arg) return scenarioFromCanned(arg);
  }
  throw std::invalid_argument("no scenario file or built-in scenario named '" + arg + "'");
}

SolveRequest requestFrom(const PlanFlags& f, Scenario& scenario) {
  PlanOverrides o;
  if (!f.mode.empty()) o.mode = parseMode(f.mode);
  if (!f.preset.empty()) o.weights_preset = f.preset;
  for (const auto& s : f.set) {
    const auto [name, value] = parseAssignment(s);
    o.weights[name] = value;
  }
  if (f.t_len > 0.0) o.t_len = f.t_len;
  if (f.horizon > 0) o.horizon = f.horizon;
  SolveRequest req = buildRequest(scenario, o);
  if (!f.model.empty()) req.params = loadModelParams(f.model);
  prepareProblem(req);
  return req;
}

std::string artifact(const PlanFlags& f, const std::string& id, const std::string& suffix) {
  return (fs::path(f.out_dir) / (id + suffix)).string();
}

void writePlanArtifacts(const PlanFlags& f, const std::string& id, const Trajectory& traj, const SolveRequest& req,
                        const std::string& suffix) {
  std::optional<Rollout> rollout;
  if (traj.converged()) {
    rollout = simulate(traj, req.params, designLqr(discretize(req.params, traj.dt)), {f.sigma, f.seed});
  }
  const MetricsReport m = metrics(traj, req.params, rollout ? &*rollout : nullptr);
  nlohmann::json mj = metricsJson(traj, m);
  mj["scenario"] = id;
  mj["simulation"] = {{"sigma", f.sigma}, {"seed", f.seed}};
  writeFile(artifact(f, id, suffix + ".csv"), trajectoryCsv(traj));
  writeFile(artifact(f, id, suffix + ".metrics.json"), mj.dump(2) + "\n");
  writeFile(artifact(f, id, suffix + ".log"), solverLog(traj));
}

int runPlan(const PlanFlags& f) {
  Scenario scenario = resolveScenario(f.scenario);
  const SolveRequest req = requestFrom(f, scenario);
  const std::string id = scenario.id.empty() ? fs::path(f.scenario).stem().string() : scenario.id;

  Trajectory traj;
  if (f.compare) {
    if (req.mode != Mode::kAuto) throw std::invalid_argument("--compare needs auto mode");
    const Comparison c = compareWithBaseline(req, {f.perturb, f.self_consistent});
    traj = c.auto_row.traj;
    writePlanArtifacts(f, id, c.baseline_row.traj, req, ".baseline");
    writeFile(artifact(f, id, ".compare.csv"), comparisonCsv(c));
    std::cout << comparisonTable(c);
    if (!c.baseline_row.traj.converged()) {
      std::cout << "note: baseline did not converge (" << c.baseline_row.traj.diagnostics.message << ")\n";
    }
  } else {
    traj = solve(req);
  }
  writePlanArtifacts(f, id, traj, req, "");
  std::cout << id << ": " << toString(traj.diagnostics.status) << ", T = " << traj.T << " s, objective "
            << traj.diagnostics.objective << ", " << traj.diagnostics.solve_seconds << " s; artifacts in "
            << f.out_dir << "\n";
  return traj.converged() ? kExitOk : kExitNotConverged;
}

int runCompare(const PlanFlags& f) {
  Scenario scenario = resolveScenario(f.scenario);
  const SolveRequest req = requestFrom(f, scenario);
  if (req.mode != Mode::kAuto) throw std::invalid_argument("compare runs from auto mode");
  const std::string id = scenario.id.empty() ? fs::path(f.scenario).stem().string() : scenario.id;
  const Comparison c = compareWithBaseline(req, {f.perturb, f.self_consistent});
  writeFile(artifact(f, id, ".compare.csv"), comparisonCsv(c));
  std::cout << comparisonTable(c);
  std::cout << "tags:   ";
  for (double t : c.baseline_row.tags) std::cout << " " << t;
  std::cout << "\npassed: ";
  for (double t : c.baseline_row.passage) std::cout << " " << t;
  std::cout << "\n";
  return c.auto_row.traj.converged() ? kExitOk : kExitNotConverged;
}

httplib::Server* g_server = nullptr;

int runServe(const std::string& host, int port, const std::string& store) {
  PlanService service(store);
  httplib::Server server;
  service.registerRoutes(server);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on http://" << host << ":" << port << " (store " << store << ")" << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return kExitInput;
  }
  return kExitOk;
}

int runScenarios(const std::string& export_dir) {
  for (const auto& c : cannedScenarios()) {
    std::cout << c.name << "  " << c.description << "\n";
    if (!export_dir.empty()) saveScenario(scenarioFromCanned(c.name), (fs::path(export_dir) / (c.name + ".json")).string());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera trajectory planner for quadrotor shots"};
  app.require_subcommand(1);

  PlanFlags plan;
  auto* plan_cmd = app.add_subcommand("plan", "Optimize a shot and write CSV, metrics and solver log");
  addSolveFlags(plan_cmd, plan);
  plan_cmd->add_flag("--compare", plan.compare, "Also run the quasi-hard timing baseline");
  plan_cmd->add_flag("--self-consistent", plan.self_consistent, "Baseline follows the auto timing exactly");
  plan_cmd->add_option("--seed", plan.seed, "Tracking simulation seed");
  plan_cmd->add_option("--sigma", plan.sigma, "Tracking disturbance [m/s^2]");

  PlanFlags cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Auto timing versus quasi-hard timing with perturbed tags");
  addSolveFlags(cmp_cmd, cmp);
  cmp_cmd->add_flag("--self-consistent", cmp.self_consistent, "Baseline follows the auto timing exactly");

  std::string host = "127.0.0.1", store = "scenario-store";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP planning service");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--store", store, "Scenario directory");

  std::string export_dir;
  auto* list_cmd = app.add_subcommand("scenarios", "List built-in scenarios");
  list_cmd->add_option("--export", export_dir, "Write them as scenario files into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*plan_cmd) return runPlan(plan);
    if (*cmp_cmd) return runCompare(cmp);
    if (*serve_cmd) return runServe(host, port, store);
    if (*list_cmd) return runScenarios(export_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
