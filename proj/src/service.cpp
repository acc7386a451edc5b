#include "camtraj/service.hpp"

#include "camtraj/tracking.hpp"

#include <httplib.h>

#include <condition_variable>

namespace camtraj {

using nlohmann::json;

struct PlanService::Record {
  std::string id;
  std::string scenario_id;
  Mode mode = Mode::kAuto;
  std::atomic<bool> cancel{false};
  std::atomic<int> outer{0};
  mutable std::mutex m;
  mutable std::condition_variable cv;
  std::string status = "running";
  json result;
  std::string csv;
  std::thread worker;
};

namespace {

std::string statusName(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max-iterations";
    case SolveStatus::kCancelled: return "cancelled";
    case SolveStatus::kFailed: return "error";
  }
  return "error";
}

PlanOverrides overridesFrom(const json& body, std::optional<std::string> mode) {
  if (!body.is_null() && !body.is_object()) throw ScenarioError("", "plan body must be a JSON object");
  PlanOverrides o;
  const json b = body.is_null() ? json::object() : body;
  if (!mode && b.contains("mode")) {
    if (!b["mode"].is_string()) throw ScenarioError("mode", "expected a string");
    mode = b["mode"].get<std::string>();
  }
  if (mode) {
    try {
      o.mode = parseMode(*mode);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("mode", e.what());
    }
  }
  if (b.contains("weights_preset")) {
    if (!b["weights_preset"].is_string()) throw ScenarioError("weights_preset", "expected a string");
    o.weights_preset = b["weights_preset"].get<std::string>();
  }
  if (b.contains("set")) {
    if (!b["set"].is_object()) throw ScenarioError("set", "expected an object of numbers");
    for (const auto& [k, v] : b["set"].items()) {
      if (!v.is_number()) throw ScenarioError("set." + k, "expected a number");
      o.weights[k] = v.get<double>();
    }
  }
  if (b.contains("t_len")) {
    if (!b["t_len"].is_number()) throw ScenarioError("t_len", "expected a number");
    o.t_len = b["t_len"].get<double>();
  }
  if (b.contains("horizon")) {
    if (!b["horizon"].is_number_integer()) throw ScenarioError("horizon", "expected an integer");
    o.horizon = b["horizon"].get<int>();
    if (*o.horizon < 2 || *o.horizon > 400) throw ScenarioError("horizon", "must be within [2, 400]");
  }
  return o;
}

std::optional<Disturbance> simulationFrom(const json& body) {
  if (!body.is_object() || !body.contains("simulate")) return std::nullopt;
  const json& s = body["simulate"];
  if (!s.is_object()) throw ScenarioError("simulate", "expected an object");
  Disturbance d;
  if (s.contains("sigma")) {
    if (!s["sigma"].is_number() || s["sigma"].get<double>() < 0.0) throw ScenarioError("simulate.sigma", "expected a non-negative number");
    d.sigma = s["sigma"].get<double>();
  }
  if (s.contains("seed")) {
    if (!s["seed"].is_number_unsigned()) throw ScenarioError("simulate.seed", "expected a non-negative integer");
    d.seed = s["seed"].get<std::uint64_t>();
  }
  return d;
}

void reply(httplib::Response& res, int code, const json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const ConflictError& e) {
    reply(res, 409, {{"error", e.what()}});
  } catch (const ScenarioError& e) {
    reply(res, 400, {{"error", e.what()}, {"field", e.field()}});
  } catch (const KeyframeError& e) {
    reply(res, 400, {{"error", e.what()}, {"keyframe", e.index()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::invalid_argument& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

json parseBody(const httplib::Request& req) {
  if (req.body.empty()) return json();
  return json::parse(req.body);
}

}  // namespace

PlanService::PlanService(std::string store_dir) : store_(std::move(store_dir)) {}

PlanService::~PlanService() {
  std::map<std::string, std::shared_ptr<Record>> plans;
  {
    std::lock_guard lock(mutex_);
    plans = plans_;
  }
  for (auto& [id, rec] : plans) rec->cancel = true;
  for (auto& [id, rec] : plans) {
    if (rec->worker.joinable()) rec->worker.join();
  }
}

std::string PlanService::startPlan(const std::string& scenario_id, const json& body, std::optional<std::string> mode) {
  const Scenario scenario = store_.get(scenario_id);
  const PlanOverrides overrides = overridesFrom(body, mode);
  SolveRequest req = buildRequest(scenario, overrides);
  prepareProblem(req);  // surfaces keyframe and weight errors before going async
  const std::optional<Disturbance> sim = simulationFrom(body);

  auto rec = std::make_shared<Record>();
  rec->scenario_id = scenario_id;
  rec->mode = req.mode;
  {
    std::lock_guard lock(mutex_);
    if (active_.count(scenario_id)) {
      throw ConflictError("scenario '" + scenario_id + "' already has plan " + active_[scenario_id] + " running");
    }
    rec->id = "p" + std::to_string(next_plan_++);
    active_[scenario_id] = rec->id;
    plans_[rec->id] = rec;
  }

  Record* r = rec.get();
  req.on_outer_iteration = [r](const OuterIterationInfo& info) {
    r->outer = info.iteration;
    return !r->cancel.load();
  };
  rec->worker = std::thread([this, r, req = std::move(req), sim, scenario_id]() {
    json result;
    std::string csv;
    std::string status;
    try {
      const Trajectory traj = solve(req);
      std::optional<Rollout> rollout;
      if (sim && traj.converged()) {
        rollout = simulate(traj, req.params, designLqr(discretize(req.params, traj.dt)), *sim);
      }
      const MetricsReport m = metrics(traj, req.params, rollout ? &*rollout : nullptr);
      status = statusName(traj.diagnostics.status);
      result["metrics"] = metricsJson(traj, m);
      result["trajectory"] = trajectoryJson(traj);
      result["log"] = solverLog(traj);
      result["message"] = traj.diagnostics.message;
      result["solve_seconds"] = traj.diagnostics.solve_seconds;
      csv = trajectoryCsv(traj);
    } catch (const std::exception& e) {
      status = "error";
      result["message"] = e.what();
      result["log"] = std::string("solver error: ") + e.what() + "\n";
    }
    {
      std::lock_guard lock(mutex_);
      active_.erase(scenario_id);
    }
    std::lock_guard lock(r->m);
    r->status = status;
    r->result = std::move(result);
    r->csv = std::move(csv);
    r->cv.notify_all();
  });
  return rec->id;
}

std::shared_ptr<PlanService::Record> PlanService::find(const std::string& plan_id) const {
  std::lock_guard lock(mutex_);
  const auto it = plans_.find(plan_id);
  if (it == plans_.end()) throw NotFoundError("no plan '" + plan_id + "'");
  return it->second;
}

json PlanService::plan(const std::string& plan_id) const {
  const auto rec = find(plan_id);
  std::lock_guard lock(rec->m);
  json j = rec->result.is_object() ? rec->result : json::object();
  j["plan_id"] = rec->id;
  j["scenario_id"] = rec->scenario_id;
  j["mode"] = toString(rec->mode);
  j["status"] = rec->status;
  j["outer_iteration"] = rec->outer.load();
  return j;
}

std::string PlanService::planCsv(const std::string& plan_id) const {
  const auto rec = find(plan_id);
  std::lock_guard lock(rec->m);
  if (rec->status == "running") throw ConflictError("plan '" + plan_id + "' is still running");
  if (rec->csv.empty()) throw NotFoundError("plan '" + plan_id + "' has no trajectory");
  return rec->csv;
}

json PlanService::cancel(const std::string& plan_id) {
  const auto rec = find(plan_id);
  {
    std::lock_guard lock(rec->m);
    if (rec->status == "running") {
      rec->cancel = true;
      return {{"plan_id", plan_id}, {"status", "cancelling"}};
    }
  }
  {
    std::lock_guard lock(mutex_);
    plans_.erase(plan_id);
  }
  if (rec->worker.joinable()) rec->worker.join();
  return {{"plan_id", plan_id}, {"status", "deleted"}};
}

bool PlanService::wait(const std::string& plan_id, std::chrono::milliseconds timeout) const {
  const auto rec = find(plan_id);
  std::unique_lock lock(rec->m);
  return rec->cv.wait_for(lock, timeout, [&] { return rec->status != "running"; });
}

void PlanService::registerRoutes(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });

  server.Get("/scenarios", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, {{"scenarios", store_.list()}}); });
  });
  server.Post("/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 201, scenarioToJson(store_.create(scenarioFromJson(parseBody(req))))); });
  });
  server.Get(R"(/scenarios/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, scenarioToJson(store_.get(req.matches[1]))); });
  });
  server.Put(R"(/scenarios/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, scenarioToJson(store_.update(req.matches[1], scenarioFromJson(parseBody(req))))); });
  });
  server.Delete(R"(/scenarios/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      store_.remove(req.matches[1]);
      reply(res, 200, {{"deleted", std::string(req.matches[1])}});
    });
  });
  server.Post(R"(/scenarios/([^/]+)/plan)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<std::string> mode;
      if (req.has_param("mode")) mode = req.get_param_value("mode");
      const std::string id = startPlan(req.matches[1], parseBody(req), mode);
      reply(res, 202, {{"plan_id", id}, {"status", "running"}});
    });
  });
  server.Get(R"(/plans/([^/]+)/trajectory\.csv)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(planCsv(req.matches[1]), "text/csv"); });
  });
  server.Get(R"(/plans/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, plan(req.matches[1])); });
  });
  server.Delete(R"(/plans/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json j = cancel(req.matches[1]);
      reply(res, j["status"] == "cancelling" ? 202 : 200, j);
    });
  });
}

}  // namespace camtraj
