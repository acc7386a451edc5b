#pragma once

#include "camtraj/io.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace camtraj {

/// Asynchronous planning on top of a scenario store. One solve per scenario
/// at a time; each runs on its own thread and is cancelled cooperatively at
/// outer-iteration boundaries.
class PlanService {
 public:
  explicit PlanService(std::string store_dir);
  ~PlanService();
  PlanService(const PlanService&) = delete;
  PlanService& operator=(const PlanService&) = delete;

  ScenarioStore& store() { return store_; }

  /// Body fields (all optional): mode, weights_preset, set {name: value},
  /// t_len, horizon, simulate {sigma, seed}. `mode` wins over the body.
  /// Throws NotFoundError, ConflictError, ScenarioError or KeyframeError.
  std::string startPlan(const std::string& scenario_id, const nlohmann::json& body,
                        std::optional<std::string> mode = {});

  /// Status document; includes the full result once the solve finished.
  nlohmann::json plan(const std::string& plan_id) const;
  /// Trajectory CSV of a finished plan.
  std::string planCsv(const std::string& plan_id) const;
  /// Cancels a running plan (returns its status) or forgets a finished one.
  nlohmann::json cancel(const std::string& plan_id);
  /// Blocks until the plan leaves the running state or the timeout expires.
  bool wait(const std::string& plan_id, std::chrono::milliseconds timeout) const;

  void registerRoutes(httplib::Server& server);

 private:
  struct Record;
  std::shared_ptr<Record> find(const std::string& plan_id) const;

  ScenarioStore store_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Record>> plans_;
  std::map<std::string, std::string> active_;  // scenario id -> plan id
  int next_plan_ = 1;
};

}  // namespace camtraj
