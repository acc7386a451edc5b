#pragma once

#include "camtraj/model.hpp"
#include "camtraj/solver.hpp"
#include "camtraj/tracking.hpp"

#include <json.hpp>

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace camtraj {

inline constexpr int kScenarioSchemaVersion = 1;

/// Keyframe as exchanged with users: angles in degrees.
struct KeyframeSpec {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  std::optional<double> time;
  std::optional<double> speed;

  Keyframe toKeyframe() const;
  static KeyframeSpec fromKeyframe(const Keyframe& kf);
  bool operator==(const KeyframeSpec& o) const;
};

struct Scenario {
  std::string id;
  std::string description;
  std::vector<KeyframeSpec> keyframes;
  Mode mode = Mode::kAuto;
  std::string weights_preset = "survey";
  std::map<std::string, double> weight_overrides;
  std::optional<double> t_len;
  std::map<std::string, double> model;  // keys of the model config file
  std::string created;
  std::string modified;

  bool operator==(const Scenario& o) const = default;
};

/// Malformed scenario input; `field` is a JSON path such as keyframes[2].yaw_deg.
class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(const std::string& field, const std::string& what)
      : std::invalid_argument(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

Scenario scenarioFromJson(const nlohmann::json& j);
nlohmann::json scenarioToJson(const Scenario& s);
/// Parse errors carry line and column of the offending character.
Scenario parseScenario(const std::string& text);
Scenario loadScenario(const std::string& path);
void saveScenario(const Scenario& s, const std::string& path);

Scenario scenarioFromCanned(const std::string& name);

ModelParams modelParams(const Scenario& s);

struct PlanOverrides {
  std::optional<Mode> mode;
  std::optional<std::string> weights_preset;
  std::map<std::string, double> weights;  // applied after the mode is resolved
  std::optional<double> t_len;
  std::optional<int> horizon;
};

/// Solve request for a scenario: preset, mode resolution, then overrides.
/// Throws ScenarioError or KeyframeError.
SolveRequest buildRequest(const Scenario& s, const PlanOverrides& overrides = {});

/// Parses "name=value" for --set style overrides.
std::pair<std::string, double> parseAssignment(const std::string& text);

std::string utcTimestamp();

// Exports ----------------------------------------------------------------

/// Per-stage CSV: stage, t, 25 state columns, 6 inputs, theta, theta_dot, v,
/// per-term costs. Numbers use 17 significant digits; terminal-stage inputs are empty.
std::string trajectoryCsv(const Trajectory& traj);
std::vector<std::string> trajectoryCsvHeader();

struct TrajectoryTable {
  std::vector<double> t;
  std::vector<SystemState> states;
  std::vector<SystemInput> inputs;
  std::vector<ProgressState> progress;
  std::vector<double> progress_inputs;
};
TrajectoryTable parseTrajectoryCsv(const std::string& text);

nlohmann::json metricsJson(const Trajectory& traj, const MetricsReport& m);
std::string solverLog(const Trajectory& traj);

/// Compact per-stage arrays for the HTTP API (angles in degrees).
nlohmann::json trajectoryJson(const Trajectory& traj);

void writeFile(const std::string& path, const std::string& content);
std::string readFile(const std::string& path);

// Store ------------------------------------------------------------------

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One JSON document per scenario under `dir`. Thread-safe.
class ScenarioStore {
 public:
  explicit ScenarioStore(std::string dir);

  /// Assigns an id when empty; ConflictError if the id exists.
  Scenario create(Scenario s);
  /// NotFoundError if absent. Keeps the creation timestamp.
  Scenario update(const std::string& id, Scenario s);
  Scenario get(const std::string& id) const;
  void remove(const std::string& id);
  std::vector<std::string> list() const;

  static bool validId(const std::string& id);

 private:
  std::string pathFor(const std::string& id) const;

  std::string dir_;
  mutable std::mutex mutex_;
  int next_ = 1;
};

}  // namespace camtraj
