#include "camtraj/io.hpp"

#include "camtraj/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace camtraj {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

const char* const kChannelNames[kChannels] = {"x", "y", "z", "quad_yaw", "gimbal_yaw", "gimbal_pitch"};
const char* const kOrderNames[kOrders] = {"pos", "vel", "acc", "jerk"};

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ScenarioError(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ScenarioError(field, "must be finite");
  return v;
}

std::optional<double> optionalNumber(const json& obj, const char* key, const std::string& field) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return number(obj.at(key), field + "." + key);
}

std::string text(const json& j, const std::string& field) {
  if (!j.is_string()) throw ScenarioError(field, "expected a string");
  return j.get<std::string>();
}

std::map<std::string, double> numberMap(const json& j, const std::string& field) {
  if (!j.is_object()) throw ScenarioError(field, "expected an object of numbers");
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = number(v, field + "." + k);
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::pair<int, int> lineColumn(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

Keyframe KeyframeSpec::toKeyframe() const {
  Keyframe kf;
  kf.position = position;
  kf.yaw = yaw_deg * kDegToRad;
  kf.pitch = pitch_deg * kDegToRad;
  kf.time = time;
  kf.speed = speed;
  return kf;
}

KeyframeSpec KeyframeSpec::fromKeyframe(const Keyframe& kf) {
  KeyframeSpec s;
  s.position = kf.position;
  s.yaw_deg = kf.yaw / kDegToRad;
  s.pitch_deg = kf.pitch / kDegToRad;
  s.time = kf.time;
  s.speed = kf.speed;
  return s;
}

bool KeyframeSpec::operator==(const KeyframeSpec& o) const {
  return position == o.position && yaw_deg == o.yaw_deg && pitch_deg == o.pitch_deg && time == o.time &&
         speed == o.speed;
}

Scenario scenarioFromJson(const json& j) {
  if (!j.is_object()) throw ScenarioError("", "scenario must be a JSON object");
  if (!j.contains("schema_version")) throw ScenarioError("schema_version", "missing");
  const double version = number(j.at("schema_version"), "schema_version");
  if (version != kScenarioSchemaVersion) {
    throw ScenarioError("schema_version", "unsupported version " + fmt17(version) + " (expected " +
                                              std::to_string(kScenarioSchemaVersion) + ")");
  }

  Scenario s;
  if (j.contains("id")) s.id = text(j.at("id"), "id");
  if (j.contains("description")) s.description = text(j.at("description"), "description");
  if (j.contains("mode")) {
    const std::string m = text(j.at("mode"), "mode");
    try {
      s.mode = parseMode(m);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("mode", e.what());
    }
  }
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    if (!w.is_object()) throw ScenarioError("weights", "expected an object");
    if (w.contains("preset")) s.weights_preset = text(w.at("preset"), "weights.preset");
    if (w.contains("overrides")) s.weight_overrides = numberMap(w.at("overrides"), "weights.overrides");
  }
  try {
    presetByName(s.weights_preset);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("weights.preset", e.what());
  }
  CostWeights probe;
  for (const auto& [name, value] : s.weight_overrides) {
    if (!probe.set(name, value)) throw ScenarioError("weights.overrides." + name, "unknown weight");
  }
  s.t_len = optionalNumber(j, "t_len", "");
  if (j.contains("model")) s.model = numberMap(j.at("model"), "model");
  if (j.contains("created")) s.created = text(j.at("created"), "created");
  if (j.contains("modified")) s.modified = text(j.at("modified"), "modified");

  if (!j.contains("keyframes")) throw ScenarioError("keyframes", "missing");
  const json& kfs = j.at("keyframes");
  if (!kfs.is_array()) throw ScenarioError("keyframes", "expected an array");
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    const std::string f = "keyframes[" + std::to_string(k) + "]";
    const json& e = kfs[k];
    if (!e.is_object()) throw ScenarioError(f, "expected an object");
    KeyframeSpec kf;
    if (!e.contains("position")) throw ScenarioError(f + ".position", "missing");
    const json& p = e.at("position");
    if (!p.is_array() || p.size() != 3) throw ScenarioError(f + ".position", "expected [x, y, z]");
    for (int a = 0; a < 3; ++a) kf.position[a] = number(p[a], f + ".position[" + std::to_string(a) + "]");
    if (e.contains("yaw_deg")) kf.yaw_deg = number(e.at("yaw_deg"), f + ".yaw_deg");
    if (e.contains("pitch_deg")) kf.pitch_deg = number(e.at("pitch_deg"), f + ".pitch_deg");
    kf.time = optionalNumber(e, "time", f);
    kf.speed = optionalNumber(e, "speed", f);
    s.keyframes.push_back(kf);
  }
  if (s.keyframes.size() < 2) throw ScenarioError("keyframes", "need at least two keyframes");

  std::vector<Keyframe> kfs_rad;
  for (const auto& kf : s.keyframes) kfs_rad.push_back(kf.toKeyframe());
  validateKeyframes(kfs_rad);
  try {
    modelParams(s);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("model", e.what());
  }
  return s;
}

json scenarioToJson(const Scenario& s) {
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["id"] = s.id;
  j["description"] = s.description;
  j["mode"] = toString(s.mode);
  j["weights"] = {{"preset", s.weights_preset}, {"overrides", s.weight_overrides}};
  j["t_len"] = s.t_len ? json(*s.t_len) : json(nullptr);
  j["model"] = s.model;
  json kfs = json::array();
  for (const auto& kf : s.keyframes) {
    json e;
    e["position"] = {kf.position.x(), kf.position.y(), kf.position.z()};
    e["yaw_deg"] = kf.yaw_deg;
    e["pitch_deg"] = kf.pitch_deg;
    if (kf.time) e["time"] = *kf.time;
    if (kf.speed) e["speed"] = *kf.speed;
    kfs.push_back(e);
  }
  j["keyframes"] = kfs;
  j["created"] = s.created;
  j["modified"] = s.modified;
  return j;
}

Scenario parseScenario(const std::string& content) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::parse_error& e) {
    const auto [line, col] = lineColumn(content, e.byte == 0 ? 0 : e.byte - 1);
    throw ScenarioError("", "JSON syntax error at line " + std::to_string(line) + ", column " +
                                std::to_string(col));
  }
  return scenarioFromJson(j);
}

Scenario loadScenario(const std::string& path) { return parseScenario(readFile(path)); }

void saveScenario(const Scenario& s, const std::string& path) { writeFile(path, scenarioToJson(s).dump(2) + "\n"); }

Scenario scenarioFromCanned(const std::string& name) {
  const CannedScenario c = cannedScenario(name);
  Scenario s;
  s.id = c.name;
  s.description = c.description;
  for (const auto& kf : c.keyframes) s.keyframes.push_back(KeyframeSpec::fromKeyframe(kf));
  return s;
}

ModelParams modelParams(const Scenario& s) {
  std::string config;
  for (const auto& [key, value] : s.model) config += key + " = " + fmt17(value) + "\n";
  return parseModelParams(config);
}

SolveRequest buildRequest(const Scenario& s, const PlanOverrides& o) {
  SolveRequest req;
  for (const auto& kf : s.keyframes) req.keyframes.push_back(kf.toKeyframe());
  req.params = modelParams(s);
  req.mode = o.mode.value_or(s.mode);
  const std::optional<double> t_len = o.t_len ? o.t_len : s.t_len;
  if (req.mode == Mode::kFixedLength && !t_len) throw ScenarioError("t_len", "fixed-length mode needs t_len");
  WeightPreset preset;
  try {
    preset = presetByName(o.weights_preset.value_or(s.weights_preset));
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("weights.preset", e.what());
  }
  req.weights = resolveWeights(preset, req.mode, t_len);
  for (const auto* overrides : {&s.weight_overrides, &o.weights}) {
    for (const auto& [name, value] : *overrides) {
      if (!req.weights.set(name, value)) throw ScenarioError("weights." + name, "unknown weight");
    }
  }
  if (o.horizon) req.horizon = *o.horizon;
  try {
    req.weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("weights", e.what());
  }
  return req;
}

std::pair<std::string, double> parseAssignment(const std::string& t) {
  const auto eq = t.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected name=value, got '" + t + "'");
  const std::string name = t.substr(0, eq);
  const std::string value = t.substr(eq + 1);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (value.empty() || used != value.size()) throw std::invalid_argument("bad number in '" + t + "'");
  return {name, v};
}

std::string utcTimestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> trajectoryCsvHeader() {
  std::vector<std::string> h = {"stage", "t"};
  for (int o = 0; o < kOrders; ++o) {
    for (int c = 0; c < kChannels; ++c) h.push_back(std::string(kOrderNames[o]) + "_" + kChannelNames[c]);
  }
  h.push_back("T");
  for (int c = 0; c < kChannels; ++c) h.push_back(std::string("u_") + kChannelNames[c]);
  for (const char* n : {"theta", "theta_dot", "v", "cost_position", "cost_yaw", "cost_pitch", "cost_jerk",
                        "cost_end_time", "cost_length", "cost_timing", "cost_velocity", "cost_progress"}) {
    h.push_back(n);
  }
  return h;
}

std::string trajectoryCsv(const Trajectory& traj) {
  std::ostringstream out;
  const auto header = trajectoryCsvHeader();
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << "\n";
  const int stages = static_cast<int>(traj.states.size());
  for (int i = 0; i < stages; ++i) {
    out << i << "," << fmt17(i * traj.dt);
    for (int k = 0; k < kStateDim; ++k) out << "," << fmt17(traj.states[i].v[k]);
    const bool has_input = i < static_cast<int>(traj.inputs.size());
    for (int k = 0; k < kInputDim; ++k) out << "," << (has_input ? fmt17(traj.inputs[i].v[k]) : "");
    out << "," << fmt17(traj.progress[i].theta) << "," << fmt17(traj.progress[i].theta_dot) << ","
        << (has_input ? fmt17(traj.progress_inputs[i]) : "");
    const StageTerms t = i < static_cast<int>(traj.diagnostics.stage_terms.size()) ? traj.diagnostics.stage_terms[i]
                                                                                    : StageTerms{};
    for (double v : {t.position, t.yaw, t.pitch, t.jerk, t.end_time, t.length, t.timing, t.velocity, t.progress}) {
      out << "," << fmt17(v);
    }
    out << "\n";
  }
  return out.str();
}

TrajectoryTable parseTrajectoryCsv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty trajectory CSV");
  const std::size_t columns = trajectoryCsvHeader().size();
  TrajectoryTable table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != columns) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                                  " columns");
    }
    auto num = [&](std::size_t k) { return std::strtod(cells[k].c_str(), nullptr); };
    table.t.push_back(num(1));
    SystemState x;
    for (int k = 0; k < kStateDim; ++k) x.v[k] = num(2 + k);
    table.states.push_back(x);
    const std::size_t u0 = 2 + kStateDim;
    if (!cells[u0].empty()) {
      SystemInput u;
      for (int k = 0; k < kInputDim; ++k) u.v[k] = num(u0 + k);
      table.inputs.push_back(u);
    }
    const std::size_t p0 = u0 + kInputDim;
    table.progress.push_back({num(p0), num(p0 + 1)});
    if (!cells[p0 + 2].empty()) table.progress_inputs.push_back(num(p0 + 2));
  }
  return table;
}

json metricsJson(const Trajectory& traj, const MetricsReport& m) {
  const SolveDiagnostics& d = traj.diagnostics;
  const StageTerms& t = d.total_terms;
  json j;
  j["status"] = toString(d.status);
  j["message"] = d.message;
  j["mode"] = toString(traj.mode);
  j["end_time"] = traj.T;
  j["dt"] = traj.dt;
  j["horizon"] = traj.horizon;
  j["path_length"] = traj.path_length;
  j["objective"] = d.objective;
  j["terms"] = {{"position", t.position}, {"yaw", t.yaw},           {"pitch", t.pitch},
                {"jerk", t.jerk},         {"end_time", t.end_time}, {"length", t.length},
                {"timing", t.timing},     {"velocity", t.velocity}, {"progress", t.progress}};
  j["mean_sq_jerk"] = m.mean_sq_jerk;
  j["mean_sq_angular_jerk_deg"] = m.mean_sq_angular_jerk;
  j["max_jerk"] = m.max_jerk;
  j["max_angular_jerk_deg"] = m.max_angular_jerk;
  j["bound_violations"] = m.bound_violations;
  j["tracking_rms"] = m.tracking_rms;
  j["passage_times"] = passageTimes(traj);
  j["outer_iterations"] = d.outer_iterations;
  j["inner_iterations"] = d.inner_iterations;
  j["max_dynamics_residual"] = d.max_dynamics_residual;
  j["max_progress_residual"] = d.max_progress_residual;
  j["terminal_progress_error"] = traj.progress.empty() ? 0.0 : traj.progress.back().theta - traj.path_length;
  j["solve_seconds"] = d.solve_seconds;
  const CostWeights& w = traj.weights;
  j["weights"] = {{"w_p", w.w_p},     {"q_lag", w.Q[0]},   {"q_contour", w.Q[1]}, {"w_psi", w.w_psi},
                  {"w_phi", w.w_phi}, {"w_j", w.w_j},      {"w_end", w.w_end},    {"w_len", w.w_len},
                  {"w_t", w.w_t},     {"w_vel", w.w_vel},  {"w_prog", w.w_prog}};
  if (w.t_len) j["weights"]["t_len"] = *w.t_len;
  return j;
}

std::string solverLog(const Trajectory& traj) {
  const SolveDiagnostics& d = traj.diagnostics;
  std::ostringstream out;
  out << "mode " << toString(traj.mode) << ", horizon " << traj.horizon << ", path length "
      << fmt17(traj.path_length) << "\n";
  char buf[256];
  double previous = 0.0;
  for (const auto& o : d.outer_log) {
    std::snprintf(buf, sizeof buf,
                  "outer %2d  dtheta %.3e  objective %.9g  T %.6f  inner %3d %s  kkt %.2e  constraint %.2e\n",
                  o.iteration, o.max_theta_change, o.objective, o.end_time, o.inner_iterations,
                  o.inner_converged ? "ok " : "inc", o.kkt_residual, o.constraint_residual);
    out << buf;
    if (o.iteration > 1 && o.objective > previous + 1e-9 * (1.0 + std::abs(previous))) {
      std::snprintf(buf, sizeof buf, "          objective rose by %.3e after refitting\n", o.objective - previous);
      out << buf;
    }
    previous = o.objective;
  }
  std::snprintf(buf, sizeof buf, "status %s (%s) after %d outer / %d inner iterations, %.3f s\n",
                toString(d.status).c_str(), d.message.c_str(), d.outer_iterations, d.inner_iterations,
                d.solve_seconds);
  out << buf;
  std::snprintf(buf, sizeof buf, "objective %.12g  T %.6f  dynamics residual %.2e  progress residual %.2e\n",
                d.objective, traj.T, d.max_dynamics_residual, d.max_progress_residual);
  out << buf;
  return out.str();
}

json trajectoryJson(const Trajectory& traj) {
  constexpr double kDeg = 180.0 / std::numbers::pi;
  json j;
  j["dt"] = traj.dt;
  j["end_time"] = traj.T;
  j["path_length"] = traj.path_length;
  j["knots"] = traj.knots;
  json t = json::array(), pos = json::array(), vel = json::array(), qyaw = json::array(), gyaw = json::array(),
       pitch = json::array(), theta = json::array(), theta_dot = json::array(), jerk = json::array(),
       ang = json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const SystemState& x = traj.states[i];
    t.push_back(static_cast<double>(i) * traj.dt);
    pos.push_back({x.position().x(), x.position().y(), x.position().z()});
    vel.push_back({x.velocity().x(), x.velocity().y(), x.velocity().z()});
    qyaw.push_back(x.at(kPos, kQuadYaw) * kDeg);
    gyaw.push_back(x.at(kPos, kGimbalYaw) * kDeg);
    pitch.push_back(x.at(kPos, kGimbalPitch) * kDeg);
    theta.push_back(traj.progress[i].theta);
    theta_dot.push_back(traj.progress[i].theta_dot);
  }
  for (double v : traj.diagnostics.stage_jerk_sq) jerk.push_back(v);
  for (double v : traj.diagnostics.stage_angular_jerk_sq) ang.push_back(v * kDeg * kDeg);
  j["t"] = t;
  j["position"] = pos;
  j["velocity"] = vel;
  j["quad_yaw_deg"] = qyaw;
  j["gimbal_yaw_deg"] = gyaw;
  j["gimbal_pitch_deg"] = pitch;
  j["theta"] = theta;
  j["theta_dot"] = theta_dot;
  j["jerk_sq"] = jerk;
  j["angular_jerk_sq_deg"] = ang;
  return j;
}

void writeFile(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ScenarioStore::ScenarioStore(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

bool ScenarioStore::validId(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

std::string ScenarioStore::pathFor(const std::string& id) const { return (fs::path(dir_) / (id + ".json")).string(); }

Scenario ScenarioStore::create(Scenario s) {
  std::lock_guard lock(mutex_);
  if (s.id.empty()) {
    do {
      s.id = "s" + std::to_string(next_++);
    } while (fs::exists(pathFor(s.id)));
  }
  if (!validId(s.id)) throw ScenarioError("id", "ids use letters, digits, '-' and '_' (at most 64)");
  if (fs::exists(pathFor(s.id))) throw ConflictError("scenario '" + s.id + "' already exists");
  s.created = s.modified = utcTimestamp();
  saveScenario(s, pathFor(s.id));
  return s;
}

Scenario ScenarioStore::update(const std::string& id, Scenario s) {
  std::lock_guard lock(mutex_);
  if (!validId(id) || !fs::exists(pathFor(id))) throw NotFoundError("no scenario '" + id + "'");
  const Scenario old = loadScenario(pathFor(id));
  s.id = id;
  s.created = old.created;
  s.modified = utcTimestamp();
  saveScenario(s, pathFor(id));
  return s;
}

Scenario ScenarioStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  if (!validId(id) || !fs::exists(pathFor(id))) throw NotFoundError("no scenario '" + id + "'");
  return loadScenario(pathFor(id));
}

void ScenarioStore::remove(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (!validId(id) || !fs::remove(pathFor(id))) throw NotFoundError("no scenario '" + id + "'");
}

std::vector<std::string> ScenarioStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir_)) {
    if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace camtraj
