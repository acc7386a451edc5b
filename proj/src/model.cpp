#include "camtraj/model.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace camtraj {

namespace {

struct SymmetricLimits {
  double position = 1.0e4;
  double angle = 50.0;
  double velocity = 10.0;
  double acceleration = 15.0;
  double jerk = 50.0;
  double angular_velocity = 3.5;
  double angular_acceleration = 10.0;
  double angular_jerk = 40.0;
  double force = 20.0;
  double torque = 5.0;
};

void applyLimits(ModelParams& p, const SymmetricLimits& lim) {
  const std::array<double, kOrders> lin{lim.position, lim.velocity, lim.acceleration, lim.jerk};
  const std::array<double, kOrders> ang{lim.angle, lim.angular_velocity,
                                        lim.angular_acceleration, lim.angular_jerk};
  for (int o = 0; o < kOrders; ++o) {
    for (int c = 0; c < kChannels; ++c) {
      const double b = c < 3 ? lin[o] : ang[o];
      p.x_max[stateIndex(static_cast<Order>(o), c)] = b;
      p.x_min[stateIndex(static_cast<Order>(o), c)] = -b;
    }
  }
  for (int c = 0; c < kChannels; ++c) {
    const double b = c < 3 ? lim.force : lim.torque;
    p.u_max[c] = b;
    p.u_min[c] = -b;
  }
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

bool SystemState::valid() const { return v.allFinite() && v[kEndTimeIndex] > 0.0; }

ModelParams ModelParams::defaults() {
  ModelParams p;
  applyLimits(p, SymmetricLimits{});
  return p;
}

void ModelParams::validate() const {
  if (!(std::isfinite(mass) && mass > 0.0)) throw std::invalid_argument("mass must be positive");
  for (double i : inertia) {
    if (!(std::isfinite(i) && i > 0.0)) throw std::invalid_argument("inertia must be positive");
  }
  if (!std::isfinite(gravity)) throw std::invalid_argument("gravity must be finite");
  for (int k = 0; k < kDynStates; ++k) {
    if (std::isnan(x_min[k]) || std::isnan(x_max[k]) || !(x_min[k] < x_max[k])) {
      throw std::invalid_argument("x_min < x_max violated at state " + std::to_string(k));
    }
  }
  for (int k = 0; k < kInputDim; ++k) {
    if (std::isnan(u_min[k]) || std::isnan(u_max[k]) || !(u_min[k] < u_max[k])) {
      throw std::invalid_argument("u_min < u_max violated at input " + std::to_string(k));
    }
  }
  if (!(t_min > 0.0 && t_min < t_max && std::isfinite(t_max))) {
    throw std::invalid_argument("end time bounds must satisfy 0 < t_min < t_max");
  }
}

ModelParams parseModelParams(const std::string& text) {
  ModelParams p = ModelParams::defaults();
  SymmetricLimits lim;
  const std::map<std::string, std::function<void(double)>> setters{
      {"mass", [&](double v) { p.mass = v; }},
      {"gravity", [&](double v) { p.gravity = v; }},
      {"inertia_quad_yaw", [&](double v) { p.inertia[0] = v; }},
      {"inertia_gimbal_yaw", [&](double v) { p.inertia[1] = v; }},
      {"inertia_gimbal_pitch", [&](double v) { p.inertia[2] = v; }},
      {"position_max", [&](double v) { lim.position = v; }},
      {"angle_max", [&](double v) { lim.angle = v; }},
      {"velocity_max", [&](double v) { lim.velocity = v; }},
      {"acceleration_max", [&](double v) { lim.acceleration = v; }},
      {"jerk_max", [&](double v) { lim.jerk = v; }},
      {"angular_velocity_max", [&](double v) { lim.angular_velocity = v; }},
      {"angular_acceleration_max", [&](double v) { lim.angular_acceleration = v; }},
      {"angular_jerk_max", [&](double v) { lim.angular_jerk = v; }},
      {"force_max", [&](double v) { lim.force = v; }},
      {"torque_max", [&](double v) { lim.torque = v; }},
      {"t_min", [&](double v) { p.t_min = v; }},
      {"t_max", [&](double v) { p.t_max = v; }},
  };

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    std::size_t used = 0;
    double parsed = 0.0;
    try {
      parsed = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": bad number for '" + key + "'");
    }
    it->second(parsed);
  }
  applyLimits(p, lim);
  p.validate();
  return p;
}

ModelParams loadModelParams(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parseModelParams(buf.str());
}

std::string formatModelParams(const ModelParams& p) {
  std::ostringstream out;
  out.precision(17);
  out << "mass = " << p.mass << "\n"
      << "gravity = " << p.gravity << "\n"
      << "inertia_quad_yaw = " << p.inertia[0] << "\n"
      << "inertia_gimbal_yaw = " << p.inertia[1] << "\n"
      << "inertia_gimbal_pitch = " << p.inertia[2] << "\n"
      << "position_max = " << p.x_max[stateIndex(kPos, kX)] << "\n"
      << "angle_max = " << p.x_max[stateIndex(kPos, kQuadYaw)] << "\n"
      << "velocity_max = " << p.x_max[stateIndex(kVel, kX)] << "\n"
      << "acceleration_max = " << p.x_max[stateIndex(kAcc, kX)] << "\n"
      << "jerk_max = " << p.x_max[stateIndex(kJerk, kX)] << "\n"
      << "angular_velocity_max = " << p.x_max[stateIndex(kVel, kQuadYaw)] << "\n"
      << "angular_acceleration_max = " << p.x_max[stateIndex(kAcc, kQuadYaw)] << "\n"
      << "angular_jerk_max = " << p.x_max[stateIndex(kJerk, kQuadYaw)] << "\n"
      << "force_max = " << p.u_max[kX] << "\n"
      << "torque_max = " << p.u_max[kQuadYaw] << "\n"
      << "t_min = " << p.t_min << "\n"
      << "t_max = " << p.t_max << "\n";
  return out.str();
}

DynVec DiscreteSystem::stepDerivative(const DynVec& x, const InputVec& u) const {
  return A * (Ac * x + Bc * u + gc);
}

DiscreteSystem discretize(const ModelParams& params, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive and finite");
  params.validate();

  DiscreteSystem sys;
  sys.dt = dt;
  // Each channel is a chain of four integrators; exp(Ac*dt) is a finite Taylor
  // series because Ac is nilpotent.
  const std::array<double, kOrders + 1> taylor{1.0, dt, dt * dt / 2.0, dt * dt * dt / 6.0,
                                               dt * dt * dt * dt / 24.0};
  sys.A.setZero();
  for (int c = 0; c < kChannels; ++c) {
    for (int row = 0; row < kOrders; ++row) {
      for (int col = row; col < kOrders; ++col) {
        sys.A(stateIndex(static_cast<Order>(row), c), stateIndex(static_cast<Order>(col), c)) =
            taylor[col - row];
      }
      if (row + 1 < kOrders) {
        sys.Ac(stateIndex(static_cast<Order>(row), c), stateIndex(static_cast<Order>(row + 1), c)) = 1.0;
      }
      sys.B(stateIndex(static_cast<Order>(row), c), c) = taylor[kOrders - row] * params.channelGain(c);
    }
    sys.Bc(stateIndex(kJerk, c), c) = params.channelGain(c);
  }
  // Gravity acts as a constant acceleration on the vertical velocity.
  sys.gc[stateIndex(kVel, kZ)] = -params.gravity;
  sys.g[stateIndex(kPos, kZ)] = -params.gravity * taylor[2];
  sys.g[stateIndex(kVel, kZ)] = -params.gravity * taylor[1];
  return sys;
}

SystemState propagate(const DiscreteSystem& sys, const SystemState& x, const SystemInput& u) {
  SystemState next;
  next.v.head<kDynStates>() = sys.A * x.v.head<kDynStates>() + sys.B * u.v + sys.g;
  next.v[kEndTimeIndex] = x.v[kEndTimeIndex];
  return next;
}

std::vector<BoundViolation> checkBounds(const SystemState& x, const SystemInput& u,
                                        const ModelParams& params, double tol) {
  std::vector<BoundViolation> out;
  for (int k = 0; k < kDynStates; ++k) {
    const double val = x.v[k];
    if (val < params.x_min[k] - tol || val > params.x_max[k] + tol || std::isnan(val)) {
      out.push_back({BoundViolation::Kind::kState, k, val, params.x_min[k], params.x_max[k]});
    }
  }
  const double t = x.endTime();
  if (t < params.t_min - tol || t > params.t_max + tol || std::isnan(t)) {
    out.push_back({BoundViolation::Kind::kEndTime, kEndTimeIndex, t, params.t_min, params.t_max});
  }
  for (int k = 0; k < kInputDim; ++k) {
    const double val = u.v[k];
    if (val < params.u_min[k] - tol || val > params.u_max[k] + tol || std::isnan(val)) {
      out.push_back({BoundViolation::Kind::kInput, k, val, params.u_min[k], params.u_max[k]});
    }
  }
  return out;
}

std::string describe(const BoundViolation& v) {
  const char* kind = v.kind == BoundViolation::Kind::kState   ? "state"
                     : v.kind == BoundViolation::Kind::kInput ? "input"
                                                              : "end time";
  std::ostringstream out;
  out << kind << "[" << v.index << "] = " << v.value << " outside [" << v.lower << ", " << v.upper << "]";
  return out.str();
}

}  // namespace camtraj
