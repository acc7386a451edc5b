#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace camtraj {

// The six kinematic channels share one layout: x, y, z, quad yaw, gimbal yaw,
// gimbal pitch. State index = order * kChannels + channel.
inline constexpr int kChannels = 6;
inline constexpr int kOrders = 4;  // position, velocity, acceleration, jerk
inline constexpr int kDynStates = kChannels * kOrders;  // 24
inline constexpr int kStateDim = kDynStates + 1;        // + end time T
inline constexpr int kInputDim = kChannels;
inline constexpr int kEndTimeIndex = kDynStates;

enum Channel : int { kX = 0, kY = 1, kZ = 2, kQuadYaw = 3, kGimbalYaw = 4, kGimbalPitch = 5 };
enum Order : int { kPos = 0, kVel = 1, kAcc = 2, kJerk = 3 };

constexpr int stateIndex(Order order, int channel) { return order * kChannels + channel; }

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using DynVec = Eigen::Matrix<double, kDynStates, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;
using DynMat = Eigen::Matrix<double, kDynStates, kDynStates>;
using InputMat = Eigen::Matrix<double, kDynStates, kInputDim>;

/// Full optimizer state: 24 kinematic states followed by the trajectory end time.
struct SystemState {
  StateVec v = StateVec::Zero();

  SystemState() { v[kEndTimeIndex] = 1.0; }
  explicit SystemState(const StateVec& vec) : v(vec) {}

  double& at(Order order, int channel) { return v[stateIndex(order, channel)]; }
  double at(Order order, int channel) const { return v[stateIndex(order, channel)]; }

  Eigen::Vector3d position() const { return v.segment<3>(stateIndex(kPos, kX)); }
  Eigen::Vector3d velocity() const { return v.segment<3>(stateIndex(kVel, kX)); }
  Eigen::Vector3d acceleration() const { return v.segment<3>(stateIndex(kAcc, kX)); }
  Eigen::Vector3d jerk() const { return v.segment<3>(stateIndex(kJerk, kX)); }
  DynVec dynamic() const { return v.head<kDynStates>(); }

  double endTime() const { return v[kEndTimeIndex]; }
  void setEndTime(double t) { v[kEndTimeIndex] = t; }

  /// True if T > 0 and every component is finite.
  bool valid() const;
};

/// Force on the quadrotor (3) and the three torques, in channel order.
struct SystemInput {
  InputVec v = InputVec::Zero();
};

struct ModelParams {
  double mass = 1.0;
  // Inertia for quad yaw, gimbal yaw, gimbal pitch.
  std::array<double, 3> inertia{0.1, 0.1, 0.1};
  double gravity = 9.81;

  DynVec x_min;
  DynVec x_max;
  InputVec u_min;
  InputVec u_max;
  double t_min = 0.5;
  double t_max = 600.0;

  /// Defaults: ±20 N force, ±5 torque, 10 m/s, 15 m/s², 50 m/s³, yaw rate up to ~180°/s.
  static ModelParams defaults();

  /// Throws std::invalid_argument describing the first broken invariant.
  void validate() const;

  double channelGain(int channel) const {
    return channel < 3 ? 1.0 / mass : 1.0 / inertia[channel - 3];
  }
};

/// Reads `key = value` lines (see README for keys) on top of the defaults.
ModelParams loadModelParams(const std::string& path);
ModelParams parseModelParams(const std::string& text);
std::string formatModelParams(const ModelParams& params);

/// Zero-order-hold discretization of the model for one step length.
struct DiscreteSystem {
  DynMat A = DynMat::Identity();
  InputMat B = InputMat::Zero();
  DynVec g = DynVec::Zero();
  double dt = 0.0;

  // Continuous-time generator, kept so that derivatives w.r.t. dt stay cheap:
  // dA/ddt = Ac*A, dB/ddt = A*Bc, dg/ddt = A*gc.
  DynMat Ac = DynMat::Zero();
  InputMat Bc = InputMat::Zero();
  DynVec gc = DynVec::Zero();

  /// d(A x + B u + g)/d(dt) at (x, u).
  DynVec stepDerivative(const DynVec& x, const InputVec& u) const;
};

DiscreteSystem discretize(const ModelParams& params, double dt);

SystemState propagate(const DiscreteSystem& sys, const SystemState& x, const SystemInput& u);

struct BoundViolation {
  enum class Kind { kState, kInput, kEndTime };
  Kind kind;
  int index;
  double value;
  double lower;
  double upper;
};

std::vector<BoundViolation> checkBounds(const SystemState& x, const SystemInput& u,
                                        const ModelParams& params, double tol);

std::string describe(const BoundViolation& v);

}  // namespace camtraj
