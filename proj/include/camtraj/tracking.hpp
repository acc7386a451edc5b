#pragma once

#include "camtraj/model.hpp"
#include "camtraj/solver.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace camtraj {

/// Diagonal LQR weights, applied to every channel.
struct TrackerWeights {
  double position = 100.0;
  double velocity = 10.0;
  double acceleration = 1.0;
  double jerk = 0.1;
  double input = 0.01;
};

struct TrackerGains {
  DynMat Q = DynMat::Zero();
  Eigen::Matrix<double, kInputDim, kInputDim> R = Eigen::Matrix<double, kInputDim, kInputDim>::Zero();
  Eigen::Matrix<double, kInputDim, kDynStates> K = Eigen::Matrix<double, kInputDim, kDynStates>::Zero();
  DynMat P = DynMat::Zero();
  int iterations = 0;
  double spectral_radius = 0.0;  // of A - B K
};

/// Infinite-horizon discrete Riccati solution by fixed-point iteration,
/// stopped when one more step changes P by at most tol (relative to 1 + ‖P‖).
/// Throws std::runtime_error when the iteration diverges or stalls.
Eigen::MatrixXd solveDare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R, double tol = 1e-10, int max_iterations = 200000,
                          int* iterations = nullptr);

/// Gain of u = -K x minimizing Σ xᵀQx + uᵀRu for the given P.
Eigen::MatrixXd lqrGain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P);

/// Throws std::runtime_error if the closed loop is not stable.
TrackerGains designLqr(const DiscreteSystem& sys, const TrackerWeights& weights = {});

/// Zero-mean Gaussian acceleration acting on x, y, z, held over each step.
struct Disturbance {
  double sigma = 0.0;  // m/s² per axis
  std::uint64_t seed = 0;
};

struct Rollout {
  std::vector<DynVec> states;     // N+1
  std::vector<InputVec> inputs;   // N
  std::vector<double> position_error;  // ‖r - r_ref‖ per stage
  double rms_position_error = 0.0;
  double max_position_error = 0.0;
};

/// Closed loop u = u_ff + K (x_ref - x) on the trajectory's own discretization,
/// starting from the planned initial state. `feedback = false` keeps u_ff only.
Rollout simulate(const Trajectory& traj, const ModelParams& params, const TrackerGains& gains,
                 const Disturbance& disturbance = {}, bool feedback = true);

/// Effect of a constant acceleration on (x, y, z) over one step: Δx = G a.
Eigen::Matrix<double, kDynStates, 3> accelerationInfluence(const DiscreteSystem& sys);

struct MetricsReport {
  double mean_sq_jerk = 0.0;          // m²/s⁶ per stage
  double mean_sq_angular_jerk = 0.0;  // deg²/s⁶ per stage
  double max_jerk = 0.0;              // m/s³
  double max_angular_jerk = 0.0;      // deg/s³
  int bound_violations = 0;
  double tracking_rms = 0.0;          // m, zero unless a rollout is supplied
  double end_time = 0.0;
};

MetricsReport metrics(const Trajectory& traj, const ModelParams& params, const Rollout* rollout = nullptr);

}  // namespace camtraj
