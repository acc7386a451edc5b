#include "camtraj/tracking.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace camtraj {

using Eigen::MatrixXd;

Eigen::MatrixXd lqrGain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd S = R + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P * A);
}

Eigen::MatrixXd solveDare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R, double tol,
                          int max_iterations, int* iterations) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || R.rows() != B.cols()) {
    throw std::invalid_argument("Riccati dimensions do not match");
  }
  MatrixXd P = Q;
  for (int k = 1; k <= max_iterations; ++k) {
    const MatrixXd K = lqrGain(A, B, R, P);
    MatrixXd next = Q + A.transpose() * P * (A - B * K);
    next = 0.5 * (next + next.transpose());
    const double change = (next - P).lpNorm<Eigen::Infinity>();
    P = std::move(next);
    if (!P.allFinite()) throw std::runtime_error("Riccati iteration diverged (system not stabilizable?)");
    if (change <= tol * (1.0 + P.lpNorm<Eigen::Infinity>())) {
      if (iterations) *iterations = k;
      return P;
    }
  }
  throw std::runtime_error("Riccati iteration did not converge");
}

TrackerGains designLqr(const DiscreteSystem& sys, const TrackerWeights& w) {
  const double per_order[kOrders] = {w.position, w.velocity, w.acceleration, w.jerk};
  for (double v : per_order) {
    if (!(v >= 0.0)) throw std::invalid_argument("state weights must be non-negative");
  }
  if (!(w.input > 0.0)) throw std::invalid_argument("input weight must be positive");

  TrackerGains g;
  for (int order = 0; order < kOrders; ++order) {
    for (int c = 0; c < kChannels; ++c) g.Q(order * kChannels + c, order * kChannels + c) = per_order[order];
  }
  g.R.diagonal().setConstant(w.input);
  g.P = solveDare(sys.A, sys.B, g.Q, g.R, 1e-10, 200000, &g.iterations);
  g.K = lqrGain(sys.A, sys.B, g.R, g.P);

  const DynMat closed = sys.A - sys.B * g.K;
  g.spectral_radius = Eigen::EigenSolver<DynMat>(closed, false).eigenvalues().cwiseAbs().maxCoeff();
  if (!(g.spectral_radius < 1.0)) throw std::runtime_error("LQR closed loop is not stable");
  return g;
}

Eigen::Matrix<double, kDynStates, 3> accelerationInfluence(const DiscreteSystem& sys) {
  // ∫₀^dt e^{Ac s} ds; Ac is nilpotent, so the series is finite.
  DynMat integral = DynMat::Zero();
  DynMat power = DynMat::Identity();
  double coeff = sys.dt;
  for (int k = 1; k <= kOrders + 1; ++k) {
    integral += coeff * power;
    power = power * sys.Ac;
    coeff *= sys.dt / (k + 1);
  }
  Eigen::Matrix<double, kDynStates, 3> G;
  for (int axis = 0; axis < 3; ++axis) G.col(axis) = integral.col(stateIndex(kVel, axis));
  return G;
}

Rollout simulate(const Trajectory& traj, const ModelParams& params, const TrackerGains& gains,
                 const Disturbance& disturbance, bool feedback) {
  if (traj.horizon < 1 || static_cast<int>(traj.states.size()) != traj.horizon + 1) {
    throw std::invalid_argument("trajectory is empty");
  }
  const DiscreteSystem sys = discretize(params, traj.dt);
  const Eigen::Matrix<double, kDynStates, 3> G = accelerationInfluence(sys);
  std::mt19937_64 rng(disturbance.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Rollout out;
  DynVec x = traj.states[0].dynamic();
  out.states.push_back(x);
  out.position_error.push_back(0.0);
  double sum_sq = 0.0;
  for (int i = 0; i < traj.horizon; ++i) {
    InputVec u = traj.inputs[i].v;
    if (feedback) u += gains.K * (traj.states[i].dynamic() - x);
    x = sys.A * x + sys.B * u + sys.g;
    if (disturbance.sigma > 0.0) {
      const Eigen::Vector3d a(noise(rng), noise(rng), noise(rng));
      x += G * (disturbance.sigma * a);
    }
    out.inputs.push_back(u);
    out.states.push_back(x);
    const double e = (x.segment<3>(stateIndex(kPos, kX)) - traj.states[i + 1].position()).norm();
    out.position_error.push_back(e);
    sum_sq += e * e;
    out.max_position_error = std::max(out.max_position_error, e);
  }
  out.rms_position_error = std::sqrt(sum_sq / (traj.horizon + 1));
  return out;
}

MetricsReport metrics(const Trajectory& traj, const ModelParams& params, const Rollout* rollout) {
  constexpr double kDeg = 180.0 / std::numbers::pi;
  MetricsReport m;
  m.end_time = traj.T;
  const int stages = static_cast<int>(traj.states.size());
  if (stages == 0) return m;
  for (int i = 0; i < stages; ++i) {
    const SystemState& x = traj.states[i];
    const double jerk = x.jerk().norm();
    const double yaw = x.at(kJerk, kQuadYaw) + x.at(kJerk, kGimbalYaw);
    const double pitch = x.at(kJerk, kGimbalPitch);
    const double angular = std::hypot(yaw, pitch) * kDeg;
    m.mean_sq_jerk += jerk * jerk;
    m.mean_sq_angular_jerk += angular * angular;
    m.max_jerk = std::max(m.max_jerk, jerk);
    m.max_angular_jerk = std::max(m.max_angular_jerk, angular);
    const SystemInput u = i < static_cast<int>(traj.inputs.size()) ? traj.inputs[i] : SystemInput{};
    m.bound_violations += static_cast<int>(checkBounds(x, u, params, 1e-4).size());
  }
  m.mean_sq_jerk /= stages;
  m.mean_sq_angular_jerk /= stages;
  if (rollout) m.tracking_rms = rollout->rms_position_error;
  return m;
}

}  // namespace camtraj
