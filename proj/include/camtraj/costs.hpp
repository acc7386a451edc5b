#pragma once

#include "camtraj/model.hpp"
#include "camtraj/path.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace camtraj {

/// Weights of the per-stage objective. `w_prog` weighs the progress input
/// regularizer, `w_vel` the reference-velocity term; they are separate knobs.
struct CostWeights {
  double w_p = 1.0;
  Eigen::Vector2d Q{2.0, 1.0};  // lag, contour
  double w_psi = 1.0;
  double w_phi = 1.0;
  double w_j = 10.0;
  double w_end = 1.0;
  double w_len = 0.0;
  double w_t = 0.0;
  double w_vel = 0.0;
  double w_prog = 0.1;
  std::optional<double> t_len;

  /// Throws std::invalid_argument on negative weights, non-positive Q, or
  /// w_len > 0 together with w_end > 0.
  void validate() const;

  /// Sets one weight by name (w_p, q_lag, q_contour, w_psi, w_phi, w_j, w_end,
  /// w_len, w_t, w_vel, w_prog, t_len). Returns false for unknown names.
  bool set(const std::string& name, double value);
};

/// Named weight sets. `base` is used in auto mode; the remaining fields are
/// switched in by the timing modes.
struct WeightPreset {
  std::string name;
  CostWeights base;
  double timing = 100.0;
  double velocity = 100.0;
  double length = 100.0;
  double jerk_with_reference = 10.0;
};

inline constexpr double kQuasiHardTimingWeight = 1.0e4;

WeightPreset surveyPreset();
WeightPreset interactivePreset();
/// Throws std::invalid_argument for unknown names.
WeightPreset presetByName(const std::string& name);

struct ProgressState {
  double theta = 0.0;
  double theta_dot = 0.0;
};

struct LagContour {
  double lag = 0.0;
  double contour = 0.0;
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  Eigen::Vector3d n = Eigen::Vector3d::UnitX();
  bool degenerate = false;
};

/// Lag/contour split of r_d(θ) - r along the fit tangent. A vanishing tangent
/// falls back to fit.fallback_tangent and sets `degenerate`.
LagContour lagContourError(double theta, const Eigen::Vector3d& r, const QuadraticLocalFit& fit);

double positionCost(double theta, const Eigen::Vector3d& r, const QuadraticLocalFit& fit,
                    const Eigen::Vector2d& Q);
double yawCost(double theta, double psi_q, double psi_g, const QuadraticLocalFit& fit);
double pitchCost(double theta, double phi_g, const QuadraticLocalFit& fit);
double endTimeCost(double T);
double lengthCost(double T, double t_len);
double jerkCost(const SystemState& x);
double progressRegularizer(double v);
double timingCost(double theta, int stage, double dt, const TimingOverlay& overlay);
double velocityCost(double theta, const Eigen::Vector3d& rdot, const QuadraticLocalFit& fit,
                    const VelocityOverlay& overlay);

// Local variable layout used by stage gradients: x(24), u(6), θ, θ̇, v, T.
inline constexpr int kLocalInput = kDynStates;
inline constexpr int kLocalTheta = kDynStates + kInputDim;
inline constexpr int kLocalThetaDot = kLocalTheta + 1;
inline constexpr int kLocalProgressInput = kLocalTheta + 2;
inline constexpr int kLocalEndTime = kLocalTheta + 3;
inline constexpr int kLocalDim = kLocalTheta + 4;  // 34
using LocalVec = Eigen::Matrix<double, kLocalDim, 1>;
using LocalMat = Eigen::Matrix<double, kLocalDim, kLocalDim>;

struct StageContext {
  int stage = 0;
  int horizon = 60;
  SystemState x;
  SystemInput u;
  ProgressState progress;
  double v = 0.0;
  bool has_input = true;  // false for the terminal stage
  const QuadraticLocalFit* fit = nullptr;
  const TimingOverlay* timing = nullptr;
  const VelocityOverlay* velocity = nullptr;

  double dt() const { return x.endTime() / horizon; }
  LocalVec pack() const;
  void unpack(const LocalVec& y);
};

/// Weighted value of each term; `total()` is the stage cost.
struct StageTerms {
  double position = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;
  double jerk = 0.0;
  double end_time = 0.0;
  double length = 0.0;
  double timing = 0.0;
  double velocity = 0.0;
  double progress = 0.0;

  double total() const {
    return position + yaw + pitch + jerk + end_time + length + timing + velocity + progress;
  }
  StageTerms& operator+=(const StageTerms& o);
};

struct StageEvaluation {
  StageTerms terms;
  LocalVec gradient = LocalVec::Zero();
  /// Gauss–Newton approximation of the Hessian (positive semi-definite).
  LocalMat hessian = LocalMat::Zero();
};

/// Stage cost, exact gradient and Gauss–Newton Hessian over the local layout.
/// Terms whose weight is zero are skipped.
StageEvaluation stageCost(const StageContext& ctx, const CostWeights& w, bool with_hessian = true);

}  // namespace camtraj
