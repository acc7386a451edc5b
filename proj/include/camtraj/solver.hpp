#pragma once

#include "camtraj/costs.hpp"
#include "camtraj/model.hpp"
#include "camtraj/path.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace camtraj {

enum class Mode { kAuto, kFixedLength, kSoftTimed, kVelocity };

std::string toString(Mode mode);
/// Accepts auto, fixed-length, soft-timed, velocity.
Mode parseMode(const std::string& text);

/// Weights for `mode` derived from a preset. Fixed-length requires t_len.
CostWeights resolveWeights(const WeightPreset& preset, Mode mode, std::optional<double> t_len = {});

struct OuterLoopSettings {
  double delta_rel = 1e-3;  // θ convergence threshold as a fraction of L
  int max_outer = 25;
  int max_inner = 200;
  double inner_tol = 1e-9;  // QP model decrease relative to 1 + |f|
  double constraint_tol = 1e-9;
  double trust_radius = 4.0;  // θ step limit per outer iteration, in fit halfwidths
};

struct OuterIterationInfo {
  int iteration = 0;
  double max_theta_change = 0.0;
  double objective = 0.0;
  double end_time = 0.0;
  int inner_iterations = 0;
  bool inner_converged = false;
  double kkt_residual = 0.0;
  double constraint_residual = 0.0;
};

struct SolveRequest {
  std::vector<Keyframe> keyframes;  // raw; angles are unwrapped by the solver
  ModelParams params = ModelParams::defaults();
  CostWeights weights;
  Mode mode = Mode::kAuto;
  /// Initial state k_0; defaults to hovering at the first keyframe.
  std::optional<SystemState> initial_state;
  /// Explicit timing reference, overriding keyframe time tags when set.
  std::optional<TimingOverlay> timing_override;
  int horizon = 60;
  double nominal_speed = 3.0;          // m/s, for the initial T
  double nominal_angular_speed = 0.5;  // rad/s, for the initial T of rotation-dominated shots
  double v_max = 10.0;
  double theta_dot_max = 8.0;
  OuterLoopSettings outer;
  /// Called at every outer-iteration boundary; returning false cancels the solve.
  std::function<bool(const OuterIterationInfo&)> on_outer_iteration;
};

/// Progress double integrator Θ_{i+1} = C Θ_i + D v_i.
struct ProgressSystem {
  Eigen::Matrix2d C;
  Eigen::Vector2d D;
};
ProgressSystem progressDiscretize(double dt);

/// Optimizer unknowns for one horizon.
struct DecisionVariables {
  std::vector<DynVec> x;                // N+1
  std::vector<InputVec> u;              // N
  std::vector<ProgressState> progress;  // N+1
  std::vector<double> v;                // N
  double T = 1.0;

  int horizon() const { return static_cast<int>(u.size()); }
};

/// Resolved, immutable problem data shared by the inner and outer loops.
struct ProblemSetup {
  std::vector<Keyframe> keyframes;  // unwrapped
  ReferencePath path;
  std::optional<TimingOverlay> timing;
  std::optional<VelocityOverlay> velocity;
  SystemState k0;
  double fit_halfwidth = 0.5;
};

ProblemSetup prepareProblem(const SolveRequest& req);
SystemState defaultInitialState(const Keyframe& first, const ModelParams& params);

DecisionVariables initialize(const SolveRequest& req, const ProblemSetup& setup);

struct InnerProblem {
  const SolveRequest* req = nullptr;
  const ProblemSetup* setup = nullptr;
  std::span<const QuadraticLocalFit> fits;  // N+1
  std::vector<double> theta_lo;             // per-stage θ trust region
  std::vector<double> theta_hi;
  double stationarity_tol = 1e-6;  // QP model decrease relative to 1 + |f|
  double feasibility_tol = 1e-9;   // ‖c‖∞
};

struct InnerResult {
  DecisionVariables vars;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;         // scaled stationarity
  double constraint_residual = 0.0;  // ‖c‖∞
  double objective_start = 0.0;
  double objective_end = 0.0;
  std::string message;
};

/// SQP on the fixed-fit problem. The discretization is re-derived from T at
/// every iterate, so T trades off against the dynamics inside the solve.
InnerResult solveInner(const InnerProblem& problem, DecisionVariables start);

/// Sum of stage costs of `vars` under the given fits.
double evaluateObjective(const InnerProblem& problem, const DecisionVariables& vars,
                         std::vector<StageTerms>* per_stage = nullptr);

/// Equality-constraint residual ‖c‖∞ (initial state, dynamics, progress, terminal).
double constraintResidual(const InnerProblem& problem, const DecisionVariables& vars);

enum class SolveStatus { kConverged, kMaxIterations, kCancelled, kFailed };
std::string toString(SolveStatus status);

struct SolveDiagnostics {
  SolveStatus status = SolveStatus::kFailed;
  std::string message;
  int outer_iterations = 0;
  int inner_iterations = 0;
  std::vector<OuterIterationInfo> outer_log;
  std::vector<StageTerms> stage_terms;  // N+1, final fits
  StageTerms total_terms;
  double objective = 0.0;
  std::vector<double> stage_jerk_sq;          // ‖r⃛‖², m²/s⁶
  std::vector<double> stage_angular_jerk_sq;  // ‖(ψ⃛_q+ψ⃛_g, φ⃛_g)‖², rad²/s⁶
  double max_dynamics_residual = 0.0;
  double max_progress_residual = 0.0;
  double solve_seconds = 0.0;
};

struct Trajectory {
  std::vector<SystemState> states;     // N+1, each carrying T
  std::vector<SystemInput> inputs;     // N
  std::vector<ProgressState> progress; // N+1
  std::vector<double> progress_inputs; // N
  double dt = 0.0;
  double T = 0.0;
  int horizon = 0;
  double path_length = 0.0;
  std::vector<double> knots;  // θ of each keyframe
  Mode mode = Mode::kAuto;
  CostWeights weights;
  SolveDiagnostics diagnostics;

  bool converged() const { return diagnostics.status == SolveStatus::kConverged; }
};

/// Full outer loop: unwrap, build path, initialize, then alternate refitting
/// the local quadratics at the current θ_i with inner solves until θ settles.
Trajectory solve(const SolveRequest& req);

/// Soft-timed solve with a dominating timing weight.
Trajectory solveTimedBaseline(SolveRequest req, double timing_weight = kQuasiHardTimingWeight);

/// Time at which θ first reaches each keyframe knot, interpolated linearly
/// between the bracketing stages.
std::vector<double> passageTimes(const Trajectory& traj);

/// User-style timing tags derived from passage times: segment k is stretched
/// by (1 + fraction) when k is even and shrunk by (1 - fraction) when odd,
/// then rescaled to the original total. A single segment is shrunk.
std::vector<double> perturbTimings(const std::vector<double>& passage, double fraction);

/// Copy of `keyframes` with time tags set from `times`.
std::vector<Keyframe> withTimeTags(std::vector<Keyframe> keyframes, const std::vector<double>& times);

/// Dynamics residual max_i ‖x_{i+1} − (A x_i + B u_i + g)‖∞ at the trajectory's Δt.
double dynamicsResidual(const Trajectory& traj, const ModelParams& params);

/// Auto-mode objective of `traj` recomputed under `weights` with fits centred on its own θ.
double objectiveUnder(const Trajectory& traj, const SolveRequest& req, const CostWeights& weights);

}  // namespace camtraj
