#include "camtraj/solver.hpp"

#include "camtraj/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace camtraj {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kStageBlock = kDynStates + 2 + kInputDim + 1;  // x, Θ, u, v

using Eigen::VectorXd;

// Global variable layout: per stage [x(24) θ θ̇ u(6) v], terminal stage [x θ θ̇], then T.
struct Layout {
  int N;
  int x(int i) const { return kStageBlock * i; }
  int theta(int i) const { return kStageBlock * i + kDynStates; }
  int thetaDot(int i) const { return theta(i) + 1; }
  int u(int i) const { return theta(i) + 2; }
  int v(int i) const { return u(i) + kInputDim; }
  int T() const { return kStageBlock * N + kDynStates + 2; }
  int size() const { return T() + 1; }

  int initRows() const { return kDynStates + 2; }
  int stepRow(int i) const { return initRows() + (kDynStates + 2) * i; }
  int terminalRow() const { return stepRow(N); }
  int rows() const { return terminalRow() + 2; }

  std::array<int, kLocalDim> localMap(int i) const {
    std::array<int, kLocalDim> map{};
    for (int k = 0; k < kDynStates; ++k) map[k] = x(i) + k;
    for (int k = 0; k < kInputDim; ++k) map[kLocalInput + k] = i < N ? u(i) + k : -1;
    map[kLocalTheta] = theta(i);
    map[kLocalThetaDot] = thetaDot(i);
    map[kLocalProgressInput] = i < N ? v(i) : -1;
    map[kLocalEndTime] = T();
    return map;
  }
};

VectorXd pack(const DecisionVariables& vars) {
  const Layout lay{vars.horizon()};
  VectorXd z(lay.size());
  for (int i = 0; i <= lay.N; ++i) {
    z.segment<kDynStates>(lay.x(i)) = vars.x[i];
    z[lay.theta(i)] = vars.progress[i].theta;
    z[lay.thetaDot(i)] = vars.progress[i].theta_dot;
    if (i < lay.N) {
      z.segment<kInputDim>(lay.u(i)) = vars.u[i];
      z[lay.v(i)] = vars.v[i];
    }
  }
  z[lay.T()] = vars.T;
  return z;
}

DecisionVariables unpack(const VectorXd& z, int N) {
  const Layout lay{N};
  DecisionVariables vars;
  vars.x.resize(N + 1);
  vars.u.resize(N);
  vars.progress.resize(N + 1);
  vars.v.resize(N);
  for (int i = 0; i <= N; ++i) {
    vars.x[i] = z.segment<kDynStates>(lay.x(i));
    vars.progress[i] = {z[lay.theta(i)], z[lay.thetaDot(i)]};
    if (i < N) {
      vars.u[i] = z.segment<kInputDim>(lay.u(i));
      vars.v[i] = z[lay.v(i)];
    }
  }
  vars.T = z[lay.T()];
  return vars;
}

StageContext stageContext(const InnerProblem& p, const VectorXd& z, int i) {
  const Layout lay{p.req->horizon};
  StageContext ctx;
  ctx.stage = i;
  ctx.horizon = lay.N;
  ctx.x.v.head<kDynStates>() = z.segment<kDynStates>(lay.x(i));
  ctx.x.setEndTime(z[lay.T()]);
  ctx.progress = {z[lay.theta(i)], z[lay.thetaDot(i)]};
  ctx.has_input = i < lay.N;
  if (ctx.has_input) {
    ctx.u.v = z.segment<kInputDim>(lay.u(i));
    ctx.v = z[lay.v(i)];
  }
  ctx.fit = &p.fits[i];
  ctx.timing = p.setup->timing ? &*p.setup->timing : nullptr;
  ctx.velocity = p.setup->velocity ? &*p.setup->velocity : nullptr;
  return ctx;
}

struct Evaluation {
  double f = 0.0;
  VectorXd grad;
  std::vector<Eigen::Triplet<double>> hess;
};

Evaluation evaluate(const InnerProblem& p, const VectorXd& z, bool derivatives) {
  const Layout lay{p.req->horizon};
  Evaluation ev;
  if (derivatives) ev.grad = VectorXd::Zero(lay.size());
  for (int i = 0; i <= lay.N; ++i) {
    const StageEvaluation se = stageCost(stageContext(p, z, i), p.req->weights, derivatives);
    ev.f += se.terms.total();
    if (!derivatives) continue;
    const auto map = lay.localMap(i);
    for (int a = 0; a < kLocalDim; ++a) {
      if (map[a] < 0) continue;
      ev.grad[map[a]] += se.gradient[a];
      for (int b = 0; b < kLocalDim; ++b) {
        if (map[b] < 0 || se.hessian(a, b) == 0.0) continue;
        ev.hess.emplace_back(map[a], map[b], se.hessian(a, b));
      }
    }
  }
  return ev;
}

// Equality constraints c(z) = 0 and, optionally, their Jacobian.
VectorXd constraints(const InnerProblem& p, const VectorXd& z, SparseMat* jac) {
  const Layout lay{p.req->horizon};
  const double T = z[lay.T()];
  const double dt = T / lay.N;
  const DiscreteSystem sys = discretize(p.req->params, dt);
  const ProgressSystem prog = progressDiscretize(dt);
  const double L = p.setup->path.length();

  VectorXd c(lay.rows());
  std::vector<Eigen::Triplet<double>> trip;
  if (jac) trip.reserve(lay.N * 200 + 64);

  c.head<kDynStates>() = z.segment<kDynStates>(lay.x(0)) - p.setup->k0.dynamic();
  c[kDynStates] = z[lay.theta(0)];
  c[kDynStates + 1] = z[lay.thetaDot(0)];
  if (jac) {
    for (int k = 0; k < kDynStates; ++k) trip.emplace_back(k, lay.x(0) + k, 1.0);
    trip.emplace_back(kDynStates, lay.theta(0), 1.0);
    trip.emplace_back(kDynStates + 1, lay.thetaDot(0), 1.0);
  }

  for (int i = 0; i < lay.N; ++i) {
    const int row = lay.stepRow(i);
    const DynVec xi = z.segment<kDynStates>(lay.x(i));
    const InputVec ui = z.segment<kInputDim>(lay.u(i));
    c.segment<kDynStates>(row) = sys.A * xi + sys.B * ui + sys.g - z.segment<kDynStates>(lay.x(i + 1));

    const Eigen::Vector2d th(z[lay.theta(i)], z[lay.thetaDot(i)]);
    const Eigen::Vector2d th_next(z[lay.theta(i + 1)], z[lay.thetaDot(i + 1)]);
    const double vi = z[lay.v(i)];
    c.segment<2>(row + kDynStates) = prog.C * th + prog.D * vi - th_next;

    if (!jac) continue;
    for (int r = 0; r < kDynStates; ++r) {
      for (int k = 0; k < kDynStates; ++k) {
        if (sys.A(r, k) != 0.0) trip.emplace_back(row + r, lay.x(i) + k, sys.A(r, k));
      }
      for (int k = 0; k < kInputDim; ++k) {
        if (sys.B(r, k) != 0.0) trip.emplace_back(row + r, lay.u(i) + k, sys.B(r, k));
      }
      trip.emplace_back(row + r, lay.x(i + 1) + r, -1.0);
    }
    const DynVec dT = sys.stepDerivative(xi, ui) / lay.N;
    for (int r = 0; r < kDynStates; ++r) {
      if (dT[r] != 0.0) trip.emplace_back(row + r, lay.T(), dT[r]);
    }
    const int pr = row + kDynStates;
    trip.emplace_back(pr, lay.theta(i), 1.0);
    trip.emplace_back(pr, lay.thetaDot(i), dt);
    trip.emplace_back(pr, lay.v(i), prog.D[0]);
    trip.emplace_back(pr, lay.theta(i + 1), -1.0);
    trip.emplace_back(pr, lay.T(), (th[1] + dt * vi) / lay.N);
    trip.emplace_back(pr + 1, lay.thetaDot(i), 1.0);
    trip.emplace_back(pr + 1, lay.v(i), dt);
    trip.emplace_back(pr + 1, lay.thetaDot(i + 1), -1.0);
    trip.emplace_back(pr + 1, lay.T(), vi / lay.N);
  }

  const int tr = lay.terminalRow();
  c[tr] = z[lay.theta(lay.N)] - L;
  c[tr + 1] = z[lay.thetaDot(lay.N)];
  if (jac) {
    trip.emplace_back(tr, lay.theta(lay.N), 1.0);
    trip.emplace_back(tr + 1, lay.thetaDot(lay.N), 1.0);
    jac->resize(lay.rows(), lay.size());
    jac->setFromTriplets(trip.begin(), trip.end());
    jac->makeCompressed();
  }
  return c;
}

void bounds(const InnerProblem& p, VectorXd& lo, VectorXd& hi) {
  const Layout lay{p.req->horizon};
  const ModelParams& mp = p.req->params;
  const double L = p.setup->path.length();
  lo = VectorXd::Constant(lay.size(), -kInf);
  hi = VectorXd::Constant(lay.size(), kInf);
  // Variables pinned by equality constraints (x_0, Θ_0, Θ_N) stay unbounded
  // so that the interior-point iterates keep a strictly feasible interior.
  for (int i = 0; i <= lay.N; ++i) {
    if (i > 0) {
      lo.segment<kDynStates>(lay.x(i)) = mp.x_min;
      hi.segment<kDynStates>(lay.x(i)) = mp.x_max;
    }
    if (i > 0 && i < lay.N) {
      lo[lay.theta(i)] = std::max(0.0, p.theta_lo[i]);
      hi[lay.theta(i)] = std::min(L, p.theta_hi[i]);
      lo[lay.thetaDot(i)] = 0.0;
      hi[lay.thetaDot(i)] = p.req->theta_dot_max;
    }
    if (i < lay.N) {
      lo.segment<kInputDim>(lay.u(i)) = mp.u_min;
      hi.segment<kInputDim>(lay.u(i)) = mp.u_max;
      lo[lay.v(i)] = -p.req->v_max;
      hi[lay.v(i)] = p.req->v_max;
    }
  }
  lo[lay.T()] = mp.t_min;
  hi[lay.T()] = mp.t_max;
}

Eigen::Vector3d chordDirection(const ProblemSetup& setup) {
  const Eigen::Vector3d d = setup.keyframes.back().position - setup.keyframes.front().position;
  return d.norm() > kTangentEpsilon ? Eigen::Vector3d(d.normalized()) : Eigen::Vector3d::UnitX();
}

// Fits centred on the current θ_i; a vanishing tangent borrows the nearest
// valid neighbour's direction, then the overall chord, then +x.
std::vector<QuadraticLocalFit> buildFits(const ProblemSetup& setup, const DecisionVariables& vars) {
  const double L = setup.path.length();
  const int n = static_cast<int>(vars.progress.size());
  std::vector<QuadraticLocalFit> fits(n);
  std::vector<bool> valid(n, false);
  for (int i = 0; i < n; ++i) {
    const double center = std::clamp(vars.progress[i].theta, 0.0, L);
    fits[i] = fitQuadraticWindow(setup.path, center, setup.fit_halfwidth);
    const Eigen::Vector3d d = fits[i].derivative(center).head<3>();
    if (d.norm() > kTangentEpsilon) {
      fits[i].fallback_tangent = d.normalized();
      valid[i] = true;
    }
  }
  const auto first = std::find(valid.begin(), valid.end(), true);
  if (first == valid.end()) {
    for (auto& f : fits) f.fallback_tangent = chordDirection(setup);
    return fits;
  }
  Eigen::Vector3d last = fits[first - valid.begin()].fallback_tangent;
  for (int i = 0; i < n; ++i) {
    if (valid[i]) last = fits[i].fallback_tangent;
    else fits[i].fallback_tangent = last;
  }
  return fits;
}

double angularExtent(const std::vector<Keyframe>& kfs) {
  double yaw = 0.0, pitch = 0.0;
  for (std::size_t k = 1; k < kfs.size(); ++k) {
    yaw += std::abs(kfs[k].yaw - kfs[k - 1].yaw);
    pitch += std::abs(kfs[k].pitch - kfs[k - 1].pitch);
  }
  return std::max(yaw, pitch);
}

}  // namespace

std::string toString(Mode mode) {
  switch (mode) {
    case Mode::kAuto: return "auto";
    case Mode::kFixedLength: return "fixed-length";
    case Mode::kSoftTimed: return "soft-timed";
    case Mode::kVelocity: return "velocity";
  }
  return "unknown";
}

Mode parseMode(const std::string& text) {
  if (text == "auto") return Mode::kAuto;
  if (text == "fixed-length") return Mode::kFixedLength;
  if (text == "soft-timed") return Mode::kSoftTimed;
  if (text == "velocity") return Mode::kVelocity;
  throw std::invalid_argument("unknown mode '" + text + "' (expected auto, fixed-length, soft-timed, velocity)");
}

std::string toString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max-iterations";
    case SolveStatus::kCancelled: return "cancelled";
    case SolveStatus::kFailed: return "failed";
  }
  return "unknown";
}

CostWeights resolveWeights(const WeightPreset& preset, Mode mode, std::optional<double> t_len) {
  CostWeights w = preset.base;
  switch (mode) {
    case Mode::kAuto:
      w.w_len = w.w_t = w.w_vel = 0.0;
      break;
    case Mode::kFixedLength:
      if (!t_len) throw std::invalid_argument("fixed-length mode needs t_len");
      w.w_end = 0.0;
      w.w_len = preset.length;
      w.t_len = t_len;
      break;
    case Mode::kSoftTimed:
      w.w_end = 0.0;
      w.w_t = preset.timing;
      w.w_j = preset.jerk_with_reference;
      break;
    case Mode::kVelocity:
      w.w_end = 0.0;
      w.w_vel = preset.velocity;
      w.w_j = preset.jerk_with_reference;
      break;
  }
  return w;
}

ProgressSystem progressDiscretize(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive and finite");
  ProgressSystem s;
  s.C << 1.0, dt, 0.0, 1.0;
  s.D << 0.5 * dt * dt, dt;
  return s;
}

SystemState defaultInitialState(const Keyframe& first, const ModelParams& params) {
  SystemState s;
  s.v.head<3>() = first.position;
  s.at(kPos, kQuadYaw) = first.yaw;
  s.at(kPos, kGimbalYaw) = 0.0;
  s.at(kPos, kGimbalPitch) = first.pitch;
  s.at(kAcc, kZ) = params.gravity;
  return s;
}

ProblemSetup prepareProblem(const SolveRequest& req) {
  if (req.keyframes.size() < 2) throw KeyframeError("at least two keyframes are required");
  if (req.horizon < 2) throw std::invalid_argument("horizon must be at least 2");
  validateKeyframes(req.keyframes);
  req.params.validate();
  req.weights.validate();

  ProblemSetup s;
  s.keyframes = unwrapAngles(req.keyframes);
  s.path = ReferencePath::build(s.keyframes);
  if (req.weights.w_t > 0.0) {
    s.timing = req.timing_override ? *req.timing_override : TimingOverlay::build(s.keyframes, s.path);
  }
  if (req.weights.w_vel > 0.0) s.velocity = VelocityOverlay::build(s.keyframes, s.path);
  s.k0 = req.initial_state ? *req.initial_state : defaultInitialState(s.keyframes.front(), req.params);
  if (!s.k0.valid()) throw std::invalid_argument("initial state is not finite");
  s.fit_halfwidth = std::max(s.path.length() / req.horizon, 0.5);
  return s;
}

DecisionVariables initialize(const SolveRequest& req, const ProblemSetup& setup) {
  const int N = req.horizon;
  const double L = setup.path.length();
  const ModelParams& mp = req.params;

  double T0 = std::max(L / req.nominal_speed, angularExtent(setup.keyframes) / req.nominal_angular_speed);
  if (req.mode == Mode::kFixedLength && req.weights.t_len) {
    T0 = *req.weights.t_len;
  } else if (setup.timing) {
    T0 = setup.timing->value(L);
  } else if (setup.velocity) {
    double mean = 0.0;
    for (int k = 0; k <= 10; ++k) mean += setup.velocity->value(L * k / 10.0) / 11.0;
    if (mean > 0.1) T0 = L / mean;
  }
  T0 = std::clamp(T0, mp.t_min, mp.t_max);
  const double dt = T0 / N;

  DecisionVariables vars;
  vars.T = T0;
  vars.x.assign(N + 1, DynVec::Zero());
  vars.u.assign(N, InputVec::Zero());
  vars.v.assign(N, 0.0);
  vars.progress.resize(N + 1);
  const double rate = std::min(L / T0, 0.9 * req.theta_dot_max);
  const double gimbal_yaw = setup.k0.at(kPos, kGimbalYaw);
  for (int i = 0; i <= N; ++i) {
    const double theta = L * i / N;
    vars.progress[i] = {theta, (i == 0 || i == N) ? 0.0 : rate};
    const PathVec p = setup.path.eval(theta).value;
    vars.x[i].segment<3>(stateIndex(kPos, kX)) = p.head<3>();
    vars.x[i][stateIndex(kPos, kQuadYaw)] = p[3] - gimbal_yaw;
    vars.x[i][stateIndex(kPos, kGimbalYaw)] = gimbal_yaw;
    vars.x[i][stateIndex(kPos, kGimbalPitch)] = p[4];
  }
  for (int order = kVel; order <= kJerk; ++order) {
    for (int i = 0; i <= N; ++i) {
      const int a = std::max(i - 1, 0), b = std::min(i + 1, N);
      const auto ahead = vars.x[b].segment<kChannels>((order - 1) * kChannels);
      const auto behind = vars.x[a].segment<kChannels>((order - 1) * kChannels);
      vars.x[i].segment<kChannels>(order * kChannels) = (ahead - behind) / ((b - a) * dt);
    }
  }
  for (int i = 0; i <= N; ++i) {
    vars.x[i][stateIndex(kAcc, kZ)] += mp.gravity;
    vars.x[i] = vars.x[i].cwiseMax(mp.x_min).cwiseMin(mp.x_max);
  }
  vars.x[0] = setup.k0.dynamic();
  return vars;
}

double evaluateObjective(const InnerProblem& problem, const DecisionVariables& vars,
                         std::vector<StageTerms>* per_stage) {
  const VectorXd z = pack(vars);
  double f = 0.0;
  if (per_stage) per_stage->clear();
  for (int i = 0; i <= vars.horizon(); ++i) {
    const StageEvaluation se = stageCost(stageContext(problem, z, i), problem.req->weights, false);
    f += se.terms.total();
    if (per_stage) per_stage->push_back(se.terms);
  }
  return f;
}

double constraintResidual(const InnerProblem& problem, const DecisionVariables& vars) {
  const VectorXd c = constraints(problem, pack(vars), nullptr);
  return c.lpNorm<Eigen::Infinity>();
}

InnerResult solveInner(const InnerProblem& problem, DecisionVariables start) {
  const SolveRequest& req = *problem.req;
  const Layout lay{req.horizon};
  if (start.horizon() != lay.N) throw std::invalid_argument("start point has the wrong horizon");

  VectorXd lo, hi;
  bounds(problem, lo, hi);
  VectorXd z = pack(start);
  z = z.cwiseMax(lo).cwiseMin(hi);

  InnerResult res;
  Evaluation ev = evaluate(problem, z, true);
  SparseMat J;
  VectorXd c = constraints(problem, z, &J);
  res.objective_start = ev.f;
  double penalty = 1.0;

  QpSettings qps;
  qps.max_iterations = 200;
  constexpr double kProximal = 1e-8;
  constexpr double kArmijo = 1e-4;
  constexpr double kMaxExtrapolation = 8.0;

  for (int it = 0; it < req.outer.max_inner; ++it) {
    res.iterations = it + 1;
    QpProblem qp;
    qp.c = ev.grad;
    qp.A = J;
    qp.b = -c;
    qp.lower = (lo - z).cwiseMin(0.0);
    qp.upper = (hi - z).cwiseMax(0.0);
    const std::size_t model_entries = ev.hess.size();
    QpResult step;
    // Nearly linear subproblems (few active cost terms) need a stronger proximal term.
    for (double proximal = kProximal; proximal <= 1e-2; proximal *= 1e3) {
      ev.hess.resize(model_entries);
      for (int k = 0; k < lay.size(); ++k) ev.hess.emplace_back(k, k, proximal);
      qp.H.resize(lay.size(), lay.size());
      qp.H.setFromTriplets(ev.hess.begin(), ev.hess.end());
      step = solveQp(qp, VectorXd::Zero(lay.size()), qps);
      if (step.status != QpStatus::kNumericalError) break;
    }
    if (step.status == QpStatus::kNumericalError) {
      res.message = "QP subproblem failed numerically";
      break;
    }
    const VectorXd& d = step.x;
    const VectorXd Hd = qp.H.selfadjointView<Eigen::Lower>() * d;
    const double gd = ev.grad.dot(d);
    const double predicted = -(gd + 0.5 * d.dot(Hd));
    res.kkt_residual = Hd.lpNorm<Eigen::Infinity>() / (1.0 + ev.grad.lpNorm<Eigen::Infinity>());
    res.constraint_residual = c.lpNorm<Eigen::Infinity>();

    const bool stationary = std::abs(predicted) <= problem.stationarity_tol * (1.0 + std::abs(ev.f));
    if (stationary) {
      // Newton steps on the constraints alone to remove the leftover second-order infeasibility.
      for (int k = 0; k < 10 && res.constraint_residual > problem.feasibility_tol; ++k) {
        qp.c.setZero();
        qp.lower = (lo - z).cwiseMin(0.0);
        qp.upper = (hi - z).cwiseMax(0.0);
        const QpResult fix = solveQp(qp, VectorXd::Zero(lay.size()), qps);
        if (fix.status == QpStatus::kNumericalError) break;
        const VectorXd z_fix = (z + fix.x).cwiseMax(lo).cwiseMin(hi);
        SparseMat J_fix;
        const VectorXd c_fix = constraints(problem, z_fix, &J_fix);
        if (!(c_fix.lpNorm<Eigen::Infinity>() < res.constraint_residual)) break;
        z = z_fix;
        c = c_fix;
        J = std::move(J_fix);
        res.constraint_residual = c.lpNorm<Eigen::Infinity>();
        qp.A = J;
        qp.b = -c;
      }
      ev = evaluate(problem, z, false);
      if (res.constraint_residual <= problem.feasibility_tol) {
        res.converged = true;
        res.message = "converged";
        break;
      }
      ev = evaluate(problem, z, true);
      continue;
    }

    penalty = std::max(penalty, 1.1 * step.y.lpNorm<Eigen::Infinity>() + 1e-3);
    const double merit0 = ev.f + penalty * c.lpNorm<1>();
    const double slope = gd - penalty * c.lpNorm<1>();

    auto meritAt = [&](double a) {
      const VectorXd zt = z + a * d;
      return evaluate(problem, zt, false).f + penalty * constraints(problem, zt, nullptr).lpNorm<1>();
    };
    double alpha = 1.0;
    bool accepted = false;
    double merit = kInf;
    for (int ls = 0; ls < 40; ++ls) {
      merit = meritAt(alpha);
      if (std::isfinite(merit) && merit <= merit0 + kArmijo * alpha * std::min(slope, 0.0)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (accepted && alpha == 1.0) {
      // Gauss-Newton tends to undershoot along flat valleys; probe longer steps
      // that stay inside the bounds.
      double a_max = kInf;
      for (int k = 0; k < lay.size(); ++k) {
        if (d[k] > 0.0) a_max = std::min(a_max, (hi[k] - z[k]) / d[k]);
        if (d[k] < 0.0) a_max = std::min(a_max, (lo[k] - z[k]) / d[k]);
      }
      for (double a = 2.0; a <= kMaxExtrapolation && a <= 0.995 * a_max; a *= 2.0) {
        const double m = meritAt(a);
        if (!(m < merit)) break;
        merit = m;
        alpha = a;
      }
    }
    const VectorXd z_trial = z + alpha * d;
    if (!accepted) {
      res.message = "line search made no progress";
      // A stalled search at a feasible, nearly stationary point is a local optimum in practice.
      res.converged = res.constraint_residual <= problem.feasibility_tol &&
                      std::abs(predicted) <= 1e2 * problem.stationarity_tol * (1.0 + std::abs(ev.f));
      break;
    }
    z = z_trial.cwiseMax(lo).cwiseMin(hi);
    ev = evaluate(problem, z, true);
    c = constraints(problem, z, &J);
    res.constraint_residual = c.lpNorm<Eigen::Infinity>();
  }
  if (res.message.empty()) res.message = "inner iteration limit reached";

  res.vars = unpack(z, lay.N);
  res.objective_end = ev.f;
  return res;
}

Trajectory solve(const SolveRequest& req) {
  const auto t_start = std::chrono::steady_clock::now();
  const ProblemSetup setup = prepareProblem(req);
  const double L = setup.path.length();
  const int N = req.horizon;

  DecisionVariables vars = initialize(req, setup);
  std::vector<QuadraticLocalFit> fits;
  SolveDiagnostics diag;
  diag.status = SolveStatus::kMaxIterations;
  diag.message = "outer iteration limit reached";

  InnerProblem problem;
  problem.req = &req;
  problem.setup = &setup;

  const double delta = req.outer.delta_rel * L;
  double last_change = kInf;
  for (int k = 1; k <= req.outer.max_outer; ++k) {
    // Inexact inner solves while θ is still moving a lot; the last ones are tight.
    const bool tight = last_change < 10.0 * delta;
    problem.stationarity_tol = tight ? req.outer.inner_tol : std::max(req.outer.inner_tol, 1e-6);
    problem.feasibility_tol = tight ? req.outer.constraint_tol : std::max(req.outer.constraint_tol, 1e-7);
    fits = buildFits(setup, vars);
    problem.fits = fits;
    problem.theta_lo.resize(N + 1);
    problem.theta_hi.resize(N + 1);
    for (int i = 0; i <= N; ++i) {
      problem.theta_lo[i] = fits[i].center - req.outer.trust_radius * setup.fit_halfwidth;
      problem.theta_hi[i] = fits[i].center + req.outer.trust_radius * setup.fit_halfwidth;
    }

    InnerResult inner = solveInner(problem, vars);
    double change = 0.0;
    for (int i = 0; i <= N; ++i) {
      change = std::max(change, std::abs(inner.vars.progress[i].theta - vars.progress[i].theta));
    }
    vars = std::move(inner.vars);

    OuterIterationInfo info;
    info.iteration = k;
    info.max_theta_change = change;
    info.objective = inner.objective_end;
    info.end_time = vars.T;
    info.inner_iterations = inner.iterations;
    info.inner_converged = inner.converged;
    info.kkt_residual = inner.kkt_residual;
    info.constraint_residual = inner.constraint_residual;
    diag.outer_log.push_back(info);
    diag.outer_iterations = k;
    diag.inner_iterations += inner.iterations;

    last_change = change;
    if (tight && inner.converged && change < delta) {
      diag.status = SolveStatus::kConverged;
      diag.message = "converged";
      break;
    }
    if (req.on_outer_iteration && !req.on_outer_iteration(info)) {
      diag.status = SolveStatus::kCancelled;
      diag.message = "cancelled";
      break;
    }
  }

  Trajectory traj;
  traj.horizon = N;
  traj.T = vars.T;
  traj.dt = vars.T / N;
  traj.path_length = L;
  traj.knots = setup.path.knots();
  traj.mode = req.mode;
  traj.weights = req.weights;
  traj.progress = vars.progress;
  traj.progress_inputs = vars.v;
  for (int i = 0; i <= N; ++i) {
    SystemState s;
    s.v.head<kDynStates>() = vars.x[i];
    s.setEndTime(vars.T);
    traj.states.push_back(s);
    if (i < N) traj.inputs.push_back(SystemInput{vars.u[i]});
  }

  diag.objective = evaluateObjective(problem, vars, &diag.stage_terms);
  for (const auto& t : diag.stage_terms) diag.total_terms += t;
  for (const auto& s : traj.states) {
    diag.stage_jerk_sq.push_back(s.jerk().squaredNorm());
    const double yaw = s.at(kJerk, kQuadYaw) + s.at(kJerk, kGimbalYaw);
    const double pitch = s.at(kJerk, kGimbalPitch);
    diag.stage_angular_jerk_sq.push_back(yaw * yaw + pitch * pitch);
  }
  diag.max_dynamics_residual = dynamicsResidual(traj, req.params);
  const ProgressSystem prog = progressDiscretize(traj.dt);
  for (int i = 0; i < N; ++i) {
    const Eigen::Vector2d a(vars.progress[i].theta, vars.progress[i].theta_dot);
    const Eigen::Vector2d b(vars.progress[i + 1].theta, vars.progress[i + 1].theta_dot);
    diag.max_progress_residual =
        std::max(diag.max_progress_residual, (prog.C * a + prog.D * vars.v[i] - b).lpNorm<Eigen::Infinity>());
  }
  diag.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  traj.diagnostics = std::move(diag);
  return traj;
}

Trajectory solveTimedBaseline(SolveRequest req, double timing_weight) {
  req.mode = Mode::kSoftTimed;
  req.weights.w_end = 0.0;
  req.weights.w_len = 0.0;
  req.weights.w_vel = 0.0;
  req.weights.w_t = timing_weight;
  return solve(req);
}

std::vector<double> passageTimes(const Trajectory& traj) {
  std::vector<double> out;
  const double tol = 1e-9 * std::max(1.0, traj.path_length);
  for (double knot : traj.knots) {
    double t = traj.T;
    for (int i = 0; i <= traj.horizon; ++i) {
      const double th = traj.progress[i].theta;
      if (th < knot - tol) continue;
      if (i == 0) {
        t = 0.0;
      } else {
        const double prev = traj.progress[i - 1].theta;
        const double frac = th > prev ? (knot - prev) / (th - prev) : 1.0;
        t = (i - 1 + std::clamp(frac, 0.0, 1.0)) * traj.dt;
      }
      break;
    }
    out.push_back(t);
  }
  return out;
}

std::vector<double> perturbTimings(const std::vector<double>& passage, double fraction) {
  if (passage.size() < 2) throw std::invalid_argument("need at least two passage times");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("perturbation fraction must be in [0, 1)");
  const std::size_t segments = passage.size() - 1;
  std::vector<double> dur(segments);
  double total = 0.0, scaled = 0.0;
  for (std::size_t k = 0; k < segments; ++k) {
    const double d = passage[k + 1] - passage[k];
    total += d;
    dur[k] = d * (segments == 1 || k % 2 == 1 ? 1.0 - fraction : 1.0 + fraction);
    scaled += dur[k];
  }
  const double rescale = segments == 1 ? 1.0 : total / scaled;
  std::vector<double> out{passage.front()};
  for (double d : dur) out.push_back(out.back() + d * rescale);
  return out;
}

std::vector<Keyframe> withTimeTags(std::vector<Keyframe> keyframes, const std::vector<double>& times) {
  if (times.size() != keyframes.size()) throw std::invalid_argument("one time tag per keyframe is required");
  for (std::size_t k = 0; k < keyframes.size(); ++k) keyframes[k].time = times[k];
  return keyframes;
}

double dynamicsResidual(const Trajectory& traj, const ModelParams& params) {
  const DiscreteSystem sys = discretize(params, traj.dt);
  double worst = 0.0;
  for (int i = 0; i < traj.horizon; ++i) {
    const SystemState next = propagate(sys, traj.states[i], traj.inputs[i]);
    const double r = (next.dynamic() - traj.states[i + 1].dynamic()).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, r);
  }
  return worst;
}

double objectiveUnder(const Trajectory& traj, const SolveRequest& req, const CostWeights& weights) {
  SolveRequest r = req;
  r.weights = weights;
  r.horizon = traj.horizon;
  const ProblemSetup setup = prepareProblem(r);
  DecisionVariables vars;
  vars.T = traj.T;
  vars.progress = traj.progress;
  vars.v = traj.progress_inputs;
  for (const auto& s : traj.states) vars.x.push_back(s.dynamic());
  for (const auto& u : traj.inputs) vars.u.push_back(u.v);
  const std::vector<QuadraticLocalFit> fits = buildFits(setup, vars);
  InnerProblem problem;
  problem.req = &r;
  problem.setup = &setup;
  problem.fits = fits;
  return evaluateObjective(problem, vars);
}

}  // namespace camtraj
