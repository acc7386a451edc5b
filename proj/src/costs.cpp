#include "camtraj/costs.hpp"

#include <cmath>
#include <stdexcept>

namespace camtraj {

void CostWeights::validate() const {
  const double all[] = {w_p, w_psi, w_phi, w_j, w_end, w_len, w_t, w_vel, w_prog};
  for (double w : all) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and non-negative");
  }
  if (!(Q[0] > 0.0 && Q[1] > 0.0)) throw std::invalid_argument("Q must be positive definite");
  if (w_len > 0.0 && w_end > 0.0) {
    throw std::invalid_argument("w_end must be zero when the length cost is active");
  }
  if (w_len > 0.0 && !t_len) throw std::invalid_argument("length cost needs t_len");
  if (t_len && !(*t_len > 0.0)) throw std::invalid_argument("t_len must be positive");
}

bool CostWeights::set(const std::string& name, double value) {
  if (name == "w_p") w_p = value;
  else if (name == "q_lag") Q[0] = value;
  else if (name == "q_contour") Q[1] = value;
  else if (name == "w_psi") w_psi = value;
  else if (name == "w_phi") w_phi = value;
  else if (name == "w_j") w_j = value;
  else if (name == "w_end") w_end = value;
  else if (name == "w_len") w_len = value;
  else if (name == "w_t") w_t = value;
  else if (name == "w_vel") w_vel = value;
  else if (name == "w_prog") w_prog = value;
  else if (name == "t_len") t_len = value;
  else return false;
  return true;
}

WeightPreset surveyPreset() {
  WeightPreset p;
  p.name = "survey";
  p.base = CostWeights{};
  p.jerk_with_reference = 10.0;
  return p;
}

WeightPreset interactivePreset() {
  WeightPreset p;
  p.name = "interactive";
  p.base = CostWeights{};
  p.base.w_j = 100.0;
  p.jerk_with_reference = 10.0;
  return p;
}

WeightPreset presetByName(const std::string& name) {
  if (name == "survey") return surveyPreset();
  if (name == "interactive") return interactivePreset();
  throw std::invalid_argument("unknown weight preset '" + name + "'");
}

StageTerms& StageTerms::operator+=(const StageTerms& o) {
  position += o.position;
  yaw += o.yaw;
  pitch += o.pitch;
  jerk += o.jerk;
  end_time += o.end_time;
  length += o.length;
  timing += o.timing;
  velocity += o.velocity;
  progress += o.progress;
  return *this;
}

namespace {

struct TangentInfo {
  Eigen::Vector3d n;
  Eigen::Vector3d dn;  // dn/dθ
  double speed;        // ‖r_d'(θ)‖
  bool degenerate;
};

TangentInfo tangentAt(double theta, const QuadraticLocalFit& fit) {
  const Eigen::Vector3d d1 = fit.derivative(theta).head<3>();
  const Eigen::Vector3d d2 = fit.secondDerivative().head<3>();
  const double m = d1.norm();
  if (m <= kTangentEpsilon) {
    return {fit.fallback_tangent.normalized(), Eigen::Vector3d::Zero(), m, true};
  }
  const Eigen::Vector3d n = d1 / m;
  const Eigen::Vector3d dn = (d2 - n * n.dot(d2)) / m;
  return {n, dn, m, false};
}

}  // namespace

LagContour lagContourError(double theta, const Eigen::Vector3d& r, const QuadraticLocalFit& fit) {
  const TangentInfo t = tangentAt(theta, fit);
  LagContour out;
  out.e = fit.value(theta).head<3>() - r;
  out.n = t.n;
  out.degenerate = t.degenerate;
  out.lag = out.e.dot(out.n);
  out.contour = (out.e - out.lag * out.n).norm();
  return out;
}

double positionCost(double theta, const Eigen::Vector3d& r, const QuadraticLocalFit& fit,
                    const Eigen::Vector2d& Q) {
  const LagContour lc = lagContourError(theta, r, fit);
  return Q[0] * lc.lag * lc.lag + Q[1] * lc.contour * lc.contour;
}

double yawCost(double theta, double psi_q, double psi_g, const QuadraticLocalFit& fit) {
  const double d = fit.value(theta)[3] - (psi_q + psi_g);
  return d * d;
}

double pitchCost(double theta, double phi_g, const QuadraticLocalFit& fit) {
  const double d = fit.value(theta)[4] - phi_g;
  return d * d;
}

double endTimeCost(double T) { return T; }

double lengthCost(double T, double t_len) { return (t_len - T) * (t_len - T); }

double jerkCost(const SystemState& x) {
  return x.v.segment<kChannels>(stateIndex(kJerk, 0)).squaredNorm();
}

double progressRegularizer(double v) { return v * v; }

double timingCost(double theta, int stage, double dt, const TimingOverlay& overlay) {
  const double d = overlay.value(theta) - stage * dt;
  return d * d;
}

double velocityCost(double theta, const Eigen::Vector3d& rdot, const QuadraticLocalFit& fit,
                    const VelocityOverlay& overlay) {
  const TangentInfo t = tangentAt(theta, fit);
  const double d = overlay.value(theta) - rdot.dot(t.n);
  return d * d;
}

LocalVec StageContext::pack() const {
  LocalVec y;
  y.head<kDynStates>() = x.v.head<kDynStates>();
  y.segment<kInputDim>(kLocalInput) = u.v;
  y[kLocalTheta] = progress.theta;
  y[kLocalThetaDot] = progress.theta_dot;
  y[kLocalProgressInput] = v;
  y[kLocalEndTime] = x.endTime();
  return y;
}

void StageContext::unpack(const LocalVec& y) {
  x.v.head<kDynStates>() = y.head<kDynStates>();
  x.setEndTime(y[kLocalEndTime]);
  u.v = y.segment<kInputDim>(kLocalInput);
  progress.theta = y[kLocalTheta];
  progress.theta_dot = y[kLocalThetaDot];
  v = y[kLocalProgressInput];
}

StageEvaluation stageCost(const StageContext& ctx, const CostWeights& w, bool with_hessian) {
  constexpr int kMaxResiduals = 16;
  Eigen::Matrix<double, kMaxResiduals, 1> res;
  Eigen::Matrix<double, kMaxResiduals, kLocalDim> jac;
  jac.setZero();
  int m = 0;

  StageEvaluation out;
  const double theta = ctx.progress.theta;
  const double T = ctx.x.endTime();

  const bool need_fit = w.w_p > 0.0 || w.w_psi > 0.0 || w.w_phi > 0.0 || w.w_vel > 0.0;
  if (need_fit && ctx.fit == nullptr) throw std::invalid_argument("stage context lacks a path fit");

  if (w.w_p > 0.0) {
    const TangentInfo t = tangentAt(theta, *ctx.fit);
    const Eigen::Vector3d r = ctx.x.position();
    const Eigen::Vector3d e = ctx.fit->value(theta).head<3>() - r;
    const double lag = e.dot(t.n);
    const Eigen::Vector3d c = e - lag * t.n;
    const double e_dn = e.dot(t.dn);
    const double sl = std::sqrt(w.w_p * w.Q[0]);
    const double sc = std::sqrt(w.w_p * w.Q[1]);

    res[m] = sl * lag;
    jac.block<1, 3>(m, stateIndex(kPos, kX)) = -sl * t.n.transpose();
    jac(m, kLocalTheta) = sl * (t.speed + e_dn);
    ++m;

    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - t.n * t.n.transpose();
    res.segment<3>(m) = sc * c;
    jac.block<3, 3>(m, stateIndex(kPos, kX)) = -sc * P;
    jac.block<3, 1>(m, kLocalTheta) = sc * (-e_dn * t.n - lag * t.dn);
    m += 3;
    out.terms.position = w.w_p * (w.Q[0] * lag * lag + w.Q[1] * c.squaredNorm());
  }

  if (w.w_psi > 0.0) {
    const double s = std::sqrt(w.w_psi);
    const double d = ctx.fit->value(theta)[3] - ctx.x.at(kPos, kQuadYaw) - ctx.x.at(kPos, kGimbalYaw);
    res[m] = s * d;
    jac(m, stateIndex(kPos, kQuadYaw)) = -s;
    jac(m, stateIndex(kPos, kGimbalYaw)) = -s;
    jac(m, kLocalTheta) = s * ctx.fit->derivative(theta)[3];
    ++m;
    out.terms.yaw = w.w_psi * d * d;
  }

  if (w.w_phi > 0.0) {
    const double s = std::sqrt(w.w_phi);
    const double d = ctx.fit->value(theta)[4] - ctx.x.at(kPos, kGimbalPitch);
    res[m] = s * d;
    jac(m, stateIndex(kPos, kGimbalPitch)) = -s;
    jac(m, kLocalTheta) = s * ctx.fit->derivative(theta)[4];
    ++m;
    out.terms.pitch = w.w_phi * d * d;
  }

  if (w.w_j > 0.0) {
    const double s = std::sqrt(w.w_j);
    for (int c = 0; c < kChannels; ++c) {
      res[m] = s * ctx.x.at(kJerk, c);
      jac(m, stateIndex(kJerk, c)) = s;
      ++m;
    }
    out.terms.jerk = w.w_j * jerkCost(ctx.x);
  }

  if (w.w_end > 0.0) {
    out.terms.end_time = w.w_end * endTimeCost(T);
    out.gradient[kLocalEndTime] += w.w_end;
  }

  if (w.w_len > 0.0) {
    const double s = std::sqrt(w.w_len);
    const double t_len = w.t_len.value_or(0.0);
    res[m] = s * (t_len - T);
    jac(m, kLocalEndTime) = -s;
    ++m;
    out.terms.length = w.w_len * lengthCost(T, t_len);
  }

  if (w.w_t > 0.0 && ctx.timing != nullptr) {
    const double s = std::sqrt(w.w_t);
    const double elapsed = ctx.stage * T / ctx.horizon;
    const double d = ctx.timing->value(theta) - elapsed;
    res[m] = s * d;
    jac(m, kLocalTheta) = s * ctx.timing->derivative(theta);
    jac(m, kLocalEndTime) = -s * static_cast<double>(ctx.stage) / ctx.horizon;
    ++m;
    out.terms.timing = w.w_t * d * d;
  }

  if (w.w_vel > 0.0 && ctx.velocity != nullptr) {
    const double s = std::sqrt(w.w_vel);
    const TangentInfo t = tangentAt(theta, *ctx.fit);
    const Eigen::Vector3d rdot = ctx.x.velocity();
    const double d = ctx.velocity->value(theta) - rdot.dot(t.n);
    res[m] = s * d;
    jac.block<1, 3>(m, stateIndex(kVel, kX)) = -s * t.n.transpose();
    jac(m, kLocalTheta) = s * (ctx.velocity->derivative(theta) - rdot.dot(t.dn));
    ++m;
    out.terms.velocity = w.w_vel * d * d;
  }

  if (w.w_prog > 0.0 && ctx.has_input) {
    const double s = std::sqrt(w.w_prog);
    res[m] = s * ctx.v;
    jac(m, kLocalProgressInput) = s;
    ++m;
    out.terms.progress = w.w_prog * progressRegularizer(ctx.v);
  }

  if (m > 0) {
    const auto J = jac.topRows(m);
    out.gradient.noalias() += 2.0 * J.transpose() * res.head(m);
    if (with_hessian) out.hessian.noalias() = 2.0 * J.transpose() * J;
  }
  return out;
}

}  // namespace camtraj
