#include "camtraj/path.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace camtraj {

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double endSlope(double h0, double h1, double d0, double d1) {
  double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (sign(m) != sign(d0)) {
    m = 0.0;
  } else if (sign(d0) != sign(d1) && std::abs(m) > 3.0 * std::abs(d0)) {
    m = 3.0 * d0;
  }
  return m;
}

double wrapToNearest(double angle, double reference) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  return angle + kTwoPi * std::round((reference - angle) / kTwoPi);
}

}  // namespace

std::vector<Keyframe> unwrapAngles(std::vector<Keyframe> keyframes) {
  for (std::size_t k = 1; k < keyframes.size(); ++k) {
    keyframes[k].yaw = wrapToNearest(keyframes[k].yaw, keyframes[k - 1].yaw);
    keyframes[k].pitch = wrapToNearest(keyframes[k].pitch, keyframes[k - 1].pitch);
  }
  return keyframes;
}

void validateKeyframes(std::span<const Keyframe> keyframes) {
  std::optional<double> last_time;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const Keyframe& kf = keyframes[k];
    const int idx = static_cast<int>(k);
    if (!kf.position.allFinite() || !std::isfinite(kf.yaw) || !std::isfinite(kf.pitch)) {
      throw KeyframeError("keyframe " + std::to_string(k) + " has a non-finite pose", idx);
    }
    if (kf.time) {
      if (!std::isfinite(*kf.time)) {
        throw KeyframeError("keyframe " + std::to_string(k) + " has a non-finite time tag", idx);
      }
      if (last_time && !(*kf.time > *last_time)) {
        throw KeyframeError("time tag of keyframe " + std::to_string(k) +
                                " does not increase over the previous tagged keyframe",
                            idx);
      }
      last_time = kf.time;
    }
    if (kf.speed && !(std::isfinite(*kf.speed) && *kf.speed >= 0.0)) {
      throw KeyframeError("keyframe " + std::to_string(k) + " has a negative or non-finite speed", idx);
    }
  }
}

Pchip::Pchip(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  const std::size_t n = knots_.size();
  if (n < 2 || values_.size() != n) throw std::invalid_argument("pchip needs at least two matching samples");
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (!(knots_[k + 1] > knots_[k])) throw std::invalid_argument("pchip knots must increase strictly");
  }

  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = knots_[k + 1] - knots_[k];
    delta[k] = (values_[k + 1] - values_[k]) / h[k];
  }
  slopes_.assign(n, 0.0);
  if (n == 2) {
    slopes_[0] = slopes_[1] = delta[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    slopes_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  slopes_[0] = endSlope(h[0], h[1], delta[0], delta[1]);
  slopes_[n - 1] = endSlope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

std::size_t Pchip::segment(double x) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  const auto idx = static_cast<std::ptrdiff_t>(it - knots_.begin()) - 1;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(knots_.size()) - 2));
}

double Pchip::value(double x) const {
  x = std::clamp(x, knots_.front(), knots_.back());
  const std::size_t k = segment(x);
  const double h = knots_[k + 1] - knots_[k];
  const double t = (x - knots_[k]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * values_[k] + (t3 - 2 * t2 + t) * h * slopes_[k] +
         (-2 * t3 + 3 * t2) * values_[k + 1] + (t3 - t2) * h * slopes_[k + 1];
}

double Pchip::derivative(double x) const {
  x = std::clamp(x, knots_.front(), knots_.back());
  const std::size_t k = segment(x);
  const double h = knots_[k + 1] - knots_[k];
  const double t = (x - knots_[k]) / h;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * values_[k] + (3 * t2 - 4 * t + 1) * h * slopes_[k] +
          (-6 * t2 + 6 * t) * values_[k + 1] + (3 * t2 - 2 * t) * h * slopes_[k + 1]) /
         h;
}

double Pchip::secondDerivative(double x) const {
  x = std::clamp(x, knots_.front(), knots_.back());
  const std::size_t k = segment(x);
  const double h = knots_[k + 1] - knots_[k];
  const double t = (x - knots_[k]) / h;
  return ((12 * t - 6) * values_[k] + (6 * t - 4) * h * slopes_[k] + (-12 * t + 6) * values_[k + 1] +
          (6 * t - 2) * h * slopes_[k + 1]) /
         (h * h);
}

ReferencePath ReferencePath::build(std::span<const Keyframe> keyframes) {
  if (keyframes.size() < 2) throw KeyframeError("at least two keyframes are required");
  validateKeyframes(keyframes);

  ReferencePath path;
  path.knots_.reserve(keyframes.size());
  path.knots_.push_back(0.0);
  for (std::size_t k = 1; k < keyframes.size(); ++k) {
    const double chord = (keyframes[k].position - keyframes[k - 1].position).norm();
    path.knots_.push_back(path.knots_.back() + std::max(chord, kMinKnotSpacing));
  }
  for (int d = 0; d < kPathDims; ++d) {
    std::vector<double> values;
    values.reserve(keyframes.size());
    for (const Keyframe& kf : keyframes) values.push_back(kf.pose()[d]);
    path.dims_[d] = Pchip(path.knots_, std::move(values));
  }
  return path;
}

PathPoint ReferencePath::eval(double theta) const {
  theta = std::clamp(theta, 0.0, length());
  PathPoint p;
  for (int d = 0; d < kPathDims; ++d) {
    p.value[d] = dims_[d].value(theta);
    p.derivative[d] = dims_[d].derivative(theta);
    p.second_derivative[d] = dims_[d].secondDerivative(theta);
  }
  const Eigen::Vector3d dr = p.derivative.head<3>();
  const double norm = dr.norm();
  p.degenerate = norm <= kTangentEpsilon;
  if (!p.degenerate) p.tangent = dr / norm;
  return p;
}

PathVec QuadraticLocalFit::value(double theta) const {
  const double s = theta - center;
  return coeffs.col(0) + s * coeffs.col(1) + s * s * coeffs.col(2);
}

PathVec QuadraticLocalFit::derivative(double theta) const {
  const double s = theta - center;
  return coeffs.col(1) + 2.0 * s * coeffs.col(2);
}

QuadraticLocalFit fitQuadraticWindow(const ReferencePath& path, double center, double halfwidth) {
  if (!(halfwidth > 0.0)) throw std::invalid_argument("fit halfwidth must be positive");
  QuadraticLocalFit fit;
  fit.center = std::clamp(center, 0.0, path.length());
  fit.lo = std::max(0.0, fit.center - halfwidth);
  fit.hi = std::min(path.length(), fit.center + halfwidth);

  // Fit in the scaled coordinate u = s / scale to keep the normal equations
  // well conditioned on very short windows.
  const double scale = std::max(fit.hi - fit.lo, 1e-12);
  Eigen::Matrix<double, kFitSamples, 3> design;
  Eigen::Matrix<double, kFitSamples, kPathDims> samples;
  for (int k = 0; k < kFitSamples; ++k) {
    const double theta = fit.lo + (fit.hi - fit.lo) * k / (kFitSamples - 1);
    const double u = (theta - fit.center) / scale;
    design.row(k) << 1.0, u, u * u;
    samples.row(k) = path.eval(theta).value.transpose();
  }
  const Eigen::Matrix<double, 3, kPathDims> scaled = design.colPivHouseholderQr().solve(samples);
  fit.coeffs.col(0) = scaled.row(0).transpose();
  fit.coeffs.col(1) = scaled.row(1).transpose() / scale;
  fit.coeffs.col(2) = scaled.row(2).transpose() / (scale * scale);
  return fit;
}

TimingOverlay TimingOverlay::fromPairs(std::vector<double> thetas, std::vector<double> times) {
  if (thetas.size() < 2 || thetas.size() != times.size()) {
    throw KeyframeError("timing reference needs at least two time-tagged keyframes");
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) {
      throw KeyframeError("time tags must increase strictly (offending tag " + std::to_string(k) + ")",
                          static_cast<int>(k));
    }
  }
  TimingOverlay overlay;
  const std::size_t n = thetas.size();
  overlay.slope_lo_ = (times[1] - times[0]) / (thetas[1] - thetas[0]);
  overlay.slope_hi_ = (times[n - 1] - times[n - 2]) / (thetas[n - 1] - thetas[n - 2]);
  overlay.spline_ = Pchip(std::move(thetas), std::move(times));
  return overlay;
}

TimingOverlay TimingOverlay::build(std::span<const Keyframe> keyframes, const ReferencePath& path) {
  if (static_cast<int>(keyframes.size()) != path.keyframeCount()) {
    throw std::invalid_argument("keyframes do not match the reference path");
  }
  std::vector<double> thetas, times;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (!keyframes[k].time) continue;
    if (!times.empty() && !(*keyframes[k].time > times.back())) {
      throw KeyframeError("time tag of keyframe " + std::to_string(k) + " is not strictly increasing",
                          static_cast<int>(k));
    }
    thetas.push_back(path.knots()[k]);
    times.push_back(*keyframes[k].time);
  }
  if (times.size() < 2) throw KeyframeError("timing reference needs at least two time-tagged keyframes");
  return fromPairs(std::move(thetas), std::move(times));
}

double TimingOverlay::value(double theta) const {
  const auto& kn = spline_.knots();
  if (theta < kn.front()) return spline_.values().front() + slope_lo_ * (theta - kn.front());
  if (theta > kn.back()) return spline_.values().back() + slope_hi_ * (theta - kn.back());
  return spline_.value(theta);
}

double TimingOverlay::derivative(double theta) const {
  const auto& kn = spline_.knots();
  if (theta < kn.front()) return slope_lo_;
  if (theta > kn.back()) return slope_hi_;
  return spline_.derivative(theta);
}

VelocityOverlay VelocityOverlay::fromPairs(std::vector<double> thetas, std::vector<double> speeds) {
  if (thetas.empty() || thetas.size() != speeds.size()) {
    throw KeyframeError("velocity reference needs at least one speed-tagged keyframe");
  }
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    if (!(speeds[k] >= 0.0)) throw KeyframeError("speed tags must be non-negative", static_cast<int>(k));
  }
  VelocityOverlay overlay;
  if (thetas.size() == 1) {
    overlay.constant_ = true;
    overlay.constant_value_ = speeds.front();
    return overlay;
  }
  overlay.spline_ = Pchip(std::move(thetas), std::move(speeds));
  return overlay;
}

VelocityOverlay VelocityOverlay::build(std::span<const Keyframe> keyframes, const ReferencePath& path) {
  if (static_cast<int>(keyframes.size()) != path.keyframeCount()) {
    throw std::invalid_argument("keyframes do not match the reference path");
  }
  std::vector<double> thetas, speeds;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (!keyframes[k].speed) continue;
    thetas.push_back(path.knots()[k]);
    speeds.push_back(*keyframes[k].speed);
  }
  return fromPairs(std::move(thetas), std::move(speeds));
}

double VelocityOverlay::value(double theta) const {
  return constant_ ? constant_value_ : spline_.value(theta);
}

double VelocityOverlay::derivative(double theta) const {
  if (constant_) return 0.0;
  const auto& kn = spline_.knots();
  if (theta < kn.front() || theta > kn.back()) return 0.0;
  return spline_.derivative(theta);
}

}  // namespace camtraj
