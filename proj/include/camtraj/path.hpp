#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace camtraj {

inline constexpr int kPathDims = 5;  // x, y, z, camera yaw, camera pitch
using PathVec = Eigen::Matrix<double, kPathDims, 1>;

inline constexpr double kMinKnotSpacing = 1.0e-3;
inline constexpr double kTangentEpsilon = 1.0e-9;

struct Keyframe {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;    // radians
  double pitch = 0.0;  // radians
  std::optional<double> time;   // seconds
  std::optional<double> speed;  // m/s

  PathVec pose() const {
    PathVec p;
    p << position, yaw, pitch;
    return p;
  }
};

/// Raised for malformed keyframe input. `index` names the offending keyframe when known.
class KeyframeError : public std::invalid_argument {
 public:
  KeyframeError(const std::string& what, int index = -1)
      : std::invalid_argument(what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

/// Shifts every yaw/pitch after the first by a multiple of 2π so that it lies
/// closest to the previous (already shifted) keyframe.
std::vector<Keyframe> unwrapAngles(std::vector<Keyframe> keyframes);

/// Checks finiteness, tag ordering and non-negative speeds.
void validateKeyframes(std::span<const Keyframe> keyframes);

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes with
/// the weighted harmonic mean for interior knots). Outside the knot range the
/// end cubic is not extrapolated; callers clamp.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> knots, std::vector<double> values);

  double value(double x) const;
  double derivative(double x) const;
  double secondDerivative(double x) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& slopes() const { return slopes_; }

 private:
  std::size_t segment(double x) const;

  std::vector<double> knots_;
  std::vector<double> values_;
  std::vector<double> slopes_;
};

struct PathPoint {
  PathVec value;
  PathVec derivative;
  PathVec second_derivative;
  Eigen::Vector3d tangent = Eigen::Vector3d::UnitX();  // unit, valid iff !degenerate
  bool degenerate = false;
};

/// Chord-length parameterised reference f_d(θ) = [r_d, ψ_d, φ_d], θ ∈ [0, L].
class ReferencePath {
 public:
  /// Keyframes are used as given; call unwrapAngles first for raw input.
  static ReferencePath build(std::span<const Keyframe> keyframes);

  double length() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  int keyframeCount() const { return static_cast<int>(knots_.size()); }

  /// θ is clamped to [0, L].
  PathPoint eval(double theta) const;

 private:
  std::vector<double> knots_;
  std::array<Pchip, kPathDims> dims_;
};

/// Least-squares quadratic in s = θ - center for each path dimension.
struct QuadraticLocalFit {
  double center = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  // coeffs.col(k) multiplies s^k.
  Eigen::Matrix<double, kPathDims, 3> coeffs = Eigen::Matrix<double, kPathDims, 3>::Zero();
  // Direction used by lag/contour splitting when the positional tangent vanishes.
  Eigen::Vector3d fallback_tangent = Eigen::Vector3d::UnitX();

  PathVec value(double theta) const;
  PathVec derivative(double theta) const;
  PathVec secondDerivative() const { return 2.0 * coeffs.col(2); }
  bool contains(double theta) const { return theta >= lo && theta <= hi; }
};

inline constexpr int kFitSamples = 21;

QuadraticLocalFit fitQuadraticWindow(const ReferencePath& path, double center, double halfwidth);

/// Reference time t_d(θ) through the tagged keyframes.
class TimingOverlay {
 public:
  static TimingOverlay build(std::span<const Keyframe> keyframes, const ReferencePath& path);
  /// From explicit (θ, t) pairs; θ and t must both increase strictly.
  static TimingOverlay fromPairs(std::vector<double> thetas, std::vector<double> times);

  double value(double theta) const;
  double derivative(double theta) const;
  const Pchip& spline() const { return spline_; }

 private:
  Pchip spline_;
  double slope_lo_ = 0.0;
  double slope_hi_ = 0.0;
};

/// Reference speed v_d(θ) through the speed-tagged keyframes.
class VelocityOverlay {
 public:
  static VelocityOverlay build(std::span<const Keyframe> keyframes, const ReferencePath& path);
  static VelocityOverlay fromPairs(std::vector<double> thetas, std::vector<double> speeds);

  double value(double theta) const;
  double derivative(double theta) const;

 private:
  Pchip spline_;
  bool constant_ = false;
  double constant_value_ = 0.0;
};

}  // namespace camtraj
