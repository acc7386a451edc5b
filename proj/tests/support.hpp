#pragma once

#include "camtraj/scenarios.hpp"
#include "camtraj/solver.hpp"

#include <random>

namespace camtraj::testing {

inline SolveRequest autoRequest(const std::vector<Keyframe>& keyframes) {
  SolveRequest req;
  req.keyframes = keyframes;
  req.weights = resolveWeights(surveyPreset(), Mode::kAuto);
  return req;
}

inline SolveRequest autoRequest(const std::string& canned) { return autoRequest(cannedScenario(canned).keyframes); }

inline Keyframe keyframe(double x, double y, double z, double yaw = 0.0, double pitch = 0.0) {
  Keyframe k;
  k.position = {x, y, z};
  k.yaw = yaw;
  k.pitch = pitch;
  return k;
}

inline double relativeError(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

template <typename V>
double relativeError(const V& a, const V& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace camtraj::testing
