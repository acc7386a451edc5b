#include "camtraj/scenarios.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace camtraj {

namespace {

Keyframe key(double x, double y, double z, double yaw_deg, double pitch_deg) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  Keyframe k;
  k.position = {x, y, z};
  k.yaw = yaw_deg * kDeg;
  k.pitch = pitch_deg * kDeg;
  return k;
}

}  // namespace

std::vector<CannedScenario> cannedScenarios() {
  std::vector<CannedScenario> out;
  out.push_back({"flyby", "fly past a subject and turn around to keep it framed (180 deg yaw, last two keys close)",
                 {key(0, 0, 2, 0, -10), key(10, 5, 3, 60, -10), key(18, 6, 3, 150, -15), key(20, 7, 3, 180, -20)}});
  out.push_back({"line-tilt", "straight dolly while tilting the gimbal down",
                 {key(0, 0, 3, 0, -5), key(10, 0, 3, 0, -15), key(20, 0, 3, 0, -30)}});
  out.push_back({"corner", "L-shaped path with a 90 deg heading change",
                 {key(0, 0, 2, 0, -10), key(10, 0, 2, 0, -10), key(10, 10, 2, 90, -10)}});
  {
    CannedScenario orbit{"orbit-climb", "climbing half orbit around a point of interest", {}};
    const double r = 8.0;
    for (int k = 0; k <= 4; ++k) {
      const double a = std::numbers::pi * k / 4.0;
      const double z = 2.0 + k;
      const double yaw_deg = a * 180.0 / std::numbers::pi + 180.0;
      const double pitch_deg = -std::atan2(z, r) * 180.0 / std::numbers::pi;
      orbit.keyframes.push_back(key(r * std::cos(a), r * std::sin(a), z, yaw_deg, pitch_deg));
    }
    out.push_back(orbit);
  }
  out.push_back({"hover-pan", "pan and tilt in place (no translation)",
                 {key(0, 0, 3, 0, 0), key(0, 0, 3, 60, -20), key(0, 0, 3, 120, -45)}});
  out.push_back({"zigzag", "lateral weave with alternating heading",
                 {key(0, 0, 2, 0, -10), key(6, 4, 2.5, 30, -15), key(12, -4, 3, -30, -15), key(18, 4, 3, 30, -10),
                  key(24, 0, 3, 0, -10)}});
  return out;
}

CannedScenario cannedScenario(const std::string& name) {
  for (auto& s : cannedScenarios()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown canned scenario '" + name + "'");
}

}  // namespace camtraj
