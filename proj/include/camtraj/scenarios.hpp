#pragma once

#include "camtraj/path.hpp"

#include <string>
#include <vector>

namespace camtraj {

struct CannedScenario {
  std::string name;
  std::string description;
  std::vector<Keyframe> keyframes;
};

/// Built-in shots used by the acceptance suite and `camtraj scenarios`.
/// Each one moves at least one camera angle.
std::vector<CannedScenario> cannedScenarios();

/// Throws std::invalid_argument for unknown names.
CannedScenario cannedScenario(const std::string& name);

}  // namespace camtraj
