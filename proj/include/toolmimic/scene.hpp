#pragma once

#include <map>
#include <string>

#include "toolmimic/geometry.hpp"
#include "toolmimic/trajectory.hpp"

namespace toolmimic {

/// Bounds [a, b) for auxiliary scene parameters sampled uniformly.
struct ParamBounds {
  std::map<std::string, std::pair<double, double>> bounds;

  void validate() const {
    for (const auto& [name, ab] : bounds) {
      if (!(ab.first < ab.second)) {
        throw std::invalid_argument("parameter '" + name +
                                    "' has empty bounds");
      }
    }
  }
};

/// One sampled configuration of the simulated scene: object placements,
/// the trajectory alignment transform, and auxiliary parameters.
struct SceneParams {
  std::map<std::string, Vec3> object_positions;
  std::map<std::string, double> object_yaws;
  AlignmentTransform transform;
  std::map<std::string, double> aux;
};

}  // namespace toolmimic
