#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lccal/error.hpp"

namespace lccal {

using Vec3 = Eigen::Vector3d;

/// LiDAR returns in meters, LiDAR frame. `intensity` is either empty or one
/// reflectance value in [0, 1] per point.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> intensity;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  bool has_intensity() const { return !intensity.empty(); }

  void validate() const {
    if (!intensity.empty() && intensity.size() != points.size()) {
      throw ValidationError("point cloud: " + std::to_string(intensity.size()) + " intensities for " +
                            std::to_string(points.size()) + " points");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].allFinite()) {
        throw ValidationError("point cloud: non-finite coordinate at index " + std::to_string(i));
      }
    }
  }
};

}  // namespace lccal
