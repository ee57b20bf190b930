#pragma once

// Pinhole projection of LiDAR points and Z-buffered depth rasterization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/point_cloud.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::size_t width = 1;
  std::size_t height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
      throw ValidationError("intrinsics: focal lengths must be positive (fx=" + std::to_string(fx) +
                            ", fy=" + std::to_string(fy) + ")");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) throw ValidationError("intrinsics: non-finite principal point");
    if (width < 1 || height < 1) throw ValidationError("intrinsics: image size must be at least 1x1");
  }

  /// Intrinsics of the same camera after resampling the image to `w` x `h`.
  CameraIntrinsics resized(std::size_t w, std::size_t h) const {
    const double sx = static_cast<double>(w) / static_cast<double>(width);
    const double sy = static_cast<double>(h) / static_cast<double>(height);
    // Pixel centers sit on integer coordinates, so the scaling pivots on -0.5.
    return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5, w, h};
  }
};

/// Row-major height x width grid of camera-frame depths in meters; 0 = no return.
struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> depth;

  DepthImage() = default;
  DepthImage(std::size_t w, std::size_t h) : width(w), height(h), depth(w * h, 0.0) {}

  double at(std::size_t u, std::size_t v) const { return depth[v * width + u]; }
  double& at(std::size_t u, std::size_t v) { return depth[v * width + u]; }

  std::size_t nonzero_count() const {
    return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](double d) { return d > 0.0; }));
  }

  /// Fraction of pixels holding a LiDAR return.
  double fill_ratio() const {
    return depth.empty() ? 0.0 : static_cast<double>(nonzero_count()) / static_cast<double>(depth.size());
  }

  bool operator==(const DepthImage&) const = default;
};

struct ProjectedPoint {
  std::size_t u = 0;
  std::size_t v = 0;
  double depth = 0.0;
  std::size_t index = 0;  ///< position in the source cloud
};

/// Round to nearest, ties toward +inf.
inline double round_half_up(double x) { return std::floor(x + 0.5); }

/// Projects every point through K [R | t]. Points with camera Z <= 0 or whose
/// rounded pixel falls outside the image are dropped.
inline std::vector<ProjectedPoint> project_points(const PointCloud& cloud, const Transform& extrinsic,
                                                  const CameraIntrinsics& k) {
  k.validate();
  std::vector<ProjectedPoint> out;
  out.reserve(cloud.size());
  const double w = static_cast<double>(k.width), h = static_cast<double>(k.height);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = extrinsic * cloud.points[i];
    const double z = pc.z();
    if (!(z > 0.0)) continue;
    const double u = round_half_up(k.fx * pc.x() / z + k.cx);
    const double v = round_half_up(k.fy * pc.y() / z + k.cy);
    if (!(u >= 0.0 && u < w && v >= 0.0 && v < h)) continue;
    out.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v), z, i});
  }
  return out;
}

/// Z-buffer: each pixel keeps the smallest depth that lands on it. The result
/// is independent of point order.
inline DepthImage render_depth(const PointCloud& cloud, const Transform& extrinsic, const CameraIntrinsics& k) {
  DepthImage img(k.width, k.height);
  for (const ProjectedPoint& p : project_points(cloud, extrinsic, k)) {
    double& d = img.at(p.u, p.v);
    if (d == 0.0 || p.depth < d) d = p.depth;
  }
  return img;
}

inline constexpr double kDefaultMaxDepth = 80.0;

/// (1, H, W) tensor of min(depth, max_depth) / max_depth; empty pixels stay 0.
inline Tensor normalize_depth(const DepthImage& d, double max_depth = kDefaultMaxDepth) {
  if (!(max_depth > 0.0)) throw ConfigError("normalize_depth: max_depth must be positive, got " + std::to_string(max_depth));
  std::vector<double> values(d.depth.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::min(d.depth[i], max_depth) / max_depth;
  return {Shape{1, d.height, d.width}, std::move(values)};
}

}  // namespace lccal
