#pragma once

// Random inputs shared by the unit tests, the acceptance checks and `lccal selftest`.

#include <cmath>
#include <random>

#include "lccal/geometry.hpp"
#include "lccal/point_cloud.hpp"
#include "lccal/tensor.hpp"

namespace lccal::oracle {

/// Uniform on SO(3) after normalization (isotropic Gaussian 4-vector).
inline Quaternion random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {n(rng), n(rng), n(rng), n(rng)};
}

inline RotationMatrix random_rotation(std::mt19937_64& rng) { return quat_to_rotmat(random_quaternion(rng)); }

inline Transform random_transform(std::mt19937_64& rng, double max_translation = 5.0) {
  std::uniform_real_distribution<double> u(-max_translation, max_translation);
  return {random_rotation(rng), Vec3(u(rng), u(rng), u(rng))};
}

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double extent = 20.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return {std::move(shape), std::move(v)};
}

/// Values in [-2, 2] with |x - kink| >= gap, so kinked functions are smooth
/// within a finite-difference step.
inline Tensor random_tensor_away_from(std::mt19937_64& rng, Shape shape, double kink, double gap) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) {
    do x = u(rng);
    while (std::abs(x - kink) < gap);
  }
  return {std::move(shape), std::move(v)};
}

}  // namespace lccal::oracle
