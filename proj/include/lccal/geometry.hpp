#pragma once

// Rotation and rigid-body algebra. Everything here is 64-bit and value-typed.
//
// Conventions:
//  - quaternions are Hamilton, scalar-first (w, x, y, z), stored unit-norm with w >= 0;
//  - Euler angles are extrinsic X(roll) -> Y(pitch) -> Z(yaw): R = Rz(yaw) * Ry(pitch) * Rx(roll);
//  - a Transform maps p to R * p + t.

#include <Eigen/Core>
#include <Eigen/LU>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <locale>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lccal/error.hpp"
#include "lccal/point_cloud.hpp"

namespace lccal {

using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

class Quaternion {
 public:
  /// Identity rotation.
  Quaternion() = default;

  /// Normalizes and canonicalizes; throws DegenerateInputError on a zero (or non-finite) norm.
  Quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateInputError("quaternion has zero or non-finite norm");
    }
    w_ = w / n;
    x_ = x / n;
    y_ = y / n;
    z_ = z / n;
    canonicalize();
  }

  static Quaternion identity() { return {}; }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  std::array<double, 4> components() const { return {w_, x_, y_, z_}; }

  double dot(const Quaternion& o) const { return w_ * o.w_ + x_ * o.x_ + y_ * o.y_ + z_ * o.z_; }

  bool operator==(const Quaternion&) const = default;

 private:
  // w >= 0; on w == 0 the first non-zero vector component is made positive.
  void canonicalize() {
    double* c[4] = {&w_, &x_, &y_, &z_};
    for (double* v : c) {
      if (*v > 0.0) return;
      if (*v < 0.0) {
        w_ = -w_;
        x_ = -x_;
        y_ = -y_;
        z_ = -z_;
        return;
      }
    }
  }

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// Proper rotation matrix. Construction from an arbitrary matrix is validated.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Throws ValidationError unless `m` is orthonormal with det +1 within `tol`.
  static RotationMatrix from_matrix(const Mat3& m, double tol = 1e-6) {
    if (!m.allFinite()) throw ValidationError("rotation matrix has non-finite entries");
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol) {
      throw ValidationError("rotation matrix not orthonormal (max |R^T R - I| = " + std::to_string(ortho) + ")");
    }
    const double det = m.determinant();
    if (std::abs(det - 1.0) > tol) {
      throw ValidationError("rotation matrix determinant " + std::to_string(det) + " != +1");
    }
    return RotationMatrix(m);
  }

  static RotationMatrix identity() { return {}; }

  static RotationMatrix about_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return RotationMatrix(m);
  }

  static RotationMatrix about_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return RotationMatrix(m);
  }

  static RotationMatrix about_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return RotationMatrix(m);
  }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }

  RotationMatrix operator*(const RotationMatrix& o) const { return RotationMatrix(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  explicit RotationMatrix(const Mat3& m) : m_(m) {}

  friend RotationMatrix quat_to_rotmat(const Quaternion& q);

  Mat3 m_;
};

struct EulerRPY {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

/// Rigid-body transform p -> R p + t (translation in meters).
struct Transform {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }

  static Transform from_translation(const Vec3& t) { return {RotationMatrix::identity(), t}; }

  static Transform from_rotation(const RotationMatrix& r) { return {r, Vec3::Zero()}; }

  /// Throws ValidationError when the upper-left block is not a rotation.
  static Transform from_matrix(const Mat4& m, double tol = 1e-6) {
    return {RotationMatrix::from_matrix(m.topLeftCorner<3, 3>(), tol), m.topRightCorner<3, 1>()};
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Evaluated with a fixed, explicit operation order so that every code path
  /// that maps points (projection, cloud transforms) produces identical bits.
  Vec3 operator*(const Vec3& p) const {
    const Mat3& r = rotation.matrix();
    return {r(0, 0) * p.x() + r(0, 1) * p.y() + r(0, 2) * p.z() + translation.x(),
            r(1, 0) * p.x() + r(1, 1) * p.y() + r(1, 2) * p.z() + translation.y(),
            r(2, 0) * p.x() + r(2, 1) * p.y() + r(2, 2) * p.z() + translation.z()};
  }

  bool is_finite() const { return rotation.matrix().allFinite() && translation.allFinite(); }
};

// ---------------------------------------------------------------------------
// Conversions

inline RotationMatrix quat_to_rotmat(const Quaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),    //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationMatrix(m);
}

/// Shepperd's method: pivots on the largest of (trace, diagonal) for stability.
inline Quaternion rotmat_to_quat(const RotationMatrix& rot) {
  const Mat3 m = RotationMatrix::from_matrix(rot.matrix()).matrix();
  const double tr = m.trace();
  double w, x, y, z;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return {w, x, y, z};
}

/// Margin kept from |pitch| = pi/2 before the decomposition is refused.
inline constexpr double kGimbalMargin = 1e-3;

inline EulerRPY rotmat_to_euler_rpy(const RotationMatrix& r) {
  const Mat3& m = r.matrix();
  const double s = std::clamp(-m(2, 0), -1.0, 1.0);
  const double pitch = std::asin(s);
  if (std::abs(pitch) >= std::numbers::pi / 2 - kGimbalMargin) {
    throw DegenerateOrientationError("Euler decomposition too close to gimbal lock (pitch = " +
                                     std::to_string(pitch) + " rad)");
  }
  return {std::atan2(m(2, 1), m(2, 2)), pitch, std::atan2(m(1, 0), m(0, 0))};
}

inline RotationMatrix euler_rpy_to_rotmat(const EulerRPY& e) {
  return RotationMatrix::about_z(e.yaw) * RotationMatrix::about_y(e.pitch) * RotationMatrix::about_x(e.roll);
}

// ---------------------------------------------------------------------------
// SE(3)

inline Transform se3_compose(const Transform& a, const Transform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Transform se3_inverse(const Transform& t) {
  const RotationMatrix rt = t.rotation.transpose();
  return {rt, -(rt * t.translation)};
}

inline Vec3 se3_apply(const Transform& t, const Vec3& p) { return t * p; }

inline PointCloud se3_apply(const Transform& t, const PointCloud& cloud) {
  PointCloud out;
  out.intensity = cloud.intensity;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(t * p);
  return out;
}

/// 2 * acos(|<q1, q2>|), in [0, pi]. Quaternion construction already guarantees unit norm.
inline double angular_distance(const Quaternion& q1, const Quaternion& q2) {
  const double d = std::min(1.0, std::abs(q1.dot(q2)));
  return 2.0 * std::acos(d);
}

/// Rotation angle of R_a^T R_b.
inline double angular_distance(const RotationMatrix& a, const RotationMatrix& b) {
  return angular_distance(rotmat_to_quat(a), rotmat_to_quat(b));
}

inline double rotation_angle(const RotationMatrix& r) { return angular_distance(RotationMatrix::identity(), r); }

/// Largest absolute difference over the 12 free entries.
inline double max_abs_difference(const Transform& a, const Transform& b) {
  const double dr = (a.rotation.matrix() - b.rotation.matrix()).cwiseAbs().maxCoeff();
  const double dt = (a.translation - b.translation).cwiseAbs().maxCoeff();
  return std::max(dr, dt);
}

// ---------------------------------------------------------------------------
// Text form: 12 whitespace-separated decimals, row-major [R | t] (the KITTI calib row layout).

inline std::string to_string(const Transform& t) {
  std::string out;
  char buf[32];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double v = c < 3 ? t.rotation(r, c) : t.translation(r);
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  return out;
}

namespace detail {

/// Locale-independent strtod replacement for dot-decimal numbers.
inline bool parse_double(const std::string& token, double& out) {
  std::istringstream is(token);
  is.imbue(std::locale::classic());
  is >> out;
  return !is.fail() && is.eof();
}

}  // namespace detail

/// Parses the 12-number row-major layout. Throws ParseError on a wrong count or
/// a token that is not a number, ValidationError if the rotation block is invalid.
inline Transform parse_transform(const std::string& text, double tol = 1e-6) {
  std::istringstream is(text);
  std::vector<double> values;
  std::string token;
  while (is >> token) {
    double v = 0.0;
    if (!detail::parse_double(token, v)) throw ParseError("transform: invalid number '" + token + "'");
    values.push_back(v);
  }
  if (values.size() != 12) {
    throw ParseError("transform: expected 12 values, got " + std::to_string(values.size()));
  }
  Mat4 m = Mat4::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return Transform::from_matrix(m, tol);
}

}  // namespace lccal
