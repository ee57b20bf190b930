#pragma once

// Training objective:
//   L   = lambda_T * L_T + lambda_P * L_P
//   L_T = lambda_t * smooth_l1(t_pred, t_gt) + lambda_q * D_a(q_gt, q_pred)
//   L_P = mean_i || T_LC^-1 * T_pred^-1 * T_init * P_i - P_i ||
// All terms are differentiable tensor ops; plain-double versions are provided
// where the value is also useful outside training.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/point_cloud.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

struct LossWeights {
  double transform = 1.0;    ///< lambda_T
  double point_cloud = 0.5;  ///< lambda_P
  double translation = 1.0;  ///< lambda_t
  double rotation = 1.0;     ///< lambda_q

  void validate() const {
    if (!(transform >= 0.0 && point_cloud >= 0.0 && translation >= 0.0 && rotation >= 0.0)) {
      throw ConfigError("loss weights must be non-negative");
    }
    if (!(transform * (translation + rotation) + point_cloud > 0.0)) {
      throw ConfigError("loss weights are all zero");
    }
  }
};

/// Differentiable quaternion -> rotation matrix, (4) -> (3, 3). Expects a unit
/// quaternion (w, x, y, z); no normalization is applied.
inline Tensor quat_to_rotmat(const Tensor& q) {
  if (q.shape() != Shape{4}) throw ShapeError("quat_to_rotmat: expected shape (4), got " + shape_string(q.shape()));
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::vector<double> r = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
                           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return detail::make_result({3, 3}, std::move(r), {q}, [w, x, y, z](std::span<const double> g, auto pg) {
    // Rows: d R_ij / d (w, x, y, z), R in row-major order.
    const double jac[9][4] = {
        {0, 0, -4 * y, -4 * z},          {-2 * z, 2 * y, 2 * x, -2 * w}, {2 * y, 2 * z, 2 * w, 2 * x},
        {2 * z, 2 * y, 2 * x, 2 * w},    {0, -4 * x, 0, -4 * z},         {-2 * x, -2 * w, 2 * z, 2 * y},
        {-2 * y, 2 * z, -2 * w, 2 * x},  {2 * x, 2 * w, 2 * z, 2 * y},   {0, -4 * x, -4 * y, 0},
    };
    for (int e = 0; e < 9; ++e)
      for (int k = 0; k < 4; ++k) pg[0][static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(e)] * jac[e][k];
  });
}

/// Mean over components of 0.5 x^2 (|x| < 1) or |x| - 0.5, x = pred - gt.
inline Tensor smooth_l1(const Tensor& pred, const Tensor& gt) {
  detail::require_same_shape("smooth_l1", pred, gt);
  if (pred.numel() == 0) throw ShapeError("smooth_l1: empty input");
  const double n = static_cast<double>(pred.numel());
  double s = 0.0;
  std::vector<double> slope(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double x = pred[i] - gt[i];
    if (std::abs(x) < 1.0) {
      s += 0.5 * x * x;
      slope[i] = x;
    } else {
      s += std::abs(x) - 0.5;
      slope[i] = x > 0.0 ? 1.0 : -1.0;
    }
  }
  return detail::make_result({}, {s / n}, {pred, gt}, [slope, n](std::span<const double> g, auto pg) {
    for (std::size_t i = 0; i < slope.size(); ++i) {
      const double d = g[0] * slope[i] / n;
      if (!pg[0].empty()) pg[0][i] += d;
      if (!pg[1].empty()) pg[1][i] -= d;
    }
  });
}

inline double smooth_l1(const Vec3& pred, const Vec3& gt) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double x = std::abs(pred(i) - gt(i));
    s += x < 1.0 ? 0.5 * x * x : x - 0.5;
  }
  return s / 3.0;
}

/// |cos| is clamped below 1 so the arccos gradient stays finite at coincidence.
inline constexpr double kRotationLossClamp = 1.0 - 1e-12;

/// Angular distance 2 acos(|<q_gt, q_pred>| / (|q_gt| |q_pred|)) between two
/// (4) tensors; invariant to the sign of either quaternion.
inline Tensor rotation_loss(const Tensor& q_gt, const Tensor& q_pred) {
  if (q_gt.shape() != Shape{4} || q_pred.shape() != Shape{4}) {
    throw ShapeError("rotation_loss: expected two (4) tensors, got " + shape_string(q_gt.shape()) + " and " +
                     shape_string(q_pred.shape()));
  }
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    dot += q_gt[i] * q_pred[i];
    n1 += q_gt[i] * q_gt[i];
    n2 += q_pred[i] * q_pred[i];
  }
  n1 = std::sqrt(n1);
  n2 = std::sqrt(n2);
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw DegenerateInputError("rotation_loss: zero-norm quaternion");
  const double c = dot / (n1 * n2);
  const double ac = std::abs(c);
  const bool clamped = ac > kRotationLossClamp;
  const double value = 2.0 * std::acos(clamped ? kRotationLossClamp : ac);
  return detail::make_result({}, {value}, {q_gt, q_pred}, [=](std::span<const double> g, auto pg) {
    if (clamped) return;
    const double dd_dc = -2.0 * (c < 0.0 ? -1.0 : 1.0) / std::sqrt(1.0 - c * c) * g[0];
    // dc/da = b / (|a||b|) - c a / |a|^2
    if (!pg[0].empty())
      for (std::size_t i = 0; i < 4; ++i) pg[0][i] += dd_dc * (q_pred[i] / (n1 * n2) - c * q_gt[i] / (n1 * n1));
    if (!pg[1].empty())
      for (std::size_t i = 0; i < 4; ++i) pg[1][i] += dd_dc * (q_gt[i] / (n1 * n2) - c * q_pred[i] / (n2 * n2));
  });
}

inline Tensor quaternion_tensor(const Quaternion& q) { return Tensor::vector({q.w(), q.x(), q.y(), q.z()}); }
inline Tensor vec3_tensor(const Vec3& v) { return Tensor::vector({v.x(), v.y(), v.z()}); }

inline Tensor regression_loss(const Tensor& t_pred, const Tensor& q_pred, const Tensor& t_gt, const Tensor& q_gt,
                              const LossWeights& w) {
  return add(scale(smooth_l1(t_pred, t_gt), w.translation), scale(rotation_loss(q_gt, q_pred), w.rotation));
}

/// Mean distance each point moves under the residual T_LC^-1 T_pred^-1 T_init,
/// with T_pred given as translation (3) and rotation (3, 3) tensors.
inline Tensor point_cloud_loss(std::span<const Vec3> points, const Transform& t_lc, const Tensor& t_pred,
                               const Tensor& r_pred, const Transform& t_init) {
  if (points.empty()) throw DegenerateInputError("point_cloud_loss: empty cloud");
  if (t_pred.shape() != Shape{3} || r_pred.shape() != Shape{3, 3}) {
    throw ShapeError("point_cloud_loss: expected translation (3) and rotation (3, 3), got " +
                     shape_string(t_pred.shape()) + " and " + shape_string(r_pred.shape()));
  }
  const std::size_t n = points.size();
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = r_pred[static_cast<std::size_t>(i * 3 + j)];
  const Vec3 t(t_pred[0], t_pred[1], t_pred[2]);
  const Mat3& r_lc = t_lc.rotation.matrix();

  // a_i = T_init p_i - t_pred, b_i = R^T a_i, c_i = R_lc^T (b_i - t_lc), residual = c_i - p_i
  std::vector<Vec3> shifted(n), unit(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    shifted[i] = t_init * points[i] - t;
    const Vec3 b = r.transpose() * shifted[i];
    const Vec3 res = r_lc.transpose() * (b - t_lc.translation) - points[i];
    const double len = res.norm();
    total += len;
    unit[i] = len > 0.0 ? Vec3(res / len) : Vec3::Zero();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_result({}, {total * inv_n}, {t_pred, r_pred},
                             [shifted = std::move(shifted), unit = std::move(unit), r, r_lc, inv_n](
                                 std::span<const double> g, auto pg) {
                               Mat3 grad_r = Mat3::Zero();
                               Vec3 sum_gb = Vec3::Zero();
                               for (std::size_t i = 0; i < unit.size(); ++i) {
                                 const Vec3 gb = r_lc * unit[i];
                                 grad_r += shifted[i] * gb.transpose();
                                 sum_gb += gb;
                               }
                               const double s = g[0] * inv_n;
                               if (!pg[0].empty()) {
                                 const Vec3 gt = -(r * sum_gb) * s;
                                 for (std::size_t k = 0; k < 3; ++k) pg[0][k] += gt(static_cast<int>(k));
                               }
                               if (!pg[1].empty())
                                 for (int i = 0; i < 3; ++i)
                                   for (int j = 0; j < 3; ++j)
                                     pg[1][static_cast<std::size_t>(i * 3 + j)] += grad_r(i, j) * s;
                             });
}

inline double point_cloud_loss(std::span<const Vec3> points, const Transform& t_lc, const Transform& t_pred,
                               const Transform& t_init) {
  if (points.empty()) throw DegenerateInputError("point_cloud_loss: empty cloud");
  const Transform residual = se3_compose(se3_inverse(t_lc), se3_compose(se3_inverse(t_pred), t_init));
  double total = 0.0;
  for (const Vec3& p : points) total += (residual * p - p).norm();
  return total / static_cast<double>(points.size());
}

struct LossTerms {
  Tensor translation;  ///< L_t
  Tensor rotation;     ///< L_R
  Tensor regression;   ///< L_T
  Tensor point_cloud;  ///< L_P (undefined when skipped)
  Tensor total;        ///< L
};

/// Regression target is the deviation `delta_gt` (T_init = delta_gt * T_LC).
/// `points` feed the point-cloud term; it is skipped when its weight is zero
/// and no points are given.
inline LossTerms total_loss(const Tensor& t_pred, const Tensor& q_pred, const Transform& delta_gt,
                            std::span<const Vec3> points, const Transform& t_lc, const Transform& t_init,
                            const LossWeights& w) {
  w.validate();
  LossTerms terms;
  terms.translation = smooth_l1(t_pred, vec3_tensor(delta_gt.translation));
  terms.rotation = rotation_loss(quaternion_tensor(rotmat_to_quat(delta_gt.rotation)), q_pred);
  terms.regression = add(scale(terms.translation, w.translation), scale(terms.rotation, w.rotation));
  terms.total = scale(terms.regression, w.transform);
  if (w.point_cloud > 0.0 || !points.empty()) {
    terms.point_cloud = point_cloud_loss(points, t_lc, t_pred, quat_to_rotmat(q_pred), t_init);
    terms.total = add(terms.total, scale(terms.point_cloud, w.point_cloud));
  }
  return terms;
}

inline void write_loss_csv_header(std::ostream& os) { os << "step,L_t,L_R,L_P,L\n"; }

inline void write_loss_csv_row(std::ostream& os, std::int64_t step, double l_t, double l_r, double l_p, double l) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(step), l_t, l_r, l_p, l);
  os << buf;
}

}  // namespace lccal
