#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>
#include <sstream>

#include "lccal/losses.hpp"
#include "lccal/perturb.hpp"
#include "lccal/testing/oracles.hpp"
#include "support.hpp"

using namespace lccal;

namespace {

Tensor qt(const Quaternion& q) { return quaternion_tensor(q); }

/// Per-point residual by explicit 4x4 products.
double point_cloud_oracle(const std::vector<Vec3>& pts, const Transform& t_lc, const Transform& t_pred,
                          const Transform& t_init) {
  const Mat4 residual = oracle::matmul4(oracle::homogeneous(t_lc).inverse(),
                                         oracle::matmul4(oracle::homogeneous(t_pred).inverse(), oracle::homogeneous(t_init)));
  double s = 0.0;
  for (const Vec3& p : pts) s += (oracle::apply_homogeneous(residual, p) - p).norm();
  return s / static_cast<double>(pts.size());
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n) { return test::random_cloud(rng, n).points; }

}  // namespace

TEST(SmoothL1, Examples) {
  const Tensor zero = Tensor::vector({0, 0, 0});
  EXPECT_DOUBLE_EQ(smooth_l1(Tensor::vector({0.5, 0, 0}), zero).item(), 0.125 / 3.0);
  EXPECT_DOUBLE_EQ(smooth_l1(Tensor::vector({2.0, 0, 0}), zero).item(), 1.5 / 3.0);
  EXPECT_DOUBLE_EQ(smooth_l1(Tensor::vector({-2.0, 1.0, 0}), zero).item(), (1.5 + 0.5) / 3.0);
  EXPECT_DOUBLE_EQ(smooth_l1(Vec3(0.5, -2.0, 0.0), Vec3::Zero()), (0.125 + 1.5) / 3.0);
}

TEST(RotationLoss, Examples) {
  const Quaternion id(1, 0, 0, 0);
  const double h = std::sqrt(0.5);
  EXPECT_NEAR(rotation_loss(qt(id), qt(Quaternion(h, 0, 0, h))).item(), std::numbers::pi / 2.0, 1e-12);
  // Identical or antipodal quaternions hit the clamp: 2 acos(1 - 1e-12) ~ 2.83e-6 rad.
  EXPECT_LT(rotation_loss(qt(id), qt(id)).item(), 3e-6);
  EXPECT_LT(rotation_loss(qt(id), qt(Quaternion(-1, 0, 0, 0))).item(), 3e-6);
  EXPECT_THROW(rotation_loss(Tensor::vector({0, 0, 0, 0}), qt(id)), DegenerateInputError);
}

TEST(RotationLoss, SignInvariantAndMatchesAngularDistance) {
  std::mt19937_64 rng(61);
  for (int i = 0; i < 200; ++i) {
    const Quaternion a = test::random_quaternion(rng), b = test::random_quaternion(rng);
    const double l = rotation_loss(qt(a), qt(b)).item();
    const Quaternion nb(-b.w(), -b.x(), -b.y(), -b.z());
    EXPECT_NEAR(l, rotation_loss(qt(a), qt(nb)).item(), 1e-12);
    EXPECT_NEAR(l, rotation_loss(qt(b), qt(a)).item(), 1e-12);
    if (l > 1e-5) EXPECT_NEAR(l, angular_distance(a, b), 1e-9);
  }
}

TEST(QuatToRotmatTensor, MatchesRodriguesOracle) {
  std::mt19937_64 rng(62);
  for (int i = 0; i < 100; ++i) {
    const Quaternion q = test::random_quaternion(rng);
    const Tensor r = quat_to_rotmat(qt(q));
    const Mat3 o = oracle::quaternion_rodrigues(q.w(), q.x(), q.y(), q.z());
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(r[static_cast<std::size_t>(a * 3 + b)], o(a, b), 1e-12);
  }
}

TEST(PointCloudLoss, ZeroAtTrueDeviation) {
  std::mt19937_64 rng(63);
  for (int i = 0; i < 50; ++i) {
    const Transform t_lc = test::random_transform(rng);
    const Transform delta = sample_deviation(RangeSpec::from_degrees(1.5, 20), rng()).delta;
    const Transform t_init = make_initial_extrinsic(t_lc, delta);
    const auto pts = random_points(rng, 100);
    EXPECT_LT(point_cloud_loss(pts, t_lc, delta, t_init), 1e-12);
    const Tensor l = point_cloud_loss(pts, t_lc, vec3_tensor(delta.translation),
                                      quat_to_rotmat(qt(rotmat_to_quat(delta.rotation))), t_init);
    EXPECT_LT(l.item(), 1e-12);
  }
}

TEST(PointCloudLoss, PureTranslationExample) {
  const std::vector<Vec3> pts{{1, 2, 3}, {-4, 0, 7}};
  const Transform e = Transform::from_translation({0.3, -0.4, 0.0});
  EXPECT_NEAR(point_cloud_loss(pts, Transform::identity(), e, Transform::identity()), 0.5, 1e-15);
  EXPECT_THROW(point_cloud_loss(std::vector<Vec3>{}, Transform::identity(), e, Transform::identity()),
               DegenerateInputError);
}

TEST(PointCloudLoss, MatchesHomogeneousOracle) {
  std::mt19937_64 rng(64);
  for (int i = 0; i < 50; ++i) {
    const Transform t_lc = test::random_transform(rng), t_pred = test::random_transform(rng, 0.5);
    const Transform t_init = test::random_transform(rng);
    const auto pts = random_points(rng, 200);
    const double o = point_cloud_oracle(pts, t_lc, t_pred, t_init);
    EXPECT_NEAR(point_cloud_loss(pts, t_lc, t_pred, t_init), o, 1e-9 * std::max(1.0, o));
    const Tensor l = point_cloud_loss(pts, t_lc, vec3_tensor(t_pred.translation),
                                      quat_to_rotmat(qt(rotmat_to_quat(t_pred.rotation))), t_init);
    EXPECT_NEAR(l.item(), o, 1e-9 * std::max(1.0, o));
  }
}

TEST(PointCloudLoss, PermutationInvariant) {
  std::mt19937_64 rng(65);
  const Transform t_lc = test::random_transform(rng), t_pred = test::random_transform(rng, 0.5);
  const Transform t_init = test::random_transform(rng);
  auto pts = random_points(rng, 300);
  const double a = point_cloud_loss(pts, t_lc, t_pred, t_init);
  std::shuffle(pts.begin(), pts.end(), rng);
  EXPECT_NEAR(point_cloud_loss(pts, t_lc, t_pred, t_init), a, 1e-12 * a);
}

TEST(TotalLoss, WeightedSumOfTerms) {
  std::mt19937_64 rng(66);
  const Transform t_lc = test::random_transform(rng);
  const Transform delta = sample_deviation(RangeSpec::from_degrees(1.0, 10), 5).delta;
  const Transform t_init = make_initial_extrinsic(t_lc, delta);
  const auto pts = random_points(rng, 50);
  const Tensor t_pred = Tensor::vector({0.1, -0.2, 0.05});
  const Tensor q_pred = l2_normalize(Tensor::vector({1.0, 0.02, -0.03, 0.01}));
  const LossWeights w{2.0, 0.25, 1.5, 3.0};
  const LossTerms terms = total_loss(t_pred, q_pred, delta, pts, t_lc, t_init, w);
  const double lt = smooth_l1(Vec3(0.1, -0.2, 0.05), delta.translation);
  EXPECT_NEAR(terms.translation.item(), lt, 1e-15);
  EXPECT_NEAR(terms.rotation.item(),
              angular_distance(rotmat_to_quat(delta.rotation), Quaternion(q_pred[0], q_pred[1], q_pred[2], q_pred[3])),
              1e-9);
  const double lp = point_cloud_loss(pts, t_lc, Transform{quat_to_rotmat(Quaternion(q_pred[0], q_pred[1], q_pred[2], q_pred[3])), Vec3(0.1, -0.2, 0.05)}, t_init);
  EXPECT_NEAR(terms.point_cloud.item(), lp, 1e-9);
  EXPECT_NEAR(terms.total.item(), 2.0 * (1.5 * lt + 3.0 * terms.rotation.item()) + 0.25 * lp, 1e-9);
}

TEST(TotalLoss, SkipsPointTermWhenUnweightedAndEmpty) {
  const LossWeights w{1.0, 0.0, 1.0, 1.0};
  const LossTerms terms = total_loss(Tensor::vector({0, 0, 0}), Tensor::vector({1, 0, 0, 0}), Transform::identity(), {},
                                     Transform::identity(), Transform::identity(), w);
  EXPECT_FALSE(terms.point_cloud.defined());
  EXPECT_THROW((LossWeights{1.0, -1.0, 1.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{0.0, 0.0, 1.0, 1.0}.validate()), ConfigError);
}

TEST(TotalLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(67);
  std::size_t checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Transform t_lc = test::random_transform(rng);
    const Transform delta = sample_deviation(RangeSpec::from_degrees(1.5, 20), rng()).delta;
    const Transform t_init = make_initial_extrinsic(t_lc, delta);
    const auto pts = random_points(rng, 40);
    const auto r = oracle::check_gradients(
        [&](const std::vector<Tensor>& v) { return total_loss(v[0], v[1], delta, pts, t_lc, t_init, {}).total; },
        {test::random_tensor(rng, {3}, -0.8, 0.8), l2_normalize(test::random_tensor(rng, {4}))}, 4, rng());
    EXPECT_LT(r.max_rel_error, 1e-4);
    checked += r.checked;
  }
  EXPECT_GE(checked, 100u);
}

TEST(LossCsv, Format) {
  std::ostringstream os;
  write_loss_csv_header(os);
  write_loss_csv_row(os, 3, 0.5, 0.25, 1.0, 2.0);
  EXPECT_EQ(os.str(), "step,L_t,L_R,L_P,L\n3,0.5,0.25,1,2\n");
}
