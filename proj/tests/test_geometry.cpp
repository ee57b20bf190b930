#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lccal/geometry.hpp"
#include "lccal/testing/oracles.hpp"
#include "support.hpp"

using namespace lccal;
using lccal::test::random_quaternion;
using lccal::test::random_rotation;
using lccal::test::random_transform;

namespace {

double max_abs(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Quaternion, NormalizesAndCanonicalizes) {
  const Quaternion q(-2.0, 0.0, 0.0, 0.0);
  EXPECT_EQ(q.w(), 1.0);
  EXPECT_EQ(q.x(), 0.0);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Quaternion r = random_quaternion(rng);
    const double n = std::sqrt(r.dot(r));
    EXPECT_NEAR(n, 1.0, 1e-9);
    EXPECT_GE(r.w(), 0.0);
  }
  // w == 0: first non-zero vector component becomes positive.
  const Quaternion z(0.0, 0.0, -3.0, 4.0);
  EXPECT_EQ(z.w(), 0.0);
  EXPECT_GT(z.y(), 0.0);
}

TEST(Quaternion, ZeroNormIsDegenerate) {
  EXPECT_THROW(Quaternion(0, 0, 0, 0), DegenerateInputError);
  EXPECT_THROW(Quaternion(NAN, 0, 0, 0), DegenerateInputError);
}

TEST(QuatToRotmat, IdentityAndQuarterTurn) {
  EXPECT_EQ(quat_to_rotmat(Quaternion(1, 0, 0, 0)).matrix(), Mat3::Identity());
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT(max_abs(quat_to_rotmat(Quaternion(std::sqrt(0.5), 0, 0, std::sqrt(0.5))).matrix(), expected), 1e-15);
}

TEST(QuatToRotmat, MatchesRodriguesOracle) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion q = random_quaternion(rng);
    const Mat3 oracle = oracle::quaternion_rodrigues(q.w(), q.x(), q.y(), q.z());
    EXPECT_LT(max_abs(quat_to_rotmat(q).matrix(), oracle), 1e-12);
  }
}

TEST(QuatToRotmat, DoubleCoverAndOrthonormality) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
    const Mat3 a = quat_to_rotmat(Quaternion(w, x, y, z)).matrix();
    const Mat3 b = quat_to_rotmat(Quaternion(-w, -x, -y, -z)).matrix();
    EXPECT_EQ(a, b);
    EXPECT_LT(max_abs(a.transpose() * a, Mat3::Identity()), 1e-9);
    EXPECT_NEAR(a.determinant(), 1.0, 1e-9);
  }
}

TEST(RotmatToQuat, Examples) {
  const Quaternion id = rotmat_to_quat(RotationMatrix::identity());
  EXPECT_EQ(id.components(), (std::array<double, 4>{1, 0, 0, 0}));
  const Quaternion half_x = rotmat_to_quat(RotationMatrix::about_x(std::numbers::pi));
  EXPECT_NEAR(half_x.w(), 0.0, 1e-15);
  EXPECT_NEAR(half_x.x(), 1.0, 1e-15);
  EXPECT_NEAR(half_x.y(), 0.0, 1e-15);
  EXPECT_NEAR(half_x.z(), 0.0, 1e-15);
}

TEST(RotmatToQuat, RoundTrip) {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const RotationMatrix r = random_rotation(rng);
    worst = std::max(worst, max_abs(quat_to_rotmat(rotmat_to_quat(r)).matrix(), r.matrix()));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(RotmatToQuat, RejectsNonOrthonormal) {
  Mat3 m = Mat3::Identity();
  m(0, 1) = 1e-3;
  EXPECT_THROW(RotationMatrix::from_matrix(m), ValidationError);
  EXPECT_THROW(RotationMatrix::from_matrix(-Mat3::Identity()), ValidationError);
  EXPECT_NO_THROW(RotationMatrix::from_matrix(RotationMatrix::about_y(0.3).matrix()));
}

TEST(Se3, ComposeExamples) {
  std::mt19937_64 rng(5);
  const Transform t = random_transform(rng);
  EXPECT_EQ(max_abs_difference(se3_compose(t, Transform::identity()), t), 0.0);
  const Transform ab = se3_compose(Transform::from_translation({1, 0, 0}), Transform::from_translation({0, 2, 0}));
  EXPECT_EQ(ab.translation, Vec3(1, 2, 0));
  EXPECT_EQ(ab.rotation.matrix(), Mat3::Identity());
}

TEST(Se3, ComposeMatchesHomogeneousProduct) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Transform a = random_transform(rng), b = random_transform(rng);
    const Mat4 oracle = oracle::matmul4(oracle::homogeneous(a), oracle::homogeneous(b));
    EXPECT_LT((se3_compose(a, b).matrix() - oracle).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Se3, InverseExamples) {
  EXPECT_EQ(max_abs_difference(se3_inverse(Transform::identity()), Transform::identity()), 0.0);
  EXPECT_EQ(se3_inverse(Transform::from_translation({1, 2, 3})).translation, Vec3(-1, -2, -3));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Transform t = random_transform(rng);
    EXPECT_LT(max_abs_difference(se3_compose(t, se3_inverse(t)), Transform::identity()), 1e-12);
    EXPECT_LT(max_abs_difference(se3_compose(se3_inverse(t), t), Transform::identity()), 1e-12);
  }
}

TEST(Se3, Associativity) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Transform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    EXPECT_LT(max_abs_difference(se3_compose(se3_compose(a, b), c), se3_compose(a, se3_compose(b, c))), 1e-12);
  }
}

TEST(Se3, ApplyExamples) {
  std::mt19937_64 rng(9);
  const PointCloud cloud = test::random_cloud(rng, 50);
  const PointCloud same = se3_apply(Transform::identity(), cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(same.points[i], cloud.points[i]);

  const Vec3 p = se3_apply(Transform::from_rotation(RotationMatrix::about_z(std::numbers::pi / 2)), Vec3(1, 0, 0));
  EXPECT_NEAR(p.x(), 0.0, 1e-15);
  EXPECT_NEAR(p.y(), 1.0, 1e-15);
  EXPECT_NEAR(p.z(), 0.0, 1e-15);
}

TEST(Se3, ApplyMatchesOracleAndPreservesDistances) {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 20; ++k) {
    const Transform t = random_transform(rng);
    const PointCloud cloud = test::random_cloud(rng, 100);
    const PointCloud moved = se3_apply(t, cloud);
    const Mat4 h = oracle::homogeneous(t);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      EXPECT_LT((moved.points[i] - oracle::apply_homogeneous(h, cloud.points[i])).cwiseAbs().maxCoeff(), 1e-12);
      const std::size_t j = (i * 7 + 3) % cloud.size();
      EXPECT_NEAR((moved.points[i] - moved.points[j]).norm(), (cloud.points[i] - cloud.points[j]).norm(), 1e-9);
    }
  }
}

TEST(Rotation, PreservesNorm) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 v(n(rng), n(rng), n(rng));
    EXPECT_NEAR((random_rotation(rng) * v).norm(), v.norm(), 1e-12);
  }
}

TEST(AngularDistance, Examples) {
  std::mt19937_64 rng(12);
  const Quaternion q = random_quaternion(rng);
  EXPECT_NEAR(angular_distance(q, q), 0.0, 1e-7);
  const auto c = q.components();
  EXPECT_NEAR(angular_distance(q, Quaternion(-c[0], -c[1], -c[2], -c[3])), 0.0, 1e-7);
  EXPECT_NEAR(angular_distance(Quaternion(), Quaternion(std::sqrt(0.5), 0, 0, std::sqrt(0.5))), std::numbers::pi / 2,
              1e-12);
}

TEST(AngularDistance, MatchesRotationAngleOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ang(0.01, 3.1);
  for (int i = 0; i < 500; ++i) {
    const RotationMatrix a = random_rotation(rng);
    const double theta = ang(rng);
    const RotationMatrix b = RotationMatrix::from_matrix(a.matrix() * oracle::rodrigues(Vec3(1, 2, 3), theta));
    EXPECT_NEAR(angular_distance(rotmat_to_quat(a), rotmat_to_quat(b)), theta, 1e-7);
  }
}

TEST(AngularDistance, SymmetricRangeAndTriangleInequality) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion a = random_quaternion(rng), b = random_quaternion(rng), c = random_quaternion(rng);
    const double ab = angular_distance(a, b);
    EXPECT_EQ(ab, angular_distance(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, std::numbers::pi);
    EXPECT_LE(angular_distance(a, c), ab + angular_distance(b, c) + 1e-9);
  }
}

TEST(Euler, Examples) {
  const EulerRPY id = rotmat_to_euler_rpy(RotationMatrix::identity());
  EXPECT_EQ(id.roll, 0.0);
  EXPECT_EQ(id.pitch, 0.0);
  EXPECT_EQ(id.yaw, 0.0);
  const EulerRPY rx = rotmat_to_euler_rpy(RotationMatrix::about_x(0.3));
  EXPECT_NEAR(rx.roll, 0.3, 1e-15);
  EXPECT_NEAR(rx.pitch, 0.0, 1e-15);
  EXPECT_NEAR(rx.yaw, 0.0, 1e-15);
}

TEST(Euler, ConventionIsRzRyRx) {
  const EulerRPY e{0.1, -0.2, 0.3};
  const Mat3 expected = oracle::rodrigues(Vec3::UnitZ(), 0.3) * oracle::rodrigues(Vec3::UnitY(), -0.2) *
                        oracle::rodrigues(Vec3::UnitX(), 0.1);
  EXPECT_LT(max_abs(euler_rpy_to_rotmat(e).matrix(), expected), 1e-15);
}

TEST(Euler, RoundTripAwayFromGimbalLock) {
  std::mt19937_64 rng(15);
  int tested = 0;
  while (tested < 1000) {
    const RotationMatrix r = random_rotation(rng);
    EulerRPY e;
    try {
      e = rotmat_to_euler_rpy(r);
    } catch (const DegenerateOrientationError&) {
      continue;
    }
    EXPECT_LT(max_abs(euler_rpy_to_rotmat(e).matrix(), r.matrix()), 1e-9);
    ++tested;
  }
}

TEST(Euler, GimbalLockIsAnError) {
  EXPECT_THROW(rotmat_to_euler_rpy(RotationMatrix::about_y(std::numbers::pi / 2)), DegenerateOrientationError);
  EXPECT_THROW(rotmat_to_euler_rpy(RotationMatrix::about_y(-std::numbers::pi / 2 + 1e-4)), DegenerateOrientationError);
  EXPECT_NO_THROW(rotmat_to_euler_rpy(RotationMatrix::about_y(std::numbers::pi / 2 - 2e-3)));
}

TEST(TransformText, RoundTripAndErrors) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 100; ++i) {
    const Transform t = random_transform(rng);
    const Transform back = parse_transform(to_string(t));
    EXPECT_EQ(back.rotation.matrix(), t.rotation.matrix());
    EXPECT_EQ(back.translation, t.translation);
  }
  EXPECT_EQ(parse_transform("1 0 0 1\n0 1 0 2\t 0 0 1 3\n").translation, Vec3(1, 2, 3));
  EXPECT_THROW(parse_transform("1 0 0 1 0 1 0 2 0 0 1"), ParseError);
  EXPECT_THROW(parse_transform("1 0 0 1 0 1 0 2 0 0 1 x"), ParseError);
  EXPECT_THROW(parse_transform("1,0 0 0 1 0 1 0 2 0 0 1"), ParseError);
  EXPECT_THROW(parse_transform("2 0 0 0 0 1 0 0 0 0 1 0"), ValidationError);
}
