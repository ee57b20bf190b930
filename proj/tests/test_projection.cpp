#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "lccal/projection.hpp"
#include "lccal/testing/oracles.hpp"
#include "support.hpp"

using namespace lccal;

namespace {

const CameraIntrinsics kK{100.0, 100.0, 64.0, 32.0, 128, 64};

PointCloud cloud_of(std::initializer_list<Vec3> pts) {
  PointCloud c;
  c.points = pts;
  return c;
}

/// Points mostly in front of a camera at the origin looking down +z.
PointCloud frontal_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> xy(-6.0, 6.0), z(-1.0, 30.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(xy(rng), xy(rng), z(rng));
  return c;
}

Transform small_transform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(-0.2, 0.2), t(-0.5, 0.5);
  return {euler_rpy_to_rotmat({a(rng), a(rng), a(rng)}), Vec3(t(rng), t(rng), t(rng))};
}

}  // namespace

TEST(ProjectPoints, PrincipalRay) {
  const auto p = project_points(cloud_of({{0, 0, 5}}), Transform::identity(), kK);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].u, 64u);
  EXPECT_EQ(p[0].v, 32u);
  EXPECT_EQ(p[0].depth, 5.0);
}

TEST(ProjectPoints, BehindCameraAndOutOfImageAreDropped) {
  EXPECT_TRUE(project_points(cloud_of({{0, 0, -5}}), Transform::identity(), kK).empty());
  EXPECT_TRUE(project_points(cloud_of({{0, 0, 0}}), Transform::identity(), kK).empty());
  // u = 100 * 4 / 5 + 64 = 144 > 127
  EXPECT_TRUE(project_points(cloud_of({{4, 0, 5}}), Transform::identity(), kK).empty());
}

TEST(ProjectPoints, RoundsHalfUp) {
  // u = 100 * 0.025 / 1 + 64 = 66.5 -> 67; v = 100 * (-0.005) + 32 = 31.5 -> 32
  const auto p = project_points(cloud_of({{0.025, -0.005, 1.0}}), Transform::identity(), kK);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].u, 67u);
  EXPECT_EQ(p[0].v, 32u);
}

TEST(ProjectPoints, MatchesScalarOracleExactly) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const PointCloud cloud = frontal_cloud(rng, 500);
    const Transform t = small_transform(rng);
    const auto got = project_points(cloud, t, kK);
    std::size_t j = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto o = oracle::scalar_project(cloud.points[i], t, kK);
      if (!o) continue;
      ASSERT_LT(j, got.size());
      EXPECT_EQ(got[j].index, i);
      EXPECT_EQ(static_cast<long>(got[j].u), o->u);
      EXPECT_EQ(static_cast<long>(got[j].v), o->v);
      EXPECT_EQ(got[j].depth, o->depth);
      ++j;
    }
    EXPECT_EQ(j, got.size());
  }
}

TEST(RenderDepth, ZBufferKeepsNearest) {
  const DepthImage d = render_depth(cloud_of({{0, 0, 5}, {0, 0, 3}}), Transform::identity(), kK);
  EXPECT_EQ(d.at(64, 32), 3.0);
  EXPECT_EQ(d.nonzero_count(), 1u);
}

TEST(RenderDepth, EmptyCloud) {
  const DepthImage d = render_depth(PointCloud{}, Transform::identity(), kK);
  EXPECT_EQ(d.width, 128u);
  EXPECT_EQ(d.height, 64u);
  EXPECT_EQ(d.nonzero_count(), 0u);
}

TEST(RenderDepth, MatchesSortAndPaintOracle) {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 50; ++rep) {
    const PointCloud cloud = frontal_cloud(rng, 2000);
    const Transform t = small_transform(rng);
    std::vector<oracle::ScalarProjection> proj;
    for (const Vec3& p : cloud.points)
      if (auto o = oracle::scalar_project(p, t, kK)) proj.push_back(*o);
    EXPECT_EQ(render_depth(cloud, t, kK).depth, oracle::sort_and_paint(proj, kK.width, kK.height));
  }
}

TEST(RenderDepth, PermutationInvariant) {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    PointCloud cloud = frontal_cloud(rng, 3000);
    const Transform t = small_transform(rng);
    const DepthImage a = render_depth(cloud, t, kK);
    std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
    EXPECT_EQ(a, render_depth(cloud, t, kK));
  }
}

TEST(RenderDepth, EveryPixelComesFromAProjectedPoint) {
  std::mt19937_64 rng(24);
  const PointCloud cloud = frontal_cloud(rng, 3000);
  const Transform t = small_transform(rng);
  const DepthImage d = render_depth(cloud, t, kK);
  const auto proj = project_points(cloud, t, kK);
  for (std::size_t v = 0; v < d.height; ++v)
    for (std::size_t u = 0; u < d.width; ++u) {
      const double z = d.at(u, v);
      EXPECT_TRUE(z == 0.0 || z > 0.0);
      if (z == 0.0) continue;
      EXPECT_TRUE(std::any_of(proj.begin(), proj.end(),
                              [&](const ProjectedPoint& p) { return p.u == u && p.v == v && p.depth == z; }));
    }
}

TEST(RenderDepth, ExtrinsicEqualsPreTransformedCloud) {
  std::mt19937_64 rng(25);
  for (int rep = 0; rep < 20; ++rep) {
    const PointCloud cloud = frontal_cloud(rng, 2000);
    const Transform t = small_transform(rng);
    EXPECT_EQ(render_depth(cloud, t, kK), render_depth(se3_apply(t, cloud), Transform::identity(), kK));
  }
}

TEST(NormalizeDepth, Examples) {
  DepthImage d(3, 1);
  d.depth = {40.0, 0.0, 120.0};
  const Tensor n = normalize_depth(d, 80.0);
  EXPECT_EQ(n.shape(), (Shape{1, 1, 3}));
  EXPECT_EQ(n[0], 0.5);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[2], 1.0);
  EXPECT_THROW(normalize_depth(d, 0.0), ConfigError);
  EXPECT_THROW(normalize_depth(d, -1.0), ConfigError);
}

TEST(Intrinsics, ValidationAndResize) {
  EXPECT_THROW((CameraIntrinsics{0.0, 1.0, 0, 0, 10, 10}.validate()), ValidationError);
  EXPECT_THROW((CameraIntrinsics{1.0, 1.0, 0, 0, 0, 10}.validate()), ValidationError);
  const CameraIntrinsics k{718.856, 718.856, 607.1928, 185.2157, 1241, 376};
  const CameraIntrinsics r = k.resized(128, 64);
  EXPECT_EQ(r.width, 128u);
  EXPECT_EQ(r.height, 64u);
  EXPECT_NEAR(r.fx, 718.856 * 128.0 / 1241.0, 1e-12);
  EXPECT_NEAR(r.cy, (185.2157 + 0.5) * 64.0 / 376.0 - 0.5, 1e-12);
  EXPECT_THROW(project_points(PointCloud{}, Transform::identity(), CameraIntrinsics{-1, 1, 0, 0, 1, 1}),
               ValidationError);
}
