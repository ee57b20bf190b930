#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lccal/perturb.hpp"
#include "support.hpp"

using namespace lccal;

TEST(RangeSpec, ParseAndValidate) {
  const RangeSpec r = RangeSpec::parse("1.5:20");
  EXPECT_EQ(r.max_translation, 1.5);
  EXPECT_NEAR(r.max_rotation, 20.0 * std::numbers::pi / 180.0, 1e-15);
  EXPECT_EQ(r.to_string(), "1.5:20");
  EXPECT_THROW(RangeSpec::parse("1.5"), ParseError);
  EXPECT_THROW(RangeSpec::parse("a:b"), ParseError);
  EXPECT_THROW(RangeSpec::parse("-1:2"), ConfigError);
  EXPECT_EQ(default_cascade_ranges().size(), 5u);
  EXPECT_EQ(default_cascade_ranges().front(), RangeSpec::from_degrees(1.5, 20));
  EXPECT_EQ(default_cascade_ranges().back(), RangeSpec::from_degrees(0.1, 1));
}

TEST(SampleDeviation, ZeroRangeIsIdentity) {
  const DeviationSample s = sample_deviation({0.0, 0.0}, 42);
  EXPECT_EQ(s.delta.translation, Vec3::Zero());
  EXPECT_EQ(s.delta.rotation.matrix(), Mat3::Identity());
}

TEST(SampleDeviation, Deterministic) {
  const RangeSpec r = RangeSpec::from_degrees(1.5, 20);
  const DeviationSample a = sample_deviation(r, 7), b = sample_deviation(r, 7), c = sample_deviation(r, 8);
  EXPECT_EQ(a.delta.rotation.matrix(), b.delta.rotation.matrix());
  EXPECT_EQ(a.delta.translation, b.delta.translation);
  EXPECT_NE(a.delta.translation, c.delta.translation);
}

TEST(SampleDeviation, RotationIsEulerComposed) {
  const DeviationSample s = sample_deviation(RangeSpec::from_degrees(1.0, 10), 3);
  const Mat3 expected = (RotationMatrix::about_z(s.angles.yaw) * RotationMatrix::about_y(s.angles.pitch) *
                         RotationMatrix::about_x(s.angles.roll))
                            .matrix();
  EXPECT_EQ(s.delta.rotation.matrix(), expected);
  EXPECT_EQ(s.delta.translation, s.translation);
}

TEST(SampleDeviation, StatisticsAtLargestRange) {
  const RangeSpec r = RangeSpec::from_degrees(1.5, 20);
  constexpr int kN = 10000;
  std::array<double, 6> sum{}, lo{}, hi{};
  lo.fill(1e9);
  hi.fill(-1e9);
  for (int i = 0; i < kN; ++i) {
    const DeviationSample s = sample_deviation(r, derive_seed(1, static_cast<std::uint64_t>(i)));
    const double v[6] = {s.translation.x(), s.translation.y(), s.translation.z(),
                         s.angles.roll,     s.angles.pitch,     s.angles.yaw};
    for (int k = 0; k < 6; ++k) {
      sum[k] += v[k];
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  }
  for (int k = 0; k < 6; ++k) {
    const double bound = k < 3 ? r.max_translation : r.max_rotation;
    EXPECT_GE(lo[k], -bound);
    EXPECT_LE(hi[k], bound);
    // Uniform on [-b, b]: sigma = b / sqrt(3); the mean of N draws has sigma / sqrt(N).
    const double sigma_mean = bound / std::sqrt(3.0) / std::sqrt(static_cast<double>(kN));
    EXPECT_LT(std::abs(sum[k] / kN), 3.0 * sigma_mean) << "axis " << k;
    // The range is actually used.
    EXPECT_GT(hi[k], 0.99 * bound);
    EXPECT_LT(lo[k], -0.99 * bound);
  }
}

TEST(InitialExtrinsic, Examples) {
  std::mt19937_64 rng(31);
  const Transform gt = test::random_transform(rng);
  EXPECT_EQ(max_abs_difference(make_initial_extrinsic(gt, Transform::identity()), gt), 0.0);
  const Transform t = make_initial_extrinsic(Transform::identity(), Transform::from_translation({0.1, -0.2, 0.3}));
  EXPECT_EQ(t.translation, Vec3(0.1, -0.2, 0.3));
  EXPECT_EQ(t.rotation.matrix(), Mat3::Identity());
}

TEST(InitialExtrinsic, RecoveryIdentity) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 1000; ++i) {
    const Transform gt = test::random_transform(rng);
    const Transform delta = sample_deviation(RangeSpec::from_degrees(1.5, 20), rng()).delta;
    const Transform t_init = make_initial_extrinsic(gt, delta);
    EXPECT_LT(max_abs_difference(se3_compose(se3_inverse(delta), t_init), gt), 1e-12);
  }
}

TEST(Seeds, DerivationIsDeterministicAndSpreads) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}

TEST(DeviationCsv, RowsReplayTheSample) {
  std::ostringstream os;
  write_deviation_csv_header(os);
  const DeviationSample s = sample_deviation(RangeSpec::from_degrees(0.5, 5), 99);
  write_deviation_csv_row(os, s);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "seed,tx,ty,tz,roll,pitch,yaw");
  std::vector<double> v;
  std::stringstream rs(row);
  std::string cell;
  while (std::getline(rs, cell, ',')) v.push_back(std::stod(cell));
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(static_cast<std::uint64_t>(v[0]), 99u);
  const Transform replay{euler_rpy_to_rotmat({v[4], v[5], v[6]}), Vec3(v[1], v[2], v[3])};
  EXPECT_EQ(max_abs_difference(replay, s.delta), 0.0);
}
