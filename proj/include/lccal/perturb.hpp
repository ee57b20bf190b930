#pragma once

// Random miscalibration: a deviation dT drawn from a symmetric per-axis range,
// applied on the camera side of the ground truth, T_init = dT * T_LC.

#include <cstdint>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lccal/error.hpp"
#include "lccal/geometry.hpp"

namespace lccal {

inline double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

struct RangeSpec {
  double max_translation = 0.0;  ///< meters, per axis
  double max_rotation = 0.0;     ///< radians, per axis

  static RangeSpec from_degrees(double meters, double degrees) { return {meters, deg_to_rad(degrees)}; }

  /// "<meters>:<degrees>", e.g. "1.5:20".
  static RangeSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    double t = 0.0, r = 0.0;
    if (colon == std::string::npos || !detail::parse_double(text.substr(0, colon), t) ||
        !detail::parse_double(text.substr(colon + 1), r)) {
      throw ParseError("range: expected <meters>:<degrees>, got '" + text + "'");
    }
    RangeSpec spec = from_degrees(t, r);
    spec.validate();
    return spec;
  }

  void validate() const {
    if (!(max_translation >= 0.0) || !(max_rotation >= 0.0)) {
      throw ConfigError("range: bounds must be non-negative");
    }
  }

  std::string to_string() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g:%g", max_translation, rad_to_deg(max_rotation));
    return buf;
  }

  bool operator==(const RangeSpec&) const = default;
};

/// The five ranges of the multi-range cascade, largest first.
inline std::vector<RangeSpec> default_cascade_ranges() {
  return {RangeSpec::from_degrees(1.5, 20), RangeSpec::from_degrees(1.0, 10), RangeSpec::from_degrees(0.5, 5),
          RangeSpec::from_degrees(0.2, 2), RangeSpec::from_degrees(0.1, 1)};
}

/// SplitMix64 finalizer; used to derive independent per-(stream, index) seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

struct DeviationSample {
  Transform delta;
  std::uint64_t seed = 0;
  Vec3 translation = Vec3::Zero();
  EulerRPY angles;  ///< the drawn angles; delta.rotation = Rz(yaw) Ry(pitch) Rx(roll)
};

/// Translation components and roll/pitch/yaw i.i.d. uniform in [-max, max).
/// Deterministic in `seed`.
inline DeviationSample sample_deviation(const RangeSpec& range, std::uint64_t seed) {
  range.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double bound) { return (2.0 * unit(rng) - 1.0) * bound; };
  DeviationSample s;
  s.seed = seed;
  s.translation = {draw(range.max_translation), draw(range.max_translation), draw(range.max_translation)};
  s.angles.roll = draw(range.max_rotation);
  s.angles.pitch = draw(range.max_rotation);
  s.angles.yaw = draw(range.max_rotation);
  s.delta = {euler_rpy_to_rotmat(s.angles), s.translation};
  return s;
}

/// T_init = delta * gt.
inline Transform make_initial_extrinsic(const Transform& gt, const Transform& delta) { return se3_compose(delta, gt); }

inline void write_deviation_csv_header(std::ostream& os) { os << "seed,tx,ty,tz,roll,pitch,yaw\n"; }

inline void write_deviation_csv_row(std::ostream& os, const DeviationSample& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(s.seed),
                s.translation.x(), s.translation.y(), s.translation.z(), s.angles.roll, s.angles.pitch, s.angles.yaw);
  os << buf;
}

}  // namespace lccal
