#pragma once

// Data ingestion: KITTI-odometry velodyne scans, calibration files and frames,
// plus a procedural scene generator (planes and boxes) for desk-scale runs.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/image_io.hpp"
#include "lccal/perturb.hpp"
#include "lccal/point_cloud.hpp"
#include "lccal/projection.hpp"

namespace lccal {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return bytes;
}

inline float load_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline void store_f32_le(unsigned char* p, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(u >> (8 * i));
}

}  // namespace detail

// ---------------------------------------------------------------- velodyne

/// Packed little-endian float32 (x, y, z, reflectance) records.
inline PointCloud decode_velodyne(const std::vector<unsigned char>& bytes) {
  if (bytes.size() % 16 != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % 16;
    throw FormatError("velodyne scan: " + std::to_string(bytes.size()) +
                          " bytes is not a whole number of 16-byte records; trailing record starts at byte " +
                          std::to_string(offset),
                      offset);
  }
  const std::size_t n = bytes.size() / 16;
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.intensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + 16 * i;
    cloud.points[i] = {detail::load_f32_le(p), detail::load_f32_le(p + 4), detail::load_f32_le(p + 8)};
    cloud.intensity[i] = detail::load_f32_le(p + 12);
  }
  return cloud;
}

/// Coordinates are narrowed to float32; missing intensity is written as 0.
inline std::vector<unsigned char> encode_velodyne(const PointCloud& cloud) {
  std::vector<unsigned char> bytes(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    unsigned char* p = bytes.data() + 16 * i;
    for (int k = 0; k < 3; ++k) detail::store_f32_le(p + 4 * k, static_cast<float>(cloud.points[i][k]));
    detail::store_f32_le(p + 12, cloud.has_intensity() ? static_cast<float>(cloud.intensity[i]) : 0.0f);
  }
  return bytes;
}

inline PointCloud read_velodyne_bin(const std::string& path) {
  try {
    return decode_velodyne(detail::read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what(), e.offset());
  }
}

inline void write_velodyne_bin(const std::string& path, const PointCloud& cloud) {
  const auto bytes = encode_velodyne(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path + "'");
}

// ---------------------------------------------------------------- calib

using Mat34 = Eigen::Matrix<double, 3, 4, Eigen::RowMajor>;

struct KittiCalibration {
  std::map<std::string, Mat34> matrices;  ///< every "KEY: 12 numbers" line
  Transform velo_to_cam0;                 ///< Tr
  Transform T_LC;                         ///< velodyne -> left color camera (camera 2)
  double fx = 0, fy = 0, cx = 0, cy = 0;  ///< from P2
};

/// Camera-2 offset from the rectified reference camera: P2 = K [I | t] with
/// t_x = P2[0,3] / P2[0,0].
inline Vec3 camera2_offset(const Mat34& p2) { return {p2(0, 3) / p2(0, 0), 0.0, 0.0}; }

inline KittiCalibration parse_kitti_calib(const std::string& text, const std::string& source = "calib") {
  KittiCalibration calib;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> where;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      if (line.find_first_not_of(" \t") != std::string::npos)
        throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'KEY: values'");
      continue;
    }
    std::string key = line.substr(0, colon);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream fields(line.substr(colon + 1));
    std::vector<double> values;
    std::string tok;
    bool numeric = true;
    while (fields >> tok) {
      double v = 0.0;
      if (!detail::parse_double(tok, v)) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }
    const bool required = key == "P2" || key == "Tr";
    if (!numeric || values.size() != 12) {
      if (required)
        throw ParseError(source + ":" + std::to_string(lineno) + ": line '" + key + "' needs 12 numbers, got " +
                         (numeric ? std::to_string(values.size()) : "a non-numeric field"));
      continue;
    }
    Mat34 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
    calib.matrices[key] = m;
    where[key] = lineno;
  }
  for (const char* key : {"P2", "Tr"})
    if (!calib.matrices.count(key)) throw ParseError(source + ": missing line '" + std::string(key) + ":'");

  const Mat34& p2 = calib.matrices.at("P2");
  if (!(p2(0, 0) > 0.0) || !(p2(1, 1) > 0.0))
    throw ParseError(source + ":" + std::to_string(where.at("P2")) + ": line 'P2' has non-positive focal length");
  calib.fx = p2(0, 0);
  calib.fy = p2(1, 1);
  calib.cx = p2(0, 2);
  calib.cy = p2(1, 2);

  const Mat34& tr = calib.matrices.at("Tr");
  Mat4 h = Mat4::Identity();
  h.topRows<3>() = tr;
  try {
    calib.velo_to_cam0 = Transform::from_matrix(h);
  } catch (const ValidationError& e) {
    throw ParseError(source + ":" + std::to_string(where.at("Tr")) + ": line 'Tr' is not a rigid transform: " +
                     e.what());
  }
  calib.T_LC = se3_compose(Transform::from_translation(camera2_offset(p2)), calib.velo_to_cam0);
  return calib;
}

inline KittiCalibration read_kitti_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kitti_calib(ss.str(), path);
}

inline CameraIntrinsics kitti_intrinsics(const KittiCalibration& c, std::size_t width, std::size_t height) {
  CameraIntrinsics k{c.fx, c.fy, c.cx, c.cy, width, height};
  k.validate();
  return k;
}

// ---------------------------------------------------------------- frames

/// One camera/LiDAR pair with its ground-truth extrinsic, from any source.
struct CalibrationFrame {
  RgbImage image;
  PointCloud cloud;
  CameraIntrinsics intrinsics;
  Transform T_LC;
  std::string id;
};

struct KittiFrame {
  PointCloud cloud;
  RgbImage image;
  CameraIntrinsics intrinsics;
  Transform T_LC;
  std::string sequence;
  std::size_t frame = 0;
};

/// Training sequences 01..20 and test sequence 00 of the odometry split.
inline std::vector<std::string> kitti_train_sequences() {
  std::vector<std::string> s;
  for (int i = 1; i <= 20; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d", i);
    s.emplace_back(buf);
  }
  return s;
}
inline std::vector<std::string> kitti_test_sequences() { return {"00"}; }

inline std::filesystem::path kitti_sequence_dir(const std::filesystem::path& root, const std::string& seq) {
  return root / "sequences" / seq;
}

inline std::string kitti_frame_name(std::size_t frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", frame);
  return buf;
}

/// Number of consecutive frames 000000, 000001, ... with a velodyne scan.
inline std::size_t kitti_frame_count(const std::filesystem::path& root, const std::string& seq) {
  const auto dir = kitti_sequence_dir(root, seq) / "velodyne";
  std::size_t n = 0;
  while (std::filesystem::exists(dir / (kitti_frame_name(n) + ".bin"))) ++n;
  return n;
}

inline KittiFrame load_kitti_frame(const std::filesystem::path& root, const std::string& seq, std::size_t frame) {
  const auto dir = kitti_sequence_dir(root, seq);
  const auto calib = read_kitti_calib((dir / "calib.txt").string());
  KittiFrame f;
  f.sequence = seq;
  f.frame = frame;
  f.cloud = read_velodyne_bin((dir / "velodyne" / (kitti_frame_name(frame) + ".bin")).string());
  f.image = read_image((dir / "image_2" / (kitti_frame_name(frame) + ".png")).string());
  f.intrinsics = kitti_intrinsics(calib, f.image.width, f.image.height);
  f.T_LC = calib.T_LC;
  return f;
}

/// Resizes the image to the network input size, scaling intrinsics to match.
inline CalibrationFrame prepare_frame(const KittiFrame& f, std::size_t width, std::size_t height) {
  CalibrationFrame out;
  out.image = resize_image(f.image, width, height);
  out.cloud = f.cloud;
  out.intrinsics = f.intrinsics.resized(width, height);
  out.T_LC = f.T_LC;
  out.id = f.sequence + "/" + kitti_frame_name(f.frame);
  return out;
}

// ---------------------------------------------------------------- synthetic

enum class PrimitiveKind { plane, box };

/// Plane: the rectangle |x| <= hx, |y| <= hy of its local z = 0 plane.
/// Box: the surface of |x| <= hx, |y| <= hy, |z| <= hz.
/// `pose` maps local coordinates into the LiDAR frame.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::plane;
  Transform pose;
  Vec3 half_extents = Vec3::Ones();
  Vec3 albedo = Vec3::Constant(0.5);  ///< RGB in [0, 1]

  double area() const {
    const double hx = half_extents.x(), hy = half_extents.y(), hz = half_extents.z();
    if (kind == PrimitiveKind::plane) return 4.0 * hx * hy;
    return 8.0 * (hx * hy + hy * hz + hx * hz);
  }

  /// Smallest ray parameter s > min_s with origin + s * dir on the surface.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir, double min_s = 0.0) const {
    const Mat3 rt = pose.rotation.matrix().transpose();
    const Vec3 o = rt * (origin - pose.translation);
    const Vec3 d = rt * dir;
    const Vec3& h = half_extents;
    if (kind == PrimitiveKind::plane) {
      if (d.z() == 0.0) return std::nullopt;
      const double s = -o.z() / d.z();
      if (!(s > min_s)) return std::nullopt;
      const Vec3 p = o + s * d;
      if (std::abs(p.x()) > h.x() || std::abs(p.y()) > h.y()) return std::nullopt;
      return s;
    }
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      if (d[k] == 0.0) {
        if (std::abs(o[k]) > h[k]) return std::nullopt;
        continue;
      }
      double a = (-h[k] - o[k]) / d[k], b = (h[k] - o[k]) / d[k];
      if (a > b) std::swap(a, b);
      lo = std::max(lo, a);
      hi = std::min(hi, b);
    }
    if (lo > hi) return std::nullopt;
    if (lo > min_s) return lo;
    if (hi > min_s) return hi;
    return std::nullopt;
  }

  /// Outward (box) or +z (plane) unit normal at a surface point, LiDAR frame.
  Vec3 normal_at(const Vec3& p) const {
    const Mat3& r = pose.rotation.matrix();
    const Vec3 local = r.transpose() * (p - pose.translation);
    if (kind == PrimitiveKind::plane) return r.col(2);
    int axis = 0;
    double best = -1.0;
    for (int k = 0; k < 3; ++k) {
      const double closeness = std::abs(local[k]) / half_extents[k];
      if (closeness > best) {
        best = closeness;
        axis = k;
      }
    }
    return (local[axis] >= 0.0 ? 1.0 : -1.0) * r.col(axis);
  }
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  CameraIntrinsics intrinsics{100.0, 100.0, 64.0, 32.0, 128, 64};
  Transform T_LC;
  std::size_t num_points = 4000;
  bool lidar_occlusion = true;  ///< drop samples hidden from the LiDAR origin

  void validate() const {
    if (primitives.empty()) throw ConfigError("scene: no primitives");
    intrinsics.validate();
    if (!T_LC.is_finite()) throw ConfigError("scene: non-finite T_LC");
    for (const auto& p : primitives)
      if (!(p.half_extents.minCoeff() > 0.0) || !p.pose.is_finite())
        throw ConfigError("scene: primitive with non-positive extent or non-finite pose");
  }
};

struct SyntheticScene {
  SceneSpec spec;
  std::uint64_t seed = 0;
  PointCloud cloud;
  std::vector<std::size_t> primitive_index;  ///< source primitive of each point
  RgbImage image;

  CalibrationFrame frame(const std::string& id = "") const {
    return {image, cloud, spec.intrinsics, spec.T_LC, id.empty() ? "scene-" + std::to_string(seed) : id};
  }
};

namespace detail {

inline std::optional<std::pair<std::size_t, double>> first_hit(const std::vector<Primitive>& prims, const Vec3& o,
                                                               const Vec3& d, double min_s) {
  std::optional<std::pair<std::size_t, double>> best;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const auto s = prims[i].intersect(o, d, min_s);
    if (s && (!best || *s < best->second)) best = std::pair{i, *s};
  }
  return best;
}

/// Uniform point on the primitive surface, local coordinates.
inline Vec3 sample_surface(const Primitive& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const Vec3& h = p.half_extents;
  if (p.kind == PrimitiveKind::plane) return {sym(rng) * h.x(), sym(rng) * h.y(), 0.0};
  // Opposite face pairs normal to x, y, z, weighted by face area.
  const std::array<double, 3> pair_area{h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  std::discrete_distribution<int> pick(pair_area.begin(), pair_area.end());
  const int axis = pick(rng);
  const double side = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  Vec3 local;
  for (int k = 0; k < 3; ++k) local[k] = k == axis ? side * h[k] : sym(rng) * h[k];
  return local;
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace detail

/// Depth shading of the camera image: brightness falls off with distance.
inline double synthetic_shade(double depth) { return 0.3 + 0.7 * std::exp(-depth / 12.0); }

/// Samples the cloud and ray-casts the camera image of `spec`.
///
/// Point budget is split between primitives in proportion to the solid angle
/// they subtend at the LiDAR (as a spinning LiDAR would see them); within a
/// primitive, sampling is uniform in area. Occluded samples are
/// dropped, so the cloud can hold fewer than num_points points.
inline SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticScene scene;
  scene.spec = spec;
  scene.seed = seed;
  std::mt19937_64 rng(derive_seed(seed, 0x5ce7e));

  // Solid angle of each primitive seen from the LiDAR, by Monte Carlo:
  // area * mean(|n . p| / |p|^3) over pilot samples.
  std::vector<double> weight;
  for (const auto& prim : spec.primitives) {
    constexpr int kPilot = 64;
    double acc = 0.0;
    for (int s = 0; s < kPilot; ++s) {
      const Vec3 p = prim.pose * detail::sample_surface(prim, rng);
      const double r = std::max(p.norm(), 0.5);
      acc += std::abs(prim.normal_at(p).dot(p)) / (r * r * r);
    }
    weight.push_back(std::max(prim.area() * acc / kPilot, 1e-12));
  }
  std::discrete_distribution<std::size_t> which(weight.begin(), weight.end());
  const Vec3 lidar_origin = Vec3::Zero();
  for (std::size_t n = 0; n < spec.num_points; ++n) {
    const std::size_t i = which(rng);
    const Primitive& prim = spec.primitives[i];
    const Vec3 p = prim.pose * detail::sample_surface(prim, rng);
    if (spec.lidar_occlusion) {
      const auto hit = detail::first_hit(spec.primitives, lidar_origin, p, 0.0);
      if (hit && hit->second < 1.0 - 1e-9) continue;
    }
    scene.cloud.points.push_back(p);
    scene.cloud.intensity.push_back(prim.albedo.mean());
    scene.primitive_index.push_back(i);
  }

  const CameraIntrinsics& k = spec.intrinsics;
  const Transform cam_to_lidar = se3_inverse(spec.T_LC);
  const Mat3& rl = cam_to_lidar.rotation.matrix();
  scene.image = RgbImage(k.width, k.height);
  for (std::size_t v = 0; v < k.height; ++v) {
    for (std::size_t u = 0; u < k.width; ++u) {
      // Camera ray with unit z, so the hit parameter is the camera depth.
      const Vec3 d_cam((static_cast<double>(u) - k.cx) / k.fx, (static_cast<double>(v) - k.cy) / k.fy, 1.0);
      const Vec3 d = rl * d_cam;
      const auto hit = detail::first_hit(spec.primitives, cam_to_lidar.translation, d, 1e-6);
      if (!hit) continue;
      const Primitive& prim = spec.primitives[hit->first];
      const Vec3 p = cam_to_lidar.translation + hit->second * d;
      const double facing = std::abs(prim.normal_at(p).dot(d.normalized()));
      const double shade = synthetic_shade(hit->second) * (0.45 + 0.55 * facing);
      for (std::size_t c = 0; c < 3; ++c)
        scene.image.at(u, v, c) = detail::to_u8(prim.albedo[static_cast<int>(c)] * shade);
    }
  }
  return scene;
}

/// Residual of a point against a primitive surface (0 when on it).
inline double surface_residual(const Primitive& prim, const Vec3& p) {
  const Vec3 local = prim.pose.rotation.matrix().transpose() * (p - prim.pose.translation);
  const Vec3& h = prim.half_extents;
  if (prim.kind == PrimitiveKind::plane)
    return std::abs(local.z()) + std::max(0.0, std::abs(local.x()) - h.x()) + std::max(0.0, std::abs(local.y()) - h.y());
  const Vec3 outside = (local.cwiseAbs() - h).cwiseMax(0.0);
  const double inside_gap = (h - local.cwiseAbs()).minCoeff();
  return outside.norm() + std::max(0.0, inside_gap);
}

struct SceneOptions {
  CameraIntrinsics intrinsics{100.0, 100.0, 64.0, 32.0, 128, 64};
  Transform T_LC;
  std::size_t min_primitives = 4, max_primitives = 8;
  std::size_t min_points = 2000, max_points = 8000;
  double wall_min = 14.0, wall_max = 22.0;  ///< back-wall distance range, meters
  double box_min = 3.0, box_max = 11.0;     ///< box distance range, meters
};

/// Random street-like layout in front of the camera: a back wall, a ground
/// plane and 2..6 boxes, expressed in the LiDAR frame via T_LC.
inline SceneSpec random_scene_spec(std::uint64_t seed, const SceneOptions& opt = {}) {
  if (opt.min_primitives < 3 || opt.max_primitives < opt.min_primitives)
    throw ConfigError("scene options: need 3 <= min_primitives <= max_primitives");
  if (opt.min_points == 0 || opt.max_points < opt.min_points)
    throw ConfigError("scene options: need 1 <= min_points <= max_points");
  if (!(opt.box_min > 1.0) || !(opt.box_max >= opt.box_min) || !(opt.wall_min > opt.box_max) ||
      !(opt.wall_max >= opt.wall_min))
    throw ConfigError("scene options: need 1 < box_min <= box_max < wall_min <= wall_max");
  std::mt19937_64 rng(derive_seed(seed, 0x5bec));
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto albedo = [&] { return Vec3(uni(0.15, 1.0), uni(0.15, 1.0), uni(0.15, 1.0)); };

  SceneSpec spec;
  spec.intrinsics = opt.intrinsics;
  spec.T_LC = opt.T_LC;
  spec.num_points = std::uniform_int_distribution<std::size_t>(opt.min_points, opt.max_points)(rng);
  const CameraIntrinsics& k = opt.intrinsics;
  const double tan_x = std::max(k.cx, static_cast<double>(k.width) - k.cx) / k.fx;
  const double tan_y = std::max(k.cy, static_cast<double>(k.height) - k.cy) / k.fy;
  const Transform cam_to_lidar = se3_inverse(opt.T_LC);
  auto add = [&](PrimitiveKind kind, const Transform& pose_cam, const Vec3& half) {
    spec.primitives.push_back({kind, se3_compose(cam_to_lidar, pose_cam), half, albedo()});
  };

  // Camera frame: x right, y down, z forward.
  const double wall_z = uni(opt.wall_min, opt.wall_max);
  const double ground_y = uni(1.3, 1.8);
  add(PrimitiveKind::plane,
      Transform{RotationMatrix::about_y(uni(-0.25, 0.25)), Vec3(uni(-1.0, 1.0), 0.0, wall_z)},
      Vec3(1.4 * wall_z * tan_x, 1.4 * wall_z * tan_y, 1.0));
  const double near_z = 1.0;
  add(PrimitiveKind::plane,
      Transform{RotationMatrix::about_x(std::numbers::pi / 2), Vec3(0.0, ground_y, 0.5 * (wall_z + near_z))},
      Vec3(1.4 * wall_z * tan_x, 0.5 * (wall_z - near_z), 1.0));

  const std::size_t total = std::uniform_int_distribution<std::size_t>(opt.min_primitives, opt.max_primitives)(rng);
  for (std::size_t b = 2; b < total; ++b) {
    const double z = uni(opt.box_min, opt.box_max);
    const Vec3 half(uni(0.2, 0.9), uni(0.2, 1.1), uni(0.2, 0.9));
    const double x = uni(-0.8, 0.8) * z * tan_x;
    const double y = std::bernoulli_distribution(0.7)(rng) ? ground_y - half.y() : uni(-1.5, ground_y - half.y());
    add(PrimitiveKind::box, Transform{RotationMatrix::about_y(uni(-std::numbers::pi, std::numbers::pi)), Vec3(x, y, z)},
        half);
  }
  return spec;
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(),       j.at("cx").get<double>(),
                     j.at("cy").get<double>(), j.at("width").get<std::size_t>(), j.at("height").get<std::size_t>()};
  k.validate();
  return k;
}

inline nlohmann::json scene_to_json(const SceneSpec& spec, std::uint64_t seed) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : spec.primitives) {
    prims.push_back({{"kind", p.kind == PrimitiveKind::plane ? "plane" : "box"},
                     {"pose", to_string(p.pose)},
                     {"half_extents", {p.half_extents.x(), p.half_extents.y(), p.half_extents.z()}},
                     {"albedo", {p.albedo.x(), p.albedo.y(), p.albedo.z()}}});
  }
  return {{"format", "lccal-scene"},
          {"version", 1},
          {"seed", seed},
          {"intrinsics", to_json(spec.intrinsics)},
          {"T_LC", to_string(spec.T_LC)},
          {"num_points", spec.num_points},
          {"lidar_occlusion", spec.lidar_occlusion},
          {"primitives", prims}};
}

/// Returns the spec and its generation seed.
inline std::pair<SceneSpec, std::uint64_t> scene_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "lccal-scene" || j.at("version").get<int>() != 1)
      throw ParseError("scene: unsupported format/version");
    SceneSpec spec;
    spec.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    spec.T_LC = parse_transform(j.at("T_LC").get<std::string>());
    spec.num_points = j.at("num_points").get<std::size_t>();
    spec.lidar_occlusion = j.at("lidar_occlusion").get<bool>();
    for (const auto& pj : j.at("primitives")) {
      Primitive p;
      const auto kind = pj.at("kind").get<std::string>();
      if (kind == "plane") p.kind = PrimitiveKind::plane;
      else if (kind == "box") p.kind = PrimitiveKind::box;
      else throw ParseError("scene: unknown primitive kind '" + kind + "'");
      p.pose = parse_transform(pj.at("pose").get<std::string>());
      const auto h = pj.at("half_extents").get<std::vector<double>>();
      const auto a = pj.at("albedo").get<std::vector<double>>();
      if (h.size() != 3 || a.size() != 3) throw ParseError("scene: half_extents and albedo need 3 values");
      p.half_extents = {h[0], h[1], h[2]};
      p.albedo = {a[0], a[1], a[2]};
      spec.primitives.push_back(p);
    }
    spec.validate();
    return {spec, j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
}

/// A scene set file: {"format": "lccal-scene-set", "version": 1, "scenes": [...]}.
inline nlohmann::json scene_set_to_json(const std::vector<std::pair<SceneSpec, std::uint64_t>>& scenes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [spec, seed] : scenes) arr.push_back(scene_to_json(spec, seed));
  return {{"format", "lccal-scene-set"}, {"version", 1}, {"scenes", arr}};
}

inline std::vector<std::pair<SceneSpec, std::uint64_t>> scene_set_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "lccal-scene-set" || j.at("version").get<int>() != 1)
      throw ParseError("scene set: unsupported format/version");
    std::vector<std::pair<SceneSpec, std::uint64_t>> out;
    for (const auto& s : j.at("scenes")) out.push_back(scene_from_json(s));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene set: ") + e.what());
  }
}

/// Deterministic synthetic dataset: scene i uses seed derive_seed(seed, i).
inline std::vector<std::pair<SceneSpec, std::uint64_t>> make_scene_set(std::size_t count, std::uint64_t seed,
                                                                      const SceneOptions& opt = {}) {
  std::vector<std::pair<SceneSpec, std::uint64_t>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, 0x5ce5e7, i);
    out.emplace_back(random_scene_spec(s, opt), s);
  }
  return out;
}

}  // namespace lccal
