#pragma once

// Training per miscalibration range, the multi-range refinement cascade,
// multi-frame median filtering and calibration error metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/image_io.hpp"
#include "lccal/io.hpp"
#include "lccal/losses.hpp"
#include "lccal/model.hpp"
#include "lccal/parallel.hpp"
#include "lccal/perturb.hpp"
#include "lccal/projection.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

// ---------------------------------------------------------------- training

/// One network input with its regression target.
struct TrainingSample {
  Tensor rgb;    ///< (3, H, W)
  Tensor depth;  ///< (1, H, W), rendered at t_init
  Transform delta;
  Transform t_init;
  Transform T_LC;
  std::vector<Vec3> loss_points;  ///< LiDAR-frame points for the point-cloud term
  std::size_t frame_index = 0;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  AdamOptions adam;
  LossWeights weights;
  std::uint64_t seed = 0;
  double max_depth = kDefaultMaxDepth;
  std::size_t max_loss_points = 0;  ///< cap on point-loss points (0 = all in view)
  std::size_t jobs = 1;
  /// Learning rate is multiplied by lr_decay every lr_decay_every steps (0 = constant).
  std::size_t lr_decay_every = 0;
  double lr_decay = 1.0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch size must be positive");
    if (!(max_depth > 0.0)) throw ConfigError("train: max depth must be positive");
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("train: learning rate must be non-negative");
    if (!(lr_decay > 0.0)) throw ConfigError("train: learning-rate decay must be positive");
    weights.validate();
  }
};

/// Every `stride`-th point so that at most `max_points` remain (0 = all).
inline std::vector<Vec3> subsample_points(std::vector<Vec3> points, std::size_t max_points) {
  const std::size_t n = points.size();
  if (max_points == 0 || n <= max_points) return points;
  const std::size_t stride = (n + max_points - 1) / max_points;
  std::vector<Vec3> out;
  out.reserve(n / stride + 1);
  for (std::size_t i = 0; i < n; i += stride) out.push_back(points[i]);
  return out;
}

/// Points that project into the image at `extrinsic`; the whole cloud when
/// none does, so the point-cloud loss stays defined.
inline std::vector<Vec3> points_in_view(const PointCloud& cloud, const Transform& extrinsic,
                                        const CameraIntrinsics& k) {
  std::vector<Vec3> out;
  for (const ProjectedPoint& p : project_points(cloud, extrinsic, k)) out.push_back(cloud.points[p.index]);
  if (out.empty()) out = cloud.points;
  return out;
}

inline Tensor depth_input(const PointCloud& cloud, const Transform& extrinsic, const CameraIntrinsics& k,
                          double max_depth) {
  return normalize_depth(render_depth(cloud, extrinsic, k), max_depth);
}

/// Perturbs `frame` with the deviation drawn from `seed`.
inline TrainingSample make_training_sample(const CalibrationFrame& frame, const Tensor& rgb, const RangeSpec& range,
                                           std::uint64_t seed, double max_depth, std::size_t max_loss_points) {
  const DeviationSample dev = sample_deviation(range, seed);
  TrainingSample s;
  s.rgb = rgb;
  s.delta = dev.delta;
  s.T_LC = frame.T_LC;
  s.t_init = make_initial_extrinsic(frame.T_LC, dev.delta);
  s.depth = depth_input(frame.cloud, s.t_init, frame.intrinsics, max_depth);
  s.loss_points = subsample_points(points_in_view(frame.cloud, s.t_init, frame.intrinsics), max_loss_points);
  s.seed = seed;
  return s;
}

/// The batch used at optimizer step `step`: frames and deviations are drawn
/// from seeds derived from (opts.seed, step, slot), so any batch can be
/// rebuilt independently of the others.
inline std::vector<TrainingSample> training_batch(std::span<const CalibrationFrame> frames,
                                                  std::span<const Tensor> rgb, const RangeSpec& range,
                                                  const TrainOptions& opts, std::size_t step) {
  if (frames.empty()) throw ConfigError("train: empty dataset");
  std::vector<TrainingSample> batch(opts.batch_size);
  parallel_for(opts.batch_size, opts.jobs, [&](std::size_t b) {
    const std::size_t f = derive_seed(opts.seed, 0xf7a3e, step * opts.batch_size + b) % frames.size();
    const std::uint64_t dev_seed = derive_seed(opts.seed, 0xde7, step * opts.batch_size + b);
    batch[b] = make_training_sample(frames[f], rgb[f], range, dev_seed, opts.max_depth, opts.max_loss_points);
    batch[b].frame_index = f;
  });
  return batch;
}

inline std::vector<Tensor> frame_rgb_tensors(std::span<const CalibrationFrame> frames) {
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(rgb_tensor(f.image));
  return out;
}

struct LossRecord {
  std::int64_t step = 0;
  double translation = 0, rotation = 0, point_cloud = 0, total = 0;
};

struct BatchLoss {
  LossRecord mean;
  std::vector<std::vector<double>> gradients;  ///< mean over the batch, one per parameter
};

/// Mean loss over `batch`; with `with_gradients`, also the mean parameter
/// gradient. Per-sample tapes run in parallel and are reduced in slot order.
inline BatchLoss batch_loss(const CalibrationModel& model, std::span<const TrainingSample> batch,
                            const LossWeights& weights, bool with_gradients, std::size_t jobs = 1) {
  if (batch.empty()) throw ConfigError("batch loss: empty batch");
  const std::vector<Tensor> params = model.parameter_tensors();
  std::vector<LossRecord> rec(batch.size());
  std::vector<std::vector<std::vector<double>>> grads(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    const TrainingSample& s = batch[i];
    Tape tape;
    Tape* tp = with_gradients ? &tape : nullptr;
    const ForwardResult fr = model.forward(s.rgb, s.depth, tp);
    const LossTerms lt = total_loss(fr.translation, fr.quaternion, s.delta, s.loss_points, s.T_LC, s.t_init, weights);
    rec[i] = {0, lt.translation.item(), lt.rotation.item(), lt.point_cloud.defined() ? lt.point_cloud.item() : 0.0,
              lt.total.item()};
    if (!with_gradients) return;
    tape.backward(lt.total);
    grads[i].reserve(params.size());
    for (const Tensor& p : params) grads[i].push_back(tape.grad(p));
  });
  BatchLoss out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const LossRecord& r : rec) {
    out.mean.translation += r.translation * inv;
    out.mean.rotation += r.rotation * inv;
    out.mean.point_cloud += r.point_cloud * inv;
    out.mean.total += r.total * inv;
  }
  if (with_gradients) {
    out.gradients.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      out.gradients[k].assign(params[k].numel(), 0.0);
      for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t j = 0; j < params[k].numel(); ++j) out.gradients[k][j] += grads[i][k][j] * inv;
    }
  }
  return out;
}

/// Copies the weights of a (larger-range) donor checkpoint into `model`.
inline void warm_start(CalibrationModel& model, const std::string& checkpoint_path) {
  model.load_parameters(load_checkpoint(checkpoint_path));
}

/// Trains `model` in place on deviations drawn from `range`. One loss record
/// (measured before the update) per step; rows are also streamed to `csv`.
inline std::vector<LossRecord> train_range(CalibrationModel& model, std::span<const CalibrationFrame> frames,
                                           const RangeSpec& range, const TrainOptions& opts,
                                           std::ostream* csv = nullptr,
                                           const std::function<void(const LossRecord&)>& on_step = {}) {
  opts.validate();
  range.validate();
  if (frames.empty()) throw ConfigError("train: empty dataset");
  const std::vector<Tensor> rgb = frame_rgb_tensors(frames);
  std::vector<Tensor> params = model.parameter_tensors();
  Adam adam(opts.adam);
  std::vector<LossRecord> curve;
  curve.reserve(opts.steps);
  if (csv) write_loss_csv_header(*csv);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    if (opts.lr_decay_every > 0 && step > 0 && step % opts.lr_decay_every == 0)
      adam.set_learning_rate(adam.options().learning_rate * opts.lr_decay);
    const auto batch = training_batch(frames, rgb, range, opts, step);
    BatchLoss bl = batch_loss(model, batch, opts.weights, true, opts.jobs);
    adam.step(params, bl.gradients);
    bl.mean.step = static_cast<std::int64_t>(step);
    curve.push_back(bl.mean);
    if (csv) {
      write_loss_csv_row(*csv, bl.mean.step, bl.mean.translation, bl.mean.rotation, bl.mean.point_cloud, bl.mean.total);
      csv->flush();
    }
    if (on_step) on_step(bl.mean);
  }
  return curve;
}

// ---------------------------------------------------------------- cascade

/// One refinement stage: given the frame and the current extrinsic, returns
/// the predicted deviation T_k (current ~= T_k * T_LC).
class StagePredictor {
 public:
  virtual ~StagePredictor() = default;
  virtual Transform predict(const CalibrationFrame& frame, const Transform& current, const DepthImage& depth) const = 0;
};

class ModelPredictor final : public StagePredictor {
 public:
  explicit ModelPredictor(std::shared_ptr<const CalibrationModel> model, double max_depth = kDefaultMaxDepth)
      : model_(std::move(model)), max_depth_(max_depth) {
    if (!model_) throw ContractError("model predictor: null model");
  }
  Transform predict(const CalibrationFrame& frame, const Transform&, const DepthImage& depth) const override {
    const ForwardResult fr = model_->forward(rgb_tensor(frame.image), normalize_depth(depth, max_depth_));
    return predict_transform(fr.translation, fr.quaternion);
  }

 private:
  std::shared_ptr<const CalibrationModel> model_;
  double max_depth_;
};

/// Returns the exact remaining deviation current * T_LC^-1.
class OraclePredictor final : public StagePredictor {
 public:
  Transform predict(const CalibrationFrame& frame, const Transform& current, const DepthImage&) const override {
    return se3_compose(current, se3_inverse(frame.T_LC));
  }
};

class FixedPredictor final : public StagePredictor {
 public:
  explicit FixedPredictor(Transform output) : output_(std::move(output)) {}
  Transform predict(const CalibrationFrame&, const Transform&, const DepthImage&) const override { return output_; }

 private:
  Transform output_;
};

struct CascadeStage {
  RangeSpec range;
  std::string checkpoint;
};

/// JSON: {"stages": [{"range": "1.5:20", "checkpoint": "r0.ckpt"}, ...]};
/// relative checkpoint paths resolve against the config file's directory.
struct CascadeConfig {
  std::vector<CascadeStage> stages;

  void validate() const {
    if (stages.empty()) throw ConfigError("cascade: needs at least one stage");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].range.validate();
      if (i > 0 && !(stages[i].range.max_translation < stages[i - 1].range.max_translation &&
                     stages[i].range.max_rotation < stages[i - 1].range.max_rotation)) {
        throw ConfigError("cascade: stage " + std::to_string(i) + " range " + stages[i].range.to_string() +
                          " is not strictly smaller than " + stages[i - 1].range.to_string());
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : stages) arr.push_back({{"range", s.range.to_string()}, {"checkpoint", s.checkpoint}});
    return {{"stages", arr}};
  }

  static CascadeConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    CascadeConfig c;
    try {
      for (const auto& s : j.at("stages")) {
        std::filesystem::path ckpt = s.at("checkpoint").get<std::string>();
        if (ckpt.is_relative() && !base.empty()) ckpt = base / ckpt;
        c.stages.push_back({RangeSpec::parse(s.at("range").get<std::string>()), ckpt.string()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("cascade: ") + e.what());
    } catch (const ParseError& e) {
      throw ConfigError(std::string("cascade: ") + e.what());
    }
    c.validate();
    return c;
  }

  static CascadeConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cascade config '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cascade '" + path + "': " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path());
  }
};

inline std::vector<std::shared_ptr<const StagePredictor>> load_cascade_models(const CascadeConfig& cfg,
                                                                             double max_depth = kDefaultMaxDepth) {
  cfg.validate();
  std::vector<std::shared_ptr<const StagePredictor>> out;
  for (const auto& s : cfg.stages) {
    if (!std::filesystem::exists(s.checkpoint)) throw IoError("cascade: missing checkpoint '" + s.checkpoint + "'");
    auto model = std::make_shared<const CalibrationModel>(CalibrationModel::load(s.checkpoint));
    out.push_back(std::make_shared<ModelPredictor>(model, max_depth));
  }
  return out;
}

struct CalibrationEstimate {
  Transform initial;               ///< T_init
  Transform estimate;              ///< refined T_LC
  std::vector<Transform> stages;   ///< T_0 .. T_k
  std::vector<double> fill_ratios; ///< depth-image fill ratio seen by each stage

  /// (T_0 * T_1 * ... * T_k)^-1 * T_init.
  Transform closed_form() const {
    Transform product = Transform::identity();
    for (const auto& t : stages) product = se3_compose(product, t);
    return se3_compose(se3_inverse(product), initial);
  }
};

/// Stage k renders the full cloud at the running extrinsic, predicts T_k and
/// updates current <- T_k^-1 * current.
inline CalibrationEstimate refine_cascade(const CalibrationFrame& frame, const Transform& t_init,
                                          std::span<const std::shared_ptr<const StagePredictor>> stages) {
  if (stages.empty()) throw ConfigError("cascade: needs at least one stage");
  CalibrationEstimate est;
  est.initial = t_init;
  Transform current = t_init;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const DepthImage depth = render_depth(frame.cloud, current, frame.intrinsics);
    est.fill_ratios.push_back(depth.fill_ratio());
    const Transform tk = stages[k]->predict(frame, current, depth);
    if (!tk.is_finite()) throw CascadeError("cascade: stage " + std::to_string(k) + " produced a non-finite transform", k);
    est.stages.push_back(tk);
    current = se3_compose(se3_inverse(tk), current);
  }
  est.estimate = current;
  return est;
}

// ---------------------------------------------------------------- filtering

namespace detail {
inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}
}  // namespace detail

/// Component-wise median of translations and of roll/pitch/yaw; even counts
/// average the two middle values.
inline Transform temporal_filter(std::span<const Transform> transforms) {
  if (transforms.empty()) throw ConfigError("temporal filter: no estimates");
  std::array<std::vector<double>, 6> comp;
  for (const Transform& t : transforms) {
    const EulerRPY e = rotmat_to_euler_rpy(t.rotation);
    const double vals[6] = {t.translation.x(), t.translation.y(), t.translation.z(), e.roll, e.pitch, e.yaw};
    for (int i = 0; i < 6; ++i) comp[static_cast<std::size_t>(i)].push_back(vals[i]);
  }
  std::array<double, 6> m{};
  for (std::size_t i = 0; i < 6; ++i) m[i] = detail::median_of(comp[i]);
  return {euler_rpy_to_rotmat({m[3], m[4], m[5]}), Vec3(m[0], m[1], m[2])};
}

inline Transform temporal_filter(std::span<const CalibrationEstimate> estimates) {
  std::vector<Transform> t;
  t.reserve(estimates.size());
  for (const auto& e : estimates) t.push_back(e.estimate);
  return temporal_filter(std::span<const Transform>(t));
}

/// Frame i gets the median over the trailing window [i - window + 1, i];
/// window 0 uses the whole sequence for every frame.
inline std::vector<Transform> filter_sequence(std::span<const Transform> transforms, std::size_t window) {
  std::vector<Transform> out;
  out.reserve(transforms.size());
  if (window == 0) {
    if (!transforms.empty()) out.assign(transforms.size(), temporal_filter(transforms));
    return out;
  }
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    out.push_back(temporal_filter(transforms.subspan(lo, i + 1 - lo)));
  }
  return out;
}

// ---------------------------------------------------------------- metrics

/// Calibration error of one estimate. Translations in cm, angles in degrees.
struct FrameError {
  double t = 0, x = 0, y = 0, z = 0;
  double r = 0, roll = 0, pitch = 0, yaw = 0;

  std::array<double, 8> values() const { return {t, x, y, z, r, roll, pitch, yaw}; }
};

/// E_t = |t_pred - t_gt|, per-axis absolute differences, E_R the quaternion
/// angular distance. Roll/pitch/yaw are the Euler angles of the residual
/// rotation R_pred * R_gt^T, which stays away from gimbal lock for small
/// errors even when the extrinsics themselves (e.g. LiDAR x -> camera z) do not.
inline FrameError evaluate(const Transform& pred, const Transform& gt) {
  FrameError e;
  const Vec3 dt = pred.translation - gt.translation;
  e.t = 100.0 * dt.norm();
  e.x = 100.0 * std::abs(dt.x());
  e.y = 100.0 * std::abs(dt.y());
  e.z = 100.0 * std::abs(dt.z());
  e.r = rad_to_deg(angular_distance(rotmat_to_quat(pred.rotation), rotmat_to_quat(gt.rotation)));
  const bool same = pred.rotation.matrix() == gt.rotation.matrix();
  const EulerRPY res = same ? EulerRPY{} : rotmat_to_euler_rpy(pred.rotation * gt.rotation.transpose());
  e.roll = rad_to_deg(std::abs(res.roll));
  e.pitch = rad_to_deg(std::abs(res.pitch));
  e.yaw = rad_to_deg(std::abs(res.yaw));
  return e;
}

inline const std::array<const char*, 8>& error_columns() {
  static const std::array<const char*, 8> cols{"E_t", "X", "Y", "Z", "E_R", "Roll", "Pitch", "Yaw"};
  return cols;
}

struct ErrorReport {
  std::size_t count = 0;
  FrameError mean, median, std;  ///< std is the population standard deviation
};

inline ErrorReport summarize(std::span<const FrameError> errors) {
  if (errors.empty()) throw ConfigError("error report: no frames");
  const double n = static_cast<double>(errors.size());
  std::array<std::array<double, 8>, 3> agg{};
  for (std::size_t c = 0; c < 8; ++c) {
    std::vector<double> col;
    col.reserve(errors.size());
    for (const auto& e : errors) col.push_back(e.values()[c]);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    agg[0][c] = mean;
    agg[1][c] = detail::median_of(col);
    agg[2][c] = std::sqrt(var / n);
  }
  auto unpack = [](const std::array<double, 8>& a) { return FrameError{a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]}; };
  return {errors.size(), unpack(agg[0]), unpack(agg[1]), unpack(agg[2])};
}

inline void write_error_csv_header(std::ostream& os) {
  os << "stat";
  for (const char* c : error_columns()) os << ',' << c;
  os << '\n';
}

inline void write_error_csv_row(std::ostream& os, const std::string& label, const FrameError& e) {
  os << label;
  char buf[32];
  for (double v : e.values()) {
    std::snprintf(buf, sizeof(buf), ",%.9g", v);
    os << buf;
  }
  os << '\n';
}

/// Header plus Mean, Median and Std rows.
inline void write_error_csv(std::ostream& os, const ErrorReport& r) {
  write_error_csv_header(os);
  write_error_csv_row(os, "Mean", r.mean);
  write_error_csv_row(os, "Median", r.median);
  write_error_csv_row(os, "Std", r.std);
}

}  // namespace lccal
