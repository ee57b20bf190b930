#pragma once

// Desk-scale learning experiment: train on synthetic scenes perturbed in a
// small range and measure how much of the injected deviation one forward
// pass removes on held-out scenes.

#include <chrono>
#include <functional>

#include <nlohmann/json.hpp>

#include "lccal/io.hpp"
#include "lccal/model.hpp"
#include "lccal/parallel.hpp"
#include "lccal/pipeline.hpp"

namespace lccal {

struct DeskExperimentConfig {
  std::size_t train_scenes = 200;
  std::size_t test_scenes = 50;
  std::uint64_t train_seed = 11;
  std::uint64_t test_seed = 12;
  std::uint64_t deviation_seed = 99;  ///< held-out deviations
  RangeSpec range = RangeSpec::from_degrees(0.1, 1.0);
  SceneOptions scenes;
  ModelConfig model;
  TrainOptions train;
  std::size_t eval_every = 0;  ///< held-out evaluation interval in steps (0 = only at the end)

  DeskExperimentConfig() {
    // Two stages (stride 4) with a narrow head; wider heads and deeper
    // strides fit the training scenes no better and overfit sooner.
    model.channels = {8, 16};
    model.head_hidden = 64;
    train.steps = 2000;
    train.batch_size = 16;
    train.adam.learning_rate = 3e-4;
    train.seed = 5;
  }

  void validate() const {
    if (train_scenes == 0 || test_scenes == 0) throw ConfigError("experiment: scene counts must be positive");
    if (model.input_height != scenes.intrinsics.height || model.input_width != scenes.intrinsics.width)
      throw ConfigError("experiment: model input size must match the scene image size");
    range.validate();
    model.validate();
    train.validate();
  }
};

/// Held-out error after (or during) training. Ratios compare mean residual
/// error with the mean injected deviation.
struct DeskEvaluation {
  std::size_t step = 0;
  double injected_rotation_deg = 0, injected_translation_cm = 0;
  double rotation_error_deg = 0, translation_error_cm = 0;

  double rotation_ratio() const { return rotation_error_deg / injected_rotation_deg; }
  double translation_ratio() const { return translation_error_cm / injected_translation_cm; }
};

struct DeskExperimentResult {
  DeskEvaluation before, after;
  std::vector<DeskEvaluation> history;
  std::vector<LossRecord> curve;
  double seconds = 0;
};

inline std::vector<CalibrationFrame> synthetic_frames(std::size_t count, std::uint64_t seed,
                                                      const SceneOptions& opt, std::size_t jobs = 1) {
  const auto specs = make_scene_set(count, seed, opt);
  std::vector<CalibrationFrame> out(count);
  parallel_for(count, jobs, [&](std::size_t i) { out[i] = generate_synthetic_scene(specs[i].first, specs[i].second).frame(); });
  return out;
}

/// Single-pass estimates T_pred^-1 * T_init on `frames`, each perturbed with
/// the deviation drawn from derive_seed(deviation_seed, i).
inline DeskEvaluation evaluate_single_pass(const CalibrationModel& model, std::span<const CalibrationFrame> frames,
                                           const RangeSpec& range, std::uint64_t deviation_seed, double max_depth,
                                           std::size_t jobs = 1) {
  std::vector<std::array<double, 4>> rows(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) {
    const CalibrationFrame& f = frames[i];
    const DeviationSample dev = sample_deviation(range, derive_seed(deviation_seed, i));
    const Transform t_init = make_initial_extrinsic(f.T_LC, dev.delta);
    const ForwardResult fr = model.forward(rgb_tensor(f.image), depth_input(f.cloud, t_init, f.intrinsics, max_depth));
    const Transform est = se3_compose(se3_inverse(predict_transform(fr.translation, fr.quaternion)), t_init);
    const FrameError e = evaluate(est, f.T_LC);
    rows[i] = {rad_to_deg(rotation_angle(dev.delta.rotation)), 100.0 * dev.delta.translation.norm(), e.r, e.t};
  });
  DeskEvaluation out;
  const double inv = 1.0 / static_cast<double>(frames.size());
  for (const auto& r : rows) {
    out.injected_rotation_deg += r[0] * inv;
    out.injected_translation_cm += r[1] * inv;
    out.rotation_error_deg += r[2] * inv;
    out.translation_error_cm += r[3] * inv;
  }
  return out;
}

inline DeskExperimentResult run_desk_experiment(
    const DeskExperimentConfig& cfg, const std::function<void(const DeskEvaluation&)>& on_eval = {},
    std::ostream* loss_csv = nullptr) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t jobs = cfg.train.jobs;
  const auto train = synthetic_frames(cfg.train_scenes, cfg.train_seed, cfg.scenes, jobs);
  const auto test = synthetic_frames(cfg.test_scenes, cfg.test_seed, cfg.scenes, jobs);

  CalibrationModel model(cfg.model);
  auto eval = [&](std::size_t step) {
    DeskEvaluation e = evaluate_single_pass(model, test, cfg.range, cfg.deviation_seed, cfg.train.max_depth, jobs);
    e.step = step;
    return e;
  };
  DeskExperimentResult res;
  res.before = eval(0);
  if (on_eval) on_eval(res.before);
  std::size_t step = 0;
  res.curve = train_range(model, train, cfg.range, cfg.train, loss_csv, [&](const LossRecord&) {
    ++step;
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step < cfg.train.steps) {
      res.history.push_back(eval(step));
      if (on_eval) on_eval(res.history.back());
    }
  });
  res.after = eval(cfg.train.steps);
  res.history.push_back(res.after);
  if (on_eval) on_eval(res.after);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline nlohmann::json to_json(const DeskEvaluation& e) {
  return {{"step", e.step},
          {"injected_rotation_deg", e.injected_rotation_deg},
          {"injected_translation_cm", e.injected_translation_cm},
          {"rotation_error_deg", e.rotation_error_deg},
          {"translation_error_cm", e.translation_error_cm},
          {"rotation_ratio", e.rotation_ratio()},
          {"translation_ratio", e.translation_ratio()}};
}

}  // namespace lccal
