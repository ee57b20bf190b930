#pragma once

// Calibration network: two symmetric residual branches (RGB with ReLU, depth
// with leaky ReLU), a local correlation layer between their feature maps, and
// a regression head with a shared hidden layer feeding separate translation
// and rotation stacks. Outputs t_pred (3) and a unit quaternion q_pred (4).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lccal/costvolume.hpp"
#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

enum class HeadPooling {
  flatten,         ///< the whole (slots x h x w) cost volume feeds the head
  global_average,  ///< one value per correlation slot
};

struct ModelConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 128;
  /// One stride-2 residual stage per entry; total stride is 2^stages.
  std::vector<std::size_t> channels = {8, 16, 32, 32, 32};
  std::size_t correlation_radius = 2;
  /// Optional stride-2 3x3 conv layers over the cost volume before the head.
  std::vector<std::size_t> aggregation;
  std::size_t head_hidden = 512;
  std::size_t branch_hidden = 128;
  double leaky_slope = 0.1;
  HeadPooling pooling = HeadPooling::flatten;
  /// Multiplier on the init bound of the two output layers, so an untrained
  /// model starts close to the identity deviation.
  double output_init_scale = 0.01;
  std::uint64_t seed = 0;

  std::size_t stride() const { return std::size_t{1} << channels.size(); }
  std::size_t feature_height() const { return input_height / stride(); }
  std::size_t feature_width() const { return input_width / stride(); }

  std::size_t head_input_size() const {
    const std::size_t slots = aggregation.empty() ? correlation_channels(correlation_radius) : aggregation.back();
    if (pooling != HeadPooling::flatten) return slots;
    const std::size_t shrink = std::size_t{1} << aggregation.size();
    return slots * (feature_height() / shrink) * (feature_width() / shrink);
  }

  void validate() const {
    if (channels.empty()) throw ConfigError("model: at least one stage is required");
    for (std::size_t c : channels)
      if (c == 0) throw ConfigError("model: stage widths must be positive");
    if (channels.size() > 16) throw ConfigError("model: too many stages");
    if (input_height == 0 || input_width == 0 || input_height % stride() != 0 || input_width % stride() != 0) {
      throw ConfigError("model: total stride " + std::to_string(stride()) + " does not divide input " +
                        std::to_string(input_height) + "x" + std::to_string(input_width));
    }
    for (std::size_t c : aggregation)
      if (c == 0) throw ConfigError("model: aggregation widths must be positive");
    if (aggregation.size() > 16 || input_height % (stride() << aggregation.size()) != 0 ||
        input_width % (stride() << aggregation.size()) != 0) {
      throw ConfigError("model: aggregation layers do not divide the " + std::to_string(feature_height()) + "x" +
                        std::to_string(feature_width()) + " cost volume");
    }
    if (head_hidden == 0 || branch_hidden == 0) throw ConfigError("model: head widths must be >= 1");
    if (!(leaky_slope >= 0.0)) throw ConfigError("model: leaky slope must be non-negative");
  }
};

inline constexpr int kModelConfigVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"format", "lccal-model-config"},
          {"version", kModelConfigVersion},
          {"input_height", c.input_height},
          {"input_width", c.input_width},
          {"channels", c.channels},
          {"correlation_radius", c.correlation_radius},
          {"aggregation", c.aggregation},
          {"head_hidden", c.head_hidden},
          {"branch_hidden", c.branch_hidden},
          {"leaky_slope", c.leaky_slope},
          {"pooling", c.pooling == HeadPooling::flatten ? "flatten" : "global_average"},
          {"output_init_scale", c.output_init_scale},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "lccal-model-config") throw ConfigError("model config: wrong or missing format tag");
    if (j.at("version").get<int>() != kModelConfigVersion) {
      throw ConfigError("model config: unsupported version " + j.at("version").dump());
    }
    ModelConfig c;
    c.input_height = j.at("input_height").get<std::size_t>();
    c.input_width = j.at("input_width").get<std::size_t>();
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.correlation_radius = j.at("correlation_radius").get<std::size_t>();
    c.aggregation = j.value("aggregation", std::vector<std::size_t>{});
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.branch_hidden = j.at("branch_hidden").get<std::size_t>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    const std::string pooling = j.at("pooling").get<std::string>();
    if (pooling == "flatten") {
      c.pooling = HeadPooling::flatten;
    } else if (pooling == "global_average") {
      c.pooling = HeadPooling::global_average;
    } else {
      throw ConfigError("model config: unknown pooling '" + pooling + "'");
    }
    c.output_init_scale = j.at("output_init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

struct ForwardResult {
  Tensor translation;     ///< (3), meters
  Tensor quaternion;      ///< (4), unit norm, (w, x, y, z)
  Tensor raw_quaternion;  ///< (4), before normalization
  Tensor rgb_features;
  Tensor depth_features;
  Tensor cost_volume;
  bool degenerate_quaternion = false;  ///< raw norm hit the epsilon guard
};

inline constexpr double kQuaternionEpsilon = 1e-12;

class CalibrationModel {
 public:
  explicit CalibrationModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    build_branch("rgb", 3, rng);
    build_branch("depth", 1, rng);
    std::size_t agg_in = correlation_channels(config_.correlation_radius);
    for (std::size_t i = 0; i < config_.aggregation.size(); ++i) {
      add_conv("head.agg" + std::to_string(i), agg_in, config_.aggregation[i], 3, rng);
      agg_in = config_.aggregation[i];
    }
    const std::size_t hidden = config_.head_hidden, branch = config_.branch_hidden;
    add_linear("head.fc", config_.head_input_size(), hidden, 1.0, rng);
    add_linear("head.translation.fc1", hidden, branch, 1.0, rng);
    add_linear("head.translation.fc2", branch, 3, config_.output_init_scale, rng);
    add_linear("head.rotation.fc1", hidden, branch, 1.0, rng);
    add_linear("head.rotation.fc2", branch, 4, config_.output_init_scale, rng);
    // Raw quaternion starts at the identity rotation.
    params_[index_of("head.rotation.fc2.bias")].value.mutable_data()[0] = 1.0;
  }

  CalibrationModel(const CalibrationModel& o) : config_(o.config_), index_(o.index_) {
    for (const NamedTensor& p : o.params_) params_.push_back({p.name, p.value.clone()});
  }
  CalibrationModel& operator=(const CalibrationModel& o) {
    if (this != &o) *this = CalibrationModel(o);
    return *this;
  }
  CalibrationModel(CalibrationModel&&) noexcept = default;
  CalibrationModel& operator=(CalibrationModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }

  const std::vector<NamedTensor>& parameters() const { return params_; }

  /// Parameter tensors sharing storage with the model (for the optimizer).
  std::vector<Tensor> parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const NamedTensor& p : params_) out.push_back(p.value);
    return out;
  }

  const Tensor& parameter(const std::string& name) const { return params_[index_of(name)].value; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const NamedTensor& p : params_) n += p.value.numel();
    return n;
  }

  /// Copies values from `tensors`; names and shapes must match exactly.
  void load_parameters(const std::vector<NamedTensor>& tensors) {
    if (tensors.size() != params_.size()) {
      throw ShapeError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                       std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const NamedTensor& src = tensors[i];
      NamedTensor& dst = params_[i];
      if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
        throw ShapeError("checkpoint tensor '" + src.name + "' " + shape_string(src.value.shape()) +
                         " does not match model tensor '" + dst.name + "' " + shape_string(dst.value.shape()));
      }
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto dst = params_[i].value.mutable_data();
      std::copy(tensors[i].value.data().begin(), tensors[i].value.data().end(), dst.begin());
    }
  }

  /// Feature map of one branch ("rgb" or "depth"): (channels.back(), H/stride, W/stride).
  Tensor extract_features(const std::string& branch, const Tensor& input, Tape* tape = nullptr) const {
    const bool leaky = branch == "depth";
    auto act = [&](const Tensor& t) { return leaky ? leaky_relu(t, config_.leaky_slope) : relu(t); };
    Tensor x = input;
    for (std::size_t s = 0; s < config_.channels.size(); ++s) {
      const std::string prefix = branch + ".stage" + std::to_string(s);
      Tensor y = act(conv2d(x, param(prefix + ".conv1.weight", tape), param(prefix + ".conv1.bias", tape), {2, 1}));
      y = conv2d(y, param(prefix + ".conv2.weight", tape), param(prefix + ".conv2.bias", tape), {1, 1});
      Tensor shortcut = conv2d(x, param(prefix + ".proj.weight", tape), param(prefix + ".proj.bias", tape), {2, 0});
      x = act(add(y, shortcut));
    }
    return x;
  }

  /// rgb: (3, H, W), depth: (1, H, W). With a tape, every parameter is watched
  /// on it and the outputs are differentiable.
  ForwardResult forward(const Tensor& rgb, const Tensor& depth, Tape* tape = nullptr) const {
    const Shape rgb_shape{3, config_.input_height, config_.input_width};
    const Shape depth_shape{1, config_.input_height, config_.input_width};
    if (rgb.shape() != rgb_shape) {
      throw ShapeError("model: rgb input " + shape_string(rgb.shape()) + ", expected " + shape_string(rgb_shape));
    }
    if (depth.shape() != depth_shape) {
      throw ShapeError("model: depth input " + shape_string(depth.shape()) + ", expected " + shape_string(depth_shape));
    }
    ForwardResult out;
    out.rgb_features = extract_features("rgb", rgb, tape);
    out.depth_features = extract_features("depth", depth, tape);
    out.cost_volume = correlation(out.rgb_features, out.depth_features, config_.correlation_radius);

    const double slope = config_.leaky_slope;
    Tensor agg = out.cost_volume;
    for (std::size_t i = 0; i < config_.aggregation.size(); ++i) {
      const std::string name = "head.agg" + std::to_string(i);
      agg = leaky_relu(conv2d(agg, param(name + ".weight", tape), param(name + ".bias", tape), {2, 1}), slope);
    }
    Tensor pooled = config_.pooling == HeadPooling::flatten ? reshape(agg, {agg.numel()}) : spatial_mean(agg);
    Tensor hidden = leaky_relu(linear(pooled, param("head.fc.weight", tape), param("head.fc.bias", tape)), slope);

    Tensor t = leaky_relu(
        linear(hidden, param("head.translation.fc1.weight", tape), param("head.translation.fc1.bias", tape)), slope);
    out.translation = linear(t, param("head.translation.fc2.weight", tape), param("head.translation.fc2.bias", tape));

    Tensor r = leaky_relu(
        linear(hidden, param("head.rotation.fc1.weight", tape), param("head.rotation.fc1.bias", tape)), slope);
    out.raw_quaternion = linear(r, param("head.rotation.fc2.weight", tape), param("head.rotation.fc2.bias", tape));

    double n2 = 0.0;
    for (double v : out.raw_quaternion.data()) n2 += v * v;
    out.degenerate_quaternion = !(std::sqrt(n2) > kQuaternionEpsilon);
    out.quaternion = l2_normalize(out.raw_quaternion, kQuaternionEpsilon);
    return out;
  }

  void save(const std::string& checkpoint_path) const {
    save_checkpoint(checkpoint_path, params_);
    std::ofstream os(checkpoint_path + ".json");
    if (!os) throw IoError("cannot write model config '" + checkpoint_path + ".json'");
    os << to_json(config_).dump(2) << '\n';
  }

  /// Reads `<path>.json` for the architecture, then the weights from `<path>`.
  static CalibrationModel load(const std::string& checkpoint_path) {
    std::ifstream is(checkpoint_path + ".json");
    if (!is) throw IoError("cannot open model config '" + checkpoint_path + ".json'");
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config '" + checkpoint_path + ".json': " + e.what());
    }
    CalibrationModel m(model_config_from_json(j));
    m.load_parameters(load_checkpoint(checkpoint_path));
    return m;
  }

 private:
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < index_.size(); ++i)
      if (index_[i] == name) return i;
    throw ContractError("model has no parameter '" + name + "'");
  }

  Tensor param(const std::string& name, Tape* tape) const {
    const Tensor& p = params_[index_of(name)].value;
    return tape ? tape->watch(p) : p;
  }

  void add_param(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> values(shape_numel(shape), 0.0);
    if (bound > 0.0)
      for (double& v : values) v = bound * dist(rng);
    params_.push_back({name, Tensor(std::move(shape), std::move(values))});
    index_.push_back(name);
  }

  // He-uniform bound sqrt(6 / fan_in); biases start at zero.
  void add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng) {
    add_param(name + ".weight", {out, in, k, k}, std::sqrt(6.0 / static_cast<double>(in * k * k)), rng);
    add_param(name + ".bias", {out}, 0.0, rng);
  }

  void add_linear(const std::string& name, std::size_t in, std::size_t out, double gain, std::mt19937_64& rng) {
    add_param(name + ".weight", {out, in}, gain * std::sqrt(6.0 / static_cast<double>(in)), rng);
    add_param(name + ".bias", {out}, 0.0, rng);
  }

  void build_branch(const std::string& branch, std::size_t in_channels, std::mt19937_64& rng) {
    std::size_t in = in_channels;
    for (std::size_t s = 0; s < config_.channels.size(); ++s) {
      const std::size_t out = config_.channels[s];
      const std::string prefix = branch + ".stage" + std::to_string(s);
      add_conv(prefix + ".conv1", in, out, 3, rng);
      add_conv(prefix + ".conv2", out, out, 3, rng);
      add_conv(prefix + ".proj", in, out, 1, rng);
      in = out;
    }
  }

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<std::string> index_;
};

inline CalibrationModel build_model(const ModelConfig& config) { return CalibrationModel(config); }

/// T_pred = [R(q_pred) t_pred; 0 1]. The quaternion is renormalized.
inline Transform predict_transform(const Tensor& t_pred, const Tensor& q_pred) {
  if (t_pred.numel() != 3 || q_pred.numel() != 4) {
    throw ShapeError("predict_transform: expected (3) and (4), got " + shape_string(t_pred.shape()) + " and " +
                     shape_string(q_pred.shape()));
  }
  return {quat_to_rotmat(Quaternion(q_pred[0], q_pred[1], q_pred[2], q_pred[3])), Vec3(t_pred[0], t_pred[1], t_pred[2])};
}

}  // namespace lccal
