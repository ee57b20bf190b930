// lccal: command-line front end for rendering, perturbation, training,
// cascade calibration, evaluation and the self-test suite.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "lccal/lccal.hpp"
#include "lccal/experiment.hpp"
#include "lccal/testing/acceptance.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lccal;

namespace {

// ---------------------------------------------------------------- logging

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("LCCAL_LOG");
    if (!v || !*v) return 1;
    const std::string s = v;
    if (s == "quiet" || s == "0") return 0;
    if (s == "debug" || s == "2") return 2;
    return 1;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "lccal: " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "lccal: " << msg << '\n';
}

// ---------------------------------------------------------------- provenance

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

/// Resolved options of one run. The hash covers the canonical JSON dump.
struct RunConfig {
  json options = json::object();

  std::string hash() const { return sha256_hex(options.dump()); }

  json meta() const {
    return {{"tool", "lccal"},
            {"version", LCCAL_VERSION},
            {"config", options},
            {"config_hash", hash()},
            {"seed", options.value("seed", std::uint64_t{0})}};
  }
};

// ---------------------------------------------------------------- atomic output

fs::path temp_sibling(const fs::path& target) {
  // Keep the extension: image writers pick the format from it.
  return target.parent_path() /
         (".tmp-" + std::to_string(::getpid()) + "-" + target.stem().string() + target.extension().string());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void commit(const fs::path& tmp, const fs::path& target) {
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move output into place '" + target.string() + "': " + ec.message());
  }
}

void write_text_atomic(const fs::path& target, const std::string& text) {
  ensure_parent(target);
  const fs::path tmp = temp_sibling(target);
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    os << text;
    if (!os.flush()) throw IoError("write failed for '" + tmp.string() + "'");
  }
  commit(tmp, target);
}

/// Runs `writer` on a temporary path next to `target`, then renames.
template <class Fn>
void write_file_atomic(const fs::path& target, Fn&& writer) {
  ensure_parent(target);
  const fs::path tmp = temp_sibling(target);
  try {
    writer(tmp.string());
  } catch (...) {
    fs::remove(tmp);
    throw;
  }
  commit(tmp, target);
}

/// CSV and image artifacts carry their provenance in `<file>.meta.json`.
void write_sidecar(const fs::path& target, const RunConfig& rc) {
  write_text_atomic(fs::path(target.string() + ".meta.json"), rc.meta().dump(2) + "\n");
}

// ---------------------------------------------------------------- shared options

struct DataOptions {
  std::string data_root;
  std::string mode = "synthetic";
  std::string sequence = "00";
  std::string frames;  ///< "a:b" half-open, empty = all
  std::size_t jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--data-root", data_root, "dataset root (KITTI layout or a directory with scenes.json)")
        ->required();
    app->add_option("--mode", mode, "dataset kind")->check(CLI::IsMember({"kitti", "synthetic"}));
    app->add_option("--sequence", sequence, "KITTI sequence id");
    app->add_option("--frames", frames, "frame range a:b (half-open)");
    app->add_option("--jobs", jobs, "worker threads (0 = all cores)");
  }

  void record(json& j) const {
    j["data_root"] = data_root;
    j["mode"] = mode;
    if (mode == "kitti") j["sequence"] = sequence;
    j["frames"] = frames;
    j["jobs"] = jobs;
  }
};

std::pair<std::size_t, std::size_t> parse_frame_range(const std::string& text, std::size_t total) {
  if (text.empty()) return {0, total};
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const std::size_t a = std::stoul(text);
      return {a, a + 1};
    }
    const std::size_t a = colon == 0 ? 0 : std::stoul(text.substr(0, colon));
    const std::size_t b = colon + 1 == text.size() ? total : std::stoul(text.substr(colon + 1));
    if (a >= b || b > total) throw ConfigError("frames: range " + text + " is empty or exceeds " + std::to_string(total));
    return {a, b};
  } catch (const std::logic_error&) {
    throw ParseError("frames: expected a:b, got '" + text + "'");
  }
}

json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open '" + p.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("'" + p.string() + "': " + e.what());
  }
}

/// Loads frames; with a non-zero size, images are resampled to the network input.
std::vector<CalibrationFrame> load_frames(const DataOptions& d, std::size_t width = 0, std::size_t height = 0) {
  std::vector<CalibrationFrame> out;
  if (d.mode == "synthetic") {
    const auto specs = scene_set_from_json(read_json_file(fs::path(d.data_root) / "scenes.json"));
    const auto [a, b] = parse_frame_range(d.frames, specs.size());
    out.resize(b - a);
    parallel_for(b - a, d.jobs, [&](std::size_t i) {
      const auto& [spec, seed] = specs[a + i];
      out[i] = generate_synthetic_scene(spec, seed).frame();
      if (width && (out[i].image.width != width || out[i].image.height != height)) {
        out[i].image = resize_image(out[i].image, width, height);
        out[i].intrinsics = spec.intrinsics.resized(width, height);
      }
    });
  } else {
    const std::size_t total = kitti_frame_count(d.data_root, d.sequence);
    if (total == 0) throw IoError("no velodyne scans under '" + kitti_sequence_dir(d.data_root, d.sequence).string() + "'");
    const auto [a, b] = parse_frame_range(d.frames, total);
    out.resize(b - a);
    parallel_for(b - a, d.jobs, [&](std::size_t i) {
      const KittiFrame f = load_kitti_frame(d.data_root, d.sequence, a + i);
      if (width) {
        out[i] = prepare_frame(f, width, height);
      } else {
        out[i] = {f.image, f.cloud, f.intrinsics, f.T_LC, f.sequence + "/" + kitti_frame_name(f.frame)};
      }
    });
  }
  log_info("loaded " + std::to_string(out.size()) + " frame(s) from " + d.data_root);
  return out;
}

CameraIntrinsics parse_intrinsics(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::size_t w = 0, h = 0;
  if (!(is >> fx >> fy >> cx >> cy >> w >> h)) throw ParseError("intrinsics: expected fx,fy,cx,cy,width,height");
  std::string rest;
  if (is >> rest) throw ParseError("intrinsics: trailing input '" + rest + "'");
  CameraIntrinsics k{fx, fy, cx, cy, w, h};
  k.validate();
  return k;
}

json transform_json(const Transform& t) { return to_string(t); }

Transform transform_from_json(const json& j) { return parse_transform(j.get<std::string>()); }

// ---------------------------------------------------------------- make-scenes

struct MakeScenes {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::string out;
  std::string intrinsics;

  void add(CLI::App* app) {
    app->add_option("--count", count, "number of scenes");
    app->add_option("--seed", seed, "scene-set seed");
    app->add_option("--out", out, "output directory (writes scenes.json)")->required();
    app->add_option("--intrinsics", intrinsics, "fx,fy,cx,cy,width,height (default 100,100,64,32,128,64)");
  }

  int run() const {
    SceneOptions opt;
    if (!intrinsics.empty()) opt.intrinsics = parse_intrinsics(intrinsics);
    RunConfig rc;
    rc.options = {{"command", "make-scenes"}, {"count", count}, {"seed", seed}, {"intrinsics", to_json(opt.intrinsics)}};
    json j = scene_set_to_json(make_scene_set(count, seed, opt));
    j["meta"] = rc.meta();
    const fs::path target = fs::path(out) / "scenes.json";
    write_text_atomic(target, j.dump(1) + "\n");
    log_info("wrote " + std::to_string(count) + " scene specs to " + target.string());
    return 0;
  }
};

// ---------------------------------------------------------------- render-depth

struct RenderDepth {
  DataOptions data;
  std::string velodyne, intrinsics, extrinsic, out, range;
  std::size_t frame = 0;
  std::uint64_t seed = 0;
  double max_depth = kDefaultMaxDepth;

  void add(CLI::App* app) {
    app->add_option("--velodyne", velodyne, "raw velodyne .bin (instead of a dataset frame)");
    app->add_option("--intrinsics", intrinsics, "fx,fy,cx,cy,width,height (with --velodyne)");
    app->add_option("--extrinsic", extrinsic, "12 numbers, row-major [R|t]; default identity or the frame's T_LC");
    app->add_option("--data-root", data.data_root, "dataset root");
    app->add_option("--mode", data.mode)->check(CLI::IsMember({"kitti", "synthetic"}));
    app->add_option("--sequence", data.sequence);
    app->add_option("--frame", frame, "frame index within the dataset");
    app->add_option("--range", range, "perturb the extrinsic with a deviation drawn from <t_m>:<r_deg>");
    app->add_option("--seed", seed, "deviation seed (with --range)");
    app->add_option("--max-depth", max_depth, "preview scale for .pgm output");
    app->add_option("--out", out, ".png = 16-bit depth (1/256 m), .pgm = 8-bit preview")->required();
  }

  int run() const {
    RunConfig rc;
    rc.options = {{"command", "render-depth"}, {"seed", seed}, {"range", range}, {"max_depth", max_depth}};
    PointCloud cloud;
    CameraIntrinsics k;
    Transform ext = Transform::identity();
    if (!velodyne.empty()) {
      if (intrinsics.empty()) throw ConfigError("render-depth: --velodyne needs --intrinsics");
      cloud = read_velodyne_bin(velodyne);
      k = parse_intrinsics(intrinsics);
      rc.options["velodyne"] = velodyne;
    } else {
      if (data.data_root.empty()) throw ConfigError("render-depth: give --velodyne or --data-root");
      DataOptions d = data;
      d.frames = std::to_string(frame);
      const CalibrationFrame f = load_frames(d).at(0);
      cloud = f.cloud;
      k = f.intrinsics;
      ext = f.T_LC;
      d.record(rc.options);
    }
    if (!extrinsic.empty()) ext = parse_transform(extrinsic);
    if (!range.empty()) ext = make_initial_extrinsic(ext, sample_deviation(RangeSpec::parse(range), seed).delta);
    rc.options["intrinsics"] = to_json(k);
    rc.options["extrinsic"] = to_string(ext);

    const DepthImage d = render_depth(cloud, ext, k);
    const fs::path target(out);
    const bool preview = target.extension() == ".pgm";
    write_file_atomic(target, [&](const std::string& tmp) {
      if (preview) write_depth_preview(tmp, d, max_depth);
      else write_depth_png(tmp, d);
    });
    write_sidecar(target, rc);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu of %zu pixels filled (%.4f)", d.nonzero_count(), d.depth.size(), d.fill_ratio());
    log_info(std::string("wrote ") + target.string() + ": " + buf);
    return 0;
  }
};

// ---------------------------------------------------------------- perturb

struct Perturb {
  std::string range = "1.5:20", out;
  std::uint64_t seed = 0;
  std::size_t count = 1;

  void add(CLI::App* app) {
    app->add_option("--range", range, "<t_m>:<r_deg>");
    app->add_option("--seed", seed, "base seed; row i uses derive_seed(seed, i)");
    app->add_option("--count", count, "number of deviations");
    app->add_option("--out", out, "CSV path (default stdout)");
  }

  int run() const {
    const RangeSpec r = RangeSpec::parse(range);
    RunConfig rc;
    rc.options = {{"command", "perturb"}, {"range", r.to_string()}, {"seed", seed}, {"count", count}};
    std::ostringstream os;
    write_deviation_csv_header(os);
    for (std::size_t i = 0; i < count; ++i) write_deviation_csv_row(os, sample_deviation(r, derive_seed(seed, i)));
    if (out.empty()) {
      std::cout << os.str();
    } else {
      write_text_atomic(out, os.str());
      write_sidecar(out, rc);
    }
    return 0;
  }
};

// ---------------------------------------------------------------- train

struct Train {
  DataOptions data;
  std::string range = "1.5:20", out, warm_start, model_config;
  std::uint64_t seed = 0;
  std::size_t steps = 1000, batch = 8, max_loss_points = 0;
  double lr = 3e-4, lambda_p = 0.5, max_depth = kDefaultMaxDepth;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--range", range, "training range <t_m>:<r_deg>");
    app->add_option("--seed", seed, "training seed (batches and deviations)");
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--steps", steps, "optimizer steps");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--lambda-p", lambda_p, "point-cloud loss weight");
    app->add_option("--max-depth", max_depth, "depth normalization (m)");
    app->add_option("--max-loss-points", max_loss_points, "cap on point-loss points (0 = all)");
    app->add_option("--model-config", model_config, "model config JSON (default toy network)");
    app->add_option("--warm-start", warm_start, "initialize from a larger-range checkpoint");
  }

  int run() const {
    ModelConfig mc;
    if (!model_config.empty()) mc = model_config_from_json(read_json_file(model_config));
    TrainOptions opt;
    opt.steps = steps;
    opt.batch_size = batch;
    opt.adam.learning_rate = lr;
    opt.weights.point_cloud = lambda_p;
    opt.seed = seed;
    opt.max_depth = max_depth;
    opt.max_loss_points = max_loss_points;
    opt.jobs = data.jobs;
    const RangeSpec r = RangeSpec::parse(range);
    opt.validate();

    RunConfig rc;
    rc.options = {{"command", "train"},   {"range", r.to_string()}, {"seed", seed},         {"steps", steps},
                  {"batch", batch},       {"lr", lr},               {"lambda_p", lambda_p}, {"max_depth", max_depth},
                  {"max_loss_points", max_loss_points}, {"model", to_json(mc)},  {"warm_start", warm_start}};
    data.record(rc.options);

    const auto frames = load_frames(data, mc.input_width, mc.input_height);
    CalibrationModel model(mc);
    if (!warm_start.empty()) lccal::warm_start(model, warm_start);

    const fs::path dir(out);
    fs::create_directories(dir);
    std::ostringstream csv;
    std::size_t step = 0;
    const auto curve = train_range(model, frames, r, opt, &csv, [&](const LossRecord& rec) {
      ++step;
      if (step % 50 == 0 || step == steps) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "step %zu/%zu  L %.5f  (L_t %.5f  L_R %.5f  L_P %.5f)", step, steps, rec.total,
                      rec.translation, rec.rotation, rec.point_cloud);
        log_info(buf);
      }
    });
    write_text_atomic(dir / "loss.csv", csv.str());
    write_sidecar(dir / "loss.csv", rc);

    const fs::path ckpt = dir / "model.ckpt";
    const fs::path tmp = temp_sibling(ckpt);
    model.save(tmp.string());
    commit(fs::path(tmp.string() + ".json"), fs::path(ckpt.string() + ".json"));
    commit(tmp, ckpt);

    json summary = rc.meta();
    summary["checkpoint"] = "model.ckpt";
    summary["parameters"] = model.parameter_count();
    summary["frames"] = frames.size();
    if (!curve.empty()) summary["final_loss"] = curve.back().total;
    write_text_atomic(dir / "train.json", summary.dump(2) + "\n");
    log_info("wrote " + ckpt.string());
    return 0;
  }
};

// ---------------------------------------------------------------- calibrate

struct Calibrate {
  DataOptions data;
  std::string cascade, range, out;
  std::uint64_t seed = 0;
  std::size_t oracle_stages = 0;
  long window = -1;
  double max_depth = kDefaultMaxDepth;

  void add(CLI::App* app) {
    data.add(app);
    app->add_option("--cascade", cascade, "cascade config JSON (stages with range + checkpoint)");
    app->add_option("--oracle-stages", oracle_stages, "test mode: N stages that predict the exact remaining deviation");
    app->add_option("--range", range, "initial deviation range (default: first cascade range, or 1.5:20)");
    app->add_option("--seed", seed, "frame i starts from the deviation drawn with derive_seed(seed, i)");
    app->add_option("--window", window, "temporal median window (0 = whole sequence; omit to skip filtering)");
    app->add_option("--max-depth", max_depth, "depth normalization (m)");
    app->add_option("--out", out, "output JSON")->required();
  }

  int run() const {
    if (cascade.empty() == (oracle_stages == 0)) throw ConfigError("calibrate: give exactly one of --cascade or --oracle-stages");
    RunConfig rc;
    rc.options = {{"command", "calibrate"}, {"seed", seed}, {"max_depth", max_depth}};
    data.record(rc.options);

    std::vector<std::shared_ptr<const StagePredictor>> stages;
    RangeSpec init_range = RangeSpec::from_degrees(1.5, 20);
    std::size_t width = 0, height = 0;
    if (!cascade.empty()) {
      const CascadeConfig cfg = CascadeConfig::load(cascade);
      stages = load_cascade_models(cfg, max_depth);
      init_range = cfg.stages.front().range;
      const ModelConfig first = CalibrationModel::load(cfg.stages.front().checkpoint).config();
      width = first.input_width;
      height = first.input_height;
      json cj = cfg.to_json();
      for (auto& s : cj["stages"]) s["checkpoint_sha256"] = sha256_hex(read_text(s["checkpoint"].get<std::string>()));
      rc.options["cascade"] = cj;
    } else {
      stages.assign(oracle_stages, std::make_shared<OraclePredictor>());
      rc.options["oracle_stages"] = oracle_stages;
    }
    if (!range.empty()) init_range = RangeSpec::parse(range);
    rc.options["range"] = init_range.to_string();
    if (window >= 0) rc.options["window"] = window;

    const auto frames = load_frames(data, width, height);
    std::vector<CalibrationEstimate> est(frames.size());
    parallel_for(frames.size(), data.jobs, [&](std::size_t i) {
      const Transform delta = sample_deviation(init_range, derive_seed(seed, i)).delta;
      est[i] = refine_cascade(frames[i], make_initial_extrinsic(frames[i].T_LC, delta), stages);
    });

    std::vector<Transform> raw;
    for (const auto& e : est) raw.push_back(e.estimate);
    const std::vector<Transform> filtered =
        window >= 0 ? filter_sequence(raw, static_cast<std::size_t>(window)) : std::vector<Transform>{};

    json jf = json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      json stages_j = json::array();
      for (const auto& t : est[i].stages) stages_j.push_back(transform_json(t));
      json row = {{"id", frames[i].id},
                  {"T_LC", transform_json(frames[i].T_LC)},
                  {"T_init", transform_json(est[i].initial)},
                  {"stages", stages_j},
                  {"fill_ratios", est[i].fill_ratios},
                  {"estimate", transform_json(est[i].estimate)}};
      if (!filtered.empty()) row["filtered"] = transform_json(filtered[i]);
      jf.push_back(row);
    }
    json doc = {{"format", "lccal-calibration"}, {"version", 1}, {"meta", rc.meta()}, {"frames", jf}};
    if (window >= 0 && !raw.empty()) doc["sequence_estimate"] = transform_json(temporal_filter(raw));
    write_text_atomic(out, doc.dump(2) + "\n");
    log_info("calibrated " + std::to_string(frames.size()) + " frame(s) -> " + out);
    return 0;
  }

  static std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }
};

// ---------------------------------------------------------------- evaluate

std::vector<Transform> read_transform_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<Transform> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_transform(line));
    } catch (const Error& e) {
      throw ParseError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct Evaluate {
  std::string in, pred, gt, out, per_frame;
  bool filtered = false;
  std::size_t jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--in", in, "calibration JSON written by `calibrate`");
    app->add_option("--pred", pred, "predicted extrinsics, one 12-number row per frame");
    app->add_option("--gt", gt, "ground-truth extrinsics, one 12-number row per frame");
    app->add_flag("--filtered", filtered, "score the temporally filtered estimates from --in");
    app->add_option("--per-frame", per_frame, "also write a per-frame CSV");
    app->add_option("--jobs", jobs, "worker threads (0 = all cores)");
    app->add_option("--out", out, "report CSV (default stdout)");
  }

  int run() const {
    RunConfig rc;
    rc.options = {{"command", "evaluate"}, {"filtered", filtered}};
    std::vector<Transform> p, g;
    std::vector<std::string> ids;
    if (!in.empty()) {
      const json doc = read_json_file(in);
      try {
        if (doc.at("format").get<std::string>() != "lccal-calibration") throw ParseError("evaluate: not a calibration file");
        for (const auto& f : doc.at("frames")) {
          p.push_back(transform_from_json(f.at(filtered ? "filtered" : "estimate")));
          g.push_back(transform_from_json(f.at("T_LC")));
          ids.push_back(f.at("id").get<std::string>());
        }
        rc.options["input_config_hash"] = doc.at("meta").at("config_hash");
        rc.options["seed"] = doc.at("meta").value("seed", std::uint64_t{0});
      } catch (const json::exception& e) {
        throw ParseError("'" + in + "': " + e.what());
      }
      rc.options["in"] = in;
    } else {
      if (pred.empty() || gt.empty()) throw ConfigError("evaluate: give --in, or both --pred and --gt");
      p = read_transform_lines(pred);
      g = read_transform_lines(gt);
      if (p.size() != g.size())
        throw ConfigError("evaluate: " + std::to_string(p.size()) + " predictions but " + std::to_string(g.size()) +
                          " ground-truth rows");
      for (std::size_t i = 0; i < p.size(); ++i) ids.push_back(std::to_string(i));
      rc.options["pred"] = pred;
      rc.options["gt"] = gt;
    }
    std::vector<FrameError> errs(p.size());
    parallel_for(p.size(), jobs, [&](std::size_t i) { errs[i] = evaluate(p[i], g[i]); });

    std::ostringstream os;
    write_error_csv(os, summarize(errs));
    if (out.empty()) {
      std::cout << os.str();
    } else {
      write_text_atomic(out, os.str());
      write_sidecar(out, rc);
    }
    if (!per_frame.empty()) {
      std::ostringstream pf;
      write_error_csv_header(pf);
      for (std::size_t i = 0; i < errs.size(); ++i) write_error_csv_row(pf, ids[i], errs[i]);
      write_text_atomic(per_frame, pf.str());
      write_sidecar(per_frame, rc);
    }
    return 0;
  }
};

// ---------------------------------------------------------------- experiment / selftest

struct Experiment {
  std::string out;
  std::size_t jobs = 0, steps = 0;

  void add(CLI::App* app) {
    app->add_option("--out", out, "result JSON (default stdout)");
    app->add_option("--jobs", jobs, "worker threads (0 = all cores)");
    app->add_option("--steps", steps, "override the number of training steps");
  }

  int run() const {
    DeskExperimentConfig cfg = acceptance::learning_check_config(jobs);
    if (steps) cfg.train.steps = steps;
    RunConfig rc;
    rc.options = {{"command", "experiment"}, {"seed", cfg.train.seed}, {"steps", cfg.train.steps},
                  {"batch", cfg.train.batch_size}, {"lr", cfg.train.adam.learning_rate}, {"model", to_json(cfg.model)},
                  {"scene_intrinsics", to_json(cfg.scenes.intrinsics)}, {"range", cfg.range.to_string()}};
    const DeskExperimentResult res = run_desk_experiment(cfg, [](const DeskEvaluation& e) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "step %zu: E_R %.3f, E_t %.3f of injected", e.step, e.rotation_ratio(),
                    e.translation_ratio());
      log_info(buf);
    });
    json j = rc.meta();
    j["before"] = to_json(res.before);
    j["after"] = to_json(res.after);
    j["seconds"] = res.seconds;
    if (out.empty()) std::cout << j.dump(2) << '\n';
    else write_text_atomic(out, j.dump(2) + "\n");
    return 0;
  }
};

struct SelfTest {
  bool learning = false;
  std::size_t jobs = 0;

  void add(CLI::App* app) {
    app->add_flag("--learning", learning, "also run the desk-scale learning experiment (minutes)");
    app->add_option("--jobs", jobs, "worker threads for the learning experiment (0 = all cores)");
  }

  int run() const {
    auto results = acceptance::run_property_checks(fs::temp_directory_path() / "lccal_selftest");
    if (learning) results.push_back(acceptance::check_learning(acceptance::learning_check_config(jobs)));
    int failed = 0;
    for (const auto& r : results) {
      std::cout << acceptance::format_line(r) << '\n';
      failed += r.passed ? 0 : 1;
    }
    std::cout << (failed ? std::to_string(failed) + " FAILED" : std::string("ALL PASS")) << '\n';
    return failed ? 1 : 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-camera extrinsic calibration toolkit"};
  app.set_version_flag("--version", std::string(LCCAL_VERSION));
  app.require_subcommand(1);

  MakeScenes make_scenes;
  RenderDepth render;
  Perturb perturb;
  Train train;
  Calibrate calibrate;
  Evaluate eval;
  Experiment experiment;
  SelfTest selftest;
  make_scenes.add(app.add_subcommand("make-scenes", "write a synthetic scene set"));
  render.add(app.add_subcommand("render-depth", "project a cloud into a depth image"));
  perturb.add(app.add_subcommand("perturb", "emit sampled deviations as CSV"));
  train.add(app.add_subcommand("train", "train one range model"));
  calibrate.add(app.add_subcommand("calibrate", "run the refinement cascade on frames"));
  eval.add(app.add_subcommand("evaluate", "error report in E_t,X,Y,Z,E_R,Roll,Pitch,Yaw columns"));
  experiment.add(app.add_subcommand("experiment", "desk-scale synthetic learning experiment"));
  selftest.add(app.add_subcommand("selftest", "run the oracle and property checks"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    log_debug("command " + cmd);
    if (cmd == "make-scenes") return make_scenes.run();
    if (cmd == "render-depth") return render.run();
    if (cmd == "perturb") return perturb.run();
    if (cmd == "train") return train.run();
    if (cmd == "calibrate") return calibrate.run();
    if (cmd == "evaluate") return eval.run();
    if (cmd == "experiment") return experiment.run();
    if (cmd == "selftest") return selftest.run();
  } catch (const std::exception& e) {
    std::cerr << "lccal: error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
