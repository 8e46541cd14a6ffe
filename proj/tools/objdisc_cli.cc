// Command-line front end. Exit codes: 0 success, 2 contract violation
// (bad arguments, invalid data), 1 I/O failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "objdisc/error.h"
#include "objdisc/evalkit.h"
#include "objdisc/io.h"
#include "objdisc/pipeline.h"
#include "objdisc/simkit.h"

namespace fs = std::filesystem;
using namespace objdisc;

namespace {

struct Common {
  std::string config;
  std::string out;
  bool single_scale = false;
  bool no_physics = false;
};

pipeline::PipelineConfig make_config(const Common& c) {
  pipeline::PipelineConfig cfg = c.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(c.config);
  if (c.single_scale) cfg.multi_scale = false;
  if (c.no_physics) cfg.physics = false;
  cfg.validate();
  return cfg;
}

std::string scene_name(std::uint64_t index, const std::string& suffix = "") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04llu", static_cast<unsigned long long>(index));
  return buf + suffix;
}

int cmd_gen(const Common& c, std::uint64_t seed, const std::string& scenario, int count, std::optional<int> frames,
            std::optional<int> objects, int occluders) {
  const fs::path out = c.out;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    if (scenario == "teleport" || scenario == "disappear") {
      const auto kind = simkit::violation_from_string(scenario);
      auto base = simkit::violation_scene(s, frames.value_or(20));
      if (objects) base.n_objects = *objects, base.motion.assign(*objects, simkit::Motion::kStraight);
      const auto pair = simkit::make_pair(base, kind);
      const std::string id = scene_name(static_cast<std::uint64_t>(i));
      simkit::write_scene(out / (id + "_plausible"), pair.plausible, {{"pair", id}, {"role", "plausible"}});
      simkit::write_scene(out / (id + "_implausible"), pair.implausible, {{"pair", id}, {"role", "implausible"}});
      continue;
    }
    simkit::SceneConfig cfg;
    if (scenario == "multiscale") {
      cfg = simkit::multiscale_scene(s, frames.value_or(12));
    } else if (scenario == "occlusion") {
      cfg = simkit::occlusion_scene(s, frames.value_or(16));
    } else if (scenario == "random") {
      cfg.seed = s;
      cfg.frames = frames.value_or(20);
      cfg.n_objects = objects.value_or(2);
      cfg.occluders = occluders;
    } else {
      throw ContractError("unknown scenario '" + scenario + "'");
    }
    simkit::write_scene(out / scene_name(static_cast<std::uint64_t>(i)), simkit::generate(cfg));
  }
  std::cout << "wrote " << count << (scenario == "teleport" || scenario == "disappear" ? " pairs" : " scenes")
            << " to " << out << "\n";
  return 0;
}

int cmd_segment(const Common& c, const std::string& image) {
  const auto cfg = make_config(c);
  const Frame frame{0, io::read_png_rgb(image)};
  const auto masks = pipeline::segment_frame(frame, cfg);
  const fs::path out = c.out;
  fs::create_directories(out);
  nlohmann::json report = {{"image", image}, {"multi_scale", cfg.multi_scale}, {"objects", nlohmann::json::array()}};
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const std::string name = "obj_" + std::to_string(k) + ".png";
    io::write_mask_png(out / name, masks[k]);
    report["objects"].push_back({{"mask", name}, {"area", mask_area(masks[k])}});
  }
  io::write_json(out / "segments.json", report);
  std::cout << masks.size() << " objects\n";
  return 0;
}

int cmd_discover(const Common& c, const std::string& video, const std::string& mask_dir) {
  auto cfg = make_config(c);
  if (!mask_dir.empty()) {
    cfg.segmenter = pipeline::SegmenterKind::kExternalMaskDir;
    cfg.mask_dir = mask_dir;
  }
  const auto result = pipeline::run_discover(video, cfg, fs::path(c.out));
  std::cout << result.tracks.size() << " tracks over " << result.frame_count << " frames\n";
  return 0;
}

std::vector<ObjectTrack> load_or_discover(const Common& c, const std::string& video, const std::string& tracks,
                                          pipeline::TrackSource source) {
  if (!tracks.empty()) return io::read_tracks(tracks);
  return pipeline::scene_tracks(video, make_config(c), source);
}

int cmd_eval(const Common& c, const std::string& scene, const std::string& tracks, bool exclusive) {
  const auto pred = load_or_discover(c, scene, tracks, pipeline::TrackSource::kDiscover);
  const auto gt = io::read_tracks(fs::path(scene) / "gt.jsonl", "object");
  const int frames = static_cast<int>(io::list_frames(scene).size());
  const auto report =
      pipeline::evaluate(pred, gt, frames, exclusive ? evalkit::MatchMode::kExclusive : evalkit::MatchMode::kBestPerGt);
  const fs::path out = c.out;
  fs::create_directories(out);
  io::write_json(out / "eval.json", report.to_json());
  std::vector<std::vector<double>> rows;
  for (const auto& f : report.masks.frames) {
    rows.push_back({static_cast<double>(f.frame), static_cast<double>(f.gt_count), f.mean_iou, f.detection_rate});
  }
  io::write_csv(out / "eval_frames.csv", {"frame", "gt_count", "mean_iou", "detection_rate"}, rows);
  std::cout << "mean_iou " << report.masks.mean_iou << " detection_rate " << report.masks.detection_rate << "\n";
  return 0;
}

int cmd_surprise(const Common& c, const std::string& video, const std::string& tracks, pipeline::TrackSource source) {
  const auto cfg = make_config(c);
  const auto all = load_or_discover(c, video, tracks, source);
  const Camera cam = io::read_camera(fs::path(video) / cfg.camera_file);
  evalkit::SurpriseOptions opts;
  opts.frame_count = static_cast<int>(io::list_frames(video).size());
  opts.visible_pixel_floor = cfg.visible_pixel_floor;
  auto curve = evalkit::surprise_curve(all, cam, cfg.dynamics, opts);
  curve.video_id = fs::path(video).filename().string();
  const fs::path out = c.out;
  fs::create_directories(out);
  pipeline::write_curves(out / "surprise.csv", out / "surprise.png", {curve});
  io::write_json(out / "surprise.json",
                 {{"video", curve.video_id}, {"max", curve.max()}, {"peak_frame", curve.peak_frame()}, {"values", curve.values}});
  std::cout << "max surprise " << curve.max() << " at frame " << curve.peak_frame() << "\n";
  return 0;
}

int cmd_pair_exp(const Common& c, const std::string& dataset, pipeline::TrackSource source) {
  const auto exp = pipeline::run_pair_experiment(dataset, make_config(c), source, fs::path(c.out));
  std::cout << "relative accuracy " << exp.relative_accuracy << " over " << exp.pairs.size() << " pairs\n";
  return 0;
}

int cmd_eval_loss(const Common& c, const std::string& image, long long step, double l_physics) {
  const auto cfg = make_config(c);
  const auto report = pipeline::evaluate_loss(Frame{0, io::read_png_rgb(image)}, cfg, step, l_physics);
  const fs::path out = c.out;
  fs::create_directories(out);
  io::write_json(out / "loss.json", report.to_json());
  std::cout << "total loss " << report.total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physical object discovery toolkit"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", common.config, "INI configuration file"); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", common.out, "Output directory")->required(); };
  auto add_toggles = [&](CLI::App* sub) {
    sub->add_flag("--single-scale", common.single_scale, "Segment whole frames instead of patch windows");
    sub->add_flag("--no-physics", common.no_physics, "Disable physics-based association");
  };

  auto* gen = app.add_subcommand("gen", "Generate synthetic scenes");
  std::string scenario = "random";
  int count = 1, occluders = 0;
  std::optional<int> frames, objects;
  add_out(gen);
  gen->add_option("--seed", seed, "Base seed; scene i uses seed + i");
  gen->add_option("--scenario", scenario, "random | multiscale | occlusion | teleport | disappear");
  gen->add_option("--count", count, "Number of scenes (pairs for violation scenarios)")->check(CLI::PositiveNumber);
  gen->add_option("--frames", frames, "Frames per scene");
  gen->add_option("--objects", objects, "Objects per scene");
  gen->add_option("--occluders", occluders, "Occluders per scene (random scenario)");

  auto* seg = app.add_subcommand("segment", "Segment one image into object masks");
  std::string image;
  seg->add_option("image", image, "PNG frame")->required();
  add_out(seg);
  add_config(seg);
  add_toggles(seg);

  auto* disc = app.add_subcommand("discover", "Discover object tracks in a video directory");
  std::string video, mask_dir;
  disc->add_option("video", video, "Directory of frame_<n>.png plus camera.json")->required();
  disc->add_option("--mask-dir", mask_dir, "Use external masks from <dir>/frame_<nnnn>/*.png");
  add_out(disc);
  add_config(disc);
  add_toggles(disc);

  auto* ev = app.add_subcommand("eval", "Score tracks against a scene's ground truth");
  std::string tracks;
  bool exclusive = false;
  ev->add_option("scene", video, "Scene directory with gt.jsonl")->required();
  ev->add_option("--tracks", tracks, "Predicted tracks.jsonl (default: run discover)");
  ev->add_flag("--exclusive", exclusive, "One-to-one Hungarian matching instead of best per object");
  add_out(ev);
  add_config(ev);
  add_toggles(ev);

  auto* sur = app.add_subcommand("surprise", "Per-frame surprise curve of a video");
  bool oracle = false, oracle_masks = false;
  sur->add_option("video", video, "Video or scene directory")->required();
  sur->add_option("--tracks", tracks, "Tracks to score (default: run discover)");
  auto* sur_oracle = sur->add_flag("--oracle", oracle, "Score the ground-truth tracks of a scene");
  sur->add_flag("--oracle-masks", oracle_masks, "Discover from the scene's ground-truth masks")->excludes(sur_oracle);
  add_out(sur);
  add_config(sur);
  add_toggles(sur);

  auto* pair = app.add_subcommand("pair-exp", "Relative accuracy over plausible/implausible pairs");
  std::string dataset;
  pair->add_option("dataset", dataset, "Directory of paired scenes")->required();
  auto* pair_oracle = pair->add_flag("--oracle", oracle, "Use ground-truth tracks instead of discovery");
  pair->add_flag("--oracle-masks", oracle_masks, "Discover from each scene's ground-truth masks")->excludes(pair_oracle);
  add_out(pair);
  add_config(pair);
  add_toggles(pair);

  auto* loss = app.add_subcommand("eval-loss", "Generative-model loss terms for one frame");
  long long step = 0;
  double l_physics = 0.0;
  loss->add_option("image", image, "PNG frame")->required();
  loss->add_option("--step", step, "Training step (selects the loss phase)");
  loss->add_option("--physics-loss", l_physics, "Physics loss added after the phase switch");
  add_out(loss);
  add_config(loss);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen(common, seed, scenario, count, frames, objects, occluders);
    if (*seg) return cmd_segment(common, image);
    if (*disc) return cmd_discover(common, video, mask_dir);
    if (*ev) return cmd_eval(common, video, tracks, exclusive);
    const auto source = oracle         ? pipeline::TrackSource::kGroundTruthTracks
                        : oracle_masks ? pipeline::TrackSource::kGroundTruthMasks
                                       : pipeline::TrackSource::kDiscover;
    if (*sur) return cmd_surprise(common, video, tracks, source);
    if (*pair) return cmd_pair_exp(common, dataset, source);
    if (*loss) return cmd_eval_loss(common, image, step, l_physics);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
