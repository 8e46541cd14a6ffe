#pragma once

// End-to-end discovery: segment every frame, backproject, associate into
// tracks, and score plausibility.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objdisc/core.h"
#include "objdisc/dynamics.h"
#include "objdisc/evalkit.h"
#include "objdisc/genmodel.h"
#include "objdisc/geometry.h"
#include "objdisc/patchwork.h"
#include "objdisc/segment.h"

namespace objdisc::pipeline {

namespace fs = std::filesystem;

enum class SegmenterKind { kClassical, kExternalMaskDir };

struct PipelineConfig {
  SegmenterKind segmenter = SegmenterKind::kClassical;
  fs::path mask_dir;                 // external-mask-dir only
  int slots = 5;
  bool multi_scale = true;
  bool physics = true;
  double association_iou = 0.2;
  std::size_t min_object_area = 10;  // smaller segments are dropped
  double ambiguity_coverage = 0.5;   // share of a prediction inside a segment
  double merge_tolerance = 0.22;     // classical segmenter color merging
  std::string camera_file = "camera.json";
  patchwork::MergeOptions merge;
  // boundary_count 200 is meant for 1024-pixel images; the default here
  // scales it linearly to 128-pixel frames. alpha is calibrated for the
  // simulator's default camera.
  geometry::BackprojectionConfig backprojection{.alpha = 12.76, .boundary_count = 25};
  dynamics::DynamicsParams dynamics;
  genmodel::LossWeights loss;
  std::size_t visible_pixel_floor = 4;

  void validate() const;
};

// INI-style file: [pipeline], [patchwork], [backprojection], [dynamics],
// [loss]. Unknown sections or keys throw ContractError; missing keys keep
// their defaults.
PipelineConfig load_config(const fs::path& path);
nlohmann::json config_to_json(const PipelineConfig& cfg);

// Object masks for one frame, before filtering by area. Whole-image
// classical segmentation in single-scale mode; per-window segmentation
// followed by patchwork merging otherwise.
std::vector<Mask> segment_frame(const Frame& frame, const PipelineConfig& cfg);

struct DiscoverResult {
  std::vector<ObjectTrack> tracks;
  int frame_count = 0;
};

// Runs discovery over in-memory frames.
DiscoverResult discover(const std::vector<Frame>& frames, const Camera& cam, const PipelineConfig& cfg);

// Reads frame_<n>.png and the camera file from video_dir (masks from
// cfg.mask_dir/frame_<nnnn>/*.png in external mode), runs discovery and,
// when out_dir is given, writes tracks.jsonl plus per-frame mask PNGs.
DiscoverResult run_discover(const fs::path& video_dir, const PipelineConfig& cfg,
                            const std::optional<fs::path>& out_dir = std::nullopt);

// Where surprise scoring gets its tracks. kGroundTruthTracks reads the
// objects and occluders of gt.jsonl; kGroundTruthMasks runs discovery on the
// scene's masks/ directory instead of segmenting frames.
enum class TrackSource { kDiscover, kGroundTruthTracks, kGroundTruthMasks };

std::vector<ObjectTrack> scene_tracks(const fs::path& scene_dir, const PipelineConfig& cfg, TrackSource source);

struct PairResult {
  std::string pair_id;
  evalkit::SurpriseCurve plausible;
  evalkit::SurpriseCurve implausible;
  std::optional<int> violation_frame;
};

struct PairExperiment {
  double relative_accuracy = 0.0;
  std::vector<PairResult> pairs;

  nlohmann::json to_json() const;
};

// Scenes are paired through meta.json fields "pair" and "role"
// ("plausible" / "implausible"). Unpaired scenes throw ContractError
// naming them.
PairExperiment run_pair_experiment(const fs::path& dataset_dir, const PipelineConfig& cfg, TrackSource source,
                                   const std::optional<fs::path>& out_dir = std::nullopt);

// Per-frame evaluation of predicted tracks against ground truth.
struct EvalReport {
  evalkit::MatchReport masks;
  double recall3d = 0.0;
  std::optional<evalkit::Alignment> alignment;

  nlohmann::json to_json() const;
};
EvalReport evaluate(const std::vector<ObjectTrack>& pred, const std::vector<ObjectTrack>& gt, int frame_count,
                    evalkit::MatchMode mode = evalkit::MatchMode::kBestPerGt);

// Loss terms for one frame explained by the classical decomposition: each
// slot's mean color as its component image and its own mask as the decoded
// mask, with zero-mean unit-variance latents.
struct LossReport {
  double image_log_likelihood = 0.0;
  double l_image = 0.0;
  double l_kl = 0.0;
  double l_physics = 0.0;
  double total = 0.0;
  long long step = 0;

  nlohmann::json to_json() const;
};
LossReport evaluate_loss(const Frame& frame, const PipelineConfig& cfg, long long step, double l_physics = 0.0);

// CSV with a frame column plus one column per curve, and a line plot PNG.
void write_curves(const fs::path& csv_path, const fs::path& png_path,
                  const std::vector<evalkit::SurpriseCurve>& curves);

}  // namespace objdisc::pipeline
