#pragma once

// Segmentation, 3D and plausibility metrics.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "objdisc/core.h"
#include "objdisc/dynamics.h"

namespace objdisc::evalkit {

// IoU of the masks binarized at 0.5; 0 when both are empty.
double iou2d(const Mask& a, const Mask& b);

enum class MatchMode {
  kBestPerGt,  // every gt takes its best prediction; predictions may repeat
  kExclusive,  // one-to-one assignment maximizing total IoU (Hungarian)
};

struct FrameScore {
  int frame = 0;
  std::size_t gt_count = 0;
  double mean_iou = 0.0;
  double detection_rate = 0.0;
};

struct MatchReport {
  std::vector<double> best_iou;     // per gt object
  std::vector<int> best_match;      // index into predictions, -1 if none
  double mean_iou = 0.0;
  double detection_rate = 0.0;      // fraction of gt with IoU > 0.5
  std::vector<FrameScore> frames;
};

MatchReport match_and_score(const std::vector<Mask>& pred, const std::vector<Mask>& gt,
                            MatchMode mode = MatchMode::kBestPerGt, int frame = 0);

// Pools several per-frame reports: means over every gt object.
MatchReport aggregate(const std::vector<MatchReport>& reports);

// Exact slab intersection for two unrotated cuboids.
double iou3d_axis_aligned(const Cuboid& a, const Cuboid& b);
// Uniform samples over the bounding box of both cuboids' axis-aligned bounds.
double iou3d_monte_carlo(const Cuboid& a, const Cuboid& b, int samples, std::uint64_t seed = 0x9e3779b97f4a7c15ULL);
// Exact path when both rotations are zero, Monte Carlo otherwise.
double iou3d(const Cuboid& a, const Cuboid& b, int samples = 100000);

// Fraction of gt cuboids whose best iou3d over predictions exceeds threshold.
double recall3d(const std::vector<Cuboid>& pred, const std::vector<Cuboid>& gt, double threshold = 0.1,
                int samples = 100000);

struct TranslationPair {
  Vec3 predicted;
  Vec3 truth;
};

// Pairs (pred, gt) state translations, per frame, by best 2D mask IoU above
// min_iou.
std::vector<TranslationPair> match_track_states(const std::vector<ObjectTrack>& pred,
                                                const std::vector<ObjectTrack>& gt, double min_iou = 0.5);

struct Alignment {
  Eigen::Matrix<double, 3, 4> transform;  // truth ~ A * [pred; 1]
  Vec3 pearson_r = Vec3::Zero();          // per axis on the held-out split; NaN for a constant axis
  double pooled_r = 0.0;                  // axes centered separately, then pooled
  std::size_t calibration_count = 0;
  std::size_t test_count = 0;

  Vec3 apply(const Vec3& p) const { return transform.leftCols<3>() * p + transform.col(3); }
};

// Least-squares affine fit on even-indexed pairs, Pearson r on odd-indexed
// pairs. Needs at least 4 pairs; a rank-deficient fit throws ContractError.
Alignment align_and_correlate(const std::vector<TranslationPair>& pairs);
Alignment align_and_correlate(const std::vector<ObjectTrack>& pred, const std::vector<ObjectTrack>& gt);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct SurpriseCurve {
  std::string video_id;
  std::vector<double> values;  // one per frame

  double max() const;
  // First frame attaining the maximum; -1 for an empty curve.
  int peak_frame() const;
};

struct SurpriseOptions {
  // Frames in the video; defaults to one past the last state of any track.
  std::optional<int> frame_count;
  // Predicted visible pixels needed before a vanished object is penalized.
  std::size_t visible_pixel_floor = 4;
};

// Per frame: sum over tracks observed at t with at least two earlier states
// of -physics_log_likelihood(prediction, observation), plus
// disappearance_penalty for tracks seen at t-1, absent at t and predicted
// visible. Predictions render every track seen at t-1 (and every track seen
// at t with history), so occluders hide vanished objects.
SurpriseCurve surprise_curve(const std::vector<ObjectTrack>& tracks, const Camera& cam,
                             const dynamics::DynamicsParams& params, const SurpriseOptions& options = {});

// Fraction of pairs where the implausible curve's maximum strictly exceeds
// the plausible one's; ties count 0.5.
double relative_accuracy(const std::vector<std::pair<SurpriseCurve, SurpriseCurve>>& pairs);

}  // namespace objdisc::evalkit
