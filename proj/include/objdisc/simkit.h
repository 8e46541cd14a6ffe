#pragma once

// Synthetic scenes: cuboids moving on a ground plane, static occluders,
// ground-truth tracks and optional physical violations.
//
// Randomness: every scene draws from objdisc::Rng (std::mt19937_64) seeded
// from SceneConfig::seed, with one derived stream per purpose (see
// Stream). Outputs are therefore identical across platforms and releases
// as long as the sampling order below is unchanged.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objdisc/core.h"

namespace objdisc::simkit {

enum class Motion { kStraight, kBackAndForth, kRotate };
enum class ViolationKind { kDisappear, kTeleport };

std::string to_string(Motion m);
Motion motion_from_string(const std::string& s);
std::string to_string(ViolationKind k);
ViolationKind violation_from_string(const std::string& s);

// Sub-streams of the scene seed.
enum class Stream : std::uint64_t { kTrajectory = 1, kColor = 2, kOccluder = 3, kViolation = 4 };

struct ObjectSpec {
  Cuboid start;                                // pose at frame 0
  Vec3 velocity = Vec3::Zero();                // translation per frame
  double yaw_rate = 0.0;                       // rad per frame, kRotate only
  Motion motion = Motion::kStraight;
  Rgb color{1.0, 0.0, 0.0};
};

struct OccluderSpec {
  Cuboid box;
  Rgb color{0.2, 0.3, 0.8};
};

struct Violation {
  ViolationKind kind = ViolationKind::kDisappear;
  int frame = 0;
  std::int64_t object = 0;     // index into the object list
  Vec3 offset = Vec3::Zero();  // teleport jump
};

// Ranges used when objects or occluders are sampled.
struct Sampling {
  double min_size = 0.5;
  double max_size = 1.1;
  double min_height = 0.5;
  double max_height = 1.1;
  double x_range = 2.2;  // |x| bound of starting positions
  double min_z = 4.5;
  double max_z = 8.5;
  double min_speed = 0.04;
  double max_speed = 0.12;
  double min_yaw_rate = 0.04;
  double max_yaw_rate = 0.12;
  int margin_px = 2;     // objects keep this far from the image border
  double clearance = 0.05;  // extra AABB gap for the non-collision test
};

Camera default_camera();

struct SceneConfig {
  std::uint64_t seed = 0;
  int n_objects = 2;
  // Per-object motion; missing entries are sampled uniformly.
  std::vector<Motion> motion;
  int occluders = 0;
  int frames = 20;
  int back_and_forth_period = 8;  // frames between velocity sign flips
  Camera camera = default_camera();
  std::optional<Violation> violation;
  Sampling sampling;
  Rgb background{0.85, 0.85, 0.85};
  // Explicit scene content; when non-empty it replaces sampling (and must
  // hold n_objects / occluders entries).
  std::vector<ObjectSpec> objects;
  std::vector<OccluderSpec> occluder_specs;
  // Give every sampled object the same color.
  bool shared_color = false;

  void validate() const;
};

struct SceneRecord {
  SceneConfig config;
  std::vector<ObjectSpec> objects;
  std::vector<OccluderSpec> occluders;
  std::vector<Frame> frames;
  std::vector<ObjectTrack> gt_tracks;        // ids 0..n-1
  std::vector<ObjectTrack> occluder_tracks;  // ids kOccluderIdBase + i, one state per frame
  std::optional<int> violation_frame;
};

inline constexpr std::int64_t kOccluderIdBase = 1000;

// Pose of an object at a frame under its motion law (no violation).
Cuboid pose_at(const ObjectSpec& spec, int frame, int back_and_forth_period);

// Brightness multiplier applied to a surface point at world height h (>= 0).
double shade(double height);

// Samples the scene (up to 1000 attempts at a collision-free, in-view
// configuration) and renders it. Pure in cfg. Throws GenerationError when
// no valid configuration is found.
SceneRecord generate(const SceneConfig& cfg);

// Same scene with one violation applied and every frame re-rendered.
// Throws ContractError for an out-of-range frame or object, or an object
// already gone at that frame.
SceneRecord inject_violation(const SceneRecord& record, const Violation& v);

// Writes frame_<n>.png, camera.json, gt.jsonl (objects and occluders, the
// latter tagged "kind":"occluder") and meta.json. `meta_extra` is merged
// into meta.json.
void write_scene(const std::filesystem::path& dir, const SceneRecord& record,
                 const nlohmann::json& meta_extra = nlohmann::json::object());

// Ready-made scenarios used by the CLI and the acceptance suite.
// One patch-spanning object plus one small object, both moving slowly.
SceneConfig multiscale_scene(std::uint64_t seed, int frames = 12);
// Two same-colored objects at different depths whose projections cross.
SceneConfig occlusion_scene(std::uint64_t seed, int frames = 16);
// Two objects on straight paths; the violation is filled in by make_pair.
SceneConfig violation_scene(std::uint64_t seed, int frames = 20);

struct ScenePair {
  SceneRecord plausible;
  SceneRecord implausible;
};
// Plausible scene and its violated twin. The violation frame and object are
// drawn from the kViolation stream; teleports jump 1.5-2.5 units sideways.
ScenePair make_pair(const SceneConfig& base, ViolationKind kind);

// Least-squares depth cue for a camera, from the base heights and depths of
// objects sampled over the standard ground region.
double calibrated_alpha(const Camera& cam, int boundary_count, const Sampling& sampling = {}, int samples = 400,
                        std::uint64_t seed = 7);

}  // namespace objdisc::simkit
