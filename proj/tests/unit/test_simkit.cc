#include <algorithm>
#include <filesystem>

#include <gtest/gtest.h>

#include "objdisc/dynamics.h"
#include "objdisc/error.h"
#include "objdisc/geometry.h"
#include "objdisc/io.h"
#include "objdisc/simkit.h"
#include "test_util.h"

namespace objdisc::simkit {
namespace {

void expect_same_record(const SceneRecord& a, const SceneRecord& b) {
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) ASSERT_EQ(a.frames[f].image, b.frames[f].image);
  ASSERT_EQ(a.gt_tracks.size(), b.gt_tracks.size());
  for (std::size_t k = 0; k < a.gt_tracks.size(); ++k) {
    ASSERT_EQ(a.gt_tracks[k].length(), b.gt_tracks[k].length());
    for (std::size_t s = 0; s < a.gt_tracks[k].length(); ++s) {
      ASSERT_EQ(a.gt_tracks[k].states()[s].cuboid, b.gt_tracks[k].states()[s].cuboid);
      ASSERT_EQ(a.gt_tracks[k].states()[s].mask, b.gt_tracks[k].states()[s].mask);
    }
  }
}

TEST(Generate, SameSeedBitIdentical) {
  SceneConfig cfg;
  cfg.seed = 77;
  cfg.n_objects = 3;
  cfg.occluders = 1;
  cfg.frames = 6;
  expect_same_record(generate(cfg), generate(cfg));
  SceneConfig other = cfg;
  other.seed = 78;
  EXPECT_NE(generate(cfg).frames[0].image, generate(other).frames[0].image);
}

ObjectSpec mover(double x, double z, Vec3 velocity) {
  ObjectSpec o;
  o.start.size = Vec3(0.6, 0.8, 0.6);
  o.start.translation = Vec3(x, -0.4, z);
  o.velocity = velocity;
  return o;
}

TEST(Generate, StraightMotionIsArithmetic) {
  SceneConfig cfg;
  cfg.n_objects = 1;
  cfg.frames = 10;
  const Vec3 v(0.07, 0, -0.03);
  cfg.objects = {mover(-0.5, 6, v)};
  const auto rec = generate(cfg);
  const auto& states = rec.gt_tracks[0].states();
  ASSERT_EQ(states.size(), 10u);
  for (std::size_t f = 1; f < states.size(); ++f)
    EXPECT_TRUE((states[f].cuboid.translation - states[f - 1].cuboid.translation - v).isZero(1e-12));
}

TEST(Generate, BackAndForthFlipsEveryPeriod) {
  ObjectSpec o = mover(0, 6, Vec3(0.1, 0, 0));
  o.motion = Motion::kBackAndForth;
  EXPECT_NEAR(pose_at(o, 4, 4).translation.x(), 0.4, 1e-12);
  EXPECT_NEAR(pose_at(o, 8, 4).translation.x(), 0.0, 1e-12);
  EXPECT_NEAR(pose_at(o, 10, 4).translation.x(), 0.2, 1e-12);
  o.motion = Motion::kRotate;
  o.yaw_rate = 0.1;
  EXPECT_NEAR(pose_at(o, 3, 4).rotation.y(), 0.3, 1e-12);
  EXPECT_EQ(pose_at(o, 3, 4).translation, o.start.translation);
}

TEST(Generate, OccluderHidesObjectWithoutChangingIt) {
  SceneConfig cfg;
  cfg.n_objects = 1;
  cfg.occluders = 1;
  cfg.frames = 20;
  cfg.objects = {mover(-1.8, 7, Vec3(0.18, 0, 0))};
  OccluderSpec wall;
  wall.box.size = Vec3(1.2, 1.4, 0.1);
  wall.box.translation = Vec3(0, -0.7, 3.8);
  cfg.occluder_specs = {wall};
  const auto rec = generate(cfg);
  const auto& states = rec.gt_tracks[0].states();
  const std::size_t full = mask_area(states[0].mask);
  ASSERT_GT(full, 0u);
  bool dropped = false;
  for (const auto& s : states) {
    EXPECT_EQ(s.cuboid.size, states[0].cuboid.size);
    if (mask_area(s.mask) * 2 < mask_area(geometry::project(s.cuboid, cfg.camera))) dropped = true;
  }
  EXPECT_TRUE(dropped);
  ASSERT_EQ(rec.occluder_tracks.size(), 1u);
  EXPECT_EQ(rec.occluder_tracks[0].id(), kOccluderIdBase);
}

TEST(Generate, RecordInvariants) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.n_objects = 3;
    cfg.occluders = static_cast<int>(seed % 2);
    cfg.frames = 8;
    const auto rec = generate(cfg);
    for (const auto& t : rec.gt_tracks) EXPECT_EQ(t.length(), 8u);
    for (int f = 0; f < cfg.frames; ++f) {
      std::vector<Cuboid> cuboids;
      std::vector<Mask> gt;
      for (const auto& t : rec.gt_tracks) {
        cuboids.push_back(t.state_at(f)->cuboid);
        gt.push_back(t.state_at(f)->mask);
      }
      for (const auto& t : rec.occluder_tracks) {
        cuboids.push_back(t.state_at(f)->cuboid);
        gt.push_back(t.state_at(f)->mask);
      }
      // gt masks are exactly the palette render of all boxes.
      const auto rendered = geometry::render_all(cuboids, cfg.camera);
      for (std::size_t k = 0; k < gt.size(); ++k) ASSERT_EQ(gt[k], rendered[k]);
      for (std::size_t a = 0; a < gt.size(); ++a)
        for (std::size_t b = a + 1; b < gt.size(); ++b) ASSERT_EQ(mask_overlap_pixels(gt[a], gt[b], 0.5), 0u);
    }
  }
}

TEST(Generate, StraightMotionSatisfiesDynamics) {
  std::size_t total = 0, above = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.n_objects = 2;
    cfg.motion = {Motion::kStraight, Motion::kStraight};
    cfg.frames = 10;
    const auto rec = generate(cfg);
    for (const auto& t : rec.gt_tracks) {
      for (int f = 2; f < cfg.frames; ++f) {
        std::vector<ObjectTrack> history;
        for (const auto& o : rec.gt_tracks) history.push_back(o.truncated(f));
        const auto pred = dynamics::predict(t.truncated(f), history, cfg.camera, {}, f);
        const auto* obs = t.state_at(f);
        const double ll = dynamics::physics_log_likelihood(pred, {obs->cuboid, obs->mask}, {});
        ++total;
        above += ll > -8.5;
      }
    }
  }
  EXPECT_GE(static_cast<double>(above), 0.99 * static_cast<double>(total));
}

TEST(Generate, ConfigValidation) {
  SceneConfig cfg;
  cfg.frames = 1;
  EXPECT_THROW(generate(cfg), ContractError);
  cfg = {};
  cfg.n_objects = 0;
  EXPECT_THROW(generate(cfg), ContractError);
  cfg = {};
  cfg.violation = Violation{ViolationKind::kDisappear, 20, 0, Vec3::Zero()};
  EXPECT_THROW(generate(cfg), ContractError);
}

TEST(Generate, ImpossibleSceneIsGenerationError) {
  SceneConfig cfg;
  cfg.n_objects = 1;
  cfg.sampling.min_z = cfg.sampling.max_z = 1.2;  // always partly out of view
  EXPECT_THROW(generate(cfg), GenerationError);
  cfg = {};
  cfg.n_objects = 2;
  cfg.objects = {mover(0, 6, Vec3::Zero()), mover(0.2, 6, Vec3::Zero())};
  EXPECT_THROW(generate(cfg), GenerationError);
}

SceneRecord two_straight(std::uint64_t seed) { return generate(violation_scene(seed, 12)); }

TEST(InjectViolation, DisappearTruncatesTrack) {
  const auto rec = two_straight(3);
  const auto out = inject_violation(rec, {ViolationKind::kDisappear, 5, 1, Vec3::Zero()});
  EXPECT_EQ(out.gt_tracks[1].length(), 5u);
  EXPECT_EQ(out.gt_tracks[0].length(), 12u);
  EXPECT_EQ(out.violation_frame, 5);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(out.frames[f].image, rec.frames[f].image);
}

TEST(InjectViolation, TeleportJumpIsLargestStep) {
  const auto rec = two_straight(4);
  const auto out = inject_violation(rec, {ViolationKind::kTeleport, 6, 0, Vec3(2, 0, 0)});
  const auto& s = out.gt_tracks[0].states();
  const double jump = (s[6].cuboid.translation - s[5].cuboid.translation).norm();
  for (std::size_t f = 1; f < s.size(); ++f)
    if (f != 6) EXPECT_GT(jump, (s[f].cuboid.translation - s[f - 1].cuboid.translation).norm());
  // The motion law continues after the jump.
  EXPECT_TRUE((s[8].cuboid.translation - s[7].cuboid.translation - (s[4].cuboid.translation - s[3].cuboid.translation))
                  .isZero(1e-12));
}

TEST(InjectViolation, Errors) {
  const auto rec = two_straight(5);
  EXPECT_THROW(inject_violation(rec, {ViolationKind::kDisappear, 12, 0, {}}), ContractError);
  EXPECT_THROW(inject_violation(rec, {ViolationKind::kDisappear, 3, 2, {}}), ContractError);
  const auto gone = inject_violation(rec, {ViolationKind::kDisappear, 4, 0, {}});
  EXPECT_THROW(inject_violation(gone, {ViolationKind::kTeleport, 6, 0, Vec3(1, 0, 0)}), ContractError);
}

TEST(MakePair, SharesPrefixAndPlacesViolation) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (auto kind : {ViolationKind::kDisappear, ViolationKind::kTeleport}) {
      const auto pair = make_pair(violation_scene(seed), kind);
      ASSERT_TRUE(pair.implausible.violation_frame.has_value());
      const int f = *pair.implausible.violation_frame;
      EXPECT_GE(f, 6);
      EXPECT_LE(f, 13);
      EXPECT_FALSE(pair.plausible.violation_frame.has_value());
      for (int k = 0; k < f; ++k) ASSERT_EQ(pair.plausible.frames[k].image, pair.implausible.frames[k].image);
      EXPECT_NE(pair.plausible.frames[f].image, pair.implausible.frames[f].image);
    }
  }
}

TEST(Scenarios, MultiscaleHasPatchSpanningAndSmallObject) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rec = generate(multiscale_scene(seed));
    const int window = 2 * rec.config.camera.width / 8;
    for (const auto& s : rec.gt_tracks[0].states()) {
      const auto b = geometry::soft_bounds(s.mask, 1);
      EXPECT_GT(b.x_max - b.x_min + 1, window);
    }
    for (const auto& s : rec.gt_tracks[1].states()) {
      const auto b = geometry::soft_bounds(s.mask, 1);
      EXPECT_LT(b.x_max - b.x_min + 1, window);
    }
  }
}

TEST(Scenarios, OcclusionProjectionsOverlap) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rec = generate(occlusion_scene(seed));
    EXPECT_EQ(rec.objects[0].color, rec.objects[1].color);
    bool overlap = false;
    for (int f = 0; f < rec.config.frames; ++f) {
      const auto& a = rec.gt_tracks[0].state_at(f)->cuboid;
      const auto& b = rec.gt_tracks[1].state_at(f)->cuboid;
      overlap |= mask_overlap_pixels(geometry::project(a, rec.config.camera), geometry::project(b, rec.config.camera),
                                     0.5) > 0;
    }
    EXPECT_TRUE(overlap) << seed;
  }
}

TEST(WriteScene, DatasetLayout) {
  TempDir dir;
  SceneConfig cfg;
  cfg.frames = 3;
  cfg.occluders = 1;
  const auto rec = generate(cfg);
  write_scene(dir / "scene_0000", rec, {{"pair", "p0"}});
  const auto root = dir / "scene_0000";
  for (int f = 0; f < 3; ++f) EXPECT_TRUE(std::filesystem::exists(root / io::frame_file_name(f)));
  const auto meta = io::read_json(root / "meta.json");
  EXPECT_EQ(meta["pair"], "p0");
  EXPECT_TRUE(meta["violation_frame"].is_null());
  EXPECT_EQ(io::read_camera(root / "camera.json"), cfg.camera);
  const auto objects = io::read_tracks(root / "gt.jsonl", "object");
  const auto occluders = io::read_tracks(root / "gt.jsonl", "occluder");
  ASSERT_EQ(objects.size(), 2u);
  ASSERT_EQ(occluders.size(), 1u);
  EXPECT_EQ(objects[1].states()[2].mask, rec.gt_tracks[1].states()[2].mask);
  EXPECT_EQ(io::read_png_rgb(root / io::frame_file_name(1)), rec.frames[1].image);
}

TEST(Shade, BrighterWithHeight) {
  EXPECT_DOUBLE_EQ(shade(0), 0.35);
  EXPECT_DOUBLE_EQ(shade(10), 1.0);
  EXPECT_LT(shade(0.5), shade(1.0));
}

TEST(Strings, RoundTrip) {
  for (auto m : {Motion::kStraight, Motion::kBackAndForth, Motion::kRotate}) EXPECT_EQ(motion_from_string(to_string(m)), m);
  for (auto k : {ViolationKind::kDisappear, ViolationKind::kTeleport})
    EXPECT_EQ(violation_from_string(to_string(k)), k);
  EXPECT_THROW(motion_from_string("hover"), ContractError);
}

}  // namespace
}  // namespace objdisc::simkit
