#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "objdisc/error.h"
#include "objdisc/io.h"
#include "objdisc/pipeline.h"
#include "objdisc/simkit.h"
#include "test_util.h"

namespace objdisc::pipeline {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

simkit::SceneRecord single_object_scene(std::uint64_t seed) {
  simkit::SceneConfig cfg;
  cfg.seed = seed;
  cfg.n_objects = 1;
  cfg.frames = 8;
  cfg.motion = {simkit::Motion::kStraight};
  return simkit::generate(cfg);
}

TEST(LoadConfig, ParsesEverySection) {
  TempDir dir;
  std::ofstream(dir / "c.ini") << "[pipeline]\nslots = 4\nphysics = false\nmulti_scale = no\n"
                                  "[patchwork]\noverlap_threshold = 30\n"
                                  "[backprojection]\nalpha = 9.5\nboundary_count = 12\nfixed_rotation_y = 0.25\n"
                                  "[dynamics]\nsigma_t = 0.5\nhistory_window = 4\n"
                                  "[loss]\nbeta = 0.25\nphase_switch_step = 10\n";
  const auto cfg = load_config(dir / "c.ini");
  EXPECT_EQ(cfg.slots, 4);
  EXPECT_FALSE(cfg.physics);
  EXPECT_FALSE(cfg.multi_scale);
  EXPECT_EQ(cfg.merge.overlap_threshold, 30);
  EXPECT_EQ(cfg.backprojection.alpha, 9.5);
  EXPECT_EQ(cfg.backprojection.boundary_count, 12);
  EXPECT_EQ(cfg.backprojection.fixed_rotation.y(), 0.25);
  EXPECT_EQ(cfg.dynamics.sigma_t, 0.5);
  EXPECT_EQ(cfg.dynamics.history_window, 4);
  EXPECT_EQ(cfg.loss.beta, 0.25);
  EXPECT_EQ(cfg.loss.phase_switch_step, 10);
  // Untouched keys keep their defaults.
  EXPECT_EQ(cfg.association_iou, PipelineConfig{}.association_iou);
}

TEST(LoadConfig, ShippedDefaultFileMatchesBuiltInDefaults) {
  const auto cfg = load_config(fs::path(OBJDISC_SOURCE_DIR) / "configs" / "default.ini");
  EXPECT_EQ(config_to_json(cfg), config_to_json(PipelineConfig{}));
}

TEST(LoadConfig, Errors) {
  TempDir dir;
  EXPECT_THROW(load_config(dir / "missing.ini"), IoError);
  std::ofstream(dir / "a.ini") << "[pipeline]\nslotz = 4\n";
  EXPECT_THROW(load_config(dir / "a.ini"), ContractError);
  std::ofstream(dir / "b.ini") << "[engine]\nx = 1\n";
  EXPECT_THROW(load_config(dir / "b.ini"), ContractError);
  std::ofstream(dir / "c.ini") << "[dynamics]\nsigma_t = -1\n";
  EXPECT_THROW(load_config(dir / "c.ini"), ContractError);
  std::ofstream(dir / "d.ini") << "[pipeline]\nslots = many\n";
  EXPECT_THROW(load_config(dir / "d.ini"), ContractError);
}

TEST(Discover, SingleObjectGivesOneFullTrack) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto rec = single_object_scene(seed);
    const auto res = discover(rec.frames, rec.config.camera, PipelineConfig{});
    ASSERT_EQ(res.tracks.size(), 1u) << seed;
    EXPECT_EQ(res.tracks[0].length(), rec.frames.size());
    EXPECT_EQ(res.frame_count, static_cast<int>(rec.frames.size()));
  }
}

TEST(Discover, SmallObjectSameCountWithAndWithoutMultiScale) {
  simkit::SceneConfig cfg;
  cfg.n_objects = 1;
  cfg.frames = 6;
  simkit::ObjectSpec o;
  o.start.size = Vec3(0.5, 0.5, 0.5);
  o.start.translation = Vec3(0.3, -0.25, 7.5);
  o.velocity = Vec3(0.02, 0, 0);
  cfg.objects = {o};
  const auto rec = simkit::generate(cfg);
  PipelineConfig single;
  single.multi_scale = false;
  const auto a = discover(rec.frames, rec.config.camera, single);
  const auto b = discover(rec.frames, rec.config.camera, PipelineConfig{});
  EXPECT_EQ(a.tracks.size(), 1u);
  EXPECT_EQ(a.tracks.size(), b.tracks.size());
}

TEST(Discover, TrackMasksArePiecesOfDistinctSegments) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto rec = simkit::generate(simkit::occlusion_scene(seed, 10));
    for (bool physics : {false, true}) {
      PipelineConfig cfg;
      cfg.physics = physics;
      const auto res = discover(rec.frames, rec.config.camera, cfg);
      for (const auto& t : res.tracks)
        for (std::size_t s = 1; s < t.length(); ++s) ASSERT_LT(t.states()[s - 1].frame, t.states()[s].frame);
      for (int f = 0; f < 10; ++f) {
        const auto segments = segment_frame(rec.frames[f], cfg);
        std::vector<std::pair<const Mask*, std::size_t>> owned;
        for (const auto& t : res.tracks) {
          const auto* st = t.state_at(f);
          if (!st) continue;
          const std::size_t area = mask_area(st->mask);
          std::size_t source = segments.size();
          for (std::size_t k = 0; k < segments.size() && source == segments.size(); ++k)
            if (mask_overlap_pixels(st->mask, segments[k], 0.5) == area) source = k;
          ASSERT_LT(source, segments.size()) << "track mask is not inside any segment";
          owned.emplace_back(&st->mask, source);
        }
        for (std::size_t a = 0; a < owned.size(); ++a)
          for (std::size_t b = a + 1; b < owned.size(); ++b)
            if (owned[a].second == owned[b].second)
              EXPECT_EQ(mask_overlap_pixels(*owned[a].first, *owned[b].first, 0.5), 0u);
      }
    }
  }
}

TEST(Discover, PhysicsToggleLeavesSegmentationUnchanged) {
  const auto rec = simkit::generate(simkit::occlusion_scene(4, 8));
  PipelineConfig on, off;
  off.physics = false;
  for (const auto& f : rec.frames) {
    const auto a = segment_frame(f, on), b = segment_frame(f, off);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
}

TEST(RunDiscover, WritesDeterministicOutputs) {
  TempDir dir;
  simkit::write_scene(dir / "scene", simkit::generate(simkit::violation_scene(9, 6)));
  run_discover(dir / "scene", PipelineConfig{}, dir / "out1");
  run_discover(dir / "scene", PipelineConfig{}, dir / "out2");
  EXPECT_EQ(slurp(dir / "out1" / "tracks.jsonl"), slurp(dir / "out2" / "tracks.jsonl"));
  EXPECT_EQ(slurp(dir / "out1" / "discover.json"), slurp(dir / "out2" / "discover.json"));
  const auto tracks = io::read_tracks(dir / "out1" / "tracks.jsonl");
  EXPECT_FALSE(tracks.empty());
  EXPECT_TRUE(fs::exists(dir / "out1" / "masks"));
}

TEST(RunDiscover, ExternalMasks) {
  TempDir dir;
  const auto rec = single_object_scene(5);
  simkit::write_scene(dir / "scene", rec);
  for (const auto& s : rec.gt_tracks[0].states()) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d", s.frame);
    fs::create_directories(dir / "masks" / name);
    io::write_mask_png(dir / "masks" / name / "a.png", s.mask);
  }
  PipelineConfig cfg;
  cfg.segmenter = SegmenterKind::kExternalMaskDir;
  cfg.mask_dir = dir / "masks";
  const auto res = run_discover(dir / "scene", cfg);
  ASSERT_EQ(res.tracks.size(), 1u);
  for (std::size_t k = 0; k < res.tracks[0].length(); ++k)
    EXPECT_EQ(res.tracks[0].states()[k].mask, rec.gt_tracks[0].states()[k].mask);
}

TEST(RunDiscover, Errors) {
  TempDir dir;
  EXPECT_THROW(run_discover(dir.path(), PipelineConfig{}), IoError);
  EXPECT_THROW(run_discover(dir / "absent", PipelineConfig{}), IoError);
  io::write_png_rgb(dir / "frame_0000.png", RgbImage(8, 8));
  EXPECT_THROW(run_discover(dir.path(), PipelineConfig{}), IoError);  // no camera
}

void write_pair(const fs::path& root, const std::string& id, const simkit::SceneRecord& plausible,
                const simkit::SceneRecord& implausible) {
  simkit::write_scene(root / ("scene_" + id + "_plausible"), plausible, {{"pair", id}, {"role", "plausible"}});
  simkit::write_scene(root / ("scene_" + id + "_implausible"), implausible, {{"pair", id}, {"role", "implausible"}});
}

TEST(PairExperiment, SinglePairCurvesAndOutputs) {
  TempDir dir;
  const auto pair = simkit::make_pair(simkit::violation_scene(1, 12), simkit::ViolationKind::kTeleport);
  write_pair(dir.path(), "0000", pair.plausible, pair.implausible);
  const int f = *pair.implausible.violation_frame;
  for (auto source : {TrackSource::kGroundTruthTracks, TrackSource::kGroundTruthMasks, TrackSource::kDiscover}) {
    const bool oracle = source != TrackSource::kDiscover;
    const auto res = run_pair_experiment(dir.path(), PipelineConfig{}, source, dir / "out");
    ASSERT_EQ(res.pairs.size(), 1u);
    EXPECT_EQ(res.pairs[0].violation_frame, f);
    const auto& a = res.pairs[0].plausible.values;
    const auto& b = res.pairs[0].implausible.values;
    ASSERT_EQ(a.size(), 12u);
    ASSERT_EQ(b.size(), 12u);
    // Discovery is online, so the shared prefix scores identically.
    for (int k = 0; k < f; ++k) EXPECT_EQ(a[k], b[k]) << oracle << " frame " << k;
    if (oracle) {
      EXPECT_EQ(res.relative_accuracy, 1.0);
      EXPECT_EQ(res.pairs[0].implausible.peak_frame(), f);
    }
  }
  EXPECT_TRUE(fs::exists(dir / "out" / "pair_experiment.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "curves" / "0000.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "curves" / "0000.png"));
}

TEST(PairExperiment, OracleTeleportPairsAllCorrect) {
  TempDir dir;
  for (int i = 0; i < 10; ++i) {
    const auto pair = simkit::make_pair(simkit::violation_scene(100 + i), simkit::ViolationKind::kTeleport);
    char id[8];
    std::snprintf(id, sizeof id, "%04d", i);
    write_pair(dir.path(), id, pair.plausible, pair.implausible);
  }
  EXPECT_EQ(run_pair_experiment(dir.path(), PipelineConfig{}, TrackSource::kGroundTruthTracks).relative_accuracy, 1.0);
}

TEST(PairExperiment, NoViolationIsChance) {
  TempDir dir;
  for (int i = 0; i < 50; ++i) {
    simkit::SceneConfig a = simkit::violation_scene(500 + 2 * i), b = simkit::violation_scene(501 + 2 * i);
    char id[8];
    std::snprintf(id, sizeof id, "%04d", i);
    write_pair(dir.path(), id, simkit::generate(a), simkit::generate(b));
  }
  EXPECT_NEAR(run_pair_experiment(dir.path(), PipelineConfig{}, TrackSource::kGroundTruthTracks).relative_accuracy, 0.5, 0.1);
}

TEST(PairExperiment, UnpairedScenesAreListed) {
  TempDir dir;
  const auto rec = single_object_scene(2);
  simkit::write_scene(dir / "scene_a", rec, {{"pair", "x"}, {"role", "plausible"}});
  simkit::write_scene(dir / "scene_b", rec);
  try {
    run_pair_experiment(dir.path(), PipelineConfig{}, TrackSource::kGroundTruthTracks);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("scene_a"), std::string::npos);
    EXPECT_NE(msg.find("scene_b"), std::string::npos);
  }
}

TEST(Evaluate, GroundTruthScoresPerfectly) {
  const auto rec = simkit::generate(simkit::violation_scene(3, 6));
  const auto report = evaluate(rec.gt_tracks, rec.gt_tracks, 6);
  EXPECT_EQ(report.masks.mean_iou, 1.0);
  EXPECT_EQ(report.masks.detection_rate, 1.0);
  EXPECT_EQ(report.recall3d, 1.0);
  ASSERT_TRUE(report.alignment.has_value());
  EXPECT_NEAR(report.alignment->pooled_r, 1.0, 1e-9);
  EXPECT_TRUE(report.to_json().contains("recall3d"));
}

TEST(EvaluateLoss, ReportsFiniteTerms) {
  const auto rec = single_object_scene(4);
  const auto early = evaluate_loss(rec.frames[0], PipelineConfig{}, 0, 50.0);
  const auto late = evaluate_loss(rec.frames[0], PipelineConfig{}, 100000, 50.0);
  EXPECT_TRUE(std::isfinite(early.image_log_likelihood));
  EXPECT_EQ(early.l_image, -early.image_log_likelihood);
  EXPECT_EQ(early.total, early.l_image + early.l_kl);
  EXPECT_EQ(late.total - early.total, 50.0);
}

TEST(WriteCurves, CsvHasHeaderAndRows) {
  TempDir dir;
  write_curves(dir / "c.csv", dir / "c.png", {{"a", {1, 2, 3}}, {"b", {0, 5, 1}}});
  const std::string csv = slurp(dir / "c.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "frame,a,b");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NO_THROW(io::read_png_rgb(dir / "c.png"));
}

}  // namespace
}  // namespace objdisc::pipeline
