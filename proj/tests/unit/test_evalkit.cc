#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "objdisc/error.h"
#include "objdisc/evalkit.h"
#include "objdisc/geometry.h"
#include "objdisc/random.h"
#include "objdisc/simkit.h"

namespace objdisc::evalkit {
namespace {

Mask rect(int w, int h, int top, int left, int rh, int rw) {
  Mask m(w, h);
  for (int r = top; r < top + rh; ++r)
    for (int c = left; c < left + rw; ++c) m.set(r, c, 1.0);
  return m;
}

Mask random_mask(Rng& rng, int w, int h, double p) {
  Mask m(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.coin(p) ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.5));
  return m;
}

TEST(Iou2d, Cases) {
  const Mask a = rect(20, 20, 2, 2, 10, 10);
  EXPECT_EQ(iou2d(a, a), 1.0);
  EXPECT_EQ(iou2d(a, rect(20, 20, 15, 15, 3, 3)), 0.0);
  EXPECT_DOUBLE_EQ(iou2d(a, rect(20, 20, 2, 7, 10, 10)), 50.0 / 150.0);
  EXPECT_EQ(iou2d(Mask(4, 4), Mask(4, 4)), 0.0);
  EXPECT_THROW(iou2d(Mask(4, 4), Mask(5, 4)), DimensionError);
}

TEST(Iou2d, SymmetricAndMonotoneUnderIntersectionGrowth) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask a = random_mask(rng, 12, 9, 0.4), b = random_mask(rng, 12, 9, 0.4);
    EXPECT_EQ(iou2d(a, b), iou2d(b, a));
    // Grow the intersection: switch on in b a pixel that is on in a only.
    Mask grown = b;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] > 0.5 && b[i] <= 0.5) {
        grown.set(i, 1.0);
        break;
      }
    EXPECT_GE(iou2d(a, grown), iou2d(a, b));
  }
}

TEST(MatchAndScore, PerfectPrediction) {
  const std::vector<Mask> gt = {rect(20, 20, 0, 0, 5, 5), rect(20, 20, 10, 10, 5, 5)};
  const auto r = match_and_score(gt, gt);
  EXPECT_EQ(r.mean_iou, 1.0);
  EXPECT_EQ(r.detection_rate, 1.0);
}

TEST(MatchAndScore, UnionOfTwoGtIsNotADetection) {
  const Mask a = rect(20, 20, 0, 0, 5, 5), b = rect(20, 20, 10, 10, 5, 5);
  const auto r = match_and_score({mask_union(a, b)}, {a, b});
  EXPECT_DOUBLE_EQ(r.best_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(r.best_iou[1], 0.5);
  EXPECT_EQ(r.detection_rate, 0.0);
}

TEST(MatchAndScore, NoPredictions) {
  const auto r = match_and_score({}, {rect(8, 8, 0, 0, 2, 2)});
  EXPECT_EQ(r.mean_iou, 0.0);
  EXPECT_EQ(r.detection_rate, 0.0);
  EXPECT_THROW(match_and_score({}, {}), ContractError);
}

TEST(MatchAndScore, ExclusiveModeIsOneToOne) {
  const Mask a = rect(20, 20, 0, 0, 6, 6), b = rect(20, 20, 0, 3, 6, 6);
  // One prediction equal to a: best-per-gt lets b reuse it, exclusive does not.
  const auto best = match_and_score({a}, {a, b});
  EXPECT_EQ(best.best_match[0], 0);
  EXPECT_EQ(best.best_match[1], 0);
  const auto excl = match_and_score({a}, {a, b}, MatchMode::kExclusive);
  EXPECT_EQ(excl.best_match[0], 0);
  EXPECT_EQ(excl.best_match[1], -1);
  EXPECT_EQ(excl.best_iou[1], 0.0);
}

TEST(MatchAndScore, ExclusiveMaximizesTotalIou) {
  // Greedy would give p0 to g0 (0.6) leaving g1 with 0.1; optimal swaps.
  const int w = 30;
  const Mask g0 = rect(w, 10, 0, 0, 10, 10), g1 = rect(w, 10, 0, 6, 10, 10);
  const Mask p0 = rect(w, 10, 0, 2, 10, 10), p1 = rect(w, 10, 0, 14, 10, 10);
  const auto r = match_and_score({p0, p1}, {g0, g1}, MatchMode::kExclusive);
  double total = r.best_iou[0] + r.best_iou[1];
  double alt = iou2d(p0, g0) + iou2d(p1, g1);
  double swapped = iou2d(p1, g0) + iou2d(p0, g1);
  EXPECT_DOUBLE_EQ(total, std::max(alt, swapped));
}

TEST(MatchAndScore, ReplacingPredictionByItsGtNeverLowersMean) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Mask> gt, pred;
    for (int k = 0; k < 3; ++k) gt.push_back(random_mask(rng, 10, 10, 0.3));
    for (int k = 0; k < 3; ++k) pred.push_back(random_mask(rng, 10, 10, 0.3));
    const auto r = match_and_score(pred, gt);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (r.best_match[g] < 0) continue;
      auto replaced = pred;
      replaced[static_cast<std::size_t>(r.best_match[g])] = gt[g];
      EXPECT_GE(match_and_score(replaced, gt).mean_iou, r.mean_iou - 1e-15);
    }
  }
}

TEST(Aggregate, PoolsOverObjects) {
  const Mask a = rect(10, 10, 0, 0, 4, 4);
  const auto r1 = match_and_score({a}, {a}, MatchMode::kBestPerGt, 0);
  const auto r2 = match_and_score({}, {a, a}, MatchMode::kBestPerGt, 1);
  const auto agg = aggregate({r1, r2});
  EXPECT_DOUBLE_EQ(agg.mean_iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(agg.detection_rate, 1.0 / 3.0);
  EXPECT_EQ(agg.frames.size(), 2u);
}

Cuboid box(Vec3 t, Vec3 s = Vec3::Ones(), Vec3 q = Vec3::Zero()) {
  Cuboid c;
  c.translation = t;
  c.size = s;
  c.rotation = q;
  return c;
}

TEST(Iou3d, Cases) {
  const Cuboid a = box(Vec3(0, 0, 0));
  EXPECT_EQ(iou3d(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou3d(a, box(Vec3(0.5, 0, 0))), 1.0 / 3.0);
  EXPECT_EQ(iou3d(a, box(Vec3(3, 0, 0))), 0.0);
}

// Oracle: corners on a 0.25 lattice, so counting lattice voxels is exact.
TEST(Iou3d, ExactPathMatchesVoxelCount) {
  Rng rng(3);
  const double step = 0.25;
  for (int trial = 0; trial < 40; ++trial) {
    auto lattice_box = [&] {
      Vec3 lo, size;
      for (int k = 0; k < 3; ++k) {
        lo[k] = step * rng.uniform_int(0, 8);
        size[k] = step * rng.uniform_int(1, 8);
      }
      return box(lo + 0.5 * size, size);
    };
    const Cuboid a = lattice_box(), b = lattice_box();
    long inter = 0, uni = 0;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j)
        for (int k = 0; k < 64; ++k) {
          const Vec3 p = step * (Vec3(i, j, k) + Vec3::Constant(0.5));
          const bool in_a = a.contains(p), in_b = b.contains(p);
          inter += in_a && in_b;
          uni += in_a || in_b;
        }
    EXPECT_NEAR(iou3d(a, b), static_cast<double>(inter) / static_cast<double>(uni), 1e-12);
  }
}

TEST(Iou3d, MonteCarloAgreesWithExact) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Cuboid a = box(Vec3(rng.uniform(-1, 1), 0, 0), Vec3(rng.uniform(0.5, 2), 1, 1.5));
    const Cuboid b = box(Vec3(rng.uniform(-1, 1), rng.uniform(-0.5, 0.5), 0.2), Vec3(1, rng.uniform(0.5, 2), 1));
    EXPECT_NEAR(iou3d_monte_carlo(a, b, 100000), iou3d_axis_aligned(a, b), 0.02);
  }
}

TEST(Iou3d, RotatedUsesMonteCarlo) {
  const Cuboid a = box(Vec3::Zero(), Vec3::Ones(), Vec3(0, std::numbers::pi / 2, 0));
  EXPECT_NEAR(iou3d(a, box(Vec3::Zero())), 1.0, 0.01);
  const Cuboid rotated = box(Vec3::Zero(), Vec3::Ones(), Vec3(0, std::numbers::pi / 4, 0));
  // Square rotated 45 degrees against the unit square: intersection is a
  // regular octagon of area 2 (sqrt 2 - 1).
  const double oct = 2 * (std::sqrt(2.0) - 1);
  EXPECT_NEAR(iou3d(rotated, box(Vec3::Zero())), oct / (2 - oct), 0.02);
}

TEST(Recall3d, Cases) {
  const std::vector<Cuboid> gt = {box(Vec3(0, 0, 0)), box(Vec3(5, 0, 0))};
  EXPECT_EQ(recall3d(gt, gt), 1.0);
  EXPECT_EQ(recall3d({}, gt), 0.0);
  EXPECT_EQ(recall3d({box(Vec3(0.1, 0, 0))}, gt), 0.5);
  EXPECT_THROW(recall3d(gt, {}), ContractError);
  EXPECT_THROW(recall3d(gt, gt, 1.0), ContractError);
}

std::vector<TranslationPair> random_pairs(Rng& rng, int n) {
  std::vector<TranslationPair> pairs;
  for (int i = 0; i < n; ++i) {
    const Vec3 t(rng.uniform(-2, 2), rng.uniform(-1, 0), rng.uniform(4, 9));
    pairs.push_back({t, t});
  }
  return pairs;
}

TEST(Alignment, IdentityForPerfectPredictions) {
  Rng rng(5);
  const auto a = align_and_correlate(random_pairs(rng, 40));
  EXPECT_TRUE(a.transform.leftCols<3>().isIdentity(1e-9));
  EXPECT_TRUE(a.transform.col(3).isZero(1e-9));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.pearson_r[k], 1.0, 1e-12);
  EXPECT_NEAR(a.pooled_r, 1.0, 1e-12);
  EXPECT_EQ(a.calibration_count, 20u);
  EXPECT_EQ(a.test_count, 20u);
}

TEST(Alignment, AffineInvariance) {
  Rng rng(6);
  auto pairs = random_pairs(rng, 40);
  for (auto& p : pairs) p.predicted = 2 * p.truth + Vec3(1, -3, 0.5);
  const auto a = align_and_correlate(pairs);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.pearson_r[k], 1.0, 1e-12);
  EXPECT_TRUE(a.apply(Vec3(3, 1, 2.5)).isApprox(Vec3(1, 2, 1), 1e-9));
}

TEST(Alignment, IndependentNoiseIsUncorrelated) {
  Rng rng(7);
  auto pairs = random_pairs(rng, 400);
  for (auto& p : pairs) p.predicted = Vec3(rng.normal(), rng.normal(), rng.normal());
  const auto a = align_and_correlate(pairs);
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(a.pearson_r[k]), 0.2);
  EXPECT_LT(std::abs(a.pooled_r), 0.2);
}

TEST(Alignment, Errors) {
  Rng rng(8);
  EXPECT_THROW(align_and_correlate(random_pairs(rng, 3)), ContractError);
  auto flat = random_pairs(rng, 20);
  for (auto& p : flat) p.predicted.z() = 5;
  EXPECT_THROW(align_and_correlate(flat), ContractError);
  EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
}

TEST(MatchTrackStates, PairsByMaskIou) {
  const Mask a = rect(10, 10, 0, 0, 4, 4), b = rect(10, 10, 5, 5, 4, 4);
  ObjectTrack gt(0), pred_good(5), pred_bad(6);
  gt.append({0, box(Vec3(1, 0, 0)), a});
  gt.append({1, box(Vec3(2, 0, 0)), a});
  pred_good.append({1, box(Vec3(7, 0, 0)), a});
  pred_bad.append({0, box(Vec3(9, 0, 0)), b});
  const auto pairs = match_track_states({pred_good, pred_bad}, {gt});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].predicted, Vec3(7, 0, 0));
  EXPECT_EQ(pairs[0].truth, Vec3(2, 0, 0));
}

// A ground-resting box moving at constant velocity, with rendered masks.
ObjectTrack mover(std::int64_t id, const Camera& cam, int frames, Vec3 start, Vec3 v,
                  std::optional<std::pair<int, Vec3>> jump = {}) {
  ObjectTrack t(id);
  for (int f = 0; f < frames; ++f) {
    Cuboid c = box(start + f * v, Vec3(0.8, 0.8, 0.8));
    if (jump && f >= jump->first) c.translation += jump->second;
    t.append({f, c, geometry::project(c, cam)});
  }
  return t;
}

const double kPerfect = 9 * 0.5 * std::log(2 * std::numbers::pi);

TEST(Surprise, ConstantVelocityIsFlat) {
  const Camera cam = simkit::default_camera();
  const auto curve = surprise_curve({mover(0, cam, 10, Vec3(-1, -0.4, 6), Vec3(0.1, 0, 0.02))}, cam, {});
  ASSERT_EQ(curve.values.size(), 10u);
  EXPECT_EQ(curve.values[0], 0.0);
  EXPECT_EQ(curve.values[1], 0.0);
  for (std::size_t f = 2; f < 10; ++f) EXPECT_NEAR(curve.values[f], kPerfect, 1e-3) << f;
  EXPECT_NEAR(kPerfect, 8.270, 5e-4);
}

TEST(Surprise, TeleportPeaksAtJump) {
  const Camera cam = simkit::default_camera();
  const int f = 6;
  const auto curve =
      surprise_curve({mover(0, cam, 12, Vec3(-1.5, -0.4, 6), Vec3(0.05, 0, 0), std::pair{f, Vec3(3, 0, 0)})}, cam, {});
  EXPECT_EQ(curve.peak_frame(), f);
  // Frames before the jump are perfectly predicted: the margin there is the
  // full 3-sigma Gaussian cost of 4.5.
  for (int k = 2; k < f; ++k) EXPECT_GE(curve.values[f] - curve.values[k], 4.0);
  // With a three-state window the first two frames after the jump still see
  // half of it in the mean velocity (1.5 sigma): margin 4.5 - 1.125.
  for (int k = f + 1; k < 12; ++k) EXPECT_GE(curve.values[f] - curve.values[k], 3.375 - 1e-9) << k;
}

TEST(Surprise, DisappearanceBehindOccluderIsFree) {
  const Camera cam = simkit::default_camera();
  ObjectTrack hidden = mover(0, cam, 4, Vec3(0, -0.4, 7), Vec3(0.05, 0, 0));
  ObjectTrack wall(1000);
  const Cuboid w = box(Vec3(0, -1.1, 3.5), Vec3(2.5, 2.2, 0.1));
  for (int f = 0; f < 8; ++f) wall.append({f, w, geometry::project(w, cam)});
  SurpriseOptions opt;
  opt.frame_count = 8;
  const auto occluded = surprise_curve({hidden, wall}, cam, {}, opt);
  EXPECT_NEAR(occluded.values[4], kPerfect, 1e-3);  // the wall alone
  const auto open = surprise_curve({hidden}, cam, {}, opt);
  EXPECT_GT(open.values[4], 1.0);
  EXPECT_EQ(open.values[5], 0.0);  // penalized once
}

TEST(RelativeAccuracy, Cases) {
  auto curve = [](std::vector<double> v) { return SurpriseCurve{"v", std::move(v)}; };
  EXPECT_EQ(relative_accuracy({{curve({1, 2}), curve({1, 3})}, {curve({0}), curve({5})}}), 1.0);
  EXPECT_EQ(relative_accuracy({{curve({1, 2}), curve({1, 2})}}), 0.5);
  EXPECT_EQ(relative_accuracy({{curve({1}), curve({2})},
                               {curve({1}), curve({3})},
                               {curve({1}), curve({4})},
                               {curve({1}), curve({1})}}),
            0.875);
  EXPECT_THROW(relative_accuracy({}), ContractError);
}

TEST(RelativeAccuracy, InvariantToMonotoneTransform) {
  Rng rng(9);
  std::vector<std::pair<SurpriseCurve, SurpriseCurve>> pairs, mapped;
  for (int i = 0; i < 30; ++i) {
    SurpriseCurve a{"a", {}}, b{"b", {}};
    for (int f = 0; f < 5; ++f) {
      a.values.push_back(std::round(rng.uniform(0, 10)));
      b.values.push_back(std::round(rng.uniform(0, 10)));
    }
    pairs.emplace_back(a, b);
    for (double& v : a.values) v = std::exp(0.3 * v) - 4;
    for (double& v : b.values) v = std::exp(0.3 * v) - 4;
    mapped.emplace_back(a, b);
  }
  const double r = relative_accuracy(pairs);
  EXPECT_GE(r, 0.0);
  EXPECT_LE(r, 1.0);
  EXPECT_EQ(r, relative_accuracy(mapped));
}

TEST(SurpriseCurve, PeakFrame) {
  EXPECT_EQ((SurpriseCurve{"x", {1, 5, 5, 2}}.peak_frame()), 1);
  EXPECT_EQ(SurpriseCurve{}.peak_frame(), -1);
}

}  // namespace
}  // namespace objdisc::evalkit
