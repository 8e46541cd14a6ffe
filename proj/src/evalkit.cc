#include "objdisc/evalkit.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "objdisc/error.h"
#include "objdisc/random.h"

namespace objdisc::evalkit {
namespace {

// Maximum-weight assignment on a square matrix (rows -> columns), O(n^3).
std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weight) {
  const int n = static_cast<int>(weight.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

struct Aabb {
  Vec3 lo;
  Vec3 hi;
};

Aabb bounds(const Cuboid& c) {
  Aabb b{Vec3::Constant(std::numeric_limits<double>::infinity()),
         Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const Vec3& p : c.corners()) {
    b.lo = b.lo.cwiseMin(p);
    b.hi = b.hi.cwiseMax(p);
  }
  return b;
}

}  // namespace

double iou2d(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "iou2d");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0.5, y = b[i] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatchReport match_and_score(const std::vector<Mask>& pred, const std::vector<Mask>& gt, MatchMode mode, int frame) {
  if (gt.empty()) throw ContractError("match_and_score needs at least one ground-truth mask");
  MatchReport report;
  report.best_iou.assign(gt.size(), 0.0);
  report.best_match.assign(gt.size(), -1);
  std::vector<std::vector<double>> iou(gt.size(), std::vector<double>(pred.size(), 0.0));
  for (std::size_t g = 0; g < gt.size(); ++g) {
    for (std::size_t p = 0; p < pred.size(); ++p) iou[g][p] = iou2d(pred[p], gt[g]);
  }
  if (mode == MatchMode::kBestPerGt) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      for (std::size_t p = 0; p < pred.size(); ++p) {
        if (iou[g][p] > report.best_iou[g]) {
          report.best_iou[g] = iou[g][p];
          report.best_match[g] = static_cast<int>(p);
        }
      }
    }
  } else if (!pred.empty()) {
    const std::size_t n = std::max(gt.size(), pred.size());
    std::vector<std::vector<double>> square(n, std::vector<double>(n, 0.0));
    for (std::size_t g = 0; g < gt.size(); ++g) {
      for (std::size_t p = 0; p < pred.size(); ++p) square[g][p] = iou[g][p];
    }
    const auto assignment = hungarian_max(square);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const int p = assignment[g];
      if (p >= 0 && static_cast<std::size_t>(p) < pred.size() && iou[g][p] > 0.0) {
        report.best_iou[g] = iou[g][p];
        report.best_match[g] = p;
      }
    }
  }
  double sum = 0.0;
  std::size_t detected = 0;
  for (double v : report.best_iou) {
    sum += v;
    detected += v > 0.5;
  }
  report.mean_iou = sum / static_cast<double>(gt.size());
  report.detection_rate = static_cast<double>(detected) / static_cast<double>(gt.size());
  report.frames.push_back({frame, gt.size(), report.mean_iou, report.detection_rate});
  return report;
}

MatchReport aggregate(const std::vector<MatchReport>& reports) {
  MatchReport out;
  for (const auto& r : reports) {
    out.best_iou.insert(out.best_iou.end(), r.best_iou.begin(), r.best_iou.end());
    out.best_match.insert(out.best_match.end(), r.best_match.begin(), r.best_match.end());
    out.frames.insert(out.frames.end(), r.frames.begin(), r.frames.end());
  }
  if (out.best_iou.empty()) return out;
  double sum = 0.0;
  std::size_t detected = 0;
  for (double v : out.best_iou) {
    sum += v;
    detected += v > 0.5;
  }
  out.mean_iou = sum / static_cast<double>(out.best_iou.size());
  out.detection_rate = static_cast<double>(detected) / static_cast<double>(out.best_iou.size());
  return out;
}

double iou3d_axis_aligned(const Cuboid& a, const Cuboid& b) {
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a.translation[k] - 0.5 * a.size[k], b.translation[k] - 0.5 * b.size[k]);
    const double hi = std::min(a.translation[k] + 0.5 * a.size[k], b.translation[k] + 0.5 * b.size[k]);
    inter *= std::max(0.0, hi - lo);
  }
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou3d_monte_carlo(const Cuboid& a, const Cuboid& b, int samples, std::uint64_t seed) {
  if (samples <= 0) throw ContractError("iou3d needs a positive sample count");
  const Aabb ba = bounds(a), bb = bounds(b);
  const Vec3 lo = ba.lo.cwiseMin(bb.lo), hi = ba.hi.cwiseMax(bb.hi);
  const Mat3 ra = a.rotation_matrix().transpose(), rb = b.rotation_matrix().transpose();
  const Vec3 ha = 0.5 * a.size, hb = 0.5 * b.size;
  Rng rng(seed);
  std::size_t inter = 0, uni = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
    const bool in_a = ((ra * (p - a.translation)).array().abs() <= ha.array()).all();
    const bool in_b = ((rb * (p - b.translation)).array().abs() <= hb.array()).all();
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double iou3d(const Cuboid& a, const Cuboid& b, int samples) {
  a.validate();
  b.validate();
  if (a.rotation.isZero(0.0) && b.rotation.isZero(0.0)) return iou3d_axis_aligned(a, b);
  return iou3d_monte_carlo(a, b, samples);
}

double recall3d(const std::vector<Cuboid>& pred, const std::vector<Cuboid>& gt, double threshold, int samples) {
  if (gt.empty()) throw ContractError("recall3d needs at least one ground-truth cuboid");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("recall3d threshold must lie in (0, 1)");
  std::size_t hits = 0;
  for (const Cuboid& g : gt) {
    double best = 0.0;
    for (const Cuboid& p : pred) best = std::max(best, iou3d(p, g, samples));
    hits += best > threshold;
  }
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

std::vector<TranslationPair> match_track_states(const std::vector<ObjectTrack>& pred,
                                                const std::vector<ObjectTrack>& gt, double min_iou) {
  std::vector<TranslationPair> pairs;
  for (const auto& g : gt) {
    for (const auto& gs : g.states()) {
      const TrackState* best = nullptr;
      double best_iou = min_iou;
      for (const auto& p : pred) {
        const TrackState* ps = p.state_at(gs.frame);
        if (!ps) continue;
        const double v = iou2d(ps->mask, gs.mask);
        if (v > best_iou) {
          best_iou = v;
          best = ps;
        }
      }
      if (best) pairs.push_back({best->cuboid.translation, gs.cuboid.translation});
    }
  }
  return pairs;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("pearson needs two equal series of length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

Alignment align_and_correlate(const std::vector<TranslationPair>& pairs) {
  if (pairs.size() < 4) throw ContractError("alignment needs at least 4 matched pairs");
  std::vector<std::size_t> cal, test;
  for (std::size_t i = 0; i < pairs.size(); ++i) (i % 2 == 0 ? cal : test).push_back(i);

  Eigen::MatrixXd design(cal.size(), 4);
  Eigen::MatrixXd target(cal.size(), 3);
  for (std::size_t r = 0; r < cal.size(); ++r) {
    design.row(r) << pairs[cal[r]].predicted.transpose(), 1.0;
    target.row(r) = pairs[cal[r]].truth.transpose();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) throw ContractError("alignment fit is rank-deficient");
  const Eigen::MatrixXd solution = qr.solve(target);  // 4x3

  Alignment out;
  out.transform = solution.transpose();
  out.calibration_count = cal.size();
  out.test_count = test.size();
  std::vector<double> pooled_x, pooled_y;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> x, y;
    for (std::size_t i : test) {
      x.push_back(out.apply(pairs[i].predicted)[a]);
      y.push_back(pairs[i].truth[a]);
    }
    out.pearson_r[a] = pearson(x, y);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      pooled_x.push_back(x[i] - mx);
      pooled_y.push_back(y[i] - my);
    }
  }
  out.pooled_r = pearson(pooled_x, pooled_y);
  return out;
}

Alignment align_and_correlate(const std::vector<ObjectTrack>& pred, const std::vector<ObjectTrack>& gt) {
  return align_and_correlate(match_track_states(pred, gt));
}

double SurpriseCurve::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

int SurpriseCurve::peak_frame() const {
  if (values.empty()) return -1;
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

SurpriseCurve surprise_curve(const std::vector<ObjectTrack>& tracks, const Camera& cam,
                             const dynamics::DynamicsParams& params, const SurpriseOptions& options) {
  int frames = 0;
  for (const auto& t : tracks) {
    if (!t.empty()) frames = std::max(frames, t.last_frame() + 1);
  }
  if (options.frame_count) frames = *options.frame_count;

  SurpriseCurve curve;
  curve.values.assign(static_cast<std::size_t>(std::max(frames, 0)), 0.0);
  for (int t = 0; t < frames; ++t) {
    std::vector<ObjectTrack> scene;
    std::vector<std::size_t> source;
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const bool seen_before = tracks[k].state_at(t - 1) != nullptr;
      const bool seen_now = tracks[k].state_at(t) != nullptr;
      ObjectTrack history = tracks[k].truncated(t);
      if (seen_before || (seen_now && !history.empty())) {
        scene.push_back(std::move(history));
        source.push_back(k);
      }
    }
    if (scene.empty()) continue;
    const auto preds = dynamics::predict_all(scene, cam, params, t);
    double s = 0.0;
    for (std::size_t k = 0; k < scene.size(); ++k) {
      if (scene[k].length() < 2) continue;
      const TrackState* obs = tracks[source[k]].state_at(t);
      if (obs) {
        s -= dynamics::physics_log_likelihood(preds[k], {obs->cuboid, obs->mask}, params);
      } else if (mask_area(preds[k].mask, params.mask_bin_threshold) >= options.visible_pixel_floor) {
        s += dynamics::disappearance_penalty(preds[k].mask, params);
      }
    }
    curve.values[t] = s;
  }
  return curve;
}

double relative_accuracy(const std::vector<std::pair<SurpriseCurve, SurpriseCurve>>& pairs) {
  if (pairs.empty()) throw ContractError("relative_accuracy needs at least one pair");
  double score = 0.0;
  for (const auto& [plausible, implausible] : pairs) {
    const double a = plausible.max(), b = implausible.max();
    if (b > a) {
      score += 1.0;
    } else if (b == a) {
      score += 0.5;
    }
  }
  return score / static_cast<double>(pairs.size());
}

}  // namespace objdisc::evalkit
