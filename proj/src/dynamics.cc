#include "objdisc/dynamics.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "objdisc/error.h"
#include "objdisc/geometry.h"

namespace objdisc::dynamics {
namespace {

double gaussian_log_density(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) - 0.5 * z * z;
}

bool in_front(const Cuboid& c, const Camera& cam) {
  for (const Vec3& corner : c.corners()) {
    if (!(cam.to_camera(corner).z() > 1e-9)) return false;
  }
  return true;
}

}  // namespace

void DynamicsParams::validate() const {
  if (!(sigma_t > 0.0 && sigma_s > 0.0 && sigma_q > 0.0)) throw ContractError("dynamics sigmas must be positive");
  if (history_window < 2) throw ContractError("history_window must be at least 2");
  if (!(mask_bin_threshold > 0.0 && mask_bin_threshold < 1.0)) {
    throw ContractError("mask_bin_threshold must lie in (0, 1)");
  }
  if (!(log_floor > 0.0 && log_floor < 1.0)) throw ContractError("log_floor must lie in (0, 1)");
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

Cuboid predict_cuboid(const ObjectTrack& track, const DynamicsParams& params, std::optional<int> target_frame) {
  params.validate();
  const auto& all = track.states();
  if (all.size() < 2) throw InsufficientHistoryError("prediction needs at least 2 states");
  const std::size_t n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(params.history_window));
  const auto first = all.end() - static_cast<std::ptrdiff_t>(n);

  Vec3 velocity = Vec3::Zero();
  Vec3 spin = Vec3::Zero();
  Vec3 size = first->cuboid.size;
  for (auto it = first + 1; it != all.end(); ++it) {
    const double dt = it->frame - (it - 1)->frame;
    velocity += (it->cuboid.translation - (it - 1)->cuboid.translation) / dt;
    const Vec3 dq = it->cuboid.rotation - (it - 1)->cuboid.rotation;
    for (int a = 0; a < 3; ++a) spin[a] += wrap_angle(dq[a]) / dt;
    size += it->cuboid.size;
  }
  velocity /= static_cast<double>(n - 1);
  spin /= static_cast<double>(n - 1);
  size /= static_cast<double>(n);

  const TrackState& last = all.back();
  const double gap = target_frame ? *target_frame - last.frame : 1.0;
  if (!(gap > 0.0)) throw ContractError("prediction target must follow the last observed frame");
  Cuboid out;
  out.translation = last.cuboid.translation + gap * velocity;
  out.size = size;
  out.rotation = last.cuboid.rotation + gap * spin;
  return out;
}

std::vector<Prediction> predict_all(const std::vector<ObjectTrack>& tracks, const Camera& cam,
                                    const DynamicsParams& params, int target_frame) {
  std::vector<Cuboid> cuboids;
  std::vector<std::size_t> slot(tracks.size(), 0);
  std::vector<Prediction> out(tracks.size());
  std::vector<std::size_t> visible;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    if (tracks[k].empty()) continue;
    out[k].cuboid = tracks[k].length() >= 2 ? predict_cuboid(tracks[k], params, target_frame) : tracks[k].last().cuboid;
    out[k].mask = Mask(cam.width, cam.height);
    if (in_front(out[k].cuboid, cam)) {
      slot[k] = cuboids.size();
      cuboids.push_back(out[k].cuboid);
      visible.push_back(k);
    }
  }
  const auto masks = geometry::render_all(cuboids, cam);
  for (std::size_t k : visible) out[k].mask = masks[slot[k]];
  return out;
}

Prediction predict(const ObjectTrack& track, const std::vector<ObjectTrack>& all_tracks, const Camera& cam,
                   const DynamicsParams& params, std::optional<int> target_frame) {
  if (track.length() < 2) throw InsufficientHistoryError("prediction needs at least 2 states");
  const int target = target_frame ? *target_frame : track.last_frame() + 1;
  std::vector<ObjectTrack> scene;
  std::size_t self = all_tracks.size();
  for (const auto& t : all_tracks) {
    if (t.id() == track.id()) {
      self = scene.size();
      scene.push_back(track);
    } else {
      scene.push_back(t);
    }
  }
  if (self == all_tracks.size()) {
    self = scene.size();
    scene.push_back(track);
  }
  Prediction p;
  p.cuboid = predict_cuboid(track, params, target);
  std::vector<Cuboid> cuboids;
  std::size_t self_slot = 0;
  for (std::size_t k = 0; k < scene.size(); ++k) {
    if (scene[k].empty()) continue;
    if (k == self) self_slot = cuboids.size();
    cuboids.push_back(k == self ? p.cuboid
                      : scene[k].length() >= 2 ? predict_cuboid(scene[k], params, target)
                                               : scene[k].last().cuboid);
  }
  p.mask = geometry::render_all(cuboids, cam)[self_slot];
  return p;
}

Mask mask_probability(const Mask& predicted, const Mask& observed, const DynamicsParams& params) {
  require_same_shape(predicted, observed, "mask_probability");
  Mask out(predicted.width(), predicted.height());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    out.set(i, observed[i] > params.mask_bin_threshold ? predicted[i] : 1.0 - predicted[i]);
  }
  return out;
}

double mask_log_term(const Mask& predicted, const Mask& observed, const DynamicsParams& params) {
  require_same_shape(predicted, observed, "mask_log_term");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = observed[i] > params.mask_bin_threshold ? predicted[i] : 1.0 - predicted[i];
    sum += std::log(std::max(p, params.log_floor));
  }
  return sum / static_cast<double>(predicted.size());
}

double physics_log_likelihood(const Prediction& predicted, const Prediction& observed, const DynamicsParams& params) {
  params.validate();
  for (const Cuboid* c : {&predicted.cuboid, &observed.cuboid}) {
    if (!c->translation.allFinite() || !c->size.allFinite() || !c->rotation.allFinite()) {
      throw NumericError("physics_log_likelihood: non-finite cuboid");
    }
  }
  double ll = 0.0;
  for (int a = 0; a < 3; ++a) {
    ll += gaussian_log_density(observed.cuboid.translation[a], predicted.cuboid.translation[a], params.sigma_t);
    ll += gaussian_log_density(observed.cuboid.size[a], predicted.cuboid.size[a], params.sigma_s);
    ll += gaussian_log_density(wrap_angle(observed.cuboid.rotation[a] - predicted.cuboid.rotation[a]), 0.0,
                               params.sigma_q);
  }
  return ll + mask_log_term(predicted.mask, observed.mask, params);
}

double disappearance_penalty(const Mask& predicted, const DynamicsParams& params) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] > params.mask_bin_threshold) {
      sum += std::log(std::max(1.0 - predicted[i], params.log_floor));
      ++n;
    }
  }
  return n == 0 ? 0.0 : -sum / static_cast<double>(n);
}

}  // namespace objdisc::dynamics
