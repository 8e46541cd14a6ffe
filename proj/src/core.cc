#include "objdisc/core.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Geometry>

#include "objdisc/error.h"

namespace objdisc {
namespace {

void check_weight(double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw ContractError("mask weight outside [0, 1]: " + std::to_string(w));
  }
}

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
}

}  // namespace

Mask::Mask(int width, int height, double fill) : width_(width), height_(height) {
  check_dims(width, height);
  check_weight(fill);
  weights_.assign(static_cast<std::size_t>(width) * height, fill);
}

Mask Mask::from_weights(int width, int height, std::vector<double> weights) {
  check_dims(width, height);
  if (weights.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("weight count does not match mask dimensions");
  }
  for (double w : weights) check_weight(w);
  Mask m(width, height);
  m.weights_ = std::move(weights);
  return m;
}

void Mask::set(int row, int col, double w) {
  set(static_cast<std::size_t>(row) * width_ + col, w);
}

void Mask::set(std::size_t i, double w) {
  check_weight(w);
  weights_[i] = w;
}

double Mask::total() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  check_dims(width, height);
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

RgbImage RgbImage::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || h <= 0 || w <= 0 || top + h > height_ || left + w > width_) {
    throw DimensionError("crop rectangle outside image");
  }
  RgbImage out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out(r, c) = (*this)(top + r, left + c);
  }
  return out;
}

void Frame::validate() const {
  for (const Rgb& px : image.pixels()) {
    for (double v : px) {
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("frame channel outside [0, 1]");
    }
  }
}

Mat3 euler_xyz_to_matrix(const Vec3& q) {
  return (Eigen::AngleAxisd(q.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(q.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(q.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

void Cuboid::validate() const {
  if (!translation.allFinite() || !size.allFinite()) throw NumericError("cuboid has non-finite values");
  if ((size.array() <= 0.0).any()) throw ContractError("cuboid size components must be positive");
  if (!rotation.allFinite()) throw NumericError("cuboid rotation must be finite");
}

std::array<Vec3, 8> Cuboid::corners() const {
  const Mat3 r = rotation_matrix();
  const Vec3 h = 0.5 * size;
  std::array<Vec3, 8> out;
  int i = 0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        out[i++] = translation + r * Vec3(sx * h.x(), sy * h.y(), sz * h.z());
      }
    }
  }
  return out;
}

bool Cuboid::contains(const Vec3& p) const {
  const Vec3 local = rotation_matrix().transpose() * (p - translation);
  return (local.array().abs() <= 0.5 * size.array()).all();
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ContractError("camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw NumericError("camera has non-finite parameters");
  }
  const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ContractError("camera rotation must be orthonormal with determinant +1");
  }
}

Vec2 Camera::project_point(const Vec3& cam) const {
  return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
}

Vec3 Camera::backcast(double u, double v, double depth) const {
  return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
}

void ObjectTrack::append(TrackState state) {
  if (!states_.empty()) {
    if (state.frame <= states_.back().frame) {
      throw ContractError("track frame indices must strictly increase");
    }
    if (!state.mask.same_shape(states_.back().mask)) {
      throw DimensionError("track masks must share one image size");
    }
  }
  states_.push_back(std::move(state));
}

int ObjectTrack::first_frame() const {
  if (states_.empty()) throw ContractError("empty track has no first frame");
  return states_.front().frame;
}

int ObjectTrack::last_frame() const {
  if (states_.empty()) throw ContractError("empty track has no last frame");
  return states_.back().frame;
}

const TrackState& ObjectTrack::last() const {
  if (states_.empty()) throw ContractError("empty track has no last state");
  return states_.back();
}

const TrackState* ObjectTrack::state_at(int frame) const {
  auto it = std::lower_bound(states_.begin(), states_.end(), frame,
                             [](const TrackState& s, int f) { return s.frame < f; });
  if (it == states_.end() || it->frame != frame) return nullptr;
  return &*it;
}

ObjectTrack ObjectTrack::truncated(int end_frame) const {
  ObjectTrack out(id_);
  for (const auto& s : states_) {
    if (s.frame >= end_frame) break;
    out.states_.push_back(s);
  }
  return out;
}

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": mask size mismatch (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
  }
}

std::size_t mask_overlap_pixels(const Mask& a, const Mask& b, double bin_threshold) {
  require_same_shape(a, b, "mask_overlap_pixels");
  if (!(bin_threshold > 0.0 && bin_threshold < 1.0)) throw ContractError("bin_threshold must lie in (0, 1)");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > bin_threshold && b[i] > bin_threshold) ++n;
  }
  return n;
}

Mask binarize(const Mask& m, double threshold) {
  Mask out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > threshold) out.set(i, 1.0);
  }
  return out;
}

std::size_t mask_area(const Mask& m, double threshold) {
  return static_cast<std::size_t>(
      std::count_if(m.weights().begin(), m.weights().end(), [&](double w) { return w > threshold; }));
}

Mask mask_union(const Mask& a, const Mask& b, double threshold) {
  require_same_shape(a, b, "mask_union");
  Mask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > threshold || b[i] > threshold) out.set(i, 1.0);
  }
  return out;
}

}  // namespace objdisc
