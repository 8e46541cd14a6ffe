#pragma once

// Shared domain types: soft masks, RGB frames, cuboids, cameras and tracks.
//
// Conventions used throughout the library:
//  * Grids are row-major; (row, col) indexing, row 0 at the top.
//  * Pixel (row, col) covers the continuous square [col, col+1) x [row, row+1);
//    its center is (col + 0.5, row + 0.5).
//  * Camera frame: x right, y down, z forward. The world frame used by the
//    simulator has the same orientation with the ground plane at y = 0, so
//    "up" is -y.
//  * Euler angles are extrinsic XYZ: R = Rz(qz) * Ry(qy) * Rx(qx).
//  * Cuboid sizes are full edge lengths.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace objdisc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rgb = std::array<double, 3>;

// Soft per-pixel weight map with every weight in [0, 1].
class Mask {
 public:
  Mask(int width, int height, double fill = 0.0);

  // Validates dimensions and range of every weight.
  static Mask from_weights(int width, int height, std::vector<double> weights);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return weights_.size(); }

  double operator()(int row, int col) const {
    return weights_[static_cast<std::size_t>(row) * width_ + col];
  }
  double operator[](std::size_t i) const { return weights_[i]; }

  // Throws ContractError if w is outside [0, 1] or not finite.
  void set(int row, int col, double w);
  void set(std::size_t i, double w);

  std::span<const double> weights() const { return weights_; }
  double total() const;
  bool same_shape(const Mask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_;
  int height_;
  std::vector<double> weights_;
};

class RgbImage {
 public:
  RgbImage(int width, int height, Rgb fill = {0.0, 0.0, 0.0});

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }

  const Rgb& operator()(int row, int col) const {
    return pixels_[static_cast<std::size_t>(row) * width_ + col];
  }
  Rgb& operator()(int row, int col) {
    return pixels_[static_cast<std::size_t>(row) * width_ + col];
  }
  const Rgb& operator[](std::size_t i) const { return pixels_[i]; }
  Rgb& operator[](std::size_t i) { return pixels_[i]; }

  std::span<const Rgb> pixels() const { return pixels_; }

  // Copy of the rectangle [top, top+h) x [left, left+w).
  RgbImage crop(int top, int left, int h, int w) const;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

// One video frame; channels are linear RGB in [0, 1].
struct Frame {
  int index = 0;
  RgbImage image{1, 1};

  void validate() const;
};

Mat3 euler_xyz_to_matrix(const Vec3& q);

struct Cuboid {
  Vec3 translation = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  Vec3 rotation = Vec3::Zero();

  void validate() const;
  Mat3 rotation_matrix() const { return euler_xyz_to_matrix(rotation); }
  std::array<Vec3, 8> corners() const;
  bool contains(const Vec3& p) const;
  double volume() const { return size.prod(); }

  friend bool operator==(const Cuboid&, const Cuboid&) = default;
};

// Pinhole camera with a rigid world -> camera pose.
struct Camera {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }
  // Camera-frame point to continuous pixel coordinates (u, v).
  Vec2 project_point(const Vec3& cam) const;
  // Inverse intrinsics: pixel (u, v) at camera-frame depth z.
  Vec3 backcast(double u, double v, double depth) const;
  // World-frame position of the optical center.
  Vec3 center() const { return -(rotation.transpose() * translation); }

  friend bool operator==(const Camera&, const Camera&) = default;
};

struct TrackState {
  int frame = 0;
  Cuboid cuboid;
  Mask mask{1, 1};
};

// Time-indexed history of one discovered (or ground-truth) object.
class ObjectTrack {
 public:
  explicit ObjectTrack(std::int64_t id = 0) : id_(id) {}

  std::int64_t id() const { return id_; }
  const std::vector<TrackState>& states() const { return states_; }
  bool empty() const { return states_.empty(); }
  std::size_t length() const { return states_.size(); }

  // Throws ContractError unless frame indices strictly increase and masks
  // share one size.
  void append(TrackState state);

  int first_frame() const;
  int last_frame() const;
  const TrackState& last() const;
  const TrackState* state_at(int frame) const;

  // Copy holding only states with frame < end_frame.
  ObjectTrack truncated(int end_frame) const;

 private:
  std::int64_t id_;
  std::vector<TrackState> states_;
};

// Number of pixels where both masks exceed bin_threshold.
std::size_t mask_overlap_pixels(const Mask& a, const Mask& b, double bin_threshold);

// Hard {0,1} mask; 1 iff the input weight is strictly above threshold.
Mask binarize(const Mask& m, double threshold);

// Number of pixels strictly above threshold.
std::size_t mask_area(const Mask& m, double threshold = 0.5);

// Hard union of two masks binarized at threshold.
Mask mask_union(const Mask& a, const Mask& b, double threshold = 0.5);

void require_same_shape(const Mask& a, const Mask& b, const char* what);

}  // namespace objdisc
