#pragma once

// Mask <-> cuboid mapping through a pinhole camera, and depth-ordered
// rendering of several cuboids with a shared palette.

#include <functional>
#include <optional>
#include <vector>

#include "objdisc/core.h"

namespace objdisc::geometry {

struct BackprojectionConfig {
  double alpha = 20.0;  // depth per unit of normalized mask height
  int boundary_count = 200;
  Vec3 fixed_rotation = Vec3::Zero();
  double fixed_z_size = 1.0;

  void validate() const;
};

// Soft extremes in pixel-index coordinates (column for x, row for y).
struct Bounds {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

// For each direction, the boundary_count most extreme pixels among those with
// weight > 0.5, averaged with their mask weights as coefficients.
Bounds soft_bounds(const Mask& m, int boundary_count);

// Normalized height of the mask's lower edge above the bottom of the image,
// in [0, 1]. Masks higher in the image give larger values.
double normalized_base_height(const Bounds& b, int image_height);

// Manual backprojection: camera-frame depth 1 + alpha * base height, bounds
// back-cast through the inverse intrinsics at that depth, center halfway
// between the extremes, depth extent and rotation fixed by cfg.
Cuboid backproject_manual(const Mask& m, const Camera& cam, const BackprojectionConfig& cfg);

// Any mask -> cuboid model with the same signature as backproject_manual.
using Backprojector = std::function<Cuboid(const Mask&, const Camera&)>;

// Least-squares alpha for depth = 1 + alpha * h over (h, camera-frame depth)
// samples.
double calibrate_alpha(const std::vector<double>& base_heights, const std::vector<double>& depths);

// Filled convex hull of the 8 projected corners, sampled at pixel centers.
// Throws GeometryError if any corner is at or behind the camera plane.
Mask project(const Cuboid& c, const Camera& cam);

struct RenderResult {
  std::vector<Mask> masks;  // input order
  Mask palette{1, 1};       // remaining unrendered budget
};

// Visits cuboids by increasing camera-frame distance of their centers;
// m_k = p * Project(k), p <- p * (1 - Project(k)).
RenderResult render_all_with_palette(const std::vector<Cuboid>& cuboids, const Camera& cam);
std::vector<Mask> render_all(const std::vector<Cuboid>& cuboids, const Camera& cam);

// Rendering order used by render_all (indices into the input).
std::vector<std::size_t> depth_order(const std::vector<Cuboid>& cuboids, const Camera& cam);

// Ray from the optical center through pixel center (row, col), intersected
// with the cuboid. Returns the nearest hit in world coordinates.
std::optional<Vec3> ray_hit(const Cuboid& c, const Camera& cam, int row, int col);

}  // namespace objdisc::geometry
