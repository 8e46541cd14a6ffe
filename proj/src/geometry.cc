#include "objdisc/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "objdisc/error.h"

namespace objdisc::geometry {
namespace {

struct Px {
  int row;
  int col;
  double w;
};

template <typename Less>
double extreme_mean(std::vector<Px> px, std::size_t n, bool use_col, Less less) {
  n = std::min(n, px.size());
  std::partial_sort(px.begin(), px.begin() + static_cast<std::ptrdiff_t>(n), px.end(), less);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += px[i].w * (use_col ? px[i].col : px[i].row);
    den += px[i].w;
  }
  return num / den;
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; counter-clockwise in (u, v) coordinates, no
// collinear points.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

void BackprojectionConfig::validate() const {
  if (!(alpha > 0.0)) throw ContractError("backprojection alpha must be positive");
  if (boundary_count < 1) throw ContractError("boundary_count must be at least 1");
  if (!(fixed_z_size > 0.0)) throw ContractError("fixed_z_size must be positive");
  if (!fixed_rotation.allFinite()) throw NumericError("fixed_rotation must be finite");
}

Bounds soft_bounds(const Mask& m, int boundary_count) {
  if (boundary_count < 1) throw ContractError("boundary_count must be at least 1");
  std::vector<Px> px;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      if (m(r, c) > 0.5) px.push_back({r, c, m(r, c)});
    }
  }
  if (px.empty()) throw GeometryError("soft_bounds: empty mask");
  const auto n = static_cast<std::size_t>(boundary_count);
  Bounds b;
  b.x_min = extreme_mean(px, n, true, [](const Px& a, const Px& o) {
    return a.col != o.col ? a.col < o.col : a.row < o.row;
  });
  b.x_max = extreme_mean(px, n, true, [](const Px& a, const Px& o) {
    return a.col != o.col ? a.col > o.col : a.row < o.row;
  });
  b.y_min = extreme_mean(px, n, false, [](const Px& a, const Px& o) {
    return a.row != o.row ? a.row < o.row : a.col < o.col;
  });
  b.y_max = extreme_mean(px, n, false, [](const Px& a, const Px& o) {
    return a.row != o.row ? a.row > o.row : a.col < o.col;
  });
  return b;
}

double normalized_base_height(const Bounds& b, int image_height) {
  return (image_height - (b.y_max + 1.0)) / image_height;
}

Cuboid backproject_manual(const Mask& m, const Camera& cam, const BackprojectionConfig& cfg) {
  cfg.validate();
  if (m.width() != cam.width || m.height() != cam.height) {
    throw DimensionError("mask size does not match camera image size");
  }
  const Bounds b = soft_bounds(m, cfg.boundary_count);
  if (b.x_max - b.x_min < 1e-9 || b.y_max - b.y_min < 1e-9) {
    throw GeometryError("backprojection: degenerate mask extent");
  }
  const double depth = 1.0 + cfg.alpha * normalized_base_height(b, m.height());
  // Continuous pixel edges: index i spans [i, i + 1).
  const Vec3 top_left = cam.backcast(b.x_min, b.y_min, depth);
  const Vec3 bottom_right = cam.backcast(b.x_max + 1.0, b.y_max + 1.0, depth);
  const Vec3 center = 0.5 * (top_left + bottom_right);

  Cuboid c;
  c.translation = cam.to_world(Vec3(center.x(), center.y(), depth));
  c.size = Vec3(bottom_right.x() - top_left.x(), bottom_right.y() - top_left.y(), cfg.fixed_z_size);
  c.rotation = cfg.fixed_rotation;
  c.validate();
  return c;
}

double calibrate_alpha(const std::vector<double>& base_heights, const std::vector<double>& depths) {
  if (base_heights.size() != depths.size() || base_heights.empty()) {
    throw ContractError("calibrate_alpha needs matching, nonempty samples");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    num += base_heights[i] * (depths[i] - 1.0);
    den += base_heights[i] * base_heights[i];
  }
  if (den <= 0.0) throw NumericError("calibrate_alpha: all base heights are zero");
  const double alpha = num / den;
  if (!(alpha > 0.0)) throw NumericError("calibrate_alpha: fitted alpha is not positive");
  return alpha;
}

Mask project(const Cuboid& c, const Camera& cam) {
  std::vector<Vec2> pts;
  pts.reserve(8);
  for (const Vec3& corner : c.corners()) {
    const Vec3 p = cam.to_camera(corner);
    if (!(p.z() > 1e-9)) throw GeometryError("project: cuboid corner at or behind the camera plane");
    pts.push_back(cam.project_point(p));
  }
  Mask out(cam.width, cam.height);
  const std::vector<Vec2> hull = convex_hull(std::move(pts));
  if (hull.size() < 3) return out;

  double umin = hull[0].x(), umax = umin, vmin = hull[0].y(), vmax = vmin;
  for (const auto& p : hull) {
    umin = std::min(umin, p.x());
    umax = std::max(umax, p.x());
    vmin = std::min(vmin, p.y());
    vmax = std::max(vmax, p.y());
  }
  const int c0 = std::max(0, static_cast<int>(std::floor(umin - 0.5)));
  const int c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(umax - 0.5)));
  const int r0 = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
  const int r1 = std::min(cam.height - 1, static_cast<int>(std::ceil(vmax - 0.5)));
  for (int r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const Vec2 p(col + 0.5, r + 0.5);
      bool inside = true;
      for (std::size_t i = 0; i < hull.size() && inside; ++i) {
        inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0.0;
      }
      if (inside) out.set(r, col, 1.0);
    }
  }
  return out;
}

std::vector<std::size_t> depth_order(const std::vector<Cuboid>& cuboids, const Camera& cam) {
  std::vector<std::size_t> order(cuboids.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(cuboids.size());
  for (std::size_t k = 0; k < cuboids.size(); ++k) dist[k] = cam.to_camera(cuboids[k].translation).norm();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

RenderResult render_all_with_palette(const std::vector<Cuboid>& cuboids, const Camera& cam) {
  RenderResult out;
  out.palette = Mask(cam.width, cam.height, 1.0);
  out.masks.assign(cuboids.size(), Mask(cam.width, cam.height));
  for (std::size_t k : depth_order(cuboids, cam)) {
    const Mask proj = project(cuboids[k], cam);
    Mask& m = out.masks[k];
    for (std::size_t i = 0; i < proj.size(); ++i) {
      if (proj[i] == 0.0) continue;
      const double p = out.palette[i];
      m.set(i, p * proj[i]);
      out.palette.set(i, p * (1.0 - proj[i]));
    }
  }
  return out;
}

std::vector<Mask> render_all(const std::vector<Cuboid>& cuboids, const Camera& cam) {
  return render_all_with_palette(cuboids, cam).masks;
}

std::optional<Vec3> ray_hit(const Cuboid& c, const Camera& cam, int row, int col) {
  const Vec3 origin = cam.center();
  const Vec3 dir_cam((col + 0.5 - cam.cx) / cam.fx, (row + 0.5 - cam.cy) / cam.fy, 1.0);
  const Vec3 dir = cam.rotation.transpose() * dir_cam;
  const Mat3 r = c.rotation_matrix();
  const Vec3 o = r.transpose() * (origin - c.translation);
  const Vec3 d = r.transpose() * dir;
  const Vec3 h = 0.5 * c.size;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > h[a]) return std::nullopt;
      continue;
    }
    double t1 = (-h[a] - o[a]) / d[a];
    double t2 = (h[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_far <= 0.0) return std::nullopt;
  const double t = t_near > 0.0 ? t_near : t_far;
  return origin + t * dir;
}

}  // namespace objdisc::geometry
