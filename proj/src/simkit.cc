#include "objdisc/simkit.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "objdisc/error.h"
#include "objdisc/geometry.h"
#include "objdisc/io.h"
#include "objdisc/parallel.h"
#include "objdisc/random.h"

namespace objdisc::simkit {
namespace {

constexpr int kMaxAttempts = 1000;

// Saturated hues kept far apart so darkened shades do not chain together.
constexpr std::array<Rgb, 6> kPalette{{
    {0.95, 0.15, 0.15},
    {0.15, 0.80, 0.20},
    {0.15, 0.15, 1.00},
    {0.95, 0.85, 0.10},
    {0.90, 0.20, 0.85},
    {0.10, 0.85, 0.90},
}};
constexpr Rgb kOccluderColor{0.45, 0.30, 0.15};

Rng stream(std::uint64_t seed, Stream s) { return Rng(seed).split(static_cast<std::uint64_t>(s)); }

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Box {
  Vec3 lo;
  Vec3 hi;
};

Box aabb(const Cuboid& c) {
  Box b{Vec3::Constant(1e300), Vec3::Constant(-1e300)};
  for (const Vec3& p : c.corners()) {
    b.lo = b.lo.cwiseMin(p);
    b.hi = b.hi.cwiseMax(p);
  }
  return b;
}

bool overlaps(const Box& a, const Box& b, double gap) {
  for (int k = 0; k < 3; ++k) {
    if (a.hi[k] + gap <= b.lo[k] || b.hi[k] + gap <= a.lo[k]) return false;
  }
  return true;
}

bool in_view(const Cuboid& c, const Camera& cam, int margin) {
  for (const Vec3& p : c.corners()) {
    const Vec3 q = cam.to_camera(p);
    if (q.z() < 0.5) return false;
    const Vec2 uv = cam.project_point(q);
    if (uv.x() < margin || uv.x() > cam.width - margin || uv.y() < margin || uv.y() > cam.height - margin) {
      return false;
    }
  }
  return true;
}

// Per-frame poses, with the violation applied; nullopt once disappeared.
std::vector<std::vector<std::optional<Cuboid>>> trajectories(const std::vector<ObjectSpec>& objects, int frames,
                                                             int period, const std::optional<Violation>& v) {
  std::vector<std::vector<std::optional<Cuboid>>> out(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (int f = 0; f < frames; ++f) {
      Cuboid c = pose_at(objects[i], f, period);
      if (v && static_cast<std::size_t>(v->object) == i && f >= v->frame) {
        if (v->kind == ViolationKind::kDisappear) {
          out[i].push_back(std::nullopt);
          continue;
        }
        c.translation += v->offset;
      }
      out[i].push_back(c);
    }
  }
  return out;
}

// Every object in view and no two boxes touching, at every frame.
bool valid_configuration(const std::vector<ObjectSpec>& objects, const std::vector<OccluderSpec>& occluders,
                         const SceneConfig& cfg) {
  const auto poses = trajectories(objects, cfg.frames, cfg.back_and_forth_period, std::nullopt);
  std::vector<Box> occluder_boxes;
  for (const auto& o : occluders) {
    if (!in_view(o.box, cfg.camera, 0)) return false;
    occluder_boxes.push_back(aabb(o.box));
  }
  for (std::size_t a = 0; a < occluder_boxes.size(); ++a) {
    for (std::size_t b = a + 1; b < occluder_boxes.size(); ++b) {
      if (overlaps(occluder_boxes[a], occluder_boxes[b], cfg.sampling.clearance)) return false;
    }
  }
  for (int f = 0; f < cfg.frames; ++f) {
    std::vector<Box> boxes;
    for (const auto& track : poses) {
      if (!in_view(*track[f], cfg.camera, cfg.sampling.margin_px)) return false;
      boxes.push_back(aabb(*track[f]));
    }
    for (std::size_t a = 0; a < boxes.size(); ++a) {
      for (std::size_t b = a + 1; b < boxes.size(); ++b) {
        if (overlaps(boxes[a], boxes[b], cfg.sampling.clearance)) return false;
      }
      for (const Box& o : occluder_boxes) {
        if (overlaps(boxes[a], o, cfg.sampling.clearance)) return false;
      }
    }
  }
  return true;
}

ObjectSpec sample_object(Rng& rng, const SceneConfig& cfg, std::size_t index) {
  const Sampling& s = cfg.sampling;
  ObjectSpec o;
  const double w = rng.uniform(s.min_size, s.max_size);
  const double d = rng.uniform(s.min_size, s.max_size);
  const double h = rng.uniform(s.min_height, s.max_height);
  o.start.size = Vec3(w, h, d);
  o.start.translation = Vec3(rng.uniform(-s.x_range, s.x_range), -0.5 * h, rng.uniform(s.min_z, s.max_z));
  o.motion = index < cfg.motion.size() ? cfg.motion[index] : static_cast<Motion>(rng.uniform_int(0, 2));
  const double speed = rng.uniform(s.min_speed, s.max_speed);
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (o.motion == Motion::kRotate) {
    o.yaw_rate = (rng.coin() ? 1.0 : -1.0) * rng.uniform(s.min_yaw_rate, s.max_yaw_rate);
  } else {
    o.velocity = speed * Vec3(std::cos(heading), 0.0, std::sin(heading));
  }
  return o;
}

OccluderSpec sample_occluder(Rng& rng) {
  OccluderSpec o;
  const double w = rng.uniform(1.2, 2.0);
  const double h = rng.uniform(0.9, 1.4);
  o.box.size = Vec3(w, h, 0.1);
  o.box.translation = Vec3(rng.uniform(-1.5, 1.5), -0.5 * h, rng.uniform(3.2, 4.0));
  o.color = kOccluderColor;
  return o;
}

void assign_colors(std::vector<ObjectSpec>& objects, const SceneConfig& cfg) {
  Rng rng = stream(cfg.seed, Stream::kColor);
  std::array<std::size_t, kPalette.size()> order{};
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    objects[i].color = kPalette[order[cfg.shared_color ? 0 : i % order.size()]];
  }
}

SceneRecord render(const SceneConfig& cfg, std::vector<ObjectSpec> objects, std::vector<OccluderSpec> occluders,
                   const std::optional<Violation>& violation) {
  SceneRecord rec;
  rec.config = cfg;
  rec.config.violation = violation;
  rec.objects = std::move(objects);
  rec.occluders = std::move(occluders);
  if (violation) rec.violation_frame = violation->frame;

  const auto poses = trajectories(rec.objects, cfg.frames, cfg.back_and_forth_period, violation);
  const std::size_t n = rec.objects.size();
  const std::size_t frames = static_cast<std::size_t>(cfg.frames);
  std::vector<std::vector<Mask>> masks(frames);
  rec.frames.resize(frames);

  parallel_for(frames, [&](std::size_t f) {
    std::vector<Cuboid> cuboids;
    std::vector<std::size_t> owner;  // object index, or n + occluder index
    std::vector<Rgb> colors;
    for (std::size_t i = 0; i < n; ++i) {
      if (!poses[i][f]) continue;
      cuboids.push_back(*poses[i][f]);
      owner.push_back(i);
      colors.push_back(rec.objects[i].color);
    }
    for (std::size_t k = 0; k < rec.occluders.size(); ++k) {
      cuboids.push_back(rec.occluders[k].box);
      owner.push_back(n + k);
      colors.push_back(rec.occluders[k].color);
    }
    const auto rendered = geometry::render_all(cuboids, cfg.camera);
    RgbImage image(cfg.camera.width, cfg.camera.height, cfg.background);
    for (int r = 0; r < cfg.camera.height; ++r) {
      for (int c = 0; c < cfg.camera.width; ++c) {
        for (std::size_t k = 0; k < cuboids.size(); ++k) {
          if (rendered[k](r, c) <= 0.5) continue;
          const auto hit = geometry::ray_hit(cuboids[k], cfg.camera, r, c);
          const double height = hit ? -hit->y() : 0.5 * cuboids[k].size.y();
          const double m = shade(height);
          image(r, c) = {quantize(colors[k][0] * m), quantize(colors[k][1] * m), quantize(colors[k][2] * m)};
          break;
        }
      }
    }
    for (std::size_t p = 0; p < image.size(); ++p) {
      for (double& v : image[p]) v = quantize(v);
    }
    rec.frames[f] = Frame{static_cast<int>(f), std::move(image)};
    std::vector<Mask> per_owner(n + rec.occluders.size(), Mask(cfg.camera.width, cfg.camera.height));
    for (std::size_t k = 0; k < cuboids.size(); ++k) per_owner[owner[k]] = rendered[k];
    masks[f] = std::move(per_owner);
  });

  for (std::size_t i = 0; i < n; ++i) {
    ObjectTrack track(static_cast<std::int64_t>(i));
    for (std::size_t f = 0; f < frames; ++f) {
      if (poses[i][f]) track.append({static_cast<int>(f), *poses[i][f], masks[f][i]});
    }
    rec.gt_tracks.push_back(std::move(track));
  }
  for (std::size_t k = 0; k < rec.occluders.size(); ++k) {
    ObjectTrack track(kOccluderIdBase + static_cast<std::int64_t>(k));
    for (std::size_t f = 0; f < frames; ++f) {
      track.append({static_cast<int>(f), rec.occluders[k].box, masks[f][n + k]});
    }
    rec.occluder_tracks.push_back(std::move(track));
  }
  return rec;
}

}  // namespace

std::string to_string(Motion m) {
  switch (m) {
    case Motion::kStraight: return "straight";
    case Motion::kBackAndForth: return "back_and_forth";
    case Motion::kRotate: return "rotate";
  }
  return "straight";
}

Motion motion_from_string(const std::string& s) {
  if (s == "straight") return Motion::kStraight;
  if (s == "back_and_forth") return Motion::kBackAndForth;
  if (s == "rotate") return Motion::kRotate;
  throw ContractError("unknown motion '" + s + "'");
}

std::string to_string(ViolationKind k) { return k == ViolationKind::kDisappear ? "disappear" : "teleport"; }

ViolationKind violation_from_string(const std::string& s) {
  if (s == "disappear") return ViolationKind::kDisappear;
  if (s == "teleport") return ViolationKind::kTeleport;
  throw ContractError("unknown violation kind '" + s + "'");
}

Camera default_camera() {
  // 128x128, optical center 2.5 above the ground, pitched 20 degrees down.
  Camera cam;
  cam.width = cam.height = 128;
  cam.fx = cam.fy = 110.0;
  cam.cx = cam.cy = 64.0;
  const double pitch = 20.0 * std::numbers::pi / 180.0;
  const double s = std::sin(pitch), c = std::cos(pitch);
  cam.rotation << 1.0, 0.0, 0.0,
                  0.0, c, -s,
                  0.0, s, c;
  const Vec3 center(0.0, -2.5, 0.0);
  cam.translation = -(cam.rotation * center);
  return cam;
}

void SceneConfig::validate() const {
  if (frames < 2) throw ContractError("a scene needs at least 2 frames");
  if (n_objects < 1) throw ContractError("a scene needs at least 1 object");
  if (occluders < 0) throw ContractError("occluder count must be non-negative");
  if (back_and_forth_period < 1) throw ContractError("back-and-forth period must be positive");
  if (!objects.empty() && static_cast<int>(objects.size()) != n_objects) {
    throw ContractError("explicit objects must match n_objects");
  }
  if (!occluder_specs.empty() && static_cast<int>(occluder_specs.size()) != occluders) {
    throw ContractError("explicit occluders must match the occluder count");
  }
  if (violation) {
    if (violation->frame < 0 || violation->frame >= frames) throw ContractError("violation frame out of range");
    if (violation->object < 0 || violation->object >= n_objects) throw ContractError("violation object out of range");
  }
  camera.validate();
}

Cuboid pose_at(const ObjectSpec& spec, int frame, int period) {
  Cuboid c = spec.start;
  switch (spec.motion) {
    case Motion::kStraight:
      c.translation += frame * spec.velocity;
      break;
    case Motion::kBackAndForth: {
      int steps = 0;
      for (int k = 0; k < frame; ++k) steps += (k / period) % 2 == 0 ? 1 : -1;
      c.translation += steps * spec.velocity;
      break;
    }
    case Motion::kRotate:
      c.rotation.y() += frame * spec.yaw_rate;
      break;
  }
  return c;
}

double shade(double height) { return 0.35 + 0.65 * std::clamp(height / 1.8, 0.0, 1.0); }

SceneRecord generate(const SceneConfig& cfg) {
  cfg.validate();
  std::vector<ObjectSpec> objects = cfg.objects;
  std::vector<OccluderSpec> occluders = cfg.occluder_specs;
  if (objects.empty() || (occluders.empty() && cfg.occluders > 0)) {
    const bool sample_objects = objects.empty(), sample_occluders = occluders.empty();
    Rng traj = stream(cfg.seed, Stream::kTrajectory);
    Rng occ = stream(cfg.seed, Stream::kOccluder);
    bool found = false;
    for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
      if (sample_objects) {
        objects.clear();
        for (int i = 0; i < cfg.n_objects; ++i) objects.push_back(sample_object(traj, cfg, static_cast<std::size_t>(i)));
      }
      if (sample_occluders) {
        occluders.clear();
        for (int k = 0; k < cfg.occluders; ++k) occluders.push_back(sample_occluder(occ));
      }
      found = valid_configuration(objects, occluders, cfg);
    }
    if (!found) throw GenerationError("no collision-free scene found after 1000 attempts");
    if (sample_objects) assign_colors(objects, cfg);
  } else if (!valid_configuration(objects, occluders, cfg)) {
    throw GenerationError("explicit scene objects collide or leave the view");
  }
  return render(cfg, std::move(objects), std::move(occluders), cfg.violation);
}

SceneRecord inject_violation(const SceneRecord& record, const Violation& v) {
  const int frames = record.config.frames;
  if (v.frame < 0 || v.frame >= frames) throw ContractError("violation frame out of range");
  if (v.object < 0 || static_cast<std::size_t>(v.object) >= record.gt_tracks.size()) {
    throw ContractError("violation object out of range");
  }
  if (!record.gt_tracks[static_cast<std::size_t>(v.object)].state_at(v.frame)) {
    throw ContractError("object " + std::to_string(v.object) + " is absent at frame " + std::to_string(v.frame));
  }
  return render(record.config, record.objects, record.occluders, v);
}

void write_scene(const std::filesystem::path& dir, const SceneRecord& record, const nlohmann::json& meta_extra) {
  std::filesystem::create_directories(dir);
  for (const auto& f : record.frames) io::write_png_rgb(dir / io::frame_file_name(f.index), f.image);
  io::write_camera(dir / "camera.json", record.config.camera);

  std::vector<ObjectTrack> all = record.gt_tracks;
  std::vector<nlohmann::json> extra(record.gt_tracks.size(), {{"kind", "object"}});
  for (const auto& t : record.occluder_tracks) {
    all.push_back(t);
    extra.push_back({{"kind", "occluder"}});
  }
  io::write_tracks(dir, "gt.jsonl", all, extra);

  nlohmann::json meta;
  meta["seed"] = record.config.seed;
  meta["frames"] = record.config.frames;
  meta["n_objects"] = record.config.n_objects;
  meta["occluders"] = record.occluders.size();
  meta["back_and_forth_period"] = record.config.back_and_forth_period;
  auto& objects = meta["objects"] = nlohmann::json::array();
  for (const auto& o : record.objects) {
    objects.push_back({{"motion", to_string(o.motion)},
                       {"start", io::cuboid_to_json(o.start)},
                       {"velocity", io::vec3_to_json(o.velocity)},
                       {"yaw_rate", o.yaw_rate},
                       {"color", o.color}});
  }
  if (record.config.violation) {
    const auto& v = *record.config.violation;
    meta["violation"] = {{"kind", to_string(v.kind)},
                         {"frame", v.frame},
                         {"object", v.object},
                         {"offset", io::vec3_to_json(v.offset)}};
    meta["violation_frame"] = v.frame;
  } else {
    meta["violation"] = nullptr;
    meta["violation_frame"] = nullptr;
  }
  meta.update(meta_extra);
  io::write_json(dir / "meta.json", meta);
}

SceneConfig multiscale_scene(std::uint64_t seed, int frames) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.frames = frames;
  cfg.n_objects = 2;
  Rng rng = stream(seed, Stream::kTrajectory);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<ObjectSpec> objects(2);
    ObjectSpec& big = objects[0];
    const double bw = rng.uniform(2.0, 2.4), bh = rng.uniform(1.5, 1.8);
    big.start.size = Vec3(bw, bh, rng.uniform(0.8, 1.2));
    big.start.translation = Vec3(rng.uniform(-1.2, 1.2), -0.5 * bh, rng.uniform(5.0, 6.0));
    big.velocity = Vec3(rng.uniform(-0.05, 0.05), 0.0, rng.uniform(-0.03, 0.03));
    ObjectSpec& small = objects[1];
    const double s = rng.uniform(0.45, 0.65);
    small.start.size = Vec3(s, s, s);
    small.start.translation = Vec3(rng.uniform(-2.2, 2.2), -0.5 * s, rng.uniform(4.5, 7.5));
    small.velocity = Vec3(rng.uniform(-0.06, 0.06), 0.0, rng.uniform(-0.04, 0.04));
    if (!valid_configuration(objects, {}, cfg)) continue;
    // Keep the projections apart so the count of 2 is well defined.
    bool apart = true;
    for (int f = 0; f < frames && apart; ++f) {
      const Mask a = geometry::project(pose_at(objects[0], f, 1), cfg.camera);
      const Mask b = geometry::project(pose_at(objects[1], f, 1), cfg.camera);
      for (int r = 0; r < cfg.camera.height && apart; ++r) {
        for (int c = 0; c < cfg.camera.width && apart; ++c) {
          if (b(r, c) <= 0.5) continue;
          for (int dr = -3; dr <= 3 && apart; ++dr) {
            for (int dc = -3; dc <= 3 && apart; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr >= 0 && rr < cfg.camera.height && cc >= 0 && cc < cfg.camera.width && a(rr, cc) > 0.5) {
                apart = false;
              }
            }
          }
        }
      }
    }
    if (!apart) continue;
    assign_colors(objects, cfg);
    cfg.objects = std::move(objects);
    return cfg;
  }
  throw GenerationError("no multi-scale scene found after 1000 attempts");
}

SceneConfig occlusion_scene(std::uint64_t seed, int frames) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.frames = frames;
  cfg.n_objects = 2;
  cfg.shared_color = true;
  Rng rng = stream(seed, Stream::kTrajectory);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<ObjectSpec> objects(2);
    // Near object crosses left to right (or back), far object the other way;
    // the paths meet in the image near the middle of the clip.
    const double dir = rng.coin() ? 1.0 : -1.0;
    const double meet = rng.uniform(-0.4, 0.4);
    const double t_meet = 0.5 * (frames - 1) + rng.uniform(-1.5, 1.5);
    ObjectSpec& near = objects[0];
    const double nh = rng.uniform(1.0, 1.3), nw = rng.uniform(0.7, 0.9);
    near.start.size = Vec3(nw, nh, rng.uniform(0.6, 0.9));
    const double nz = rng.uniform(4.6, 5.2);
    const double nv = dir * rng.uniform(0.10, 0.14);
    near.velocity = Vec3(nv, 0.0, 0.0);
    near.start.translation = Vec3(meet - nv * t_meet, -0.5 * nh, nz);
    ObjectSpec& far = objects[1];
    const double fh = rng.uniform(1.0, 1.3), fw = rng.uniform(0.9, 1.1);
    far.start.size = Vec3(fw, fh, rng.uniform(0.6, 0.9));
    const double fz = rng.uniform(6.6, 7.4);
    // Same image-space crossing point: x scales with depth.
    const double ratio = (fz + 0.5) / (nz + 0.5);
    const double fv = -dir * rng.uniform(0.10, 0.14);
    far.velocity = Vec3(fv, 0.0, 0.0);
    far.start.translation = Vec3(meet * ratio - fv * t_meet, -0.5 * fh, fz);
    if (!valid_configuration(objects, {}, cfg)) continue;
    assign_colors(objects, cfg);
    cfg.objects = std::move(objects);
    return cfg;
  }
  throw GenerationError("no occlusion scene found after 1000 attempts");
}

SceneConfig violation_scene(std::uint64_t seed, int frames) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.frames = frames;
  cfg.n_objects = 2;
  cfg.motion = {Motion::kStraight, Motion::kStraight};
  return cfg;
}

ScenePair make_pair(const SceneConfig& base, ViolationKind kind) {
  SceneConfig plain = base;
  plain.violation.reset();
  ScenePair out{generate(plain), SceneRecord{}};
  Rng rng = stream(base.seed, Stream::kViolation);
  Violation v;
  v.kind = kind;
  const int frames = base.frames;
  v.frame = rng.uniform_int(std::max(3, frames / 3), std::max(3, (2 * frames) / 3));
  v.frame = std::min(v.frame, frames - 1);
  // Prefer an object that is clearly visible at the violation frame.
  const int n = static_cast<int>(out.plausible.gt_tracks.size());
  const int first = rng.uniform_int(0, n - 1);
  v.object = first;
  std::size_t best_area = 0;
  for (int k = 0; k < n; ++k) {
    const int idx = (first + k) % n;
    const std::size_t area = mask_area(out.plausible.gt_tracks[idx].state_at(v.frame)->mask);
    if (area >= 40) {
      v.object = idx;
      break;
    }
    if (area > best_area) {
      best_area = area;
      v.object = idx;
    }
  }
  if (kind == ViolationKind::kTeleport) {
    const double x = out.plausible.gt_tracks[v.object].state_at(v.frame)->cuboid.translation.x();
    const double mag = rng.uniform(1.5, 2.5);
    v.offset = Vec3(x > 0.0 ? -mag : mag, 0.0, 0.0);
  }
  out.implausible = inject_violation(out.plausible, v);
  return out;
}

double calibrated_alpha(const Camera& cam, int boundary_count, const Sampling& sampling, int samples,
                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> heights, depths;
  int attempts = 0;
  while (static_cast<int>(heights.size()) < samples && attempts < 100 * samples) {
    ++attempts;
    Cuboid c;
    const double h = rng.uniform(sampling.min_height, sampling.max_height);
    c.size = Vec3(rng.uniform(sampling.min_size, sampling.max_size), h, rng.uniform(sampling.min_size, sampling.max_size));
    c.translation = Vec3(rng.uniform(-sampling.x_range, sampling.x_range), -0.5 * h,
                         rng.uniform(sampling.min_z, sampling.max_z));
    if (!in_view(c, cam, sampling.margin_px)) continue;
    const Mask m = geometry::project(c, cam);
    if (mask_area(m) == 0) continue;
    heights.push_back(geometry::normalized_base_height(geometry::soft_bounds(m, boundary_count), cam.height));
    depths.push_back(cam.to_camera(c.translation).z());
  }
  return geometry::calibrate_alpha(heights, depths);
}

}  // namespace objdisc::simkit
