#include "objdisc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "objdisc/error.h"
#include "objdisc/io.h"
#include "objdisc/parallel.h"

namespace objdisc::pipeline {
namespace {

using json = nlohmann::json;

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ContractError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

std::map<std::string, std::map<std::string, Setter>> config_schema() {
  auto dbl = [](double PipelineConfig::*field) {
    return Setter([field](PipelineConfig& c, const std::string& k, const std::string& v) { c.*field = parse_double(k, v); });
  };
  std::map<std::string, std::map<std::string, Setter>> s;
  auto& p = s["pipeline"];
  p["segmenter"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    if (v == "classical") {
      c.segmenter = SegmenterKind::kClassical;
    } else if (v == "external-mask-dir") {
      c.segmenter = SegmenterKind::kExternalMaskDir;
    } else {
      throw ContractError("config key '" + k + "' must be classical or external-mask-dir");
    }
  };
  p["mask_dir"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.mask_dir = v; };
  p["slots"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.slots = static_cast<int>(parse_int(k, v));
  };
  p["multi_scale"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.multi_scale = parse_bool(k, v);
  };
  p["physics"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.physics = parse_bool(k, v); };
  p["association_iou"] = dbl(&PipelineConfig::association_iou);
  p["min_object_area"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    const long long a = parse_int(k, v);
    if (a < 0) throw ContractError("min_object_area must be non-negative");
    c.min_object_area = static_cast<std::size_t>(a);
  };
  p["ambiguity_coverage"] = dbl(&PipelineConfig::ambiguity_coverage);
  p["merge_tolerance"] = dbl(&PipelineConfig::merge_tolerance);
  p["camera_file"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.camera_file = v; };
  p["visible_pixel_floor"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    const long long a = parse_int(k, v);
    if (a < 0) throw ContractError("visible_pixel_floor must be non-negative");
    c.visible_pixel_floor = static_cast<std::size_t>(a);
  };

  auto& pw = s["patchwork"];
  pw["overlap_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.merge.overlap_threshold = parse_double(k, v);
  };
  pw["bin_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.merge.bin_threshold = parse_double(k, v);
  };
  pw["scale_to_reference"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.merge.scale_to_reference = parse_bool(k, v);
  };
  pw["reference_height"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.merge.reference_height = static_cast<int>(parse_int(k, v));
  };
  pw["reference_width"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.merge.reference_width = static_cast<int>(parse_int(k, v));
  };

  auto& bp = s["backprojection"];
  bp["alpha"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.backprojection.alpha = parse_double(k, v);
  };
  bp["boundary_count"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.backprojection.boundary_count = static_cast<int>(parse_int(k, v));
  };
  bp["fixed_z_size"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.backprojection.fixed_z_size = parse_double(k, v);
  };
  for (int axis = 0; axis < 3; ++axis) {
    const std::string name = std::string("fixed_rotation_") + "xyz"[axis];
    bp[name] = [axis](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.backprojection.fixed_rotation[axis] = parse_double(k, v);
    };
  }

  auto& dy = s["dynamics"];
  dy["sigma_t"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.sigma_t = parse_double(k, v);
  };
  dy["sigma_s"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.sigma_s = parse_double(k, v);
  };
  dy["sigma_q"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.sigma_q = parse_double(k, v);
  };
  dy["history_window"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.history_window = static_cast<int>(parse_int(k, v));
  };
  dy["mask_bin_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.mask_bin_threshold = parse_double(k, v);
  };
  dy["log_floor"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.dynamics.log_floor = parse_double(k, v);
  };

  auto& lo = s["loss"];
  lo["beta"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.loss.beta = parse_double(k, v); };
  lo["gamma"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.loss.gamma = parse_double(k, v); };
  lo["sigma"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.loss.sigma = parse_double(k, v); };
  lo["sigma_b"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.loss.sigma_b = parse_double(k, v);
  };
  lo["phase_switch_step"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.loss.phase_switch_step = parse_int(k, v);
  };
  return s;
}

// Segment masks of one frame from an external directory, sorted by name.
std::vector<Mask> external_masks(const fs::path& mask_dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%04d", frame);
  const fs::path dir = mask_dir / name;
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Mask> masks;
  for (const auto& f : files) masks.push_back(io::read_mask_png(f));
  return masks;
}

struct Observation {
  Mask mask;
  Cuboid cuboid;
};

Mask piece_of(const Mask& segment, const std::vector<char>& owner, char who) {
  Mask m(segment.width(), segment.height());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (owner[i] == who) m.set(i, 1.0);
  }
  return m;
}

Vec2 centroid(const Mask& m, double threshold) {
  double r = 0.0, c = 0.0, n = 0.0;
  for (int row = 0; row < m.height(); ++row) {
    for (int col = 0; col < m.width(); ++col) {
      if (m(row, col) > threshold) {
        r += row;
        c += col;
        n += 1.0;
      }
    }
  }
  return n > 0.0 ? Vec2(c / n, r / n) : Vec2(0.0, 0.0);
}

class Associator {
 public:
  Associator(const Camera& cam, const PipelineConfig& cfg) : cam_(cam), cfg_(cfg) {}

  void step(int t, std::vector<Observation> segments) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < tracks_.size(); ++k) {
      if (tracks_[k].last_frame() == previous_frame_) active.push_back(k);
    }
    std::vector<bool> segment_done(segments.size(), false);
    std::set<std::size_t> track_done;

    if (cfg_.physics && !active.empty()) {
      std::vector<ObjectTrack> scene;
      for (std::size_t k : active) scene.push_back(tracks_[k]);
      const auto preds = dynamics::predict_all(scene, cam_, cfg_.dynamics, t);
      for (std::size_t s = 0; s < segments.size(); ++s) {
        std::vector<std::size_t> cands;  // indices into active / preds
        for (std::size_t a = 0; a < active.size(); ++a) {
          if (track_done.count(active[a]) || scene[a].length() < 2) continue;
          const std::size_t area = mask_area(preds[a].mask, cfg_.dynamics.mask_bin_threshold);
          if (area < std::max<std::size_t>(cfg_.visible_pixel_floor, 1)) continue;
          const std::size_t inside =
              mask_overlap_pixels(preds[a].mask, segments[s].mask, cfg_.dynamics.mask_bin_threshold);
          if (static_cast<double>(inside) >= cfg_.ambiguity_coverage * static_cast<double>(area)) cands.push_back(a);
        }
        if (cands.size() < 2) continue;
        resolve_ambiguous(t, segments[s], cands, active, preds, track_done);
        segment_done[s] = true;
      }
    }

    // Greedy IoU against each remaining active track's last mask.
    struct Candidate {
      double iou;
      std::size_t segment;
      std::size_t track;
    };
    std::vector<Candidate> pairs;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (segment_done[s]) continue;
      for (std::size_t k : active) {
        if (track_done.count(k)) continue;
        const double iou = evalkit::iou2d(segments[s].mask, tracks_[k].last().mask);
        if (iou >= cfg_.association_iou) pairs.push_back({iou, s, k});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Candidate& a, const Candidate& b) { return a.iou > b.iou; });
    for (const auto& p : pairs) {
      if (segment_done[p.segment] || track_done.count(p.track)) continue;
      tracks_[p.track].append({t, segments[p.segment].cuboid, segments[p.segment].mask});
      segment_done[p.segment] = true;
      track_done.insert(p.track);
    }
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (segment_done[s]) continue;
      ObjectTrack track(next_id_++);
      track.append({t, segments[s].cuboid, segments[s].mask});
      tracks_.push_back(std::move(track));
    }
    previous_frame_ = t;
  }

  std::vector<ObjectTrack> release() { return std::move(tracks_); }

 private:
  // One segment covers the predictions of several tracks: compare "the
  // whole segment is track i and the others vanished" against splitting the
  // segment by the strongest prediction per pixel, scored by the physics
  // likelihood. The split is tried first and wins ties.
  void resolve_ambiguous(int t, const Observation& seg, const std::vector<std::size_t>& cands,
                         const std::vector<std::size_t>& active, const std::vector<dynamics::Prediction>& preds,
                         std::set<std::size_t>& track_done) {
    const auto& dp = cfg_.dynamics;
    std::vector<Vec2> centers;
    for (std::size_t a : cands) centers.push_back(centroid(preds[a].mask, dp.mask_bin_threshold));
    std::vector<char> owner(seg.mask.size(), -1);
    for (int row = 0; row < seg.mask.height(); ++row) {
      for (int col = 0; col < seg.mask.width(); ++col) {
        const std::size_t i = static_cast<std::size_t>(row) * seg.mask.width() + col;
        if (seg.mask[i] <= 0.5) continue;
        int best = -1;
        double best_w = 0.0;
        for (std::size_t c = 0; c < cands.size(); ++c) {
          const double w = preds[cands[c]].mask[i];
          if (w > best_w) {
            best_w = w;
            best = static_cast<int>(c);
          }
        }
        if (best < 0) {
          double best_d = std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < cands.size(); ++c) {
            const double d = (centers[c] - Vec2(col + 0.5, row + 0.5)).squaredNorm();
            if (d < best_d) {
              best_d = d;
              best = static_cast<int>(c);
            }
          }
        }
        owner[i] = static_cast<char>(best);
      }
    }

    std::vector<std::optional<Mask>> pieces(cands.size());
    double split_score = 0.0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      Mask piece = piece_of(seg.mask, owner, static_cast<char>(c));
      const auto& pred = preds[cands[c]];
      std::optional<Cuboid> cub;
      if (mask_area(piece) >= std::max<std::size_t>(cfg_.min_object_area, 1)) {
        try {
          cub = geometry::backproject_manual(piece, cam_, cfg_.backprojection);
        } catch (const GeometryError&) {
        }
      }
      if (cub) {
        split_score += dynamics::physics_log_likelihood(pred, {*cub, piece}, dp);
        pieces[c] = std::move(piece);
      } else {
        split_score -= dynamics::disappearance_penalty(pred.mask, dp);
      }
    }

    double best_score = split_score;
    int best_whole = -1;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      double score = dynamics::physics_log_likelihood(preds[cands[c]], {seg.cuboid, seg.mask}, dp);
      for (std::size_t o = 0; o < cands.size(); ++o) {
        if (o != c) score -= dynamics::disappearance_penalty(preds[cands[o]].mask, dp);
      }
      if (score > best_score) {
        best_score = score;
        best_whole = static_cast<int>(c);
      }
    }

    if (best_whole >= 0) {
      const std::size_t k = active[cands[best_whole]];
      tracks_[k].append({t, seg.cuboid, seg.mask});
      track_done.insert(k);
      return;
    }
    // Occluded pieces backproject poorly, so split members keep the
    // predicted cuboid and only take the observed piece as their mask.
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (!pieces[c]) continue;
      const std::size_t k = active[cands[c]];
      tracks_[k].append({t, preds[cands[c]].cuboid, std::move(*pieces[c])});
      track_done.insert(k);
    }
  }

  const Camera& cam_;
  const PipelineConfig& cfg_;
  std::vector<ObjectTrack> tracks_;
  std::int64_t next_id_ = 0;
  int previous_frame_ = std::numeric_limits<int>::min();
};

DiscoverResult discover_segments(const std::vector<int>& frame_indices, const std::vector<std::vector<Mask>>& masks,
                                 const Camera& cam, const PipelineConfig& cfg) {
  std::vector<std::vector<Observation>> observations(masks.size());
  parallel_for(masks.size(), [&](std::size_t f) {
    for (const Mask& m : masks[f]) {
      if (m.width() != cam.width || m.height() != cam.height) {
        throw DimensionError("segment mask size does not match the camera image size");
      }
      if (mask_area(m) < std::max<std::size_t>(cfg.min_object_area, 1)) continue;
      try {
        observations[f].push_back({m, geometry::backproject_manual(m, cam, cfg.backprojection)});
      } catch (const GeometryError&) {
        // Line-like slivers have no 2D extent to lift; they are noise.
      }
    }
  });
  Associator assoc(cam, cfg);
  for (std::size_t f = 0; f < masks.size(); ++f) assoc.step(frame_indices[f], std::move(observations[f]));
  return {assoc.release(), static_cast<int>(masks.size())};
}

std::string scene_id(const fs::path& dir) { return dir.filename().string(); }

// Minimal raster helpers for the curve plot.
void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, const Rgb& color) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double a = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + a * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + a * (y1 - y0)));
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        if (x + dx >= 0 && x + dx < img.width() && y + dy >= 0 && y + dy < img.height()) img(y + dy, x + dx) = color;
      }
    }
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (slots < 2) throw ContractError("slot budget K must be at least 2");
  if (!(association_iou > 0.0 && association_iou <= 1.0)) throw ContractError("association_iou must lie in (0, 1]");
  if (!(ambiguity_coverage > 0.0 && ambiguity_coverage <= 1.0)) {
    throw ContractError("ambiguity_coverage must lie in (0, 1]");
  }
  if (!(merge_tolerance >= 0.0)) throw ContractError("merge_tolerance must be non-negative");
  if (segmenter == SegmenterKind::kExternalMaskDir && mask_dir.empty()) {
    throw ContractError("external-mask-dir segmenter needs mask_dir");
  }
  if (!(merge.overlap_threshold >= 0.0) || merge.reference_height <= 0 || merge.reference_width <= 0) {
    throw ContractError("invalid patchwork parameters");
  }
  backprojection.validate();
  dynamics.validate();
  loss.validate();
}

PipelineConfig load_config(const fs::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!fs::exists(path)) throw IoError("cannot read config " + path.string());
    throw ContractError("malformed config " + path.string() + ": " + e.message());
  }
  const auto schema = config_schema();
  PipelineConfig cfg;
  for (const auto& [section, keys] : tree) {
    const auto sec = schema.find(section);
    if (sec == schema.end()) throw ContractError("unknown config section [" + section + "]");
    if (!keys.data().empty()) throw ContractError("config key '" + section + "' must sit inside a section");
    for (const auto& [key, value] : keys) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw ContractError("unknown config key " + section + "." + key);
      setter->second(cfg, section + "." + key, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const PipelineConfig& c) {
  return {
      {"pipeline",
       {{"segmenter", c.segmenter == SegmenterKind::kClassical ? "classical" : "external-mask-dir"},
        {"mask_dir", c.mask_dir.string()},
        {"slots", c.slots},
        {"multi_scale", c.multi_scale},
        {"physics", c.physics},
        {"association_iou", c.association_iou},
        {"min_object_area", c.min_object_area},
        {"ambiguity_coverage", c.ambiguity_coverage},
        {"merge_tolerance", c.merge_tolerance},
        {"camera_file", c.camera_file},
        {"visible_pixel_floor", c.visible_pixel_floor}}},
      {"patchwork",
       {{"overlap_threshold", c.merge.overlap_threshold},
        {"bin_threshold", c.merge.bin_threshold},
        {"scale_to_reference", c.merge.scale_to_reference},
        {"reference_height", c.merge.reference_height},
        {"reference_width", c.merge.reference_width}}},
      {"backprojection",
       {{"alpha", c.backprojection.alpha},
        {"boundary_count", c.backprojection.boundary_count},
        {"fixed_rotation", io::vec3_to_json(c.backprojection.fixed_rotation)},
        {"fixed_z_size", c.backprojection.fixed_z_size}}},
      {"dynamics",
       {{"sigma_t", c.dynamics.sigma_t},
        {"sigma_s", c.dynamics.sigma_s},
        {"sigma_q", c.dynamics.sigma_q},
        {"history_window", c.dynamics.history_window},
        {"mask_bin_threshold", c.dynamics.mask_bin_threshold},
        {"log_floor", c.dynamics.log_floor}}},
      {"loss",
       {{"beta", c.loss.beta},
        {"gamma", c.loss.gamma},
        {"sigma", c.loss.sigma},
        {"sigma_b", c.loss.sigma_b},
        {"phase_switch_step", c.loss.phase_switch_step}}},
  };
}

std::vector<Mask> segment_frame(const Frame& frame, const PipelineConfig& cfg) {
  segment::ClassicalOptions opts;
  opts.merge_tolerance = cfg.merge_tolerance;
  const int h = frame.image.height(), w = frame.image.width();
  std::vector<Mask> out;
  if (!cfg.multi_scale) {
    auto d = segment::classical_segment(frame, cfg.slots, opts);
    for (std::size_t k = 1; k < d.masks.size(); ++k) {
      if (mask_area(d.masks[k]) > 0) out.push_back(std::move(d.masks[k]));
    }
    return out;
  }
  const auto layout = patchwork::make_layout(h, w);
  opts.background_hint = segment::estimate_background_color(frame.image, cfg.slots, opts);
  std::vector<patchwork::WindowSegments> per_window(layout.windows.size());
  parallel_for(layout.windows.size(), [&](std::size_t i) {
    const auto& r = layout.windows[i];
    Frame crop{frame.index, frame.image.crop(r.top, r.left, r.height, r.width)};
    auto d = segment::classical_segment(crop, cfg.slots, opts);
    per_window[i].window = r;
    for (std::size_t k = 1; k < d.masks.size(); ++k) {
      if (mask_area(d.masks[k]) > 0) per_window[i].segments.push_back(std::move(d.masks[k]));
    }
  });
  auto global = patchwork::merge_segments(per_window, h, w, cfg.merge);
  for (auto& o : global.objects) out.push_back(std::move(o.mask));
  return out;
}

DiscoverResult discover(const std::vector<Frame>& frames, const Camera& cam, const PipelineConfig& cfg) {
  cfg.validate();
  cam.validate();
  std::vector<int> indices;
  std::vector<std::vector<Mask>> masks(frames.size());
  for (const auto& f : frames) {
    f.validate();
    if (f.image.width() != cam.width || f.image.height() != cam.height) {
      throw DimensionError("frame size does not match the camera image size");
    }
    indices.push_back(f.index);
  }
  for (std::size_t i = 1; i < indices.size(); ++i) {
    if (indices[i] <= indices[i - 1]) throw ContractError("frames must be in increasing index order");
  }
  parallel_for(frames.size(), [&](std::size_t i) { masks[i] = segment_frame(frames[i], cfg); });
  return discover_segments(indices, masks, cam, cfg);
}

DiscoverResult run_discover(const fs::path& video_dir, const PipelineConfig& cfg, const std::optional<fs::path>& out_dir) {
  cfg.validate();
  if (!fs::is_directory(video_dir)) throw IoError("video directory not found: " + video_dir.string());
  const auto listing = io::list_frames(video_dir);
  if (listing.empty()) throw IoError("no frame_<n>.png images in " + video_dir.string());
  const Camera cam = io::read_camera(video_dir / cfg.camera_file);
  cam.validate();

  DiscoverResult result;
  if (cfg.segmenter == SegmenterKind::kExternalMaskDir) {
    if (!fs::is_directory(cfg.mask_dir)) throw IoError("mask directory not found: " + cfg.mask_dir.string());
    std::vector<int> indices;
    std::vector<std::vector<Mask>> masks;
    for (const auto& [index, path] : listing) {
      indices.push_back(index);
      masks.push_back(external_masks(cfg.mask_dir, index));
    }
    result = discover_segments(indices, masks, cam, cfg);
  } else {
    std::vector<Frame> frames(listing.size());
    parallel_for(listing.size(), [&](std::size_t i) {
      frames[i] = Frame{listing[i].first, io::read_png_rgb(listing[i].second)};
    });
    result = discover(frames, cam, cfg);
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    io::write_tracks(*out_dir, "tracks.jsonl", result.tracks);
    io::write_json(*out_dir / "discover.json", {{"video", video_dir.filename().string()},
                                                {"frames", result.frame_count},
                                                {"tracks", result.tracks.size()},
                                                {"config", config_to_json(cfg)}});
  }
  return result;
}

std::vector<ObjectTrack> scene_tracks(const fs::path& scene_dir, const PipelineConfig& cfg, TrackSource source) {
  if (source == TrackSource::kDiscover) return run_discover(scene_dir, cfg).tracks;
  if (source == TrackSource::kGroundTruthMasks) {
    PipelineConfig masked = cfg;
    masked.segmenter = SegmenterKind::kExternalMaskDir;
    masked.mask_dir = scene_dir / "masks";
    return run_discover(scene_dir, masked).tracks;
  }
  auto tracks = io::read_tracks(scene_dir / "gt.jsonl", "object");
  for (auto& t : io::read_tracks(scene_dir / "gt.jsonl", "occluder")) tracks.push_back(std::move(t));
  return tracks;
}

json PairExperiment::to_json() const {
  json pairs_json = json::array();
  for (const auto& p : pairs) {
    json j = {{"pair", p.pair_id},
              {"plausible", {{"video", p.plausible.video_id}, {"max", p.plausible.max()}, {"peak_frame", p.plausible.peak_frame()}}},
              {"implausible",
               {{"video", p.implausible.video_id}, {"max", p.implausible.max()}, {"peak_frame", p.implausible.peak_frame()}}}};
    j["violation_frame"] = p.violation_frame ? json(*p.violation_frame) : json(nullptr);
    pairs_json.push_back(std::move(j));
  }
  return {{"relative_accuracy", relative_accuracy}, {"pair_count", pairs.size()}, {"pairs", pairs_json}};
}

PairExperiment run_pair_experiment(const fs::path& dataset_dir, const PipelineConfig& cfg, TrackSource source,
                                   const std::optional<fs::path>& out_dir) {
  cfg.validate();
  if (!fs::is_directory(dataset_dir)) throw IoError("dataset directory not found: " + dataset_dir.string());
  struct Slot {
    std::optional<fs::path> plausible;
    std::optional<fs::path> implausible;
  };
  std::map<std::string, Slot> slots;
  std::vector<std::string> unpaired;
  std::vector<fs::path> scenes;
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) scenes.push_back(entry.path());
  }
  std::sort(scenes.begin(), scenes.end());
  for (const auto& dir : scenes) {
    const json meta = io::read_json(dir / "meta.json");
    if (!meta.contains("pair") || !meta.contains("role")) {
      unpaired.push_back(scene_id(dir));
      continue;
    }
    Slot& s = slots[meta["pair"].get<std::string>()];
    const auto role = meta["role"].get<std::string>();
    auto& place = role == "plausible" ? s.plausible : s.implausible;
    if (role != "plausible" && role != "implausible") {
      throw ContractError("scene " + scene_id(dir) + " has unknown role '" + role + "'");
    }
    if (place) throw ContractError("pair " + meta["pair"].get<std::string>() + " has two " + role + " scenes");
    place = dir;
  }
  for (const auto& [id, s] : slots) {
    if (!s.plausible || !s.implausible) unpaired.push_back(s.plausible ? scene_id(*s.plausible) : scene_id(*s.implausible));
  }
  if (!unpaired.empty()) {
    std::string list;
    for (const auto& u : unpaired) list += (list.empty() ? "" : ", ") + u;
    throw ContractError("unpaired scenes: " + list);
  }
  if (slots.empty()) throw ContractError("no scene pairs in " + dataset_dir.string());

  std::vector<std::pair<std::string, Slot>> work(slots.begin(), slots.end());
  PairExperiment exp;
  exp.pairs.resize(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    auto curve_for = [&](const fs::path& dir) {
      const Camera cam = io::read_camera(dir / cfg.camera_file);
      const auto tracks = scene_tracks(dir, cfg, source);
      evalkit::SurpriseOptions opts;
      opts.frame_count = static_cast<int>(io::list_frames(dir).size());
      opts.visible_pixel_floor = cfg.visible_pixel_floor;
      auto curve = evalkit::surprise_curve(tracks, cam, cfg.dynamics, opts);
      curve.video_id = scene_id(dir);
      return curve;
    };
    PairResult& r = exp.pairs[i];
    r.pair_id = work[i].first;
    r.plausible = curve_for(*work[i].second.plausible);
    r.implausible = curve_for(*work[i].second.implausible);
    const json meta = io::read_json(*work[i].second.implausible / "meta.json");
    if (meta.contains("violation_frame") && meta["violation_frame"].is_number_integer()) {
      r.violation_frame = meta["violation_frame"].get<int>();
    }
  });
  std::vector<std::pair<evalkit::SurpriseCurve, evalkit::SurpriseCurve>> curves;
  for (const auto& p : exp.pairs) curves.emplace_back(p.plausible, p.implausible);
  exp.relative_accuracy = evalkit::relative_accuracy(curves);

  if (out_dir) {
    fs::create_directories(*out_dir / "curves");
    for (const auto& p : exp.pairs) {
      write_curves(*out_dir / "curves" / (p.pair_id + ".csv"), *out_dir / "curves" / (p.pair_id + ".png"),
                   {p.plausible, p.implausible});
    }
    io::write_json(*out_dir / "pair_experiment.json", exp.to_json());
  }
  return exp;
}

json EvalReport::to_json() const {
  json frames = json::array();
  for (const auto& f : masks.frames) {
    frames.push_back({{"frame", f.frame}, {"gt_count", f.gt_count}, {"mean_iou", f.mean_iou}, {"detection_rate", f.detection_rate}});
  }
  json j = {{"mean_iou", masks.mean_iou},
            {"detection_rate", masks.detection_rate},
            {"gt_objects", masks.best_iou.size()},
            {"recall3d", recall3d},
            {"frames", frames}};
  if (alignment) {
    j["alignment"] = {{"pearson_r", io::vec3_to_json(alignment->pearson_r)},
                      {"pooled_r", alignment->pooled_r},
                      {"calibration_count", alignment->calibration_count},
                      {"test_count", alignment->test_count}};
  } else {
    j["alignment"] = nullptr;
  }
  return j;
}

EvalReport evaluate(const std::vector<ObjectTrack>& pred, const std::vector<ObjectTrack>& gt, int frame_count,
                    evalkit::MatchMode mode) {
  EvalReport report;
  std::vector<evalkit::MatchReport> per_frame;
  std::size_t hits = 0, gt_cuboids = 0;
  for (int f = 0; f < frame_count; ++f) {
    std::vector<Mask> gm, pm;
    std::vector<Cuboid> gc, pc;
    for (const auto& t : gt) {
      const TrackState* s = t.state_at(f);
      if (s && mask_area(s->mask) > 0) {
        gm.push_back(s->mask);
        gc.push_back(s->cuboid);
      }
    }
    for (const auto& t : pred) {
      if (const TrackState* s = t.state_at(f)) {
        pm.push_back(s->mask);
        pc.push_back(s->cuboid);
      }
    }
    if (gm.empty()) continue;
    per_frame.push_back(evalkit::match_and_score(pm, gm, mode, f));
    hits += static_cast<std::size_t>(std::lround(evalkit::recall3d(pc, gc, 0.1, 20000) * gc.size()));
    gt_cuboids += gc.size();
  }
  if (per_frame.empty()) throw ContractError("ground truth has no visible objects");
  report.masks = evalkit::aggregate(per_frame);
  report.recall3d = static_cast<double>(hits) / static_cast<double>(gt_cuboids);
  try {
    report.alignment = evalkit::align_and_correlate(pred, gt);
  } catch (const ContractError&) {
    report.alignment.reset();
  }
  return report;
}

json LossReport::to_json() const {
  return {{"step", step},
          {"image_log_likelihood", image_log_likelihood},
          {"l_image", l_image},
          {"l_kl", l_kl},
          {"l_physics", l_physics},
          {"total", total}};
}

LossReport evaluate_loss(const Frame& frame, const PipelineConfig& cfg, long long step, double l_physics) {
  segment::ClassicalOptions opts;
  opts.merge_tolerance = cfg.merge_tolerance;
  const auto d = segment::classical_segment(frame, cfg.slots, opts);
  std::vector<genmodel::ComponentPrediction> comps;
  std::vector<genmodel::LatentPosterior> posteriors;
  for (std::size_t k = 0; k < d.masks.size(); ++k) {
    Rgb mean{0.0, 0.0, 0.0};
    double weight = 0.0;
    for (std::size_t i = 0; i < d.masks[k].size(); ++i) {
      for (int ch = 0; ch < 3; ++ch) mean[ch] += d.masks[k][i] * frame.image[i][ch];
      weight += d.masks[k][i];
    }
    if (weight > 0.0) {
      for (double& v : mean) v /= weight;
    }
    comps.push_back({d.masks[k], RgbImage(frame.image.width(), frame.image.height(), mean), d.masks[k], k == 0});
    posteriors.push_back({std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)});
  }
  LossReport r;
  r.step = step;
  r.image_log_likelihood = genmodel::image_log_likelihood(frame, comps, cfg.loss);
  r.l_image = -r.image_log_likelihood;
  r.l_kl = genmodel::kl_loss(posteriors, comps, cfg.loss);
  r.l_physics = l_physics;
  r.total = genmodel::total_loss(step, r.l_image, r.l_kl, l_physics, cfg.loss);
  return r;
}

void write_curves(const fs::path& csv_path, const fs::path& png_path, const std::vector<evalkit::SurpriseCurve>& curves) {
  std::size_t frames = 0;
  double top = 0.0;
  for (const auto& c : curves) {
    frames = std::max(frames, c.values.size());
    top = std::max(top, c.max());
  }
  std::vector<std::string> header{"frame"};
  for (std::size_t i = 0; i < curves.size(); ++i) {
    header.push_back(curves[i].video_id.empty() ? "curve_" + std::to_string(i) : curves[i].video_id);
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> row{static_cast<double>(f)};
    for (const auto& c : curves) row.push_back(f < c.values.size() ? c.values[f] : std::nan(""));
    rows.push_back(std::move(row));
  }
  io::write_csv(csv_path, header, rows);

  constexpr int kW = 640, kH = 360, kMargin = 40;
  static constexpr std::array<Rgb, 4> kColors{{{0.1, 0.3, 0.9}, {0.9, 0.15, 0.1}, {0.1, 0.6, 0.2}, {0.6, 0.2, 0.7}}};
  RgbImage img(kW, kH, {1.0, 1.0, 1.0});
  const Rgb black{0.0, 0.0, 0.0};
  draw_line(img, kMargin, kH - kMargin, kW - kMargin, kH - kMargin, black);
  draw_line(img, kMargin, kMargin, kMargin, kH - kMargin, black);
  const double y_top = top > 0.0 ? 1.05 * top : 1.0;
  const double x_span = frames > 1 ? static_cast<double>(frames - 1) : 1.0;
  auto px = [&](double f) { return kMargin + f / x_span * (kW - 2 * kMargin); };
  auto py = [&](double v) { return kH - kMargin - std::clamp(v / y_top, 0.0, 1.0) * (kH - 2 * kMargin); };
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& v = curves[i].values;
    for (std::size_t f = 1; f < v.size(); ++f) {
      draw_line(img, px(f - 1.0), py(v[f - 1]), px(static_cast<double>(f)), py(v[f]), kColors[i % kColors.size()]);
    }
  }
  io::write_png_rgb(png_path, img);
}

}  // namespace objdisc::pipeline
