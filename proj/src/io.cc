#include "objdisc/io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "objdisc/error.h"

namespace objdisc::io {
namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<unsigned char> read_png_raw(const fs::path& path, png_uint_32 format, int& width, int& height) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

void write_png_raw(const fs::path& path, png_uint_32 format, int width, int height, const unsigned char* data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

RgbImage read_png_rgb(const fs::path& path) {
  int w = 0, h = 0;
  auto raw = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  RgbImage img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = {raw[3 * i] / 255.0, raw[3 * i + 1] / 255.0, raw[3 * i + 2] / 255.0};
  }
  return img;
}

void write_png_rgb(const fs::path& path, const RgbImage& image) {
  std::vector<unsigned char> raw(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    for (int c = 0; c < 3; ++c) raw[3 * i + c] = to_byte(image[i][c]);
  }
  write_png_raw(path, PNG_FORMAT_RGB, image.width(), image.height(), raw.data());
}

Mask read_mask_png(const fs::path& path) {
  int w = 0, h = 0;
  auto raw = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  std::vector<double> weights(raw.size());
  std::transform(raw.begin(), raw.end(), weights.begin(), [](unsigned char v) { return v / 255.0; });
  return Mask::from_weights(w, h, std::move(weights));
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  std::vector<unsigned char> raw(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = to_byte(mask[i]);
  write_png_raw(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), raw.data());
}

void write_png_gray8(const fs::path& path, int width, int height, const std::vector<unsigned char>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height) throw DimensionError("gray buffer size mismatch");
  write_png_raw(path, PNG_FORMAT_GRAY, width, height, data.data());
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json cuboid_to_json(const Cuboid& c) {
  return {{"t", vec3_to_json(c.translation)}, {"s", vec3_to_json(c.size)}, {"q", vec3_to_json(c.rotation)}};
}

Cuboid cuboid_from_json(const json& j) {
  Cuboid c;
  c.translation = vec3_from_json(j.at("t"));
  c.size = vec3_from_json(j.at("s"));
  c.rotation = vec3_from_json(j.at("q"));
  c.validate();
  return c;
}

json camera_to_json(const Camera& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  }
  return {{"focal", {cam.fx, cam.fy}},
          {"principal_point", {cam.cx, cam.cy}},
          {"rotation", rot},
          {"translation", vec3_to_json(cam.translation)},
          {"image_size", {cam.width, cam.height}}};
}

Camera camera_from_json(const json& j) {
  try {
    Camera cam;
    cam.fx = j.at("focal").at(0).get<double>();
    cam.fy = j.at("focal").at(1).get<double>();
    cam.cx = j.at("principal_point").at(0).get<double>();
    cam.cy = j.at("principal_point").at(1).get<double>();
    const auto& rot = j.at("rotation");
    if (rot.size() != 9) throw IoError("camera rotation must hold 9 numbers (row-major 3x3)");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c].get<double>();
    }
    cam.translation = vec3_from_json(j.at("translation"));
    cam.width = j.at("image_size").at(0).get<int>();
    cam.height = j.at("image_size").at(1).get<int>();
    cam.validate();
    return cam;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed camera JSON: ") + e.what());
  }
}

Camera read_camera(const fs::path& path) {
  try {
    return camera_from_json(read_json(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_camera(const fs::path& path, const Camera& cam) { write_json(path, camera_to_json(cam)); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", index);
  return buf;
}

void write_tracks(const fs::path& dir, const std::string& jsonl_name, const std::vector<ObjectTrack>& tracks,
                  const std::vector<json>& extra) {
  struct Row {
    int frame;
    std::size_t track;
    const TrackState* state;
  };
  std::vector<Row> rows;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    for (const auto& s : tracks[k].states()) rows.push_back({s.frame, k, &s});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.track < b.track;
  });
  std::vector<json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    char name[64];
    std::snprintf(name, sizeof name, "masks/frame_%04d/obj_%lld.png", r.frame,
                  static_cast<long long>(tracks[r.track].id()));
    write_mask_png(dir / name, r.state->mask);
    json j = cuboid_to_json(r.state->cuboid);
    j["id"] = tracks[r.track].id();
    j["frame"] = r.frame;
    j["mask"] = name;
    if (r.track < extra.size()) j.update(extra[r.track]);
    out.push_back(std::move(j));
  }
  write_jsonl(dir / jsonl_name, out);
}

std::vector<ObjectTrack> read_tracks(const fs::path& jsonl, const std::string& kind) {
  const fs::path base = jsonl.parent_path();
  std::vector<ObjectTrack> tracks;
  std::map<std::int64_t, std::size_t> index;
  for (const auto& row : read_jsonl(jsonl)) {
    try {
      if (!kind.empty() && row.value("kind", std::string("object")) != kind) continue;
      const auto id = row.at("id").get<std::int64_t>();
      auto it = index.find(id);
      if (it == index.end()) {
        it = index.emplace(id, tracks.size()).first;
        tracks.emplace_back(id);
      }
      TrackState s{row.at("frame").get<int>(), cuboid_from_json(row),
                   read_mask_png(base / row.at("mask").get<std::string>())};
      tracks[it->second].append(std::move(s));
    } catch (const json::exception& e) {
      throw IoError(jsonl.string() + ": " + e.what());
    }
  }
  return tracks;
}

std::vector<std::pair<int, fs::path>> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d+)\.png)");
  std::vector<std::pair<int, fs::path>> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      frames.emplace_back(std::stoi(m[1].str()), entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  char buf[64];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace objdisc::io
