#pragma once

// Persistence: PNG frames and masks, JSON cuboids, tracks and cameras.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "objdisc/core.h"

namespace objdisc::io {

namespace fs = std::filesystem;
using nlohmann::json;

RgbImage read_png_rgb(const fs::path& path);
void write_png_rgb(const fs::path& path, const RgbImage& image);

// Weights are written as round(w * 255); reading maps v -> v / 255.
Mask read_mask_png(const fs::path& path);
void write_mask_png(const fs::path& path, const Mask& mask);

// Gray8 raster from an 8-bit buffer (used by the plot writer).
void write_png_gray8(const fs::path& path, int width, int height, const std::vector<unsigned char>& data);

json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const json& j);

// {"t": [..], "s": [..], "q": [..]}
json cuboid_to_json(const Cuboid& c);
Cuboid cuboid_from_json(const json& j);

json camera_to_json(const Camera& cam);
Camera camera_from_json(const json& j);
Camera read_camera(const fs::path& path);
void write_camera(const fs::path& path, const Camera& cam);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);
std::vector<json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<json>& rows);

// One JSON object per track state: {"id", "frame", "t", "s", "q", "mask"}.
// Masks go to <dir>/masks/frame_<n>/obj_<id>.png and "mask" holds that path
// relative to dir. `extra[k]`, when given, is merged into every row of
// track k. Rows are ordered by frame, then by track order.
void write_tracks(const fs::path& dir, const std::string& jsonl_name, const std::vector<ObjectTrack>& tracks,
                  const std::vector<json>& extra = {});
// Tracks in order of first appearance in the file. With a non-empty `kind`,
// only rows whose "kind" field equals it are kept (rows without the field
// count as "object"). Mask paths resolve relative to the file's directory.
std::vector<ObjectTrack> read_tracks(const fs::path& jsonl, const std::string& kind = "");

// Zero-padded frame file name, e.g. frame_0007.png.
std::string frame_file_name(int index);
// Frames of a video directory ordered by their parsed index.
std::vector<std::pair<int, fs::path>> list_frames(const fs::path& dir);

// Column-oriented CSV with a header row.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace objdisc::io
