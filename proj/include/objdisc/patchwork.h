#pragma once

// Multi-scale sub-patch layout and sequential mask merging.

#include <set>
#include <vector>

#include "objdisc/core.h"

namespace objdisc::patchwork {

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  bool contains(int row, int col) const {
    return row >= top && row < top + height && col >= left && col < left + width;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

inline constexpr int kGridCells = 8;
inline constexpr int kWindowCells = 2;

// 8x8 grid; one 2x2-cell window anchored at every cell, raster order.
// Windows anchored in the last row or column are clamped inward.
struct PatchLayout {
  int image_height = 0;
  int image_width = 0;
  int cell_height = 0;
  int cell_width = 0;
  std::vector<Rect> windows;
};

PatchLayout make_layout(int height, int width);

struct WindowSegments {
  Rect window;
  // Window-local object masks (background slot already excluded).
  std::vector<Mask> segments;
};

struct GlobalObject {
  int id = 0;
  Mask mask{1, 1};
  std::set<int> windows;  // indices into the merge input
};

struct GlobalSegmentation {
  std::vector<GlobalObject> objects;
};

struct MergeOptions {
  // Pixel count at the reference resolution; scaled by image area when
  // scale_to_reference is set.
  double overlap_threshold = 20.0;
  double bin_threshold = 0.5;
  bool scale_to_reference = true;
  int reference_height = 1024;
  int reference_width = 1024;

  double effective_threshold(int height, int width) const;
};

// Folds window segments into global objects in input order. Each segment,
// lifted to full resolution and binarized, joins the existing object it
// overlaps most if that overlap exceeds the threshold; otherwise it starts
// a new object. Empty segments are skipped.
GlobalSegmentation merge_segments(const std::vector<WindowSegments>& per_window, int image_height, int image_width,
                                  const MergeOptions& options = {});

// Window-local mask placed into a zero full-resolution mask.
Mask lift(const Mask& local, const Rect& window, int image_height, int image_width);

}  // namespace objdisc::patchwork
