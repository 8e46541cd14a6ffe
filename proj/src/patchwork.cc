#include "objdisc/patchwork.h"

#include <algorithm>
#include <string>

#include "objdisc/error.h"

namespace objdisc::patchwork {

PatchLayout make_layout(int height, int width) {
  if (height <= 0 || width <= 0 || height % kGridCells != 0 || width % kGridCells != 0) {
    throw DimensionError("patch layout needs positive dimensions divisible by 8, got " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  PatchLayout layout;
  layout.image_height = height;
  layout.image_width = width;
  layout.cell_height = height / kGridCells;
  layout.cell_width = width / kGridCells;
  const int last_anchor = kGridCells - kWindowCells;
  for (int r = 0; r < kGridCells; ++r) {
    for (int c = 0; c < kGridCells; ++c) {
      layout.windows.push_back({std::min(r, last_anchor) * layout.cell_height,
                                std::min(c, last_anchor) * layout.cell_width, kWindowCells * layout.cell_height,
                                kWindowCells * layout.cell_width});
    }
  }
  return layout;
}

double MergeOptions::effective_threshold(int height, int width) const {
  if (!scale_to_reference) return overlap_threshold;
  return overlap_threshold * (static_cast<double>(height) * width) /
         (static_cast<double>(reference_height) * reference_width);
}

Mask lift(const Mask& local, const Rect& window, int image_height, int image_width) {
  if (local.width() != window.width || local.height() != window.height) {
    throw DimensionError("segment size does not match its window");
  }
  if (window.top < 0 || window.left < 0 || window.top + window.height > image_height ||
      window.left + window.width > image_width) {
    throw DimensionError("window lies outside the image");
  }
  Mask out(image_width, image_height);
  for (int r = 0; r < window.height; ++r) {
    for (int c = 0; c < window.width; ++c) out.set(window.top + r, window.left + c, local(r, c));
  }
  return out;
}

GlobalSegmentation merge_segments(const std::vector<WindowSegments>& per_window, int image_height, int image_width,
                                  const MergeOptions& options) {
  GlobalSegmentation out;
  const double threshold = options.effective_threshold(image_height, image_width);
  for (std::size_t w = 0; w < per_window.size(); ++w) {
    const Rect& win = per_window[w].window;
    for (const Mask& seg : per_window[w].segments) {
      Mask lifted = binarize(lift(seg, win, image_height, image_width), options.bin_threshold);
      if (mask_area(lifted, 0.5) == 0) continue;

      int best = -1;
      std::size_t best_overlap = 0;
      for (std::size_t k = 0; k < out.objects.size(); ++k) {
        std::size_t overlap = 0;
        const Mask& obj = out.objects[k].mask;
        for (int r = win.top; r < win.top + win.height; ++r) {
          for (int c = win.left; c < win.left + win.width; ++c) {
            if (lifted(r, c) > 0.5 && obj(r, c) > 0.5) ++overlap;
          }
        }
        if (static_cast<double>(overlap) > threshold && overlap > best_overlap) {
          best_overlap = overlap;
          best = static_cast<int>(k);
        }
      }

      if (best < 0) {
        GlobalObject obj;
        obj.id = static_cast<int>(out.objects.size());
        obj.mask = std::move(lifted);
        obj.windows.insert(static_cast<int>(w));
        out.objects.push_back(std::move(obj));
      } else {
        GlobalObject& obj = out.objects[best];
        for (int r = win.top; r < win.top + win.height; ++r) {
          for (int c = win.left; c < win.left + win.width; ++c) {
            if (lifted(r, c) > 0.5) obj.mask.set(r, c, 1.0);
          }
        }
        obj.windows.insert(static_cast<int>(w));
      }
    }
  }
  return out;
}

}  // namespace objdisc::patchwork
