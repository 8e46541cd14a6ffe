#pragma once

// Scene decomposition into an ordered set of masks that sum to one.

#include <functional>
#include <optional>
#include <vector>

#include "objdisc/core.h"

namespace objdisc::segment {

// Raw attention for an image given the context still to be explained. Must
// return width*height values in [0, 1], row-major.
using AttentionFn = std::function<std::vector<double>(const RgbImage& image, const Mask& context)>;

struct SegmenterContract {
  AttentionFn attention;
  int slots = 5;
};

// Slot 0 is the background. contexts[i] is the scope left after slot i, so
// contexts.size() == masks.size() - 1 and the last mask equals the final
// context.
struct Decomposition {
  std::vector<Mask> masks;
  std::vector<Mask> contexts;
  // Optional opaque per-slot latent; empty when no encoder is attached.
  std::vector<std::optional<std::vector<double>>> latents;
};

// Throws ContractError if the masks do not form a partition of unity within
// tol, or if a mask exceeds its preceding context.
void validate(const Decomposition& d, double tol = 1e-6);

// Stick-breaking recursion: m_i = c_{i-1} * a_i, c_i = c_{i-1} * (1 - a_i),
// run for K-1 steps from c_0 = 1; the K-th mask is the leftover context.
Decomposition decompose(const Frame& image, const SegmenterContract& seg);

struct ClassicalOptions {
  // Cluster centroids closer than this (Euclidean RGB) are merged after
  // k-means, so smooth shading within one surface stays one cluster.
  double merge_tolerance = 0.22;
  // When set, the background is the cluster holding the image color nearest
  // to this hint (if within merge_tolerance); otherwise the largest cluster
  // touching the border.
  std::optional<Rgb> background_hint;
  int max_iterations = 100;
};

// Color-quantization baseline: k-means in RGB with k = K, centroid merging,
// 4-connected components of non-background clusters ordered by area, at most
// K-1 emitted components. Background is the complement of the emitted set.
Decomposition classical_segment(const Frame& image, int slots, const ClassicalOptions& options = {});

// Background color as chosen by classical_segment on the whole image.
Rgb estimate_background_color(const RgbImage& image, int slots, const ClassicalOptions& options = {});

}  // namespace objdisc::segment
