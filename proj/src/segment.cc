#include "objdisc/segment.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "objdisc/error.h"

namespace objdisc::segment {
namespace {

double dist2(const Rgb& a, const Rgb& b) {
  double d = 0.0;
  for (int c = 0; c < 3; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
  return d;
}

struct UnionFind {
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<int> parent;
};

struct Clustering {
  std::vector<int> pixel_label;  // dense cluster id per pixel
  int clusters = 0;
  int background = -1;
  Rgb background_color{0, 0, 0};
};

// Weighted Lloyd iterations over the distinct colors of the image, seeded by
// deterministic farthest-point selection.
Clustering cluster_colors(const RgbImage& image, int k, const ClassicalOptions& opt) {
  std::map<Rgb, std::size_t> counts;
  for (const Rgb& px : image.pixels()) ++counts[px];
  std::vector<Rgb> colors;
  std::vector<double> weight;
  for (const auto& [c, n] : counts) {
    colors.push_back(c);
    weight.push_back(static_cast<double>(n));
  }
  const int n = static_cast<int>(colors.size());

  std::vector<Rgb> centroids;
  {
    int first = static_cast<int>(std::max_element(weight.begin(), weight.end()) - weight.begin());
    centroids.push_back(colors[first]);
    std::vector<double> nearest(n);
    for (int j = 0; j < n; ++j) nearest[j] = dist2(colors[j], centroids[0]);
    while (static_cast<int>(centroids.size()) < k) {
      int best = -1;
      double best_score = 0.0;
      for (int j = 0; j < n; ++j) {
        const double score = weight[j] * nearest[j];
        if (score > best_score) {
          best_score = score;
          best = j;
        }
      }
      if (best < 0) break;  // fewer distinct colors than clusters
      centroids.push_back(colors[best]);
      for (int j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], dist2(colors[j], colors[best]));
    }
  }

  const int kk = static_cast<int>(centroids.size());
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    bool changed = false;
    for (int j = 0; j < n; ++j) {
      int best = 0;
      double bd = dist2(colors[j], centroids[0]);
      for (int c = 1; c < kk; ++c) {
        const double d = dist2(colors[j], centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[j] != best) {
        assign[j] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Rgb> sum(kk, Rgb{0, 0, 0});
    std::vector<double> mass(kk, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int ch = 0; ch < 3; ++ch) sum[assign[j]][ch] += weight[j] * colors[j][ch];
      mass[assign[j]] += weight[j];
    }
    for (int c = 0; c < kk; ++c) {
      if (mass[c] > 0.0) {
        for (int ch = 0; ch < 3; ++ch) centroids[c][ch] = sum[c][ch] / mass[c];
      }
    }
  }

  UnionFind uf(kk);
  const double tol2 = opt.merge_tolerance * opt.merge_tolerance;
  for (int a = 0; a < kk; ++a) {
    for (int b = a + 1; b < kk; ++b) {
      if (dist2(centroids[a], centroids[b]) < tol2) uf.unite(a, b);
    }
  }
  std::vector<int> dense(kk, -1);
  Clustering out;
  for (int c = 0; c < kk; ++c) {
    const int root = uf.find(c);
    if (dense[root] < 0) dense[root] = out.clusters++;
    dense[c] = dense[root];
  }
  std::map<Rgb, int> label_of;
  for (int j = 0; j < n; ++j) label_of[colors[j]] = dense[assign[j]];

  const int w = image.width(), h = image.height();
  out.pixel_label.resize(image.size());
  std::vector<double> mass(out.clusters, 0.0);
  std::vector<bool> touches(out.clusters, false);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int l = label_of[image(r, c)];
      out.pixel_label[static_cast<std::size_t>(r) * w + c] = l;
      mass[l] += 1.0;
      if (r == 0 || c == 0 || r == h - 1 || c == w - 1) touches[l] = true;
    }
  }

  if (opt.background_hint) {
    int nearest = 0;
    for (int j = 1; j < n; ++j) {
      if (dist2(colors[j], *opt.background_hint) < dist2(colors[nearest], *opt.background_hint)) nearest = j;
    }
    if (dist2(colors[nearest], *opt.background_hint) <= tol2) out.background = label_of[colors[nearest]];
  } else {
    for (int l = 0; l < out.clusters; ++l) {
      if (touches[l] && (out.background < 0 || mass[l] > mass[out.background])) out.background = l;
    }
  }
  if (out.background >= 0) {
    double best = -1.0;
    for (int j = 0; j < n; ++j) {
      if (label_of[colors[j]] == out.background && weight[j] > best) {
        best = weight[j];
        out.background_color = colors[j];
      }
    }
  }
  return out;
}

struct Component {
  std::vector<std::size_t> pixels;
  std::size_t first = 0;
};

std::vector<Component> connected_components(const Clustering& cl, int w, int h) {
  std::vector<Component> comps;
  std::vector<bool> seen(cl.pixel_label.size(), false);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < cl.pixel_label.size(); ++start) {
    if (seen[start] || cl.pixel_label[start] == cl.background) continue;
    const int label = cl.pixel_label[start];
    Component comp;
    comp.first = start;
    stack.push_back(start);
    seen[start] = true;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      comp.pixels.push_back(p);
      const int r = static_cast<int>(p / w), c = static_cast<int>(p % w);
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
        const std::size_t q = static_cast<std::size_t>(nr[k]) * w + nc[k];
        if (!seen[q] && cl.pixel_label[q] == label) {
          seen[q] = true;
          stack.push_back(q);
        }
      }
    }
    comps.push_back(std::move(comp));
  }
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    return a.pixels.size() != b.pixels.size() ? a.pixels.size() > b.pixels.size() : a.first < b.first;
  });
  return comps;
}

}  // namespace

void validate(const Decomposition& d, double tol) {
  if (d.masks.empty()) throw ContractError("decomposition has no masks");
  if (d.contexts.size() + 1 != d.masks.size()) throw ContractError("decomposition context trace has wrong length");
  const Mask& first = d.masks.front();
  std::vector<double> sum(first.size(), 0.0);
  for (std::size_t k = 0; k < d.masks.size(); ++k) {
    require_same_shape(first, d.masks[k], "decomposition");
    const Mask* scope = k == 0 ? nullptr : &d.contexts[k - 1];
    for (std::size_t i = 0; i < first.size(); ++i) {
      sum[i] += d.masks[k][i];
      if (scope && d.masks[k][i] > (*scope)[i] + tol) {
        throw ContractError("mask " + std::to_string(k) + " exceeds its preceding context");
      }
    }
  }
  for (double s : sum) {
    if (std::abs(s - 1.0) > tol) throw ContractError("masks do not sum to one (got " + std::to_string(s) + ")");
  }
}

Decomposition decompose(const Frame& image, const SegmenterContract& seg) {
  if (seg.slots < 2) throw ContractError("decompose needs at least 2 slots");
  if (!seg.attention) throw ContractError("segmenter has no attention function");
  const int w = image.image.width(), h = image.image.height();
  Decomposition out;
  Mask context(w, h, 1.0);
  for (int step = 0; step + 1 < seg.slots; ++step) {
    const std::vector<double> a = seg.attention(image.image, context);
    if (a.size() != context.size()) throw ContractError("attention map has wrong size");
    Mask m(w, h);
    Mask next(w, h);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(a[i] >= 0.0 && a[i] <= 1.0)) {
        throw ContractError("attention output outside [0, 1] at step " + std::to_string(step));
      }
      m.set(i, context[i] * a[i]);
      next.set(i, context[i] * (1.0 - a[i]));
    }
    out.masks.push_back(std::move(m));
    out.contexts.push_back(next);
    context = std::move(next);
  }
  out.masks.push_back(context);
  out.latents.assign(out.masks.size(), std::nullopt);
  return out;
}

Decomposition classical_segment(const Frame& image, int slots, const ClassicalOptions& options) {
  if (slots < 2) throw ContractError("classical_segment needs at least 2 slots");
  const int w = image.image.width(), h = image.image.height();
  const Clustering cl = cluster_colors(image.image, slots, options);
  const std::vector<Component> comps = connected_components(cl, w, h);

  std::vector<Mask> objects;
  for (std::size_t k = 0; k < comps.size() && static_cast<int>(k) + 1 < slots; ++k) {
    Mask m(w, h);
    for (std::size_t p : comps[k].pixels) m.set(p, 1.0);
    objects.push_back(std::move(m));
  }
  while (static_cast<int>(objects.size()) + 1 < slots) objects.emplace_back(w, h);

  Mask background(w, h, 1.0);
  for (const Mask& m : objects) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] > 0.0) background.set(i, 0.0);
    }
  }

  Decomposition out;
  out.masks.push_back(background);
  Mask context(w, h);
  for (std::size_t i = 0; i < context.size(); ++i) context.set(i, 1.0 - background[i]);
  for (Mask& m : objects) {
    out.contexts.push_back(context);
    for (std::size_t i = 0; i < context.size(); ++i) context.set(i, context[i] - m[i]);
    out.masks.push_back(std::move(m));
  }
  out.latents.assign(out.masks.size(), std::nullopt);
  return out;
}

Rgb estimate_background_color(const RgbImage& image, int slots, const ClassicalOptions& options) {
  ClassicalOptions opt = options;
  opt.background_hint.reset();
  return cluster_colors(image, slots, opt).background_color;
}

}  // namespace objdisc::segment
