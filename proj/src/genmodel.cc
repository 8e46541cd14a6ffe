#include "objdisc/genmodel.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "objdisc/error.h"

namespace objdisc::genmodel {
namespace {

double clamp_prob(double p) { return std::clamp(p, kClampEpsilon, 1.0 - kClampEpsilon); }
double floor_prob(double p) { return std::max(p, kClampEpsilon); }

void check_components(const Frame& image, const std::vector<ComponentPrediction>& components) {
  if (components.empty()) throw ContractError("image likelihood needs at least one component");
  const auto backgrounds = std::count_if(components.begin(), components.end(),
                                         [](const ComponentPrediction& c) { return c.is_background; });
  if (backgrounds != 1) throw ContractError("exactly one background component is required");
  const int w = image.image.width(), h = image.image.height();
  for (const auto& c : components) {
    if (c.mask.width() != w || c.mask.height() != h || c.decoded_mask.width() != w ||
        c.decoded_mask.height() != h || c.mean_image.width() != w || c.mean_image.height() != h) {
      throw DimensionError("component size does not match the image");
    }
    for (const Rgb& px : c.mean_image.pixels()) {
      for (double v : px) {
        if (!std::isfinite(v)) throw NumericError("component mean image is not finite");
      }
    }
  }
  for (std::size_t i = 0; i < image.image.size(); ++i) {
    double sum = 0.0;
    for (const auto& c : components) sum += c.mask[i];
    if (std::abs(sum - 1.0) > 1e-4) {
      throw ContractError("component masks violate partition of unity at pixel " + std::to_string(i));
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(beta > 0.0 && gamma > 0.0 && sigma > 0.0 && sigma_b > 0.0) || phase_switch_step <= 0) {
    throw ContractError("loss weights must be positive");
  }
}

double image_log_likelihood(const Frame& image, const std::vector<ComponentPrediction>& components,
                            const LossWeights& w) {
  w.validate();
  check_components(image, components);
  const double log_norm_obj = -0.5 * std::log(2.0 * std::numbers::pi * w.sigma * w.sigma);
  const double log_norm_bg = -0.5 * std::log(2.0 * std::numbers::pi * w.sigma_b * w.sigma_b);

  std::vector<double> terms;
  terms.reserve(components.size());
  double total = 0.0;
  for (std::size_t i = 0; i < image.image.size(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      terms.clear();
      for (const auto& c : components) {
        const double m = c.mask[i];
        if (m <= 0.0) continue;
        const double s = c.is_background ? w.sigma_b : w.sigma;
        const double z = (image.image[i][ch] - c.mean_image[i][ch]) / s;
        const double d = c.decoded_mask[i];
        const double match = floor_prob(m > 0.5 ? d : 1.0 - d);
        terms.push_back(std::log(m) + (c.is_background ? log_norm_bg : log_norm_obj) - 0.5 * z * z +
                        std::log(match));
      }
      const double peak = *std::max_element(terms.begin(), terms.end());
      double acc = 0.0;
      for (double t : terms) acc += std::exp(t - peak);
      total += peak + std::log(acc);
    }
  }
  return total;
}

double kl_gaussian(const LatentPosterior& post) {
  if (post.mean.size() != post.log_variance.size()) throw DimensionError("posterior mean/log-variance size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mean.size(); ++i) {
    const double lv = post.log_variance[i];
    if (!std::isfinite(lv) || !std::isfinite(post.mean[i])) throw NumericError("posterior is not finite");
    kl += 0.5 * (post.mean[i] * post.mean[i] + std::exp(lv) - 1.0 - lv);
  }
  return kl;
}

double kl_mask(const Mask& attention_mask, const Mask& decoded_mask) {
  require_same_shape(attention_mask, decoded_mask, "kl_mask");
  double sum = 0.0;
  for (std::size_t i = 0; i < attention_mask.size(); ++i) {
    const double q = clamp_prob(attention_mask[i]);
    const double p = clamp_prob(decoded_mask[i]);
    sum += q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
  }
  return sum / static_cast<double>(attention_mask.size());
}

double kl_loss(const std::vector<LatentPosterior>& posteriors, const std::vector<ComponentPrediction>& components,
               const LossWeights& w) {
  w.validate();
  double latent = 0.0;
  for (const auto& p : posteriors) latent += kl_gaussian(p);
  double masks = 0.0;
  for (const auto& c : components) masks += kl_mask(c.mask, c.decoded_mask);
  return w.beta * latent + w.gamma * masks;
}

double total_loss(long long step, double l_image, double l_kl, double l_physics, const LossWeights& w) {
  if (step < 0) throw ContractError("training step must be non-negative");
  return step >= w.phase_switch_step ? l_image + l_kl + l_physics : l_image + l_kl;
}

PlateauDetector::PlateauDetector(std::size_t window, double rel_tol) : window_(window), rel_tol_(rel_tol) {
  if (window == 0 || !(rel_tol > 0.0)) throw ContractError("plateau detector needs a positive window and tolerance");
}

bool PlateauDetector::update(double loss) {
  recent_.push_back(loss);
  recent_sum_ += loss;
  if (recent_.size() > window_) {
    previous_.push_back(recent_.front());
    previous_sum_ += recent_.front();
    recent_sum_ -= recent_.front();
    recent_.pop_front();
    if (previous_.size() > window_) {
      previous_sum_ -= previous_.front();
      previous_.pop_front();
    }
  }
  if (!plateaued_ && previous_.size() == window_) {
    const double prev = previous_sum_ / static_cast<double>(window_);
    const double cur = recent_sum_ / static_cast<double>(window_);
    const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
    plateaued_ = std::abs(cur - prev) / scale < rel_tol_;
  }
  return plateaued_;
}

}  // namespace objdisc::genmodel
