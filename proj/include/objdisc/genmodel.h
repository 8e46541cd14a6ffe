#pragma once

// Loss terms of the image generative model, computed as plain functions.

#include <cstddef>
#include <deque>
#include <vector>

#include "objdisc/core.h"

namespace objdisc::genmodel {

inline constexpr double kClampEpsilon = 1e-6;

struct ComponentPrediction {
  Mask mask{1, 1};               // mixture weight m_k
  RgbImage mean_image{1, 1};     // mu_k
  Mask decoded_mask{1, 1};       // d_k
  bool is_background = false;
};

// Diagonal Gaussian posterior over a latent vector.
struct LatentPosterior {
  std::vector<double> mean;
  std::vector<double> log_variance;
};

struct LossWeights {
  double beta = 0.5;
  double gamma = 0.5;
  double sigma = 0.11;     // object components
  double sigma_b = 0.07;   // background component
  long long phase_switch_step = 100000;

  void validate() const;
};

// log p(x | z): per pixel and channel, log sum_k m_k N(x; mu_k, s_k^2) p(d_k = m_k),
// with s_k = sigma_b for the background and sigma otherwise, summed over
// pixels and channels. Match probabilities are floored at kClampEpsilon.
// L_Image is the negation.
double image_log_likelihood(const Frame& image, const std::vector<ComponentPrediction>& components,
                            const LossWeights& w);

// KL(N(mean, exp(log_variance)) || N(0, I)).
double kl_gaussian(const LatentPosterior& post);

// Mean over pixels of KL(Bernoulli(q) || Bernoulli(p)), both clamped to
// [eps, 1 - eps].
double kl_mask(const Mask& attention_mask, const Mask& decoded_mask);

// beta * sum KL(posterior || prior) + gamma * sum KL(attention || decoded).
double kl_loss(const std::vector<LatentPosterior>& posteriors, const std::vector<ComponentPrediction>& components,
               const LossWeights& w);

// l_image + l_kl, plus l_physics from phase_switch_step onward.
double total_loss(long long step, double l_image, double l_kl, double l_physics, const LossWeights& w);

// Alternative phase trigger: reports a plateau once the moving average of the
// last `window` losses changes by less than `rel_tol` relative to the
// previous window's average.
class PlateauDetector {
 public:
  explicit PlateauDetector(std::size_t window = 1000, double rel_tol = 1e-3);

  // Returns true from the first step at which a plateau is detected.
  bool update(double loss);
  bool plateaued() const { return plateaued_; }

 private:
  std::size_t window_;
  double rel_tol_;
  std::deque<double> recent_;
  double recent_sum_ = 0.0;
  std::deque<double> previous_;
  double previous_sum_ = 0.0;
  bool plateaued_ = false;
};

}  // namespace objdisc::genmodel
