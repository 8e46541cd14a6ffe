#pragma once

// First-order motion prediction and the physics likelihood of an observed
// object state given its history.

#include <optional>
#include <vector>

#include "objdisc/core.h"

namespace objdisc::dynamics {

struct DynamicsParams {
  double sigma_t = 1.0;
  double sigma_s = 1.0;
  double sigma_q = 1.0;
  int history_window = 3;  // states used for the velocity and size means
  double mask_bin_threshold = 0.5;
  double log_floor = 1e-6;

  void validate() const;
};

struct Prediction {
  Cuboid cuboid;
  Mask mask{1, 1};
};

// Wraps an angle difference into (-pi, pi].
double wrap_angle(double a);

// Cuboid at target_frame from the last history_window states: last
// translation plus mean per-frame velocity times the frame gap, mean size,
// last rotation plus mean wrapped angular velocity times the gap.
// Throws InsufficientHistoryError with fewer than 2 states.
Cuboid predict_cuboid(const ObjectTrack& track, const DynamicsParams& params, std::optional<int> target_frame = {});

// Predicted cuboid of the track plus its slice of render_all over every
// track's predicted cuboid. Tracks with a single state are held at that
// state; empty tracks are ignored. `track` is matched in all_tracks by id.
Prediction predict(const ObjectTrack& track, const std::vector<ObjectTrack>& all_tracks, const Camera& cam,
                   const DynamicsParams& params, std::optional<int> target_frame = {});

// Predictions for every nonempty track in one render pass; entries for
// tracks with fewer than 2 states hold their zero-order state. A predicted
// cuboid with a corner behind the camera gets an empty mask and does not
// occlude others.
std::vector<Prediction> predict_all(const std::vector<ObjectTrack>& tracks, const Camera& cam,
                                    const DynamicsParams& params, int target_frame);

// p = 1[m > thr] * m_hat + (1 - 1[m > thr]) * (1 - m_hat), per pixel.
Mask mask_probability(const Mask& predicted, const Mask& observed, const DynamicsParams& params);

// Mean over pixels of log(max(p, log_floor)).
double mask_log_term(const Mask& predicted, const Mask& observed, const DynamicsParams& params);

// Log Gaussian densities of the 9 observed cuboid parameters around the
// prediction plus the mean per-pixel log mask probability.
double physics_log_likelihood(const Prediction& predicted, const Prediction& observed, const DynamicsParams& params);

// Penalty for a predicted-visible object with no observation: minus the mean
// floored log of (1 - m_hat) over the predicted visible pixels. Zero when
// nothing is predicted visible.
double disappearance_penalty(const Mask& predicted, const DynamicsParams& params);

}  // namespace objdisc::dynamics
