#pragma once

#include "posefix/core_model.hpp"

namespace posefix {

/// Keypoint similarity exp(-d^2 / (2 s^2 kappa^2)).
double ks(double distance, double scale, double kappa);

/// Distance at which ks() equals `level`: s * kappa * sqrt(-2 ln k).
double ks_radius(double level, double scale, double kappa);

struct OksResult {
  double value = 0.0;
  // True when the truth pose has no labeled joint; value is then 0.
  bool degenerate = false;
};

/// Mean KS over joints labeled in `truth`. Estimate visibility is ignored.
OksResult oks(const Pose& estimate, const Pose& truth, double scale, const SkeletonSpec& spec);
OksResult oks(const Pose& estimate, const Pose& truth, const InstanceContext& ctx,
              const SkeletonSpec& spec);

}  // namespace posefix
