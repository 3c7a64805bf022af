#include "posefix/similarity.hpp"

#include <cmath>
#include <string>

#include "posefix/error.hpp"

namespace posefix {

double ks(double distance, double scale, double kappa) {
  require(std::isfinite(distance) && std::isfinite(scale) && std::isfinite(kappa),
          "ks: non-finite input");
  require(distance >= 0.0, "ks: negative distance");
  require(scale > 0.0 && kappa > 0.0, "ks: scale and kappa must be positive");
  const double sk = scale * kappa;
  return std::exp(-(distance * distance) / (2.0 * sk * sk));
}

double ks_radius(double level, double scale, double kappa) {
  require(std::isfinite(level) && std::isfinite(scale) && std::isfinite(kappa),
          "ks_radius: non-finite input");
  require(level > 0.0 && level <= 1.0, "ks_radius: level must lie in (0, 1]");
  require(scale > 0.0 && kappa > 0.0, "ks_radius: scale and kappa must be positive");
  return scale * kappa * std::sqrt(-2.0 * std::log(level));
}

OksResult oks(const Pose& estimate, const Pose& truth, double scale, const SkeletonSpec& spec) {
  const auto k = static_cast<std::size_t>(spec.num_joints());
  require(estimate.size() == k && truth.size() == k,
          "oks: pose lengths (" + std::to_string(estimate.size()) + ", " +
              std::to_string(truth.size()) + ") do not match skeleton size " +
              std::to_string(k));
  double sum = 0.0;
  int labeled = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& t = truth.keypoints[j];
    if (!t.labeled()) continue;
    const auto& e = estimate.keypoints[j];
    sum += ks(distance(e.coord(), t.coord()), scale, spec.kappa(static_cast<int>(j)));
    ++labeled;
  }
  if (labeled == 0) return {0.0, true};
  return {sum / labeled, false};
}

OksResult oks(const Pose& estimate, const Pose& truth, const InstanceContext& ctx,
              const SkeletonSpec& spec) {
  return oks(estimate, truth, ctx.scale, spec);
}

}  // namespace posefix
