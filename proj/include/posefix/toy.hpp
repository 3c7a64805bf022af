#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "posefix/core_model.hpp"
#include "posefix/pipeline.hpp"
#include "posefix/synthesis.hpp"

namespace posefix {

struct ToyOptions {
  int width = 48;
  int height = 64;
  double neighbor_probability = 0.25;  // second, overlapping figure
  SynthesisConfig synthesis;
};

/// Image channels: 0 limbs, 1 left-side and midline joints, 2 right-side
/// and midline joints. Mirroring a toy image must exchange channels 1 and 2.
inline constexpr int kToyChannels = 3;
inline constexpr std::pair<int, int> kToyChannelFlipPair{1, 2};

struct ToySample {
  Image image;
  Pose gt_pose;
  Pose corrupted_pose;
  double scale = 0.0;  // sqrt of the gt keypoint box area
  std::optional<Pose> neighbor;
  std::vector<std::optional<ErrorType>> labels;
  std::uint64_t seed = 0;  // stream that produced this sample

  InstanceContext context() const;
};

/// Articulated stick figure with the 17 COCO joints, fitted into the canvas.
Pose random_stick_figure(Rng& rng, int width, int height, double height_fraction);

/// Anti-aliased segments and joint discs for each figure.
Image render_figures(const std::vector<Pose>& figures, int width, int height);

/// Requires the 17-joint COCO skeleton layout.
std::vector<ToySample> generate_toy_dataset(int n, const SkeletonSpec& spec,
                                            const ErrorDistributionTable& table,
                                            std::uint64_t seed, const ToyOptions& options = {});

}  // namespace posefix
