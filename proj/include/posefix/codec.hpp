#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "posefix/core_model.hpp"

namespace posefix {

/// w x h grid stored row-major; (x, y) addresses column x of row y, both
/// 0-based. Used for Gaussian input maps, logits and probability maps.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(int width, int height, double fill = 0.0);
  Heatmap(int width, int height, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  double& at(int x, int y) { return values_[index(x, y)]; }
  double at(int x, int y) const { return values_[index(x, y)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double sum() const;
  bool is_probability(double tolerance = 1e-6) const;

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Unnormalized Gaussian blob exp(-|g - c|^2 / (2 sigma^2)) on the grid.
Heatmap gaussian_encode(const Coord& center, double sigma, int width, int height);

/// Gaussian for a labeled keypoint, all zeros for an unlabeled one.
Heatmap gaussian_encode(const Keypoint& keypoint, double sigma, int width, int height);

struct TargetEncoding {
  Heatmap map;
  bool clamped = false;  // center lay outside the grid and was clamped
};

/// One-hot target, split bilinearly over floor/ceil neighbours for
/// non-integer centers.
TargetEncoding target_encode(const Coord& center, int width, int height);

/// Exp-normalizes over all cells.
Heatmap spatial_softmax(const Heatmap& logits);

/// Expected grid coordinate under a probability heatmap.
Coord soft_argmax(const Heatmap& prob);

/// Grid coordinate of the largest value; first occurrence in row-major order.
Coord hard_argmax(const Heatmap& map);

double entropy(const Heatmap& prob);

struct LossWeights {
  double heatmap = 1.0;
  double coord = 1.0;
};

struct IntegralLoss {
  double total = 0.0;
  double heatmap_term = 0.0;  // L_H
  double coord_term = 0.0;    // L_C
  int labeled = 0;            // N', the averaging denominator
  std::vector<Heatmap> grad;  // dL/dlogits, zero for masked joints
  std::vector<Coord> coords;  // soft-argmax of each joint
};

/// Cross-entropy heatmap term plus L1 coordinate term over joints with
/// mask[n] != 0, both averaged over the masked-in count. The gradient is
/// with respect to the logits.
IntegralLoss integral_loss(std::span<const Heatmap> logits, std::span<const Heatmap> targets,
                           std::span<const Coord> target_coords,
                           std::span<const std::uint8_t> mask, LossWeights weights = {});

struct MseLoss {
  double value = 0.0;
  int labeled = 0;
  std::vector<Heatmap> grad;
};

/// Mean squared error between predicted maps and Gaussian targets, averaged
/// over cells and masked-in joints.
MseLoss heatmap_mse_loss(std::span<const Heatmap> predictions, std::span<const Heatmap> targets,
                         std::span<const std::uint8_t> mask);

struct HeatmapDumpInfo {
  int width = 0;
  int height = 0;
  int joints = 0;
};

/// Writes `<stem>.bin` (little-endian float32, joint-major, row-major) and
/// `<stem>.json` ({w, h, joints, dtype, layout}).
void write_heatmap_dump(const std::string& stem, std::span<const Heatmap> maps);
std::vector<Heatmap> read_heatmap_dump(const std::string& stem);

}  // namespace posefix
