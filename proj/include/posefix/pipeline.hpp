#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posefix/codec.hpp"
#include "posefix/core_model.hpp"
#include "posefix/synthesis.hpp"

namespace posefix {

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  Coord center() const { return {x + width / 2.0, y + height / 2.0}; }
  bool valid() const { return width > 0.0 && height > 0.0; }
};

/// Tight box over labeled keypoints grown by margin_fraction of its width
/// and height on every side.
BBox bbox_from_pose(const Pose& pose, double margin_fraction);

/// Grows one side about the center so height / width equals the target.
BBox extend_aspect(const BBox& box, double target_h_over_w = 4.0 / 3.0);

/// 2x3 affine map [a b c; d e f] from source image coordinates to crop
/// coordinates.
class AffineTransform {
 public:
  AffineTransform() = default;
  explicit AffineTransform(const std::array<double, 6>& m);

  static AffineTransform identity() { return AffineTransform({1, 0, 0, 0, 1, 0}); }

  Coord apply(const Coord& p) const;
  AffineTransform inverse() const;
  /// (*this) after `first`.
  AffineTransform compose(const AffineTransform& first) const;
  double determinant() const { return m_[0] * m_[4] - m_[1] * m_[3]; }
  const std::array<double, 6>& matrix() const { return m_; }

 private:
  std::array<double, 6> m_{1, 0, 0, 0, 1, 0};
};

/// Crop pixel i covers [i - 0.5, i + 0.5], so the box maps onto
/// [-0.5, out - 0.5] and its center onto ((out_w - 1) / 2, (out_h - 1) / 2).
/// scale_aug > 1 widens the source region around the center.
AffineTransform crop_transform(const BBox& box, int out_w, int out_h, double scale_aug = 1.0,
                               double rot_aug_deg = 0.0, bool flip = false);

/// x' = width - 1 - x on a crop of the given width.
AffineTransform mirror_transform(int width);

struct CropPose {
  Pose pose;
  std::vector<std::uint8_t> out_of_bounds;  // per joint; set only for labeled joints
};

/// Maps labeled keypoints through `t`; when `flipped`, left/right slots are
/// exchanged per the skeleton's flip pairs. Keypoints landing outside a
/// crop of crop_w x crop_h keep their coordinates and are flagged.
CropPose apply_to_pose(const AffineTransform& t, const Pose& pose, const SkeletonSpec& spec,
                       bool flipped, int crop_w = 0, int crop_h = 0);

/// Exchanges left/right slots without moving coordinates.
Pose swap_flip_pairs(const Pose& pose, const SkeletonSpec& spec);

/// Mirrors every map in x and exchanges flip-pair channels.
std::vector<Heatmap> mirror_heatmaps(std::span<const Heatmap> maps, const SkeletonSpec& spec);

/// Averages `maps` with the un-mirrored `flipped_maps` (pre-softmax).
std::vector<Heatmap> flip_merge(std::span<const Heatmap> maps,
                                std::span<const Heatmap> flipped_maps, const SkeletonSpec& spec);

struct AugmentationParams {
  double scale_range = 0.3;     // factor drawn from U[1 - r, 1 + r]
  double scale_probability = 1.0;
  double rotation_range = 40.0;  // degrees, U[-r, r]
  double rotation_probability = 0.6;
  double flip_probability = 0.5;
};

struct Augmentation {
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool flip = false;
};

Augmentation sample_augmentation(const AugmentationParams& params, Rng& rng);

/// Channel-major float image.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// Resamples `src` into an out_w x out_h crop through the inverse of `t`
/// with bilinear interpolation; samples outside the source read as zero.
Image warp_image(const Image& src, const AffineTransform& t, int out_w, int out_h);

/// Exact x-mirror of an image. Channels named in `channel_pairs` trade
/// places, for images whose channels encode body side.
Image mirror_image(const Image& src, std::span<const std::pair<int, int>> channel_pairs = {});

/// Raw tensor dump: `<stem>.bin` little-endian float32 CHW plus `<stem>.json`.
void write_image_dump(const std::string& stem, const Image& image);
Image read_image_dump(const std::string& stem);

}  // namespace posefix
