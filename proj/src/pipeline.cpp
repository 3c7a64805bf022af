#include "posefix/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json_util.hpp"
#include "posefix/error.hpp"
#include "tensor_io.hpp"

namespace posefix {

BBox bbox_from_pose(const Pose& pose, double margin_fraction) {
  require(std::isfinite(margin_fraction) && margin_fraction >= 0.0,
          "bbox_from_pose: margin must be non-negative");
  bool any = false;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  for (const auto& kp : pose.keypoints) {
    if (!kp.labeled()) continue;
    if (!any) {
      x0 = x1 = kp.x;
      y0 = y1 = kp.y;
      any = true;
    } else {
      x0 = std::min(x0, kp.x);
      y0 = std::min(y0, kp.y);
      x1 = std::max(x1, kp.x);
      y1 = std::max(y1, kp.y);
    }
  }
  require(any, "bbox_from_pose: pose has no labeled keypoint");
  const double w = x1 - x0;
  const double h = y1 - y0;
  require(w > 0.0 && h > 0.0, "bbox_from_pose: keypoints span a zero-area box");
  return {x0 - margin_fraction * w, y0 - margin_fraction * h, w * (1.0 + 2.0 * margin_fraction),
          h * (1.0 + 2.0 * margin_fraction)};
}

BBox extend_aspect(const BBox& box, double target_h_over_w) {
  require(box.valid(), "extend_aspect: box must have positive size");
  require(target_h_over_w > 0.0, "extend_aspect: aspect must be positive");
  const Coord c = box.center();
  double w = box.width;
  double h = box.height;
  if (h < w * target_h_over_w)
    h = w * target_h_over_w;
  else if (h > w * target_h_over_w)
    w = h / target_h_over_w;
  return {c.x - w / 2.0, c.y - h / 2.0, w, h};
}

AffineTransform::AffineTransform(const std::array<double, 6>& m) : m_(m) {
  require(std::abs(determinant()) > 0.0, "affine transform is singular");
}

Coord AffineTransform::apply(const Coord& p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  const double a = m_[4] / det;
  const double b = -m_[1] / det;
  const double d = -m_[3] / det;
  const double e = m_[0] / det;
  return AffineTransform({a, b, -(a * m_[2] + b * m_[5]), d, e, -(d * m_[2] + e * m_[5])});
}

AffineTransform AffineTransform::compose(const AffineTransform& first) const {
  const auto& f = first.m_;
  const auto& s = m_;
  return AffineTransform({s[0] * f[0] + s[1] * f[3], s[0] * f[1] + s[1] * f[4],
                          s[0] * f[2] + s[1] * f[5] + s[2], s[3] * f[0] + s[4] * f[3],
                          s[3] * f[1] + s[4] * f[4], s[3] * f[2] + s[4] * f[5] + s[5]});
}

AffineTransform crop_transform(const BBox& box, int out_w, int out_h, double scale_aug,
                               double rot_aug_deg, bool flip) {
  require(box.valid(), "crop_transform: degenerate box");
  require(out_w > 0 && out_h > 0, "crop_transform: output size must be positive");
  require(std::isfinite(scale_aug) && scale_aug > 0.0, "crop_transform: scale must be positive");
  const Coord c = box.center();
  const double sx = out_w / (box.width * scale_aug);
  const double sy = out_h / (box.height * scale_aug);
  const double theta = rot_aug_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double fx = flip ? -1.0 : 1.0;
  // crop = F * S * R * (p - c) + crop_center
  const double a = fx * sx * cs;
  const double b = -fx * sx * sn;
  const double d = sy * sn;
  const double e = sy * cs;
  const double ccx = (out_w - 1) / 2.0;
  const double ccy = (out_h - 1) / 2.0;
  return AffineTransform({a, b, ccx - (a * c.x + b * c.y), d, e, ccy - (d * c.x + e * c.y)});
}

AffineTransform mirror_transform(int width) {
  return AffineTransform({-1.0, 0.0, static_cast<double>(width - 1), 0.0, 1.0, 0.0});
}

Pose swap_flip_pairs(const Pose& pose, const SkeletonSpec& spec) {
  require(pose.size() == static_cast<std::size_t>(spec.num_joints()),
          "swap_flip_pairs: pose length does not match the skeleton");
  Pose out = pose;
  for (int j = 0; j < spec.num_joints(); ++j)
    out.keypoints[static_cast<std::size_t>(spec.mirror_index(j))] =
        pose.keypoints[static_cast<std::size_t>(j)];
  return out;
}

CropPose apply_to_pose(const AffineTransform& t, const Pose& pose, const SkeletonSpec& spec,
                       bool flipped, int crop_w, int crop_h) {
  CropPose out;
  out.pose = pose;
  for (auto& kp : out.pose.keypoints) {
    if (!kp.labeled()) continue;
    const Coord p = t.apply(kp.coord());
    kp.x = p.x;
    kp.y = p.y;
  }
  if (flipped) out.pose = swap_flip_pairs(out.pose, spec);
  out.out_of_bounds.assign(out.pose.size(), 0);
  if (crop_w > 0 && crop_h > 0) {
    for (std::size_t j = 0; j < out.pose.size(); ++j) {
      const auto& kp = out.pose.keypoints[j];
      if (!kp.labeled()) continue;
      const bool inside = kp.x >= -0.5 && kp.x <= crop_w - 0.5 && kp.y >= -0.5 &&
                          kp.y <= crop_h - 0.5;
      out.out_of_bounds[j] = inside ? 0 : 1;
    }
  }
  return out;
}

std::vector<Heatmap> mirror_heatmaps(std::span<const Heatmap> maps, const SkeletonSpec& spec) {
  require(maps.size() == static_cast<std::size_t>(spec.num_joints()),
          "mirror_heatmaps: one map per joint expected");
  std::vector<Heatmap> out(maps.size());
  for (int j = 0; j < spec.num_joints(); ++j) {
    const Heatmap& src = maps[static_cast<std::size_t>(j)];
    Heatmap m(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < src.width(); ++x) m.at(src.width() - 1 - x, y) = src.at(x, y);
    out[static_cast<std::size_t>(spec.mirror_index(j))] = std::move(m);
  }
  return out;
}

std::vector<Heatmap> flip_merge(std::span<const Heatmap> maps,
                                std::span<const Heatmap> flipped_maps, const SkeletonSpec& spec) {
  require(maps.size() == flipped_maps.size(), "flip_merge: joint counts differ");
  for (std::size_t j = 0; j < maps.size(); ++j)
    require(maps[j].width() == flipped_maps[j].width() &&
                maps[j].height() == flipped_maps[j].height(),
            "flip_merge: heatmap shapes differ");
  auto unmirrored = mirror_heatmaps(flipped_maps, spec);
  std::vector<Heatmap> out;
  out.reserve(maps.size());
  for (std::size_t j = 0; j < maps.size(); ++j) {
    Heatmap m(maps[j].width(), maps[j].height());
    auto mv = m.values();
    const auto a = maps[j].values();
    const auto b = unmirrored[j].values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = 0.5 * (a[i] + b[i]);
    out.push_back(std::move(m));
  }
  return out;
}

Augmentation sample_augmentation(const AugmentationParams& params, Rng& rng) {
  auto u = [&rng]() { return std::generate_canonical<double, 53>(rng); };
  Augmentation aug;
  if (u() < params.scale_probability)
    aug.scale = 1.0 + params.scale_range * (2.0 * u() - 1.0);
  if (u() < params.rotation_probability)
    aug.rotation_deg = params.rotation_range * (2.0 * u() - 1.0);
  aug.flip = u() < params.flip_probability;
  return aug;
}

Image warp_image(const Image& src, const AffineTransform& t, int out_w, int out_h) {
  require(out_w > 0 && out_h > 0, "warp_image: output size must be positive");
  const AffineTransform inv = t.inverse();
  Image out(src.channels, out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Coord s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int x0 = static_cast<int>(std::floor(s.x));
      const int y0 = static_cast<int>(std::floor(s.y));
      const double fx = s.x - x0;
      const double fy = s.y - y0;
      for (int c = 0; c < src.channels; ++c) {
        auto sample = [&](int xx, int yy) -> double {
          if (xx < 0 || yy < 0 || xx >= src.width || yy >= src.height) return 0.0;
          return src.at(c, yy, xx);
        };
        const double v = (1 - fx) * (1 - fy) * sample(x0, y0) + fx * (1 - fy) * sample(x0 + 1, y0) +
                         (1 - fx) * fy * sample(x0, y0 + 1) + fx * fy * sample(x0 + 1, y0 + 1);
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Image mirror_image(const Image& src, std::span<const std::pair<int, int>> channel_pairs) {
  std::vector<int> source(static_cast<std::size_t>(src.channels));
  for (int c = 0; c < src.channels; ++c) source[static_cast<std::size_t>(c)] = c;
  for (const auto& [a, b] : channel_pairs) {
    require(a >= 0 && a < src.channels && b >= 0 && b < src.channels && a != b,
            "mirror_image: channel pair out of range");
    std::swap(source[static_cast<std::size_t>(a)], source[static_cast<std::size_t>(b)]);
  }
  Image out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        out.at(c, y, src.width - 1 - x) = src.at(source[static_cast<std::size_t>(c)], y, x);
  return out;
}

void write_image_dump(const std::string& stem, const Image& image) {
  detail::write_f32_le(stem + ".bin", image.data);
  detail::write_json_file(stem + ".json", {{"channels", image.channels},
                                           {"h", image.height},
                                           {"w", image.width},
                                           {"dtype", "float32"},
                                           {"endianness", "little"},
                                           {"layout", "channel,row,col"}});
}

Image read_image_dump(const std::string& stem) {
  const auto meta = detail::read_json_file(stem + ".json");
  const std::string where = stem + ".json";
  Image img(detail::field<int>(meta, "channels", where), detail::field<int>(meta, "h", where),
            detail::field<int>(meta, "w", where));
  if (detail::field<std::string>(meta, "dtype", where) != "float32")
    detail::schema_error(where + ".dtype", "only float32 is supported");
  auto data = detail::read_f32_le(stem + ".bin");
  if (data.size() != img.data.size()) detail::schema_error(stem + ".bin", "size mismatch");
  img.data = std::move(data);
  return img;
}

}  // namespace posefix
