#include "posefix/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json_util.hpp"
#include "posefix/error.hpp"
#include "tensor_io.hpp"

namespace posefix {

Heatmap::Heatmap(int width, int height, double fill) : width_(width), height_(height) {
  require(width > 0 && height > 0, "heatmap dimensions must be positive");
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Heatmap::Heatmap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  require(width > 0 && height > 0, "heatmap dimensions must be positive");
  require(values_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          "heatmap value count does not match its dimensions");
}

double Heatmap::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

bool Heatmap::is_probability(double tolerance) const {
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
  return std::abs(sum() - 1.0) <= tolerance;
}

Heatmap gaussian_encode(const Coord& center, double sigma, int width, int height) {
  require(std::isfinite(sigma) && sigma > 0.0, "gaussian_encode: sigma must be positive");
  require(std::isfinite(center.x) && std::isfinite(center.y),
          "gaussian_encode: center must be finite");
  Heatmap map(width, height);
  const double denom = 2.0 * sigma * sigma;
  for (int y = 0; y < height; ++y) {
    const double dy = y - center.y;
    for (int x = 0; x < width; ++x) {
      const double dx = x - center.x;
      map.at(x, y) = std::exp(-(dx * dx + dy * dy) / denom);
    }
  }
  return map;
}

Heatmap gaussian_encode(const Keypoint& keypoint, double sigma, int width, int height) {
  if (!keypoint.labeled()) {
    require(std::isfinite(sigma) && sigma > 0.0, "gaussian_encode: sigma must be positive");
    return Heatmap(width, height);
  }
  return gaussian_encode(keypoint.coord(), sigma, width, height);
}

TargetEncoding target_encode(const Coord& center, int width, int height) {
  require(std::isfinite(center.x) && std::isfinite(center.y),
          "target_encode: center must be finite");
  TargetEncoding out{Heatmap(width, height), false};
  const double cx = std::clamp(center.x, 0.0, static_cast<double>(width - 1));
  const double cy = std::clamp(center.y, 0.0, static_cast<double>(height - 1));
  out.clamped = cx != center.x || cy != center.y;
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = cx - x0;
  const double fy = cy - y0;
  // Coincident floor/ceil cells accumulate, so integer centers stay one-hot.
  out.map.at(x0, y0) += (1.0 - fx) * (1.0 - fy);
  out.map.at(x1, y0) += fx * (1.0 - fy);
  out.map.at(x0, y1) += (1.0 - fx) * fy;
  out.map.at(x1, y1) += fx * fy;
  return out;
}

Heatmap spatial_softmax(const Heatmap& logits) {
  const auto v = logits.values();
  require(!v.empty(), "spatial_softmax: empty heatmap");
  double peak = v[0];
  for (double z : v) {
    require(std::isfinite(z), "spatial_softmax: non-finite logit");
    peak = std::max(peak, z);
  }
  Heatmap out(logits.width(), logits.height());
  auto o = out.values();
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    o[i] = std::exp(v[i] - peak);
    total += o[i];
  }
  for (double& p : o) p /= total;
  return out;
}

Coord soft_argmax(const Heatmap& prob) {
  const double total = prob.sum();
  require(std::abs(total - 1.0) <= 1e-4,
          "soft_argmax: heatmap is not normalized (sum " + std::to_string(total) + ")");
  Coord c;
  for (int y = 0; y < prob.height(); ++y) {
    for (int x = 0; x < prob.width(); ++x) {
      const double p = prob.at(x, y);
      c.x += x * p;
      c.y += y * p;
    }
  }
  return c;
}

Coord hard_argmax(const Heatmap& map) {
  const auto v = map.values();
  require(!v.empty(), "hard_argmax: empty heatmap");
  const auto best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  return {static_cast<double>(best % map.width()), static_cast<double>(best / map.width())};
}

double entropy(const Heatmap& prob) {
  double h = 0.0;
  for (double p : prob.values())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

namespace {

// Subgradient of |v| with zero at the kink; offsets below round-off of a
// soft-argmax sum count as the kink.
double sign(double v) {
  constexpr double kKink = 1e-12;
  return v > kKink ? 1.0 : (v < -kKink ? -1.0 : 0.0);
}

}  // namespace

IntegralLoss integral_loss(std::span<const Heatmap> logits, std::span<const Heatmap> targets,
                           std::span<const Coord> target_coords,
                           std::span<const std::uint8_t> mask, LossWeights weights) {
  const std::size_t n = logits.size();
  require(targets.size() == n && target_coords.size() == n && mask.size() == n,
          "integral_loss: per-joint inputs disagree in length");
  IntegralLoss out;
  out.grad.reserve(n);
  out.coords.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    require(logits[j].width() == targets[j].width() && logits[j].height() == targets[j].height(),
            "integral_loss: logit and target shapes differ for joint " + std::to_string(j));
    out.labeled += mask[j] ? 1 : 0;
  }
  require(out.labeled > 0, "integral_loss: no labeled joints");
  const double inv_n = 1.0 / out.labeled;

  for (std::size_t j = 0; j < n; ++j) {
    const Heatmap& z = logits[j];
    Heatmap g(z.width(), z.height());
    if (!mask[j]) {
      out.grad.push_back(std::move(g));
      continue;
    }
    const Heatmap p = spatial_softmax(z);
    const Coord c = soft_argmax(p);
    out.coords[j] = c;
    const auto pv = p.values();
    const auto tv = targets[j].values();
    auto gv = g.values();

    double ce = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i)
      if (tv[i] > 0.0) ce -= tv[i] * std::log(pv[i]);
    const double l1 = std::abs(target_coords[j].x - c.x) + std::abs(target_coords[j].y - c.y);
    out.heatmap_term += ce * inv_n;
    out.coord_term += l1 * inv_n;

    // d(-sum t log p)/dz = p * sum(t) - t
    double tsum = 0.0;
    for (double t : tv) tsum += t;
    const double sx = -sign(target_coords[j].x - c.x);
    const double sy = -sign(target_coords[j].y - c.y);
    const int w = z.width();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double gx = static_cast<double>(static_cast<int>(i) % w);
      const double gy = static_cast<double>(static_cast<int>(i) / w);
      const double dh = pv[i] * tsum - tv[i];
      const double dc = sx * pv[i] * (gx - c.x) + sy * pv[i] * (gy - c.y);
      gv[i] = inv_n * (weights.heatmap * dh + weights.coord * dc);
    }
    out.grad.push_back(std::move(g));
  }
  out.total = weights.heatmap * out.heatmap_term + weights.coord * out.coord_term;
  return out;
}

MseLoss heatmap_mse_loss(std::span<const Heatmap> predictions, std::span<const Heatmap> targets,
                         std::span<const std::uint8_t> mask) {
  const std::size_t n = predictions.size();
  require(targets.size() == n && mask.size() == n, "heatmap_mse_loss: length mismatch");
  MseLoss out;
  for (std::size_t j = 0; j < n; ++j) out.labeled += mask[j] ? 1 : 0;
  require(out.labeled > 0, "heatmap_mse_loss: no labeled joints");
  for (std::size_t j = 0; j < n; ++j) {
    const auto& pr = predictions[j];
    require(pr.width() == targets[j].width() && pr.height() == targets[j].height(),
            "heatmap_mse_loss: shape mismatch");
    Heatmap g(pr.width(), pr.height());
    if (mask[j]) {
      const double scale = 1.0 / (static_cast<double>(pr.size()) * out.labeled);
      auto gv = g.values();
      const auto pv = pr.values();
      const auto tv = targets[j].values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = pv[i] - tv[i];
        out.value += scale * d * d;
        gv[i] = 2.0 * scale * d;
      }
    }
    out.grad.push_back(std::move(g));
  }
  return out;
}

void write_heatmap_dump(const std::string& stem, std::span<const Heatmap> maps) {
  require(!maps.empty(), "write_heatmap_dump: nothing to write");
  const int w = maps[0].width();
  const int h = maps[0].height();
  std::vector<float> data;
  data.reserve(maps.size() * maps[0].size());
  for (const auto& m : maps) {
    require(m.width() == w && m.height() == h, "write_heatmap_dump: mixed shapes");
    for (double v : m.values()) data.push_back(static_cast<float>(v));
  }
  detail::write_f32_le(stem + ".bin", data);
  detail::write_json_file(stem + ".json", {{"w", w},
                                           {"h", h},
                                           {"joints", maps.size()},
                                           {"dtype", "float32"},
                                           {"endianness", "little"},
                                           {"layout", "joint,row,col"}});
}

std::vector<Heatmap> read_heatmap_dump(const std::string& stem) {
  const auto meta = detail::read_json_file(stem + ".json");
  const int w = detail::field<int>(meta, "w", stem + ".json");
  const int h = detail::field<int>(meta, "h", stem + ".json");
  const int joints = detail::field<int>(meta, "joints", stem + ".json");
  if (detail::field<std::string>(meta, "dtype", stem + ".json") != "float32")
    detail::schema_error(stem + ".json.dtype", "only float32 is supported");
  const auto data = detail::read_f32_le(stem + ".bin");
  const auto per = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() != per * static_cast<std::size_t>(joints))
    detail::schema_error(stem + ".bin", "size does not match the sidecar");
  std::vector<Heatmap> maps;
  for (int j = 0; j < joints; ++j) {
    std::vector<double> v(data.begin() + static_cast<std::ptrdiff_t>(j * per),
                          data.begin() + static_cast<std::ptrdiff_t>((j + 1) * per));
    maps.emplace_back(w, h, std::move(v));
  }
  return maps;
}

}  // namespace posefix
