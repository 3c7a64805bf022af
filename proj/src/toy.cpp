#include "posefix/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "posefix/error.hpp"

namespace posefix {

namespace {

enum Joint {
  nose, l_eye, r_eye, l_ear, r_ear, l_shoulder, r_shoulder, l_elbow, r_elbow,
  l_wrist, r_wrist, l_hip, r_hip, l_knee, r_knee, l_ankle, r_ankle
};

// Kinematic tree edges drawn as limbs.
constexpr std::pair<int, int> kBones[] = {
    {l_shoulder, r_shoulder}, {l_hip, r_hip},       {l_shoulder, l_hip}, {r_shoulder, r_hip},
    {l_shoulder, l_elbow},    {l_elbow, l_wrist},   {r_shoulder, r_elbow}, {r_elbow, r_wrist},
    {l_hip, l_knee},          {l_knee, l_ankle},    {r_hip, r_knee},     {r_knee, r_ankle},
    {nose, l_eye},            {nose, r_eye},        {l_eye, l_ear},      {r_eye, r_ear}};

Coord polar(const Coord& from, double length, double angle) {
  // angle 0 points down the image
  return {from.x + length * std::sin(angle), from.y + length * std::cos(angle)};
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double segment_distance(const Coord& p, const Coord& a, const Coord& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, {a.x + t * dx, a.y + t * dy});
}

bool is_left(int j) { return j == l_eye || j == l_ear || (j >= l_shoulder && j % 2 == 1); }
bool is_right(int j) { return j == r_eye || j == r_ear || (j >= l_shoulder && j % 2 == 0); }

double keypoint_box_area(const Pose& pose) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& kp : pose.keypoints) {
    x0 = std::min(x0, kp.x);
    y0 = std::min(y0, kp.y);
    x1 = std::max(x1, kp.x);
    y1 = std::max(y1, kp.y);
  }
  return (x1 - x0) * (y1 - y0);
}

}  // namespace

InstanceContext ToySample::context() const {
  InstanceContext ctx;
  ctx.target = gt_pose;
  if (neighbor) ctx.neighbors.push_back(*neighbor);
  ctx.scale = scale;
  ctx.image_size = {image.width, image.height};
  return ctx;
}

Pose random_stick_figure(Rng& rng, int width, int height, double height_fraction) {
  const double pi = std::numbers::pi;
  std::vector<Coord> j(17);
  const double lean = uniform(rng, -0.25, 0.25);
  const Coord neck{0.0, 0.0};
  const Coord pelvis = polar(neck, 1.0, lean);
  const Coord across{std::cos(lean), -std::sin(lean)};  // unit vector towards image right
  // Facing the camera: the person's left side is on the image right.
  j[l_shoulder] = {neck.x + 0.35 * across.x, neck.y + 0.35 * across.y};
  j[r_shoulder] = {neck.x - 0.35 * across.x, neck.y - 0.35 * across.y};
  j[l_hip] = {pelvis.x + 0.22 * across.x, pelvis.y + 0.22 * across.y};
  j[r_hip] = {pelvis.x - 0.22 * across.x, pelvis.y - 0.22 * across.y};

  const double tilt = lean + uniform(rng, -0.3, 0.3);
  j[nose] = polar(neck, 0.38, pi + tilt);
  const Coord side{std::cos(tilt), -std::sin(tilt)};
  const Coord up{-std::sin(tilt), -std::cos(tilt)};
  auto head = [&](double a, double b) {
    return Coord{j[nose].x + a * side.x + b * up.x, j[nose].y + a * side.y + b * up.y};
  };
  j[l_eye] = head(0.08, 0.07);
  j[r_eye] = head(-0.08, 0.07);
  j[l_ear] = head(0.17, 0.02);
  j[r_ear] = head(-0.17, 0.02);

  for (int s = 0; s < 2; ++s) {
    const double dir = s == 0 ? 1.0 : -1.0;  // +1 swings towards image right
    const int sh = s == 0 ? l_shoulder : r_shoulder;
    const double upper = lean + dir * uniform(rng, -0.4, 2.6);
    j[sh + 2] = polar(j[sh], 0.45, upper);
    j[sh + 4] = polar(j[sh + 2], 0.4, upper + dir * uniform(rng, -0.3, 2.2));
    const int hip = s == 0 ? l_hip : r_hip;
    const double thigh = lean + dir * uniform(rng, -0.35, 0.7);
    j[hip + 2] = polar(j[hip], 0.55, thigh);
    j[hip + 4] = polar(j[hip + 2], 0.5, thigh - dir * uniform(rng, -0.2, 1.2));
  }

  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& c : j) {
    x0 = std::min(x0, c.x);
    y0 = std::min(y0, c.y);
    x1 = std::max(x1, c.x);
    y1 = std::max(y1, c.y);
  }
  const double margin = 2.0;
  double scale = height_fraction * (height - 2 * margin) / (y1 - y0);
  scale = std::min(scale, (width - 2 * margin) / (x1 - x0));
  const double fw = (x1 - x0) * scale, fh = (y1 - y0) * scale;
  const double ox = uniform(rng, margin, width - margin - fw) - x0 * scale;
  const double oy = uniform(rng, margin, height - margin - fh) - y0 * scale;

  Pose pose;
  pose.keypoints.resize(17);
  for (int k = 0; k < 17; ++k)
    pose.keypoints[static_cast<std::size_t>(k)] = {j[static_cast<std::size_t>(k)].x * scale + ox,
                                                   j[static_cast<std::size_t>(k)].y * scale + oy,
                                                   Visibility::labeled_visible};
  return pose;
}

Image render_figures(const std::vector<Pose>& figures, int width, int height) {
  Image img(kToyChannels, height, width);
  for (const auto& f : figures) {
    require(f.size() == 17, "render_figures: expected 17 joints");
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Coord p{static_cast<double>(x), static_cast<double>(y)};
        double limb = 0.0;
        for (const auto& [a, b] : kBones)
          limb = std::max(limb, std::clamp(1.5 - segment_distance(p, f.keypoints[a].coord(),
                                                                  f.keypoints[b].coord()),
                                           0.0, 1.0));
        img.at(0, y, x) = std::max(img.at(0, y, x), static_cast<float>(limb));
        for (int k = 0; k < 17; ++k) {
          const double v =
              std::clamp(2.0 - distance(p, f.keypoints[static_cast<std::size_t>(k)].coord()),
                         0.0, 1.0);
          if (v <= 0.0) continue;
          if (!is_right(k)) img.at(1, y, x) = std::max(img.at(1, y, x), static_cast<float>(v));
          if (!is_left(k)) img.at(2, y, x) = std::max(img.at(2, y, x), static_cast<float>(v));
        }
      }
    }
  }
  return img;
}

std::vector<ToySample> generate_toy_dataset(int n, const SkeletonSpec& spec,
                                            const ErrorDistributionTable& table,
                                            std::uint64_t seed, const ToyOptions& options) {
  require(n >= 1, "generate_toy_dataset: n must be at least 1");
  require(spec.num_joints() == 17, "generate_toy_dataset: the toy renderer needs 17 joints");
  require(options.width >= 16 && options.height >= 16, "generate_toy_dataset: canvas too small");
  require(options.neighbor_probability >= 0.0 && options.neighbor_probability <= 1.0,
          "generate_toy_dataset: neighbor_probability must lie in [0, 1]");
  options.synthesis.validate();

  std::vector<ToySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ToySample s;
    s.seed = derive_seed(seed, "toy-sample", static_cast<std::uint64_t>(i));
    Rng rng(s.seed);
    s.gt_pose = random_stick_figure(rng, options.width, options.height, uniform(rng, 0.65, 0.95));
    std::vector<Pose> figures{s.gt_pose};
    if (uniform(rng, 0.0, 1.0) < options.neighbor_probability) {
      // Place the second figure around the first so the two overlap.
      Pose other = random_stick_figure(rng, options.width, options.height, uniform(rng, 0.6, 0.9));
      double cx = 0.0, cy = 0.0, ox = 0.0, oy = 0.0;
      for (std::size_t k = 0; k < 17; ++k) {
        cx += s.gt_pose.keypoints[k].x / 17.0;
        cy += s.gt_pose.keypoints[k].y / 17.0;
        ox += other.keypoints[k].x / 17.0;
        oy += other.keypoints[k].y / 17.0;
      }
      const double dx = cx + uniform(rng, -10.0, 10.0) - ox;
      const double dy = cy + uniform(rng, -6.0, 6.0) - oy;
      for (auto& kp : other.keypoints) {
        kp.x = std::clamp(kp.x + dx, 1.0, options.width - 2.0);
        kp.y = std::clamp(kp.y + dy, 1.0, options.height - 2.0);
      }
      s.neighbor = other;
      figures.push_back(other);
    }
    s.image = render_figures(figures, options.width, options.height);
    s.scale = std::sqrt(keypoint_box_area(s.gt_pose));

    SynthesisConfig cfg = options.synthesis;
    cfg.rng_seed = derive_seed(seed, "toy-corruption", static_cast<std::uint64_t>(i));
    Rng corruption_rng(cfg.rng_seed);
    auto synthesized = synthesize_pose(s.context(), spec, table, cfg, corruption_rng);
    s.corrupted_pose = std::move(synthesized.pose);
    s.labels = std::move(synthesized.labels);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace posefix
