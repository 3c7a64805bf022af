#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "posefix/error.hpp"
#include "posefix/refiner.hpp"
#include "posefix/similarity.hpp"
#include "posefix/toy.hpp"

using namespace posefix;

namespace {

RefinerConfig small_config() {
  RefinerConfig c;
  c.narrow_width = 6;
  c.wide_width = 8;
  c.batch_size = 8;
  c.epochs = 3;
  c.monitor_samples = 16;
  c.seed = 5;
  return c;
}

std::vector<ToySample> toy(int n, std::uint64_t seed) {
  const auto spec = SkeletonSpec::coco();
  return generate_toy_dataset(n, spec, ErrorDistributionTable::default_table(spec), seed);
}

// Three joints (center, left, right) on a stride-1 net whose kernels are
// mirror-symmetric in x and respect the left/right channel swap, so the net
// commutes with a horizontal flip.
RefinerModel mirror_equivariant_model(const SkeletonSpec& spec, int w, int h) {
  RefinerConfig cfg;
  cfg.input_width = cfg.heatmap_width = w;
  cfg.input_height = cfg.heatmap_height = h;
  cfg.image_channels = 0;
  cfg.image_flip_pairs.clear();
  RefinerModel m{cfg, spec.num_joints(), ConvNet<float>(miniature_architecture(3, 3, w, h, 4))};
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.4);
  const auto& arch = m.net.architecture();
  auto perm = [&](int c, bool swap) { return swap ? spec.mirror_index(c) : c; };
  std::size_t off = 0;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& L = arch.layers[l];
    const bool swap_in = l == 0, swap_out = l + 1 == arch.layers.size();
    const int k = L.kernel;
    std::vector<double> raw(std::size_t(L.out_channels) * L.in_channels * k * k + L.out_channels);
    for (auto& v : raw) v = n(rng);
    auto idx = [&](int o, int i, int ky, int kx) {
      return ((std::size_t(o) * L.in_channels + i) * k + ky) * k + kx;
    };
    for (int o = 0; o < L.out_channels; ++o) {
      for (int i = 0; i < L.in_channels; ++i)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            m.net.params()[off + idx(o, i, ky, kx)] = static_cast<float>(
                0.5 * (raw[idx(o, i, ky, kx)] +
                       raw[idx(perm(o, swap_out), perm(i, swap_in), ky, k - 1 - kx)]));
      const std::size_t b = std::size_t(L.out_channels) * L.in_channels * k * k;
      m.net.params()[off + b + o] =
          static_cast<float>(0.5 * (raw[b + o] + raw[b + perm(o, swap_out)]));
    }
    off += raw.size();
  }
  REQUIRE(off == m.net.num_params());
  return m;
}

}  // namespace

TEST_SUITE("refiner") {
  TEST_CASE("loss mode names") {
    CHECK(parse_loss_mode("C2F") == LossMode::c2f);
    CHECK(parse_loss_mode("c2f_lh") == LossMode::c2f_lh_only);
    CHECK(parse_loss_mode("C2F_LC_only") == LossMode::c2f_lc_only);
    CHECK(std::string(to_string(LossMode::f2f)) == "F2F");
    CHECK_THROWS_AS(parse_loss_mode("C3PO"), Error);
  }

  TEST_CASE("learning rate schedule") {
    LrSchedule s;
    CHECK(s.resolved_decay_epochs(12) == std::vector<int>{8, 10});
    CHECK(s.rate(0, 12) == doctest::Approx(1e-3));
    CHECK(s.rate(8, 12) == doctest::Approx(1e-4));
    CHECK(s.rate(11, 12) == doctest::Approx(1e-5));
    CHECK(s.rate(0, 1) == doctest::Approx(1e-3));
  }

  TEST_CASE("config validation and json") {
    auto c = RefinerConfig{};
    c.validate();
    CHECK(c.stride() == 2);
    CHECK(c.upsample_count() == 1);
    CHECK(c.input_sigma() == doctest::Approx(4.0));
    c.loss_mode = LossMode::f2f;
    CHECK(c.input_sigma() == doctest::Approx(0.5));
    const auto back = RefinerConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    auto bad = RefinerConfig{};
    bad.heatmap_width = 20;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("crop and heatmap coordinates invert each other") {
    for (double x : {-3.0, 0.0, 0.5, 7.25, 47.0}) {
      const Coord c{x, x + 1.5};
      const auto back = heatmap_to_crop(crop_to_heatmap(c, 2), 2);
      CHECK(std::abs(back.x - c.x) < 1e-12);
      CHECK(std::abs(back.y - c.y) < 1e-12);
    }
    CHECK(crop_to_heatmap({0.5, 0.5}, 2).x == doctest::Approx(0.0));
  }

  TEST_CASE("refinement crop back-projection is exact") {
    const auto spec = SkeletonSpec::coco();
    const auto pose = testutil::spread_pose(321.7, 140.2, 23.0);
    const auto t = refinement_crop(RefinerConfig{}, pose);
    const auto there = apply_to_pose(t, pose, spec, false).pose;
    const auto back = apply_to_pose(t.inverse(), there, spec, false).pose;
    for (std::size_t j = 0; j < pose.size(); ++j) {
      CHECK(std::abs(back.keypoints[j].x - pose.keypoints[j].x) < 1e-6);
      CHECK(std::abs(back.keypoints[j].y - pose.keypoints[j].y) < 1e-6);
    }
  }

  TEST_CASE("zero parameters refine to the crop center") {
    const auto spec = SkeletonSpec::coco();
    const auto model = RefinerModel::zeros(RefinerConfig{}, 17);
    auto pose = testutil::spread_pose(200, 100, 15);
    pose.keypoints[3].visibility = Visibility::not_labeled;
    const auto logits = forward(model, Image(), pose);
    for (const auto& z : logits)
      for (double v : z.values()) CHECK(v == 0.0);
    const auto t = refinement_crop(model.config, pose);
    const auto center = t.inverse().apply({23.5, 31.5});
    const auto out = refine(model, Image(), pose, spec, false);
    for (std::size_t j = 0; j < 17; ++j) {
      if (j == 3) {
        CHECK(out.keypoints[j] == pose.keypoints[j]);
        continue;
      }
      CHECK(out.keypoints[j].x == doctest::Approx(center.x));
      CHECK(out.keypoints[j].y == doctest::Approx(center.y));
    }
    auto lonely = testutil::pose_of({{10, 10, 2}});
    lonely.keypoints.resize(17);
    CHECK(refine(model, Image(), lonely, spec, false) == lonely);
  }

  TEST_CASE("flip test-time augmentation on a symmetric input") {
    const SkeletonSpec spec({"center", "left", "right"}, {{1, 2}}, {0.1, 0.1, 0.1});
    const int w = 9, h = 7;
    const auto model = mirror_equivariant_model(spec, w, h);
    const auto pose = testutil::pose_of({{4.0, 2.0, 2}, {1.5, 4.0, 2}, {6.5, 4.0, 2}});
    const auto plain = refine_crop(model, Image(), pose, spec, false);
    const auto merged = refine_crop(model, Image(), pose, spec, true);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(std::abs(plain.keypoints[j].x - merged.keypoints[j].x) < 1e-6);
      CHECK(std::abs(plain.keypoints[j].y - merged.keypoints[j].y) < 1e-6);
    }
    CHECK(std::abs(plain.keypoints[0].x - 4.0) < 1e-5);
    CHECK(std::abs(plain.keypoints[1].x + plain.keypoints[2].x - 8.0) < 1e-5);
  }

  TEST_CASE("coordinate loss has zero gradient at its target") {
    RefinerConfig cfg;
    cfg.heatmap_width = 8;
    cfg.heatmap_height = 6;
    cfg.loss_mode = LossMode::c2f_lc_only;
    RefinerTarget t;
    t.maps = {target_encode({3.5, 2.5}, 8, 6).map};
    t.coords = {{3.5, 2.5}};
    t.mask = {1};
    const std::vector<double> uniform(48, 0.0);
    const auto r = evaluate_loss(cfg, 1, uniform, t);
    CHECK(r.loss == doctest::Approx(0.0));
    for (double g : r.grad_output) CHECK(g == 0.0);
  }

  TEST_CASE("mse mode on identical maps") {
    RefinerConfig cfg;
    cfg.heatmap_width = 8;
    cfg.heatmap_height = 6;
    cfg.loss_mode = LossMode::c2c;
    const auto g = gaussian_encode(Coord{2, 3}, cfg.coarse_sigma, 8, 6);
    const RefinerTarget t{{g}, {{2, 3}}, {1}};
    const std::vector<double> out(g.values().begin(), g.values().end());
    const auto r = evaluate_loss(cfg, 1, out, t);
    CHECK(r.loss == 0.0);
    for (double v : r.grad_output) CHECK(v == 0.0);
  }

  TEST_CASE("targets off the grid are masked") {
    RefinerConfig cfg;
    auto pose = testutil::spread_pose(24, 30, 4);
    pose.keypoints[2] = {200, 10, Visibility::labeled_visible};
    pose.keypoints[4].visibility = Visibility::not_labeled;
    const auto t = build_target(cfg, 17, pose);
    CHECK(t.mask[0] == 1);
    CHECK(t.mask[2] == 0);
    CHECK(t.mask[4] == 0);
  }

  TEST_CASE("non-finite loss names the sample") {
    auto cfg = small_config();
    const auto spec = SkeletonSpec::coco();
    const auto data = toy(2, 3);
    auto model = RefinerModel::create(cfg, 17);
    std::vector<TrainingExample<float>> batch;
    for (const auto& s : data)
      batch.push_back(make_example<float>(cfg, 17, s.image, s.corrupted_pose, s.gt_pose));
    batch[1].input[0] = std::nanf("");
    std::vector<float> grad;
    try {
      batch_gradient<float>(model.net, cfg, 17, batch, grad, 40);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::diverged);
      CHECK(std::string(e.what()).find("41") != std::string::npos);
    }
  }

  TEST_CASE("params save and load") {
    const auto dir = testutil::temp_dir("params");
    auto cfg = small_config();
    cfg.loss_mode = LossMode::f2f;
    const auto m = RefinerModel::create(cfg, 17);
    const auto stem = (dir / "model").string();
    m.save(stem + ".json");
    const auto back = RefinerModel::load(stem);
    CHECK(back.joints == 17);
    CHECK(back.config.to_json() == cfg.to_json());
    REQUIRE(back.net.num_params() == m.net.num_params());
    for (std::size_t i = 0; i < m.net.num_params(); ++i)
      CHECK(back.net.params()[i] == m.net.params()[i]);
    CHECK_THROWS_AS(RefinerModel::load((dir / "missing").string()), Error);
  }

  TEST_CASE("training is deterministic and lowers the loss") {
    const auto spec = SkeletonSpec::coco();
    const auto data = toy(48, 21);
    const auto cfg = small_config();
    const auto a = train(data, cfg, spec);
    const auto b = train(data, cfg, spec);
    REQUIRE(a.history.size() == 3);
    CHECK(a.history.back().loss < a.history.front().loss);
    CHECK(a.history[1].learning_rate == doctest::Approx(1e-3));
    REQUIRE(a.model.net.num_params() == b.model.net.num_params());
    bool same = true;
    for (std::size_t i = 0; i < a.model.net.num_params(); ++i)
      same = same && a.model.net.params()[i] == b.model.net.params()[i];
    CHECK(same);
    CHECK_THROWS_AS(train({}, cfg, spec), Error);
  }
}

TEST_SUITE("toy") {
  TEST_CASE("empty dataset is an error") {
    const auto spec = SkeletonSpec::coco();
    CHECK_THROWS_AS(generate_toy_dataset(0, spec, ErrorDistributionTable::default_table(spec), 1),
                    Error);
  }

  TEST_CASE("fixed seed gives the same samples") {
    const auto a = toy(20, 77), b = toy(20, 77);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].image.data == b[i].image.data);
      CHECK(a[i].gt_pose == b[i].gt_pose);
      CHECK(a[i].corrupted_pose == b[i].corrupted_pose);
      CHECK(a[i].labels == b[i].labels);
    }
    CHECK(toy(1, 78)[0].gt_pose != a[0].gt_pose);
  }

  TEST_CASE("samples are well formed") {
    for (const auto& s : toy(50, 4)) {
      CHECK(s.image.channels == kToyChannels);
      CHECK(s.image.width == 48);
      CHECK(s.image.height == 64);
      CHECK(s.scale > 0);
      for (const auto& k : s.gt_pose.keypoints) {
        CHECK(k.labeled());
        CHECK(k.x >= 0);
        CHECK(k.x <= 47);
        CHECK(k.y >= 0);
        CHECK(k.y <= 63);
      }
    }
  }

  TEST_CASE("every error type shows up in 1000 samples") {
    std::array<int, kNumErrorTypes> seen{};
    for (const auto& s : toy(1000, 1))
      for (const auto& l : s.labels)
        if (l) seen[static_cast<std::size_t>(*l)]++;
    for (auto t : kAllErrorTypes) {
      INFO(to_string(t));
      CHECK(seen[static_cast<std::size_t>(t)] >= 1);
    }
  }

  TEST_CASE("labels agree with the taxonomy") {
    const auto spec = SkeletonSpec::coco();
    for (const auto& s : toy(200, 12)) {
      const auto ctx = s.context();
      for (int j = 0; j < 17; ++j) {
        const auto& l = s.labels[static_cast<std::size_t>(j)];
        REQUIRE(l.has_value());
        CHECK(classify_keypoint(s.corrupted_pose.keypoints[j], ctx, spec, j,
                                TaxonomyThresholds{}) == *l);
      }
    }
  }
}
