#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "posefix/error.hpp"
#include "posefix/pipeline.hpp"

using namespace posefix;

namespace {

constexpr int kLeftWrist = 9;
constexpr int kRightWrist = 10;

void check_box(const BBox& b, double x, double y, double w, double h) {
  CHECK(b.x == doctest::Approx(x).epsilon(1e-4));
  CHECK(b.y == doctest::Approx(y).epsilon(1e-4));
  CHECK(b.width == doctest::Approx(w).epsilon(1e-4));
  CHECK(b.height == doctest::Approx(h).epsilon(1e-4));
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("bbox from pose") {
    const auto p = testutil::pose_of({{10, 20, 2}, {30, 60, 1}, {500, 500, 0}});
    check_box(bbox_from_pose(p, 0.0), 10, 20, 20, 40);
    check_box(bbox_from_pose(p, 0.25), 5, 10, 30, 60);
    CHECK_THROWS_AS(bbox_from_pose(testutil::pose_of({{10, 20, 2}}), 0.0), Error);
    CHECK_THROWS_AS(bbox_from_pose(testutil::pose_of({{10, 20, 0}}), 0.0), Error);
  }

  TEST_CASE("extend aspect") {
    check_box(extend_aspect({0, 0, 100, 100}), 0, -16.6667, 100, 133.3333);
    check_box(extend_aspect({0, 0, 75, 100}), 0, 0, 75, 100);
    check_box(extend_aspect({0, 0, 30, 100}), -22.5, 0, 75, 100);
  }

  TEST_CASE("crop transform corners and center") {
    const BBox box{10, 20, 48, 64};
    const auto t = crop_transform(box, 48, 64);
    const auto tl = t.apply({10, 20});
    const auto br = t.apply({58, 84});
    CHECK(tl.x == doctest::Approx(-0.5));
    CHECK(tl.y == doctest::Approx(-0.5));
    CHECK(br.x == doctest::Approx(47.5));
    CHECK(br.y == doctest::Approx(63.5));

    const auto f = crop_transform(box, 48, 64, 1.0, 0.0, true);
    const auto c = f.apply(box.center());
    CHECK(c.x == doctest::Approx(23.5));
    CHECK(c.y == doctest::Approx(31.5));
    CHECK(f.apply({10, 20}).x == doctest::Approx(47.5));
    CHECK(f.determinant() < 0);
    CHECK_THROWS_AS(crop_transform({0, 0, 0, 10}, 48, 64), Error);
  }

  TEST_CASE("affine inverse and compose") {
    const auto t = crop_transform({3, 7, 90, 120}, 48, 64, 1.2, 25.0, true);
    const auto id = t.compose(t.inverse());
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-200, 200);
    for (int i = 0; i < 100; ++i) {
      const Coord p{u(rng), u(rng)};
      const auto q = t.inverse().apply(t.apply(p));
      CHECK(std::abs(q.x - p.x) < 1e-9);
      CHECK(std::abs(q.y - p.y) < 1e-9);
      const auto r = id.apply(p);
      CHECK(std::abs(r.x - p.x) < 1e-9);
    }
    CHECK_THROWS_AS(AffineTransform({1, 2, 0, 2, 4, 0}).inverse(), Error);
  }

  TEST_CASE("apply to pose") {
    const auto spec = SkeletonSpec::coco();
    Pose p = testutil::spread_pose(30, 30, 3);
    p.keypoints[kLeftWrist] = {10, 20, Visibility::labeled_visible};
    const auto same = apply_to_pose(AffineTransform::identity(), p, spec, false);
    CHECK(same.pose == p);

    const auto flipped = apply_to_pose(mirror_transform(64), p, spec, true);
    CHECK(flipped.pose.keypoints[kRightWrist].x == 53);
    CHECK(flipped.pose.keypoints[kRightWrist].y == 20);

    const auto back = apply_to_pose(mirror_transform(64), flipped.pose, spec, true);
    for (std::size_t j = 0; j < 17; ++j) {
      CHECK(std::abs(back.pose.keypoints[j].x - p.keypoints[j].x) < 1e-9);
      CHECK(std::abs(back.pose.keypoints[j].y - p.keypoints[j].y) < 1e-9);
    }
  }

  TEST_CASE("out of crop keypoints are kept and flagged") {
    const auto spec = SkeletonSpec::coco();
    Pose p = testutil::spread_pose(20, 20, 3);
    p.keypoints[0] = {100, 5, Visibility::labeled_visible};
    p.keypoints[1] = {100, 5, Visibility::not_labeled};
    const auto r = apply_to_pose(AffineTransform::identity(), p, spec, false, 48, 64);
    CHECK(r.out_of_bounds[0] == 1);
    CHECK(r.out_of_bounds[1] == 0);
    CHECK(r.out_of_bounds[2] == 0);
    CHECK(r.pose.keypoints[0].x == 100);
  }

  TEST_CASE("flip merge") {
    const auto spec = SkeletonSpec::coco();
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    std::vector<Heatmap> maps;
    for (int j = 0; j < 17; ++j) {
      Heatmap m(6, 4);
      for (auto& v : m.values()) v = n(rng);
      maps.push_back(m);
    }
    const auto mirrored = mirror_heatmaps(maps, spec);
    CHECK(mirrored[kRightWrist].at(5, 1) == maps[kLeftWrist].at(0, 1));
    const auto merged = flip_merge(maps, mirrored, spec);
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t i = 0; i < maps[j].size(); ++i)
        CHECK(merged[j].values()[i] == doctest::Approx(maps[j].values()[i]));

    const SkeletonSpec one({"center"}, {}, {0.1});
    const std::vector<Heatmap> sym{Heatmap(3, 1, std::vector<double>{1, 2, 1})};
    const auto s = flip_merge(sym, sym, one);
    CHECK(s[0] == sym[0]);

    const std::vector<Heatmap> wrong{Heatmap(5, 4)};
    CHECK_THROWS_AS(flip_merge(std::span(maps).first(1), wrong, spec), Error);
  }

  TEST_CASE("augmentation sampling stays in range") {
    Rng rng(3);
    AugmentationParams p;
    int flips = 0;
    for (int i = 0; i < 2000; ++i) {
      const auto a = sample_augmentation(p, rng);
      CHECK(a.scale >= 0.7);
      CHECK(a.scale <= 1.3);
      CHECK(std::abs(a.rotation_deg) <= 40.0);
      flips += a.flip;
    }
    CHECK(flips > 850);
    CHECK(flips < 1150);
  }

  TEST_CASE("image mirror and warp") {
    Image img(2, 3, 4);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) img.at(c, y, x) = float(c * 100 + y * 10 + x);
    const auto m = mirror_image(img);
    CHECK(m.at(0, 1, 0) == img.at(0, 1, 3));
    const std::vector<std::pair<int, int>> pairs{{0, 1}};
    const auto s = mirror_image(img, pairs);
    CHECK(s.at(0, 2, 1) == img.at(1, 2, 2));
    CHECK(s.at(1, 2, 1) == img.at(0, 2, 2));

    const auto w = warp_image(img, AffineTransform::identity(), 4, 3);
    CHECK(w.data == img.data);
    const auto shifted = warp_image(img, AffineTransform({1, 0, 1, 0, 1, 0}), 4, 3);
    CHECK(shifted.at(0, 0, 0) == 0.0f);
    CHECK(shifted.at(0, 2, 3) == img.at(0, 2, 2));
  }

  TEST_CASE("image dump round trip") {
    const auto dir = testutil::temp_dir("image_dump");
    Image img(3, 2, 5);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = float(i) * 0.5f;
    write_image_dump((dir / "img").string(), img);
    const auto back = read_image_dump((dir / "img").string());
    CHECK(back.channels == 3);
    CHECK(back.width == 5);
    CHECK(back.data == img.data);
    CHECK_THROWS_AS(read_image_dump((dir / "missing").string()), Error);
  }
}
