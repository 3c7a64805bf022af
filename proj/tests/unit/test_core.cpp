#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "posefix/core_model.hpp"
#include "posefix/error.hpp"
#include "posefix/similarity.hpp"
#include "posefix/taxonomy.hpp"

using namespace posefix;
using testutil::pose_of;

namespace {

constexpr int kNose = 0;
constexpr int kLeftWrist = 9;
constexpr int kRightWrist = 10;
constexpr int kLeftAnkle = 15;
constexpr int kRightAnkle = 16;

InstanceContext single(const Pose& p, double s = 100.0) {
  InstanceContext ctx;
  ctx.target = p;
  ctx.scale = s;
  return ctx;
}

}  // namespace

TEST_SUITE("core_model") {
  TEST_CASE("coco skeleton") {
    const auto spec = SkeletonSpec::coco();
    CHECK(spec.num_joints() == 17);
    CHECK(spec.flip_pairs().size() == 8);
    CHECK(spec.flip_partner(kLeftWrist) == kRightWrist);
    CHECK(spec.flip_partner(kRightAnkle) == kLeftAnkle);
    CHECK_FALSE(spec.flip_partner(kNose).has_value());
    CHECK(spec.mirror_index(kNose) == kNose);
    CHECK(spec.index_of("left_wrist") == kLeftWrist);
    CHECK(spec.kappa(kNose) == doctest::Approx(0.052));
    CHECK(spec.kappa(kLeftAnkle) == doctest::Approx(0.178));
  }

  TEST_CASE("skeleton json round trip and validation") {
    const auto spec = SkeletonSpec::coco();
    CHECK(SkeletonSpec::from_json(spec.to_json()) == spec);
    CHECK_THROWS_AS(SkeletonSpec({"a", "b"}, {{0, 0}}, {0.1, 0.1}), Error);
    CHECK_THROWS_AS(SkeletonSpec({"a", "b"}, {{0, 1}}, {0.1}), Error);
    CHECK_THROWS_AS(SkeletonSpec({"a", "b"}, {{0, 1}}, {0.1, -1.0}), Error);
    CHECK_THROWS_AS(SkeletonSpec({"a", "b", "c"}, {{0, 1}, {1, 2}}, {0.1, 0.1, 0.1}), Error);
  }

  TEST_CASE("error type names") {
    for (auto t : kAllErrorTypes) CHECK(parse_error_type(to_string(t)) == t);
    CHECK_THROWS_AS(parse_error_type("wobble"), Error);
  }

  TEST_CASE("anchor set, single person") {
    const auto spec = SkeletonSpec::coco();
    const auto ctx = single(testutil::spread_pose(100, 100, 10));
    const auto a = anchor_set(ctx, spec, kLeftWrist);
    REQUIRE(a.size() == 2);
    CHECK(a[0].person == PersonRole::target);
    CHECK(a[0].joint == JointRole::same);
    CHECK(a[0].position == ctx.target.keypoints[kLeftWrist].coord());
    CHECK(a[1].joint == JointRole::flipped);
    CHECK(a[1].position == ctx.target.keypoints[kRightWrist].coord());

    const auto n = anchor_set(ctx, spec, kNose);
    REQUIRE(n.size() == 1);
    CHECK(n[0].joint == JointRole::same);
  }

  TEST_CASE("anchor set, two people, order and unlabeled joints") {
    const auto spec = SkeletonSpec::coco();
    auto ctx = single(testutil::spread_pose(100, 100, 10));
    ctx.neighbors.push_back(testutil::spread_pose(130, 100, 10));
    const auto a = anchor_set(ctx, spec, kLeftAnkle);
    REQUIRE(a.size() == 4);
    CHECK((a[0].person == PersonRole::target && a[0].joint == JointRole::same));
    CHECK((a[1].person == PersonRole::target && a[1].joint == JointRole::flipped));
    CHECK((a[2].person == PersonRole::neighbor && a[2].joint == JointRole::same));
    CHECK((a[3].person == PersonRole::neighbor && a[3].joint == JointRole::flipped));
    CHECK(a[2].neighbor == 0);
    CHECK(a[3].position == ctx.neighbors[0].keypoints[kRightAnkle].coord());

    ctx.neighbors[0].keypoints[kLeftAnkle].visibility = Visibility::not_labeled;
    ctx.target.keypoints[kRightAnkle].visibility = Visibility::not_labeled;
    const auto b = anchor_set(ctx, spec, kLeftAnkle);
    REQUIRE(b.size() == 2);
    CHECK(b[1].person == PersonRole::neighbor);
    CHECK(b[1].joint == JointRole::flipped);
  }
}

TEST_SUITE("similarity") {
  TEST_CASE("ks values") {
    CHECK(ks(0.0, 100, 0.1) == 1.0);
    CHECK(ks(11.7741, 100, 0.1) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(std::abs(ks(11.7741, 100, 0.1) - 0.5) < 1e-4);
    CHECK(std::abs(ks(5.7012, 100, 0.1) - 0.85) < 1e-4);
    CHECK_THROWS_AS(ks(std::numeric_limits<double>::quiet_NaN(), 100, 0.1), Error);
    CHECK_THROWS_AS(ks(1.0, std::numeric_limits<double>::infinity(), 0.1), Error);
  }

  TEST_CASE("ks radius values") {
    CHECK(ks_radius(1.0, 100, 0.1) == 0.0);
    CHECK(std::abs(ks_radius(0.5, 100, 0.1) - 11.7741) < 1e-3);
    CHECK(std::abs(ks_radius(0.1, 100, 0.1) - 21.4597) < 1e-3);
    CHECK(std::abs(ks_radius(0.85, 100, 0.1) - 5.7012) < 1e-3);
    CHECK_THROWS_AS(ks_radius(0.0, 100, 0.1), Error);
    CHECK_THROWS_AS(ks_radius(1.5, 100, 0.1), Error);
  }

  TEST_CASE("oks") {
    const auto spec = testutil::uniform_skeleton();
    Pose truth, est;
    for (int j = 0; j < 17; ++j) {
      truth.keypoints.push_back({50.0 + j, 60.0, j < 2 ? Visibility::labeled_visible
                                                        : Visibility::not_labeled});
      est.keypoints.push_back(truth.keypoints.back());
    }
    CHECK(oks(truth, truth, 100, spec).value == 1.0);
    est.keypoints[1].x += 100 * 0.1;  // d = s * kappa
    est.keypoints[5].x += 1000;       // unlabeled in truth: ignored
    const auto r = oks(est, truth, 100, spec);
    CHECK(std::abs(r.value - 0.80327) < 1e-4);
    CHECK_FALSE(r.degenerate);

    Pose empty = truth;
    for (auto& k : empty.keypoints) k.visibility = Visibility::not_labeled;
    const auto d = oks(est, empty, 100, spec);
    CHECK(d.value == 0.0);
    CHECK(d.degenerate);

    Pose short_pose = est;
    short_pose.keypoints.pop_back();
    CHECK_THROWS_AS(oks(short_pose, truth, 100, spec), Error);
  }
}

TEST_SUITE("taxonomy") {
  TEST_CASE("classification by distance") {
    const auto spec = testutil::uniform_skeleton();
    const auto ctx = single(testutil::spread_pose(200, 200, 60));
    const TaxonomyThresholds th;
    const auto gt = ctx.target.keypoints[kLeftWrist];
    auto at = [&](double dx, double dy) {
      return classify_keypoint({gt.x + dx, gt.y + dy, Visibility::labeled_visible}, ctx, spec,
                               kLeftWrist, th);
    };
    CHECK(at(0, 0) == ErrorType::good);
    CHECK(at(3.0, 0) == ErrorType::good);
    CHECK(at(0, 8.0) == ErrorType::jitter);
    CHECK(at(30.0, 0) == ErrorType::miss);
    CHECK(at(-25.0, 0) == ErrorType::miss);
  }

  TEST_CASE("inversion and swap") {
    const auto spec = testutil::uniform_skeleton();
    auto ctx = single(testutil::spread_pose(200, 200, 60));
    ctx.neighbors.push_back(testutil::spread_pose(200, 215, 60));
    const TaxonomyThresholds th;
    const auto partner = ctx.target.keypoints[kRightWrist].coord();
    CHECK(classify_keypoint({partner.x + 4, partner.y, Visibility::labeled_visible}, ctx, spec,
                            kLeftWrist, th) == ErrorType::inversion);
    const auto other = ctx.neighbors[0].keypoints[kLeftWrist].coord();
    CHECK(classify_keypoint({other.x + 2, other.y + 3, Visibility::labeled_visible}, ctx, spec,
                            kLeftWrist, th) == ErrorType::swap);
  }

  TEST_CASE("nearest anchor ties go to the earlier anchor") {
    const auto spec = testutil::uniform_skeleton();
    auto ctx = single(testutil::spread_pose(200, 200, 60));
    // Flip partner coincides with the joint: the target joint wins.
    ctx.target.keypoints[kRightWrist] = ctx.target.keypoints[kLeftWrist];
    const auto a = anchor_set(ctx, spec, kLeftWrist);
    const auto p = ctx.target.keypoints[kLeftWrist].coord();
    CHECK(nearest_anchor(a, {p.x + 4, p.y}) == 0);
    CHECK(classify_keypoint({p.x + 4, p.y, Visibility::labeled_visible}, ctx, spec, kLeftWrist,
                            TaxonomyThresholds{}) == ErrorType::good);
  }

  TEST_CASE("unlabeled truth is refused") {
    const auto spec = testutil::uniform_skeleton();
    auto ctx = single(testutil::spread_pose(200, 200, 60));
    ctx.target.keypoints[kNose].visibility = Visibility::not_labeled;
    CHECK_THROWS_AS(classify_keypoint({0, 0, Visibility::labeled_visible}, ctx, spec, kNose,
                                      TaxonomyThresholds{}),
                    Error);
  }

  TEST_CASE("threshold validation") {
    TaxonomyThresholds th;
    th.k_good = 0.4;
    CHECK_THROWS_AS(th.validate(), Error);
    th = {};
    th.k_miss = 0.0;
    CHECK_THROWS_AS(th.validate(), Error);
  }

  TEST_CASE("diagnose counts") {
    const auto spec = testutil::uniform_skeleton();
    std::vector<InstanceContext> truths{single(testutil::spread_pose(200, 200, 60))};
    std::vector<MatchedEstimate> est{{truths[0].target, 0}};
    auto r = diagnose(est, truths, spec, TaxonomyThresholds{});
    CHECK(r.overall[0] == 17);
    CHECK(r.total == 17);

    est[0].pose.keypoints[kLeftWrist].x += 8.0;
    est.push_back({truths[0].target, std::nullopt});
    r = diagnose(est, truths, spec, TaxonomyThresholds{});
    CHECK(r.overall[static_cast<int>(ErrorType::good)] == 16);
    CHECK(r.overall[static_cast<int>(ErrorType::jitter)] == 1);
    CHECK(r.per_joint[kLeftWrist][static_cast<int>(ErrorType::jitter)] == 1);
    CHECK(r.skipped == 1);
    CHECK(r.to_json().at("overall").at("counts").at("jitter") == 1);

    const auto none = diagnose({}, truths, spec, TaxonomyThresholds{});
    CHECK(none.total == 0);
    for (auto c : none.overall) CHECK(c == 0);
  }
}
