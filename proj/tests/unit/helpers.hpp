#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "posefix/core_model.hpp"

namespace testutil {

inline posefix::Pose pose_of(std::initializer_list<std::array<double, 3>> triplets) {
  posefix::Pose p;
  for (const auto& t : triplets)
    p.keypoints.push_back({t[0], t[1], static_cast<posefix::Visibility>(static_cast<int>(t[2]))});
  return p;
}

// COCO joint names and flip pairs with kappa = 0.1 everywhere.
inline posefix::SkeletonSpec uniform_skeleton(double kappa = 0.1) {
  const auto coco = posefix::SkeletonSpec::coco();
  return posefix::SkeletonSpec(coco.joint_names(), coco.flip_pairs(),
                               std::vector<double>(coco.kappa().size(), kappa));
}

// All 17 joints labeled, spread on a loose grid around (cx, cy).
inline posefix::Pose spread_pose(double cx, double cy, double spacing) {
  posefix::Pose p;
  for (int j = 0; j < 17; ++j) {
    const double x = cx + spacing * ((j % 4) - 1.5);
    const double y = cy + spacing * ((j / 4) - 2.0);
    p.keypoints.push_back({x, y, posefix::Visibility::labeled_visible});
  }
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("posefix_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
