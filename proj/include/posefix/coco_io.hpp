#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posefix/core_model.hpp"

namespace posefix {

struct CocoImage {
  std::int64_t id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  int category_id = 1;
  Pose pose;
  int num_keypoints = 0;
  double area = 0.0;
  std::array<double, 4> bbox{};  // x, y, w, h
  bool iscrowd = false;
  // No labeled keypoint or non-positive area; skipped by synthesis and
  // ignored by evaluation.
  bool degenerate = false;
};

struct CocoGroundTruth {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  nlohmann::json categories = nlohmann::json::array();

  const CocoImage* find_image(std::int64_t id) const;
  /// Index of the annotation with this id, if any.
  std::optional<std::size_t> find_annotation(std::int64_t id) const;

  /// Target = annotation, neighbors = every other annotation of the image,
  /// scale = sqrt(area).
  InstanceContext context(std::size_t annotation_index) const;
  /// True for annotations that synthesis and diagnosis consider.
  bool usable(std::size_t annotation_index) const;
};

CocoGroundTruth parse_coco_ground_truth(const nlohmann::json& doc, const SkeletonSpec& spec);
CocoGroundTruth load_coco_ground_truth(const std::string& path, const SkeletonSpec& spec);
nlohmann::json coco_ground_truth_json(const CocoGroundTruth& gt);
void save_coco_ground_truth(const std::string& path, const CocoGroundTruth& gt);

struct CocoResult {
  std::int64_t image_id = 0;
  int category_id = 1;
  Pose pose;
  double score = 0.0;
  // Optional extension field pairing a result with its source annotation.
  std::optional<std::int64_t> annotation_id;
};

std::vector<CocoResult> parse_coco_results(const nlohmann::json& doc, const SkeletonSpec& spec);
std::vector<CocoResult> load_coco_results(const std::string& path, const SkeletonSpec& spec);
nlohmann::json coco_results_json(const std::vector<CocoResult>& results);
void save_coco_results(const std::string& path, const std::vector<CocoResult>& results);

/// Flattens a pose to COCO [x, y, v] triplets.
std::vector<double> keypoint_triplets(const Pose& pose);

}  // namespace posefix
