#include "posefix/coco_io.hpp"

#include <cmath>
#include <string>

#include "json_util.hpp"
#include "posefix/error.hpp"

namespace posefix {

namespace {

Pose parse_triplets(const nlohmann::json& arr, std::size_t k, const std::string& where) {
  if (!arr.is_array()) detail::schema_error(where, "keypoints must be an array");
  if (arr.size() != 3 * k)
    detail::schema_error(where, "expected " + std::to_string(3 * k) + " keypoint values, got " +
                                    std::to_string(arr.size()));
  Pose pose;
  pose.keypoints.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& x = arr[3 * j];
    const auto& y = arr[3 * j + 1];
    const auto& v = arr[3 * j + 2];
    if (!x.is_number() || !y.is_number() || !v.is_number())
      detail::schema_error(where + "[" + std::to_string(3 * j) + "]", "expected numbers");
    const double vd = v.get<double>();
    Keypoint kp{x.get<double>(), y.get<double>(), Visibility::not_labeled};
    if (vd == 1.0)
      kp.visibility = Visibility::labeled_occluded;
    else if (vd == 2.0)
      kp.visibility = Visibility::labeled_visible;
    else if (vd != 0.0)
      detail::schema_error(where + "[" + std::to_string(3 * j + 2) + "]",
                           "visibility must be 0, 1 or 2");
    if (kp.labeled() && !(std::isfinite(kp.x) && std::isfinite(kp.y)))
      detail::schema_error(where, "non-finite keypoint coordinate");
    pose.keypoints[j] = kp;
  }
  return pose;
}

nlohmann::json triplets_json(const Pose& pose) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& kp : pose.keypoints) {
    arr.push_back(kp.x);
    arr.push_back(kp.y);
    arr.push_back(static_cast<int>(kp.visibility));
  }
  return arr;
}

}  // namespace

std::vector<double> keypoint_triplets(const Pose& pose) {
  std::vector<double> out;
  out.reserve(pose.size() * 3);
  for (const auto& kp : pose.keypoints) {
    out.push_back(kp.x);
    out.push_back(kp.y);
    out.push_back(static_cast<double>(static_cast<int>(kp.visibility)));
  }
  return out;
}

const CocoImage* CocoGroundTruth::find_image(std::int64_t id) const {
  for (const auto& img : images)
    if (img.id == id) return &img;
  return nullptr;
}

std::optional<std::size_t> CocoGroundTruth::find_annotation(std::int64_t id) const {
  for (std::size_t i = 0; i < annotations.size(); ++i)
    if (annotations[i].id == id) return i;
  return std::nullopt;
}

bool CocoGroundTruth::usable(std::size_t annotation_index) const {
  const auto& a = annotations.at(annotation_index);
  return !a.iscrowd && !a.degenerate;
}

InstanceContext CocoGroundTruth::context(std::size_t annotation_index) const {
  const auto& a = annotations.at(annotation_index);
  InstanceContext ctx;
  ctx.target = a.pose;
  ctx.scale = a.area > 0.0 ? std::sqrt(a.area) : 0.0;
  if (const auto* img = find_image(a.image_id)) ctx.image_size = {img->width, img->height};
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (i == annotation_index || annotations[i].image_id != a.image_id) continue;
    ctx.neighbors.push_back(annotations[i].pose);
  }
  return ctx;
}

CocoGroundTruth parse_coco_ground_truth(const nlohmann::json& doc, const SkeletonSpec& spec) {
  using detail::field;
  using detail::field_or;
  if (!doc.is_object()) detail::schema_error("$", "ground truth must be a JSON object");
  CocoGroundTruth gt;
  const auto k = static_cast<std::size_t>(spec.num_joints());

  if (!doc.contains("images") || !doc.at("images").is_array())
    detail::schema_error("$.images", "missing or not an array");
  const auto& images = doc.at("images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "$.images[" + std::to_string(i) + "]";
    CocoImage img;
    img.id = field<std::int64_t>(images[i], "id", where);
    img.width = field_or(images[i], "width", 0, where);
    img.height = field_or(images[i], "height", 0, where);
    img.file_name = field_or<std::string>(images[i], "file_name", "", where);
    gt.images.push_back(std::move(img));
  }

  if (!doc.contains("annotations") || !doc.at("annotations").is_array())
    detail::schema_error("$.annotations", "missing or not an array");
  const auto& anns = doc.at("annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    std::string where = "$.annotations[" + std::to_string(i) + "]";
    CocoAnnotation ann;
    ann.id = field<std::int64_t>(a, "id", where);
    where += " (annotation id " + std::to_string(ann.id) + ")";
    ann.image_id = field<std::int64_t>(a, "image_id", where);
    ann.category_id = field_or(a, "category_id", 1, where);
    if (!a.contains("keypoints")) detail::schema_error(where + ".keypoints", "missing");
    ann.pose = parse_triplets(a.at("keypoints"), k, where + ".keypoints");
    ann.num_keypoints = field_or(a, "num_keypoints", ann.pose.labeled_count(), where);
    ann.iscrowd = field_or(a, "iscrowd", 0, where) != 0;
    ann.area = field_or(a, "area", 0.0, where);
    if (a.contains("bbox")) {
      const auto& b = a.at("bbox");
      if (!b.is_array() || b.size() != 4) detail::schema_error(where + ".bbox", "expected 4 numbers");
      for (std::size_t c = 0; c < 4; ++c) ann.bbox[c] = b[c].get<double>();
    }
    ann.degenerate = ann.num_keypoints == 0 || ann.pose.labeled_count() == 0 || !(ann.area > 0.0);
    gt.annotations.push_back(std::move(ann));
  }
  if (doc.contains("categories")) gt.categories = doc.at("categories");
  return gt;
}

CocoGroundTruth load_coco_ground_truth(const std::string& path, const SkeletonSpec& spec) {
  return parse_coco_ground_truth(detail::read_json_file(path), spec);
}

nlohmann::json coco_ground_truth_json(const CocoGroundTruth& gt) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : gt.images) {
    nlohmann::json j = {{"id", img.id}, {"width", img.width}, {"height", img.height}};
    if (!img.file_name.empty()) j["file_name"] = img.file_name;
    images.push_back(std::move(j));
  }
  nlohmann::json anns = nlohmann::json::array();
  for (const auto& a : gt.annotations) {
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", a.category_id},
                    {"keypoints", triplets_json(a.pose)},
                    {"num_keypoints", a.num_keypoints},
                    {"area", a.area},
                    {"bbox", a.bbox},
                    {"iscrowd", a.iscrowd ? 1 : 0}});
  }
  return {{"images", images}, {"annotations", anns}, {"categories", gt.categories}};
}

void save_coco_ground_truth(const std::string& path, const CocoGroundTruth& gt) {
  detail::write_json_file(path, coco_ground_truth_json(gt));
}

std::vector<CocoResult> parse_coco_results(const nlohmann::json& doc, const SkeletonSpec& spec) {
  using detail::field;
  using detail::field_or;
  if (!doc.is_array()) detail::schema_error("$", "results must be a JSON array");
  const auto k = static_cast<std::size_t>(spec.num_joints());
  std::vector<CocoResult> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "$[" + std::to_string(i) + "]";
    const auto& r = doc[i];
    CocoResult res;
    res.image_id = field<std::int64_t>(r, "image_id", where);
    res.category_id = field_or(r, "category_id", 1, where);
    res.score = field<double>(r, "score", where);
    if (!r.contains("keypoints")) detail::schema_error(where + ".keypoints", "missing");
    res.pose = parse_triplets(r.at("keypoints"), k, where + ".keypoints");
    res.pose.score = res.score;
    if (r.contains("annotation_id") && !r.at("annotation_id").is_null())
      res.annotation_id = field<std::int64_t>(r, "annotation_id", where);
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<CocoResult> load_coco_results(const std::string& path, const SkeletonSpec& spec) {
  return parse_coco_results(detail::read_json_file(path), spec);
}

nlohmann::json coco_results_json(const std::vector<CocoResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j = {{"image_id", r.image_id},
                        {"category_id", r.category_id},
                        {"keypoints", triplets_json(r.pose)},
                        {"score", r.score}};
    if (r.annotation_id) j["annotation_id"] = *r.annotation_id;
    arr.push_back(std::move(j));
  }
  return arr;
}

void save_coco_results(const std::string& path, const std::vector<CocoResult>& results) {
  detail::write_json_file(path, coco_results_json(results));
}

}  // namespace posefix
