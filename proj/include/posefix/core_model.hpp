#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace posefix {

struct Coord {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Coord&, const Coord&) = default;
};

double distance(const Coord& a, const Coord& b);

enum class Visibility : int {
  not_labeled = 0,
  labeled_occluded = 1,
  labeled_visible = 2,
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  Visibility visibility = Visibility::not_labeled;

  // Occluded and visible keypoints are treated identically everywhere.
  bool labeled() const { return visibility != Visibility::not_labeled; }
  Coord coord() const { return {x, y}; }

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct Pose {
  std::vector<Keypoint> keypoints;
  std::optional<double> score;

  std::size_t size() const { return keypoints.size(); }
  int labeled_count() const;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Joint names, left/right pairing and the per-joint falloff constants used
/// by keypoint similarity.
class SkeletonSpec {
 public:
  SkeletonSpec(std::vector<std::string> joint_names,
               std::vector<std::pair<int, int>> flip_pairs,
               std::vector<double> kappa);

  /// The 17-joint COCO person skeleton. kappa_j = 2 * sigma_j of the COCO
  /// keypoint evaluation, so OKS here equals the COCO OKS.
  static SkeletonSpec coco();

  static SkeletonSpec from_json(const nlohmann::json& doc);
  static SkeletonSpec load(const std::string& path);
  nlohmann::json to_json() const;

  int num_joints() const { return static_cast<int>(joint_names_.size()); }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const std::vector<std::pair<int, int>>& flip_pairs() const { return flip_pairs_; }
  const std::vector<double>& kappa() const { return kappa_; }
  double kappa(int joint) const { return kappa_.at(static_cast<std::size_t>(joint)); }

  /// Left/right counterpart of a joint, if it has one.
  std::optional<int> flip_partner(int joint) const;
  /// Flip permutation: partner for paired joints, identity otherwise.
  int mirror_index(int joint) const;
  std::optional<int> index_of(std::string_view name) const;

  friend bool operator==(const SkeletonSpec&, const SkeletonSpec&) = default;

 private:
  std::vector<std::string> joint_names_;
  std::vector<std::pair<int, int>> flip_pairs_;
  std::vector<double> kappa_;
  std::vector<int> partner_;
};

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// A target person p with the other people p' of the same image.
struct InstanceContext {
  Pose target;
  std::vector<Pose> neighbors;
  double scale = 0.0;  // sqrt(instance area), pixels
  ImageSize image_size;

  void validate(const SkeletonSpec& spec) const;
};

enum class ErrorType : int { good = 0, jitter = 1, inversion = 2, swap = 3, miss = 4 };

inline constexpr std::size_t kNumErrorTypes = 5;
inline constexpr std::array<ErrorType, kNumErrorTypes> kAllErrorTypes = {
    ErrorType::good, ErrorType::jitter, ErrorType::inversion, ErrorType::swap,
    ErrorType::miss};

const char* to_string(ErrorType type);
ErrorType parse_error_type(std::string_view name);

enum class PersonRole { target, neighbor };
enum class JointRole { same, flipped };

struct Anchor {
  PersonRole person = PersonRole::target;
  JointRole joint = JointRole::same;
  int neighbor = -1;  // index into InstanceContext::neighbors, -1 for the target
  Coord position;
};

/// Labeled anchors for joint j, ordered (p,j), (p,j'), then (p',j), (p',j')
/// for each neighbor in input order. The order is the nearest-anchor
/// tie-break order.
std::vector<Anchor> anchor_set(const InstanceContext& ctx, const SkeletonSpec& spec,
                               int joint);

}  // namespace posefix
