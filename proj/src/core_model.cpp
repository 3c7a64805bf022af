#include "posefix/core_model.hpp"

#include <cmath>
#include <string>

#include "json_util.hpp"
#include "posefix/error.hpp"

namespace posefix {

const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_argument: return "invalid_argument";
    case ErrorCategory::io: return "io";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::precondition: return "precondition";
    case ErrorCategory::diverged: return "diverged";
    case ErrorCategory::internal: return "internal";
  }
  return "unknown";
}

double distance(const Coord& a, const Coord& b) { return std::hypot(a.x - b.x, a.y - b.y); }

int Pose::labeled_count() const {
  int n = 0;
  for (const auto& kp : keypoints) n += kp.labeled() ? 1 : 0;
  return n;
}

SkeletonSpec::SkeletonSpec(std::vector<std::string> joint_names,
                           std::vector<std::pair<int, int>> flip_pairs,
                           std::vector<double> kappa)
    : joint_names_(std::move(joint_names)),
      flip_pairs_(std::move(flip_pairs)),
      kappa_(std::move(kappa)) {
  const int k = static_cast<int>(joint_names_.size());
  require(k > 0, "skeleton needs at least one joint");
  require(kappa_.size() == joint_names_.size(),
          "kappa has " + std::to_string(kappa_.size()) + " entries for " +
              std::to_string(k) + " joints");
  for (std::size_t j = 0; j < kappa_.size(); ++j) {
    require(std::isfinite(kappa_[j]) && kappa_[j] > 0.0,
            "kappa[" + std::to_string(j) + "] must be positive");
  }
  partner_.assign(static_cast<std::size_t>(k), -1);
  for (const auto& [a, b] : flip_pairs_) {
    require(a >= 0 && a < k && b >= 0 && b < k, "flip pair index out of range");
    require(a != b, "flip pair pairs a joint with itself");
    require(partner_[a] == -1 && partner_[b] == -1,
            "joint appears in more than one flip pair");
    partner_[a] = b;
    partner_[b] = a;
  }
}

SkeletonSpec SkeletonSpec::coco() {
  std::vector<std::string> names = {
      "nose",           "left_eye",       "right_eye",   "left_ear",    "right_ear",
      "left_shoulder",  "right_shoulder", "left_elbow",  "right_elbow", "left_wrist",
      "right_wrist",    "left_hip",       "right_hip",   "left_knee",   "right_knee",
      "left_ankle",     "right_ankle"};
  std::vector<std::pair<int, int>> pairs = {{1, 2},   {3, 4},   {5, 6},  {7, 8},
                                            {9, 10}, {11, 12}, {13, 14}, {15, 16}};
  std::vector<double> kappa = {0.052, 0.05,  0.05,  0.07,  0.07,  0.158, 0.158, 0.144, 0.144,
                               0.124, 0.124, 0.214, 0.214, 0.174, 0.174, 0.178, 0.178};
  return SkeletonSpec(std::move(names), std::move(pairs), std::move(kappa));
}

SkeletonSpec SkeletonSpec::from_json(const nlohmann::json& doc) {
  using detail::field;
  auto names = field<std::vector<std::string>>(doc, "joint_names", "skeleton");
  auto kappa = field<std::vector<double>>(doc, "kappa", "skeleton");
  std::vector<std::pair<int, int>> pairs;
  auto raw_pairs = field<std::vector<std::vector<nlohmann::json>>>(doc, "flip_pairs", "skeleton");
  for (std::size_t i = 0; i < raw_pairs.size(); ++i) {
    const auto& p = raw_pairs[i];
    const std::string where = "skeleton.flip_pairs[" + std::to_string(i) + "]";
    if (p.size() != 2) detail::schema_error(where, "expected a pair");
    auto resolve = [&](const nlohmann::json& v) -> int {
      if (v.is_number_integer()) return v.get<int>();
      if (v.is_string()) {
        for (std::size_t j = 0; j < names.size(); ++j)
          if (names[j] == v.get<std::string>()) return static_cast<int>(j);
      }
      detail::schema_error(where, "unknown joint " + v.dump());
    };
    pairs.emplace_back(resolve(p[0]), resolve(p[1]));
  }
  try {
    return SkeletonSpec(std::move(names), std::move(pairs), std::move(kappa));
  } catch (const Error& e) {
    detail::schema_error("skeleton", e.what());
  }
}

SkeletonSpec SkeletonSpec::load(const std::string& path) {
  return from_json(detail::read_json_file(path));
}

nlohmann::json SkeletonSpec::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : flip_pairs_) pairs.push_back({joint_names_[a], joint_names_[b]});
  return {{"joint_names", joint_names_}, {"flip_pairs", pairs}, {"kappa", kappa_}};
}

std::optional<int> SkeletonSpec::flip_partner(int joint) const {
  const int p = partner_.at(static_cast<std::size_t>(joint));
  if (p < 0) return std::nullopt;
  return p;
}

int SkeletonSpec::mirror_index(int joint) const {
  const int p = partner_.at(static_cast<std::size_t>(joint));
  return p < 0 ? joint : p;
}

std::optional<int> SkeletonSpec::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < joint_names_.size(); ++j)
    if (joint_names_[j] == name) return static_cast<int>(j);
  return std::nullopt;
}

void InstanceContext::validate(const SkeletonSpec& spec) const {
  const auto k = static_cast<std::size_t>(spec.num_joints());
  require(std::isfinite(scale) && scale > 0.0, "instance scale must be positive");
  require(target.size() == k, "target pose has " + std::to_string(target.size()) +
                                  " keypoints, skeleton has " + std::to_string(k));
  for (const auto& n : neighbors)
    require(n.size() == k, "neighbor pose length does not match the skeleton");
  for (const auto& kp : target.keypoints)
    require(!kp.labeled() || (std::isfinite(kp.x) && std::isfinite(kp.y)),
            "labeled keypoint with non-finite coordinates");
}

const char* to_string(ErrorType type) {
  switch (type) {
    case ErrorType::good: return "good";
    case ErrorType::jitter: return "jitter";
    case ErrorType::inversion: return "inversion";
    case ErrorType::swap: return "swap";
    case ErrorType::miss: return "miss";
  }
  return "unknown";
}

ErrorType parse_error_type(std::string_view name) {
  for (auto t : kAllErrorTypes)
    if (name == to_string(t)) return t;
  fail(ErrorCategory::schema, "unknown error type '" + std::string(name) + "'");
}

std::vector<Anchor> anchor_set(const InstanceContext& ctx, const SkeletonSpec& spec, int joint) {
  require(joint >= 0 && joint < spec.num_joints(), "joint index out of range");
  const auto partner = spec.flip_partner(joint);
  std::vector<Anchor> anchors;
  auto add = [&](const Pose& pose, PersonRole person, int neighbor) {
    const auto& same = pose.keypoints.at(static_cast<std::size_t>(joint));
    if (same.labeled()) anchors.push_back({person, JointRole::same, neighbor, same.coord()});
    if (partner) {
      const auto& flipped = pose.keypoints.at(static_cast<std::size_t>(*partner));
      if (flipped.labeled())
        anchors.push_back({person, JointRole::flipped, neighbor, flipped.coord()});
    }
  };
  add(ctx.target, PersonRole::target, -1);
  for (std::size_t n = 0; n < ctx.neighbors.size(); ++n)
    add(ctx.neighbors[n], PersonRole::neighbor, static_cast<int>(n));
  return anchors;
}

}  // namespace posefix
