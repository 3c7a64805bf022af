#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "posefix/core_model.hpp"

namespace posefix {

// Which joint's kappa sizes the inversion band around theta_{j'}.
enum class InversionRadius { target_joint, flipped_joint };

struct TaxonomyThresholds {
  double k_good = 0.85;
  double k_jitter = 0.5;
  double k_miss = 0.1;
  InversionRadius inversion_radius = InversionRadius::target_joint;

  void validate() const;
};

/// Radii d_j^k for one joint at the target person's scale.
struct ErrorBands {
  double good = 0.0;    // d^{k_good}
  double jitter = 0.0;  // d^{k_jitter}
  double miss = 0.0;    // d^{k_miss}
  // Jitter band around theta_{j'} used for inversions.
  double inversion_low = 0.0;
  double inversion = 0.0;

  static ErrorBands compute(const InstanceContext& ctx, const SkeletonSpec& spec, int joint,
                            const TaxonomyThresholds& thresholds);
};

/// Index of the anchor nearest to `point`; ties go to the earlier anchor.
std::size_t nearest_anchor(std::span<const Anchor> anchors, const Coord& point);

ErrorType classify_keypoint(const Keypoint& estimate, const InstanceContext& ctx,
                            const SkeletonSpec& spec, int joint,
                            const TaxonomyThresholds& thresholds);

using ErrorCounts = std::array<std::int64_t, kNumErrorTypes>;

struct ErrorFrequencyReport {
  std::vector<std::string> joint_names;
  std::vector<ErrorCounts> per_joint;
  ErrorCounts overall{};
  std::int64_t total = 0;
  std::int64_t skipped = 0;  // estimates without a matched instance

  void add(int joint, ErrorType type);
  void merge(const ErrorFrequencyReport& other);

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct MatchedEstimate {
  Pose pose;
  std::optional<std::size_t> instance;  // index into the truth contexts
};

ErrorFrequencyReport diagnose(std::span<const MatchedEstimate> estimates,
                              std::span<const InstanceContext> truths,
                              const SkeletonSpec& spec, const TaxonomyThresholds& thresholds);

}  // namespace posefix
