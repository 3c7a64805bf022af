#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "posefix/core_model.hpp"
#include "posefix/taxonomy.hpp"

namespace posefix {

using Rng = std::mt19937_64;

/// Stable stream seed for (seed, label, index) so results do not depend on
/// the order in which instances are processed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

/// Probability vector indexed by ErrorType.
using ErrorDistribution = std::array<double, kNumErrorTypes>;

struct VisibleCountBin {
  int lo = 1;  // inclusive
  int hi = 1;  // inclusive
};

struct SynthesisConfig {
  TaxonomyThresholds thresholds;
  int max_rejection_attempts = 100;
  std::uint64_t rng_seed = 0;
  std::vector<VisibleCountBin> visible_count_bins = {{1, 5}, {6, 10}, {11, 17}};
  double overlap_iou_threshold = 0.1;

  void validate() const;
  /// Index of the bin containing `visible_count`, or -1.
  int bin_of(int visible_count) const;

  static SynthesisConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Per-joint error-type distribution keyed by (joint, visible-count bin,
/// overlap). A fallback row answers every key without an explicit row.
class ErrorDistributionTable {
 public:
  struct Key {
    int joint = 0;
    int visible_bin = 0;
    bool overlap = false;
    auto operator<=>(const Key&) const = default;
  };

  ErrorDistributionTable() = default;

  void set_row(const Key& key, const ErrorDistribution& dist);
  void set_fallback(const ErrorDistribution& dist);
  bool has_fallback() const { return fallback_.has_value(); }

  /// Row for the key, else the fallback row. Throws when neither exists.
  const ErrorDistribution& lookup(const Key& key) const;

  std::size_t num_rows() const { return rows_.size(); }

  /// Loads rows; joints may be given by name or index.
  static ErrorDistributionTable from_json(const nlohmann::json& doc, const SkeletonSpec& spec);
  static ErrorDistributionTable load(const std::string& path, const SkeletonSpec& spec);
  nlohmann::json to_json(const SkeletonSpec& spec) const;

  /// Built-in default, identical to config/error_table.json.
  static ErrorDistributionTable default_table(const SkeletonSpec& spec);

  /// Same distribution for every key.
  static ErrorDistributionTable uniform(const ErrorDistribution& dist);

  friend bool operator==(const ErrorDistributionTable&, const ErrorDistributionTable&) = default;

 private:
  std::map<Key, ErrorDistribution> rows_;
  std::optional<ErrorDistribution> fallback_;
};

void validate_distribution(const ErrorDistribution& dist, const std::string& where);

/// Categorical draw from a distribution.
ErrorType sample_from(const ErrorDistribution& dist, Rng& rng);

ErrorType sample_error_type(const ErrorDistributionTable& table, int joint, int visible_bin,
                            bool overlap, Rng& rng);

/// Which error types can be synthesized for joint j in this context.
std::array<bool, kNumErrorTypes> available_error_types(const InstanceContext& ctx,
                                                        const SkeletonSpec& spec, int joint);

/// Zeroes unavailable types and renormalizes. When nothing remains the
/// result is all-good.
ErrorDistribution redistribute(const ErrorDistribution& dist,
                               const std::array<bool, kNumErrorTypes>& available);

/// True when any neighbor's keypoint box overlaps the target's with IoU at
/// or above the threshold.
bool instance_overlaps(const InstanceContext& ctx, double iou_threshold);

struct SynthesizedKeypoint {
  Keypoint keypoint;
  ErrorType type = ErrorType::good;  // good when fell_back is set
  int attempts = 0;
  bool fell_back = false;
};

/// Rejection-samples one corrupted keypoint of the requested type. Throws
/// PreconditionError when the type has no anchor to work from.
SynthesizedKeypoint synthesize_keypoint(ErrorType type, const InstanceContext& ctx,
                                        const SkeletonSpec& spec, int joint,
                                        const SynthesisConfig& config, Rng& rng);

/// True when `point` satisfies the band and nearest-anchor constraints of
/// `type` for joint j.
bool satisfies_constraint(ErrorType type, const Coord& point, const InstanceContext& ctx,
                          const SkeletonSpec& spec, int joint,
                          const TaxonomyThresholds& thresholds);

struct SynthesizedPose {
  Pose pose;
  std::vector<std::optional<ErrorType>> labels;  // nullopt for unlabeled joints
  std::vector<int> attempts;
  int fallbacks = 0;
  bool overlap = false;
};

SynthesizedPose synthesize_pose(const InstanceContext& ctx, const SkeletonSpec& spec,
                                const ErrorDistributionTable& table,
                                const SynthesisConfig& config, Rng& rng);

}  // namespace posefix
