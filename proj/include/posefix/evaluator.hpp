#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posefix/coco_io.hpp"
#include "posefix/core_model.hpp"

namespace posefix {

struct AreaRange {
  std::string name;
  double lo = 0.0;
  double hi = 1e10;
};

struct EvalParams {
  std::vector<double> oks_thresholds;   // strictly increasing in (0, 1]
  std::vector<double> recall_thresholds;
  std::vector<AreaRange> area_ranges;   // first entry is "all"
  int max_dets = 20;

  /// COCO keypoint defaults: 0.50:0.05:0.95, 101 recall points,
  /// all / medium [32^2, 96^2] / large [96^2, inf), 20 detections.
  static EvalParams coco();
  void validate() const;

  static EvalParams from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Matching outcome for one image and one area range, in the layout of the
/// COCO evaluator: rows are OKS thresholds.
struct ImageEvaluation {
  std::int64_t image_id = 0;
  std::vector<double> dt_scores;                     // sorted descending, <= max_dets
  std::vector<std::vector<std::int64_t>> dt_matches;  // [t][d] matched gt id or -1
  std::vector<std::vector<std::uint8_t>> dt_ignore;   // [t][d]
  std::vector<std::vector<std::int64_t>> gt_matches;  // [t][g] matched dt index or -1
  std::vector<std::uint8_t> gt_ignore;               // [g], gts sorted non-ignored first
  std::vector<std::int64_t> gt_ids;
  std::vector<std::vector<double>> oks;              // [d][g] similarity used for matching
};

/// OKS used for matching: plain OKS when the gt has labeled joints, the
/// COCO box-distance fallback otherwise.
double matching_oks(const Pose& dt, const CocoAnnotation& gt, const SkeletonSpec& spec);

/// Greedy score-ordered matching of one image's detections at every
/// threshold for one area range.
ImageEvaluation evaluate_image(std::int64_t image_id, const std::vector<const CocoAnnotation*>& gts,
                               const std::vector<const CocoResult*>& dts, const AreaRange& range,
                               const EvalParams& params, const SkeletonSpec& spec);

/// Per area range (outer), per image (inner) evaluations.
std::vector<std::vector<ImageEvaluation>> match_and_score(const CocoGroundTruth& gt,
                                                          const std::vector<CocoResult>& dts,
                                                          const EvalParams& params,
                                                          const SkeletonSpec& spec);

struct Metrics {
  // nullopt marks an undefined metric (no ground truth in range).
  std::optional<double> ap, ap50, ap75, ap_medium, ap_large;
  std::optional<double> ar, ar50, ar75, ar_medium, ar_large;

  nlohmann::json to_json() const;
  static std::vector<std::string> names();
  std::vector<std::optional<double>> values() const;
};

struct AccumulatedRange {
  // [t][r] interpolated precision, -1 when undefined.
  std::vector<std::vector<double>> precision;
  // [t] recall, -1 when undefined.
  std::vector<double> recall;
};

AccumulatedRange accumulate(const std::vector<ImageEvaluation>& images, const EvalParams& params);

Metrics average_precision(const std::vector<std::vector<ImageEvaluation>>& evals,
                          const EvalParams& params);

/// Convenience: match_and_score followed by average_precision.
Metrics evaluate(const CocoGroundTruth& gt, const std::vector<CocoResult>& dts,
                 const EvalParams& params, const SkeletonSpec& spec);

std::string metrics_table(const Metrics& m);
std::string metrics_delta_table(const Metrics& before, const Metrics& after);
std::string metrics_csv(const Metrics& m, const std::optional<Metrics>& before = std::nullopt);

}  // namespace posefix
