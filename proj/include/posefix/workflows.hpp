#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "posefix/coco_io.hpp"
#include "posefix/config.hpp"
#include "posefix/taxonomy.hpp"

namespace posefix {

using ProgressFn = std::function<void(const std::string&)>;

struct SynthesisRun {
  std::vector<CocoResult> results;  // one per usable annotation, score 1
  nlohmann::json labels;            // per-annotation labels and their frequency report
};

/// Corrupts every usable gt annotation with its own stream derived from
/// (seed, annotation id).
SynthesisRun synthesize_results(const CocoGroundTruth& gt, const GlobalConfig& config,
                                std::uint64_t seed);

/// Pairs detections with gt annotations: by annotation_id when present,
/// otherwise greedily per image in score order by OKS.
std::vector<MatchedEstimate> match_results(const CocoGroundTruth& gt,
                                           const std::vector<CocoResult>& dts,
                                           const SkeletonSpec& spec);

ErrorFrequencyReport diagnose_results(const CocoGroundTruth& gt,
                                      const std::vector<CocoResult>& dts,
                                      const GlobalConfig& config);

/// {"metrics", "table", "csv"} plus "before" and "delta_table" when a
/// baseline is given.
nlohmann::json evaluate_results(const CocoGroundTruth& gt, const std::vector<CocoResult>& dts,
                                const std::optional<std::vector<CocoResult>>& before,
                                const GlobalConfig& config);

/// Numerical self-check of the heatmap codec: round trips, spot values and
/// a finite-difference check of the loss gradient.
nlohmann::json codec_check(const GlobalConfig& config, std::uint64_t seed, int samples);

struct ToyData {
  std::vector<ToySample> train;
  std::vector<ToySample> held_out;
};

ToyData make_toy_data(const GlobalConfig& config, std::uint64_t seed, int train_samples,
                      int held_out_samples);

/// Trains on the configured toy set and saves params to `params_path`.
/// The report carries the per-epoch history and held-out OKS.
nlohmann::json train_toy(const GlobalConfig& config, std::uint64_t seed,
                         const std::string& params_path, const ProgressFn& progress = {});

struct RefineRun {
  std::vector<CocoResult> results;
  nlohmann::json report;
};

/// Refines every detection. `images_dir`, when set, holds `<image_id>`
/// tensor dumps; otherwise image channels are zero.
RefineRun refine_results(const RefinerModel& model, const CocoGroundTruth& gt,
                         const std::vector<CocoResult>& dts, const GlobalConfig& config,
                         const std::optional<std::string>& images_dir, bool flip_tta);

AblationResult ablate(const GlobalConfig& config, std::uint64_t seed,
                      const std::vector<LossMode>& modes, const ProgressFn& progress = {});

nlohmann::json ablation_json(const AblationResult& result);

}  // namespace posefix
