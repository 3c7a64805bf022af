#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "posefix/codec.hpp"
#include "posefix/core_model.hpp"
#include "posefix/network.hpp"
#include "posefix/pipeline.hpp"
#include "posefix/toy.hpp"

namespace posefix {

enum class LossMode { c2f, c2c, f2f, c2f_lh_only, c2f_lc_only };

/// C2F, C2C, F2F, C2F_LH_only, C2F_LC_only.
const char* to_string(LossMode mode);
/// Also accepts the short forms C2F_LH and C2F_LC, case-insensitively.
LossMode parse_loss_mode(std::string_view name);

struct LrSchedule {
  double initial = 1e-3;
  std::vector<int> decay_epochs;  // empty: 2/3 and 5/6 of the run
  double factor = 0.1;

  std::vector<int> resolved_decay_epochs(int total_epochs) const;
  double rate(int epoch, int total_epochs) const;
};

enum class InitScheme { gaussian, he };

struct RefinerConfig {
  int input_width = 48;
  int input_height = 64;
  int heatmap_width = 24;
  int heatmap_height = 32;
  int narrow_width = 32;
  int wide_width = 64;
  int image_channels = kToyChannels;
  // Image channels that trade places under a horizontal mirror.
  std::vector<std::pair<int, int>> image_flip_pairs{kToyChannelFlipPair};

  LrSchedule lr;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 16;
  int epochs = 12;
  LossMode loss_mode = LossMode::c2f;
  std::uint64_t seed = 0;

  InitScheme init = InitScheme::gaussian;
  double init_sigma = 0.01;
  double coarse_sigma = 2.0;  // heatmap pixels; input pose maps and C2C targets
  double fine_sigma = 0.5;    // input pixels; F2F input pose maps
  bool flip_augmentation = false;
  int monitor_samples = 200;  // training samples scored per epoch when no held-out set

  int stride() const { return input_width / heatmap_width; }
  int upsample_count() const;
  /// Gaussian width of the input pose maps, in input pixels.
  double input_sigma() const;
  void validate() const;
  Architecture architecture(int joints) const;

  static RefinerConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Heatmap cell h covers crop pixels [stride*h - 0.5, stride*(h+1) - 0.5].
Coord crop_to_heatmap(const Coord& c, int stride);
Coord heatmap_to_crop(const Coord& h, int stride);

struct RefinerModel {
  RefinerConfig config;
  int joints = 0;
  ConvNet<float> net;

  /// Fresh network initialized from config.seed.
  static RefinerModel create(const RefinerConfig& config, int joints);
  /// All weights and biases zero.
  static RefinerModel zeros(const RefinerConfig& config, int joints);

  /// `<stem>.bin` (little-endian float32) plus the `<stem>.json` manifest;
  /// a trailing .json or .bin on `path` is ignored.
  void save(const std::string& path) const;
  static RefinerModel load(const std::string& path);
};

/// Image channels followed by one Gaussian map per joint, CHW.
template <class T>
std::vector<T> build_input(const RefinerConfig& config, int joints, const Image& image,
                           const Pose& input_pose);

struct RefinerTarget {
  std::vector<Heatmap> maps;   // one-hot (C2F modes) or Gaussian (C2C)
  std::vector<Coord> coords;   // heatmap coordinates
  std::vector<std::uint8_t> mask;
};

RefinerTarget build_target(const RefinerConfig& config, int joints, const Pose& gt_crop_pose);

struct LossEvaluation {
  double loss = 0.0;
  double heatmap_term = 0.0;
  double coord_term = 0.0;
  std::vector<double> grad_output;  // d(loss)/d(network output), CHW
};

/// Loss of one network output under the configured mode.
LossEvaluation evaluate_loss(const RefinerConfig& config, int joints, std::span<const double> output,
                             const RefinerTarget& target);

template <class T>
struct TrainingExample {
  std::vector<T> input;
  RefinerTarget target;
};

template <class T>
TrainingExample<T> make_example(const RefinerConfig& config, int joints, const Image& image,
                                const Pose& input_pose, const Pose& gt_pose);

/// Mean loss over the batch; the batch-mean gradient is accumulated into
/// `grad` (resized and zeroed first). Non-finite losses raise a diverged
/// error naming the sample index.
template <class T>
double batch_gradient(const ConvNet<T>& net, const RefinerConfig& config, int joints,
                      std::span<const TrainingExample<T>> batch, std::vector<T>& grad,
                      std::size_t first_index = 0);

/// Logit heatmaps for one crop.
std::vector<Heatmap> forward(const RefinerModel& model, const Image& crop, const Pose& input_pose);

/// Refines a pose given in crop coordinates; returns crop coordinates.
/// Unlabeled joints and the score pass through unchanged.
Pose refine_crop(const RefinerModel& model, const Image& crop, const Pose& input_pose,
                 const SkeletonSpec& spec, bool flip_tta);

/// Crop around the input pose (25% margin, aspect of the model input).
AffineTransform refinement_crop(const RefinerConfig& config, const Pose& input_pose);

/// Full-image refinement: crop, refine_crop, back-project. An empty image
/// feeds zero image channels. Poses without a usable box come back as is.
Pose refine(const RefinerModel& model, const Image& image, const Pose& input_pose,
            const SkeletonSpec& spec, bool flip_tta);

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
  double input_oks = 0.0;
  double refined_oks = 0.0;
};

struct TrainResult {
  RefinerModel model;
  std::vector<EpochMetrics> history;
};

/// Mean OKS of the corrupted inputs and of their refinements against gt.
std::pair<double, double> mean_oks(const RefinerModel& model, std::span<const ToySample> samples,
                                   const SkeletonSpec& spec, bool flip_tta = false);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Adam over shuffled mini-batches. Per-epoch metrics are scored on
/// `monitor` when given, else on the first monitor_samples training samples.
TrainResult train(std::span<const ToySample> dataset, const RefinerConfig& config,
                  const SkeletonSpec& spec, std::span<const ToySample> monitor = {},
                  const EpochCallback& on_epoch = {});

struct AblationRow {
  LossMode mode = LossMode::c2f;
  std::uint64_t seed = 0;
  double input_oks = 0.0;
  double refined_oks = 0.0;
};

struct AblationSummary {
  LossMode mode = LossMode::c2f;
  double mean_refined_oks = 0.0;
  double min_refined_oks = 0.0;
  double max_refined_oks = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;  // in the order modes were given
  double mean_input_oks = 0.0;

  const AblationSummary& of(LossMode mode) const;
  std::string csv() const;
};

/// Trains every mode once per seed under the same budget and scores the
/// held-out samples.
AblationResult run_ablation(std::span<const ToySample> train_set,
                            std::span<const ToySample> held_out, const SkeletonSpec& spec,
                            const RefinerConfig& base, std::span<const LossMode> modes,
                            std::span<const std::uint64_t> seeds,
                            const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace posefix
