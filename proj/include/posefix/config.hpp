#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "posefix/core_model.hpp"
#include "posefix/evaluator.hpp"
#include "posefix/refiner.hpp"
#include "posefix/synthesis.hpp"

namespace posefix {

inline constexpr const char* kVersion = "0.3.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct CodecConfig {
  double sigma = 2.0;  // input Gaussian width, heatmap pixels
  int width = 24;
  int height = 32;

  void validate() const;
};

struct ToyConfig {
  int train_samples = 2000;
  int held_out_samples = 200;
  double neighbor_probability = 0.25;
};

struct AblationConfig {
  int train_samples = 600;
  int held_out_samples = 200;
  int epochs = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<LossMode> modes{LossMode::c2f, LossMode::c2c, LossMode::f2f,
                              LossMode::c2f_lh_only, LossMode::c2f_lc_only};
};

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel parse_log_level(std::string_view s);
const char* to_string(LogLevel level);

/// Everything a run depends on. Referenced files are read at load time, so
/// the in-memory config (and its hash) captures their contents.
struct GlobalConfig {
  SkeletonSpec skeleton = SkeletonSpec::coco();
  ErrorDistributionTable table;
  ErrorDistributionTable toy_table;
  SynthesisConfig synthesis;
  CodecConfig codec;
  RefinerConfig refiner;
  ToyConfig toy;
  AblationConfig ablation;
  EvalParams eval = EvalParams::coco();
  LogLevel log_level = LogLevel::info;

  /// Built-in COCO skeleton and shipped tables.
  static GlobalConfig defaults();
  /// Relative paths inside the document resolve against `base_dir`.
  static GlobalConfig from_json(const nlohmann::json& doc, const std::string& base_dir);
  static GlobalConfig load(const std::string& path);

  /// Canonical form with the skeleton and tables inlined.
  nlohmann::json to_json() const;
  std::uint64_t hash() const;
};

}  // namespace posefix
