#include "posefix/taxonomy.hpp"

#include <sstream>

#include "posefix/error.hpp"
#include "posefix/similarity.hpp"

namespace posefix {

void TaxonomyThresholds::validate() const {
  require(k_good <= 1.0 && k_good > k_jitter && k_jitter > k_miss && k_miss > 0.0,
          "taxonomy thresholds must satisfy 1 >= k_good > k_jitter > k_miss > 0");
}

ErrorBands ErrorBands::compute(const InstanceContext& ctx, const SkeletonSpec& spec, int joint,
                               const TaxonomyThresholds& thresholds) {
  const double kappa = spec.kappa(joint);
  ErrorBands bands;
  bands.good = ks_radius(thresholds.k_good, ctx.scale, kappa);
  bands.jitter = ks_radius(thresholds.k_jitter, ctx.scale, kappa);
  bands.miss = ks_radius(thresholds.k_miss, ctx.scale, kappa);
  bands.inversion_low = bands.good;
  bands.inversion = bands.jitter;
  if (thresholds.inversion_radius == InversionRadius::flipped_joint) {
    if (auto partner = spec.flip_partner(joint)) {
      bands.inversion_low = ks_radius(thresholds.k_good, ctx.scale, spec.kappa(*partner));
      bands.inversion = ks_radius(thresholds.k_jitter, ctx.scale, spec.kappa(*partner));
    }
  }
  return bands;
}

std::size_t nearest_anchor(std::span<const Anchor> anchors, const Coord& point) {
  require(!anchors.empty(), "nearest_anchor: empty anchor set");
  std::size_t best = 0;
  double best_d = distance(anchors[0].position, point);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    const double d = distance(anchors[i].position, point);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

ErrorType classify_keypoint(const Keypoint& estimate, const InstanceContext& ctx,
                            const SkeletonSpec& spec, int joint,
                            const TaxonomyThresholds& thresholds) {
  require(joint >= 0 && joint < spec.num_joints(), "classify_keypoint: joint out of range");
  if (!ctx.target.keypoints[static_cast<std::size_t>(joint)].labeled())
    fail(ErrorCategory::precondition, "classify_keypoint: ground-truth joint is not labeled");
  const auto anchors = anchor_set(ctx, spec, joint);
  const auto bands = ErrorBands::compute(ctx, spec, joint, thresholds);
  const Coord p = estimate.coord();
  const Anchor& a = anchors[nearest_anchor(anchors, p)];
  const double d = distance(a.position, p);

  if (a.person == PersonRole::target && a.joint == JointRole::same) {
    if (d < bands.good) return ErrorType::good;
    if (d < bands.jitter) return ErrorType::jitter;
    return ErrorType::miss;
  }
  if (a.person == PersonRole::target) {
    return d < bands.inversion ? ErrorType::inversion : ErrorType::miss;
  }
  return d < bands.jitter ? ErrorType::swap : ErrorType::miss;
}

void ErrorFrequencyReport::add(int joint, ErrorType type) {
  const auto t = static_cast<std::size_t>(type);
  per_joint.at(static_cast<std::size_t>(joint))[t] += 1;
  overall[t] += 1;
  total += 1;
}

void ErrorFrequencyReport::merge(const ErrorFrequencyReport& other) {
  require(per_joint.size() == other.per_joint.size(), "merging reports of different skeletons");
  for (std::size_t j = 0; j < per_joint.size(); ++j)
    for (std::size_t t = 0; t < kNumErrorTypes; ++t) per_joint[j][t] += other.per_joint[j][t];
  for (std::size_t t = 0; t < kNumErrorTypes; ++t) overall[t] += other.overall[t];
  total += other.total;
  skipped += other.skipped;
}

namespace {

nlohmann::json counts_json(const ErrorCounts& counts) {
  nlohmann::json row = nlohmann::json::object();
  std::int64_t sum = 0;
  for (auto t : kAllErrorTypes) {
    row[to_string(t)] = counts[static_cast<std::size_t>(t)];
    sum += counts[static_cast<std::size_t>(t)];
  }
  nlohmann::json freq = nlohmann::json::object();
  for (auto t : kAllErrorTypes) {
    const auto c = counts[static_cast<std::size_t>(t)];
    freq[to_string(t)] = sum > 0 ? static_cast<double>(c) / static_cast<double>(sum) : 0.0;
  }
  return {{"counts", row}, {"frequency", freq}, {"total", sum}};
}

}  // namespace

nlohmann::json ErrorFrequencyReport::to_json() const {
  nlohmann::json joints = nlohmann::json::array();
  for (std::size_t j = 0; j < per_joint.size(); ++j) {
    auto row = counts_json(per_joint[j]);
    row["joint"] = joint_names[j];
    joints.push_back(std::move(row));
  }
  nlohmann::json types = nlohmann::json::array();
  for (auto t : kAllErrorTypes) types.push_back(to_string(t));
  return {{"error_types", types},
          {"per_joint", joints},
          {"overall", counts_json(overall)},
          {"total", total},
          {"skipped", skipped}};
}

std::string ErrorFrequencyReport::to_csv() const {
  std::ostringstream out;
  out << "joint";
  for (auto t : kAllErrorTypes) out << ',' << to_string(t);
  out << ",total\n";
  auto row = [&](const std::string& name, const ErrorCounts& c) {
    std::int64_t sum = 0;
    out << name;
    for (auto v : c) {
      out << ',' << v;
      sum += v;
    }
    out << ',' << sum << '\n';
  };
  for (std::size_t j = 0; j < per_joint.size(); ++j) row(joint_names[j], per_joint[j]);
  row("overall", overall);
  return out.str();
}

ErrorFrequencyReport diagnose(std::span<const MatchedEstimate> estimates,
                              std::span<const InstanceContext> truths,
                              const SkeletonSpec& spec, const TaxonomyThresholds& thresholds) {
  thresholds.validate();
  ErrorFrequencyReport report;
  report.joint_names = spec.joint_names();
  report.per_joint.assign(static_cast<std::size_t>(spec.num_joints()), ErrorCounts{});
  for (const auto& est : estimates) {
    if (!est.instance || *est.instance >= truths.size()) {
      ++report.skipped;
      continue;
    }
    const auto& ctx = truths[*est.instance];
    require(est.pose.size() == ctx.target.size(), "diagnose: estimate length mismatch");
    for (int j = 0; j < spec.num_joints(); ++j) {
      if (!ctx.target.keypoints[static_cast<std::size_t>(j)].labeled()) continue;
      report.add(j, classify_keypoint(est.pose.keypoints[static_cast<std::size_t>(j)], ctx, spec,
                                      j, thresholds));
    }
  }
  return report;
}

}  // namespace posefix
