#include "posefix/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "embedded_config.hpp"
#include "json_util.hpp"
#include "posefix/error.hpp"

namespace posefix {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(Rng& rng, double lo, double hi) {
  const double u = std::generate_canonical<double, 53>(rng);
  return lo + (hi - lo) * u;
}

ErrorDistribution parse_distribution(const nlohmann::json& doc, const std::string& where) {
  ErrorDistribution dist{};
  if (!doc.is_object()) detail::schema_error(where, "expected an object of probabilities");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    ErrorType t;
    try {
      t = parse_error_type(it.key());
    } catch (const Error&) {
      detail::schema_error(where + "." + it.key(), "unknown error type");
    }
    if (!it->is_number()) detail::schema_error(where + "." + it.key(), "expected a number");
    dist[static_cast<std::size_t>(t)] = it->get<double>();
  }
  try {
    validate_distribution(dist, where);
  } catch (const Error& e) {
    detail::schema_error(where, e.what());
  }
  return dist;
}

nlohmann::json distribution_json(const ErrorDistribution& dist) {
  nlohmann::json out = nlohmann::json::object();
  for (auto t : kAllErrorTypes) out[to_string(t)] = dist[static_cast<std::size_t>(t)];
  return out;
}

struct KeypointBox {
  double x0, y0, x1, y1;
  bool valid;
};

KeypointBox keypoint_box(const Pose& pose) {
  KeypointBox b{0, 0, 0, 0, false};
  for (const auto& kp : pose.keypoints) {
    if (!kp.labeled()) continue;
    if (!b.valid) {
      b = {kp.x, kp.y, kp.x, kp.y, true};
    } else {
      b.x0 = std::min(b.x0, kp.x);
      b.y0 = std::min(b.y0, kp.y);
      b.x1 = std::max(b.x1, kp.x);
      b.y1 = std::max(b.y1, kp.y);
    }
  }
  return b;
}

double iou(const KeypointBox& a, const KeypointBox& b) {
  if (!a.valid || !b.valid) return 0.0;
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

const Anchor* find_anchor(const std::vector<Anchor>& anchors, PersonRole person, JointRole joint) {
  for (const auto& a : anchors)
    if (a.person == person && a.joint == joint) return &a;
  return nullptr;
}

// Anchor constraint plus the band measured from `center`.
bool accept(ErrorType type, const Coord& p, const Anchor& center, const std::vector<Anchor>& anchors,
            const ErrorBands& bands) {
  const double dc = distance(p, center.position);
  switch (type) {
    case ErrorType::good:
    case ErrorType::jitter:
    case ErrorType::inversion: {
      const double lo = type == ErrorType::good    ? 0.0
                        : type == ErrorType::jitter ? bands.good
                                                    : bands.inversion_low;
      const double hi = type == ErrorType::good    ? bands.good
                        : type == ErrorType::jitter ? bands.jitter
                                                    : bands.inversion;
      if (!(dc >= lo && dc < hi)) return false;
      for (const auto& a : anchors) {
        if (&a == &center) continue;
        if (!(dc < distance(p, a.position))) return false;
      }
      return true;
    }
    case ErrorType::swap: {
      if (!(dc >= bands.good && dc < bands.jitter)) return false;
      double nearest_own = std::numeric_limits<double>::infinity();
      double nearest_other = std::numeric_limits<double>::infinity();
      for (const auto& a : anchors) {
        const double d = distance(p, a.position);
        if (a.person == PersonRole::target)
          nearest_own = std::min(nearest_own, d);
        else
          nearest_other = std::min(nearest_other, d);
      }
      return nearest_other < nearest_own;
    }
    case ErrorType::miss: {
      if (!(dc >= bands.jitter && dc < bands.miss)) return false;
      for (const auto& a : anchors) {
        const double d = distance(p, a.position);
        const bool inverted_own = a.person == PersonRole::target && a.joint == JointRole::flipped;
        if (d < bands.jitter) return false;
        if (inverted_own && d < bands.inversion) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

void SynthesisConfig::validate() const {
  thresholds.validate();
  require(max_rejection_attempts >= 1, "max_rejection_attempts must be >= 1");
  require(overlap_iou_threshold >= 0.0 && overlap_iou_threshold <= 1.0,
          "overlap_iou_threshold must lie in [0, 1]");
  for (const auto& b : visible_count_bins) require(b.lo <= b.hi, "empty visible-count bin");
}

int SynthesisConfig::bin_of(int visible_count) const {
  for (std::size_t i = 0; i < visible_count_bins.size(); ++i)
    if (visible_count >= visible_count_bins[i].lo && visible_count <= visible_count_bins[i].hi)
      return static_cast<int>(i);
  return -1;
}

SynthesisConfig SynthesisConfig::from_json(const nlohmann::json& doc) {
  using detail::field_or;
  SynthesisConfig c;
  const std::string where = "synthesis";
  c.thresholds.k_good = field_or(doc, "k_good", c.thresholds.k_good, where);
  c.thresholds.k_jitter = field_or(doc, "k_jitter", c.thresholds.k_jitter, where);
  c.thresholds.k_miss = field_or(doc, "k_miss", c.thresholds.k_miss, where);
  const auto inv = field_or<std::string>(doc, "inversion_radius", "target_joint", where);
  if (inv == "target_joint")
    c.thresholds.inversion_radius = InversionRadius::target_joint;
  else if (inv == "flipped_joint")
    c.thresholds.inversion_radius = InversionRadius::flipped_joint;
  else
    detail::schema_error(where + ".inversion_radius", "expected target_joint or flipped_joint");
  c.max_rejection_attempts = field_or(doc, "max_rejection_attempts", c.max_rejection_attempts, where);
  c.rng_seed = field_or(doc, "seed", c.rng_seed, where);
  c.overlap_iou_threshold = field_or(doc, "overlap_iou_threshold", c.overlap_iou_threshold, where);
  if (doc.contains("visible_count_bins")) {
    c.visible_count_bins.clear();
    for (const auto& b : doc.at("visible_count_bins")) {
      if (!b.is_array() || b.size() != 2)
        detail::schema_error(where + ".visible_count_bins", "expected [lo, hi] pairs");
      c.visible_count_bins.push_back({b[0].get<int>(), b[1].get<int>()});
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    detail::schema_error(where, e.what());
  }
  return c;
}

nlohmann::json SynthesisConfig::to_json() const {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : visible_count_bins) bins.push_back({b.lo, b.hi});
  return {{"k_good", thresholds.k_good},
          {"k_jitter", thresholds.k_jitter},
          {"k_miss", thresholds.k_miss},
          {"inversion_radius", thresholds.inversion_radius == InversionRadius::target_joint
                                   ? "target_joint"
                                   : "flipped_joint"},
          {"max_rejection_attempts", max_rejection_attempts},
          {"seed", rng_seed},
          {"visible_count_bins", bins},
          {"overlap_iou_threshold", overlap_iou_threshold}};
}

void validate_distribution(const ErrorDistribution& dist, const std::string& where) {
  double sum = 0.0;
  for (double p : dist) {
    require(std::isfinite(p) && p >= 0.0, where + ": probabilities must be non-negative");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, where + ": probabilities sum to " + std::to_string(sum));
}

void ErrorDistributionTable::set_row(const Key& key, const ErrorDistribution& dist) {
  validate_distribution(dist, "error table row");
  rows_[key] = dist;
}

void ErrorDistributionTable::set_fallback(const ErrorDistribution& dist) {
  validate_distribution(dist, "error table fallback");
  fallback_ = dist;
}

const ErrorDistribution& ErrorDistributionTable::lookup(const Key& key) const {
  auto it = rows_.find(key);
  if (it != rows_.end()) return it->second;
  if (fallback_) return *fallback_;
  fail(ErrorCategory::invalid_argument,
       "error table has no row for joint " + std::to_string(key.joint) + ", bin " +
           std::to_string(key.visible_bin) + " and no fallback row");
}

ErrorDistributionTable ErrorDistributionTable::from_json(const nlohmann::json& doc,
                                                         const SkeletonSpec& spec) {
  ErrorDistributionTable table;
  if (!doc.is_object()) detail::schema_error("table", "expected an object");
  if (!doc.contains("fallback")) detail::schema_error("table.fallback", "mandatory row missing");
  table.fallback_ = parse_distribution(doc.at("fallback"), "table.fallback");
  if (doc.contains("rows")) {
    const auto& rows = doc.at("rows");
    if (!rows.is_array()) detail::schema_error("table.rows", "expected an array");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "table.rows[" + std::to_string(i) + "]";
      const auto& r = rows[i];
      if (!r.is_object() || !r.contains("joint"))
        detail::schema_error(where + ".joint", "missing");
      Key key;
      const auto& jv = r.at("joint");
      if (jv.is_string()) {
        auto idx = spec.index_of(jv.get<std::string>());
        if (!idx) detail::schema_error(where + ".joint", "unknown joint " + jv.dump());
        key.joint = *idx;
      } else if (jv.is_number_integer()) {
        key.joint = jv.get<int>();
        if (key.joint < 0 || key.joint >= spec.num_joints())
          detail::schema_error(where + ".joint", "index out of range");
      } else {
        detail::schema_error(where + ".joint", "expected a name or index");
      }
      key.visible_bin = detail::field<int>(r, "visible_bin", where);
      key.overlap = detail::field<bool>(r, "overlap", where);
      if (!r.contains("p")) detail::schema_error(where + ".p", "missing");
      table.rows_[key] = parse_distribution(r.at("p"), where + ".p");
    }
  }
  return table;
}

ErrorDistributionTable ErrorDistributionTable::load(const std::string& path,
                                                    const SkeletonSpec& spec) {
  return from_json(detail::read_json_file(path), spec);
}

nlohmann::json ErrorDistributionTable::to_json(const SkeletonSpec& spec) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, dist] : rows_) {
    rows.push_back({{"joint", spec.joint_names().at(static_cast<std::size_t>(key.joint))},
                    {"visible_bin", key.visible_bin},
                    {"overlap", key.overlap},
                    {"p", distribution_json(dist)}});
  }
  nlohmann::json types = nlohmann::json::array();
  for (auto t : kAllErrorTypes) types.push_back(to_string(t));
  nlohmann::json out = {{"error_types", types}, {"rows", rows}};
  if (fallback_) out["fallback"] = distribution_json(*fallback_);
  return out;
}

ErrorDistributionTable ErrorDistributionTable::default_table(const SkeletonSpec& spec) {
  return from_json(nlohmann::json::parse(detail::kDefaultErrorTable), spec);
}

ErrorDistributionTable ErrorDistributionTable::uniform(const ErrorDistribution& dist) {
  ErrorDistributionTable t;
  t.set_fallback(dist);
  return t;
}

ErrorType sample_from(const ErrorDistribution& dist, Rng& rng) {
  double total = 0.0;
  for (double p : dist) total += p;
  require(total > 0.0, "cannot sample from an all-zero distribution");
  const double u = uniform(rng, 0.0, total);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t t = 0; t < kNumErrorTypes; ++t) {
    if (dist[t] <= 0.0) continue;
    acc += dist[t];
    last = t;
    if (u < acc) return static_cast<ErrorType>(t);
  }
  return static_cast<ErrorType>(last);
}

ErrorType sample_error_type(const ErrorDistributionTable& table, int joint, int visible_bin,
                            bool overlap, Rng& rng) {
  return sample_from(table.lookup({joint, visible_bin, overlap}), rng);
}

std::array<bool, kNumErrorTypes> available_error_types(const InstanceContext& ctx,
                                                        const SkeletonSpec& spec, int joint) {
  std::array<bool, kNumErrorTypes> ok{};
  ok[static_cast<std::size_t>(ErrorType::good)] = true;
  ok[static_cast<std::size_t>(ErrorType::jitter)] = true;
  ok[static_cast<std::size_t>(ErrorType::miss)] = true;
  for (const auto& a : anchor_set(ctx, spec, joint)) {
    if (a.person == PersonRole::target && a.joint == JointRole::flipped)
      ok[static_cast<std::size_t>(ErrorType::inversion)] = true;
    if (a.person == PersonRole::neighbor) ok[static_cast<std::size_t>(ErrorType::swap)] = true;
  }
  return ok;
}

ErrorDistribution redistribute(const ErrorDistribution& dist,
                               const std::array<bool, kNumErrorTypes>& available) {
  ErrorDistribution out{};
  double kept = 0.0;
  for (std::size_t t = 0; t < kNumErrorTypes; ++t) {
    if (available[t]) {
      out[t] = dist[t];
      kept += dist[t];
    }
  }
  if (kept <= 0.0) {
    out = {};
    out[static_cast<std::size_t>(ErrorType::good)] = 1.0;
    return out;
  }
  for (double& p : out) p /= kept;
  return out;
}

bool instance_overlaps(const InstanceContext& ctx, double iou_threshold) {
  const auto target = keypoint_box(ctx.target);
  for (const auto& n : ctx.neighbors) {
    const auto box = keypoint_box(n);
    if (!target.valid || !box.valid) continue;
    if (iou(target, box) >= iou_threshold && iou(target, box) > 0.0) return true;
  }
  return false;
}

bool satisfies_constraint(ErrorType type, const Coord& point, const InstanceContext& ctx,
                          const SkeletonSpec& spec, int joint,
                          const TaxonomyThresholds& thresholds) {
  const auto anchors = anchor_set(ctx, spec, joint);
  const auto bands = ErrorBands::compute(ctx, spec, joint, thresholds);
  switch (type) {
    case ErrorType::good:
    case ErrorType::jitter: {
      const Anchor* own = find_anchor(anchors, PersonRole::target, JointRole::same);
      return own && accept(type, point, *own, anchors, bands);
    }
    case ErrorType::inversion: {
      const Anchor* inv = find_anchor(anchors, PersonRole::target, JointRole::flipped);
      return inv && accept(type, point, *inv, anchors, bands);
    }
    case ErrorType::swap: {
      // The nearest anchor must belong to a neighbor and lie inside the jitter band.
      double nearest_own = std::numeric_limits<double>::infinity();
      double nearest_other = std::numeric_limits<double>::infinity();
      for (const auto& a : anchors) {
        const double d = distance(point, a.position);
        if (a.person == PersonRole::target)
          nearest_own = std::min(nearest_own, d);
        else
          nearest_other = std::min(nearest_other, d);
      }
      return nearest_other < nearest_own && nearest_other < bands.jitter;
    }
    case ErrorType::miss: {
      bool within_reach = false;
      for (const auto& a : anchors) {
        const double d = distance(point, a.position);
        if (d < bands.jitter) return false;
        if (a.person == PersonRole::target && a.joint == JointRole::flipped && d < bands.inversion)
          return false;
        within_reach = within_reach || d < bands.miss;
      }
      return within_reach;
    }
  }
  return false;
}

SynthesizedKeypoint synthesize_keypoint(ErrorType type, const InstanceContext& ctx,
                                        const SkeletonSpec& spec, int joint,
                                        const SynthesisConfig& config, Rng& rng) {
  require(joint >= 0 && joint < spec.num_joints(), "synthesize_keypoint: joint out of range");
  const auto& truth = ctx.target.keypoints.at(static_cast<std::size_t>(joint));
  if (!truth.labeled())
    throw PreconditionError("synthesize_keypoint: ground-truth joint is not labeled");
  const auto anchors = anchor_set(ctx, spec, joint);
  const auto bands = ErrorBands::compute(ctx, spec, joint, config.thresholds);

  std::vector<const Anchor*> centers;
  double lo = 0.0;
  double hi = 0.0;
  switch (type) {
    case ErrorType::good:
      centers.push_back(find_anchor(anchors, PersonRole::target, JointRole::same));
      hi = bands.good;
      break;
    case ErrorType::jitter:
      centers.push_back(find_anchor(anchors, PersonRole::target, JointRole::same));
      lo = bands.good;
      hi = bands.jitter;
      break;
    case ErrorType::inversion:
      if (const Anchor* a = find_anchor(anchors, PersonRole::target, JointRole::flipped))
        centers.push_back(a);
      else
        throw PreconditionError("inversion needs a labeled flip partner on the same person");
      lo = bands.inversion_low;
      hi = bands.inversion;
      break;
    case ErrorType::swap:
      for (const auto& a : anchors)
        if (a.person == PersonRole::neighbor) centers.push_back(&a);
      if (centers.empty()) throw PreconditionError("swap needs a labeled neighbor anchor");
      lo = bands.good;
      hi = bands.jitter;
      break;
    case ErrorType::miss:
      for (const auto& a : anchors) centers.push_back(&a);
      lo = bands.jitter;
      hi = bands.miss;
      break;
  }

  std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
  for (int attempt = 1; attempt <= config.max_rejection_attempts; ++attempt) {
    const Anchor& center = *centers[centers.size() == 1 ? 0 : pick(rng)];
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double radius = uniform(rng, lo, hi);
    const Coord p{center.position.x + radius * std::cos(angle),
                  center.position.y + radius * std::sin(angle)};
    if (accept(type, p, center, anchors, bands)) {
      return {{p.x, p.y, truth.visibility}, type, attempt, false};
    }
  }
  return {truth, ErrorType::good, config.max_rejection_attempts, true};
}

SynthesizedPose synthesize_pose(const InstanceContext& ctx, const SkeletonSpec& spec,
                                const ErrorDistributionTable& table,
                                const SynthesisConfig& config, Rng& rng) {
  ctx.validate(spec);
  config.validate();
  require(ctx.target.labeled_count() > 0, "synthesize_pose: target has no labeled joint");
  const int k = spec.num_joints();
  SynthesizedPose out;
  out.pose.keypoints = ctx.target.keypoints;
  out.pose.score = ctx.target.score;
  out.labels.assign(static_cast<std::size_t>(k), std::nullopt);
  out.attempts.assign(static_cast<std::size_t>(k), 0);
  out.overlap = instance_overlaps(ctx, config.overlap_iou_threshold);
  const int bin = config.bin_of(ctx.target.labeled_count());

  for (int j = 0; j < k; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    if (!ctx.target.keypoints[idx].labeled()) continue;
    const auto dist = redistribute(table.lookup({j, bin, out.overlap}),
                                   available_error_types(ctx, spec, j));
    const ErrorType type = sample_from(dist, rng);
    const auto kp = synthesize_keypoint(type, ctx, spec, j, config, rng);
    out.pose.keypoints[idx] = kp.keypoint;
    out.labels[idx] = kp.type;
    out.attempts[idx] = kp.attempts;
    out.fallbacks += kp.fell_back ? 1 : 0;
  }
  return out;
}

}  // namespace posefix
