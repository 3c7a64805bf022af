#include "posefix/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "posefix/error.hpp"
#include "posefix/similarity.hpp"

namespace posefix {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double keypoint_box_area(const Pose& pose) {
  if (pose.keypoints.empty()) return 0.0;
  double x0 = pose.keypoints[0].x, x1 = x0, y0 = pose.keypoints[0].y, y1 = y0;
  for (const auto& kp : pose.keypoints) {
    x0 = std::min(x0, kp.x);
    x1 = std::max(x1, kp.x);
    y0 = std::min(y0, kp.y);
    y1 = std::max(y1, kp.y);
  }
  return (x1 - x0) * (y1 - y0);
}

bool gt_ignored(const CocoAnnotation& gt) { return gt.iscrowd || gt.degenerate; }

std::optional<std::size_t> threshold_index(const std::vector<double>& thresholds, double value) {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (std::abs(thresholds[i] - value) < 1e-9) return i;
  return std::nullopt;
}

std::optional<double> mean_defined(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (v > -1.0) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

namespace {

// Evenly spaced grid computed the way numpy.linspace does, so threshold
// values match the reference tooling bit for bit (0.90 is 0.8999999999999999).
std::vector<double> linspace(double start, double stop, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  const double step = (stop - start) / (n - 1);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i * step + start;
  v.back() = stop;
  return v;
}

}  // namespace

EvalParams EvalParams::coco() {
  EvalParams p;
  p.oks_thresholds = linspace(0.5, 0.95, 10);
  p.recall_thresholds = linspace(0.0, 1.0, 101);
  p.area_ranges = {{"all", 0.0, 1e10}, {"medium", 32.0 * 32.0, 96.0 * 96.0},
                   {"large", 96.0 * 96.0, 1e10}};
  p.max_dets = 20;
  return p;
}

void EvalParams::validate() const {
  require(!oks_thresholds.empty(), "eval: at least one OKS threshold is required");
  for (std::size_t i = 0; i < oks_thresholds.size(); ++i) {
    require(oks_thresholds[i] > 0.0 && oks_thresholds[i] <= 1.0,
            "eval: OKS thresholds must lie in (0, 1]");
    if (i > 0)
      require(oks_thresholds[i] > oks_thresholds[i - 1],
              "eval: OKS thresholds must be strictly increasing");
  }
  require(!recall_thresholds.empty(), "eval: recall thresholds are required");
  require(!area_ranges.empty(), "eval: at least one area range is required");
  require(max_dets > 0, "eval: max_dets must be positive");
}

EvalParams EvalParams::from_json(const nlohmann::json& doc) {
  EvalParams p = coco();
  const std::string where = "eval";
  p.oks_thresholds = detail::field_or(doc, "oks_thresholds", p.oks_thresholds, where);
  p.max_dets = detail::field_or(doc, "max_dets", p.max_dets, where);
  if (doc.contains("area_ranges")) {
    p.area_ranges.clear();
    for (const auto& r : doc.at("area_ranges")) {
      const auto name = detail::field<std::string>(r, "name", where + ".area_ranges");
      const double lo = detail::field<double>(r, "lo", where + ".area_ranges");
      const double hi = detail::field_or(r, "hi", 1e10, where + ".area_ranges");
      p.area_ranges.push_back({name, lo, hi});
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    detail::schema_error(where, e.what());
  }
  return p;
}

nlohmann::json EvalParams::to_json() const {
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : area_ranges) ranges.push_back({{"name", r.name}, {"lo", r.lo}, {"hi", r.hi}});
  return {{"oks_thresholds", oks_thresholds}, {"area_ranges", ranges}, {"max_dets", max_dets}};
}

double matching_oks(const Pose& dt, const CocoAnnotation& gt, const SkeletonSpec& spec) {
  const auto k = static_cast<std::size_t>(spec.num_joints());
  require(dt.size() == k && gt.pose.size() == k, "matching_oks: pose length mismatch");
  const double area = gt.area + kEps;
  if (gt.pose.labeled_count() > 0) return oks(dt, gt.pose, std::sqrt(area), spec).value;
  // Distance to a box twice the gt box size, averaged over all joints.
  const auto& b = gt.bbox;
  const double x0 = b[0] - b[2], x1 = b[0] + 2.0 * b[2];
  const double y0 = b[1] - b[3], y1 = b[1] + 2.0 * b[3];
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& kp = dt.keypoints[j];
    const double dx = std::max(0.0, x0 - kp.x) + std::max(0.0, kp.x - x1);
    const double dy = std::max(0.0, y0 - kp.y) + std::max(0.0, kp.y - y1);
    const double kappa = spec.kappa(static_cast<int>(j));
    sum += std::exp(-(dx * dx + dy * dy) / (kappa * kappa) / area / 2.0);
  }
  return sum / static_cast<double>(k);
}

ImageEvaluation evaluate_image(std::int64_t image_id, const std::vector<const CocoAnnotation*>& gts,
                               const std::vector<const CocoResult*>& dts, const AreaRange& range,
                               const EvalParams& params, const SkeletonSpec& spec) {
  ImageEvaluation ev;
  ev.image_id = image_id;

  // Non-ignored ground truth first, stable within each group.
  std::vector<const CocoAnnotation*> g = gts;
  std::vector<std::uint8_t> ignore_of(g.size());
  auto ignored = [&](const CocoAnnotation* a) {
    return gt_ignored(*a) || a->area < range.lo || a->area > range.hi;
  };
  std::stable_sort(g.begin(), g.end(), [&](const CocoAnnotation* a, const CocoAnnotation* b) {
    return static_cast<int>(ignored(a)) < static_cast<int>(ignored(b));
  });
  for (const auto* a : g) {
    ev.gt_ignore.push_back(ignored(a) ? 1 : 0);
    ev.gt_ids.push_back(a->id);
  }

  std::vector<const CocoResult*> d = dts;
  std::stable_sort(d.begin(), d.end(),
                   [](const CocoResult* a, const CocoResult* b) { return a->score > b->score; });
  if (d.size() > static_cast<std::size_t>(params.max_dets))
    d.resize(static_cast<std::size_t>(params.max_dets));
  for (const auto* r : d) ev.dt_scores.push_back(r->score);

  ev.oks.assign(d.size(), std::vector<double>(g.size(), 0.0));
  for (std::size_t di = 0; di < d.size(); ++di)
    for (std::size_t gi = 0; gi < g.size(); ++gi)
      ev.oks[di][gi] = matching_oks(d[di]->pose, *g[gi], spec);

  const std::size_t nt = params.oks_thresholds.size();
  ev.dt_matches.assign(nt, std::vector<std::int64_t>(d.size(), -1));
  ev.dt_ignore.assign(nt, std::vector<std::uint8_t>(d.size(), 0));
  ev.gt_matches.assign(nt, std::vector<std::int64_t>(g.size(), -1));

  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t di = 0; di < d.size(); ++di) {
      double best = std::min(params.oks_thresholds[t], 1.0 - 1e-10);
      long m = -1;
      for (std::size_t gi = 0; gi < g.size(); ++gi) {
        // Crowd regions may absorb any number of detections.
        if (ev.gt_matches[t][gi] >= 0 && !g[gi]->iscrowd) continue;
        if (m > -1 && ev.gt_ignore[static_cast<std::size_t>(m)] == 0 && ev.gt_ignore[gi] == 1)
          break;
        if (ev.oks[di][gi] < best) continue;
        best = ev.oks[di][gi];
        m = static_cast<long>(gi);
      }
      if (m == -1) continue;
      const auto mi = static_cast<std::size_t>(m);
      ev.dt_ignore[t][di] = ev.gt_ignore[mi];
      ev.dt_matches[t][di] = g[mi]->id;
      ev.gt_matches[t][mi] = static_cast<std::int64_t>(di);
    }
    for (std::size_t di = 0; di < d.size(); ++di) {
      const double area = keypoint_box_area(d[di]->pose);
      const bool outside = area < range.lo || area > range.hi;
      if (ev.dt_matches[t][di] < 0 && outside) ev.dt_ignore[t][di] = 1;
    }
  }
  return ev;
}

std::vector<std::vector<ImageEvaluation>> match_and_score(const CocoGroundTruth& gt,
                                                          const std::vector<CocoResult>& dts,
                                                          const EvalParams& params,
                                                          const SkeletonSpec& spec) {
  params.validate();
  std::map<std::int64_t, std::vector<const CocoAnnotation*>> gts_by_image;
  std::map<std::int64_t, std::vector<const CocoResult*>> dts_by_image;
  for (const auto& img : gt.images) gts_by_image[img.id];
  for (const auto& a : gt.annotations) gts_by_image[a.image_id].push_back(&a);
  for (const auto& r : dts) {
    if (!gts_by_image.contains(r.image_id))
      fail(ErrorCategory::schema, "result refers to image " + std::to_string(r.image_id) +
                                      " which is not in the ground truth");
    dts_by_image[r.image_id].push_back(&r);
  }
  std::vector<std::vector<ImageEvaluation>> out(params.area_ranges.size());
  for (std::size_t a = 0; a < params.area_ranges.size(); ++a) {
    for (const auto& [image_id, gts] : gts_by_image) {
      auto it = dts_by_image.find(image_id);
      static const std::vector<const CocoResult*> kNone;
      const auto& ds = it == dts_by_image.end() ? kNone : it->second;
      if (gts.empty() && ds.empty()) continue;
      out[a].push_back(evaluate_image(image_id, gts, ds, params.area_ranges[a], params, spec));
    }
  }
  return out;
}

AccumulatedRange accumulate(const std::vector<ImageEvaluation>& images, const EvalParams& params) {
  const std::size_t nt = params.oks_thresholds.size();
  const std::size_t nr = params.recall_thresholds.size();
  AccumulatedRange acc;
  acc.precision.assign(nt, std::vector<double>(nr, -1.0));
  acc.recall.assign(nt, -1.0);

  std::size_t npig = 0;
  std::vector<double> scores;
  std::vector<std::pair<std::size_t, std::size_t>> where;  // (image, detection)
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (auto ig : images[i].gt_ignore) npig += ig == 0 ? 1 : 0;
    for (std::size_t d = 0; d < images[i].dt_scores.size(); ++d) {
      scores.push_back(images[i].dt_scores[d]);
      where.emplace_back(i, d);
    }
  }
  if (npig == 0) return acc;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  for (std::size_t t = 0; t < nt; ++t) {
    std::vector<double> rc;
    std::vector<double> pr;
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t o : order) {
      const auto [i, d] = where[o];
      if (images[i].dt_ignore[t][d]) continue;
      if (images[i].dt_matches[t][d] >= 0)
        tp += 1.0;
      else
        fp += 1.0;
      rc.push_back(tp / static_cast<double>(npig));
      pr.push_back(tp / (tp + fp + kEps));
    }
    acc.recall[t] = rc.empty() ? 0.0 : rc.back();
    for (std::size_t k = pr.size(); k-- > 1;)
      if (pr[k] > pr[k - 1]) pr[k - 1] = pr[k];
    auto& q = acc.precision[t];
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(rc.begin(), rc.end(), params.recall_thresholds[r]) - rc.begin());
      if (pos >= pr.size()) break;
      q[r] = pr[pos];
    }
  }
  return acc;
}

Metrics average_precision(const std::vector<std::vector<ImageEvaluation>>& evals,
                          const EvalParams& params) {
  require(evals.size() == params.area_ranges.size(),
          "average_precision: one evaluation set per area range expected");
  std::vector<AccumulatedRange> acc;
  for (const auto& images : evals) acc.push_back(accumulate(images, params));

  auto range_index = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < params.area_ranges.size(); ++i)
      if (params.area_ranges[i].name == name) return i;
    return std::nullopt;
  };
  auto ap = [&](std::optional<std::size_t> a, std::optional<double> thr) -> std::optional<double> {
    if (!a) return std::nullopt;
    std::vector<double> vals;
    for (std::size_t t = 0; t < params.oks_thresholds.size(); ++t) {
      if (thr && std::abs(params.oks_thresholds[t] - *thr) >= 1e-9) continue;
      vals.insert(vals.end(), acc[*a].precision[t].begin(), acc[*a].precision[t].end());
    }
    return mean_defined(vals);
  };
  auto ar = [&](std::optional<std::size_t> a, std::optional<double> thr) -> std::optional<double> {
    if (!a) return std::nullopt;
    std::vector<double> vals;
    for (std::size_t t = 0; t < params.oks_thresholds.size(); ++t) {
      if (thr && std::abs(params.oks_thresholds[t] - *thr) >= 1e-9) continue;
      vals.push_back(acc[*a].recall[t]);
    }
    return mean_defined(vals);
  };
  const auto all = range_index("all");
  const auto medium = range_index("medium");
  const auto large = range_index("large");
  const auto has50 = threshold_index(params.oks_thresholds, 0.5).has_value();
  const auto has75 = threshold_index(params.oks_thresholds, 0.75).has_value();

  Metrics m;
  m.ap = ap(all, std::nullopt);
  m.ap50 = has50 ? ap(all, 0.5) : std::nullopt;
  m.ap75 = has75 ? ap(all, 0.75) : std::nullopt;
  m.ap_medium = ap(medium, std::nullopt);
  m.ap_large = ap(large, std::nullopt);
  m.ar = ar(all, std::nullopt);
  m.ar50 = has50 ? ar(all, 0.5) : std::nullopt;
  m.ar75 = has75 ? ar(all, 0.75) : std::nullopt;
  m.ar_medium = ar(medium, std::nullopt);
  m.ar_large = ar(large, std::nullopt);
  return m;
}

Metrics evaluate(const CocoGroundTruth& gt, const std::vector<CocoResult>& dts,
                 const EvalParams& params, const SkeletonSpec& spec) {
  return average_precision(match_and_score(gt, dts, params, spec), params);
}

std::vector<std::string> Metrics::names() {
  return {"AP", "AP.50", "AP.75", "AP_M", "AP_L", "AR", "AR.50", "AR.75", "AR_M", "AR_L"};
}

std::vector<std::optional<double>> Metrics::values() const {
  return {ap, ap50, ap75, ap_medium, ap_large, ar, ar50, ar75, ar_medium, ar_large};
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  const auto n = names();
  const auto v = values();
  // -1 is the COCO sentinel for an undefined metric.
  for (std::size_t i = 0; i < n.size(); ++i) out[n[i]] = v[i] ? *v[i] : -1.0;
  return out;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string fmt_delta(const std::optional<double>& before, const std::optional<double>& after) {
  if (!before || !after) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", *after - *before);
  return buf;
}

}  // namespace

std::string metrics_table(const Metrics& m) {
  std::ostringstream out;
  const auto n = Metrics::names();
  const auto v = m.values();
  for (std::size_t i = 0; i < n.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%-6s %s\n", n[i].c_str(), fmt(v[i]).c_str());
    out << line;
  }
  return out.str();
}

std::string metrics_delta_table(const Metrics& before, const Metrics& after) {
  std::ostringstream out;
  const auto n = Metrics::names();
  const auto b = before.values();
  const auto a = after.values();
  char line[96];
  std::snprintf(line, sizeof line, "%-6s %10s %10s %10s\n", "metric", "before", "after", "delta");
  out << line;
  for (std::size_t i = 0; i < n.size(); ++i) {
    std::snprintf(line, sizeof line, "%-6s %10s %10s %10s\n", n[i].c_str(), fmt(b[i]).c_str(),
                  fmt(a[i]).c_str(), fmt_delta(b[i], a[i]).c_str());
    out << line;
  }
  return out.str();
}

std::string metrics_csv(const Metrics& m, const std::optional<Metrics>& before) {
  std::ostringstream out;
  const auto n = Metrics::names();
  const auto v = m.values();
  out << (before ? "metric,before,after,delta\n" : "metric,value\n");
  for (std::size_t i = 0; i < n.size(); ++i) {
    out << n[i] << ',';
    if (before) {
      const auto b = before->values()[i];
      out << fmt(b) << ',' << fmt(v[i]) << ',' << fmt_delta(b, v[i]) << '\n';
    } else {
      out << fmt(v[i]) << '\n';
    }
  }
  return out.str();
}

}  // namespace posefix
