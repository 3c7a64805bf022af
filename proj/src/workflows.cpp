#include "posefix/workflows.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "posefix/codec.hpp"
#include "posefix/error.hpp"
#include "posefix/similarity.hpp"

namespace posefix {

namespace {

std::vector<InstanceContext> all_contexts(const CocoGroundTruth& gt) {
  std::vector<InstanceContext> out;
  out.reserve(gt.annotations.size());
  for (std::size_t i = 0; i < gt.annotations.size(); ++i) out.push_back(gt.context(i));
  return out;
}

nlohmann::json label_names(const std::vector<std::optional<ErrorType>>& labels) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : labels) arr.push_back(l ? nlohmann::json(to_string(*l)) : nlohmann::json());
  return arr;
}

// Entries below 1e-4 are compared absolutely: central-difference round-off
// on a loss of order one is around 1e-10.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

}  // namespace

SynthesisRun synthesize_results(const CocoGroundTruth& gt, const GlobalConfig& config,
                                std::uint64_t seed) {
  const auto& spec = config.skeleton;
  SynthesisRun run;
  ErrorFrequencyReport freq;
  freq.joint_names = spec.joint_names();
  freq.per_joint.assign(static_cast<std::size_t>(spec.num_joints()), ErrorCounts{});
  nlohmann::json anns = nlohmann::json::array();
  for (std::size_t i = 0; i < gt.annotations.size(); ++i) {
    if (!gt.usable(i)) continue;
    const auto& a = gt.annotations[i];
    SynthesisConfig sc = config.synthesis;
    sc.rng_seed = derive_seed(seed, "synthesize", static_cast<std::uint64_t>(a.id));
    Rng rng(sc.rng_seed);
    auto s = synthesize_pose(gt.context(i), spec, config.table, sc, rng);
    for (int j = 0; j < spec.num_joints(); ++j)
      if (const auto& l = s.labels[static_cast<std::size_t>(j)]) freq.add(j, *l);
    CocoResult r;
    r.image_id = a.image_id;
    r.category_id = a.category_id;
    r.pose = s.pose;
    r.score = 1.0;
    r.pose.score = 1.0;
    r.annotation_id = a.id;
    run.results.push_back(std::move(r));
    anns.push_back({{"annotation_id", a.id},
                    {"image_id", a.image_id},
                    {"labels", label_names(s.labels)},
                    {"fallbacks", s.fallbacks},
                    {"overlap", s.overlap}});
  }
  run.labels = {{"seed", seed}, {"annotations", anns}, {"frequencies", freq.to_json()}};
  return run;
}

std::vector<MatchedEstimate> match_results(const CocoGroundTruth& gt,
                                           const std::vector<CocoResult>& dts,
                                           const SkeletonSpec& spec) {
  std::vector<MatchedEstimate> out(dts.size());
  std::map<std::int64_t, std::vector<std::size_t>> by_image;
  for (std::size_t d = 0; d < dts.size(); ++d) {
    out[d].pose = dts[d].pose;
    if (dts[d].annotation_id) {
      const auto idx = gt.find_annotation(*dts[d].annotation_id);
      if (idx && gt.usable(*idx) && gt.annotations[*idx].image_id == dts[d].image_id)
        out[d].instance = *idx;
    } else {
      by_image[dts[d].image_id].push_back(d);
    }
  }
  for (auto& [image_id, ds] : by_image) {
    std::stable_sort(ds.begin(), ds.end(),
                     [&](std::size_t a, std::size_t b) { return dts[a].score > dts[b].score; });
    std::vector<std::size_t> gts;
    for (std::size_t g = 0; g < gt.annotations.size(); ++g)
      if (gt.annotations[g].image_id == image_id && gt.usable(g)) gts.push_back(g);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d : ds) {
      double best = 0.0;
      std::optional<std::size_t> pick;
      for (std::size_t k = 0; k < gts.size(); ++k) {
        if (taken[k]) continue;
        const auto& a = gt.annotations[gts[k]];
        const double o = oks(dts[d].pose, a.pose, std::sqrt(a.area), spec).value;
        if (o > best) {
          best = o;
          pick = k;
        }
      }
      if (pick) {
        taken[*pick] = true;
        out[d].instance = gts[*pick];
      }
    }
  }
  return out;
}

ErrorFrequencyReport diagnose_results(const CocoGroundTruth& gt,
                                      const std::vector<CocoResult>& dts,
                                      const GlobalConfig& config) {
  const auto matched = match_results(gt, dts, config.skeleton);
  const auto contexts = all_contexts(gt);
  return diagnose(matched, contexts, config.skeleton, config.synthesis.thresholds);
}

nlohmann::json evaluate_results(const CocoGroundTruth& gt, const std::vector<CocoResult>& dts,
                                const std::optional<std::vector<CocoResult>>& before,
                                const GlobalConfig& config) {
  const Metrics after = evaluate(gt, dts, config.eval, config.skeleton);
  nlohmann::json report = {{"metrics", after.to_json()}, {"table", metrics_table(after)}};
  if (before) {
    const Metrics b = evaluate(gt, *before, config.eval, config.skeleton);
    report["before"] = b.to_json();
    report["delta_table"] = metrics_delta_table(b, after);
    report["csv"] = metrics_csv(after, b);
  } else {
    report["csv"] = metrics_csv(after);
  }
  return report;
}

nlohmann::json codec_check(const GlobalConfig& config, std::uint64_t seed, int samples) {
  require(samples >= 1, "codec-check: samples must be at least 1");
  const int w = config.codec.width;
  const int h = config.codec.height;
  const double sigma = config.codec.sigma;
  Rng rng(derive_seed(seed, "codec-check"));
  std::uniform_real_distribution<double> ux(0.0, w - 1.0), uy(0.0, h - 1.0);

  double max_rt = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Coord c{ux(rng), uy(rng)};
    const Coord r = soft_argmax(target_encode(c, w, h).map);
    max_rt = std::max({max_rt, std::abs(r.x - c.x), std::abs(r.y - c.y)});
  }

  const int cx = w / 2, cy = h / 2;
  const double peak = gaussian_encode(Coord{double(cx), double(cy)}, sigma, w, h).at(cx, cy);
  const double at_sigma =
      gaussian_encode(Coord{cx - sigma, double(cy)}, sigma, w, h).at(cx, cy);

  // Finite-difference check of the loss gradient on a small random problem.
  const int joints = 3, gw = 6, gh = 5;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Heatmap> logits, targets;
  std::vector<Coord> coords;
  for (int j = 0; j < joints; ++j) {
    // Redraw near the kink of the L1 term, where central differences lie.
    for (;;) {
      Heatmap z(gw, gh);
      for (auto& v : z.values()) v = normal(rng);
      const Coord c{std::uniform_real_distribution<double>(0.0, gw - 1.0)(rng),
                    std::uniform_real_distribution<double>(0.0, gh - 1.0)(rng)};
      const Coord e = soft_argmax(spatial_softmax(z));
      if (std::abs(e.x - c.x) < 1e-3 || std::abs(e.y - c.y) < 1e-3) continue;
      logits.push_back(std::move(z));
      targets.push_back(target_encode(c, gw, gh).map);
      coords.push_back(c);
      break;
    }
  }
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const auto base = integral_loss(logits, targets, coords, mask);
  double max_grad = 0.0;
  const double eps = 1e-5;
  for (int j = 0; j < joints; ++j) {
    for (std::size_t i = 0; i < logits[static_cast<std::size_t>(j)].size(); ++i) {
      auto& v = logits[static_cast<std::size_t>(j)].values()[i];
      const double keep = v;
      v = keep + eps;
      const double up = integral_loss(logits, targets, coords, mask).total;
      v = keep - eps;
      const double down = integral_loss(logits, targets, coords, mask).total;
      v = keep;
      max_grad = std::max(max_grad, rel_err(base.grad[static_cast<std::size_t>(j)].values()[i],
                                            (up - down) / (2 * eps)));
    }
  }
  const bool pass = max_rt < 1e-9 && std::abs(peak - 1.0) < 1e-6 &&
                    std::abs(at_sigma - std::exp(-0.5)) < 1e-6 && max_grad < 1e-5;
  return {{"seed", seed},
          {"samples", samples},
          {"heatmap_size", {w, h}},
          {"sigma", sigma},
          {"max_roundtrip_error", max_rt},
          {"gaussian_peak", peak},
          {"gaussian_at_sigma", at_sigma},
          {"max_gradient_relative_error", max_grad},
          {"pass", pass}};
}

ToyData make_toy_data(const GlobalConfig& config, std::uint64_t seed, int train_samples,
                      int held_out_samples) {
  ToyOptions opt;
  opt.width = config.refiner.input_width;
  opt.height = config.refiner.input_height;
  opt.neighbor_probability = config.toy.neighbor_probability;
  opt.synthesis = config.synthesis;
  return {generate_toy_dataset(train_samples, config.skeleton, config.toy_table,
                               derive_seed(seed, "toy-train"), opt),
          generate_toy_dataset(held_out_samples, config.skeleton, config.toy_table,
                               derive_seed(seed, "toy-held-out"), opt)};
}

nlohmann::json train_toy(const GlobalConfig& config, std::uint64_t seed,
                         const std::string& params_path, const ProgressFn& progress) {
  require(config.refiner.image_channels == kToyChannels,
          "train-toy: the toy images have " + std::to_string(kToyChannels) + " channels");
  const auto data = make_toy_data(config, seed, config.toy.train_samples, config.toy.held_out_samples);
  RefinerConfig rc = config.refiner;
  rc.seed = seed;
  nlohmann::json history = nlohmann::json::array();
  const auto result = train(data.train, rc, config.skeleton, data.held_out, [&](const EpochMetrics& m) {
    history.push_back({{"epoch", m.epoch},
                       {"learning_rate", m.learning_rate},
                       {"loss", m.loss},
                       {"input_oks", m.input_oks},
                       {"refined_oks", m.refined_oks}});
    if (progress)
      progress("epoch " + std::to_string(m.epoch + 1) + "/" + std::to_string(rc.epochs) +
               " loss " + std::to_string(m.loss) + " held-out OKS " + std::to_string(m.input_oks) +
               " -> " + std::to_string(m.refined_oks));
  });
  result.model.save(params_path);
  const auto& last = result.history.back();
  return {{"seed", seed},
          {"loss_mode", to_string(rc.loss_mode)},
          {"train_samples", data.train.size()},
          {"held_out_samples", data.held_out.size()},
          {"history", history},
          {"held_out", {{"input_oks", last.input_oks}, {"refined_oks", last.refined_oks}}}};
}

RefineRun refine_results(const RefinerModel& model, const CocoGroundTruth& gt,
                         const std::vector<CocoResult>& dts, const GlobalConfig& config,
                         const std::optional<std::string>& images_dir, bool flip_tta) {
  require(model.joints == config.skeleton.num_joints(), "refine: model and skeleton disagree");
  std::map<std::int64_t, Image> images;
  RefineRun run;
  run.results.reserve(dts.size());
  for (const auto& d : dts) {
    if (!gt.find_image(d.image_id))
      fail(ErrorCategory::schema, "refine: result references unknown image id " + std::to_string(d.image_id));
    const Image* img = nullptr;
    if (images_dir) {
      auto it = images.find(d.image_id);
      if (it == images.end()) {
        const auto stem = (std::filesystem::path(*images_dir) / std::to_string(d.image_id)).string();
        Image loaded;
        if (std::filesystem::exists(stem + ".json")) loaded = read_image_dump(stem);
        it = images.emplace(d.image_id, std::move(loaded)).first;
      }
      if (it->second.channels > 0) img = &it->second;
    }
    CocoResult r = d;
    r.pose = refine(model, img ? *img : Image(), d.pose, config.skeleton, flip_tta);
    r.pose.score = d.score;
    run.results.push_back(std::move(r));
  }
  const Metrics before = evaluate(gt, dts, config.eval, config.skeleton);
  const Metrics after = evaluate(gt, run.results, config.eval, config.skeleton);
  run.report = {{"results", run.results.size()},
                {"flip_tta", flip_tta},
                {"before", before.to_json()},
                {"after", after.to_json()},
                {"delta_table", metrics_delta_table(before, after)}};
  return run;
}

AblationResult ablate(const GlobalConfig& config, std::uint64_t seed,
                      const std::vector<LossMode>& modes, const ProgressFn& progress) {
  const auto& ab = config.ablation;
  const auto data = make_toy_data(config, seed, ab.train_samples, ab.held_out_samples);
  RefinerConfig base = config.refiner;
  base.epochs = ab.epochs;
  return run_ablation(data.train, data.held_out, config.skeleton, base, modes, ab.seeds,
                      [&](const AblationRow& row) {
                        if (progress)
                          progress(std::string(to_string(row.mode)) + " seed " +
                                   std::to_string(row.seed) + " held-out OKS " +
                                   std::to_string(row.refined_oks));
                      });
}

nlohmann::json ablation_json(const AblationResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"mode", to_string(r.mode)},
                    {"seed", r.seed},
                    {"input_oks", r.input_oks},
                    {"refined_oks", r.refined_oks}});
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : result.summary)
    summary.push_back({{"mode", to_string(s.mode)},
                       {"mean_refined_oks", s.mean_refined_oks},
                       {"min_refined_oks", s.min_refined_oks},
                       {"max_refined_oks", s.max_refined_oks}});
  return {{"mean_input_oks", result.mean_input_oks}, {"rows", rows}, {"summary", summary}};
}

}  // namespace posefix
