#include "posefix/posefix.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <new>
#include <sstream>
#include <string>

#include "json_util.hpp"
#include "posefix/codec.hpp"
#include "posefix/config.hpp"
#include "posefix/error.hpp"
#include "posefix/similarity.hpp"
#include "posefix/taxonomy.hpp"
#include "posefix/workflows.hpp"

struct posefix_config {
  posefix::GlobalConfig value;
};

struct posefix_skeleton {
  posefix::SkeletonSpec value;
};

namespace {

using namespace posefix;

thread_local std::string g_last_error;
posefix_log_fn g_log = nullptr;
void* g_log_user = nullptr;

posefix_status status_of(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::invalid_argument: return POSEFIX_ERR_INVALID_ARGUMENT;
    case ErrorCategory::io: return POSEFIX_ERR_IO;
    case ErrorCategory::schema: return POSEFIX_ERR_SCHEMA;
    case ErrorCategory::precondition: return POSEFIX_ERR_PRECONDITION;
    case ErrorCategory::diverged: return POSEFIX_ERR_DIVERGED;
    case ErrorCategory::internal: return POSEFIX_ERR_INTERNAL;
  }
  return POSEFIX_ERR_INTERNAL;
}

template <class F>
posefix_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return POSEFIX_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.category());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON content: ") + e.what();
    return POSEFIX_ERR_SCHEMA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return POSEFIX_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return POSEFIX_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return POSEFIX_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (!p) fail(ErrorCategory::invalid_argument, std::string(name) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_report(char** out, const nlohmann::json& report) {
  if (out) *out = dup_string(report.dump(2));
}

Pose pose_from(const double* xyv, int k) {
  Pose p;
  p.keypoints.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const double v = xyv[3 * j + 2];
    if (v != 0.0 && v != 1.0 && v != 2.0)
      fail(ErrorCategory::invalid_argument, "visibility must be 0, 1 or 2");
    p.keypoints[static_cast<std::size_t>(j)] = {xyv[3 * j], xyv[3 * j + 1],
                                                static_cast<Visibility>(static_cast<int>(v))};
  }
  return p;
}

void check_grid(int w, int h) {
  if (w <= 0 || h <= 0) fail(ErrorCategory::invalid_argument, "grid size must be positive");
}

Heatmap map_from(const double* values, int w, int h) {
  return Heatmap(w, h, std::vector<double>(values, values + static_cast<std::size_t>(w) * h));
}

void copy_map(const Heatmap& m, double* out) {
  const auto v = m.values();
  std::copy(v.begin(), v.end(), out);
}

ProgressFn progress_fn(int level) {
  return [level](const std::string& msg) {
    if (g_log) g_log(g_log_user, level, msg.c_str());
  };
}

}  // namespace

extern "C" {

const char* posefix_version(void) { return posefix::kVersion; }

const char* posefix_status_name(posefix_status status) {
  switch (status) {
    case POSEFIX_OK: return "ok";
    case POSEFIX_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case POSEFIX_ERR_IO: return "io";
    case POSEFIX_ERR_SCHEMA: return "schema";
    case POSEFIX_ERR_PRECONDITION: return "precondition";
    case POSEFIX_ERR_DIVERGED: return "diverged";
    case POSEFIX_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* posefix_last_error(void) { return g_last_error.c_str(); }

void posefix_string_free(char* s) { std::free(s); }

void posefix_set_log_callback(posefix_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

posefix_status posefix_config_default(posefix_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new posefix_config{GlobalConfig::defaults()};
  });
}

posefix_status posefix_config_load(const char* path, posefix_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new posefix_config{GlobalConfig::load(path)};
  });
}

void posefix_config_free(posefix_config* config) { delete config; }

posefix_status posefix_config_hash(const posefix_config* config, uint64_t* out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = config->value.hash();
  });
}

posefix_status posefix_config_json(const posefix_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup_string(config->value.to_json().dump(2));
  });
}

posefix_status posefix_config_log_level(const posefix_config* config, int* out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = static_cast<int>(config->value.log_level);
  });
}

posefix_status posefix_skeleton_coco(posefix_skeleton** out) {
  return guarded([&] {
    need(out, "out");
    *out = new posefix_skeleton{SkeletonSpec::coco()};
  });
}

posefix_status posefix_skeleton_load(const char* path, posefix_skeleton** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new posefix_skeleton{SkeletonSpec::load(path)};
  });
}

posefix_status posefix_config_skeleton(const posefix_config* config, posefix_skeleton** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new posefix_skeleton{config->value.skeleton};
  });
}

void posefix_skeleton_free(posefix_skeleton* skeleton) { delete skeleton; }

int posefix_skeleton_num_joints(const posefix_skeleton* skeleton) {
  return skeleton ? skeleton->value.num_joints() : 0;
}

posefix_status posefix_ks(double distance, double scale, double kappa, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ks(distance, scale, kappa);
  });
}

posefix_status posefix_ks_radius(double level, double scale, double kappa, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ks_radius(level, scale, kappa);
  });
}

posefix_status posefix_oks(const posefix_skeleton* skeleton, const double* estimate,
                           const double* truth, double scale, double* out, int* out_degenerate) {
  return guarded([&] {
    need(skeleton, "skeleton");
    need(estimate, "estimate");
    need(truth, "truth");
    need(out, "out");
    const int k = skeleton->value.num_joints();
    const auto r = oks(pose_from(estimate, k), pose_from(truth, k), scale, skeleton->value);
    *out = r.value;
    if (out_degenerate) *out_degenerate = r.degenerate ? 1 : 0;
  });
}

posefix_status posefix_classify_keypoint(const posefix_config* config, const double* target,
                                         const double* neighbors, size_t num_neighbors,
                                         double scale, int joint, double x, double y,
                                         posefix_error_type* out) {
  return guarded([&] {
    need(config, "config");
    need(target, "target");
    need(out, "out");
    if (num_neighbors > 0) need(neighbors, "neighbors");
    const auto& spec = config->value.skeleton;
    const int k = spec.num_joints();
    if (joint < 0 || joint >= k) fail(ErrorCategory::invalid_argument, "joint out of range");
    InstanceContext ctx;
    ctx.target = pose_from(target, k);
    for (size_t n = 0; n < num_neighbors; ++n)
      ctx.neighbors.push_back(pose_from(neighbors + n * 3 * static_cast<size_t>(k), k));
    ctx.scale = scale;
    ctx.validate(spec);
    const auto t = classify_keypoint({x, y, Visibility::labeled_visible}, ctx, spec, joint,
                                     config->value.synthesis.thresholds);
    *out = static_cast<posefix_error_type>(static_cast<int>(t));
  });
}

posefix_status posefix_gaussian_encode(double cx, double cy, double sigma, int w, int h,
                                       double* out) {
  return guarded([&] {
    need(out, "out");
    check_grid(w, h);
    copy_map(gaussian_encode(Coord{cx, cy}, sigma, w, h), out);
  });
}

posefix_status posefix_target_encode(double cx, double cy, int w, int h, double* out,
                                     int* out_clamped) {
  return guarded([&] {
    need(out, "out");
    check_grid(w, h);
    const auto t = target_encode({cx, cy}, w, h);
    copy_map(t.map, out);
    if (out_clamped) *out_clamped = t.clamped ? 1 : 0;
  });
}

posefix_status posefix_spatial_softmax(const double* logits, int w, int h, double* out) {
  return guarded([&] {
    need(logits, "logits");
    need(out, "out");
    check_grid(w, h);
    copy_map(spatial_softmax(map_from(logits, w, h)), out);
  });
}

posefix_status posefix_soft_argmax(const double* prob, int w, int h, double* out_x,
                                   double* out_y) {
  return guarded([&] {
    need(prob, "prob");
    need(out_x, "out_x");
    need(out_y, "out_y");
    check_grid(w, h);
    const Coord c = soft_argmax(map_from(prob, w, h));
    *out_x = c.x;
    *out_y = c.y;
  });
}

posefix_status posefix_integral_loss(const double* logits, const double* targets,
                                     const double* target_coords, const unsigned char* mask,
                                     int joints, int w, int h, double heatmap_weight,
                                     double coord_weight, double* out_loss,
                                     double* out_heatmap_term, double* out_coord_term,
                                     double* out_grad) {
  return guarded([&] {
    need(logits, "logits");
    need(targets, "targets");
    need(target_coords, "target_coords");
    need(mask, "mask");
    need(out_loss, "out_loss");
    check_grid(w, h);
    if (joints <= 0) fail(ErrorCategory::invalid_argument, "joints must be positive");
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<Heatmap> z, t;
    std::vector<Coord> c;
    for (int j = 0; j < joints; ++j) {
      z.push_back(map_from(logits + n * static_cast<std::size_t>(j), w, h));
      t.push_back(map_from(targets + n * static_cast<std::size_t>(j), w, h));
      c.push_back({target_coords[2 * j], target_coords[2 * j + 1]});
    }
    const std::vector<std::uint8_t> m(mask, mask + joints);
    const auto r = integral_loss(z, t, c, m, {heatmap_weight, coord_weight});
    *out_loss = r.total;
    if (out_heatmap_term) *out_heatmap_term = r.heatmap_term;
    if (out_coord_term) *out_coord_term = r.coord_term;
    if (out_grad)
      for (int j = 0; j < joints; ++j)
        copy_map(r.grad[static_cast<std::size_t>(j)], out_grad + n * static_cast<std::size_t>(j));
  });
}

posefix_status posefix_config_set_table(posefix_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    config->value.table = ErrorDistributionTable::load(path, config->value.skeleton);
  });
}

posefix_status posefix_synthesize_file(const posefix_config* config, const char* gt_path,
                                       uint64_t seed, const char* out_results,
                                       const char* out_labels) {
  return guarded([&] {
    need(config, "config");
    need(gt_path, "gt_path");
    need(out_results, "out_results");
    need(out_labels, "out_labels");
    const auto gt = load_coco_ground_truth(gt_path, config->value.skeleton);
    const auto run = synthesize_results(gt, config->value, seed);
    save_coco_results(out_results, run.results);
    detail::write_json_file(out_labels, run.labels);
  });
}

posefix_status posefix_diagnose_file(const posefix_config* config, const char* gt_path,
                                     const char* dt_path, const char* out_json,
                                     const char* out_csv, char** out_report) {
  return guarded([&] {
    need(config, "config");
    need(gt_path, "gt_path");
    need(dt_path, "dt_path");
    const auto& spec = config->value.skeleton;
    const auto gt = load_coco_ground_truth(gt_path, spec);
    const auto dts = load_coco_results(dt_path, spec);
    const auto report = diagnose_results(gt, dts, config->value);
    if (out_json) detail::write_json_file(out_json, report.to_json());
    if (out_csv) detail::write_text_file(out_csv, report.to_csv());
    put_report(out_report, report.to_json());
  });
}

posefix_status posefix_evaluate_file(const posefix_config* config, const char* gt_path,
                                     const char* dt_path, const char* dt_before_path,
                                     char** out_report) {
  return guarded([&] {
    need(config, "config");
    need(gt_path, "gt_path");
    need(dt_path, "dt_path");
    need(out_report, "out_report");
    const auto& spec = config->value.skeleton;
    const auto gt = load_coco_ground_truth(gt_path, spec);
    const auto dts = load_coco_results(dt_path, spec);
    std::optional<std::vector<CocoResult>> before;
    if (dt_before_path) before = load_coco_results(dt_before_path, spec);
    put_report(out_report, evaluate_results(gt, dts, before, config->value));
  });
}

posefix_status posefix_codec_check(const posefix_config* config, uint64_t seed, int samples,
                                   char** out_report) {
  return guarded([&] {
    need(config, "config");
    need(out_report, "out_report");
    put_report(out_report, codec_check(config->value, seed, samples));
  });
}

posefix_status posefix_train_toy(const posefix_config* config, uint64_t seed,
                                 const char* out_params, char** out_report) {
  return guarded([&] {
    need(config, "config");
    need(out_params, "out_params");
    put_report(out_report, train_toy(config->value, seed, out_params, progress_fn(2)));
  });
}

posefix_status posefix_refine_file(const posefix_config* config, const char* params_path,
                                   const char* gt_path, const char* dt_path,
                                   const char* images_dir, int flip_tta,
                                   const char* out_results, char** out_report) {
  return guarded([&] {
    need(config, "config");
    need(params_path, "params_path");
    need(gt_path, "gt_path");
    need(dt_path, "dt_path");
    need(out_results, "out_results");
    const auto& spec = config->value.skeleton;
    const auto model = RefinerModel::load(params_path);
    const auto gt = load_coco_ground_truth(gt_path, spec);
    const auto dts = load_coco_results(dt_path, spec);
    std::optional<std::string> dir;
    if (images_dir) dir = images_dir;
    const auto run = refine_results(model, gt, dts, config->value, dir, flip_tta != 0);
    save_coco_results(out_results, run.results);
    put_report(out_report, run.report);
  });
}

posefix_status posefix_ablate(const posefix_config* config, const char* modes, uint64_t seed,
                              char** out_csv, char** out_report) {
  return guarded([&] {
    need(config, "config");
    std::vector<LossMode> list;
    if (modes && *modes) {
      std::stringstream ss(modes);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) list.push_back(parse_loss_mode(item));
    } else {
      list = config->value.ablation.modes;
    }
    if (list.empty()) fail(ErrorCategory::invalid_argument, "no loss modes given");
    const auto result = ablate(config->value, seed, list, progress_fn(2));
    if (out_csv) *out_csv = dup_string(result.csv());
    put_report(out_report, ablation_json(result));
  });
}

posefix_status posefix_hash_file(const char* path, uint64_t* out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, std::string("cannot open ") + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    *out = fnv1a64(bytes);
  });
}

}  // extern "C"
