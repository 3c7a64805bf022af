#include "posefix/refiner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "posefix/error.hpp"
#include "posefix/similarity.hpp"
#include "tensor_io.hpp"

namespace posefix {

namespace {

constexpr const char* kParamsFormat = "posefix-refiner-params";
constexpr int kParamsVersion = 1;

std::string params_stem(const std::string& path) {
  for (const char* ext : {".json", ".bin"}) {
    const std::string e = ext;
    if (path.size() > e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0)
      return path.substr(0, path.size() - e.size());
  }
  return path;
}

const char* to_string(InitScheme s) { return s == InitScheme::he ? "he" : "gaussian"; }

InitScheme parse_init(const std::string& s, const std::string& where) {
  if (s == "gaussian") return InitScheme::gaussian;
  if (s == "he") return InitScheme::he;
  detail::schema_error(where, "init must be 'gaussian' or 'he'");
}

void initialize(ConvNet<float>& net, const RefinerConfig& config) {
  Rng rng(derive_seed(config.seed, "refiner-init"));
  if (config.init == InitScheme::gaussian) {
    net.init_gaussian(rng, config.init_sigma);
    return;
  }
  // He: per-layer sigma sqrt(2 / fan_in).
  auto params = net.params();
  std::size_t offset = 0;
  for (const auto& l : net.architecture().layers) {
    if (l.kind != LayerSpec::Kind::conv) continue;
    const std::size_t fan_in = static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    const std::size_t nw = fan_in * static_cast<std::size_t>(l.out_channels);
    for (std::size_t i = 0; i < nw; ++i) params[offset + i] = static_cast<float>(normal(rng));
    offset += nw;
    for (int o = 0; o < l.out_channels; ++o) params[offset++] = 0.0f;
  }
}

std::vector<Heatmap> to_heatmaps(std::span<const double> output, int joints, int w, int h) {
  std::vector<Heatmap> maps;
  maps.reserve(static_cast<std::size_t>(joints));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int j = 0; j < joints; ++j) {
    const auto first = output.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(j));
    maps.emplace_back(w, h, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
  }
  return maps;
}

Pose mirror_crop_pose(const Pose& pose, int width, const SkeletonSpec& spec) {
  return apply_to_pose(mirror_transform(width), pose, spec, true).pose;
}

}  // namespace

const char* to_string(LossMode mode) {
  switch (mode) {
    case LossMode::c2f: return "C2F";
    case LossMode::c2c: return "C2C";
    case LossMode::f2f: return "F2F";
    case LossMode::c2f_lh_only: return "C2F_LH_only";
    case LossMode::c2f_lc_only: return "C2F_LC_only";
  }
  return "?";
}

LossMode parse_loss_mode(std::string_view name) {
  std::string s(name);
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (s == "C2F") return LossMode::c2f;
  if (s == "C2C") return LossMode::c2c;
  if (s == "F2F") return LossMode::f2f;
  if (s == "C2F_LH" || s == "C2F_LH_ONLY") return LossMode::c2f_lh_only;
  if (s == "C2F_LC" || s == "C2F_LC_ONLY") return LossMode::c2f_lc_only;
  fail(ErrorCategory::invalid_argument, "unknown loss mode '" + std::string(name) + "'");
}

std::vector<int> LrSchedule::resolved_decay_epochs(int total_epochs) const {
  if (!decay_epochs.empty()) return decay_epochs;
  return {std::max(1, (2 * total_epochs) / 3), std::max(1, (5 * total_epochs) / 6)};
}

double LrSchedule::rate(int epoch, int total_epochs) const {
  double lr = initial;
  for (int d : resolved_decay_epochs(total_epochs))
    if (epoch >= d) lr *= factor;
  return lr;
}

int RefinerConfig::upsample_count() const {
  const int base_w = input_width / 4;
  int u = 0;
  int w = base_w;
  while (w < heatmap_width) {
    w *= 2;
    ++u;
  }
  return u;
}

double RefinerConfig::input_sigma() const {
  return loss_mode == LossMode::f2f ? fine_sigma : coarse_sigma * stride();
}

void RefinerConfig::validate() const {
  require(input_width > 0 && input_height > 0 && heatmap_width > 0 && heatmap_height > 0,
          "refiner config: sizes must be positive");
  require(input_width % heatmap_width == 0 && input_height % heatmap_height == 0 &&
              input_width / heatmap_width == input_height / heatmap_height,
          "refiner config: heatmap size must divide the input size by one common stride");
  require(input_width % 4 == 0 && input_height % 4 == 0,
          "refiner config: input size must be a multiple of 4");
  const int u = upsample_count();
  require((input_width / 4) << u == heatmap_width && (input_height / 4) << u == heatmap_height,
          "refiner config: heatmap size must be the input size over 4 times a power of two");
  require(narrow_width > 0 && wide_width > 0, "refiner config: channel widths must be positive");
  require(image_channels >= 0, "refiner config: image_channels must be non-negative");
  for (const auto& [a, b] : image_flip_pairs)
    require(a >= 0 && b >= 0 && a < image_channels && b < image_channels && a != b,
            "refiner config: image flip pair out of range");
  require(lr.initial > 0.0 && std::isfinite(lr.initial), "refiner config: learning rate must be positive");
  require(lr.factor > 0.0 && lr.factor <= 1.0, "refiner config: decay factor must lie in (0, 1]");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 &&
              adam_epsilon > 0.0,
          "refiner config: bad Adam constants");
  require(batch_size >= 1, "refiner config: batch_size must be at least 1");
  require(epochs >= 1, "refiner config: epochs must be at least 1");
  require(init_sigma > 0.0, "refiner config: init_sigma must be positive");
  require(coarse_sigma > 0.0 && fine_sigma > 0.0, "refiner config: sigmas must be positive");
  require(monitor_samples >= 0, "refiner config: monitor_samples must be non-negative");
}

Architecture RefinerConfig::architecture(int joints) const {
  validate();
  require(joints > 0, "refiner: joint count must be positive");
  return toy_architecture(image_channels + joints, joints, input_width, input_height, narrow_width,
                          wide_width, upsample_count());
}

RefinerConfig RefinerConfig::from_json(const nlohmann::json& doc) {
  using detail::field_or;
  const std::string where = "refiner";
  if (!doc.is_object()) detail::schema_error(where, "expected an object");
  RefinerConfig c;
  if (doc.contains("input_size")) {
    const auto& s = doc.at("input_size");
    if (!s.is_array() || s.size() != 2) detail::schema_error(where + ".input_size", "expected [w, h]");
    c.input_width = s[0].get<int>();
    c.input_height = s[1].get<int>();
  }
  if (doc.contains("heatmap_size")) {
    const auto& s = doc.at("heatmap_size");
    if (!s.is_array() || s.size() != 2)
      detail::schema_error(where + ".heatmap_size", "expected [w, h]");
    c.heatmap_width = s[0].get<int>();
    c.heatmap_height = s[1].get<int>();
  }
  if (doc.contains("widths")) {
    const auto& s = doc.at("widths");
    if (!s.is_array() || s.size() != 2) detail::schema_error(where + ".widths", "expected [narrow, wide]");
    c.narrow_width = s[0].get<int>();
    c.wide_width = s[1].get<int>();
  }
  c.image_channels = field_or(doc, "image_channels", c.image_channels, where);
  if (doc.contains("image_flip_pairs")) {
    c.image_flip_pairs.clear();
    for (const auto& p : doc.at("image_flip_pairs")) {
      if (!p.is_array() || p.size() != 2)
        detail::schema_error(where + ".image_flip_pairs", "expected pairs of channel indices");
      c.image_flip_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }
  if (doc.contains("lr")) {
    const auto& l = doc.at("lr");
    c.lr.initial = field_or(l, "initial", c.lr.initial, where + ".lr");
    c.lr.factor = field_or(l, "factor", c.lr.factor, where + ".lr");
    c.lr.decay_epochs = field_or(l, "decay_epochs", c.lr.decay_epochs, where + ".lr");
  }
  c.adam_beta1 = field_or(doc, "adam_beta1", c.adam_beta1, where);
  c.adam_beta2 = field_or(doc, "adam_beta2", c.adam_beta2, where);
  c.adam_epsilon = field_or(doc, "adam_epsilon", c.adam_epsilon, where);
  c.batch_size = field_or(doc, "batch_size", c.batch_size, where);
  c.epochs = field_or(doc, "epochs", c.epochs, where);
  if (doc.contains("loss_mode")) {
    try {
      c.loss_mode = parse_loss_mode(doc.at("loss_mode").get<std::string>());
    } catch (const Error& e) {
      detail::schema_error(where + ".loss_mode", e.what());
    }
  }
  c.seed = field_or(doc, "seed", c.seed, where);
  if (doc.contains("init")) c.init = parse_init(doc.at("init").get<std::string>(), where + ".init");
  c.init_sigma = field_or(doc, "init_sigma", c.init_sigma, where);
  c.coarse_sigma = field_or(doc, "coarse_sigma", c.coarse_sigma, where);
  c.fine_sigma = field_or(doc, "fine_sigma", c.fine_sigma, where);
  c.flip_augmentation = field_or(doc, "flip_augmentation", c.flip_augmentation, where);
  c.monitor_samples = field_or(doc, "monitor_samples", c.monitor_samples, where);
  try {
    c.validate();
  } catch (const Error& e) {
    detail::schema_error(where, e.what());
  }
  return c;
}

nlohmann::json RefinerConfig::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : image_flip_pairs) pairs.push_back({a, b});
  return {{"input_size", {input_width, input_height}},
          {"heatmap_size", {heatmap_width, heatmap_height}},
          {"widths", {narrow_width, wide_width}},
          {"image_channels", image_channels},
          {"image_flip_pairs", pairs},
          {"lr", {{"initial", lr.initial}, {"factor", lr.factor}, {"decay_epochs", lr.decay_epochs}}},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"loss_mode", to_string(loss_mode)},
          {"seed", seed},
          {"init", to_string(init)},
          {"init_sigma", init_sigma},
          {"coarse_sigma", coarse_sigma},
          {"fine_sigma", fine_sigma},
          {"flip_augmentation", flip_augmentation},
          {"monitor_samples", monitor_samples}};
}

Coord crop_to_heatmap(const Coord& c, int stride) {
  const double off = (stride - 1) / 2.0;
  return {(c.x - off) / stride, (c.y - off) / stride};
}

Coord heatmap_to_crop(const Coord& h, int stride) {
  const double off = (stride - 1) / 2.0;
  return {h.x * stride + off, h.y * stride + off};
}

RefinerModel RefinerModel::create(const RefinerConfig& config, int joints) {
  RefinerModel m = zeros(config, joints);
  initialize(m.net, config);
  return m;
}

RefinerModel RefinerModel::zeros(const RefinerConfig& config, int joints) {
  RefinerModel m;
  m.config = config;
  m.joints = joints;
  m.net = ConvNet<float>(config.architecture(joints));
  return m;
}

void RefinerModel::save(const std::string& path) const {
  const std::string stem = params_stem(path);
  const auto p = net.params();
  detail::write_f32_le(stem + ".bin", std::vector<float>(p.begin(), p.end()));
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  int index = 0;
  for (const auto& l : net.architecture().layers) {
    if (l.kind != LayerSpec::Kind::conv) continue;
    const std::size_t nw = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
    tensors.push_back({{"name", "conv" + std::to_string(index) + ".weight"},
                       {"shape", {l.out_channels, l.in_channels, l.kernel, l.kernel}},
                       {"offset", offset},
                       {"count", nw}});
    offset += nw;
    tensors.push_back({{"name", "conv" + std::to_string(index) + ".bias"},
                       {"shape", {l.out_channels}},
                       {"offset", offset},
                       {"count", l.out_channels}});
    offset += static_cast<std::size_t>(l.out_channels);
    ++index;
  }
  const auto slash = stem.find_last_of('/');
  detail::write_json_file(stem + ".json",
                          {{"format", kParamsFormat},
                           {"version", kParamsVersion},
                           {"dtype", "float32"},
                           {"endianness", "little"},
                           {"data", (slash == std::string::npos ? stem : stem.substr(slash + 1)) + ".bin"},
                           {"joints", joints},
                           {"num_params", p.size()},
                           {"config", config.to_json()},
                           {"architecture", net.architecture().to_json()},
                           {"tensors", tensors}});
}

RefinerModel RefinerModel::load(const std::string& path) {
  const std::string stem = params_stem(path);
  const auto doc = detail::read_json_file(stem + ".json");
  const std::string where = stem + ".json";
  if (detail::field<std::string>(doc, "format", where) != kParamsFormat)
    detail::schema_error(where + ".format", "not a refiner parameter manifest");
  if (detail::field<int>(doc, "version", where) != kParamsVersion)
    detail::schema_error(where + ".version", "unsupported version");
  const auto config = RefinerConfig::from_json(doc.at("config"));
  const int joints = detail::field<int>(doc, "joints", where);
  RefinerModel m = zeros(config, joints);
  if (!doc.contains("architecture") ||
      Architecture::from_json(doc.at("architecture")) != m.net.architecture())
    detail::schema_error(where + ".architecture", "does not match the config");
  const auto data = detail::read_f32_le(stem + ".bin");
  if (data.size() != m.net.num_params() ||
      detail::field<std::size_t>(doc, "num_params", where) != data.size())
    detail::schema_error(stem + ".bin", "expected " + std::to_string(m.net.num_params()) +
                                            " parameters, found " + std::to_string(data.size()));
  std::copy(data.begin(), data.end(), m.net.params().begin());
  return m;
}

template <class T>
std::vector<T> build_input(const RefinerConfig& config, int joints, const Image& image,
                           const Pose& input_pose) {
  const int w = config.input_width;
  const int h = config.input_height;
  require(input_pose.size() == static_cast<std::size_t>(joints),
          "refiner: input pose length does not match the joint count");
  const bool has_image = image.channels > 0;
  if (has_image)
    require(image.channels == config.image_channels && image.width == w && image.height == h,
            "refiner: image shape does not match the configured input");
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<T> input(plane * static_cast<std::size_t>(config.image_channels + joints), T(0));
  if (has_image)
    std::transform(image.data.begin(), image.data.end(), input.begin(),
                   [](float v) { return static_cast<T>(v); });
  const double sigma = config.input_sigma();
  for (int j = 0; j < joints; ++j) {
    const auto& kp = input_pose.keypoints[static_cast<std::size_t>(j)];
    if (!kp.labeled()) continue;
    const Heatmap g = gaussian_encode(kp, sigma, w, h);
    const auto gv = g.values();
    T* dst = input.data() + plane * static_cast<std::size_t>(config.image_channels + j);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(gv[i]);
  }
  return input;
}

template std::vector<float> build_input<float>(const RefinerConfig&, int, const Image&, const Pose&);
template std::vector<double> build_input<double>(const RefinerConfig&, int, const Image&, const Pose&);

RefinerTarget build_target(const RefinerConfig& config, int joints, const Pose& gt_crop_pose) {
  require(gt_crop_pose.size() == static_cast<std::size_t>(joints),
          "refiner: gt pose length does not match the joint count");
  const int hw = config.heatmap_width;
  const int hh = config.heatmap_height;
  RefinerTarget t;
  t.maps.reserve(static_cast<std::size_t>(joints));
  t.coords.resize(static_cast<std::size_t>(joints));
  t.mask.assign(static_cast<std::size_t>(joints), 0);
  for (int j = 0; j < joints; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const auto& kp = gt_crop_pose.keypoints[idx];
    if (!kp.labeled()) {
      t.maps.emplace_back(hw, hh);
      continue;
    }
    const Coord c = crop_to_heatmap(kp.coord(), config.stride());
    t.coords[idx] = c;
    auto enc = target_encode(c, hw, hh);
    // Joints whose target falls off the grid carry no supervision.
    t.mask[idx] = enc.clamped ? 0 : 1;
    if (config.loss_mode == LossMode::c2c)
      t.maps.push_back(gaussian_encode(c, config.coarse_sigma, hw, hh));
    else
      t.maps.push_back(std::move(enc.map));
  }
  return t;
}

LossEvaluation evaluate_loss(const RefinerConfig& config, int joints, std::span<const double> output,
                             const RefinerTarget& target) {
  const int hw = config.heatmap_width;
  const int hh = config.heatmap_height;
  require(output.size() == static_cast<std::size_t>(joints) * hw * hh,
          "refiner: network output size does not match the heatmap shape");
  LossEvaluation out;
  out.grad_output.assign(output.size(), 0.0);
  if (std::none_of(target.mask.begin(), target.mask.end(), [](auto m) { return m != 0; }))
    return out;
  const auto maps = to_heatmaps(output, joints, hw, hh);
  std::vector<Heatmap> grad;
  if (config.loss_mode == LossMode::c2c) {
    auto mse = heatmap_mse_loss(maps, target.maps, target.mask);
    out.loss = mse.value;
    out.heatmap_term = mse.value;
    grad = std::move(mse.grad);
  } else {
    LossWeights w;
    if (config.loss_mode == LossMode::c2f_lh_only) w.coord = 0.0;
    if (config.loss_mode == LossMode::c2f_lc_only) w.heatmap = 0.0;
    auto il = integral_loss(maps, target.maps, target.coords, target.mask, w);
    out.loss = il.total;
    out.heatmap_term = il.heatmap_term;
    out.coord_term = il.coord_term;
    grad = std::move(il.grad);
  }
  const std::size_t n = static_cast<std::size_t>(hw) * hh;
  for (std::size_t j = 0; j < grad.size(); ++j) {
    const auto gv = grad[j].values();
    std::copy(gv.begin(), gv.end(), out.grad_output.begin() + static_cast<std::ptrdiff_t>(j * n));
  }
  return out;
}

template <class T>
TrainingExample<T> make_example(const RefinerConfig& config, int joints, const Image& image,
                                const Pose& input_pose, const Pose& gt_pose) {
  return {build_input<T>(config, joints, image, input_pose), build_target(config, joints, gt_pose)};
}

template TrainingExample<float> make_example<float>(const RefinerConfig&, int, const Image&,
                                                    const Pose&, const Pose&);
template TrainingExample<double> make_example<double>(const RefinerConfig&, int, const Image&,
                                                      const Pose&, const Pose&);

template <class T>
double batch_gradient(const ConvNet<T>& net, const RefinerConfig& config, int joints,
                      std::span<const TrainingExample<T>> batch, std::vector<T>& grad,
                      std::size_t first_index) {
  require(!batch.empty(), "batch_gradient: empty batch");
  grad.assign(net.num_params(), T(0));
  typename ConvNet<T>::Workspace ws;
  std::vector<T> grad_out;
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    net.forward(batch[i].input, ws);
    const auto& y = ws.activations.back();
    const std::vector<double> yd(y.begin(), y.end());
    if (!std::all_of(yd.begin(), yd.end(), [](double v) { return std::isfinite(v); }))
      fail(ErrorCategory::diverged, "non-finite network output at sample " +
                                        std::to_string(first_index + i));
    const auto le = evaluate_loss(config, joints, yd, batch[i].target);
    if (!std::isfinite(le.loss))
      fail(ErrorCategory::diverged, "non-finite loss at sample " + std::to_string(first_index + i) +
                                        " (L_H " + std::to_string(le.heatmap_term) + ", L_C " +
                                        std::to_string(le.coord_term) + ")");
    total += le.loss;
    grad_out.resize(le.grad_output.size());
    for (std::size_t k = 0; k < grad_out.size(); ++k)
      grad_out[k] = static_cast<T>(le.grad_output[k] * inv_b);
    net.backward(ws, grad_out, grad);
  }
  return total * inv_b;
}

template double batch_gradient<float>(const ConvNet<float>&, const RefinerConfig&, int,
                                      std::span<const TrainingExample<float>>, std::vector<float>&,
                                      std::size_t);
template double batch_gradient<double>(const ConvNet<double>&, const RefinerConfig&, int,
                                       std::span<const TrainingExample<double>>,
                                       std::vector<double>&, std::size_t);

std::vector<Heatmap> forward(const RefinerModel& model, const Image& crop, const Pose& input_pose) {
  const auto input = build_input<float>(model.config, model.joints, crop, input_pose);
  ConvNet<float>::Workspace ws;
  model.net.forward(input, ws);
  const auto& y = ws.activations.back();
  const std::vector<double> yd(y.begin(), y.end());
  return to_heatmaps(yd, model.joints, model.config.heatmap_width, model.config.heatmap_height);
}

Pose refine_crop(const RefinerModel& model, const Image& crop, const Pose& input_pose,
                 const SkeletonSpec& spec, bool flip_tta) {
  require(spec.num_joints() == model.joints, "refine: skeleton does not match the model");
  auto logits = forward(model, crop, input_pose);
  if (flip_tta) {
    const Image mirrored = crop.channels > 0
                               ? mirror_image(crop, model.config.image_flip_pairs)
                               : crop;
    const auto flipped = forward(model, mirrored,
                                 mirror_crop_pose(input_pose, model.config.input_width, spec));
    logits = flip_merge(logits, flipped, spec);
  }
  Pose out = input_pose;
  for (int j = 0; j < model.joints; ++j) {
    auto& kp = out.keypoints[static_cast<std::size_t>(j)];
    if (!kp.labeled()) continue;
    const Heatmap& z = logits[static_cast<std::size_t>(j)];
    const Coord h = model.config.loss_mode == LossMode::c2c ? hard_argmax(z)
                                                            : soft_argmax(spatial_softmax(z));
    const Coord c = heatmap_to_crop(h, model.config.stride());
    kp.x = c.x;
    kp.y = c.y;
  }
  return out;
}

AffineTransform refinement_crop(const RefinerConfig& config, const Pose& input_pose) {
  const BBox box = extend_aspect(bbox_from_pose(input_pose, 0.25),
                                 static_cast<double>(config.input_height) / config.input_width);
  return crop_transform(box, config.input_width, config.input_height);
}

Pose refine(const RefinerModel& model, const Image& image, const Pose& input_pose,
            const SkeletonSpec& spec, bool flip_tta) {
  AffineTransform t;
  try {
    t = refinement_crop(model.config, input_pose);
  } catch (const Error&) {
    return input_pose;
  }
  const Image crop = image.channels > 0
                         ? warp_image(image, t, model.config.input_width, model.config.input_height)
                         : Image();
  const Pose crop_pose = apply_to_pose(t, input_pose, spec, false).pose;
  Pose refined = refine_crop(model, crop, crop_pose, spec, flip_tta);
  return apply_to_pose(t.inverse(), refined, spec, false).pose;
}

std::pair<double, double> mean_oks(const RefinerModel& model, std::span<const ToySample> samples,
                                   const SkeletonSpec& spec, bool flip_tta) {
  require(!samples.empty(), "mean_oks: no samples");
  double in = 0.0, out = 0.0;
  for (const auto& s : samples) {
    in += oks(s.corrupted_pose, s.gt_pose, s.scale, spec).value;
    const Pose r = refine_crop(model, s.image, s.corrupted_pose, spec, flip_tta);
    out += oks(r, s.gt_pose, s.scale, spec).value;
  }
  const double n = static_cast<double>(samples.size());
  return {in / n, out / n};
}

TrainResult train(std::span<const ToySample> dataset, const RefinerConfig& config,
                  const SkeletonSpec& spec, std::span<const ToySample> monitor,
                  const EpochCallback& on_epoch) {
  require(!dataset.empty(), "train: dataset is empty");
  config.validate();
  const int joints = spec.num_joints();
  for (const auto& s : dataset)
    require(s.image.width == config.input_width && s.image.height == config.input_height &&
                s.image.channels == config.image_channels,
            "train: sample image shape does not match the configured input");

  TrainResult result{RefinerModel::create(config, joints), {}};
  auto& net = result.model.net;
  const std::size_t np = net.num_params();
  std::vector<double> m(np, 0.0), v(np, 0.0);
  std::vector<float> grad;
  const std::span<const ToySample> monitor_set =
      !monitor.empty() ? monitor
                       : dataset.first(std::min<std::size_t>(
                             dataset.size(), static_cast<std::size_t>(config.monitor_samples)));

  std::vector<std::size_t> order(dataset.size());
  std::vector<TrainingExample<float>> batch;
  long long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, "refiner-shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = config.lr.rate(epoch, config.epochs);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const ToySample& s = dataset[order[k]];
        bool flip = false;
        if (config.flip_augmentation) {
          Rng aug(derive_seed(config.seed, "refiner-flip",
                              static_cast<std::uint64_t>(epoch) * dataset.size() + order[k]));
          flip = std::bernoulli_distribution(0.5)(aug);
        }
        if (flip)
          batch.push_back(make_example<float>(
              config, joints, mirror_image(s.image, config.image_flip_pairs),
              mirror_crop_pose(s.corrupted_pose, config.input_width, spec),
              mirror_crop_pose(s.gt_pose, config.input_width, spec)));
        else
          batch.push_back(make_example<float>(config, joints, s.image, s.corrupted_pose, s.gt_pose));
      }
      const double loss = batch_gradient<float>(net, config, joints, batch, grad, order[start]);
      loss_sum += loss;
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      auto p = net.params();
      for (std::size_t i = 0; i < np; ++i) {
        const double g = grad[i];
        m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
        v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
        p[i] = static_cast<float>(p[i] - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_epsilon));
      }
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.learning_rate = lr;
    em.loss = loss_sum / static_cast<double>(batches);
    if (!monitor_set.empty()) std::tie(em.input_oks, em.refined_oks) = mean_oks(result.model, monitor_set, spec);
    result.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

const AblationSummary& AblationResult::of(LossMode mode) const {
  for (const auto& s : summary)
    if (s.mode == mode) return s;
  fail(ErrorCategory::invalid_argument, std::string("ablation: mode ") + to_string(mode) + " was not run");
}

std::string AblationResult::csv() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "mode,seed,input_oks,refined_oks\n";
  for (const auto& r : rows)
    os << to_string(r.mode) << ',' << r.seed << ',' << r.input_oks << ',' << r.refined_oks << '\n';
  for (const auto& s : summary)
    os << to_string(s.mode) << ",mean," << mean_input_oks << ',' << s.mean_refined_oks << '\n';
  return os.str();
}

AblationResult run_ablation(std::span<const ToySample> train_set,
                            std::span<const ToySample> held_out, const SkeletonSpec& spec,
                            const RefinerConfig& base, std::span<const LossMode> modes,
                            std::span<const std::uint64_t> seeds,
                            const std::function<void(const AblationRow&)>& on_row) {
  require(!modes.empty() && !seeds.empty(), "ablation: need at least one mode and one seed");
  require(!held_out.empty(), "ablation: held-out set is empty");
  AblationResult result;
  for (LossMode mode : modes) {
    AblationSummary s;
    s.mode = mode;
    s.min_refined_oks = 1e300;
    s.max_refined_oks = -1e300;
    for (std::uint64_t seed : seeds) {
      RefinerConfig cfg = base;
      cfg.loss_mode = mode;
      cfg.seed = seed;
      cfg.monitor_samples = 0;
      const auto trained = train(train_set, cfg, spec, {}, {});
      const auto [in, out] = mean_oks(trained.model, held_out, spec);
      AblationRow row{mode, seed, in, out};
      result.rows.push_back(row);
      result.mean_input_oks = in;
      s.mean_refined_oks += out / static_cast<double>(seeds.size());
      s.min_refined_oks = std::min(s.min_refined_oks, out);
      s.max_refined_oks = std::max(s.max_refined_oks, out);
      if (on_row) on_row(row);
    }
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace posefix
