#include "posefix/config.hpp"

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "embedded_config.hpp"
#include "json_util.hpp"
#include "posefix/error.hpp"

namespace posefix {

namespace {

std::string resolve(const std::string& path, const std::string& base_dir) {
  std::filesystem::path p(path);
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  if (!std::filesystem::exists(p)) fail(ErrorCategory::io, "referenced file not found: " + p.string());
  return p.string();
}

// A config entry naming a JSON resource: a path string, an inline object,
// or absent for the built-in default.
template <class F>
auto load_resource(const nlohmann::json& doc, const char* key, const std::string& base_dir, F parse,
                   const char* builtin) {
  if (!doc.contains(key) || doc.at(key).is_null()) return parse(nlohmann::json::parse(builtin));
  const auto& v = doc.at(key);
  if (v.is_string()) return parse(detail::read_json_file(resolve(v.get<std::string>(), base_dir)));
  if (v.is_object()) return parse(v);
  detail::schema_error(std::string("config.") + key, "expected a path or an object");
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void CodecConfig::validate() const {
  require(sigma > 0.0, "codec config: sigma must be positive");
  require(width > 0 && height > 0, "codec config: heatmap size must be positive");
}

LogLevel parse_log_level(std::string_view s) {
  if (s == "error") return LogLevel::error;
  if (s == "warn") return LogLevel::warn;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  fail(ErrorCategory::invalid_argument, "unknown log level '" + std::string(s) + "'");
}

const char* to_string(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "?";
}

GlobalConfig GlobalConfig::defaults() { return from_json(nlohmann::json::object(), ""); }

GlobalConfig GlobalConfig::from_json(const nlohmann::json& doc, const std::string& base_dir) {
  using detail::field_or;
  if (!doc.is_object()) detail::schema_error("config", "expected a JSON object");
  static const std::set<std::string> known = {"skeleton", "error_table", "toy_table", "synthesis",
                                              "codec",    "refiner",     "toy",       "ablation",
                                              "eval",     "log_level"};
  for (const auto& [key, value] : doc.items())
    if (!known.contains(key) && !key.starts_with("_"))
      detail::schema_error("config." + key, "unknown key");
  GlobalConfig c;
  c.skeleton = load_resource(
      doc, "skeleton", base_dir, [](const nlohmann::json& j) { return SkeletonSpec::from_json(j); },
      detail::kDefaultSkeleton);
  const auto table_parser = [&c](const nlohmann::json& j) {
    return ErrorDistributionTable::from_json(j, c.skeleton);
  };
  c.table = load_resource(doc, "error_table", base_dir, table_parser, detail::kDefaultErrorTable);
  c.toy_table = load_resource(doc, "toy_table", base_dir, table_parser, detail::kToyErrorTable);
  if (doc.contains("synthesis")) c.synthesis = SynthesisConfig::from_json(doc.at("synthesis"));
  if (doc.contains("codec")) {
    const auto& j = doc.at("codec");
    c.codec.sigma = field_or(j, "sigma", c.codec.sigma, "config.codec");
    if (j.contains("heatmap_size")) {
      const auto& s = j.at("heatmap_size");
      if (!s.is_array() || s.size() != 2) detail::schema_error("config.codec.heatmap_size", "expected [w, h]");
      c.codec.width = s[0].get<int>();
      c.codec.height = s[1].get<int>();
    }
    try {
      c.codec.validate();
    } catch (const Error& e) {
      detail::schema_error("config.codec", e.what());
    }
  }
  if (doc.contains("refiner")) c.refiner = RefinerConfig::from_json(doc.at("refiner"));
  if (doc.contains("toy")) {
    const auto& j = doc.at("toy");
    c.toy.train_samples = field_or(j, "train_samples", c.toy.train_samples, "config.toy");
    c.toy.held_out_samples = field_or(j, "held_out_samples", c.toy.held_out_samples, "config.toy");
    c.toy.neighbor_probability =
        field_or(j, "neighbor_probability", c.toy.neighbor_probability, "config.toy");
    if (c.toy.train_samples < 1 || c.toy.held_out_samples < 1)
      detail::schema_error("config.toy", "sample counts must be at least 1");
  }
  if (doc.contains("ablation")) {
    const auto& j = doc.at("ablation");
    auto& a = c.ablation;
    a.train_samples = field_or(j, "train_samples", a.train_samples, "config.ablation");
    a.held_out_samples = field_or(j, "held_out_samples", a.held_out_samples, "config.ablation");
    a.epochs = field_or(j, "epochs", a.epochs, "config.ablation");
    a.seeds = field_or(j, "seeds", a.seeds, "config.ablation");
    if (j.contains("modes")) {
      a.modes.clear();
      for (const auto& m : j.at("modes")) {
        try {
          a.modes.push_back(parse_loss_mode(m.get<std::string>()));
        } catch (const Error& e) {
          detail::schema_error("config.ablation.modes", e.what());
        }
      }
    }
    if (a.train_samples < 1 || a.held_out_samples < 1 || a.epochs < 1 || a.seeds.empty() ||
        a.modes.empty())
      detail::schema_error("config.ablation", "needs positive budgets, seeds and modes");
  }
  if (doc.contains("eval")) c.eval = EvalParams::from_json(doc.at("eval"));
  if (doc.contains("log_level")) {
    try {
      c.log_level = parse_log_level(doc.at("log_level").get<std::string>());
    } catch (const Error& e) {
      detail::schema_error("config.log_level", e.what());
    }
  }
  return c;
}

GlobalConfig GlobalConfig::load(const std::string& path) {
  const auto doc = detail::read_json_file(path);
  return from_json(doc, std::filesystem::path(path).parent_path().string());
}

nlohmann::json GlobalConfig::to_json() const {
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : ablation.modes) modes.push_back(to_string(m));
  return {{"skeleton", skeleton.to_json()},
          {"error_table", table.to_json(skeleton)},
          {"toy_table", toy_table.to_json(skeleton)},
          {"synthesis", synthesis.to_json()},
          {"codec", {{"sigma", codec.sigma}, {"heatmap_size", {codec.width, codec.height}}}},
          {"refiner", refiner.to_json()},
          {"toy",
           {{"train_samples", toy.train_samples},
            {"held_out_samples", toy.held_out_samples},
            {"neighbor_probability", toy.neighbor_probability}}},
          {"ablation",
           {{"train_samples", ablation.train_samples},
            {"held_out_samples", ablation.held_out_samples},
            {"epochs", ablation.epochs},
            {"seeds", ablation.seeds},
            {"modes", modes}}},
          {"eval", eval.to_json()},
          {"log_level", to_string(log_level)}};
}

std::uint64_t GlobalConfig::hash() const { return fnv1a64(to_json().dump()); }

}  // namespace posefix
