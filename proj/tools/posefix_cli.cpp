// posefix command-line front end. Talks to the library only through the C API.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "posefix/posefix.h"

namespace {

constexpr int kExitUsage = 2;
// Library failures exit with 10 + posefix_status.
constexpr int kExitBase = 10;

struct Failure {
  posefix_status status;
  std::string message;
};

void check(posefix_status s) {
  if (s != POSEFIX_OK) throw Failure{s, posefix_last_error()};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { posefix_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct Config {
  posefix_config* p = nullptr;
  ~Config() { posefix_config_free(p); }
};

int g_log_level = 2;

void log_line(void*, int level, const char* message) {
  if (level <= g_log_level) std::cerr << "[posefix] " << message << '\n';
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json file_entry(const std::string& path, bool basename_only) {
  std::uint64_t h = 0;
  check(posefix_hash_file(path.c_str(), &h));
  const std::string shown = basename_only ? std::filesystem::path(path).filename().string() : path;
  return {{"path", shown}, {"fnv1a64", hex64(h)}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{POSEFIX_ERR_IO, "cannot write " + path};
  out << text;
  if (!out) throw Failure{POSEFIX_ERR_IO, "failed writing " + path};
}

std::string stem_of(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

// Manifest beside the first output: enough to rerun the command.
void write_manifest(const posefix_config* cfg, const std::string& command, std::uint64_t seed,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::pair<std::string, std::string>>& outputs) {
  if (outputs.empty()) return;
  std::uint64_t hash = 0;
  check(posefix_config_hash(cfg, &hash));
  OwnedString cfg_json;
  check(posefix_config_json(cfg, &cfg_json.p));
  nlohmann::json in = nlohmann::json::object(), out = nlohmann::json::object();
  for (const auto& [k, v] : inputs) in[k] = file_entry(v, false);
  for (const auto& [k, v] : outputs) out[k] = file_entry(v, true);
  const nlohmann::json manifest = {{"tool", "posefix"},
                                   {"version", posefix_version()},
                                   {"command", command},
                                   {"seed", seed},
                                   {"config_hash", hex64(hash)},
                                   {"inputs", in},
                                   {"outputs", out},
                                   {"config", nlohmann::json::parse(cfg_json.str())}};
  write_text(stem_of(outputs.front().second) + ".manifest.json", manifest.dump(2) + "\n");
}


}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posefix: pose error synthesis, diagnosis, refinement and keypoint AP"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(posefix_version()));

  std::string config_path;
  std::uint64_t seed = 0;
  std::string log_level;
  app.add_option("--config", config_path, "JSON config overriding the built-in defaults");
  app.add_option("--seed", seed, "Seed for every random stream");
  app.add_option("--log-level", log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::string table;
  std::string gt, dt, dt_before, out, labels, json_out, csv_out, params, images, modes;
  int samples = 10000;
  bool flip_tta = false;

  auto* syn = app.add_subcommand("synthesize", "Corrupt gt poses with sampled error types");
  syn->add_option("--gt", gt, "COCO keypoint annotations")->required();
  syn->add_option("--out", out, "Results JSON to write")->required();
  syn->add_option("--labels", labels, "Per-joint label sidecar (default <out stem>.labels.json)");
  syn->add_option("--table", table, "Error-distribution table (overrides the config)");

  auto* dia = app.add_subcommand("diagnose", "Count jitter/inversion/swap/miss per joint");
  dia->add_option("--gt", gt)->required();
  dia->add_option("--dt", dt)->required();
  dia->add_option("--out", json_out, "Report JSON");
  dia->add_option("--csv", csv_out, "Per-joint table CSV");

  auto* eva = app.add_subcommand("evaluate", "Keypoint AP/AR");
  eva->add_option("--gt", gt)->required();
  eva->add_option("--dt", dt)->required();
  eva->add_option("--dt-before", dt_before, "Baseline results for a delta table");
  eva->add_option("--json", json_out, "Write the metrics report");
  eva->add_option("--csv", csv_out, "Write the metrics table");

  auto* cod = app.add_subcommand("codec-check", "Numerical self-check of the heatmap codec");
  cod->add_option("--samples", samples, "Random round-trip samples")->check(CLI::PositiveNumber);
  cod->add_option("--out", json_out, "Report JSON");

  auto* trn = app.add_subcommand("train-toy", "Train the refiner on generated stick figures");
  trn->add_option("--out", params, "Parameter file stem (<stem>.json + <stem>.bin)")->required();
  trn->add_option("--report", json_out, "Training history JSON");

  auto* ref = app.add_subcommand("refine", "Refine detections with trained params");
  ref->add_option("--params", params)->required();
  ref->add_option("--gt", gt)->required();
  ref->add_option("--dt", dt)->required();
  ref->add_option("--out", out)->required();
  ref->add_option("--images", images, "Directory of <image_id> tensor dumps")
      ->check(CLI::ExistingDirectory);
  ref->add_flag("--flip-tta", flip_tta, "Average with the mirrored input");
  ref->add_option("--report", json_out, "Before/after metrics JSON");

  auto* abl = app.add_subcommand("ablate", "Compare loss modes on the toy task");
  abl->add_option("--modes", modes, "Comma-separated: C2F,C2C,F2F,C2F_LH,C2F_LC");
  abl->add_option("--out", csv_out, "CSV table");
  abl->add_option("--json", json_out, "JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    Config cfg;
    if (config_path.empty())
      check(posefix_config_default(&cfg.p));
    else
      check(posefix_config_load(config_path.c_str(), &cfg.p));
    check(posefix_config_log_level(cfg.p, &g_log_level));
    if (!log_level.empty())
      g_log_level = log_level == "error" ? 0 : log_level == "warn" ? 1 : log_level == "info" ? 2 : 3;
    posefix_set_log_callback(log_line, nullptr);

    std::vector<std::pair<std::string, std::string>> inputs;
    if (!config_path.empty()) inputs.emplace_back("config", config_path);

    if (*syn) {
      if (labels.empty()) labels = stem_of(out) + ".labels.json";
      if (!table.empty()) {
        check(posefix_config_set_table(cfg.p, table.c_str()));
        inputs.emplace_back("table", table);
      }
      check(posefix_synthesize_file(cfg.p, gt.c_str(), seed, out.c_str(), labels.c_str()));
      inputs.emplace_back("gt", gt);
      write_manifest(cfg.p, "synthesize", seed, inputs, {{"results", out}, {"labels", labels}});
    } else if (*dia) {
      OwnedString report;
      check(posefix_diagnose_file(cfg.p, gt.c_str(), dt.c_str(),
                                  json_out.empty() ? nullptr : json_out.c_str(),
                                  csv_out.empty() ? nullptr : csv_out.c_str(), &report.p));
      const auto doc = nlohmann::json::parse(report.str());
      std::cout << "overall:";
      for (const auto& [k, v] : doc.at("overall").items()) std::cout << ' ' << k << '=' << v;
      std::cout << "\nskipped: " << doc.value("skipped", 0) << '\n';
      inputs.emplace_back("gt", gt);
      inputs.emplace_back("dt", dt);
      std::vector<std::pair<std::string, std::string>> outs;
      if (!json_out.empty()) outs.emplace_back("report", json_out);
      if (!csv_out.empty()) outs.emplace_back("csv", csv_out);
      write_manifest(cfg.p, "diagnose", seed, inputs, outs);
    } else if (*eva) {
      OwnedString report;
      check(posefix_evaluate_file(cfg.p, gt.c_str(), dt.c_str(),
                                  dt_before.empty() ? nullptr : dt_before.c_str(), &report.p));
      auto doc = nlohmann::json::parse(report.str());
      std::cout << doc.at("table").get<std::string>();
      if (doc.contains("delta_table")) std::cout << '\n' << doc.at("delta_table").get<std::string>();
      std::vector<std::pair<std::string, std::string>> outs;
      if (!json_out.empty()) {
        nlohmann::json slim = doc;
        slim.erase("table");
        slim.erase("delta_table");
        slim.erase("csv");
        write_text(json_out, slim.dump(2) + "\n");
        outs.emplace_back("report", json_out);
      }
      if (!csv_out.empty()) {
        write_text(csv_out, doc.at("csv").get<std::string>());
        outs.emplace_back("csv", csv_out);
      }
      inputs.emplace_back("gt", gt);
      inputs.emplace_back("dt", dt);
      if (!dt_before.empty()) inputs.emplace_back("dt_before", dt_before);
      write_manifest(cfg.p, "evaluate", seed, inputs, outs);
    } else if (*cod) {
      OwnedString report;
      check(posefix_codec_check(cfg.p, seed, samples, &report.p));
      const auto doc = nlohmann::json::parse(report.str());
      std::cout << doc.dump(2) << '\n';
      if (!json_out.empty()) {
        write_text(json_out, doc.dump(2) + "\n");
        write_manifest(cfg.p, "codec-check", seed, inputs, {{"report", json_out}});
      }
      if (!doc.at("pass").get<bool>()) throw Failure{POSEFIX_ERR_INTERNAL, "codec check failed"};
    } else if (*trn) {
      OwnedString report;
      check(posefix_train_toy(cfg.p, seed, params.c_str(), &report.p));
      const auto doc = nlohmann::json::parse(report.str());
      const auto& h = doc.at("held_out");
      std::cout << "held-out mean OKS: input " << h.at("input_oks").get<double>() << " -> refined "
                << h.at("refined_oks").get<double>() << '\n';
      const std::string stem = stem_of(params);
      std::vector<std::pair<std::string, std::string>> outs{{"params", stem + ".json"},
                                                            {"tensor", stem + ".bin"}};
      if (!json_out.empty()) {
        write_text(json_out, doc.dump(2) + "\n");
        outs.emplace_back("report", json_out);
      }
      write_manifest(cfg.p, "train-toy", seed, inputs, outs);
    } else if (*ref) {
      OwnedString report;
      check(posefix_refine_file(cfg.p, params.c_str(), gt.c_str(), dt.c_str(),
                                images.empty() ? nullptr : images.c_str(), flip_tta ? 1 : 0,
                                out.c_str(), &report.p));
      const auto doc = nlohmann::json::parse(report.str());
      std::cout << doc.at("delta_table").get<std::string>();
      std::vector<std::pair<std::string, std::string>> outs{{"results", out}};
      if (!json_out.empty()) {
        write_text(json_out, doc.dump(2) + "\n");
        outs.emplace_back("report", json_out);
      }
      const std::string stem = stem_of(params);
      inputs.emplace_back("params", stem + ".json");
      inputs.emplace_back("tensor", stem + ".bin");
      inputs.emplace_back("gt", gt);
      inputs.emplace_back("dt", dt);
      write_manifest(cfg.p, "refine", seed, inputs, outs);
    } else if (*abl) {
      OwnedString csv, report;
      check(posefix_ablate(cfg.p, modes.empty() ? nullptr : modes.c_str(), seed, &csv.p, &report.p));
      std::cout << csv.str();
      std::vector<std::pair<std::string, std::string>> outs;
      if (!csv_out.empty()) {
        write_text(csv_out, csv.str());
        outs.emplace_back("csv", csv_out);
      }
      if (!json_out.empty()) {
        write_text(json_out, nlohmann::json::parse(report.str()).dump(2) + "\n");
        outs.emplace_back("report", json_out);
      }
      write_manifest(cfg.p, "ablate", seed, inputs, outs);
    }
  } catch (const Failure& f) {
    std::cerr << "posefix: " << posefix_status_name(f.status) << " error: " << f.message << '\n';
    return kExitBase + static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << "posefix: internal error: " << e.what() << '\n';
    return kExitBase + POSEFIX_ERR_INTERNAL;
  }
  return 0;
}
