#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "posefix/error.hpp"

namespace posefix::detail {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCategory::schema, path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCategory::io, "write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const nlohmann::json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

[[noreturn]] inline void schema_error(const std::string& where, const std::string& what) {
  fail(ErrorCategory::schema, where + ": " + what);
}

// Typed field access that reports the JSON path on failure.
template <class T>
T field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + "." + key, "missing");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    schema_error(where + "." + key, e.what());
  }
}

template <class T>
T field_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.is_object()) schema_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    schema_error(where + "." + key, e.what());
  }
}

}  // namespace posefix::detail
