#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "posefix/config.hpp"
#include "posefix/error.hpp"

using namespace posefix;
using nlohmann::json;

namespace {

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
  }

  TEST_CASE("defaults round trip through json") {
    const auto d = GlobalConfig::defaults();
    const auto back = GlobalConfig::from_json(d.to_json(), ".");
    CHECK(back.hash() == d.hash());
    CHECK(back.to_json() == d.to_json());
    CHECK(d.refiner.heatmap_width == 24);
    CHECK(d.ablation.seeds.size() == 3);
  }

  TEST_CASE("relative resource paths resolve against the config file") {
    const auto dir = testutil::temp_dir("config_paths");
    std::filesystem::create_directories(dir / "sub");
    write(dir / "sub" / "table.json",
          R"({"fallback": {"good": 0.5, "jitter": 0.5, "inversion": 0, "swap": 0, "miss": 0}})");
    write(dir / "cfg.json", R"({"error_table": "sub/table.json", "seed_note": 1})");
    CHECK_THROWS_AS(GlobalConfig::load((dir / "cfg.json").string()), Error);
    write(dir / "cfg.json",
          R"({"error_table": "sub/table.json", "refiner": {"epochs": 3}, "log_level": "debug"})");
    const auto c = GlobalConfig::load((dir / "cfg.json").string());
    CHECK(c.table.lookup({0, 0, false})[1] == 0.5);
    CHECK(c.refiner.epochs == 3);
    CHECK(c.log_level == LogLevel::debug);
    CHECK(c.hash() != GlobalConfig::defaults().hash());
  }

  TEST_CASE("load errors carry categories") {
    const auto dir = testutil::temp_dir("config_errors");
    try {
      GlobalConfig::load((dir / "absent.json").string());
      FAIL("expected io error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::io);
    }
    write(dir / "bad.json", "{not json");
    try {
      GlobalConfig::load((dir / "bad.json").string());
      FAIL("expected schema error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::schema);
    }
    write(dir / "missing_ref.json", R"({"skeleton": "nowhere.json"})");
    try {
      GlobalConfig::load((dir / "missing_ref.json").string());
      FAIL("expected io error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::io);
    }
  }

  TEST_CASE("log levels") {
    CHECK(parse_log_level("warn") == LogLevel::warn);
    CHECK(std::string(to_string(LogLevel::info)) == "info");
    CHECK_THROWS_AS(parse_log_level("loud"), Error);
  }
}
