#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "posefix/posefix.h"

namespace {

std::string data(const std::string& name) { return std::string(POSEFIX_TEST_DATA) + "/" + name; }

struct Owned {
  char* p = nullptr;
  ~Owned() { posefix_string_free(p); }
  nlohmann::json json() const { return nlohmann::json::parse(p); }
};

struct Cfg {
  posefix_config* p = nullptr;
  Cfg() { REQUIRE(posefix_config_default(&p) == POSEFIX_OK); }
  ~Cfg() { posefix_config_free(p); }
};

std::vector<double> flat_pose(double dx) {
  std::vector<double> v;
  for (int j = 0; j < 17; ++j) v.insert(v.end(), {100.0 + 5 * j + dx, 50.0 + 3 * j, 2.0});
  return v;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("version and status names") {
    CHECK(std::string(posefix_version()) == "0.3.0");
    CHECK(std::string(posefix_status_name(POSEFIX_ERR_SCHEMA)) == "schema");
    CHECK(std::string(posefix_status_name(POSEFIX_OK)) == "ok");
  }

  TEST_CASE("numerics") {
    double v = 0;
    REQUIRE(posefix_ks(11.7741, 100, 0.1, &v) == POSEFIX_OK);
    CHECK(std::abs(v - 0.5) < 1e-4);
    REQUIRE(posefix_ks_radius(0.1, 100, 0.1, &v) == POSEFIX_OK);
    CHECK(std::abs(v - 21.4597) < 1e-3);
    CHECK(posefix_ks(std::numeric_limits<double>::quiet_NaN(), 100, 0.1, &v) ==
          POSEFIX_ERR_INVALID_ARGUMENT);
    CHECK(std::string(posefix_last_error()).size() > 0);
    CHECK(posefix_ks(1, 1, 1, nullptr) == POSEFIX_ERR_INVALID_ARGUMENT);
    REQUIRE(posefix_ks(1, 1, 1, &v) == POSEFIX_OK);
    CHECK(std::string(posefix_last_error()).empty());

    double map[6];
    REQUIRE(posefix_target_encode(0.5, 1.0, 3, 2, map, nullptr) == POSEFIX_OK);
    CHECK(map[3] == doctest::Approx(0.5));
    CHECK(map[4] == doctest::Approx(0.5));
    double x = 0, y = 0;
    REQUIRE(posefix_soft_argmax(map, 3, 2, &x, &y) == POSEFIX_OK);
    CHECK(x == doctest::Approx(0.5));
    CHECK(y == doctest::Approx(1.0));
    const double logits[2] = {0.0, std::log(3.0)};
    double prob[2];
    REQUIRE(posefix_spatial_softmax(logits, 2, 1, prob) == POSEFIX_OK);
    CHECK(prob[1] == doctest::Approx(0.75));
    REQUIRE(posefix_gaussian_encode(1, 0, 1.0, 3, 1, map) == POSEFIX_OK);
    CHECK(map[1] == 1.0);
    CHECK(map[0] == doctest::Approx(std::exp(-0.5)));

    const double z[2] = {0, 0}, t[2] = {1, 0}, c[2] = {0, 0};
    const unsigned char mask[1] = {1};
    double loss, lh, lc, grad[2];
    REQUIRE(posefix_integral_loss(z, t, c, mask, 1, 2, 1, 1.0, 1.0, &loss, &lh, &lc, grad) ==
            POSEFIX_OK);
    CHECK(lh == doctest::Approx(std::log(2.0)));
    const unsigned char off[1] = {0};
    CHECK(posefix_integral_loss(z, t, c, off, 1, 2, 1, 1.0, 1.0, &loss, &lh, &lc, nullptr) ==
          POSEFIX_ERR_INVALID_ARGUMENT);
  }

  TEST_CASE("skeleton, oks and classification") {
    posefix_skeleton* s = nullptr;
    REQUIRE(posefix_skeleton_coco(&s) == POSEFIX_OK);
    CHECK(posefix_skeleton_num_joints(s) == 17);
    const auto truth = flat_pose(0), est = flat_pose(0);
    double v = 0;
    int degenerate = 1;
    REQUIRE(posefix_oks(s, est.data(), truth.data(), 80, &v, &degenerate) == POSEFIX_OK);
    CHECK(v == 1.0);
    CHECK(degenerate == 0);
    posefix_skeleton_free(s);

    Cfg cfg;
    posefix_error_type type;
    REQUIRE(posefix_classify_keypoint(cfg.p, truth.data(), nullptr, 0, 100, 9, truth[27] + 1,
                                      truth[28], &type) == POSEFIX_OK);
    CHECK(type == POSEFIX_GOOD);
    CHECK(posefix_classify_keypoint(cfg.p, truth.data(), nullptr, 0, 100, 40, 0, 0, &type) ==
          POSEFIX_ERR_INVALID_ARGUMENT);
  }

  TEST_CASE("config loading statuses") {
    const auto dir = std::filesystem::temp_directory_path() / "posefix_capi_cfg";
    std::filesystem::create_directories(dir);
    posefix_config* c = nullptr;
    CHECK(posefix_config_load((dir / "absent.json").c_str(), &c) == POSEFIX_ERR_IO);
    std::ofstream(dir / "bad.json") << "{\"refiner\": {\"epochs\": \"many\"}}";
    CHECK(posefix_config_load((dir / "bad.json").c_str(), &c) == POSEFIX_ERR_SCHEMA);
    std::ofstream(dir / "ok.json") << "{\"refiner\": {\"epochs\": 2}}";
    REQUIRE(posefix_config_load((dir / "ok.json").c_str(), &c) == POSEFIX_OK);
    uint64_t h1 = 0, h2 = 0;
    Cfg d;
    posefix_config_hash(c, &h1);
    posefix_config_hash(d.p, &h2);
    CHECK(h1 != h2);
    Owned j;
    REQUIRE(posefix_config_json(c, &j.p) == POSEFIX_OK);
    CHECK(j.json().at("refiner").at("epochs") == 2);
    CHECK(posefix_config_set_table(c, (dir / "absent.json").c_str()) == POSEFIX_ERR_IO);
    posefix_config_free(c);
  }

  TEST_CASE("evaluate file") {
    Cfg cfg;
    Owned r;
    REQUIRE(posefix_evaluate_file(cfg.p, data("multi_person_gt.json").c_str(),
                                  data("multi_person_dt.json").c_str(), nullptr, &r.p) == POSEFIX_OK);
    const auto doc = r.json();
    CHECK(doc.at("metrics").at("AP").get<double>() == doctest::Approx(0.18061929722384004));
    CHECK(doc.at("table").get<std::string>().size() > 0);
    Owned bad;
    CHECK(posefix_evaluate_file(cfg.p, data("multi_person_dt.json").c_str(),
                                data("multi_person_dt.json").c_str(), nullptr,
                                &bad.p) == POSEFIX_ERR_SCHEMA);
  }

  TEST_CASE("codec check and log callback") {
    Cfg cfg;
    Owned r;
    REQUIRE(posefix_codec_check(cfg.p, 3, 500, &r.p) == POSEFIX_OK);
    const auto doc = r.json();
    CHECK(doc.at("pass").get<bool>());
    CHECK(doc.at("max_roundtrip_error").get<double>() < 1e-9);
    CHECK(posefix_codec_check(cfg.p, 3, 0, &r.p) == POSEFIX_ERR_INVALID_ARGUMENT);
  }

  TEST_CASE("hash file") {
    const auto p = std::filesystem::temp_directory_path() / "posefix_hash.txt";
    std::ofstream(p) << "foobar";
    uint64_t h = 0;
    REQUIRE(posefix_hash_file(p.c_str(), &h) == POSEFIX_OK);
    CHECK(h == 0x85944171f73967e8ULL);
    CHECK(posefix_hash_file("/nonexistent/x", &h) == POSEFIX_ERR_IO);
  }
}
