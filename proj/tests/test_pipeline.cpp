#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "eeroute/pipeline.hpp"

using namespace eeroute;
namespace fs = std::filesystem;

namespace {

const std::string kFixtureDir = EEROUTE_FIXTURE_DIR;

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("eeroute_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, int exit_count) {
  nlohmann::json j;
  j["fixture"] = kFixtureDir + "/landscape.txt";
  j["seed"] = 7;
  j["scale_policy"] = {{"scale_factor", 0.25}, {"min_channels", 64}};
  j["oracle"] = {{"input_dim", 6},
                 {"exit_capacities", exit_count == 4
                                         ? std::vector<double>{0.2, 0.6, 1.0, 1.4}
                                         : std::vector<double>{0.2, 0.6}},
                 {"noise_sd", 0.02},
                 {"link_scale", 0.5}};
  j["train"] = {{"loss", "mse"}, {"learning_rate", 0.02}, {"epochs", 30},
                {"batch_size", 16}, {"hidden", std::vector<int>{16, 12}}};
  j["dataset"] = {{"n_conditions", 10}, {"n_noise", 10}};
  j["thresholds"] = "0.05:0.3:0.05";
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST_CASE("threshold specs parse ranges and lists") {
  auto r = parse_threshold_spec("0.1:0.3:0.1");
  REQUIRE(r.size() == 3);
  CHECK(r[0] == Catch::Approx(0.1));
  CHECK(r[2] == Catch::Approx(0.3));
  auto l = parse_threshold_spec("0.05,0.2");
  CHECK(l == std::vector<double>{0.05, 0.2});
  CHECK_THROWS_AS(parse_threshold_spec("0.1:0.3:-0.1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_threshold_spec("0.1:0.3"), std::invalid_argument);
}

TEST_CASE("the cost table emits one row per scale/exit plus a backbone row") {
  auto g = load_fixture(kFixtureDir + "/landscape.txt");
  auto csv = run_cost_table(g, {0.5, 1.0 / 3.0, 0.25}, 64);
  std::size_t rows = 0;
  for (std::size_t pos = 0; (pos = csv.find("\r\n", pos)) != std::string::npos; pos += 2) ++rows;
  CHECK(rows == 1 + 3 * 4 + 1);  // header + 3 factors x 4 exits + backbone
  CHECK(csv.rfind("scale_factor,exit_id,flops\r\n", 0) == 0);
  CHECK(csv.find("1,backbone,") != std::string::npos);
}

TEST_CASE("config loading validates thresholds and fixture paths") {
  auto dir = temp_dir("config");
  auto path = write_config(dir, 4);
  auto cfg = load_config(path);
  CHECK(cfg.oracle.input_dim == 6);
  CHECK(cfg.thresholds.size() == 6);
  CHECK(cfg.hidden_dims == std::vector<int>{16, 12});

  nlohmann::json j = nlohmann::json::parse(std::ifstream(path));
  j["thresholds"] = std::vector<double>{0.3, 0.1};
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS(load_config((dir / "bad.json").string()));
  j["thresholds"] = "0.05:0.3:0.05";
  j["fixture"] = "/nonexistent/fixture.txt";
  std::ofstream(dir / "bad2.json") << j.dump();
  CHECK_THROWS(load_config((dir / "bad2.json").string()));
  fs::remove_all(dir);
}

TEST_CASE("run_pipeline produces all artifacts with a checksum manifest") {
  auto dir = temp_dir("run");
  auto cfg = load_config(write_config(dir, 4));
  auto result = run_pipeline(cfg, (dir / "out").string());
  REQUIRE(result.manifest.size() == 5);
  const char* expected[] = {"dataset.bin", "model.bin", "sweep.csv", "ablation.csv",
                            "summary.csv"};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(result.manifest[i].first == expected[i]);
    const auto path = dir / "out" / expected[i];
    REQUIRE(fs::exists(path));
    auto bytes = read_file(path.string());
    CHECK(crc32(bytes) == result.manifest[i].second);
  }
  CHECK(fs::exists(dir / "out" / "manifest.csv"));
  CHECK(result.predictor_mean_error >= 0.0);

  // Re-running the same config reproduces every artifact bit-for-bit.
  auto again = run_pipeline(cfg, (dir / "out2").string());
  CHECK(again.manifest == result.manifest);
  CHECK(again.savings_slope_value == result.savings_slope_value);
  CHECK(again.correlation == result.correlation);
  fs::remove_all(dir);
}

TEST_CASE("a failing stage removes the partial outputs it wrote") {
  auto dir = temp_dir("fail");
  // Two oracle exits against a four-branch fixture: the sweep setup must fail
  // after the dataset and model artifacts have been written.
  auto cfg = load_config(write_config(dir, 2));
  bool threw = false;
  try {
    run_pipeline(cfg, (dir / "out").string());
  } catch (const pipeline_error& e) {
    threw = true;
    CHECK_FALSE(e.stage().empty());
  }
  CHECK(threw);
  CHECK_FALSE(fs::exists(dir / "out" / "dataset.bin"));
  CHECK_FALSE(fs::exists(dir / "out" / "model.bin"));
  CHECK_FALSE(fs::exists(dir / "out" / "manifest.csv"));
  fs::remove_all(dir);
}
