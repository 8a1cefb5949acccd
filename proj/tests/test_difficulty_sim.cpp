#include <catch2/catch_amalgamated.hpp>

#include "eeroute/difficulty_sim.hpp"
#include "eeroute/predictor.hpp"
#include "eeroute/router.hpp"

using namespace eeroute;

namespace {

OracleConfig basic_config(std::uint64_t seed, double noise_sd = 0.0) {
  OracleConfig cfg;
  cfg.input_dim = 8;
  cfg.exit_capacities = {0.5, 1.0, 1.5};
  cfg.difficulty_weights.assign(8, 0.0);
  cfg.difficulty_weights[0] = 1.0;
  cfg.difficulty_weights[1] = 0.3;
  cfg.noise_sd = noise_sd;
  cfg.link_scale = 0.5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("sampling is reproducible across oracle instances") {
  QualityOracle a(basic_config(42)), b(basic_config(42));
  auto sa = a.sample_inputs(5);
  auto sb = b.sample_inputs(5);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].features == sb[i].features);
    CHECK(sa[i].attribute == sa[i].features[0]);
  }
  CHECK(a.sample_input(3).features == sa[3].features);
}

TEST_CASE("the attribute coordinate is empirically standard normal") {
  QualityOracle o(basic_config(7));
  auto inputs = o.sample_inputs(10000);
  double mean = 0.0, var = 0.0;
  for (const auto& in : inputs) mean += in.attribute;
  mean /= double(inputs.size());
  for (const auto& in : inputs) var += (in.attribute - mean) * (in.attribute - mean);
  var /= double(inputs.size());
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::sqrt(var) == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("noiseless scores decrease strictly across ascending capacities") {
  QualityOracle o(basic_config(11));
  for (const auto& in : o.sample_inputs(50)) {
    auto scores = o.true_scores(in);
    for (std::size_t e = 0; e + 1 < scores.size(); ++e) CHECK(scores[e] > scores[e + 1]);
    for (double s : scores) CHECK(s > 0.0);
  }
}

TEST_CASE("zero weights yield identical noiseless scores for every input") {
  auto cfg = basic_config(13);
  cfg.difficulty_weights.assign(cfg.input_dim, 0.0);
  QualityOracle o(cfg);
  auto inputs = o.sample_inputs(10);
  auto ref = o.true_scores(inputs[0]);
  for (const auto& in : inputs) CHECK(o.true_scores(in) == ref);
}

TEST_CASE("noiseless difficulty and per-exit score are perfectly rank-correlated") {
  QualityOracle o(basic_config(17));
  auto inputs = o.sample_inputs(1000);
  std::vector<double> difficulties;
  for (const auto& in : inputs) difficulties.push_back(o.difficulty(in.features));
  for (int e = 0; e < o.exit_count(); ++e) {
    std::vector<double> scores;
    for (const auto& in : inputs) scores.push_back(o.true_scores(in)[e]);
    CHECK(spearman(difficulties, scores) == Catch::Approx(1.0));
  }
}

TEST_CASE("noise streams are per-(input, exit) and reproducible") {
  QualityOracle o(basic_config(19, 0.1));
  auto in = o.sample_input(4);
  CHECK(o.true_scores(in) == o.true_scores(in));
  // A different input index shifts the noise even for identical features.
  CHECK(o.true_scores(in.features, 4) != o.true_scores(in.features, 5));
}

TEST_CASE("make_dataset crosses conditions with noise vectors and splits 90/10") {
  QualityOracle o(basic_config(23));
  auto tiny = make_dataset(o, 1, 1);
  CHECK(tiny.samples.size() == 1);
  CHECK(tiny.train_count == 1);

  auto ds = make_dataset(o, 50, 20);
  CHECK(ds.samples.size() == 1000);
  CHECK(ds.train_count == 900);
  CHECK(ds.input_dim == 8);
  CHECK(ds.exit_count == 3);
  // Identical seeds give identical membership.
  auto ds2 = make_dataset(QualityOracle(basic_config(23)), 50, 20);
  CHECK(ds.samples == ds2.samples);
  CHECK(ds.attributes == ds2.attributes);
}

TEST_CASE("dataset files roundtrip bit-exactly and reject corruption") {
  QualityOracle o(basic_config(29, 0.05));
  auto ds = make_dataset(o, 10, 10);
  auto bytes = save(ds);
  auto loaded = load_dataset(bytes);
  CHECK(save(loaded) == bytes);
  CHECK(loaded.train_count == ds.train_count);
  CHECK(loaded.samples.size() == ds.samples.size());

  auto corrupted = bytes;
  corrupted[40] ^= 0x02;
  CHECK_THROWS_AS(load_dataset(corrupted), format_error);
  auto truncated = bytes;
  truncated.resize(20);
  CHECK_THROWS_AS(load_dataset(truncated), format_error);
}

TEST_CASE("heavy label noise degrades the trained predictor") {
  auto error_at = [](double sd, std::uint64_t seed) {
    auto cfg = basic_config(seed, sd);
    QualityOracle o(cfg);
    auto ds = make_dataset(o, 25, 20);
    Mlp init({{8, 24, Activation::leaky_relu, 0.2}, {24, 3, Activation::identity, 0.2}},
             seed * 11);
    TrainConfig tc;
    tc.learning_rate = 0.02;
    tc.epochs = 200;
    tc.batch_size = 25;
    tc.seed = seed;
    std::vector<Sample> train_set(ds.train_view().begin(), ds.train_view().end());
    std::vector<Sample> val_set(ds.val_view().begin(), ds.val_view().end());
    return evaluate(train(init, train_set, tc).model, val_set).mean_error;
  };
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    CHECK(error_at(0.0, seed) < error_at(0.25, seed));
}

TEST_CASE("oracle config validation catches bad shapes") {
  auto cfg = basic_config(1);
  cfg.exit_capacities = {1.0, 1.0};
  CHECK_THROWS_AS(QualityOracle(cfg), std::invalid_argument);
  cfg = basic_config(1);
  cfg.difficulty_weights.pop_back();
  CHECK_THROWS_AS(QualityOracle(cfg), std::invalid_argument);
  cfg = basic_config(1);
  cfg.noise_sd = -0.1;
  CHECK_THROWS_AS(QualityOracle(cfg), std::invalid_argument);
}
