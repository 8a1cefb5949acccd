#pragma once

// Experiment orchestration behind the CLI: config loading, the per-scale
// cost table, and the end-to-end pipeline (dataset generation, predictor
// training, threshold sweep, ablation, correlation, savings slope) with a
// checksum manifest. Everything is reproducible from (config, seed).

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeroute/cost_model.hpp"
#include "eeroute/difficulty_sim.hpp"
#include "eeroute/fixture.hpp"
#include "eeroute/predictor.hpp"
#include "eeroute/router.hpp"

namespace eeroute {

// --- small file helpers -----------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << text;
}

/// Deterministic float formatting for CSV output.
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

/// Parses "start:stop:step" (inclusive of stop up to rounding) or a single
/// comma-separated list into a threshold vector.
inline std::vector<double> parse_threshold_spec(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double start, stop, step;
    char c1, c2;
    std::istringstream is(spec);
    if (!(is >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0)
      throw std::invalid_argument("bad threshold range '" + spec + "', expected start:stop:step");
    for (double t = start; t <= stop + step * 1e-9; t += step) out.push_back(t);
  } else {
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw std::invalid_argument("empty threshold spec");
  return out;
}

// --- configuration -----------------------------------------------------------

struct ExperimentConfig {
  std::string fixture_path;
  ScalePolicy scale_policy;
  OracleConfig oracle;
  TrainConfig train_cfg;
  std::vector<int> hidden_dims{48, 32};
  std::uint64_t n_conditions = 50;
  std::uint64_t n_noise_vectors = 20;
  std::vector<double> thresholds;
  std::vector<double> exit_costs_override;  // optional calibration, e.g. GFLOPs from published tables
  std::uint64_t seed = 0;
};

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(f);

  ExperimentConfig cfg;
  cfg.fixture_path = j.at("fixture").get<std::string>();
  if (!std::filesystem::exists(cfg.fixture_path))
    throw std::runtime_error("fixture path does not exist: " + cfg.fixture_path);
  cfg.seed = j.value("seed", 0ull);

  const auto& sp = j.at("scale_policy");
  cfg.scale_policy.scale_factor = sp.at("scale_factor").get<double>();
  cfg.scale_policy.min_channels = sp.at("min_channels").get<int>();
  validate(cfg.scale_policy);

  const auto& oc = j.at("oracle");
  cfg.oracle.input_dim = oc.at("input_dim").get<int>();
  cfg.oracle.exit_capacities = oc.at("exit_capacities").get<std::vector<double>>();
  if (oc.contains("difficulty_weights")) {
    cfg.oracle.difficulty_weights = oc.at("difficulty_weights").get<std::vector<double>>();
  } else {
    // Default: the attribute coordinate dominates difficulty.
    cfg.oracle.difficulty_weights.assign(cfg.oracle.input_dim, 0.0);
    cfg.oracle.difficulty_weights[0] = 1.0;
  }
  cfg.oracle.noise_sd = oc.value("noise_sd", 0.0);
  cfg.oracle.link_scale = oc.value("link_scale", 1.0);
  cfg.oracle.seed = derive_seed(cfg.seed, 0x6f7263 /* "orc" */);
  validate(cfg.oracle);

  const auto& tr = j.at("train");
  const std::string loss = tr.value("loss", std::string("mse"));
  if (loss == "mse")
    cfg.train_cfg.loss = LossMode::mse;
  else if (loss == "mae")
    cfg.train_cfg.loss = LossMode::mae;
  else
    throw std::runtime_error("unknown loss mode '" + loss + "'");
  cfg.train_cfg.learning_rate = tr.value("learning_rate", 0.01);
  cfg.train_cfg.epochs = tr.value("epochs", 100);
  cfg.train_cfg.batch_size = tr.value("batch_size", 32);
  cfg.train_cfg.min_lr = tr.value("min_lr", 0.0);
  cfg.train_cfg.seed = derive_seed(cfg.seed, 0x747278 /* "trx" */);
  if (tr.contains("hidden")) cfg.hidden_dims = tr.at("hidden").get<std::vector<int>>();

  if (j.contains("dataset")) {
    cfg.n_conditions = j.at("dataset").value("n_conditions", 50ull);
    cfg.n_noise_vectors = j.at("dataset").value("n_noise", 20ull);
  }

  const auto& th = j.at("thresholds");
  if (th.is_string())
    cfg.thresholds = parse_threshold_spec(th.get<std::string>());
  else
    cfg.thresholds = th.get<std::vector<double>>();
  if (cfg.thresholds.empty()) throw std::runtime_error("thresholds must be non-empty");
  for (std::size_t i = 0; i + 1 < cfg.thresholds.size(); ++i)
    if (!(cfg.thresholds[i] < cfg.thresholds[i + 1]))
      throw std::runtime_error("thresholds must be strictly increasing");

  if (j.contains("exit_costs_override"))
    cfg.exit_costs_override = j.at("exit_costs_override").get<std::vector<double>>();
  return cfg;
}

/// Standard predictor stack: hidden LeakyReLU layers, identity head.
inline std::vector<LayerSpec> predictor_layers(int input_dim, const std::vector<int>& hidden,
                                               int exit_count, double slope = 0.2) {
  std::vector<LayerSpec> layers;
  int prev = input_dim;
  for (int h : hidden) {
    layers.push_back({prev, h, Activation::leaky_relu, slope});
    prev = h;
  }
  layers.push_back({prev, exit_count, Activation::identity, slope});
  return layers;
}

// --- cost table ---------------------------------------------------------------

/// CSV with one row per (scale_factor, exit) plus one backbone row.
inline std::string run_cost_table(const RouteGraph& fixture,
                                  const std::vector<double>& scale_factors, int min_channels) {
  std::ostringstream csv;
  csv << "scale_factor,exit_id,flops\r\n";
  for (double sf : scale_factors) {
    auto scaled = apply_scale_policy(fixture, ScalePolicy{sf, min_channels});
    for (int e = 1; e <= static_cast<int>(scaled.branches.size()); ++e)
      csv << fmt(sf) << "," << e << "," << route_cost(scaled, e) << "\r\n";
  }
  csv << "1,backbone," << route_cost(fixture, kBackboneExit) << "\r\n";
  return csv.str();
}

// --- full pipeline -------------------------------------------------------------

struct PipelineResult {
  double savings_slope_value = 0.0;
  double correlation = 0.0;
  double predictor_mean_error = 0.0;
  std::vector<std::pair<std::string, std::uint32_t>> manifest;  // artifact, crc32
};

class pipeline_error : public std::runtime_error {
public:
  pipeline_error(const std::string& stage, const std::string& what)
      : std::runtime_error("pipeline stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

inline std::string sweep_to_csv(const SweepReport& report) {
  std::ostringstream csv;
  csv << "threshold";
  const std::size_t exits = report.rows.front().exit_counts.size();
  for (std::size_t e = 0; e + 1 < exits; ++e) csv << ",exit_" << (e + 1);
  csv << ",backbone,total_flops,mean_flops,violation_rate\r\n";
  for (const auto& row : report.rows) {
    csv << fmt(row.threshold);
    for (std::size_t c : row.exit_counts) csv << "," << c;
    csv << "," << fmt(row.total_cost) << "," << fmt(row.mean_cost) << ","
        << fmt(row.violation_rate) << "\r\n";
  }
  return csv.str();
}

/// Runs every stage, writing artifacts into out_dir and a manifest.csv with a
/// CRC32 per artifact. Any stage error removes this run's outputs.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  PipelineResult result;
  auto emit = [&](const std::string& name, std::span<const std::uint8_t> bytes) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_file(path, bytes);
    written.push_back(path);
    result.manifest.emplace_back(name, crc32(bytes));
  };
  auto emit_text = [&](const std::string& name, const std::string& text) {
    emit(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  };

  std::string stage = "sim gen";
  try {
    // Stage 1: dataset generation.
    QualityOracle oracle(cfg.oracle);
    Dataset ds = make_dataset(oracle, cfg.n_conditions, cfg.n_noise_vectors);
    emit("dataset.bin", save(ds));

    // Stage 2: predictor training.
    stage = "predictor train";
    Mlp init(predictor_layers(ds.input_dim, cfg.hidden_dims, ds.exit_count),
             derive_seed(cfg.seed, 0x696e69 /* "ini" */));
    std::vector<Sample> train_set(ds.train_view().begin(), ds.train_view().end());
    std::vector<Sample> val_set(ds.val_view().begin(), ds.val_view().end());
    auto trained = train(std::move(init), train_set, cfg.train_cfg);
    emit("model.bin", save(trained.model));
    result.predictor_mean_error =
        evaluate(trained.model, val_set.empty() ? train_set : val_set).mean_error;

    // Exit costs: calibration override or the fixture under the scale policy.
    std::vector<double> branch_costs;
    double backbone_cost;
    auto fixture = load_fixture(cfg.fixture_path);
    if (!cfg.exit_costs_override.empty()) {
      branch_costs = cfg.exit_costs_override;
      backbone_cost = route_cost(fixture, kBackboneExit);
      // Override lists branch costs followed by the backbone cost.
      if (branch_costs.size() == fixture.branches.size() + 1) {
        backbone_cost = branch_costs.back();
        branch_costs.pop_back();
      }
    } else {
      auto scaled = apply_scale_policy(fixture, cfg.scale_policy);
      for (int e = 1; e <= static_cast<int>(scaled.branches.size()); ++e)
        branch_costs.push_back(double(route_cost(scaled, e)));
      backbone_cost = double(route_cost(fixture, kBackboneExit));
    }
    if (branch_costs.size() != std::size_t(ds.exit_count))
      throw std::runtime_error("fixture branch count does not match oracle exit count");

    // Stage 3: threshold sweep over freshly sampled simulator inputs.
    stage = "route sweep";
    auto inputs = QualityOracle(cfg.oracle).sample_inputs(500);
    auto report = sweep(inputs, trained.model, oracle, branch_costs, backbone_cost,
                        cfg.thresholds);
    emit_text("sweep.csv", sweep_to_csv(report));

    // Stage 4: single-branch vs predictor ablation on the earliest exit.
    stage = "ablation";
    auto ablation =
        branch_vs_predictor(inputs, trained.model, oracle, branch_costs, backbone_cost, 1);
    {
      std::ostringstream csv;
      csv << "forced_score,routed_score\r\n";
      for (std::size_t i = 0; i < ablation.forced_scores.size(); ++i)
        csv << fmt(ablation.forced_scores[i]) << "," << fmt(ablation.routed_scores[i]) << "\r\n";
      emit_text("ablation.csv", csv.str());
    }

    // Stage 5: correlation + savings slope summary.
    stage = "summary";
    std::vector<double> attributes;
    for (const auto& in : inputs) attributes.push_back(in.attribute);
    const double mid_threshold =
        cfg.thresholds[cfg.thresholds.size() / 2];
    result.correlation = difficulty_correlation(inputs, trained.model, attributes, branch_costs,
                                                backbone_cost, mid_threshold);
    std::vector<std::pair<double, double>> slope_points;
    for (const auto& row : report.rows) slope_points.emplace_back(row.threshold, row.mean_cost);
    result.savings_slope_value = savings_slope(slope_points);
    {
      std::ostringstream csv;
      csv << "metric,value\r\n";
      csv << "savings_slope," << fmt(result.savings_slope_value) << "\r\n";
      csv << "difficulty_correlation," << fmt(result.correlation) << "\r\n";
      csv << "ablation_forced_exceedance," << fmt(ablation.forced_exceedance) << "\r\n";
      csv << "ablation_routed_exceedance," << fmt(ablation.routed_exceedance) << "\r\n";
      csv << "predictor_mean_rel_error," << fmt(result.predictor_mean_error) << "\r\n";
      emit_text("summary.csv", csv.str());
    }

    // Manifest last; not listed in itself.
    std::ostringstream manifest;
    manifest << "artifact,crc32\r\n";
    for (const auto& [name, crc] : result.manifest) {
      manifest << name << "," << std::hex << std::setw(8) << std::setfill('0') << crc
               << std::dec << "\r\n";
    }
    write_text((fs::path(out_dir) / "manifest.csv").string(), manifest.str());
  } catch (const std::exception& e) {
    for (const auto& p : written) fs::remove(p);
    throw pipeline_error(stage, e.what());
  }
  return result;
}

}  // namespace eeroute
