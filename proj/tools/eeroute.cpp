// Command-line entry point wiring all library modules: cost tables, database
// lifecycle, simulator datasets, predictor training and threshold sweeps.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eeroute/patch_store.hpp"
#include "eeroute/pipeline.hpp"

namespace {

using namespace eeroute;

std::vector<double> parse_double_list(const std::string& spec) {
  std::vector<double> out;
  std::istringstream is(spec);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  std::istringstream is(spec);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
}

std::vector<float> read_float_tokens(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<float> vals;
  double v;
  while (f >> v) vals.push_back(static_cast<float>(v));
  return vals;
}

int run_cost(const std::string& fixture_path, const std::string& sf_spec, int min_channels,
             const std::string& out_path) {
  auto fixture = load_fixture(fixture_path);
  auto sfs = parse_double_list(sf_spec);
  emit(run_cost_table(fixture, sfs, min_channels), out_path);
  return 0;
}

int run_db_build(std::uint64_t count, int key_dim, const std::string& value_shape_spec,
                 int classes, std::uint64_t cap, std::uint64_t seed, const std::string& out_path) {
  auto shape = parse_int_list(value_shape_spec);
  if (shape.size() != 3) throw std::runtime_error("--value-shape expects c,h,w");
  Rng rng(derive_seed(seed, 0x6462 /* "db" */));
  std::vector<DbEntry> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DbEntry e;
    e.key.resize(key_dim);
    for (auto& v : e.key) v = static_cast<float>(rng.next_normal());
    const std::size_t n = std::size_t(shape[0]) * shape[1] * shape[2];
    e.value = FeatureMap{shape[0], shape[1], shape[2], std::vector<float>(n)};
    for (auto& v : e.value.data) v = static_cast<float>(rng.next_normal());
    if (classes > 0) e.class_label = static_cast<std::uint16_t>(rng.next_below(classes));
    entries.push_back(std::move(e));
  }
  auto db = build_database(entries, cap);
  write_file(out_path, save(db));
  std::cout << "wrote " << db.entries.size() << " entries to " << out_path << "\n";
  return 0;
}

int run_db_query(const std::string& db_path, const std::string& key_spec,
                 const std::string& key_file, std::optional<int> class_label) {
  auto db = load_database(read_file(db_path));
  std::vector<float> key;
  if (!key_file.empty()) {
    key = read_float_tokens(key_file);
  } else {
    for (double v : parse_double_list(key_spec)) key.push_back(static_cast<float>(v));
  }
  std::optional<std::uint16_t> cls;
  if (class_label) cls = static_cast<std::uint16_t>(*class_label);
  auto idx = query_nearest_index(db, key, cls);
  const auto& e = db.entries[idx];
  std::cout << "index,class,value_shape\r\n"
            << idx << "," << (e.class_label ? std::to_string(*e.class_label) : std::string("-"))
            << "," << e.value.channels << "x" << e.value.height << "x" << e.value.width << "\r\n";
  return 0;
}

int run_db_stats(const std::string& db_path) {
  auto db = load_database(read_file(db_path));
  std::cout << "entries," << db.entries.size() << "\r\n";
  std::cout << "key_dim," << db.key_dim << "\r\n";
  for (const auto& [label, members] : db.class_index) {
    if (label == kNoClass)
      std::cout << "class_none," << members.size() << "\r\n";
    else
      std::cout << "class_" << label << "," << members.size() << "\r\n";
  }
  return 0;
}

int run_sim_gen(std::uint64_t seed, const std::string& capacities_spec, double noise_sd,
                double link_scale, int input_dim, std::uint64_t n_conditions,
                std::uint64_t n_noise, const std::string& out_path) {
  OracleConfig cfg;
  cfg.input_dim = input_dim;
  cfg.exit_capacities = parse_double_list(capacities_spec);
  cfg.difficulty_weights.assign(input_dim, 0.0);
  cfg.difficulty_weights[0] = 1.0;
  cfg.noise_sd = noise_sd;
  cfg.link_scale = link_scale;
  cfg.seed = seed;
  QualityOracle oracle(cfg);
  auto ds = make_dataset(oracle, n_conditions, n_noise);
  write_file(out_path, save(ds));
  std::cout << "wrote " << ds.samples.size() << " samples (" << ds.train_count << " train) to "
            << out_path << "\n";
  return 0;
}

int run_predictor_train(const std::string& dataset_path, const std::string& loss, double lr,
                        int epochs, int batch_size, double min_lr, std::uint64_t seed,
                        const std::string& hidden_spec, const std::string& out_path) {
  auto ds = load_dataset(read_file(dataset_path));
  TrainConfig cfg;
  cfg.loss = loss == "mae" ? LossMode::mae : LossMode::mse;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.min_lr = min_lr;
  cfg.seed = seed;
  Mlp init(predictor_layers(ds.input_dim, parse_int_list(hidden_spec), ds.exit_count),
           derive_seed(seed, 0x696e69));
  std::vector<Sample> train_set(ds.train_view().begin(), ds.train_view().end());
  auto result = train(std::move(init), train_set, cfg);
  write_file(out_path, save(result.model));
  std::cout << "final_train_loss," << fmt(result.loss_history.back()) << "\n";
  return 0;
}

int run_predictor_eval(const std::string& dataset_path, const std::string& model_path) {
  auto ds = load_dataset(read_file(dataset_path));
  auto model = load_mlp(read_file(model_path));
  std::vector<Sample> val_set(ds.val_view().begin(), ds.val_view().end());
  if (val_set.empty()) val_set.assign(ds.samples.begin(), ds.samples.end());
  auto rep = evaluate(model, val_set);
  std::cout << "exit,mean_relative_error\r\n";
  for (std::size_t e = 0; e < rep.per_exit_error.size(); ++e)
    std::cout << (e + 1) << "," << fmt(rep.per_exit_error[e]) << "\r\n";
  std::cout << "mean," << fmt(rep.mean_error) << "\r\n";
  return 0;
}

int run_route_sweep(const std::string& dataset_path, const std::string& model_path,
                    const std::string& costs_spec, double backbone_cost,
                    const std::string& thresholds_spec, const std::string& out_path) {
  auto ds = load_dataset(read_file(dataset_path));
  auto model = load_mlp(read_file(model_path));
  std::vector<std::vector<double>> predicted, truth;
  for (const auto& [x, s] : ds.samples) {
    predicted.push_back(model.forward(x));
    truth.push_back(s);
  }
  auto costs = parse_double_list(costs_spec);
  auto thresholds = parse_threshold_spec(thresholds_spec);
  auto report = sweep(predicted, truth, costs, backbone_cost, thresholds);
  emit(sweep_to_csv(report), out_path);
  return 0;
}

int run_route_kde(const std::string& samples_path, double bandwidth, const std::string& grid_spec,
                  const std::string& out_path) {
  auto tokens = read_float_tokens(samples_path);
  std::vector<double> samples(tokens.begin(), tokens.end());
  auto grid = parse_threshold_spec(grid_spec);
  auto densities = kde(samples, bandwidth, grid);
  std::ostringstream csv;
  csv << "x,density\r\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv << fmt(grid[i]) << "," << fmt(densities[i]) << "\r\n";
  emit(csv.str(), out_path);
  return 0;
}

int run_full(const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& out_dir) {
  auto cfg = load_config(config_path);
  if (seed) {
    cfg.seed = *seed;
    cfg.oracle.seed = derive_seed(cfg.seed, 0x6f7263);
    cfg.train_cfg.seed = derive_seed(cfg.seed, 0x747278);
  }
  auto result = run_pipeline(cfg, out_dir);
  std::cout << "savings_slope," << fmt(result.savings_slope_value) << "\n";
  std::cout << "difficulty_correlation," << fmt(result.correlation) << "\n";
  std::cout << "predictor_mean_rel_error," << fmt(result.predictor_mean_error) << "\n";
  std::cout << "artifacts," << result.manifest.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early-exit routing toolkit: cost modeling, guiding database, "
               "quality predictor and threshold-driven exit selection"};
  app.require_subcommand(1);

  // cost
  std::string fixture_path, sf_spec = "0.5,0.3333333333,0.25", out_path;
  int min_channels = 64;
  auto* cost = app.add_subcommand("cost", "Per-route FLOP table across scale factors");
  cost->add_option("--fixture", fixture_path, "architecture fixture file")->required();
  cost->add_option("--scale-factors", sf_spec, "comma-separated scale factors");
  cost->add_option("--min-channels", min_channels, "channel floor");
  cost->add_option("--out", out_path, "output CSV path (default stdout)");

  // db
  auto* db = app.add_subcommand("db", "Guiding key-value database");
  db->require_subcommand(1);
  std::uint64_t db_count = 1000, db_cap = 100, db_seed = 0;
  int db_key_dim = 64, db_classes = 0;
  std::string db_value_shape = "8,2,2", db_out = "db.bin";
  auto* db_build = db->add_subcommand("build", "Build a database from seeded synthetic entries");
  db_build->add_option("--count", db_count, "entries before deduplication");
  db_build->add_option("--key-dim", db_key_dim, "key dimension");
  db_build->add_option("--value-shape", db_value_shape, "value tensor shape c,h,w");
  db_build->add_option("--classes", db_classes, "number of semantic classes (0 = unlabelled)");
  db_build->add_option("--cap", db_cap, "per-class retention cap");
  db_build->add_option("--seed", db_seed, "generation seed");
  db_build->add_option("--out", db_out, "output file");

  std::string dbq_path, dbq_key, dbq_key_file;
  int dbq_class = -1;
  auto* db_query = db->add_subcommand("query", "Exact nearest-key lookup");
  db_query->add_option("--db", dbq_path, "database file")->required();
  db_query->add_option("--key", dbq_key, "query key as comma-separated floats");
  db_query->add_option("--key-file", dbq_key_file, "file of whitespace-separated floats");
  db_query->add_option("--class", dbq_class, "restrict to one semantic class");

  std::string dbs_path;
  auto* db_stats = db->add_subcommand("stats", "Database summary");
  db_stats->add_option("--db", dbs_path, "database file")->required();

  // sim gen
  auto* sim = app.add_subcommand("sim", "Synthetic difficulty oracle");
  sim->require_subcommand(1);
  std::uint64_t sim_seed = 0, sim_conditions = 50, sim_noise_vectors = 20;
  std::string sim_caps = "0.2,0.6,1.0,1.4", sim_out = "dataset.bin";
  double sim_noise_sd = 0.0, sim_link = 0.5;
  int sim_input_dim = 16;
  auto* sim_gen = sim->add_subcommand("gen", "Generate a train/val dataset");
  sim_gen->add_option("--seed", sim_seed, "master seed");
  sim_gen->add_option("--capacities", sim_caps, "ascending per-exit capacities");
  sim_gen->add_option("--noise-sd", sim_noise_sd, "label noise standard deviation");
  sim_gen->add_option("--link-scale", sim_link, "difficulty-to-score scale");
  sim_gen->add_option("--input-dim", sim_input_dim, "input dimension");
  sim_gen->add_option("--n-conditions", sim_conditions, "condition vectors");
  sim_gen->add_option("--n-noise", sim_noise_vectors, "fixed noise vectors");
  sim_gen->add_option("--out", sim_out, "output file");

  // predictor
  auto* pred = app.add_subcommand("predictor", "Quality predictor");
  pred->require_subcommand(1);
  std::string pt_dataset, pt_loss = "mse", pt_hidden = "48,32", pt_out = "model.bin";
  double pt_lr = 0.01, pt_min_lr = 0.0001;
  int pt_epochs = 100, pt_batch = 32;
  std::uint64_t pt_seed = 0;
  auto* pred_train = pred->add_subcommand("train", "Train on a simulator dataset");
  pred_train->add_option("--dataset", pt_dataset, "dataset file")->required();
  pred_train->add_option("--loss", pt_loss, "mse or mae");
  pred_train->add_option("--lr", pt_lr, "initial learning rate");
  pred_train->add_option("--epochs", pt_epochs, "training epochs");
  pred_train->add_option("--batch-size", pt_batch, "mini-batch size");
  pred_train->add_option("--min-lr", pt_min_lr, "cosine schedule floor");
  pred_train->add_option("--seed", pt_seed, "training seed");
  pred_train->add_option("--hidden", pt_hidden, "hidden layer widths");
  pred_train->add_option("--out", pt_out, "checkpoint file");

  std::string pe_dataset, pe_model;
  auto* pred_eval = pred->add_subcommand("eval", "Per-exit mean relative error");
  pred_eval->add_option("--dataset", pe_dataset, "dataset file")->required();
  pred_eval->add_option("--model", pe_model, "checkpoint file")->required();

  // route
  auto* route = app.add_subcommand("route", "Threshold-driven exit selection");
  route->require_subcommand(1);
  std::string rs_dataset, rs_model, rs_costs, rs_thresholds = "0.02:0.2:0.02", rs_out;
  double rs_backbone = 0.0;
  auto* route_sweep = route->add_subcommand("sweep", "Exit distribution and cost per threshold");
  route_sweep->add_option("--dataset", rs_dataset, "dataset file")->required();
  route_sweep->add_option("--model", rs_model, "checkpoint file")->required();
  route_sweep->add_option("--costs", rs_costs, "branch costs, ascending by exit id")->required();
  route_sweep->add_option("--backbone-cost", rs_backbone, "backbone route cost")->required();
  route_sweep->add_option("--thresholds", rs_thresholds, "list or start:stop:step");
  route_sweep->add_option("--out", rs_out, "output CSV (default stdout)");

  std::string rk_samples, rk_grid = "-1:2:0.01", rk_out;
  double rk_bandwidth = 0.3;
  auto* route_kde = route->add_subcommand("kde", "Gaussian kernel density estimate");
  route_kde->add_option("--samples", rk_samples, "file of whitespace-separated values")->required();
  route_kde->add_option("--bandwidth", rk_bandwidth, "kernel bandwidth");
  route_kde->add_option("--grid", rk_grid, "evaluation grid start:stop:step");
  route_kde->add_option("--out", rk_out, "output CSV (default stdout)");

  // run
  std::string run_config, run_out = "out";
  std::optional<std::uint64_t> run_seed;
  auto* run_cmd = app.add_subcommand("run", "Full pipeline with manifest");
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  run_cmd->add_option("--seed", run_seed, "master seed override");
  run_cmd->add_option("--out", run_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cost->parsed()) return run_cost(fixture_path, sf_spec, min_channels, out_path);
    if (db_build->parsed())
      return run_db_build(db_count, db_key_dim, db_value_shape, db_classes, db_cap, db_seed,
                          db_out);
    if (db_query->parsed())
      return run_db_query(dbq_path, dbq_key, dbq_key_file,
                          dbq_class >= 0 ? std::optional<int>(dbq_class) : std::nullopt);
    if (db_stats->parsed()) return run_db_stats(dbs_path);
    if (sim_gen->parsed())
      return run_sim_gen(sim_seed, sim_caps, sim_noise_sd, sim_link, sim_input_dim,
                         sim_conditions, sim_noise_vectors, sim_out);
    if (pred_train->parsed())
      return run_predictor_train(pt_dataset, pt_loss, pt_lr, pt_epochs, pt_batch, pt_min_lr,
                                 pt_seed, pt_hidden, pt_out);
    if (pred_eval->parsed()) return run_predictor_eval(pe_dataset, pe_model);
    if (route_sweep->parsed())
      return run_route_sweep(rs_dataset, rs_model, rs_costs, rs_backbone, rs_thresholds, rs_out);
    if (route_kde->parsed()) return run_route_kde(rk_samples, rk_bandwidth, rk_grid, rk_out);
    if (run_cmd->parsed()) return run_full(run_config, run_seed, run_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
