// Command-line front end: dataset generation, training, evaluation, sweep
// grids, and complexity reports over the beamfuse library.

#include "beamfuse/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

using namespace beamfuse;

ExperimentConfig config_or_defaults(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return load_experiment_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-6GHz assisted mmWave beam prediction: synthetic channels, datasets, "
               "training, and experiment sweeps"};
  app.require_subcommand(1);

  std::string config_path, out_path, model_name, sparsity, dataset_dir, run_dir, results_csv;
  std::uint64_t seed = 0;
  double sub6_snr_db = 0, pilot_snr_db = 0, aug_rate = 0;
  int active_antennas = 0;

  auto add_cell_flags = [&](CLI::App* cmd) {
    cmd->add_option("--sub6-snr-db", sub6_snr_db, "Sub-6GHz pilot SNR in dB");
    cmd->add_option("--pilot-snr-db", pilot_snr_db, "mmWave pilot SNR in dB");
    cmd->add_option("--active-antennas", active_antennas, "Active mmWave antennas")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--aug-rate", aug_rate, "Augmented over original dataset size");
    cmd->add_option("--sparsity", sparsity, "Delay-domain sparsification")
        ->check(CLI::IsMember({"on", "off"}));
  };
  auto apply_cell_flags = [&](const CLI::App* cmd, ExperimentConfig& cfg) {
    if (cmd->count("--sub6-snr-db")) cfg.pilots.sub6_snr_db = sub6_snr_db;
    if (cmd->count("--pilot-snr-db")) cfg.pilots.pilot_snr_db = pilot_snr_db;
    if (cmd->count("--active-antennas")) cfg.pilots.active_antennas = active_antennas;
    if (cmd->count("--aug-rate")) cfg.dataset.aug_rate = aug_rate;
    if (cmd->count("--sparsity")) cfg.dataset.sparsity = sparsity == "on";
  };

  CLI::App* generate = app.add_subcommand("generate", "Synthesize scenes and write a dataset");
  generate->add_option("--config", config_path, "Experiment config file");
  generate->add_option("--out", out_path, "Output dataset directory")->required();
  generate->add_option("--seed", seed, "Scene synthesis seed");
  add_cell_flags(generate);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a stored dataset");
  train_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  train_cmd->add_option("--config", config_path, "Experiment config file");
  train_cmd->add_option("--out", out_path, "Run directory for checkpoint and history")
      ->required();
  train_cmd->add_option("--model", model_name, "Architecture")
      ->check(CLI::IsMember({"fusion", "shallow", "sub6", "mmwave"}));
  train_cmd->add_option("--seed", seed, "Training seed");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a stored run on a dataset");
  eval_cmd->add_option("run", run_dir, "Run directory")->required();
  eval_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  eval_cmd->add_option("--out", results_csv, "Results CSV to append to");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate every configured cell");
  sweep_cmd->add_option("--config", config_path, "Experiment config file");
  sweep_cmd->add_option("--out", out_path, "Output directory for results.csv")->required();
  sweep_cmd->add_option("--model", model_name, "Restrict the sweep to one architecture")
      ->check(CLI::IsMember({"fusion", "shallow", "sub6", "mmwave"}));
  sweep_cmd->add_option("--seed", seed, "Replace the configured seed grid");

  CLI::App* flops_cmd = app.add_subcommand("flops", "Report the multiply-accumulate count");
  flops_cmd->add_option("--config", config_path, "Experiment config file");
  flops_cmd->add_option("--model", model_name, "Architecture")
      ->check(CLI::IsMember({"fusion", "shallow", "sub6", "mmwave"}));
  flops_cmd->add_option("--active-antennas", active_antennas, "Active mmWave antennas")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);

    if (generate->parsed()) {
      ExperimentConfig cfg = config_or_defaults(config_path);
      if (generate->count("--seed")) cfg.scene.seed = seed;
      apply_cell_flags(generate, cfg);
      if (cfg.pilots.active_antennas > cfg.mmwave_band.num_antennas)
        throw ConfigError("active antennas exceed the mmWave array size");
      run_generate(cfg, out_path);
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = config_or_defaults(config_path);
      if (train_cmd->count("--model")) cfg.model.kind = model_kind_from_name(model_name);
      if (train_cmd->count("--seed")) cfg.train.seed = seed;
      run_train(cfg, dataset_dir, out_path);
    } else if (eval_cmd->parsed()) {
      const std::filesystem::path csv =
          results_csv.empty() ? std::filesystem::path(run_dir) / "results.csv"
                              : std::filesystem::path(results_csv);
      run_eval(run_dir, dataset_dir, csv);
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = config_or_defaults(config_path);
      if (sweep_cmd->count("--model")) cfg.sweep.models = {model_kind_from_name(model_name)};
      if (sweep_cmd->count("--seed")) cfg.sweep.seeds = {seed};
      run_sweep(cfg, out_path);
    } else if (flops_cmd->parsed()) {
      ExperimentConfig cfg = config_or_defaults(config_path);
      if (flops_cmd->count("--model")) cfg.model.kind = model_kind_from_name(model_name);
      if (flops_cmd->count("--active-antennas")) cfg.pilots.active_antennas = active_antennas;
      const FlopsReport report = run_flops(cfg);
      for (const auto& [name, count] : report.parts)
        std::cout << name << ": " << count << "\n";
      std::cout << "total: " << report.total << "\n";
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const beamfuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
