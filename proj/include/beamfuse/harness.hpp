#pragma once

#include "beamfuse/channel.hpp"
#include "beamfuse/datapipe.hpp"
#include "beamfuse/models.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace beamfuse {

/// A problem with user-supplied configuration (file or flags): exit code 1
/// territory, as opposed to runtime failures (exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One parsed configuration value with its source line for diagnostics.
struct TomlValue {
  int line = 0;
  std::variant<bool, long long, double, std::string, std::vector<TomlValue>> value;
};

/// Parses a small TOML subset: [section] headers, key = value lines, #
/// comments, scalars (bool, integer, float, quoted string) and flat arrays.
/// Keys are returned fully qualified as "section.key". Malformed input
/// raises ConfigError with "source:line: reason".
std::map<std::string, TomlValue> parse_toml(const std::string& text, const std::string& source);

struct SceneConfig {
  int num_users = 5000;
  std::uint64_t seed = 1;
  SceneParams geometry;
  std::string rays_file;  ///< optional CSV of ray paths; replaces synthesis
};

/// Pilot-stage knobs shared by generation and sweeps.
struct PilotSettings {
  double sub6_snr_db = 0.0;
  double pilot_snr_db = 20.0;  ///< mmWave training blocks
  int active_antennas = 8;
  double frac_mmw = 1.0;   ///< fraction of mmWave subcarriers carrying pilots
  double frac_sub6 = 1.0;  ///< fraction of sub-6 subcarriers carrying pilots
  std::uint64_t seed = 7;
};

struct DatasetConfig {
  double aug_rate = 1.0;
  bool sparsity = true;  ///< delay-domain sparsification of both bands
  double train_fraction = 0.7;
  std::uint64_t split_seed = 3;
  std::uint64_t aug_seed = 5;
  double downlink_snr_db = 0.0;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Fusion;
  int width_sub6 = 256;
  int width_mmwave = 256;
  int sub6_blocks = 6;
  int mmwave_blocks = 4;
  int head_layers = 3;
  double dropout = 0.4;
};

struct SweepConfig {
  std::vector<ModelKind> models{ModelKind::Fusion};
  std::vector<double> sub6_snr_db{0.0};
  std::vector<double> pilot_snr_db{20.0};
  std::vector<int> active_antennas{8};
  std::vector<double> frac_mmw{1.0};
  std::vector<double> frac_sub6{1.0};
  std::vector<double> aug_rates{1.0};
  std::vector<bool> sparsity{true};
  std::vector<std::uint64_t> seeds{11};
};

/// Everything the commands need; file sections mirror the member names.
struct ExperimentConfig {
  SceneConfig scene;
  BandConfig sub6_band = sub6_band_default();
  BandConfig mmwave_band = mmwave_band_default();
  PilotSettings pilots;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train{.batch_size = 512, .epochs = 30, .base_lr = 1e-3, .seed = 11};
  SweepConfig sweep;
};

/// Builds a config from parsed text, applying defaults for absent keys and
/// rejecting unknown ones by name.
ExperimentConfig experiment_config_from_toml(const std::string& text, const std::string& source);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// The scene list a config describes: loaded from rays_file when set,
/// otherwise synthesized deterministically from the scene seed.
std::vector<UserScene> scenes_from_config(const ExperimentConfig& config);

/// Dataset build options for one experiment cell (the config with any sweep
/// axis values substituted).
BuildOptions build_options_from_config(const ExperimentConfig& config);

/// Architecture for a given dataset, desk- or paper-sized per the config.
FusionSpec fusion_spec_from_config(const ExperimentConfig& config, const DatasetManifest& manifest);

/// Synthesizes (or loads) scenes, builds the dataset, and writes it under
/// out_dir; returns the manifest. Prints a one-paragraph summary.
DatasetManifest run_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Trains the configured model on a stored dataset. Writes checkpoint.json,
/// params.f32, history.csv, and config.json (the frozen resolved settings)
/// into run_dir.
TrainHistory run_train(const ExperimentConfig& config, const std::filesystem::path& dataset_dir,
                       const std::filesystem::path& run_dir);

/// Evaluates a stored run on the validation split of a stored dataset.
/// Writes metrics.json into run_dir and appends one row to results_csv
/// (created with a header when missing).
Metrics run_eval(const std::filesystem::path& run_dir, const std::filesystem::path& dataset_dir,
                 const std::filesystem::path& results_csv);

/// Fixed results schema; every sweep row carries the full cell key.
extern const char* const kResultsHeader;

/// Trains and evaluates every cell of the configured grids, appending to
/// out_dir/results.csv. Cells whose key is already present are skipped, so
/// an interrupted sweep resumes without duplicates; cells that throw are
/// recorded with status "failed".
void run_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct FlopsReport {
  std::vector<std::pair<std::string, long long>> parts;  ///< (sub-network, count)
  long long total = 0;
};

/// Multiply-accumulate breakdown of the configured architecture.
FlopsReport run_flops(const ExperimentConfig& config);

}  // namespace beamfuse
