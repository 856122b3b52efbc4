#include "beamfuse/harness.hpp"

#include "beamfuse/io.hpp"
#include "beamfuse/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace beamfuse {

using nlohmann::json;

namespace {

[[noreturn]] void fail_at(const std::string& source, int line, const std::string& why) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + why);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

/// Cuts an unquoted trailing comment.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool valid_bare_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.')
      return false;
  return true;
}

std::string parse_quoted(const std::string& raw, const std::string& source, int line) {
  std::string out;
  std::size_t i = 1;
  while (i < raw.size() && raw[i] != '"') {
    if (raw[i] == '\\') {
      if (i + 1 >= raw.size()) fail_at(source, line, "dangling escape in string");
      const char c = raw[i + 1];
      if (c == 'n') out += '\n';
      else if (c == 't') out += '\t';
      else if (c == '"') out += '"';
      else if (c == '\\') out += '\\';
      else fail_at(source, line, std::string("unsupported escape '\\") + c + "'");
      i += 2;
    } else {
      out += raw[i++];
    }
  }
  if (i >= raw.size()) fail_at(source, line, "unterminated string");
  if (trim(raw.substr(i + 1)) != "")
    fail_at(source, line, "unexpected text after string value");
  return out;
}

/// Splits an array body "a, b, c" at top-level commas, respecting strings.
std::vector<std::string> split_array_items(const std::string& body, const std::string& source,
                                           int line) {
  std::vector<std::string> items;
  std::string current;
  bool in_string = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
    if (c == '[' && !in_string) fail_at(source, line, "nested arrays are not supported");
    if (c == ',' && !in_string) {
      items.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  if (in_string) fail_at(source, line, "unterminated string");
  if (trim(current) != "") items.push_back(current);  // allow a trailing comma
  return items;
}

TomlValue parse_value(const std::string& raw_in, const std::string& source, int line) {
  const std::string raw = trim(raw_in);
  if (raw.empty()) fail_at(source, line, "missing value");
  TomlValue v;
  v.line = line;
  if (raw == "true" || raw == "false") {
    v.value = raw == "true";
    return v;
  }
  if (raw.front() == '"') {
    v.value = parse_quoted(raw, source, line);
    return v;
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') fail_at(source, line, "array must open and close on one line");
    std::vector<TomlValue> items;
    for (const std::string& item : split_array_items(raw.substr(1, raw.size() - 2), source, line))
      items.push_back(parse_value(item, source, line));
    v.value = std::move(items);
    return v;
  }
  const bool looks_float = raw.find_first_of(".eE") != std::string::npos &&
                           raw.find_first_of("0123456789") != std::string::npos;
  if (!looks_float) {
    long long integer = 0;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), integer);
    if (ec == std::errc{} && ptr == raw.data() + raw.size()) {
      v.value = integer;
      return v;
    }
  }
  double real = 0.0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), real);
  if (ec == std::errc{} && ptr == raw.data() + raw.size()) {
    v.value = real;
    return v;
  }
  fail_at(source, line, "invalid value '" + raw + "'");
}

}  // namespace

std::map<std::string, TomlValue> parse_toml(const std::string& text, const std::string& source) {
  std::map<std::string, TomlValue> table;
  std::string section;
  std::istringstream stream(text);
  std::string raw_line;
  int line_no = 0;
  while (std::getline(stream, raw_line)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_at(source, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_bare_key(section)) fail_at(source, line_no, "invalid section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail_at(source, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_bare_key(key)) fail_at(source, line_no, "invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) fail_at(source, line_no, "duplicate key '" + full + "'");
    table[full] = parse_value(line.substr(eq + 1), source, line_no);
  }
  return table;
}

namespace {

/// Typed access over a parsed table that records consumption so leftovers can
/// be reported as unknown keys.
class ConfigReader {
 public:
  ConfigReader(std::map<std::string, TomlValue> table, std::string source)
      : table_(std::move(table)), source_(std::move(source)) {}

  bool get_bool(const std::string& key, bool fallback) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    if (const bool* b = std::get_if<bool>(&v->value)) return *b;
    fail_at(source_, v->line, "'" + key + "' must be true or false");
  }

  long long get_int(const std::string& key, long long fallback) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    if (const long long* i = std::get_if<long long>(&v->value)) return *i;
    fail_at(source_, v->line, "'" + key + "' must be an integer");
  }

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    if (const long long* i = std::get_if<long long>(&v->value)) {
      if (*i < 0) fail_at(source_, v->line, "'" + key + "' must be non-negative");
      return static_cast<std::uint64_t>(*i);
    }
    fail_at(source_, v->line, "'" + key + "' must be an integer");
  }

  double get_double(const std::string& key, double fallback) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    return to_double(*v, key);
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    if (const std::string* s = std::get_if<std::string>(&v->value)) return *s;
    fail_at(source_, v->line, "'" + key + "' must be a quoted string");
  }

  template <typename T, typename Fn>
  std::vector<T> get_array(const std::string& key, std::vector<T> fallback, Fn&& coerce) {
    const TomlValue* v = take(key);
    if (!v) return fallback;
    const auto* items = std::get_if<std::vector<TomlValue>>(&v->value);
    if (!items) fail_at(source_, v->line, "'" + key + "' must be an array");
    if (items->empty()) fail_at(source_, v->line, "'" + key + "' must not be empty");
    std::vector<T> out;
    for (const TomlValue& item : *items) out.push_back(coerce(item));
    return out;
  }

  std::vector<double> get_double_array(const std::string& key, std::vector<double> fallback) {
    return get_array<double>(key, std::move(fallback),
                             [&](const TomlValue& v) { return to_double(v, key); });
  }

  double to_double(const TomlValue& v, const std::string& key) {
    if (const double* d = std::get_if<double>(&v.value)) return *d;
    if (const long long* i = std::get_if<long long>(&v.value)) return static_cast<double>(*i);
    fail_at(source_, v.line, "'" + key + "' must be a number");
  }

  const std::string& source() const { return source_; }

  /// Errors on the first key that no reader consumed.
  void finish() const {
    for (const auto& [key, value] : table_)
      if (!used_.count(key)) fail_at(source_, value.line, "unknown key '" + key + "'");
  }

  const TomlValue* take(const std::string& key) {
    const auto it = table_.find(key);
    if (it == table_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

 private:
  std::map<std::string, TomlValue> table_;
  std::set<std::string> used_;
  std::string source_;
};

int checked_int(ConfigReader& r, const std::string& key, long long fallback, long long min,
                long long max = std::numeric_limits<int>::max()) {
  const long long v = r.get_int(key, fallback);
  if (v < min || v > max)
    throw ConfigError(r.source() + ": '" + key + "' must be in [" + std::to_string(min) + ", " +
                      std::to_string(max) + "], got " + std::to_string(v));
  return static_cast<int>(v);
}

void read_band(ConfigReader& r, const std::string& section, BandConfig& band) {
  band.carrier_ghz = r.get_double(section + ".carrier_ghz", band.carrier_ghz);
  band.num_antennas = checked_int(r, section + ".num_antennas", band.num_antennas, 1);
  band.spacing_wavelengths =
      r.get_double(section + ".spacing_wavelengths", band.spacing_wavelengths);
  band.num_subcarriers = checked_int(r, section + ".num_subcarriers", band.num_subcarriers, 1);
  band.subcarrier_spacing_hz =
      r.get_double(section + ".subcarrier_spacing_hz", band.subcarrier_spacing_hz);
}

ModelKind kind_from_config(const std::string& name, const std::string& source) {
  try {
    return model_kind_from_name(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

bool sparsity_from_value(ConfigReader& r, const TomlValue& v) {
  if (const bool* b = std::get_if<bool>(&v.value)) return *b;
  if (const std::string* s = std::get_if<std::string>(&v.value)) {
    if (*s == "on") return true;
    if (*s == "off") return false;
  }
  fail_at(r.source(), v.line, "sparsity entries must be true/false or \"on\"/\"off\"");
}

double fraction_checked(ConfigReader& r, const std::string& key, double fallback) {
  const double f = r.get_double(key, fallback);
  if (!(f > 0.0) || f > 1.0)
    throw ConfigError(r.source() + ": '" + key + "' must be in (0, 1]");
  return f;
}

}  // namespace

ExperimentConfig experiment_config_from_toml(const std::string& text, const std::string& source) {
  ConfigReader r(parse_toml(text, source), source);
  ExperimentConfig cfg;

  cfg.scene.num_users = checked_int(r, "scene.num_users", cfg.scene.num_users, 2);
  cfg.scene.seed = r.get_seed("scene.seed", cfg.scene.seed);
  cfg.scene.rays_file = r.get_string("scene.rays_file", cfg.scene.rays_file);
  SceneParams& geo = cfg.scene.geometry;
  geo.sub6_paths = checked_int(r, "scene.sub6_paths", geo.sub6_paths, 1);
  geo.mmwave_paths = checked_int(r, "scene.mmwave_paths", geo.mmwave_paths, 1);
  geo.delay_spread_s = r.get_double("scene.delay_spread_s", geo.delay_spread_s);
  geo.gain_decay_s = r.get_double("scene.gain_decay_s", geo.gain_decay_s);
  geo.elevation_spread_rad =
      r.get_double("scene.elevation_spread_rad", geo.elevation_spread_rad);
  geo.azimuth_min_rad = r.get_double("scene.azimuth_min_rad", geo.azimuth_min_rad);
  geo.azimuth_max_rad = r.get_double("scene.azimuth_max_rad", geo.azimuth_max_rad);
  if (!(geo.azimuth_min_rad < geo.azimuth_max_rad) ||
      geo.azimuth_min_rad < -M_PI || geo.azimuth_max_rad > M_PI)
    throw ConfigError(source + ": scene azimuth range must satisfy -pi <= min < max <= pi");
  if (geo.mmwave_paths > geo.sub6_paths)
    throw ConfigError(source + ": scene.mmwave_paths cannot exceed scene.sub6_paths");
  if (!(geo.delay_spread_s > 0.0) || !(geo.gain_decay_s > 0.0))
    throw ConfigError(source + ": scene spreads must be positive");

  read_band(r, "sub6", cfg.sub6_band);
  read_band(r, "mmwave", cfg.mmwave_band);
  cfg.sub6_band.num_paths = geo.sub6_paths;
  cfg.mmwave_band.num_paths = geo.mmwave_paths;

  cfg.pilots.sub6_snr_db = r.get_double("pilots.sub6_snr_db", cfg.pilots.sub6_snr_db);
  cfg.pilots.pilot_snr_db = r.get_double("pilots.pilot_snr_db", cfg.pilots.pilot_snr_db);
  cfg.pilots.active_antennas = checked_int(r, "pilots.active_antennas",
                                           cfg.pilots.active_antennas, 1);
  cfg.pilots.frac_mmw = fraction_checked(r, "pilots.frac_mmw", cfg.pilots.frac_mmw);
  cfg.pilots.frac_sub6 = fraction_checked(r, "pilots.frac_sub6", cfg.pilots.frac_sub6);
  cfg.pilots.seed = r.get_seed("pilots.seed", cfg.pilots.seed);
  if (cfg.pilots.active_antennas > cfg.mmwave_band.num_antennas)
    throw ConfigError(source + ": pilots.active_antennas exceeds mmwave.num_antennas");

  cfg.dataset.aug_rate = r.get_double("dataset.aug_rate", cfg.dataset.aug_rate);
  cfg.dataset.sparsity = r.get_bool("dataset.sparsity", cfg.dataset.sparsity);
  cfg.dataset.train_fraction = r.get_double("dataset.train_fraction", cfg.dataset.train_fraction);
  cfg.dataset.split_seed = r.get_seed("dataset.split_seed", cfg.dataset.split_seed);
  cfg.dataset.aug_seed = r.get_seed("dataset.aug_seed", cfg.dataset.aug_seed);
  cfg.dataset.downlink_snr_db = r.get_double("dataset.downlink_snr_db",
                                             cfg.dataset.downlink_snr_db);
  if (cfg.dataset.aug_rate < 1.0)
    throw ConfigError(source + ": dataset.aug_rate must be at least 1");
  if (!(cfg.dataset.train_fraction > 0.0) || !(cfg.dataset.train_fraction < 1.0))
    throw ConfigError(source + ": dataset.train_fraction must be in (0, 1)");

  cfg.model.kind = kind_from_config(r.get_string("model.kind", model_kind_name(cfg.model.kind)),
                                    source);
  cfg.model.width_sub6 = checked_int(r, "model.width_sub6", cfg.model.width_sub6, 1);
  cfg.model.width_mmwave = checked_int(r, "model.width_mmwave", cfg.model.width_mmwave, 1);
  cfg.model.sub6_blocks = checked_int(r, "model.sub6_blocks", cfg.model.sub6_blocks, 1);
  cfg.model.mmwave_blocks = checked_int(r, "model.mmwave_blocks", cfg.model.mmwave_blocks, 1);
  cfg.model.head_layers = checked_int(r, "model.head_layers", cfg.model.head_layers, 1);
  cfg.model.dropout = r.get_double("model.dropout", cfg.model.dropout);
  if (!(cfg.model.dropout >= 0.0) || cfg.model.dropout >= 1.0)
    throw ConfigError(source + ": model.dropout must be in [0, 1)");

  cfg.train.batch_size = checked_int(r, "train.batch_size", cfg.train.batch_size, 2);
  cfg.train.epochs = checked_int(r, "train.epochs", cfg.train.epochs, 0);
  cfg.train.base_lr = r.get_double("train.base_lr", cfg.train.base_lr);
  cfg.train.seed = r.get_seed("train.seed", cfg.train.seed);
  if (!(cfg.train.base_lr > 0.0)) throw ConfigError(source + ": train.base_lr must be positive");

  cfg.sweep.models = r.get_array<ModelKind>(
      "sweep.models", cfg.sweep.models, [&](const TomlValue& v) {
        const auto* s = std::get_if<std::string>(&v.value);
        if (!s) fail_at(source, v.line, "sweep.models entries must be strings");
        return kind_from_config(*s, source);
      });
  cfg.sweep.sub6_snr_db = r.get_double_array("sweep.sub6_snr_db", cfg.sweep.sub6_snr_db);
  cfg.sweep.pilot_snr_db = r.get_double_array("sweep.pilot_snr_db", cfg.sweep.pilot_snr_db);
  cfg.sweep.active_antennas = r.get_array<int>(
      "sweep.active_antennas", cfg.sweep.active_antennas, [&](const TomlValue& v) {
        const auto* i = std::get_if<long long>(&v.value);
        if (!i || *i < 1) fail_at(source, v.line, "sweep.active_antennas entries must be positive integers");
        return static_cast<int>(*i);
      });
  cfg.sweep.frac_mmw = r.get_double_array("sweep.frac_mmw", cfg.sweep.frac_mmw);
  cfg.sweep.frac_sub6 = r.get_double_array("sweep.frac_sub6", cfg.sweep.frac_sub6);
  cfg.sweep.aug_rates = r.get_double_array("sweep.aug_rates", cfg.sweep.aug_rates);
  cfg.sweep.sparsity = r.get_array<bool>(
      "sweep.sparsity", cfg.sweep.sparsity,
      [&](const TomlValue& v) { return sparsity_from_value(r, v); });
  cfg.sweep.seeds = r.get_array<std::uint64_t>(
      "sweep.seeds", cfg.sweep.seeds, [&](const TomlValue& v) {
        const auto* i = std::get_if<long long>(&v.value);
        if (!i || *i < 0) fail_at(source, v.line, "sweep.seeds entries must be non-negative integers");
        return static_cast<std::uint64_t>(*i);
      });

  r.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return experiment_config_from_toml(text, path.string());
}

std::vector<UserScene> scenes_from_config(const ExperimentConfig& config) {
  if (!config.scene.rays_file.empty()) return load_ray_file(config.scene.rays_file);
  std::vector<UserScene> scenes(config.scene.num_users);
  for (int u = 0; u < config.scene.num_users; ++u)
    scenes[u] = generate_scene(config.scene.geometry, config.scene.seed, u);
  return scenes;
}

BuildOptions build_options_from_config(const ExperimentConfig& config) {
  BuildOptions o;
  o.sub6_band = config.sub6_band;
  o.mmwave_band = config.mmwave_band;
  o.sub6_pilots = {.snr_db = config.pilots.sub6_snr_db,
                   .active_antenna_count = config.sub6_band.num_antennas,
                   .pilot_subcarrier_fraction = config.pilots.frac_sub6,
                   .rng_seed = config.pilots.seed};
  o.mmwave_pilots = {.snr_db = config.pilots.pilot_snr_db,
                     .active_antenna_count = config.pilots.active_antennas,
                     .pilot_subcarrier_fraction = config.pilots.frac_mmw,
                     .rng_seed = config.pilots.seed};
  o.aug_rate = config.dataset.aug_rate;
  o.delay_sparsify = config.dataset.sparsity;
  o.downlink_snr_linear = std::pow(10.0, config.dataset.downlink_snr_db / 10.0);
  o.train_fraction = config.dataset.train_fraction;
  o.split_seed = config.dataset.split_seed;
  o.aug_seed = config.dataset.aug_seed;
  o.generator = config.scene.rays_file.empty()
                    ? "synthetic seed=" + std::to_string(config.scene.seed)
                    : "rays=" + config.scene.rays_file;
  return o;
}

FusionSpec fusion_spec_from_config(const ExperimentConfig& config,
                                   const DatasetManifest& manifest) {
  FusionSpec spec;
  spec.sub6_dim = manifest.sub6_dim;
  spec.mmwave_dim = manifest.mmwave_dim;
  spec.num_beams = manifest.codebook_size;
  spec.mmwave_blocks = config.model.mmwave_blocks;
  spec.sub6_blocks = config.model.sub6_blocks;
  spec.head_layers = config.model.head_layers;
  spec.width_mmwave = config.model.width_mmwave;
  spec.width_sub6 = config.model.width_sub6;
  spec.dropout_rate = config.model.dropout;
  return spec;
}

DatasetManifest run_generate(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir) {
  const std::vector<UserScene> scenes = scenes_from_config(config);
  const BuiltDataset dataset = build_dataset(scenes, build_options_from_config(config));
  save_dataset(dataset, out_dir);
  const DatasetManifest& m = dataset.manifest;
  std::cout << "wrote " << out_dir.string() << ": " << m.num_samples << " samples from "
            << m.num_users << " users (" << m.train_users.size() << " train / "
            << m.val_users.size() << " val), sub6 dim " << m.sub6_dim << ", mmwave dim "
            << m.mmwave_dim << ", " << m.codebook_size << " beams, omega "
            << m.omega_sub6 << " / " << m.omega_mmwave << "\n";
  return m;
}

namespace {

DatasetSplit split_from_manifest(const FeatureSet& features, const DatasetManifest& manifest) {
  DatasetSplit split;
  split.train_users = manifest.train_users;
  split.val_users = manifest.val_users;
  split.train_rows = rows_for_users(features, manifest.train_users);
  split.val_rows = rows_for_users(features, manifest.val_users);
  return split;
}

std::string canonical(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// The nine cell-identifying fields of one results row, pre-formatted.
std::string row_key(ModelKind kind, double sub6_snr_db, double pilot_snr_db, int n_active,
                    double frac_mmw, double frac_sub6, double aug_rate, bool sparsity,
                    std::uint64_t seed) {
  std::ostringstream out;
  out << model_kind_name(kind) << ',' << canonical(sub6_snr_db) << ',' << canonical(pilot_snr_db)
      << ',' << n_active << ',' << canonical(frac_mmw) << ',' << canonical(frac_sub6) << ','
      << canonical(aug_rate) << ',' << (sparsity ? "on" : "off") << ',' << seed;
  return out.str();
}

void append_results_row(const std::filesystem::path& csv, const std::string& key,
                        const Metrics& metrics, const std::string& status) {
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream out(csv, std::ios::app);
  if (!out) throw std::runtime_error("cannot open results file " + csv.string());
  if (fresh) out << kResultsHeader << "\n";
  out << key << ',' << canonical(metrics.top1) << ',' << canonical(metrics.top3) << ','
      << canonical(metrics.rate_ratio_mean) << ',' << status << "\n";
  if (!out) throw std::runtime_error("write failed on " + csv.string());
}

std::set<std::string> existing_row_keys(const std::filesystem::path& csv) {
  std::set<std::string> keys;
  if (!std::filesystem::exists(csv)) return keys;
  std::ifstream in(csv);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    int commas = 0;
    std::size_t cut = std::string::npos;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == ',' && ++commas == 9) {
        cut = i;
        break;
      }
    }
    if (cut != std::string::npos) keys.insert(line.substr(0, cut));
  }
  return keys;
}

json frozen_run_config(const ExperimentConfig& config, const DatasetManifest& manifest,
                       const std::filesystem::path& dataset_dir) {
  return json{{"model", model_kind_name(config.model.kind)},
              {"dataset_dir", dataset_dir.string()},
              {"row_key",
               json{{"sub6_snr_db", manifest.sub6_pilots.snr_db},
                    {"pilot_snr_db", manifest.mmwave_pilots.snr_db},
                    {"n_active", manifest.mmwave_pilots.active_antenna_count},
                    {"frac_mmw", manifest.mmwave_pilots.pilot_subcarrier_fraction},
                    {"frac_sub6", manifest.sub6_pilots.pilot_subcarrier_fraction},
                    {"aug_rate", manifest.aug_rate},
                    {"sparsity", manifest.delay_sparsify}}},
              {"train",
               json{{"batch_size", config.train.batch_size},
                    {"epochs", config.train.epochs},
                    {"base_lr", config.train.base_lr},
                    {"seed", config.train.seed}}},
              {"arch",
               json{{"width_sub6", config.model.width_sub6},
                    {"width_mmwave", config.model.width_mmwave},
                    {"sub6_blocks", config.model.sub6_blocks},
                    {"mmwave_blocks", config.model.mmwave_blocks},
                    {"head_layers", config.model.head_layers},
                    {"dropout", config.model.dropout}}}};
}

void check_dims(const char* side, int expected, int actual) {
  if (expected != actual)
    throw std::runtime_error(std::string(side) + " input dimension mismatch: checkpoint expects " +
                             std::to_string(expected) + ", dataset provides " +
                             std::to_string(actual));
}

}  // namespace

const char* const kResultsHeader =
    "model,sub6_snr_db,pilot_snr_db,n_active,frac_mmw,frac_sub6,aug_rate,sparsity,seed,top1,"
    "top3,rate_ratio,status";

TrainHistory run_train(const ExperimentConfig& config, const std::filesystem::path& dataset_dir,
                       const std::filesystem::path& run_dir) {
  const BuiltDataset dataset = load_dataset(dataset_dir);
  const DatasetSplit split = split_from_manifest(dataset.features, dataset.manifest);
  const FusionSpec spec = fusion_spec_from_config(config, dataset.manifest);
  Network<float> net = build_model<float>(config.model.kind, spec);
  init_network(net, derive_seed(config.train.seed, 0));
  const TrainHistory history = train(net, dataset.features, split, config.train);
  std::filesystem::create_directories(run_dir);
  save_checkpoint(net, config.train, run_dir);
  write_history_csv(run_dir / "history.csv", history);
  write_text_file(run_dir / "config.json",
                  frozen_run_config(config, dataset.manifest, dataset_dir).dump(2) + "\n");
  if (!history.records.empty())
    std::cout << "trained " << model_kind_name(config.model.kind) << " for "
              << history.records.size() << " epochs, final loss "
              << history.records.back().loss << ", val top-1 "
              << history.records.back().val_top1 << "\n";
  return history;
}

Metrics run_eval(const std::filesystem::path& run_dir, const std::filesystem::path& dataset_dir,
                 const std::filesystem::path& results_csv) {
  LoadedCheckpoint loaded = load_checkpoint(run_dir);
  const BuiltDataset dataset = load_dataset(dataset_dir);
  if (loaded.net.kind != ModelKind::MmwaveOnly)
    check_dims("sub6", loaded.net.spec.sub6_dim, dataset.manifest.sub6_dim);
  if (loaded.net.kind != ModelKind::Sub6Only)
    check_dims("mmwave", loaded.net.spec.mmwave_dim, dataset.manifest.mmwave_dim);
  const DatasetSplit split = split_from_manifest(dataset.features, dataset.manifest);
  const Metrics metrics = evaluate(loaded.net, dataset.features, split.val_rows);

  json mj{{"top1", metrics.top1},
          {"top3", metrics.top3},
          {"rate_ratio_mean", metrics.rate_ratio_mean},
          {"num_samples", metrics.num_samples},
          {"per_class_total", metrics.per_class_total},
          {"per_class_correct", metrics.per_class_correct}};
  write_text_file(run_dir / "metrics.json", mj.dump(2) + "\n");

  const json frozen = json::parse(read_text_file(run_dir / "config.json"));
  const json& k = frozen.at("row_key");
  const std::string key = row_key(
      loaded.net.kind, k.at("sub6_snr_db").get<double>(), k.at("pilot_snr_db").get<double>(),
      k.at("n_active").get<int>(), k.at("frac_mmw").get<double>(),
      k.at("frac_sub6").get<double>(), k.at("aug_rate").get<double>(),
      k.at("sparsity").get<bool>(), loaded.config.seed);
  append_results_row(results_csv, key, metrics, "ok");
  std::cout << "eval " << run_dir.string() << ": top1 " << metrics.top1 << ", top3 "
            << metrics.top3 << ", rate ratio " << metrics.rate_ratio_mean << "\n";
  return metrics;
}

void run_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv = out_dir / "results.csv";
  std::set<std::string> done = existing_row_keys(csv);
  const std::vector<UserScene> scenes = scenes_from_config(config);
  const SweepConfig& grid = config.sweep;

  for (double sub6_snr : grid.sub6_snr_db)
    for (double pilot_snr : grid.pilot_snr_db)
      for (int n_active : grid.active_antennas)
        for (double frac_mmw : grid.frac_mmw)
          for (double frac_sub6 : grid.frac_sub6)
            for (double aug_rate : grid.aug_rates)
              for (bool sparsity : grid.sparsity) {
                ExperimentConfig cell = config;
                cell.pilots.sub6_snr_db = sub6_snr;
                cell.pilots.pilot_snr_db = pilot_snr;
                cell.pilots.active_antennas = n_active;
                cell.pilots.frac_mmw = frac_mmw;
                cell.pilots.frac_sub6 = frac_sub6;
                cell.dataset.aug_rate = aug_rate;
                cell.dataset.sparsity = sparsity;

                bool dataset_needed = false;
                for (ModelKind kind : grid.models)
                  for (std::uint64_t seed : grid.seeds)
                    dataset_needed |= !done.count(row_key(kind, sub6_snr, pilot_snr, n_active,
                                                          frac_mmw, frac_sub6, aug_rate,
                                                          sparsity, seed));
                if (!dataset_needed) continue;
                if (n_active > cell.mmwave_band.num_antennas)
                  throw ConfigError("sweep: active antennas " + std::to_string(n_active) +
                                    " exceeds mmwave.num_antennas");

                const BuiltDataset dataset = build_dataset(scenes,
                                                           build_options_from_config(cell));
                const DatasetSplit split = split_from_manifest(dataset.features,
                                                               dataset.manifest);
                for (ModelKind kind : grid.models)
                  for (std::uint64_t seed : grid.seeds) {
                    const std::string key = row_key(kind, sub6_snr, pilot_snr, n_active,
                                                    frac_mmw, frac_sub6, aug_rate, sparsity,
                                                    seed);
                    if (done.count(key)) continue;
                    try {
                      cell.model.kind = kind;
                      cell.train.seed = seed;
                      const FusionSpec spec = fusion_spec_from_config(cell, dataset.manifest);
                      Network<float> net = build_model<float>(kind, spec);
                      init_network(net, derive_seed(seed, 0));
                      train(net, dataset.features, split, cell.train);
                      const Metrics metrics = evaluate(net, dataset.features, split.val_rows);
                      append_results_row(csv, key, metrics, "ok");
                      std::cout << "sweep cell " << key << " -> top1 "
                                << canonical(metrics.top1) << "\n";
                    } catch (const std::exception& e) {
                      append_results_row(csv, key, Metrics{}, "failed");
                      std::cerr << "sweep cell " << key << " failed: " << e.what() << "\n";
                    }
                    done.insert(key);
                  }
              }
}

FlopsReport run_flops(const ExperimentConfig& config) {
  FusionSpec spec;
  spec.sub6_dim = 2 * config.sub6_band.num_antennas * config.sub6_band.num_subcarriers;
  spec.mmwave_dim = 2 * config.pilots.active_antennas * config.mmwave_band.num_subcarriers;
  spec.num_beams = config.mmwave_band.num_antennas;
  spec.mmwave_blocks = config.model.mmwave_blocks;
  spec.sub6_blocks = config.model.sub6_blocks;
  spec.head_layers = config.model.head_layers;
  spec.width_mmwave = config.model.width_mmwave;
  spec.width_sub6 = config.model.width_sub6;
  FlopsReport report;
  const auto lists = model_width_lists(config.model.kind, spec);
  const char* names[3] = {"sub6-network", "mmwave-network", "classify-network"};
  for (int i = 0; i < 3; ++i) {
    const long long part = layer_chain_flops(lists[i]);
    if (!lists[i].empty()) report.parts.emplace_back(names[i], part);
    report.total += part;
  }
  return report;
}

}  // namespace beamfuse
