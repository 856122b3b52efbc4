#include "beamfuse/datapipe.hpp"

#include "beamfuse/channel.hpp"
#include "beamfuse/dft.hpp"
#include "beamfuse/io.hpp"
#include "beamfuse/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace beamfuse {

using nlohmann::json;

double global_normalizer(std::span<const ChannelMatrix> channels) {
  if (channels.empty()) throw std::invalid_argument("global_normalizer: empty collection");
  double omega = 0.0;
  for (const ChannelMatrix& ch : channels)
    omega = std::max(omega, ch.values.cwiseAbs().maxCoeff());
  if (omega == 0.0) throw std::invalid_argument("global_normalizer: all-zero dataset");
  return omega;
}

Eigen::VectorXf to_real_features(const ChannelMatrix& channel, double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("to_real_features: omega must be > 0");
  const CMatrix& h = channel.values;
  const Eigen::Index n = h.rows(), k = h.cols();
  Eigen::VectorXf out(2 * n * k);
  Eigen::Index idx = 0;
  for (Eigen::Index a = 0; a < n; ++a)  // real block, subcarrier fastest
    for (Eigen::Index c = 0; c < k; ++c) out(idx++) = static_cast<float>(h(a, c).real() / omega);
  for (Eigen::Index a = 0; a < n; ++a)  // imaginary block
    for (Eigen::Index c = 0; c < k; ++c) out(idx++) = static_cast<float>(h(a, c).imag() / omega);
  return out;
}

ChannelMatrix delay_transform(const ChannelMatrix& channel) {
  if (channel.domain != ChannelDomain::SpatialFrequency)
    throw std::invalid_argument("delay_transform: expects a spatial-frequency channel");
  const CMatrix fd = dft_matrix(static_cast<int>(channel.values.cols()));
  return {channel.values * fd.adjoint(), ChannelDomain::SpatialDelay};
}

ChannelMatrix angle_delay_transform(const ChannelMatrix& channel) {
  if (channel.domain != ChannelDomain::SpatialFrequency)
    throw std::invalid_argument("angle_delay_transform: expects a spatial-frequency channel");
  const CMatrix fa = dft_matrix(static_cast<int>(channel.values.rows()));
  const CMatrix fd = dft_matrix(static_cast<int>(channel.values.cols()));
  return {fa * channel.values * fd.adjoint(), ChannelDomain::AngularDelay};
}

ChannelMatrix rotate_phase(const ChannelMatrix& channel, double phase_unit) {
  const Complex factor = std::polar(1.0, -2.0 * M_PI * phase_unit);
  return {channel.values * factor, channel.domain};
}

namespace {

std::pair<std::vector<int>, std::vector<int>> user_split(int num_users, double train_fraction,
                                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  const int n_train = static_cast<int>(std::floor(num_users * train_fraction));
  if (n_train < 1 || n_train >= num_users)
    throw std::invalid_argument("split: a side would be empty");
  std::vector<int> order(num_users);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eng(mix64(seed));
  shuffle_deterministic(order, eng);
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> val(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

}  // namespace

std::vector<int> rows_for_users(const FeatureSet& features, const std::vector<int>& users) {
  std::vector<char> member(features.num_users, 0);
  for (int u : users) member.at(u) = 1;
  std::vector<int> rows;
  for (int i = 0; i < features.num_samples(); ++i)
    if (member[features.user_of_row[i]]) rows.push_back(i);
  return rows;
}

DatasetSplit split_dataset(const FeatureSet& features, double train_fraction, std::uint64_t seed) {
  auto [train_users, val_users] = user_split(features.num_users, train_fraction, seed);
  DatasetSplit split;
  split.train_rows = rows_for_users(features, train_users);
  split.val_rows = rows_for_users(features, val_users);
  split.train_users = std::move(train_users);
  split.val_users = std::move(val_users);
  return split;
}

BuiltDataset build_dataset(std::span<const UserScene> scenes, const BuildOptions& options) {
  const int num_users = static_cast<int>(scenes.size());
  if (num_users < 2) throw std::invalid_argument("build_dataset: need at least two scenes");
  if (options.aug_rate < 1.0) throw std::invalid_argument("build_dataset: aug_rate must be >= 1");
  const double exact_total = options.aug_rate * num_users;
  const long long total = std::llround(exact_total);
  if (std::abs(exact_total - static_cast<double>(total)) > 1e-9)
    throw std::invalid_argument("build_dataset: aug_rate * num_users must be an integer");

  const Codebook codebook = dft_codebook(options.mmwave_band.num_antennas);
  const int num_beams = codebook.size();

  // Ground truth, labels, and the per-user beam rate table.
  std::vector<ChannelMatrix> sub6_truth(num_users), mmwave_truth(num_users);
  std::vector<int> label(num_users);
  RowMatrixXf rates(num_users, num_beams);
  for (int u = 0; u < num_users; ++u) {
    sub6_truth[u] = synth_channel(scenes[u].sub6_rays, options.sub6_band);
    mmwave_truth[u] = synth_channel(scenes[u].mmwave_rays, options.mmwave_band);
    const Eigen::VectorXd r = beam_rates(mmwave_truth[u], codebook, options.downlink_snr_linear);
    rates.row(u) = r.cast<float>();
    int best = 0;
    for (int c = 1; c < num_beams; ++c)
      if (r(c) > r(best)) best = c;
    label[u] = best;
  }

  // Noise levels referenced to the dataset-mean entry power of each band.
  const double var_sub6 =
      noise_variance_for_snr(mean_entry_power(sub6_truth), options.sub6_pilots.snr_db);
  const double var_mmwave =
      noise_variance_for_snr(mean_entry_power(mmwave_truth), options.mmwave_pilots.snr_db);

  std::vector<ChannelMatrix> sub6_est(num_users), mmwave_est(num_users);
  for (int u = 0; u < num_users; ++u) {
    std::mt19937_64 eng_s(derive_seed(options.sub6_pilots.rng_seed, u, 0));
    std::mt19937_64 eng_m(derive_seed(options.mmwave_pilots.rng_seed, u, 1));
    sub6_est[u] = estimate_sub6(sub6_truth[u], options.sub6_pilots, var_sub6, eng_s);
    mmwave_est[u] = estimate_mmwave_partial(mmwave_truth[u], options.mmwave_pilots, var_mmwave,
                                            eng_m);
    if (options.delay_sparsify) {
      sub6_est[u] = delay_transform(sub6_est[u]);
      mmwave_est[u] = delay_transform(mmwave_est[u]);
    }
  }

  auto [train_users, val_users] = user_split(num_users, options.train_fraction, options.split_seed);

  // Omega comes from the training split only and is reused everywhere.
  std::vector<ChannelMatrix> train_sub6, train_mmwave;
  train_sub6.reserve(train_users.size());
  train_mmwave.reserve(train_users.size());
  for (int u : train_users) {
    train_sub6.push_back(sub6_est[u]);
    train_mmwave.push_back(mmwave_est[u]);
  }
  const double omega_sub6 = global_normalizer(train_sub6);
  const double omega_mmwave = global_normalizer(train_mmwave);

  FeatureSet fs;
  fs.num_users = num_users;
  fs.omega_sub6 = omega_sub6;
  fs.omega_mmwave = omega_mmwave;
  const int sub6_dim = static_cast<int>(2 * sub6_est[0].values.size());
  const int mmwave_dim = static_cast<int>(2 * mmwave_est[0].values.size());
  fs.sub6.resize(total, sub6_dim);
  fs.mmwave.resize(total, mmwave_dim);
  fs.labels = RowMatrixXf::Zero(total, num_beams);
  fs.rates = rates;
  fs.label_index.resize(total);
  fs.user_of_row.resize(total);

  for (long long i = 0; i < total; ++i) {
    const int u = static_cast<int>(i % num_users);
    const long long copy = i / num_users;
    if (copy == 0) {
      fs.sub6.row(i) = to_real_features(sub6_est[u], omega_sub6);
      fs.mmwave.row(i) = to_real_features(mmwave_est[u], omega_mmwave);
    } else {
      std::mt19937_64 eng(derive_seed(options.aug_seed, u, static_cast<std::uint64_t>(copy)));
      const double phi = uniform01(eng);  // mmWave phase, drawn first
      const double chi = uniform01(eng);  // sub-6 phase, independent
      fs.mmwave.row(i) = to_real_features(rotate_phase(mmwave_est[u], phi), omega_mmwave);
      fs.sub6.row(i) = to_real_features(rotate_phase(sub6_est[u], chi), omega_sub6);
    }
    fs.labels(i, label[u]) = 1.0f;
    fs.label_index[i] = label[u];
    fs.user_of_row[i] = u;
  }

  DatasetManifest manifest;
  manifest.num_users = num_users;
  manifest.num_samples = static_cast<int>(total);
  manifest.aug_rate = options.aug_rate;
  manifest.delay_sparsify = options.delay_sparsify;
  manifest.downlink_snr_linear = options.downlink_snr_linear;
  manifest.codebook_size = num_beams;
  manifest.sub6_band = options.sub6_band;
  manifest.mmwave_band = options.mmwave_band;
  manifest.sub6_pilots = options.sub6_pilots;
  manifest.mmwave_pilots = options.mmwave_pilots;
  manifest.omega_sub6 = omega_sub6;
  manifest.omega_mmwave = omega_mmwave;
  manifest.train_fraction = options.train_fraction;
  manifest.split_seed = options.split_seed;
  manifest.aug_seed = options.aug_seed;
  manifest.train_users = train_users;
  manifest.val_users = val_users;
  manifest.sub6_dim = sub6_dim;
  manifest.mmwave_dim = mmwave_dim;
  manifest.generator = options.generator;
  return {std::move(fs), std::move(manifest)};
}

namespace {

json band_to_json(const BandConfig& b) {
  return json{{"carrier_ghz", b.carrier_ghz},
              {"num_antennas", b.num_antennas},
              {"spacing_wavelengths", b.spacing_wavelengths},
              {"num_subcarriers", b.num_subcarriers},
              {"subcarrier_spacing_hz", b.subcarrier_spacing_hz},
              {"num_paths", b.num_paths}};
}

BandConfig band_from_json(const json& j) {
  BandConfig b;
  b.carrier_ghz = j.at("carrier_ghz").get<double>();
  b.num_antennas = j.at("num_antennas").get<int>();
  b.spacing_wavelengths = j.at("spacing_wavelengths").get<double>();
  b.num_subcarriers = j.at("num_subcarriers").get<int>();
  b.subcarrier_spacing_hz = j.at("subcarrier_spacing_hz").get<double>();
  b.num_paths = j.at("num_paths").get<int>();
  return b;
}

json pilots_to_json(const PilotConfig& p) {
  return json{{"snr_db", p.snr_db},
              {"active_antenna_count", p.active_antenna_count},
              {"pilot_subcarrier_fraction", p.pilot_subcarrier_fraction},
              {"rng_seed", p.rng_seed}};
}

PilotConfig pilots_from_json(const json& j) {
  PilotConfig p;
  p.snr_db = j.at("snr_db").get<double>();
  p.active_antenna_count = j.at("active_antenna_count").get<int>();
  p.pilot_subcarrier_fraction = j.at("pilot_subcarrier_fraction").get<double>();
  p.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return p;
}

void write_matrix_f32(const std::filesystem::path& path, const RowMatrixXf& m) {
  write_f32(path, {m.data(), static_cast<std::size_t>(m.size())});
}

RowMatrixXf read_matrix_f32(const std::filesystem::path& path, int rows, int cols) {
  const auto raw = read_f32(path, static_cast<std::size_t>(rows) * cols);
  return Eigen::Map<const RowMatrixXf>(raw.data(), rows, cols);
}

}  // namespace

void save_dataset(const BuiltDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const DatasetManifest& m = dataset.manifest;
  json j{{"schema_version", m.schema_version},
         {"num_users", m.num_users},
         {"num_samples", m.num_samples},
         {"aug_rate", m.aug_rate},
         {"delay_sparsify", m.delay_sparsify},
         {"downlink_snr_linear", m.downlink_snr_linear},
         {"codebook_size", m.codebook_size},
         {"sub6_band", band_to_json(m.sub6_band)},
         {"mmwave_band", band_to_json(m.mmwave_band)},
         {"sub6_pilots", pilots_to_json(m.sub6_pilots)},
         {"mmwave_pilots", pilots_to_json(m.mmwave_pilots)},
         {"omega_sub6", m.omega_sub6},
         {"omega_mmwave", m.omega_mmwave},
         {"train_fraction", m.train_fraction},
         {"split_seed", m.split_seed},
         {"aug_seed", m.aug_seed},
         {"train_users", m.train_users},
         {"val_users", m.val_users},
         {"generator", m.generator},
         {"row_layout", "row j*num_users+u is augmentation copy j of user u"},
         {"feature_order", "real block then imaginary block, subcarrier fastest within each antenna"},
         {"shapes",
          json{{"sub6", {m.num_samples, m.sub6_dim}},
               {"mmwave", {m.num_samples, m.mmwave_dim}},
               {"labels", {m.num_samples, m.codebook_size}},
               {"rates", {m.num_users, m.codebook_size}}}}};
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
  write_matrix_f32(dir / "sub6.f32", dataset.features.sub6);
  write_matrix_f32(dir / "mmwave.f32", dataset.features.mmwave);
  write_matrix_f32(dir / "labels.f32", dataset.features.labels);
  write_matrix_f32(dir / "rates.f32", dataset.features.rates);
}

BuiltDataset load_dataset(const std::filesystem::path& dir) {
  json j = json::parse(read_text_file(dir / "manifest.json"));
  DatasetManifest m;
  const int version = j.at("schema_version").get<int>();
  if (version != m.schema_version) {
    throw std::runtime_error("dataset schema version mismatch: file has " +
                             std::to_string(version) + ", expected " +
                             std::to_string(m.schema_version));
  }
  m.num_users = j.at("num_users").get<int>();
  m.num_samples = j.at("num_samples").get<int>();
  m.aug_rate = j.at("aug_rate").get<double>();
  m.delay_sparsify = j.at("delay_sparsify").get<bool>();
  m.downlink_snr_linear = j.at("downlink_snr_linear").get<double>();
  m.codebook_size = j.at("codebook_size").get<int>();
  m.sub6_band = band_from_json(j.at("sub6_band"));
  m.mmwave_band = band_from_json(j.at("mmwave_band"));
  m.sub6_pilots = pilots_from_json(j.at("sub6_pilots"));
  m.mmwave_pilots = pilots_from_json(j.at("mmwave_pilots"));
  m.omega_sub6 = j.at("omega_sub6").get<double>();
  m.omega_mmwave = j.at("omega_mmwave").get<double>();
  m.train_fraction = j.at("train_fraction").get<double>();
  m.split_seed = j.at("split_seed").get<std::uint64_t>();
  m.aug_seed = j.at("aug_seed").get<std::uint64_t>();
  m.train_users = j.at("train_users").get<std::vector<int>>();
  m.val_users = j.at("val_users").get<std::vector<int>>();
  m.generator = j.value("generator", std::string{});
  const json& shapes = j.at("shapes");
  m.sub6_dim = shapes.at("sub6").at(1).get<int>();
  m.mmwave_dim = shapes.at("mmwave").at(1).get<int>();
  if (shapes.at("sub6").at(0).get<int>() != m.num_samples ||
      shapes.at("labels").at(1).get<int>() != m.codebook_size ||
      shapes.at("rates").at(0).get<int>() != m.num_users) {
    throw std::runtime_error("dataset manifest shapes are inconsistent");
  }

  FeatureSet fs;
  fs.sub6 = read_matrix_f32(dir / "sub6.f32", m.num_samples, m.sub6_dim);
  fs.mmwave = read_matrix_f32(dir / "mmwave.f32", m.num_samples, m.mmwave_dim);
  fs.labels = read_matrix_f32(dir / "labels.f32", m.num_samples, m.codebook_size);
  fs.rates = read_matrix_f32(dir / "rates.f32", m.num_users, m.codebook_size);
  fs.num_users = m.num_users;
  fs.omega_sub6 = m.omega_sub6;
  fs.omega_mmwave = m.omega_mmwave;
  fs.label_index.resize(m.num_samples);
  fs.user_of_row.resize(m.num_samples);
  for (int i = 0; i < m.num_samples; ++i) {
    Eigen::Index arg = 0;
    fs.labels.row(i).maxCoeff(&arg);
    fs.label_index[i] = static_cast<int>(arg);
    fs.user_of_row[i] = i % m.num_users;
  }
  return {std::move(fs), std::move(m)};
}

}  // namespace beamfuse
