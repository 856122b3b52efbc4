#pragma once

#include "beamfuse/beams.hpp"
#include "beamfuse/estimation.hpp"
#include "beamfuse/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace beamfuse {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest entry modulus over a collection of channels; the normalizer Omega
/// of one band. Errors on an empty or all-zero collection.
double global_normalizer(std::span<const ChannelMatrix> channels);

/// Divides by omega and stacks the real block then the imaginary block, each
/// vectorized antenna by antenna with the subcarrier index fastest. Length
/// 2 * antennas * subcarriers.
Eigen::VectorXf to_real_features(const ChannelMatrix& channel, double omega);

/// Right-multiplies by the conjugate-transposed K x K normalized DFT matrix,
/// moving spatial-frequency to spatial-delay. Frobenius norm preserving.
ChannelMatrix delay_transform(const ChannelMatrix& channel);

/// Left-multiplies by the N x N normalized DFT matrix and right-multiplies by
/// the conjugate-transposed K x K one, moving spatial-frequency to
/// angular-delay. Frobenius norm preserving.
ChannelMatrix angle_delay_transform(const ChannelMatrix& channel);

/// Multiplies every entry by exp(-j*2*pi*phase_unit), phase_unit in [0, 1).
/// One phase is shared by all antennas and subcarriers of a user, so the best
/// beam is unchanged.
ChannelMatrix rotate_phase(const ChannelMatrix& channel, double phase_unit);

/// Network-ready sample arrays. Rows are samples laid out in copy-major
/// blocks: row j*num_users + u is augmentation copy j of user u, so row i
/// belongs to user i % num_users and rows [0, num_users) are the unaugmented
/// build.
struct FeatureSet {
  RowMatrixXf sub6;    ///< samples x (2 * N_s * K_s)
  RowMatrixXf mmwave;  ///< samples x (2 * active_antennas * K_m)
  RowMatrixXf labels;  ///< samples x codebook size, one-hot
  RowMatrixXf rates;   ///< num_users x codebook size, ground-truth beam rates
  std::vector<int> label_index;  ///< per sample, argmax of labels
  std::vector<int> user_of_row;  ///< per sample
  int num_users = 0;
  double omega_sub6 = 0.0;
  double omega_mmwave = 0.0;

  int num_samples() const { return static_cast<int>(sub6.rows()); }
};

/// Everything needed to rebuild or validate the on-disk arrays.
struct DatasetManifest {
  int schema_version = 1;
  int num_users = 0;
  int num_samples = 0;
  double aug_rate = 1.0;
  bool delay_sparsify = true;
  double downlink_snr_linear = 1.0;
  int codebook_size = 0;
  BandConfig sub6_band, mmwave_band;
  PilotConfig sub6_pilots, mmwave_pilots;
  double omega_sub6 = 0.0, omega_mmwave = 0.0;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0, aug_seed = 0;
  std::vector<int> train_users, val_users;
  int sub6_dim = 0, mmwave_dim = 0;
  std::string generator;  ///< free-form provenance note ("synthetic seed=..", "rays=..")
};

struct BuiltDataset {
  FeatureSet features;
  DatasetManifest manifest;
};

/// User-level split with row materialization. Augmented copies always land on
/// the same side as their source user.
struct DatasetSplit {
  std::vector<int> train_users, val_users;
  std::vector<int> train_rows, val_rows;
};

/// Deterministic shuffled user split; floor(num_users * train_fraction) users
/// train. Errors when either side would be empty.
DatasetSplit split_dataset(const FeatureSet& features, double train_fraction, std::uint64_t seed);

/// Row indices of a fixed user split, in (copy, user) order.
std::vector<int> rows_for_users(const FeatureSet& features, const std::vector<int>& users);

struct BuildOptions {
  BandConfig sub6_band = sub6_band_default();
  BandConfig mmwave_band = mmwave_band_default();
  PilotConfig sub6_pilots{.snr_db = 0.0, .active_antenna_count = 0,
                          .pilot_subcarrier_fraction = 1.0, .rng_seed = 7};
  PilotConfig mmwave_pilots{.snr_db = 20.0, .active_antenna_count = 8,
                            .pilot_subcarrier_fraction = 1.0, .rng_seed = 7};
  double aug_rate = 1.0;
  bool delay_sparsify = true;  ///< apply delay_transform to both bands
  double downlink_snr_linear = 1.0;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 3;
  std::uint64_t aug_seed = 5;
  std::string generator;  ///< provenance note copied into the manifest
};

/// Full pipeline over a set of scenes: synthesize ground truth, label by
/// exhaustive beam search on it, estimate both bands from noisy pilots,
/// optionally delay-sparsify, normalize by the training-split Omega of each
/// band, stack real features, and append phase-rotated copies until
/// round(aug_rate * U) samples exist. Deterministic for fixed options.
BuiltDataset build_dataset(std::span<const UserScene> scenes, const BuildOptions& options);

/// Writes manifest.json plus sub6.f32 / mmwave.f32 / labels.f32 / rates.f32
/// (row-major little-endian float32).
void save_dataset(const BuiltDataset& dataset, const std::filesystem::path& dir);

/// Loads and validates a dataset directory; array sizes must match the
/// manifest exactly.
BuiltDataset load_dataset(const std::filesystem::path& dir);

}  // namespace beamfuse
