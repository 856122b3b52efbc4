#pragma once

#include "beamfuse/types.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace beamfuse {

/// Pilot-stage settings of one band. active_antenna_count only applies to the
/// mmWave band.
struct PilotConfig {
  double snr_db = 20.0;
  int active_antenna_count = 8;
  double pilot_subcarrier_fraction = 1.0;
  std::uint64_t rng_seed = 0;
};

/// Normalized DFT training matrix used while sounding the active antennas.
struct TrainingMatrix {
  CMatrix values;  ///< n_active x n_active, unitary
};

/// Adds circularly symmetric complex Gaussian noise with per-entry variance
/// noise_variance. variance 0 returns the input unchanged.
CMatrix awgn(const CMatrix& values, double noise_variance, std::mt19937_64& rng);

/// Per-entry noise variance so that mean_power / variance matches snr_db.
double noise_variance_for_snr(double mean_entry_power, double snr_db);

/// Same, with the reference power taken as the mean squared entry magnitude of
/// the given channel. Errors on an all-zero channel.
double noise_variance_for_snr(const ChannelMatrix& channel, double snr_db);

/// Mean squared entry magnitude over a collection of channels; the
/// dataset-level SNR reference of one band.
double mean_entry_power(std::span<const ChannelMatrix> channels);

/// Pilot-bearing subcarrier indices for a stride-1/fraction placement starting
/// at subcarrier 0.
std::vector<int> pilot_subcarriers(int k_total, double fraction);

/// Uniformly strided active-antenna indices floor(i * n_total / n_active).
std::vector<int> select_active_antennas(int n_total, int n_active);

/// Entry (i, j) = exp(-j*2*pi*i*j/n_active) / sqrt(n_active).
TrainingMatrix dft_training_matrix(int n_active);

/// LS estimate of the sub-6 uplink channel with unit pilots: pilot columns are
/// truth plus noise, non-pilot columns copy their nearest pilot column (ties
/// toward the lower index).
ChannelMatrix estimate_sub6(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                            double noise_variance, std::mt19937_64& rng);

/// Convenience overload with the SNR referenced to the channel's own mean
/// entry power.
ChannelMatrix estimate_sub6(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                            std::mt19937_64& rng);

/// Partial mmWave estimate over the active antennas: per pilot subcarrier the
/// received training block is y = F h_active + n and the estimate is F^H y
/// (exact inverse, F unitary). Returns an active_antenna_count x K matrix;
/// non-pilot columns copy their nearest pilot column.
ChannelMatrix estimate_mmwave_partial(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                                      double noise_variance, std::mt19937_64& rng);

/// Convenience overload, SNR referenced to the channel's own mean entry power.
ChannelMatrix estimate_mmwave_partial(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                                      std::mt19937_64& rng);

}  // namespace beamfuse
