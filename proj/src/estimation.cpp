#include "beamfuse/estimation.hpp"

#include "beamfuse/dft.hpp"
#include "beamfuse/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace beamfuse {

CMatrix awgn(const CMatrix& values, double noise_variance, std::mt19937_64& rng) {
  if (noise_variance < 0.0) throw std::invalid_argument("awgn: negative noise variance");
  if (noise_variance == 0.0) return values;
  const double std_per_part = std::sqrt(noise_variance / 2.0);
  CMatrix out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      out(r, c) = values(r, c) +
                  Complex{std_per_part * gaussian(rng), std_per_part * gaussian(rng)};
    }
  }
  return out;
}

double noise_variance_for_snr(double mean_entry_power, double snr_db) {
  if (mean_entry_power <= 0.0)
    throw std::invalid_argument("noise_variance_for_snr: reference power must be > 0");
  if (std::isinf(snr_db) && snr_db > 0.0) return 0.0;
  return mean_entry_power / std::pow(10.0, snr_db / 10.0);
}

double noise_variance_for_snr(const ChannelMatrix& channel, double snr_db) {
  if (channel.values.size() == 0)
    throw std::invalid_argument("noise_variance_for_snr: empty channel");
  const double power = channel.values.squaredNorm() / static_cast<double>(channel.values.size());
  if (power == 0.0) throw std::invalid_argument("noise_variance_for_snr: all-zero channel");
  return noise_variance_for_snr(power, snr_db);
}

double mean_entry_power(std::span<const ChannelMatrix> channels) {
  if (channels.empty()) throw std::invalid_argument("mean_entry_power: empty collection");
  double sum = 0.0;
  std::size_t count = 0;
  for (const ChannelMatrix& ch : channels) {
    sum += ch.values.squaredNorm();
    count += static_cast<std::size_t>(ch.values.size());
  }
  if (count == 0) throw std::invalid_argument("mean_entry_power: no entries");
  return sum / static_cast<double>(count);
}

std::vector<int> pilot_subcarriers(int k_total, double fraction) {
  if (k_total < 1) throw std::invalid_argument("pilot_subcarriers: k_total must be >= 1");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("pilot_subcarriers: fraction must be in (0, 1]");
  const int stride = std::max(1, static_cast<int>(std::llround(1.0 / fraction)));
  std::vector<int> pilots;
  for (int k = 0; k < k_total; k += stride) pilots.push_back(k);
  if (pilots.empty()) throw std::invalid_argument("pilot_subcarriers: no pilot subcarriers");
  return pilots;
}

std::vector<int> select_active_antennas(int n_total, int n_active) {
  if (n_active < 1 || n_active > n_total)
    throw std::invalid_argument("select_active_antennas: need 1 <= n_active <= n_total");
  std::vector<int> indices(n_active);
  for (int i = 0; i < n_active; ++i)
    indices[i] = static_cast<int>((static_cast<long long>(i) * n_total) / n_active);
  return indices;
}

TrainingMatrix dft_training_matrix(int n_active) {
  return {dft_matrix(n_active)};
}

namespace {

/// Copies each non-pilot column from its nearest pilot column (ties toward
/// the lower pilot index).
void fill_from_nearest_pilot(CMatrix& est, const std::vector<int>& pilots) {
  for (Eigen::Index k = 0; k < est.cols(); ++k) {
    int best = pilots.front();
    long long best_dist = std::llabs(k - best);
    for (int p : pilots) {
      const long long dist = std::llabs(k - p);
      if (dist < best_dist) {
        best = p;
        best_dist = dist;
      }
    }
    if (best != k) est.col(k) = est.col(best);
  }
}

}  // namespace

ChannelMatrix estimate_sub6(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                            double noise_variance, std::mt19937_64& rng) {
  const CMatrix& h = true_channel.values;
  const auto pilots = pilot_subcarriers(static_cast<int>(h.cols()), cfg.pilot_subcarrier_fraction);
  CMatrix est(h.rows(), h.cols());
  for (int k : pilots) est.col(k) = awgn(h.col(k), noise_variance, rng);
  fill_from_nearest_pilot(est, pilots);
  return {std::move(est), true_channel.domain};
}

ChannelMatrix estimate_sub6(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                            std::mt19937_64& rng) {
  return estimate_sub6(true_channel, cfg, noise_variance_for_snr(true_channel, cfg.snr_db), rng);
}

ChannelMatrix estimate_mmwave_partial(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                                      double noise_variance, std::mt19937_64& rng) {
  const CMatrix& h = true_channel.values;
  const auto active =
      select_active_antennas(static_cast<int>(h.rows()), cfg.active_antenna_count);
  const auto pilots = pilot_subcarriers(static_cast<int>(h.cols()), cfg.pilot_subcarrier_fraction);
  const CMatrix f = dft_training_matrix(cfg.active_antenna_count).values;

  CMatrix h_active(active.size(), h.cols());
  for (std::size_t i = 0; i < active.size(); ++i) h_active.row(i) = h.row(active[i]);

  CMatrix est(h_active.rows(), h_active.cols());
  for (int k : pilots) {
    const CVector y = awgn(f * h_active.col(k), noise_variance, rng);
    est.col(k) = f.adjoint() * y;
  }
  fill_from_nearest_pilot(est, pilots);
  return {std::move(est), true_channel.domain};
}

ChannelMatrix estimate_mmwave_partial(const ChannelMatrix& true_channel, const PilotConfig& cfg,
                                      std::mt19937_64& rng) {
  return estimate_mmwave_partial(true_channel, cfg,
                                 noise_variance_for_snr(true_channel, cfg.snr_db), rng);
}

}  // namespace beamfuse
