#pragma once

#include "beamfuse/types.hpp"

namespace beamfuse {

/// Downlink beamforming codebook; one unit-modulus beam per column.
struct Codebook {
  CMatrix beams;  ///< n_antennas x size
  int size() const { return static_cast<int>(beams.cols()); }
};

/// Index of a codebook beam plus its one-hot encoding.
struct BeamLabel {
  int index = 0;
  int codebook_size = 0;
  Eigen::VectorXd one_hot() const {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(codebook_size);
    t(index) = 1.0;
    return t;
  }
};

/// DFT codebook over the full array: column c entry n is
/// exp(-j*2*pi*n*c/n_antennas), so the size equals n_antennas.
Codebook dft_codebook(int n_antennas);

/// Per-beam achievable rates sum_k log2(1 + snr * |h[k]^T f|^2) for every
/// codebook column, in bits. The inner product is non-conjugated.
Eigen::VectorXd beam_rates(const ChannelMatrix& channel, const Codebook& codebook,
                           double snr_linear);

/// Achievable rate of a single beam, in bits.
double achievable_rate(const ChannelMatrix& channel, const CVector& beam, double snr_linear);

/// Exhaustive search for the rate-optimal beam; ties break toward the lowest
/// index. Expects the physical spatial-frequency channel.
BeamLabel best_beam(const ChannelMatrix& channel, const Codebook& codebook, double snr_linear);

/// Rate of the predicted beam over the rate of the optimal beam, in [0, 1].
/// A zero optimal rate (all-zero channel) counts as 1.
double rate_ratio(const ChannelMatrix& channel, const BeamLabel& predicted,
                  const Codebook& codebook, double snr_linear);

}  // namespace beamfuse
