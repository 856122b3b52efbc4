#include "beamfuse/beams.hpp"

#include <cmath>
#include <stdexcept>

namespace beamfuse {

Codebook dft_codebook(int n_antennas) {
  if (n_antennas < 1) throw std::invalid_argument("dft_codebook: n_antennas must be >= 1");
  CMatrix beams(n_antennas, n_antennas);
  for (int c = 0; c < n_antennas; ++c) {
    for (int n = 0; n < n_antennas; ++n) {
      beams(n, c) = std::polar(1.0, -2.0 * M_PI * static_cast<double>(n) * c / n_antennas);
    }
  }
  return {std::move(beams)};
}

double achievable_rate(const ChannelMatrix& channel, const CVector& beam, double snr_linear) {
  if (channel.values.rows() != beam.size())
    throw std::invalid_argument("achievable_rate: beam length does not match antenna count");
  if (!(snr_linear > 0.0)) throw std::invalid_argument("achievable_rate: snr must be > 0");
  double rate = 0.0;
  for (Eigen::Index k = 0; k < channel.values.cols(); ++k) {
    const Complex gain = channel.values.col(k).cwiseProduct(beam).sum();  // h^T f, no conjugation
    rate += std::log2(1.0 + snr_linear * std::norm(gain));
  }
  return rate;
}

Eigen::VectorXd beam_rates(const ChannelMatrix& channel, const Codebook& codebook,
                           double snr_linear) {
  Eigen::VectorXd rates(codebook.size());
  for (int c = 0; c < codebook.size(); ++c)
    rates(c) = achievable_rate(channel, codebook.beams.col(c), snr_linear);
  return rates;
}

BeamLabel best_beam(const ChannelMatrix& channel, const Codebook& codebook, double snr_linear) {
  const Eigen::VectorXd rates = beam_rates(channel, codebook, snr_linear);
  int best = 0;
  for (int c = 1; c < codebook.size(); ++c) {
    if (rates(c) > rates(best)) best = c;  // strict, so ties keep the lowest index
  }
  return {best, codebook.size()};
}

double rate_ratio(const ChannelMatrix& channel, const BeamLabel& predicted,
                  const Codebook& codebook, double snr_linear) {
  if (predicted.index < 0 || predicted.index >= codebook.size())
    throw std::invalid_argument("rate_ratio: predicted index out of range");
  const Eigen::VectorXd rates = beam_rates(channel, codebook, snr_linear);
  const double optimal = rates.maxCoeff();
  if (optimal == 0.0) return 1.0;
  return rates(predicted.index) / optimal;
}

}  // namespace beamfuse
