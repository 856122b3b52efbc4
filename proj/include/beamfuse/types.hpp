#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace beamfuse {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Representation a channel matrix is currently in. The DFT transforms in
/// datapipe.hpp move between them.
enum class ChannelDomain { SpatialFrequency, SpatialDelay, AngularDelay };

/// One propagation path between the BS array and the user antenna.
struct RayPath {
  double azimuth_rad = 0.0;    ///< azimuth at the BS, in (-pi, pi]
  double elevation_rad = 0.0;  ///< elevation at the BS, in (-pi, pi]
  Complex gain{1.0, 0.0};      ///< complex path amplitude, linear scale
  double delay_s = 0.0;        ///< propagation delay, >= 0
};

/// Array geometry and OFDM numerology of one frequency band.
struct BandConfig {
  double carrier_ghz = 28.0;
  int num_antennas = 64;
  double spacing_wavelengths = 0.5;
  int num_subcarriers = 512;
  double subcarrier_spacing_hz = 5.0e5;
  int num_paths = 5;
};

/// Reference mmWave band: 28 GHz, 64 antennas, 512 subcarriers, 5 paths.
inline BandConfig mmwave_band_default() { return {28.0, 64, 0.5, 512, 5.0e5, 5}; }
/// Reference sub-6GHz band: 3.5 GHz, 4 antennas, 32 subcarriers, 15 paths.
inline BandConfig sub6_band_default() { return {3.5, 4, 0.5, 32, 2.0e4, 15}; }

/// Rays seen by one user on both bands. Every mmWave (azimuth, delay) pair
/// duplicates one of the sub-6 pairs; gains are drawn independently per band.
struct UserScene {
  int user_id = 0;
  std::vector<RayPath> sub6_rays;
  std::vector<RayPath> mmwave_rays;
};

/// Per-antenna (rows) by per-subcarrier (cols) complex response.
struct ChannelMatrix {
  CMatrix values;
  ChannelDomain domain = ChannelDomain::SpatialFrequency;
};

}  // namespace beamfuse
