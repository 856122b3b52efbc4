#pragma once

#include "beamfuse/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace beamfuse {

/// Array response of a uniform linear array. Entry n (0-based) is
/// exp(j*2*pi*spacing*n*cos(elevation)*sin(azimuth)); all entries have unit
/// modulus.
CVector steering_vector(double azimuth_rad, double elevation_rad, int n_antennas,
                        double spacing_wavelengths);

/// Ground-truth spatial-frequency channel of one band. Column k (0-based) is
///   sum_r gain_r * exp(-j*2*pi*k*delay_r*f_sub) * a(azimuth_r, elevation_r)
/// with f_sub the subcarrier spacing in Hz. Shape num_antennas x
/// num_subcarriers.
ChannelMatrix synth_channel(const std::vector<RayPath>& rays, const BandConfig& band);

/// Statistics of the synthetic scene generator. Angles are uniform over the
/// azimuth range, delays uniform over [0, delay_spread_s], and path power
/// decays as exp(-delay / gain_decay_s) on top of a complex Gaussian draw.
struct SceneParams {
  int sub6_paths = 15;
  int mmwave_paths = 5;
  double azimuth_min_rad = -1.5707963267948966;
  double azimuth_max_rad = 1.5707963267948966;
  double elevation_spread_rad = 0.0;  ///< elevations uniform in +/- spread
  double delay_spread_s = 1.0e-6;
  double gain_decay_s = 0.4e-6;
  double sub6_gain_scale = 1.0;
  double mmwave_gain_scale = 1.0;
};

/// Draws the rays of one user. Pure function of (seed, user_id): repeated
/// calls return bitwise-identical scenes regardless of call order or thread
/// placement. The mmWave rays reuse the (azimuth, elevation, delay) triples of
/// the strongest sub-6 rays with freshly drawn gains; both ray lists come out
/// sorted by descending gain magnitude.
UserScene generate_scene(const SceneParams& geometry, std::uint64_t seed, int user_id);

/// Reads user scenes from a ray CSV file with header
///   user_id,band,azimuth_rad,elevation_rad,gain_re,gain_im,delay_s
/// where band is "sub6" or "mmwave" and rows are grouped by user_id.
/// Malformed rows raise errors naming the line; path counts must be identical
/// across users and the mmWave (azimuth, delay) pairs of each user must appear
/// among its sub-6 pairs.
std::vector<UserScene> load_ray_file(const std::filesystem::path& path);

/// Inverse of load_ray_file; values are printed with enough digits to round
/// trip exactly.
void write_ray_file(const std::filesystem::path& path, const std::vector<UserScene>& scenes);

}  // namespace beamfuse
