#include "beamfuse/channel.hpp"

#include "beamfuse/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace beamfuse {

CVector steering_vector(double azimuth_rad, double elevation_rad, int n_antennas,
                        double spacing_wavelengths) {
  if (n_antennas < 1) throw std::invalid_argument("steering_vector: n_antennas must be >= 1");
  const double spatial_freq =
      2.0 * M_PI * spacing_wavelengths * std::cos(elevation_rad) * std::sin(azimuth_rad);
  CVector a(n_antennas);
  for (int n = 0; n < n_antennas; ++n) a(n) = std::polar(1.0, spatial_freq * n);
  return a;
}

ChannelMatrix synth_channel(const std::vector<RayPath>& rays, const BandConfig& band) {
  if (rays.empty()) throw std::invalid_argument("synth_channel: ray list is empty");
  if (band.num_antennas < 1 || band.num_subcarriers < 1)
    throw std::invalid_argument("synth_channel: invalid band dimensions");

  CMatrix h = CMatrix::Zero(band.num_antennas, band.num_subcarriers);
  for (const RayPath& ray : rays) {
    const CVector a = steering_vector(ray.azimuth_rad, ray.elevation_rad, band.num_antennas,
                                      band.spacing_wavelengths);
    // Per-subcarrier delay phase, k * f_sub in place of k / T_s.
    const double phase_step = -2.0 * M_PI * ray.delay_s * band.subcarrier_spacing_hz;
    if (!std::isfinite(phase_step))
      throw std::invalid_argument("synth_channel: ray delay produces non-finite phase");
    for (int k = 0; k < band.num_subcarriers; ++k) {
      const Complex coeff = ray.gain * std::polar(1.0, phase_step * k);
      h.col(k) += coeff * a;
    }
  }
  return {std::move(h), ChannelDomain::SpatialFrequency};
}

namespace {

void sort_by_gain_desc(std::vector<RayPath>& rays) {
  std::stable_sort(rays.begin(), rays.end(), [](const RayPath& a, const RayPath& b) {
    return std::abs(a.gain) > std::abs(b.gain);
  });
}

}  // namespace

UserScene generate_scene(const SceneParams& geometry, std::uint64_t seed, int user_id) {
  if (geometry.mmwave_paths > geometry.sub6_paths)
    throw std::invalid_argument("generate_scene: mmwave_paths exceeds sub6_paths");
  if (geometry.sub6_paths < 1) throw std::invalid_argument("generate_scene: sub6_paths must be >= 1");
  if (geometry.gain_decay_s <= 0.0)
    throw std::invalid_argument("generate_scene: gain_decay_s must be > 0");

  std::mt19937_64 eng(derive_seed(seed, static_cast<std::uint64_t>(user_id)));

  UserScene scene;
  scene.user_id = user_id;
  scene.sub6_rays.reserve(geometry.sub6_paths);
  for (int r = 0; r < geometry.sub6_paths; ++r) {
    RayPath ray;
    ray.azimuth_rad = uniform_range(eng, geometry.azimuth_min_rad, geometry.azimuth_max_rad);
    ray.elevation_rad =
        uniform_range(eng, -geometry.elevation_spread_rad, geometry.elevation_spread_rad);
    ray.delay_s = uniform01(eng) * geometry.delay_spread_s;
    const double amp = std::exp(-ray.delay_s / (2.0 * geometry.gain_decay_s));
    ray.gain = geometry.sub6_gain_scale * amp * complex_gaussian(eng);
    scene.sub6_rays.push_back(ray);
  }
  sort_by_gain_desc(scene.sub6_rays);

  // The mmWave support reuses the geometry of the strongest sub-6 paths.
  scene.mmwave_rays.reserve(geometry.mmwave_paths);
  for (int r = 0; r < geometry.mmwave_paths; ++r) {
    RayPath ray = scene.sub6_rays[r];
    const double amp = std::exp(-ray.delay_s / (2.0 * geometry.gain_decay_s));
    ray.gain = geometry.mmwave_gain_scale * amp * complex_gaussian(eng);
    scene.mmwave_rays.push_back(ray);
  }
  sort_by_gain_desc(scene.mmwave_rays);
  return scene;
}

namespace {

constexpr const char* kRayHeader = "user_id,band,azimuth_rad,elevation_rad,gain_re,gain_im,delay_s";

double parse_double_field(const std::string& text, int line_no, const char* field) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("ray file parse error at line " + std::to_string(line_no) +
                             ": bad value for " + field + ": '" + text + "'");
  }
  return value;
}

void validate_scene(const UserScene& scene) {
  if (scene.mmwave_rays.size() > scene.sub6_rays.size()) {
    throw std::runtime_error("ray file schema error: user " + std::to_string(scene.user_id) +
                             " has more mmwave rays than sub6 rays");
  }
  for (const RayPath& m : scene.mmwave_rays) {
    const bool found = std::any_of(scene.sub6_rays.begin(), scene.sub6_rays.end(),
                                   [&](const RayPath& s) {
                                     return s.azimuth_rad == m.azimuth_rad && s.delay_s == m.delay_s;
                                   });
    if (!found) {
      throw std::runtime_error("ray file schema error: user " + std::to_string(scene.user_id) +
                               " has a mmwave (azimuth, delay) pair not present among its sub6 rays");
    }
  }
}

}  // namespace

std::vector<UserScene> load_ray_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ray file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) return {};  // empty file
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRayHeader) {
    throw std::runtime_error("ray file parse error at line 1: expected header '" +
                             std::string(kRayHeader) + "'");
  }

  std::vector<UserScene> scenes;
  std::vector<int> seen_ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) {
      throw std::runtime_error("ray file parse error at line " + std::to_string(line_no) +
                               ": expected 7 fields, found " + std::to_string(fields.size()));
    }

    const int user_id = static_cast<int>(parse_double_field(fields[0], line_no, "user_id"));
    RayPath ray;
    ray.azimuth_rad = parse_double_field(fields[2], line_no, "azimuth_rad");
    ray.elevation_rad = parse_double_field(fields[3], line_no, "elevation_rad");
    ray.gain = {parse_double_field(fields[4], line_no, "gain_re"),
                parse_double_field(fields[5], line_no, "gain_im")};
    ray.delay_s = parse_double_field(fields[6], line_no, "delay_s");
    if (ray.delay_s < 0.0) {
      throw std::runtime_error("ray file parse error at line " + std::to_string(line_no) +
                               ": negative delay");
    }

    if (scenes.empty() || scenes.back().user_id != user_id) {
      if (std::find(seen_ids.begin(), seen_ids.end(), user_id) != seen_ids.end()) {
        throw std::runtime_error("ray file schema error at line " + std::to_string(line_no) +
                                 ": rows of user " + std::to_string(user_id) + " are not contiguous");
      }
      seen_ids.push_back(user_id);
      scenes.push_back(UserScene{user_id, {}, {}});
    }

    if (fields[1] == "sub6") {
      scenes.back().sub6_rays.push_back(ray);
    } else if (fields[1] == "mmwave") {
      scenes.back().mmwave_rays.push_back(ray);
    } else {
      throw std::runtime_error("ray file parse error at line " + std::to_string(line_no) +
                               ": band must be 'sub6' or 'mmwave', found '" + fields[1] + "'");
    }
  }

  for (const UserScene& scene : scenes) validate_scene(scene);
  for (std::size_t i = 1; i < scenes.size(); ++i) {
    if (scenes[i].sub6_rays.size() != scenes[0].sub6_rays.size() ||
        scenes[i].mmwave_rays.size() != scenes[0].mmwave_rays.size()) {
      throw std::runtime_error("ray file schema error: user " + std::to_string(scenes[i].user_id) +
                               " has inconsistent path counts");
    }
  }
  return scenes;
}

void write_ray_file(const std::filesystem::path& path, const std::vector<UserScene>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << kRayHeader << '\n';
  out.precision(17);
  auto write_rays = [&](int user_id, const char* band, const std::vector<RayPath>& rays) {
    for (const RayPath& r : rays) {
      out << user_id << ',' << band << ',' << r.azimuth_rad << ',' << r.elevation_rad << ','
          << r.gain.real() << ',' << r.gain.imag() << ',' << r.delay_s << '\n';
    }
  };
  for (const UserScene& scene : scenes) {
    write_rays(scene.user_id, "sub6", scene.sub6_rays);
    write_rays(scene.user_id, "mmwave", scene.mmwave_rays);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace beamfuse
