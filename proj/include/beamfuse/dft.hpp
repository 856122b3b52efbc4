#pragma once

#include "beamfuse/types.hpp"

#include <cmath>
#include <stdexcept>

namespace beamfuse {

/// n x n normalized DFT matrix, entry (i, j) = exp(-j*2*pi*i*j/n) / sqrt(n).
/// Unitary: F^H F = I.
inline CMatrix dft_matrix(int n) {
  if (n < 1) throw std::invalid_argument("dft_matrix: n must be >= 1");
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double phase = -2.0 * M_PI * static_cast<double>(i) * static_cast<double>(j) / n;
      f(i, j) = std::polar(scale, phase);
    }
  }
  return f;
}

}  // namespace beamfuse
