#pragma once

#include "aid_dti/exec.hpp"
#include "aid_dti/volume.hpp"

#include <cstdint>

namespace aid_dti {

struct NoiseConfig {
  double sigma = 0.0; // standard deviation of each quadrature channel
  std::uint64_t seed = 0;
};

/// Magnitude of a complex Gaussian-corrupted signal, sqrt((S+n1)^2 + n2^2).
///
/// The draws for sample i depend only on (seed, i), so the result is the
/// same for any evaluation order or thread count.
Volume3D add_rician(const Volume3D& v, const NoiseConfig& cfg, Exec exec = Exec::parallel);

/// Scalar form used by add_rician; `index` is the flat sample index.
double rician_sample(double signal, double sigma, std::uint64_t seed, std::uint64_t index);

} // namespace aid_dti
