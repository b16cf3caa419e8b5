#include "aid_dti/noise.hpp"

#include "aid_dti/error.hpp"
#include "aid_dti/rng.hpp"

#include <cmath>
#include <random>

namespace aid_dti {

double rician_sample(double signal, double sigma, std::uint64_t seed, std::uint64_t index) {
  if (sigma == 0.0) return std::abs(signal);
  CounterRng rng(seed, index);
  std::normal_distribution<double> gauss(0.0, sigma);
  const double n1 = gauss(rng);
  const double n2 = gauss(rng);
  return std::hypot(signal + n1, n2);
}

Volume3D add_rician(const Volume3D& v, const NoiseConfig& cfg, Exec exec) {
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma))
    throw ValidationError("noise sigma must be finite and >= 0");
  v.check_finite();
  Volume3D out = v;
  auto src = v.data();
  auto dst = out.data();
  const auto n = static_cast<std::int64_t>(src.size());

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i)
    dst[i] = static_cast<float>(rician_sample(src[i], cfg.sigma, cfg.seed, static_cast<std::uint64_t>(i)));
  return out;
}

} // namespace aid_dti
