#include "aid_dti/quality.hpp"

#include "aid_dti/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace aid_dti {

namespace {

void check_same(std::size_t a, std::size_t b, std::size_t mask) {
  if (a != b) throw ValidationError("quality metric: inputs differ in size");
  if (mask != 0 && mask != a) throw ValidationError("quality metric: mask size mismatch");
}

std::span<const double> as_span(const Eigen::Ref<const Eigen::MatrixXd>& m, Eigen::MatrixXd& storage) {
  if (m.innerStride() == 1 && m.outerStride() == m.rows()) return {m.data(), static_cast<std::size_t>(m.size())};
  storage = m;
  return {storage.data(), static_cast<std::size_t>(storage.size())};
}

std::vector<double> gaussian_window(const SsimParams& p) {
  std::vector<double> g(static_cast<std::size_t>(p.window));
  const double mid = (p.window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < p.window; ++i) {
    const double d = i - mid;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

} // namespace

double mse(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> mask) {
  check_same(a.size(), b.size(), mask.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = a[i] - b[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw ValidationError("mse: empty input or mask");
  return sum / static_cast<double>(n);
}

double mse(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("mse: shape mismatch");
  Eigen::MatrixXd sa, sb;
  return mse(as_span(a, sa), as_span(b, sb));
}

double dynamic_range(std::span<const double> reference, std::span<const std::uint8_t> mask) {
  check_same(reference.size(), reference.size(), mask.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    lo = std::min(lo, reference[i]);
    hi = std::max(hi, reference[i]);
  }
  if (!(hi >= lo)) throw ValidationError("dynamic_range: empty input or mask");
  return hi - lo;
}

double psnr_from_mse(double mse_value, double peak) {
  if (!(peak > 0.0)) throw ValidationError("psnr: reference is constant (peak = 0)");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

double psnr(std::span<const double> reference, std::span<const double> test, std::span<const std::uint8_t> mask) {
  const double m = mse(reference, test, mask);
  return psnr_from_mse(m, dynamic_range(reference, mask));
}

double psnr(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols())
    throw ValidationError("psnr: shape mismatch");
  Eigen::MatrixXd sa, sb;
  return psnr(as_span(reference, sa), as_span(test, sb));
}

double ssim(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test,
            double dynamic_range, const SsimParams& params, Exec exec) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols())
    throw ValidationError("ssim: shape mismatch");
  const Eigen::Index w = params.window;
  if (reference.rows() < w || reference.cols() < w)
    throw ValidationError("ssim: image smaller than the " + std::to_string(w) + "x" + std::to_string(w) + " window");
  if (!(dynamic_range > 0.0)) throw ValidationError("ssim: dynamic range must be positive");

  const auto g = gaussian_window(params);
  const Eigen::Index rows = reference.rows(), cols = reference.cols();
  const Eigen::Index orow = rows - w + 1, ocol = cols - w + 1;
  const double c1 = (params.k1 * dynamic_range) * (params.k1 * dynamic_range);
  const double c2 = (params.k2 * dynamic_range) * (params.k2 * dynamic_range);

  // Horizontal pass over x, y, x^2, y^2, xy; then vertical pass and the
  // SSIM map, one output row per iteration.
  std::vector<Eigen::MatrixXd> h(5, Eigen::MatrixXd(rows, ocol));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < ocol; ++c) {
      double s[5] = {0, 0, 0, 0, 0};
      for (Eigen::Index k = 0; k < w; ++k) {
        const double gk = g[static_cast<std::size_t>(k)];
        const double x = reference(r, c + k), y = test(r, c + k);
        s[0] += gk * x;
        s[1] += gk * y;
        s[2] += gk * x * x;
        s[3] += gk * y * y;
        s[4] += gk * x * y;
      }
      for (int m = 0; m < 5; ++m) h[static_cast<std::size_t>(m)](r, c) = s[m];
    }
  }

  std::vector<double> row_mean(static_cast<std::size_t>(orow));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (Eigen::Index r = 0; r < orow; ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < ocol; ++c) {
      double s[5] = {0, 0, 0, 0, 0};
      for (Eigen::Index k = 0; k < w; ++k) {
        const double gk = g[static_cast<std::size_t>(k)];
        for (int m = 0; m < 5; ++m) s[m] += gk * h[static_cast<std::size_t>(m)](r + k, c);
      }
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    row_mean[static_cast<std::size_t>(r)] = acc;
  }
  double total = 0.0;
  for (double v : row_mean) total += v;
  return total / static_cast<double>(orow * ocol);
}

double ssim(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test) {
  return ssim(reference, test, reference.maxCoeff() - reference.minCoeff());
}

} // namespace aid_dti
