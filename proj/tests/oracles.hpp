#pragma once

#include <Eigen/Core>

#include <cmath>

namespace oracle {

/// Textbook SSIM: for every valid 11x11 window position, weighted means,
/// variances and covariance from the full 2-D Gaussian window (normalised to
/// unit sum), then the mean of the local SSIM values.
inline double ssim_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double L, int win = 11,
                         double sigma = 1.5, double k1 = 0.01, double k2 = 0.03) {
  Eigen::MatrixXd w(win, win);
  const double c = (win - 1) / 2.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) w(i, j) = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
  w /= w.sum();
  const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
  double total = 0.0;
  long count = 0;
  for (Eigen::Index r = 0; r + win <= x.rows(); ++r)
    for (Eigen::Index s = 0; s + win <= x.cols(); ++s) {
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          mx += w(i, j) * x(r + i, s + j);
          my += w(i, j) * y(r + i, s + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double dx = x(r + i, s + j) - mx, dy = y(r + i, s + j) - my;
          vx += w(i, j) * dx * dx;
          vy += w(i, j) * dy * dy;
          cxy += w(i, j) * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

} // namespace oracle

#include <functional>
#include <vector>

namespace oracle {

/// Central-difference gradient of f at x with step h.
inline std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||b||, tiny).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

} // namespace oracle
