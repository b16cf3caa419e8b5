#pragma once

#include "aid_dti/exec.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>

namespace aid_dti {

/// Mean squared difference; when `mask` is non-empty only entries with a
/// non-zero mask value count.
double mse(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> mask = {});
double mse(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b);

/// max - min of the (masked) reference.
double dynamic_range(std::span<const double> reference, std::span<const std::uint8_t> mask = {});

/// 10 log10(peak^2 / mse); +infinity when mse == 0. Throws ValidationError for peak <= 0.
double psnr_from_mse(double mse_value, double peak);

/// PSNR with the peak taken from the reference's dynamic range.
double psnr(std::span<const double> reference, std::span<const double> test,
            std::span<const std::uint8_t> mask = {});
double psnr(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test);

struct SsimParams {
  int window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over the valid region of an 11x11 Gaussian window (no
/// padding). `dynamic_range` is the L of the stabilising constants.
double ssim(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test,
            double dynamic_range, const SsimParams& params = {}, Exec exec = Exec::parallel);

/// As above with L = max(reference) - min(reference).
double ssim(const Eigen::Ref<const Eigen::MatrixXd>& reference, const Eigen::Ref<const Eigen::MatrixXd>& test);

} // namespace aid_dti
