#include "aid_dti/loss.hpp"

#include "aid_dti/error.hpp"
#include "aid_dti/svd.hpp"

#include <algorithm>
#include <cmath>

namespace aid_dti {

Eigen::MatrixXd PatchView::channel(std::size_t c) const {
  const auto p = static_cast<Eigen::Index>(patch);
  Eigen::MatrixXd m(p, p);
  for (std::size_t y = 0; y < patch; ++y)
    for (std::size_t x = 0; x < patch; ++x)
      m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = values[(y * patch + x) * channels + c];
  return m;
}

namespace {

void check_pair(const PatchView& pred, const PatchView& gt) {
  if (pred.patch != gt.patch || pred.channels != gt.channels || pred.values.size() != gt.values.size() ||
      gt.values.size() != gt.patch * gt.patch * gt.channels || gt.patch == 0 || gt.channels == 0)
    throw ValidationError("loss: prediction and ground truth patches differ in shape");
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

} // namespace

std::vector<Eigen::VectorXd> channel_singular_values(const PatchView& p) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(p.channels);
  for (std::size_t c = 0; c < p.channels; ++c) out.push_back(singular_values(p.channel(c)));
  return out;
}

bool loss_defined_for(const PatchView& gt, bool with_reg, double min_channel_rms) {
  if (squared_norm(gt.values) == 0.0) return false;
  if (!with_reg) return true;
  std::vector<double> norms(gt.channels, 0.0);
  for (std::size_t i = 0; i < gt.values.size(); ++i) norms[i % gt.channels] += gt.values[i] * gt.values[i];
  const double floor = min_channel_rms * min_channel_rms * static_cast<double>(gt.patch * gt.patch);
  return std::all_of(norms.begin(), norms.end(), [&](double n) { return n > 0.0 && n >= floor; });
}

LossAndGrad svd_reg_loss_and_grad(const PatchView& pred, const PatchView& gt, double lambda,
                                  const std::vector<Eigen::VectorXd>* gt_sigma, bool with_reg) {
  check_pair(pred, gt);
  const double gt_norm2 = squared_norm(gt.values);
  if (gt_norm2 == 0.0) throw ValidationError("loss: ground-truth patch has zero norm");

  LossAndGrad out;
  out.loss.lambda = lambda;
  const std::size_t n = gt.values.size();
  out.grad_data.resize(n);
  out.grad_reg.assign(n, 0.0);

  double misfit = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.values[i] - gt.values[i];
    misfit += d * d;
    out.grad_data[i] = 2.0 * d / gt_norm2;
  }
  out.loss.data_term = misfit / gt_norm2;

  if (with_reg) {
    std::vector<Eigen::VectorXd> own;
    if (!gt_sigma) {
      own = channel_singular_values(gt);
      gt_sigma = &own;
    }
    if (gt_sigma->size() != gt.channels) throw ValidationError("loss: wrong number of ground-truth spectra");
    const double inv_c = 1.0 / static_cast<double>(gt.channels);
    double reg = 0.0;
    for (std::size_t c = 0; c < gt.channels; ++c) {
      const Eigen::VectorXd& sg = (*gt_sigma)[c];
      const double sg_norm2 = sg.squaredNorm();
      if (sg_norm2 == 0.0)
        throw ValidationError("loss: ground-truth channel " + std::to_string(c) + " has zero norm");
      const SvdFactors f = svd(pred.channel(c));
      const Eigen::VectorXd diff = f.sigma - sg;
      reg += diff.squaredNorm() / sg_norm2;
      const Eigen::MatrixXd g = sv_sensitivity(f, diff) * (2.0 * inv_c / sg_norm2);
      for (std::size_t y = 0; y < gt.patch; ++y)
        for (std::size_t x = 0; x < gt.patch; ++x)
          out.grad_reg[(y * gt.patch + x) * gt.channels + c] =
              g(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x));
    }
    out.loss.reg_term = reg * inv_c;
  }
  out.loss.total = out.loss.data_term + lambda * out.loss.reg_term;
  return out;
}

LossBreakdown svd_reg_loss(const PatchView& pred, const PatchView& gt, double lambda) {
  return svd_reg_loss_and_grad(pred, gt, lambda).loss;
}

std::vector<double> svd_reg_loss_grad(const PatchView& pred, const PatchView& gt, double lambda) {
  LossAndGrad r = svd_reg_loss_and_grad(pred, gt, lambda);
  for (std::size_t i = 0; i < r.grad_data.size(); ++i) r.grad_data[i] += lambda * r.grad_reg[i];
  return std::move(r.grad_data);
}

AdaptiveLambda::AdaptiveLambda(AdaptiveLambdaConfig cfg) : cfg_(cfg), lambda_(cfg.lambda0) {
  if (!(cfg_.rho > 0.0 && cfg_.rho < 1.0)) throw ValidationError("adaptive lambda: rho must lie in (0, 1)");
  if (!(cfg_.beta >= 0.0 && cfg_.beta < 1.0)) throw ValidationError("adaptive lambda: beta must lie in [0, 1)");
  if (!(cfg_.lambda_min >= 0.0 && cfg_.lambda_min <= cfg_.lambda_max))
    throw ValidationError("adaptive lambda: need 0 <= lambda_min <= lambda_max");
  lambda_ = std::clamp(cfg_.lambda0, cfg_.lambda_min, cfg_.lambda_max);
}

double AdaptiveLambda::rule(double ema_data, double ema_reg, double previous, const AdaptiveLambdaConfig& cfg) {
  if (ema_reg < 1e-12) return previous;
  return std::clamp(cfg.rho * ema_data / (ema_reg + 1e-12), cfg.lambda_min, cfg.lambda_max);
}

double AdaptiveLambda::update(double grad_data_norm, double grad_reg_norm) {
  if (!seeded_) {
    ema_data_ = grad_data_norm;
    ema_reg_ = grad_reg_norm;
    seeded_ = true;
  } else {
    ema_data_ = cfg_.beta * ema_data_ + (1.0 - cfg_.beta) * grad_data_norm;
    ema_reg_ = cfg_.beta * ema_reg_ + (1.0 - cfg_.beta) * grad_reg_norm;
  }
  lambda_ = rule(ema_data_, ema_reg_, lambda_, cfg_);
  return lambda_;
}

} // namespace aid_dti
