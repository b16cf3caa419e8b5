#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace aid_dti {

/// A P x P x C patch in the layout used by the datasets: index ((y*P + x)*C + c).
struct PatchView {
  std::span<const double> values;
  std::size_t patch = 0;
  std::size_t channels = 0;

  /// Channel c as a P x P matrix (row = y, col = x).
  Eigen::MatrixXd channel(std::size_t c) const;
};

struct LossBreakdown {
  double data_term = 0.0;
  double reg_term = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// Normalised data misfit plus lambda times the singular-value misfit:
///
///   data = ||gt - pred||^2 / ||gt||^2                       (whole patch)
///   reg  = mean_c ||s(gt_c) - s(pred_c)||^2 / ||s(gt_c)||^2  (per channel)
///
/// where s(.) is the descending singular-value vector of a P x P channel.
/// Throws ValidationError if gt (or any gt channel) has zero norm.
LossBreakdown svd_reg_loss(const PatchView& pred, const PatchView& gt, double lambda);

/// Gradient of svd_reg_loss(...).total with respect to pred, same layout.
std::vector<double> svd_reg_loss_grad(const PatchView& pred, const PatchView& gt, double lambda);

/// Loss and gradient in one pass, with the two gradient parts kept apart
/// (grad_reg is unweighted, i.e. the gradient of reg_term alone).
struct LossAndGrad {
  LossBreakdown loss;
  std::vector<double> grad_data;
  std::vector<double> grad_reg;
};

/// As above; `gt_sigma` optionally supplies precomputed per-channel
/// singular values of gt. With `with_reg` false only the data term is
/// evaluated and reg_term/grad_reg are zero.
LossAndGrad svd_reg_loss_and_grad(const PatchView& pred, const PatchView& gt, double lambda,
                                  const std::vector<Eigen::VectorXd>* gt_sigma = nullptr, bool with_reg = true);

/// Per-channel descending singular values of a patch.
std::vector<Eigen::VectorXd> channel_singular_values(const PatchView& p);

/// True when the loss preconditions hold for `gt` (non-zero patch and, if
/// the regulariser is used, every channel non-zero). A positive
/// `min_channel_rms` additionally rejects channels whose root-mean-square
/// value is below it, e.g. FA patches holding only roundoff.
bool loss_defined_for(const PatchView& gt, bool with_reg, double min_channel_rms = 0.0);

struct AdaptiveLambdaConfig {
  double rho = 0.1;  // target ratio of regulariser to data gradient norm
  double beta = 0.9; // EMA decay
  double lambda_min = 1e-4;
  double lambda_max = 10.0;
  double lambda0 = 0.1;
};

/// Gradient-norm balancing: lambda = clamp(rho * ema_data / ema_reg).
class AdaptiveLambda {
public:
  explicit AdaptiveLambda(AdaptiveLambdaConfig cfg = {});

  double lambda() const { return lambda_; }
  double ema_data() const { return ema_data_; }
  double ema_reg() const { return ema_reg_; }

  /// Folds one observation of both gradient norms into the EMAs and returns
  /// the new lambda. The first observation seeds the EMAs directly. Lambda
  /// is left unchanged while ema_reg < 1e-12.
  double update(double grad_data_norm, double grad_reg_norm);

  /// The rule applied to already-smoothed norms, without state.
  static double rule(double ema_data, double ema_reg, double previous, const AdaptiveLambdaConfig& cfg);

private:
  AdaptiveLambdaConfig cfg_;
  double lambda_;
  double ema_data_ = 0.0;
  double ema_reg_ = 0.0;
  bool seeded_ = false;
};

} // namespace aid_dti
