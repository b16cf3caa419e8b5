#pragma once

#include "aid_dti/dataset.hpp"
#include "aid_dti/error.hpp"
#include "aid_dti/exec.hpp"
#include "aid_dti/loss.hpp"
#include "aid_dti/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace aid_dti {

enum class LambdaMode { fixed, adaptive };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  std::size_t patch = 32;
  /// Spacing of training patch origins within each training slice.
  std::size_t train_stride = 16;
  /// Patches with a target channel whose RMS is below this are not used for
  /// training or validation loss (background FA is roundoff, not signal).
  double min_channel_rms = 1e-6;
  std::vector<std::size_t> hidden{256, 256};
  Activation activation = Activation::tanh;
  LambdaMode lambda_mode = LambdaMode::adaptive;
  /// Constant lambda in fixed mode; ignored in adaptive mode (see adaptive.lambda0).
  double lambda = 0.0;
  AdaptiveLambdaConfig adaptive;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  /// Throws ValidationError; in particular P = 1 with a non-zero or
  /// adaptive lambda is rejected because a 1x1 spectrum carries no information.
  void validate() const;
  bool uses_regulariser() const { return patch > 1; }
};

struct HistoryRow {
  std::size_t epoch = 0;
  double train_total = 0.0;
  double val_data = 0.0;
  double val_reg = 0.0;
  double lambda = 0.0;
  double val_psnr = 0.0;
};

/// Header `epoch,train_total,val_data,val_reg,lambda,val_psnr`.
std::string history_csv(const std::vector<HistoryRow>& rows);

struct TrainResult {
  EstimatorModel model;
  std::vector<HistoryRow> history;
};

/// Raised when a loss becomes non-finite; the message carries a state dump.
class TrainingDiverged : public NumericError {
public:
  using NumericError::NumericError;
};

/// Progress callback, invoked after every epoch.
using EpochCallback = std::function<void(const HistoryRow&)>;

/// Mini-batch Adam on the regularised loss. Training patches come from the
/// train slab on a `train_stride` grid; patches whose ground truth violates
/// the loss preconditions (an all-zero channel) are skipped. Lambda is
/// updated once per epoch in adaptive mode. Bitwise reproducible for a
/// fixed configuration.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {},
                  Exec exec = Exec::parallel);

/// Voxel-wise three-layer MLP (P = 1, two hidden layers, lambda = 0).
/// Throws ValidationError if cfg asks for adaptive or non-zero lambda.
TrainResult baseline_qdl(const Dataset& ds, TrainConfig cfg, const EpochCallback& on_epoch = {},
                         Exec exec = Exec::parallel);

struct ChannelQuality {
  std::string name;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double peak = 0.0; // dynamic range of the reference used by PSNR and SSIM
};

/// Rows FA, MD, AD and `aggregate` (all three channels pooled for MSE and
/// PSNR; SSIM averaged over channels).
struct EvalReport {
  std::array<ChannelQuality, 4> rows;
  const ChannelQuality& aggregate() const { return rows[3]; }
};

/// Header `channel,mse,psnr,ssim,peak`; exactly four data rows.
std::string eval_csv(const EvalReport& r);

/// Model output over the non-overlapping patch tiling of the split, in a
/// volume shaped like ds.targets (zero where not covered).
Volume3D predict_split(const EstimatorModel& model, const Dataset& ds, Split split, Exec exec = Exec::parallel);

/// Compares `prediction` (scaled units) with ds.targets over the tiled
/// region of the split for a given patch size.
EvalReport evaluate_predictions(const Dataset& ds, Split split, const Volume3D& prediction, std::size_t patch);

EvalReport evaluate(const EstimatorModel& model, const Dataset& ds, Split split, Exec exec = Exec::parallel);

struct ComparisonRow {
  std::uint64_t seed = 0;
  double psnr_fixed = 0.0;    // lambda = 0
  double psnr_adaptive = 0.0; // adaptive lambda
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<std::vector<HistoryRow>> fixed_histories;
  std::vector<std::vector<HistoryRow>> adaptive_histories;
  double mean_fixed() const;
  double mean_adaptive() const;
  double mean_improvement() const { return mean_adaptive() - mean_fixed(); }
};

/// Trains lambda = 0 and adaptive-lambda runs of `base` for every seed and
/// records the final aggregate validation PSNR of each.
Comparison compare_regularizer(const Dataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                               Exec exec = Exec::parallel);

/// Header `seed,psnr_lambda0,psnr_adaptive,improvement` plus a final `mean` row.
std::string comparison_csv(const Comparison& c);

} // namespace aid_dti
