#include "aid_dti/train.hpp"

#include "aid_dti/dense.hpp"
#include "aid_dti/quality.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace aid_dti {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be > 0");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (patch == 0) throw ValidationError("patch size must be positive");
  if (train_stride == 0) throw ValidationError("train stride must be positive");
  for (auto h : hidden)
    if (h == 0) throw ValidationError("hidden layer widths must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  if (!(adaptive.rho > 0.0 && adaptive.rho < 1.0)) throw ValidationError("rho must lie in (0, 1)");
  if (!(adaptive.lambda_min <= adaptive.lambda_max)) throw ValidationError("lambda_min must not exceed lambda_max");
  if (patch == 1 && (lambda_mode == LambdaMode::adaptive || lambda > 0.0))
    throw ValidationError("the singular-value regulariser is undefined for 1x1 patches; use lambda = 0 with P = 1");
}

namespace {

struct Sample {
  std::vector<double> input;
  std::vector<double> target;
  std::vector<Eigen::VectorXd> gt_sigma;
};

std::vector<Sample> collect_samples(const Dataset& ds, const std::vector<PatchOrigin>& origins, std::size_t patch,
                                    bool with_reg, double min_channel_rms) {
  std::vector<Sample> out;
  for (const auto& o : origins) {
    Sample s{extract_patch(ds.inputs, o, patch), extract_patch(ds.targets, o, patch), {}};
    const PatchView gt{s.target, patch, 3};
    if (!loss_defined_for(gt, with_reg, min_channel_rms)) continue;
    if (with_reg) s.gt_sigma = channel_singular_values(gt);
    out.push_back(std::move(s));
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct LossTotals {
  double data = 0.0, reg = 0.0;
};

LossTotals mean_loss_terms(const EstimatorModel& model, const std::vector<Sample>& samples, bool with_reg,
                           Exec exec) {
  LossTotals t;
  if (samples.empty()) return t;
  const std::size_t chunk = 64, n_in = model.input_width(), n_out = model.output_width();
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t bs = std::min(chunk, samples.size() - start);
    std::vector<double> in(bs * n_in);
    for (std::size_t s = 0; s < bs; ++s)
      std::copy(samples[start + s].input.begin(), samples[start + s].input.end(), in.begin() + s * n_in);
    const auto out = forward_batch(model, in, bs, nullptr, exec);
    for (std::size_t s = 0; s < bs; ++s) {
      const auto& smp = samples[start + s];
      const PatchView pred{std::span<const double>(out).subspan(s * n_out, n_out), model.patch, 3};
      const auto lg = svd_reg_loss_and_grad(pred, {smp.target, model.patch, 3}, 0.0, &smp.gt_sigma, with_reg);
      t.data += lg.loss.data_term;
      t.reg += lg.loss.reg_term;
    }
  }
  t.data /= static_cast<double>(samples.size());
  t.reg /= static_cast<double>(samples.size());
  return t;
}

std::string state_dump(const EstimatorModel& model, std::size_t epoch, std::size_t step, double lambda,
                       const LossBreakdown& loss) {
  std::ostringstream out;
  out << "training diverged: epoch " << epoch << ", step " << step << ", lambda " << lambda << ", data_term "
      << loss.data_term << ", reg_term " << loss.reg_term << ", total " << loss.total << "; max |w| per layer:";
  for (const auto& w : model.weights) {
    double m = 0.0;
    for (double x : w) m = std::max(m, std::abs(x));
    out << ' ' << m;
  }
  return out.str();
}

} // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch, Exec exec) {
  cfg.validate();
  const Dims& d = ds.inputs.dims();
  if (d.c != 7 || ds.targets.dims().c != 3) throw ValidationError("train: dataset must have 7 inputs and 3 targets");
  if (cfg.patch > d.x || cfg.patch > d.y) throw ValidationError("train: patch larger than the slices");
  if (ds.train.size() == 0 || ds.val.size() == 0) throw ValidationError("train: empty train or val split");

  const bool with_reg = cfg.uses_regulariser();
  const std::size_t P = cfg.patch;
  const auto train_set = collect_samples(ds, strided_origins(d, ds.train, P, cfg.train_stride), P, with_reg,
                                         cfg.min_channel_rms);
  const auto val_set = collect_samples(ds, tile_origins(d, ds.val, P), P, with_reg, cfg.min_channel_rms);
  if (train_set.empty()) throw ValidationError("train: no patch in the train split satisfies the loss preconditions");

  TrainResult result;
  EstimatorModel& model = result.model;
  model = make_model(P, cfg.hidden, cfg.activation, cfg.seed);
  const std::size_t nl = model.weights.size();
  const std::size_t n_in = model.input_width(), n_out = model.output_width();

  AdaptiveLambda adapt(cfg.adaptive);
  double lambda = cfg.lambda_mode == LambdaMode::fixed ? cfg.lambda : adapt.lambda();

  std::vector<std::vector<double>> mw(nl), vw(nl), mb(nl), vb(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    mw[l].assign(model.weights[l].size(), 0.0);
    vw[l].assign(model.weights[l].size(), 0.0);
    mb[l].assign(model.biases[l].size(), 0.0);
    vb[l].assign(model.biases[l].size(), 0.0);
  }
  const kernels::AdamParams adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  ForwardCache cache;
  ModelGradients grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_total = 0.0, sum_gd = 0.0, sum_gr = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      std::vector<double> in(bs * n_in);
      for (std::size_t s = 0; s < bs; ++s) {
        const auto& src = train_set[order[start + s]].input;
        std::copy(src.begin(), src.end(), in.begin() + s * n_in);
      }
      const auto out = forward_batch(model, in, bs, &cache, exec);

      std::vector<LossAndGrad> lg(bs);
      const auto nbs = static_cast<std::int64_t>(bs);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
      for (std::int64_t si = 0; si < nbs; ++si) {
        const auto s = static_cast<std::size_t>(si);
        const auto& smp = train_set[order[start + s]];
        const PatchView pred{std::span<const double>(out).subspan(s * n_out, n_out), P, 3};
        try {
          lg[s] = svd_reg_loss_and_grad(pred, {smp.target, P, 3}, lambda, &smp.gt_sigma, with_reg);
        } catch (const Error&) {
          // Non-finite predictions end up here; reported as divergence below.
          lg[s].loss.total = std::numeric_limits<double>::quiet_NaN();
        }
      }

      std::vector<double> grad_out(bs * n_out);
      for (std::size_t s = 0; s < bs; ++s) {
        if (!std::isfinite(lg[s].loss.total))
          throw TrainingDiverged(state_dump(model, epoch, step + 1, lambda, lg[s].loss));
        sum_total += lg[s].loss.total;
        sum_gd += norm(lg[s].grad_data);
        sum_gr += norm(lg[s].grad_reg);
        for (std::size_t i = 0; i < n_out; ++i)
          grad_out[s * n_out + i] = (lg[s].grad_data[i] + lambda * lg[s].grad_reg[i]) / static_cast<double>(bs);
      }

      backward_batch(model, cache, grad_out, grads, exec);
      ++step;
      for (std::size_t l = 0; l < nl; ++l) {
        kernels::adam_update(model.weights[l], grads.weights[l], mw[l], vw[l], adam, step, exec);
        kernels::adam_update(model.biases[l], grads.biases[l], mb[l], vb[l], adam, step, exec);
      }
    }

    const double n = static_cast<double>(train_set.size());
    const LossTotals val = mean_loss_terms(model, val_set, with_reg, exec);
    HistoryRow row{epoch, sum_total / n, val.data, val.reg, lambda, evaluate(model, ds, Split::val, exec).aggregate().psnr};
    if (!std::isfinite(row.train_total))
      throw TrainingDiverged(state_dump(model, epoch, step, lambda, {val.data, val.reg, lambda, row.train_total}));
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);

    if (cfg.lambda_mode == LambdaMode::adaptive) lambda = adapt.update(sum_gd / n, sum_gr / n);
  }
  model.lambda = lambda;
  model.epochs_trained = cfg.epochs;
  return result;
}

TrainResult baseline_qdl(const Dataset& ds, TrainConfig cfg, const EpochCallback& on_epoch, Exec exec) {
  if (cfg.lambda_mode == LambdaMode::adaptive || cfg.lambda > 0.0)
    throw ValidationError("the voxel-wise baseline; the regulariser must be disabled (lambda = 0)");
  if (cfg.hidden.size() != 2) throw ValidationError("the voxel-wise baseline uses exactly two hidden layers");
  cfg.patch = 1;
  return train(ds, cfg, on_epoch, exec);
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream out;
  out << "epoch,train_total,val_data,val_reg,lambda,val_psnr\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.6f\n", r.epoch, r.train_total, r.val_data, r.val_reg,
                  r.lambda, r.val_psnr);
    out << buf;
  }
  return out.str();
}

Volume3D predict_split(const EstimatorModel& model, const Dataset& ds, Split split, Exec exec) {
  model.validate();
  const Dims& d = ds.inputs.dims();
  if (model.in_channels != d.c || model.out_channels != ds.targets.dims().c)
    throw ValidationError("model channels do not match the dataset");
  Volume3D pred(ds.targets.dims(), ds.targets.channel_names(), ds.targets.voxel_size());
  const std::size_t P = model.patch;
  const auto origins = tile_origins(d, ds.range(split), P);
  const std::size_t chunk = 64, n_in = model.input_width(), n_out = model.output_width();
  for (std::size_t start = 0; start < origins.size(); start += chunk) {
    const std::size_t bs = std::min(chunk, origins.size() - start);
    std::vector<double> in(bs * n_in);
    for (std::size_t s = 0; s < bs; ++s) {
      const auto p = extract_patch(ds.inputs, origins[start + s], P);
      std::copy(p.begin(), p.end(), in.begin() + s * n_in);
    }
    const auto out = forward_batch(model, in, bs, nullptr, exec);
    for (std::size_t s = 0; s < bs; ++s)
      write_patch(pred, origins[start + s], P,
                  std::vector<double>(out.begin() + static_cast<std::ptrdiff_t>(s * n_out),
                                      out.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_out)));
  }
  return pred;
}

EvalReport evaluate_predictions(const Dataset& ds, Split split, const Volume3D& prediction, std::size_t patch) {
  const Dims& d = ds.targets.dims();
  if (!(prediction.dims() == d)) throw ValidationError("prediction and targets differ in shape");
  const SliceRange r = ds.range(split);
  if (r.size() == 0) throw ValidationError(std::string("split '") + split_name(split) + "' is empty");
  const std::size_t nx = d.x / patch * patch, ny = d.y / patch * patch;
  if (nx == 0 || ny == 0) throw ValidationError("patch larger than the slices");

  EvalReport rep;
  const char* names[3] = {"FA", "MD", "AD"};
  std::vector<double> pooled_ref, pooled_test;
  double ssim_sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> ref, test;
    std::vector<Eigen::MatrixXd> ref_slices, test_slices;
    for (std::size_t z = r.begin; z < r.end; ++z) {
      Eigen::MatrixXd a(static_cast<Eigen::Index>(ny), static_cast<Eigen::Index>(nx));
      Eigen::MatrixXd b(a.rows(), a.cols());
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
          const double t = ds.targets.at(x, y, z, c), p = prediction.at(x, y, z, c);
          a(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = t;
          b(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = p;
          ref.push_back(t);
          test.push_back(p);
        }
      ref_slices.push_back(std::move(a));
      test_slices.push_back(std::move(b));
    }
    ChannelQuality& q = rep.rows[c];
    q.name = names[c];
    q.mse = mse(ref, test);
    q.peak = dynamic_range(ref);
    q.psnr = psnr_from_mse(q.mse, q.peak);
    double s = 0.0;
    for (std::size_t i = 0; i < ref_slices.size(); ++i) s += ssim(ref_slices[i], test_slices[i], q.peak);
    q.ssim = s / static_cast<double>(ref_slices.size());
    ssim_sum += q.ssim;
    pooled_ref.insert(pooled_ref.end(), ref.begin(), ref.end());
    pooled_test.insert(pooled_test.end(), test.begin(), test.end());
  }
  ChannelQuality& agg = rep.rows[3];
  agg.name = "aggregate";
  agg.mse = mse(pooled_ref, pooled_test);
  agg.peak = dynamic_range(pooled_ref);
  agg.psnr = psnr_from_mse(agg.mse, agg.peak);
  agg.ssim = ssim_sum / 3.0;
  return rep;
}

EvalReport evaluate(const EstimatorModel& model, const Dataset& ds, Split split, Exec exec) {
  return evaluate_predictions(ds, split, predict_split(model, ds, split, exec), model.patch);
}

std::string eval_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "channel,mse,psnr,ssim,peak\n";
  char buf[256];
  for (const auto& q : r.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.6f,%.6f,%.9g\n", q.name.c_str(), q.mse, q.psnr, q.ssim, q.peak);
    out << buf;
  }
  return out.str();
}

double Comparison::mean_fixed() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.psnr_fixed;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double Comparison::mean_adaptive() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.psnr_adaptive;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

Comparison compare_regularizer(const Dataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                               Exec exec) {
  Comparison c;
  for (auto seed : seeds) {
    TrainConfig fixed = base, adaptive = base;
    fixed.seed = adaptive.seed = seed;
    fixed.lambda_mode = LambdaMode::fixed;
    fixed.lambda = 0.0;
    adaptive.lambda_mode = LambdaMode::adaptive;
    auto a = train(ds, fixed, {}, exec);
    auto b = train(ds, adaptive, {}, exec);
    c.rows.push_back({seed, a.history.back().val_psnr, b.history.back().val_psnr});
    c.fixed_histories.push_back(std::move(a.history));
    c.adaptive_histories.push_back(std::move(b.history));
  }
  return c;
}

std::string comparison_csv(const Comparison& c) {
  std::ostringstream out;
  out << "seed,psnr_lambda0,psnr_adaptive,improvement\n";
  char buf[256];
  for (const auto& r : c.rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.6f\n", static_cast<unsigned long long>(r.seed), r.psnr_fixed,
                  r.psnr_adaptive, r.psnr_adaptive - r.psnr_fixed);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,%.6f\n", c.mean_fixed(), c.mean_adaptive(), c.mean_improvement());
  out << buf;
  return out.str();
}

} // namespace aid_dti
