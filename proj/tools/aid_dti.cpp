// Command-line driver for the desk-scale diffusion-tensor pipeline.
//
// Exit codes: 0 success, 2 usage or invalid input, 3 numeric/runtime failure.

#include "aid_dti/dataset.hpp"
#include "aid_dti/dti.hpp"
#include "aid_dti/error.hpp"
#include "aid_dti/gradient_table.hpp"
#include "aid_dti/noise.hpp"
#include "aid_dti/pgm.hpp"
#include "aid_dti/phantom.hpp"
#include "aid_dti/svd.hpp"
#include "aid_dti/train.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace aid_dti;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

void ensure_parent(const std::string& stem) {
  if (const auto parent = fs::path(stem).parent_path(); !parent.empty()) fs::create_directories(parent);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s.front() == '-') throw ValidationError(std::string("invalid ") + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

struct Options {
  // shared
  std::string out, bvals, bvecs;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  // gradients
  double b_value = 1000.0;
  // phantom
  std::string config, write_config;
  bool seed_given = false;
  // simulate / fit / metrics / noise
  std::string phantom, dwi, tensor, in;
  // svd-sweep
  std::string clean, noisy, ks = "5,20,40,140", images, channel;
  long long slice = -1;
  // dataset
  std::string split = "0.625,0.1875,0.1875";
  double input_clip = 2.0;
  // train / eval / residuals / compare
  std::string dataset, checkpoint, history, lambda = "adaptive", hidden = "256,256", activation = "tanh",
                                          eval_split = "val", seeds = "1,2,3,4,5", history_dir;
  double lr = 1e-3;
  std::size_t epochs = 60, patch = 32, batch = 32, stride = 16;
  bool qdl = false, quiet = false;
};

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.learning_rate = o.lr;
  c.epochs = o.epochs;
  c.patch = o.patch;
  c.batch_size = o.batch;
  c.train_stride = o.stride;
  c.seed = o.seed;
  c.activation = parse_activation(o.activation);
  c.hidden.clear();
  for (const auto& h : split_list(o.hidden, ',')) c.hidden.push_back(parse_count(h, "hidden width"));
  if (o.lambda == "adaptive") {
    c.lambda_mode = LambdaMode::adaptive;
  } else {
    c.lambda_mode = LambdaMode::fixed;
    try {
      std::size_t pos = 0;
      c.lambda = std::stod(o.lambda, &pos);
      if (pos != o.lambda.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("--lambda expects a number or 'adaptive', got '" + o.lambda + "'");
    }
  }
  c.validate();
  return c;
}

EpochCallback progress(bool quiet) {
  if (quiet) return {};
  return [](const HistoryRow& r) {
    std::fprintf(stderr, "epoch %zu  train %.6f  val_data %.6f  val_reg %.6f  lambda %.4g  val_psnr %.3f\n", r.epoch,
                 r.train_total, r.val_data, r.val_reg, r.lambda, r.val_psnr);
  };
}

// Commands -------------------------------------------------------------------

void cmd_gradients(const Options& o) {
  const auto g = canonical_six_direction_table(o.b_value);
  save_gradient_table(g, o.bvals, o.bvecs);
}

void cmd_phantom(const Options& o) {
  PhantomConfig cfg = o.config.empty() ? default_phantom_config() : load_phantom_config(o.config);
  if (o.seed_given) cfg.seed = o.seed;
  cfg.validate();
  if (!o.write_config.empty()) write_text(o.write_config, format_phantom_config(cfg));
  const TensorField f = generate_phantom(cfg);
  Volume3D v = tensor_field_to_volume(f);
  v.attributes()["phantom_seed"] = std::to_string(cfg.seed);
  ensure_parent(o.out);
  save_volume(v, o.out);
}

void cmd_simulate(const Options& o) {
  const GradientTable g = load_gradient_table(o.bvals, o.bvecs);
  if (!g.is_six_direction_protocol())
    throw ValidationError("simulate needs the 7-channel protocol (one b=0 plus six directions at b=1000); got " +
                          std::to_string(g.size()) + " entries");
  const TensorField f = tensor_field_from_volume(load_volume(o.phantom));
  Volume3D dwi = simulate_dwi(f, g);
  if (o.sigma < 0.0) throw ValidationError("--sigma must be >= 0");
  if (o.sigma > 0.0) dwi = add_rician(dwi, {o.sigma, o.seed});
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", o.sigma);
  dwi.attributes()["noise_sigma"] = buf;
  dwi.attributes()["noise_seed"] = std::to_string(o.seed);
  ensure_parent(o.out);
  save_volume(dwi, o.out);
}

void cmd_noise(const Options& o) {
  if (o.sigma < 0.0) throw ValidationError("--sigma must be >= 0");
  Volume3D v = add_rician(load_volume(o.in), {o.sigma, o.seed});
  ensure_parent(o.out);
  save_volume(v, o.out);
}

void cmd_fit(const Options& o) {
  const GradientTable g = load_gradient_table(o.bvals, o.bvecs);
  const TensorField f = fit_tensor_ols(load_volume(o.dwi), g);
  ensure_parent(o.out);
  save_volume(tensor_field_to_volume(f), o.out);
}

void cmd_metrics(const Options& o) {
  const TensorField f = tensor_field_from_volume(load_volume(o.tensor));
  ensure_parent(o.out);
  save_volume(compute_metrics(f), o.out);
}

Eigen::MatrixXd slice_matrix(const Volume3D& v, std::size_t z, std::size_t c) {
  const auto s = v.slice(z, c);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.dims().y), static_cast<Eigen::Index>(v.dims().x));
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) m(y, x) = s[static_cast<std::size_t>(y * m.cols() + x)];
  return m;
}

void write_matrix_pgm(const std::string& path, const Eigen::MatrixXd& m) {
  std::vector<double> buf(static_cast<std::size_t>(m.size()));
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) buf[static_cast<std::size_t>(y * m.cols() + x)] = m(y, x);
  write_pgm_with_range(path, buf, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
}

void cmd_svd_sweep(const Options& o) {
  const Volume3D clean = load_volume(o.clean), noisy = load_volume(o.noisy);
  if (!(clean.dims() == noisy.dims())) throw ValidationError("clean and noisy volumes differ in shape");
  std::size_t c = 0;
  if (!o.channel.empty())
    c = clean.channel(o.channel);
  else if (clean.has_channel("FA"))
    c = clean.channel("FA");
  if (o.slice < 0 || static_cast<std::size_t>(o.slice) >= clean.dims().z)
    throw ValidationError("--slice " + std::to_string(o.slice) + " is outside [0, " +
                          std::to_string(clean.dims().z) + ")");
  const auto z = static_cast<std::size_t>(o.slice);
  const Eigen::MatrixXd a = slice_matrix(clean, z, c), b = slice_matrix(noisy, z, c);
  const Eigen::Index r = std::min(a.rows(), a.cols());

  std::vector<Eigen::Index> ks;
  if (o.ks == "all") {
    for (Eigen::Index k = 1; k <= r; ++k) ks.push_back(k);
  } else {
    for (const auto& t : split_list(o.ks, ',')) ks.push_back(static_cast<Eigen::Index>(parse_count(t, "rank")));
  }
  if (ks.empty()) throw ValidationError("--ks is empty");
  for (auto k : ks)
    if (k < 1 || k > r)
      throw ValidationError("rank " + std::to_string(k) + " outside [1, " + std::to_string(r) + "] for this slice");

  write_text(o.out, rank_sweep_csv(rank_sweep(a, b, ks)));

  if (!o.images.empty()) {
    ensure_parent(o.images);
    const SvdFactors f = svd(b);
    write_matrix_pgm(o.images + "_clean.pgm", a);
    write_matrix_pgm(o.images + "_noisy.pgm", b);
    for (auto k : ks) {
      const Eigen::MatrixXd rec = truncate(f, k);
      write_matrix_pgm(o.images + "_k" + std::to_string(k) + ".pgm", rec);
      write_matrix_pgm(o.images + "_k" + std::to_string(k) + "_err.pgm", (a - rec).cwiseAbs());
    }
  }
}

DatasetOptions dataset_options(const Options& o) {
  DatasetOptions d;
  const auto parts = split_list(o.split, ',');
  if (parts.size() != 3) throw ValidationError("--split expects three comma-separated fractions");
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      d.split[i] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw ValidationError("invalid split fraction '" + parts[i] + "'");
    }
  }
  d.input_clip = o.input_clip;
  return d;
}

void cmd_dataset(const Options& o) {
  const GradientTable g = load_gradient_table(o.bvals, o.bvecs);
  const TensorField f = tensor_field_from_volume(load_volume(o.phantom));
  const Dataset ds = make_dataset(f, g, {o.sigma, o.seed}, dataset_options(o));
  ensure_parent(o.out);
  save_dataset(ds, o.out);
}

void cmd_train(const Options& o) {
  const Dataset ds = load_dataset(o.dataset);
  TrainConfig cfg = train_config(o);
  const TrainResult r = o.qdl ? baseline_qdl(ds, cfg, progress(o.quiet)) : train(ds, cfg, progress(o.quiet));
  ensure_parent(o.out);
  save_model(r.model, o.out);
  write_text(o.history.empty() ? o.out + "_history.csv" : o.history, history_csv(r.history));
}

void cmd_eval(const Options& o) {
  const Dataset ds = load_dataset(o.dataset);
  const EstimatorModel m = load_model(o.checkpoint);
  const EvalReport rep = evaluate(m, ds, parse_split(o.eval_split));
  const std::string csv = eval_csv(rep);
  if (o.out.empty())
    std::cout << csv;
  else
    write_text(o.out, csv);
}

void cmd_residuals(const Options& o) {
  const Dataset ds = load_dataset(o.dataset);
  const EstimatorModel m = load_model(o.checkpoint);
  const Split split = parse_split(o.eval_split);
  const Volume3D pred = predict_split(m, ds, split);
  const Dims& d = ds.targets.dims();
  const SliceRange range = ds.range(split);

  Volume3D res(d, ds.targets.channel_names(), ds.targets.voxel_size());
  for (std::size_t z = range.begin; z < range.end; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x)
        for (std::size_t c = 0; c < d.c; ++c)
          res.at(x, y, z, c) = std::abs(ds.targets.at(x, y, z, c) - pred.at(x, y, z, c));
  res.attributes()["split"] = split_name(split);
  ensure_parent(o.out);
  save_volume(res, o.out + "_residual");
  save_volume(pred, o.out + "_prediction");

  const std::size_t mid = range.begin + range.size() / 2;
  for (std::size_t c = 0; c < d.c; ++c) {
    const auto s = res.slice(mid, c);
    write_pgm_with_range(o.out + "_residual_" + slug(ds.targets.channel_names()[c]) + ".pgm", s, d.y, d.x);
  }
}

void cmd_compare(const Options& o) {
  const Dataset ds = load_dataset(o.dataset);
  TrainConfig base = train_config(o);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(o.seeds, ',')) seeds.push_back(parse_count(s, "seed"));
  if (seeds.empty()) throw ValidationError("--seeds is empty");
  const Comparison c = compare_regularizer(ds, base, seeds);
  write_text(o.out, comparison_csv(c));
  if (!o.history_dir.empty()) {
    fs::create_directories(o.history_dir);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const std::string s = std::to_string(seeds[i]);
      write_text(o.history_dir + "/history_lambda0_seed" + s + ".csv", history_csv(c.fixed_histories[i]));
      write_text(o.history_dir + "/history_adaptive_seed" + s + ".csv", history_csv(c.adaptive_histories[i]));
    }
  }
  if (!o.quiet)
    std::fprintf(stderr, "mean val PSNR: lambda=0 %.4f dB, adaptive %.4f dB, improvement %.4f dB\n", c.mean_fixed(),
                 c.mean_adaptive(), c.mean_improvement());
}

void add_training_flags(CLI::App* s, Options& o) {
  s->add_option("--lambda", o.lambda, "0, a fixed value, or 'adaptive'")->capture_default_str();
  s->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  s->add_option("--epochs", o.epochs)->capture_default_str();
  s->add_option("--patch", o.patch, "patch size P")->capture_default_str();
  s->add_option("--batch", o.batch)->capture_default_str();
  s->add_option("--stride", o.stride, "training patch stride")->capture_default_str();
  s->add_option("--hidden", o.hidden, "comma-separated hidden widths")->capture_default_str();
  s->add_option("--activation", o.activation, "tanh or relu")->capture_default_str();
  s->add_flag("--quiet", o.quiet, "no per-epoch progress");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale diffusion-tensor pipeline: phantoms, tensor fitting, SVD studies and regularised training"};
  app.require_subcommand(1);
  Options o;

  auto* grad = app.add_subcommand("gradients", "write the canonical six-direction bvals/bvecs");
  grad->add_option("--bvals", o.bvals)->required();
  grad->add_option("--bvecs", o.bvecs)->required();
  grad->add_option("--b", o.b_value, "b-value of the diffusion-weighted entries")->capture_default_str();

  auto* ph = app.add_subcommand("phantom", "generate a synthetic tensor phantom");
  ph->add_option("--config", o.config, "key=value phantom config (default built-in)");
  ph->add_option("--seed", o.seed, "override the config seed")->each([&](const std::string&) { o.seed_given = true; });
  ph->add_option("--write-config", o.write_config, "also write the effective config");
  ph->add_option("--out", o.out, "output volume stem")->required();

  auto* sim = app.add_subcommand("simulate", "noise-free DWI from a phantom, optionally Rician-corrupted");
  sim->add_option("--phantom", o.phantom)->required();
  sim->add_option("--bvals", o.bvals)->required();
  sim->add_option("--bvecs", o.bvecs)->required();
  sim->add_option("--sigma", o.sigma)->capture_default_str();
  sim->add_option("--seed", o.seed)->capture_default_str();
  sim->add_option("--out", o.out)->required();

  auto* noi = app.add_subcommand("noise", "add Rician noise to any volume");
  noi->add_option("--in", o.in)->required();
  noi->add_option("--sigma", o.sigma)->required();
  noi->add_option("--seed", o.seed)->capture_default_str();
  noi->add_option("--out", o.out)->required();

  auto* fit = app.add_subcommand("fit", "OLS tensor fit of a DWI volume");
  fit->add_option("--dwi", o.dwi)->required();
  fit->add_option("--bvals", o.bvals)->required();
  fit->add_option("--bvecs", o.bvecs)->required();
  fit->add_option("--out", o.out)->required();

  auto* met = app.add_subcommand("metrics", "FA/MD/AD maps of a tensor volume");
  met->add_option("--tensor", o.tensor)->required();
  met->add_option("--out", o.out)->required();

  auto* sw = app.add_subcommand("svd-sweep", "truncated-SVD reconstruction quality versus rank");
  sw->add_option("--clean", o.clean)->required();
  sw->add_option("--noisy", o.noisy)->required();
  sw->add_option("--slice", o.slice)->required();
  sw->add_option("--ks", o.ks, "comma-separated ranks or 'all'")->capture_default_str();
  sw->add_option("--channel", o.channel, "channel name (default FA if present, else the first)");
  sw->add_option("--images", o.images, "prefix for PGM reconstructions and error maps");
  sw->add_option("--out", o.out, "CSV path")->required();

  auto* dsc = app.add_subcommand("dataset", "paired noisy inputs and scaled metric targets");
  dsc->add_option("--phantom", o.phantom)->required();
  dsc->add_option("--bvals", o.bvals)->required();
  dsc->add_option("--bvecs", o.bvecs)->required();
  dsc->add_option("--sigma", o.sigma)->capture_default_str();
  dsc->add_option("--seed", o.seed)->capture_default_str();
  dsc->add_option("--split", o.split, "train,val,test fractions")->capture_default_str();
  dsc->add_option("--input-clip", o.input_clip)->capture_default_str();
  dsc->add_option("--out", o.out)->required();

  auto* tr = app.add_subcommand("train", "train the patch estimator");
  tr->add_option("--dataset", o.dataset)->required();
  tr->add_option("--seed", o.seed)->capture_default_str();
  tr->add_option("--history", o.history, "history CSV (default <out>_history.csv)");
  tr->add_flag("--qdl", o.qdl, "voxel-wise MLP baseline (P = 1, needs --lambda 0 and two hidden layers)");
  tr->add_option("--out", o.out, "checkpoint stem")->required();
  add_training_flags(tr, o);

  auto* ev = app.add_subcommand("eval", "per-channel MSE/PSNR/SSIM of a checkpoint");
  ev->add_option("--dataset", o.dataset)->required();
  ev->add_option("--checkpoint", o.checkpoint)->required();
  ev->add_option("--split", o.eval_split)->capture_default_str();
  ev->add_option("--out", o.out, "CSV path (default stdout)");

  auto* rs = app.add_subcommand("residuals", "|GT - prediction| volumes and mid-slice PGMs");
  rs->add_option("--dataset", o.dataset)->required();
  rs->add_option("--checkpoint", o.checkpoint)->required();
  rs->add_option("--split", o.eval_split)->capture_default_str();
  rs->add_option("--out", o.out, "output prefix")->required();

  auto* cmp = app.add_subcommand("compare", "adaptive lambda versus lambda = 0 over several seeds");
  cmp->add_option("--dataset", o.dataset)->required();
  cmp->add_option("--seeds", o.seeds)->capture_default_str();
  cmp->add_option("--history-dir", o.history_dir, "write one history CSV per run here");
  cmp->add_option("--out", o.out, "comparison CSV")->required();
  add_training_flags(cmp, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*grad) cmd_gradients(o);
    else if (*ph) cmd_phantom(o);
    else if (*sim) cmd_simulate(o);
    else if (*noi) cmd_noise(o);
    else if (*fit) cmd_fit(o);
    else if (*met) cmd_metrics(o);
    else if (*sw) cmd_svd_sweep(o);
    else if (*dsc) cmd_dataset(o);
    else if (*tr) cmd_train(o);
    else if (*ev) cmd_eval(o);
    else if (*rs) cmd_residuals(o);
    else if (*cmp) cmd_compare(o);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
