#include "aid_dti/dense.hpp"
#include "aid_dti/dti.hpp"
#include "aid_dti/phantom.hpp"
#include "aid_dti/train.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

using namespace aid_dti;
namespace fs = std::filesystem;

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = [] {
    const TensorField f = generate_phantom(default_phantom_config());
    return make_dataset(f, canonical_six_direction_table(), {0.04, 7});
  }();
  return ds;
}

TrainConfig small_train_config() {
  TrainConfig c;
  c.patch = 8;
  c.train_stride = 8;
  c.hidden = {32};
  c.batch_size = 16;
  c.epochs = 3;
  c.lambda_mode = LambdaMode::fixed;
  c.lambda = 0.0;
  return c;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_model(const EstimatorModel& a, const EstimatorModel& b) {
  if (a.layers != b.layers || a.weights.size() != b.weights.size()) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (!same_bits(a.weights[l], b.weights[l]) || !same_bits(a.biases[l], b.biases[l])) return false;
  return true;
}

// Scalar objective sum <g, forward(x)> for gradient checks.
double probe(const EstimatorModel& m, const std::vector<double>& x, const std::vector<double>& g, std::size_t batch) {
  const auto out = forward_batch(m, x, batch, nullptr, Exec::serial);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += g[i] * out[i];
  return s;
}

} // namespace

TEST_SUITE("model") {
  TEST_CASE("architecture and initialisation") {
    const EstimatorModel m = make_model(4, {16, 8}, Activation::tanh, 3);
    CHECK(m.layers == std::vector<std::size_t>{112, 16, 8, 48});
    CHECK(m.parameter_count() == 112 * 16 + 16 + 16 * 8 + 8 + 8 * 48 + 48);
    const double limit = std::sqrt(6.0 / (112 + 16));
    for (double w : m.weights[0]) CHECK(std::abs(w) <= limit);
    for (double b : m.biases[0]) CHECK(b == 0.0);
    CHECK(same_model(m, make_model(4, {16, 8}, Activation::tanh, 3)));
    CHECK_FALSE(same_model(m, make_model(4, {16, 8}, Activation::tanh, 4)));
    CHECK(parse_activation("relu") == Activation::relu);
    CHECK_THROWS_AS(parse_activation("gelu"), ValidationError);
  }

  TEST_CASE("zero weights give zero output") {
    EstimatorModel m = make_model(2, {5}, Activation::relu, 1);
    for (auto& w : m.weights) std::fill(w.begin(), w.end(), 0.0);
    std::mt19937_64 rng(1);
    const auto out = forward(m, random_vec(rng, m.input_width(), 0.0, 2.0));
    REQUIRE(out.size() == 12);
    for (double y : out) CHECK(y == 0.0);
  }

  TEST_CASE("single linear layer at P = 1 is an affine map, clamped") {
    EstimatorModel m = make_model(1, {}, Activation::tanh, 1);
    REQUIRE(m.weights.size() == 1);
    std::mt19937_64 rng(2);
    m.weights[0] = random_vec(rng, 21, -0.1, 0.1);
    m.biases[0] = {0.5, 0.7, 0.9};
    const auto x = random_vec(rng, 7, 0.0, 1.0);
    const auto y = forward(m, x, Exec::serial);
    for (std::size_t o = 0; o < 3; ++o) {
      double expect = m.biases[0][o];
      for (std::size_t i = 0; i < 7; ++i) expect += x[i] * m.weights[0][i * 3 + o];
      CHECK(std::abs(y[o] - expect) < 1e-15);
    }
    m.biases[0] = {-5.0, 5.0, 0.2};
    const auto z = forward(m, x);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 1.5);
  }

  TEST_CASE("forward is deterministic and policy independent") {
    const EstimatorModel m = make_model(4, {64, 32}, Activation::tanh, 5);
    std::mt19937_64 rng(3);
    const auto x = random_vec(rng, 37 * m.input_width(), 0.0, 1.5);
    const auto a = forward_batch(m, x, 37, nullptr, Exec::serial);
    CHECK(same_bits(a, forward_batch(m, x, 37, nullptr, Exec::serial)));
    CHECK(same_bits(a, forward_batch(m, x, 37, nullptr, Exec::parallel)));
  }

  TEST_CASE("shape mismatch") {
    const EstimatorModel m = make_model(2, {4}, Activation::tanh, 1);
    CHECK_THROWS_AS(forward(m, std::vector<double>(27, 0.0)), ValidationError);
    CHECK_THROWS_AS(forward_batch(m, std::vector<double>(28 * 3 - 1, 0.0), 3), ValidationError);
    EstimatorModel bad = m;
    bad.weights[0].pop_back();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = m;
    bad.biases[1][0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("backward matches finite differences") {
    for (Activation act : {Activation::tanh, Activation::relu}) {
      EstimatorModel m = make_model(1, {6, 5}, act, 11);
      // Keep outputs inside the clamp range so the map is smooth there.
      for (auto& w : m.weights.back()) w *= 0.1;
      std::fill(m.biases.back().begin(), m.biases.back().end(), 0.75);
      std::mt19937_64 rng(12);
      const std::size_t batch = 4;
      const auto x = random_vec(rng, batch * 7, 0.0, 1.0);
      const auto g = random_vec(rng, batch * 3, -1.0, 1.0);
      ForwardCache cache;
      const auto out = forward_batch(m, x, batch, &cache, Exec::serial);
      for (double y : out) REQUIRE((y > 0.0 && y < 1.5));
      ModelGradients grads;
      backward_batch(m, cache, g, grads, Exec::serial);

      for (std::size_t l = 0; l < m.weights.size(); ++l) {
        auto fw = [&](const std::vector<double>& w) {
          EstimatorModel t = m;
          t.weights[l] = w;
          return probe(t, x, g, batch);
        };
        auto fb = [&](const std::vector<double>& b) {
          EstimatorModel t = m;
          t.biases[l] = b;
          return probe(t, x, g, batch);
        };
        CHECK(oracle::relative_error(grads.weights[l], oracle::central_gradient(fw, m.weights[l], 1e-6)) < 1e-6);
        CHECK(oracle::relative_error(grads.biases[l], oracle::central_gradient(fb, m.biases[l], 1e-6)) < 1e-6);
      }
    }
  }

  TEST_CASE("output clamp passes gradient only towards the range") {
    EstimatorModel m = make_model(1, {}, Activation::tanh, 1);
    std::fill(m.weights[0].begin(), m.weights[0].end(), 0.0);
    m.biases[0] = {-1.0, 2.0, 0.5};
    const std::vector<double> x(7, 0.3);
    ForwardCache cache;
    forward_batch(m, x, 1, &cache, Exec::serial);
    ModelGradients grads;
    // A positive gradient means descent lowers the output.
    backward_batch(m, cache, std::vector<double>{1.0, 1.0, 1.0}, grads, Exec::serial);
    CHECK(grads.biases[0] == std::vector<double>{0.0, 1.0, 1.0});
    backward_batch(m, cache, std::vector<double>{-1.0, -1.0, -1.0}, grads, Exec::serial);
    CHECK(grads.biases[0] == std::vector<double>{-1.0, 0.0, -1.0});
  }

  TEST_CASE("checkpoint roundtrip and corruption") {
    const auto dir = testutil::scratch_dir("model_io");
    EstimatorModel m = make_model(2, {9, 4}, Activation::relu, 21);
    m.lambda = 0.125;
    m.seed = 21;
    m.epochs_trained = 7;
    const std::string stem = (dir / "m").string();
    save_model(m, stem);
    const EstimatorModel r = load_model(stem);
    CHECK(same_model(m, r));
    CHECK(r.activation == Activation::relu);
    CHECK(r.patch == 2);
    CHECK(r.lambda == 0.125);
    CHECK(r.seed == 21);
    CHECK(r.epochs_trained == 7);
    CHECK(fs::file_size(dir / "m.weights") == m.parameter_count() * 8);

    const std::string weights = testutil::read_file(dir / "m.weights");
    {
      std::ofstream o(dir / "m.weights", std::ios::binary | std::ios::trunc);
      o << weights.substr(0, weights.size() - 8);
    }
    CHECK_THROWS_AS(load_model(stem), FormatError);
    {
      std::ofstream o(dir / "m.model.json", std::ios::trunc);
      o << "{\"format\": 3";
    }
    CHECK_THROWS_AS(load_model(stem), FormatError);
    CHECK_THROWS_AS(load_model((dir / "absent").string()), IoError);
  }
}

TEST_SUITE("kernels") {
  TEST_CASE("dense and activation kernels: serial and parallel agree bitwise") {
    std::mt19937_64 rng(31);
    const std::size_t batch = 70, n_in = 129, n_out = 67;
    const auto in = random_vec(rng, batch * n_in, -1, 1), wt = random_vec(rng, n_in * n_out, -1, 1);
    const auto bias = random_vec(rng, n_out, -1, 1), delta = random_vec(rng, batch * n_out, -1, 1);
    std::vector<double> o1(batch * n_out), o2(batch * n_out);
    kernels::dense_forward(in, wt, bias, o1, batch, n_in, n_out, Exec::serial);
    kernels::dense_forward(in, wt, bias, o2, batch, n_in, n_out, Exec::parallel);
    CHECK(same_bits(o1, o2));
    // Oracle for one entry.
    double e = bias[5];
    for (std::size_t i = 0; i < n_in; ++i) e += in[3 * n_in + i] * wt[i * n_out + 5];
    CHECK(std::abs(o1[3 * n_out + 5] - e) < 1e-12);

    std::vector<double> dw1(n_in * n_out), dw2(n_in * n_out), db1(n_out), db2(n_out);
    kernels::dense_backward_params(in, delta, dw1, db1, batch, n_in, n_out, Exec::serial);
    kernels::dense_backward_params(in, delta, dw2, db2, batch, n_in, n_out, Exec::parallel);
    CHECK(same_bits(dw1, dw2));
    CHECK(same_bits(db1, db2));

    std::vector<double> di1(batch * n_in), di2(batch * n_in);
    kernels::dense_backward_input(wt, delta, di1, batch, n_in, n_out, Exec::serial);
    kernels::dense_backward_input(wt, delta, di2, batch, n_in, n_out, Exec::parallel);
    CHECK(same_bits(di1, di2));

    auto t1 = o1, t2 = o1;
    kernels::tanh_forward(t1, Exec::serial);
    kernels::tanh_forward(t2, Exec::parallel);
    CHECK(same_bits(t1, t2));
    auto d1 = delta, d2 = delta;
    kernels::tanh_backward(t1, d1, Exec::serial);
    kernels::tanh_backward(t2, d2, Exec::parallel);
    CHECK(same_bits(d1, d2));
    auto r1 = o1, r2 = o1;
    kernels::relu_forward(r1, Exec::serial);
    kernels::relu_forward(r2, Exec::parallel);
    CHECK(same_bits(r1, r2));
  }

  TEST_CASE("adam: first step moves each parameter by lr against its gradient") {
    std::mt19937_64 rng(32);
    auto p = random_vec(rng, 1000, -1, 1);
    const auto g = random_vec(rng, 1000, -1, 1);
    std::vector<double> m(1000, 0.0), v(1000, 0.0);
    auto q = p, m2 = m, v2 = v;
    const kernels::AdamParams ap{0.01, 0.9, 0.999, 1e-8};
    kernels::adam_update(p, g, m, v, ap, 1, Exec::serial);
    kernels::adam_update(q, g, m2, v2, ap, 1, Exec::parallel);
    CHECK(same_bits(p, q));
    CHECK(same_bits(m, m2));
    std::mt19937_64 rng2(32);
    const auto p0 = random_vec(rng2, 1000, -1, 1);
    for (std::size_t i = 0; i < p.size(); ++i)
      CHECK(std::abs((p0[i] - p[i]) - 0.01 * g[i] / (std::abs(g[i]) + 1e-8)) < 1e-12);
  }
}

TEST_SUITE("train") {
  TEST_CASE("configuration checks") {
    TrainConfig c = small_train_config();
    CHECK_NOTHROW(c.validate());
    c.patch = 1;
    c.lambda = 0.1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.lambda = 0.0;
    c.lambda_mode = LambdaMode::adaptive;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_train_config();
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_train_config();
    c.patch = 100;
    CHECK_THROWS_AS(train(small_dataset(), c), ValidationError);
  }

  TEST_CASE("training lowers the loss and is reproducible") {
    TrainConfig c = small_train_config();
    c.train_stride = 7; // 218 usable 8x8 training patches
    c.epochs = 30;
    c.learning_rate = 1e-3;
    c.lambda_mode = LambdaMode::adaptive;
    std::vector<HistoryRow> seen;
    const TrainResult a = train(small_dataset(), c, [&](const HistoryRow& r) { seen.push_back(r); });
    REQUIRE(a.history.size() == 30);
    CHECK(seen.size() == 30);
    CHECK(a.history.back().train_total < a.history.front().train_total);
    for (const auto& r : a.history) {
      CHECK(r.lambda >= c.adaptive.lambda_min);
      CHECK(r.lambda <= c.adaptive.lambda_max);
      CHECK(std::isfinite(r.val_psnr));
    }
    CHECK(a.model.epochs_trained == 30);

    c.epochs = 3;
    const TrainResult s = train(small_dataset(), c, {}, Exec::serial);
    const TrainResult p = train(small_dataset(), c, {}, Exec::parallel);
    CHECK(same_model(s.model, p.model));
    CHECK(history_csv(s.history) == history_csv(p.history));
    c.seed = 2;
    CHECK_FALSE(same_model(s.model, train(small_dataset(), c).model));
  }

  TEST_CASE("lambda = 0 reports the data term only") {
    const TrainResult r = train(small_dataset(), small_train_config());
    for (const auto& h : r.history) CHECK(h.lambda == 0.0);
    CHECK(r.model.lambda == 0.0);
    const std::string csv = history_csv(r.history);
    CHECK(csv.rfind("epoch,train_total,val_data,val_reg,lambda,val_psnr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }

  TEST_CASE("voxel-wise baseline") {
    TrainConfig c = small_train_config();
    c.hidden = {16, 16};
    c.epochs = 2;
    c.batch_size = 256;
    const TrainResult r = baseline_qdl(small_dataset(), c);
    CHECK(r.model.patch == 1);
    CHECK(r.model.layers == std::vector<std::size_t>{7, 16, 16, 3});
    c.lambda = 0.5;
    CHECK_THROWS_AS(baseline_qdl(small_dataset(), c), ValidationError);
    c.lambda = 0.0;
    c.hidden = {16};
    CHECK_THROWS_AS(baseline_qdl(small_dataset(), c), ValidationError);
  }

  TEST_CASE("divergence is reported") {
    Dataset ds = small_dataset();
    for (auto& v : ds.inputs.data()) v = std::numeric_limits<float>::quiet_NaN();
    TrainConfig c = small_train_config();
    c.epochs = 1;
    try {
      train(ds, c);
      FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("perfect prediction scores MSE 0, PSNR inf, SSIM 1") {
    const Dataset& ds = small_dataset();
    for (Split s : {Split::val, Split::test}) {
      const EvalReport r = evaluate_predictions(ds, s, ds.targets, 8);
      for (const auto& q : r.rows) {
        CHECK(q.mse == 0.0);
        CHECK(std::isinf(q.psnr));
        CHECK(q.ssim == doctest::Approx(1.0).epsilon(1e-12));
      }
      CHECK(r.aggregate().name == "aggregate");
      const std::string csv = eval_csv(r);
      CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
      CHECK(csv.find("\nFA,") != std::string::npos);
      CHECK(csv.find("\nMD,") != std::string::npos);
      CHECK(csv.find("\nAD,") != std::string::npos);
    }
  }

  TEST_CASE("aggregate pools channels") {
    const Dataset& ds = small_dataset();
    Volume3D pred = ds.targets;
    for (auto& v : pred.data()) v += 0.01f;
    const EvalReport r = evaluate_predictions(ds, Split::val, pred, 8);
    const double pooled = (r.rows[0].mse + r.rows[1].mse + r.rows[2].mse) / 3.0;
    CHECK(r.aggregate().mse == doctest::Approx(pooled).epsilon(1e-9));
    CHECK(r.aggregate().ssim ==
          doctest::Approx((r.rows[0].ssim + r.rows[1].ssim + r.rows[2].ssim) / 3.0).epsilon(1e-12));
  }

  TEST_CASE("trained model beats its initialisation") {
    TrainConfig c = small_train_config();
    c.epochs = 10;
    const TrainResult r = train(small_dataset(), c);
    const EstimatorModel init = make_model(c.patch, c.hidden, c.activation, c.seed);
    const double before = evaluate(init, small_dataset(), Split::test).aggregate().psnr;
    const double after = evaluate(r.model, small_dataset(), Split::test).aggregate().psnr;
    CHECK(after > before);
    const Volume3D pred = predict_split(r.model, small_dataset(), Split::test);
    CHECK(pred.dims() == small_dataset().targets.dims());
    CHECK(same_bits(std::vector<double>(1, evaluate(r.model, small_dataset(), Split::test, Exec::serial).aggregate().psnr),
                    std::vector<double>(1, after)));
  }
}
