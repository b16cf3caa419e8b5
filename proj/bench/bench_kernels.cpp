// Serial reference versus OpenMP execution for the data-parallel kernels.
// Each benchmark takes the policy as its argument: 0 = serial, 1 = parallel.
#include "aid_dti/dense.hpp"
#include "aid_dti/dti.hpp"
#include "aid_dti/noise.hpp"
#include "aid_dti/phantom.hpp"
#include "aid_dti/quality.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace aid_dti;

namespace {

Exec policy(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

const TensorField& phantom() {
  static const TensorField f = generate_phantom(default_phantom_config());
  return f;
}

const Volume3D& dwi() {
  static const Volume3D v = simulate_dwi(phantom(), canonical_six_direction_table());
  return v;
}

void BM_FitTensorOls(benchmark::State& state) {
  const GradientTable g = canonical_six_direction_table();
  const Volume3D& v = dwi();
  for (auto _ : state) benchmark::DoNotOptimize(fit_tensor_ols(v, g, policy(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(phantom().voxels()));
}

void BM_AddRician(benchmark::State& state) {
  const Volume3D& v = dwi();
  for (auto _ : state) benchmark::DoNotOptimize(add_rician(v, {0.04, 3}, policy(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dwi().data().size()));
}

void BM_ComputeMetrics(benchmark::State& state) {
  const TensorField& f = phantom();
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(f, policy(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(phantom().voxels()));
}

void BM_Ssim(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd a(256, 256), b(256, 256);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = a.data()[i] + 0.1 * u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, 1.0, {}, policy(state)));
}

void BM_DenseForward(benchmark::State& state) {
  const std::size_t batch = 32, n_in = 32 * 32 * 7, n_out = 256;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> in(batch * n_in), wt(n_in * n_out), bias(n_out), out(batch * n_out);
  for (auto* v : {&in, &wt, &bias})
    for (auto& x : *v) x = u(rng);
  for (auto _ : state) {
    kernels::dense_forward(in, wt, bias, out, batch, n_in, n_out, policy(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * n_in * n_out));
}

} // namespace

BENCHMARK(BM_FitTensorOls)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AddRician)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ComputeMetrics)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ssim)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
