#include "aid_dti/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace aid_dti::kernels {

namespace {
constexpr std::size_t kBlock = 64;

std::int64_t blocks(std::size_t n) { return static_cast<std::int64_t>((n + kBlock - 1) / kBlock); }
} // namespace

void dense_forward(std::span<const double> in, std::span<const double> wt, std::span<const double> bias,
                   std::span<double> out, std::size_t batch, std::size_t n_in, std::size_t n_out, Exec exec) {
  const std::int64_t nb = blocks(n_out);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n_out, lo + kBlock);
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t o = lo; o < hi; ++o) out[s * n_out + o] = bias[o];
    for (std::size_t i = 0; i < n_in; ++i) {
      const double* w = wt.data() + i * n_out;
      for (std::size_t s = 0; s < batch; ++s) {
        const double x = in[s * n_in + i];
        double* y = out.data() + s * n_out;
#pragma omp simd
        for (std::size_t o = lo; o < hi; ++o) y[o] += x * w[o];
      }
    }
  }
}

void dense_backward_params(std::span<const double> in, std::span<const double> delta, std::span<double> dwt,
                           std::span<double> dbias, std::size_t batch, std::size_t n_in, std::size_t n_out,
                           Exec exec) {
  const auto ni = static_cast<std::int64_t>(n_in);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t ii = 0; ii < ni; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* g = dwt.data() + i * n_out;
    std::fill(g, g + n_out, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
      const double x = in[s * n_in + i];
      const double* d = delta.data() + s * n_out;
#pragma omp simd
      for (std::size_t o = 0; o < n_out; ++o) g[o] += x * d[o];
    }
  }
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = 0.0;
    for (std::size_t s = 0; s < batch; ++s) acc += delta[s * n_out + o];
    dbias[o] = acc;
  }
}

void dense_backward_input(std::span<const double> wt, std::span<const double> delta, std::span<double> din,
                          std::size_t batch, std::size_t n_in, std::size_t n_out, Exec exec) {
  const auto ni = static_cast<std::int64_t>(n_in);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t ii = 0; ii < ni; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* w = wt.data() + i * n_out;
    for (std::size_t s = 0; s < batch; ++s) {
      const double* d = delta.data() + s * n_out;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t o = 0; o < n_out; ++o) acc += w[o] * d[o];
      din[s * n_in + i] = acc;
    }
  }
}

void tanh_forward(std::span<double> x, Exec exec) {
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = std::tanh(x[static_cast<std::size_t>(i)]);
}

void tanh_backward(std::span<const double> a, std::span<double> delta, Exec exec) {
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    delta[k] *= 1.0 - a[k] * a[k];
  }
}

void relu_forward(std::span<double> x, Exec exec) {
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& v = x[static_cast<std::size_t>(i)];
    v = v > 0.0 ? v : 0.0;
  }
}

void relu_backward(std::span<const double> a, std::span<double> delta, Exec exec) {
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!(a[k] > 0.0)) delta[k] = 0.0;
  }
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 const AdamParams& p, std::size_t step, Exec exec) {
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(step));
  const auto n = static_cast<std::int64_t>(param.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double g = grad[k];
    m[k] = p.beta1 * m[k] + (1.0 - p.beta1) * g;
    v[k] = p.beta2 * v[k] + (1.0 - p.beta2) * g * g;
    param[k] -= p.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + p.eps);
  }
}

} // namespace aid_dti::kernels
