#pragma once

#include "aid_dti/exec.hpp"

#include <cstddef>
#include <span>

// Batched dense-layer kernels. Weights are stored input-major: row i of
// `wt` holds the n_out weights leaving input i. Activations are row-major
// (sample, feature).
//
// Work is split into fixed-size blocks that do not depend on the thread
// count, and each output element is accumulated in a fixed order, so the
// serial and parallel policies give bitwise-identical results.
namespace aid_dti::kernels {

/// out = in * wt + bias
void dense_forward(std::span<const double> in, std::span<const double> wt, std::span<const double> bias,
                   std::span<double> out, std::size_t batch, std::size_t n_in, std::size_t n_out,
                   Exec exec = Exec::parallel);

/// dwt = in^T * delta, dbias = column sums of delta (both overwritten).
void dense_backward_params(std::span<const double> in, std::span<const double> delta, std::span<double> dwt,
                           std::span<double> dbias, std::size_t batch, std::size_t n_in, std::size_t n_out,
                           Exec exec = Exec::parallel);

/// din = delta * wt^T
void dense_backward_input(std::span<const double> wt, std::span<const double> delta, std::span<double> din,
                          std::size_t batch, std::size_t n_in, std::size_t n_out, Exec exec = Exec::parallel);

void tanh_forward(std::span<double> x, Exec exec = Exec::parallel);
/// delta *= 1 - a^2, with a the tanh output.
void tanh_backward(std::span<const double> a, std::span<double> delta, Exec exec = Exec::parallel);
void relu_forward(std::span<double> x, Exec exec = Exec::parallel);
void relu_backward(std::span<const double> a, std::span<double> delta, Exec exec = Exec::parallel);

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; `step` counts from 1.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 const AdamParams& p, std::size_t step, Exec exec = Exec::parallel);

} // namespace aid_dti::kernels
