#pragma once

#include "aid_dti/exec.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aid_dti {

enum class Activation { tanh, relu };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

/// Fully connected patch estimator: a P x P x 7 input patch maps to a
/// P x P x 3 output patch. Hidden layers use `activation`; the last layer
/// is linear followed by a clamp to [0, output_max].
struct EstimatorModel {
  static constexpr double output_min = 0.0;
  static constexpr double output_max = 1.5;

  std::vector<std::size_t> layers; // widths, input first, output last
  Activation activation = Activation::tanh;
  std::size_t patch = 1;
  std::size_t in_channels = 7;
  std::size_t out_channels = 3;
  /// Layer l: layers[l] x layers[l+1], input-major (see dense.hpp).
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  // Training state carried in checkpoints.
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs_trained = 0;

  std::size_t input_width() const { return layers.front(); }
  std::size_t output_width() const { return layers.back(); }
  std::size_t parameter_count() const;

  /// Throws ValidationError when shapes disagree or weights are non-finite.
  void validate() const;
};

/// Glorot-uniform weights and zero biases from a seeded generator.
EstimatorModel make_model(std::size_t patch, const std::vector<std::size_t>& hidden, Activation activation,
                          std::uint64_t seed, std::size_t in_channels = 7, std::size_t out_channels = 3);

/// Per-layer activations kept for the backward pass.
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> activations; // [0] = input, [l+1] = output of layer l (pre-clamp for last)
  std::vector<double> output;                   // clamped
};

/// Runs `batch` samples stored row-major in `input`; returns the clamped outputs.
std::vector<double> forward_batch(const EstimatorModel& model, std::span<const double> input, std::size_t batch,
                                  ForwardCache* cache = nullptr, Exec exec = Exec::parallel);

/// Single patch.
std::vector<double> forward(const EstimatorModel& model, std::span<const double> input, Exec exec = Exec::parallel);

struct ModelGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

/// Gradients of sum_s <grad_output[s], output[s]> with respect to all
/// parameters. The output clamp passes a gradient through only while the
/// pre-clamp value is inside the range or the step would move it back in.
void backward_batch(const EstimatorModel& model, const ForwardCache& cache, std::span<const double> grad_output,
                    ModelGradients& grads, Exec exec = Exec::parallel);

/// `<stem>.model.json` (architecture and training state) plus
/// `<stem>.weights` (little-endian f64: per layer the weights, then the biases).
void save_model(const EstimatorModel& model, const std::string& stem);
EstimatorModel load_model(const std::string& stem);

} // namespace aid_dti
