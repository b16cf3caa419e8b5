#include "aid_dti/model.hpp"

#include "aid_dti/dense.hpp"
#include "aid_dti/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace aid_dti {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ValidationError("unknown activation '" + name + "'");
}

const char* activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::size_t EstimatorModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l] * layers[l + 1] + layers[l + 1];
  return n;
}

void EstimatorModel::validate() const {
  if (layers.size() < 2) throw ValidationError("model needs at least one layer");
  if (patch == 0) throw ValidationError("model patch size must be positive");
  if (layers.front() != patch * patch * in_channels)
    throw ValidationError("model input width " + std::to_string(layers.front()) + " != P*P*" +
                          std::to_string(in_channels));
  if (layers.back() != patch * patch * out_channels)
    throw ValidationError("model output width " + std::to_string(layers.back()) + " != P*P*" +
                          std::to_string(out_channels));
  if (weights.size() != layers.size() - 1 || biases.size() != layers.size() - 1)
    throw ValidationError("model layer count mismatch");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l + 1] == 0) throw ValidationError("model has an empty layer");
    if (weights[l].size() != layers[l] * layers[l + 1] || biases[l].size() != layers[l + 1])
      throw ValidationError("model layer " + std::to_string(l) + " has inconsistent dimensions");
    for (double w : weights[l])
      if (!std::isfinite(w)) throw ValidationError("model weight is not finite");
    for (double b : biases[l])
      if (!std::isfinite(b)) throw ValidationError("model bias is not finite");
  }
}

EstimatorModel make_model(std::size_t patch, const std::vector<std::size_t>& hidden, Activation activation,
                          std::uint64_t seed, std::size_t in_channels, std::size_t out_channels) {
  EstimatorModel m;
  m.patch = patch;
  m.in_channels = in_channels;
  m.out_channels = out_channels;
  m.activation = activation;
  m.seed = seed;
  m.layers.push_back(patch * patch * in_channels);
  m.layers.insert(m.layers.end(), hidden.begin(), hidden.end());
  m.layers.push_back(patch * patch * out_channels);

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
    const double fan = static_cast<double>(m.layers[l] + m.layers[l + 1]);
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    std::vector<double> w(m.layers[l] * m.layers[l + 1]);
    for (auto& x : w) x = dist(rng);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(m.layers[l + 1], 0.0);
  }
  m.validate();
  return m;
}

std::vector<double> forward_batch(const EstimatorModel& model, std::span<const double> input, std::size_t batch,
                                  ForwardCache* cache, Exec exec) {
  if (input.size() != batch * model.input_width())
    throw ValidationError("forward: input has " + std::to_string(input.size()) + " values, expected " +
                          std::to_string(batch * model.input_width()));
  const std::size_t nl = model.weights.size();
  std::vector<std::vector<double>> acts(nl + 1);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t n_in = model.layers[l], n_out = model.layers[l + 1];
    acts[l + 1].resize(batch * n_out);
    kernels::dense_forward(acts[l], model.weights[l], model.biases[l], acts[l + 1], batch, n_in, n_out, exec);
    if (l + 1 < nl) {
      if (model.activation == Activation::tanh)
        kernels::tanh_forward(acts[l + 1], exec);
      else
        kernels::relu_forward(acts[l + 1], exec);
    }
  }
  std::vector<double> out = acts[nl];
  for (auto& v : out) v = std::clamp(v, EstimatorModel::output_min, EstimatorModel::output_max);
  if (cache) {
    cache->batch = batch;
    cache->activations = std::move(acts);
    cache->output = out;
  }
  return out;
}

std::vector<double> forward(const EstimatorModel& model, std::span<const double> input, Exec exec) {
  return forward_batch(model, input, 1, nullptr, exec);
}

void backward_batch(const EstimatorModel& model, const ForwardCache& cache, std::span<const double> grad_output,
                    ModelGradients& grads, Exec exec) {
  const std::size_t nl = model.weights.size();
  const std::size_t batch = cache.batch;
  if (grad_output.size() != batch * model.output_width()) throw ValidationError("backward: gradient size mismatch");
  grads.weights.resize(nl);
  grads.biases.resize(nl);

  const auto& pre = cache.activations[nl];
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double z = pre[i], g = delta[i];
    const bool below = z < EstimatorModel::output_min, above = z > EstimatorModel::output_max;
    if ((below && g > 0.0) || (above && g < 0.0)) delta[i] = 0.0;
  }

  for (std::size_t l = nl; l-- > 0;) {
    const std::size_t n_in = model.layers[l], n_out = model.layers[l + 1];
    grads.weights[l].resize(n_in * n_out);
    grads.biases[l].resize(n_out);
    kernels::dense_backward_params(cache.activations[l], delta, grads.weights[l], grads.biases[l], batch, n_in,
                                   n_out, exec);
    if (l == 0) break;
    std::vector<double> din(batch * n_in);
    kernels::dense_backward_input(model.weights[l], delta, din, batch, n_in, n_out, exec);
    if (model.activation == Activation::tanh)
      kernels::tanh_backward(cache.activations[l], din, exec);
    else
      kernels::relu_backward(cache.activations[l], din, exec);
    delta = std::move(din);
  }
}

namespace {

void write_f64(std::ofstream& out, const std::vector<double>& v) {
  std::vector<std::uint64_t> buf(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t b = std::bit_cast<std::uint64_t>(v[i]);
    if constexpr (std::endian::native == std::endian::big) b = __builtin_bswap64(b);
    buf[i] = b;
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
}

void read_f64(std::ifstream& in, std::vector<double>& v) {
  std::vector<std::uint64_t> buf(v.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t b = buf[i];
    if constexpr (std::endian::native == std::endian::big) b = __builtin_bswap64(b);
    v[i] = std::bit_cast<double>(b);
  }
}

} // namespace

void save_model(const EstimatorModel& model, const std::string& stem) {
  model.validate();
  nlohmann::json j;
  j["format"] = "aid-dti-estimator";
  j["dtype"] = "f64le";
  j["layers"] = model.layers;
  j["activation"] = activation_name(model.activation);
  j["patch"] = model.patch;
  j["in_channels"] = model.in_channels;
  j["out_channels"] = model.out_channels;
  j["output_clamp"] = {EstimatorModel::output_min, EstimatorModel::output_max};
  j["lambda"] = model.lambda;
  j["seed"] = model.seed;
  j["epochs_trained"] = model.epochs_trained;
  std::ofstream h(stem + ".model.json", std::ios::trunc);
  if (!h) throw IoError("cannot write " + stem + ".model.json");
  h << j.dump(2) << '\n';

  std::ofstream w(stem + ".weights", std::ios::binary | std::ios::trunc);
  if (!w) throw IoError("cannot write " + stem + ".weights");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    write_f64(w, model.weights[l]);
    write_f64(w, model.biases[l]);
  }
  if (!w) throw IoError("write failed: " + stem + ".weights");
}

EstimatorModel load_model(const std::string& stem) {
  std::ifstream h(stem + ".model.json");
  if (!h) throw IoError("cannot open checkpoint " + stem + ".model.json");
  EstimatorModel m;
  try {
    nlohmann::json j;
    h >> j;
    if (j.at("format") != "aid-dti-estimator" || j.at("dtype") != "f64le")
      throw FormatError(stem + ".model.json: not an estimator checkpoint");
    m.layers = j.at("layers").get<std::vector<std::size_t>>();
    m.activation = parse_activation(j.at("activation").get<std::string>());
    m.patch = j.at("patch").get<std::size_t>();
    m.in_channels = j.at("in_channels").get<std::size_t>();
    m.out_channels = j.at("out_channels").get<std::size_t>();
    m.lambda = j.at("lambda").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epochs_trained = j.at("epochs_trained").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem + ".model.json: " + e.what());
  }
  if (m.layers.size() < 2) throw FormatError(stem + ".model.json: needs at least two layer widths");

  std::uintmax_t expected = 0;
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) expected += (m.layers[l] * m.layers[l + 1] + m.layers[l + 1]) * 8;
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(stem + ".weights", ec);
  if (ec) throw IoError("cannot open checkpoint " + stem + ".weights");
  if (bytes != expected)
    throw FormatError(stem + ".weights: " + std::to_string(bytes) + " bytes, architecture implies " +
                      std::to_string(expected));
  std::ifstream w(stem + ".weights", std::ios::binary);
  for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
    m.weights.emplace_back(m.layers[l] * m.layers[l + 1]);
    m.biases.emplace_back(m.layers[l + 1]);
    read_f64(w, m.weights.back());
    read_f64(w, m.biases.back());
  }
  if (!w) throw FormatError(stem + ".weights: short read");
  m.validate();
  return m;
}

} // namespace aid_dti
