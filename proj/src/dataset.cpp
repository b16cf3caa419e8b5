#include "aid_dti/dataset.hpp"

#include "aid_dti/dti.hpp"
#include "aid_dti/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace aid_dti {

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + name + "' (train|val|test)");
}

const char* split_name(Split s) {
  switch (s) {
  case Split::train: return "train";
  case Split::val: return "val";
  case Split::test: return "test";
  }
  return "?";
}

const SliceRange& Dataset::range(Split s) const {
  switch (s) {
  case Split::train: return train;
  case Split::val: return val;
  case Split::test: return test;
  }
  return train;
}

Dataset make_dataset(const TensorField& field, const GradientTable& gtab, const NoiseConfig& noise,
                     const DatasetOptions& opts) {
  if (!gtab.is_six_direction_protocol())
    throw ValidationError("dataset needs the 7-channel protocol (one b=0 plus six b=1000 directions)");
  double total = 0.0;
  for (double f : opts.split) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  if (!(opts.input_clip > 0.0)) throw ValidationError("input_clip must be positive");

  Dataset ds;
  ds.sigma = noise.sigma;
  ds.noise_seed = noise.seed;

  const Volume3D noisy = add_rician(simulate_dwi(field, gtab), noise);
  const std::size_t b0 = gtab.b0_indices().front();
  ds.inputs = noisy;
  {
    auto data = ds.inputs.data();
    const std::size_t nc = ds.inputs.dims().c;
    for (std::size_t v = 0; v < ds.inputs.dims().voxels(); ++v) {
      float* s = data.data() + v * nc;
      const double denom = std::max(static_cast<double>(s[b0]), 1e-6);
      for (std::size_t c = 0; c < nc; ++c)
        s[c] = static_cast<float>(std::clamp(static_cast<double>(s[c]) / denom, 0.0, opts.input_clip));
    }
  }
  ds.inputs.attributes()["normalisation"] = "divided by b0 (floor 1e-6), clipped to [0, input_clip]";
  ds.inputs.attributes()["bvals"] = gtab.bvals_text();
  ds.inputs.attributes()["bvecs"] = gtab.bvecs_text();

  const Volume3D metrics = compute_metrics(field);
  std::array<double, 3> peak{0.0, 0.0, 0.0};
  auto m = metrics.data();
  for (std::size_t v = 0; v < metrics.dims().voxels(); ++v)
    for (int c = 0; c < 3; ++c) peak[c] = std::max(peak[c], static_cast<double>(m[v * 3 + c]));
  ds.target_scale = {1.0, peak[1] > 0.0 ? 1.0 / peak[1] : 1.0, peak[2] > 0.0 ? 1.0 / peak[2] : 1.0};

  ds.targets = metrics;
  auto t = ds.targets.data();
  for (std::size_t v = 0; v < metrics.dims().voxels(); ++v)
    for (int c = 0; c < 3; ++c)
      t[v * 3 + c] = static_cast<float>(std::clamp(m[v * 3 + c] * ds.target_scale[c], 0.0, 1.0));

  const std::size_t nz = field.dims.z;
  const auto n_train = static_cast<std::size_t>(std::lround(opts.split[0] * static_cast<double>(nz)));
  const auto n_val = std::min(nz - n_train, static_cast<std::size_t>(std::lround(opts.split[1] * static_cast<double>(nz))));
  ds.train = {0, n_train};
  ds.val = {n_train, n_train + n_val};
  ds.test = {n_train + n_val, nz};
  return ds;
}

namespace {

nlohmann::json range_json(const SliceRange& r) { return {r.begin, r.end}; }

SliceRange range_from(const nlohmann::json& j) {
  auto v = j.get<std::vector<std::size_t>>();
  if (v.size() != 2 || v[0] > v[1]) throw FormatError("dataset: bad slice range");
  return {v[0], v[1]};
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& stem) {
  save_volume(ds.inputs, stem + "_inputs");
  save_volume(ds.targets, stem + "_targets");
  nlohmann::json j;
  j["format"] = "aid-dti-dataset";
  j["target_scale"] = ds.target_scale;
  j["split"] = {{"train", range_json(ds.train)}, {"val", range_json(ds.val)}, {"test", range_json(ds.test)}};
  j["sigma"] = ds.sigma;
  j["noise_seed"] = ds.noise_seed;
  std::ofstream out(stem + ".dataset.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + stem + ".dataset.json");
  out << j.dump(2) << '\n';
}

Dataset load_dataset(const std::string& stem) {
  std::ifstream in(stem + ".dataset.json");
  if (!in) throw IoError("cannot open " + stem + ".dataset.json");
  Dataset ds;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format") != "aid-dti-dataset") throw FormatError(stem + ".dataset.json: wrong format tag");
    ds.target_scale = j.at("target_scale").get<std::array<double, 3>>();
    ds.train = range_from(j.at("split").at("train"));
    ds.val = range_from(j.at("split").at("val"));
    ds.test = range_from(j.at("split").at("test"));
    ds.sigma = j.at("sigma").get<double>();
    ds.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem + ".dataset.json: " + e.what());
  }
  ds.inputs = load_volume(stem + "_inputs");
  ds.targets = load_volume(stem + "_targets");
  const Dims a = ds.inputs.dims(), b = ds.targets.dims();
  if (a.x != b.x || a.y != b.y || a.z != b.z || a.c != 7 || b.c != 3)
    throw FormatError("dataset: inputs must be 7-channel and targets 3-channel on the same grid");
  if (ds.test.end != a.z) throw FormatError("dataset: split does not cover the volume");
  return ds;
}

Volume3D unscale_targets(const Volume3D& scaled, const std::array<double, 3>& scale) {
  if (scaled.dims().c != 3) throw ValidationError("unscale_targets: expected 3 channels");
  Volume3D out = scaled;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(d[i] / scale[i % 3]);
  return out;
}

std::vector<double> extract_patch(const Volume3D& v, const PatchOrigin& o, std::size_t patch) {
  const Dims& d = v.dims();
  if (o.x + patch > d.x || o.y + patch > d.y || o.z >= d.z) throw ValidationError("patch outside volume");
  std::vector<double> out(patch * patch * d.c);
  for (std::size_t y = 0; y < patch; ++y)
    for (std::size_t x = 0; x < patch; ++x)
      for (std::size_t c = 0; c < d.c; ++c) out[(y * patch + x) * d.c + c] = v.at(o.x + x, o.y + y, o.z, c);
  return out;
}

void write_patch(Volume3D& v, const PatchOrigin& o, std::size_t patch, const std::vector<double>& values) {
  const Dims& d = v.dims();
  if (o.x + patch > d.x || o.y + patch > d.y || o.z >= d.z) throw ValidationError("patch outside volume");
  if (values.size() != patch * patch * d.c) throw ValidationError("patch size mismatch");
  for (std::size_t y = 0; y < patch; ++y)
    for (std::size_t x = 0; x < patch; ++x)
      for (std::size_t c = 0; c < d.c; ++c)
        v.at(o.x + x, o.y + y, o.z, c) = static_cast<float>(values[(y * patch + x) * d.c + c]);
}

namespace {

std::vector<std::size_t> axis_positions(std::size_t extent, std::size_t patch, std::size_t stride) {
  std::vector<std::size_t> out;
  if (patch > extent) return out;
  for (std::size_t p = 0; p + patch <= extent; p += stride) out.push_back(p);
  if (out.back() + patch < extent) out.push_back(extent - patch);
  return out;
}

} // namespace

std::vector<PatchOrigin> strided_origins(const Dims& dims, const SliceRange& range, std::size_t patch,
                                         std::size_t stride) {
  if (patch == 0 || stride == 0) throw ValidationError("patch and stride must be positive");
  std::vector<PatchOrigin> out;
  const auto xs = axis_positions(dims.x, patch, stride);
  const auto ys = axis_positions(dims.y, patch, stride);
  for (std::size_t z = range.begin; z < range.end; ++z)
    for (auto y : ys)
      for (auto x : xs) out.push_back({x, y, z});
  return out;
}

std::vector<PatchOrigin> tile_origins(const Dims& dims, const SliceRange& range, std::size_t patch) {
  if (patch == 0) throw ValidationError("patch must be positive");
  std::vector<PatchOrigin> out;
  for (std::size_t z = range.begin; z < range.end; ++z)
    for (std::size_t y = 0; y + patch <= dims.y; y += patch)
      for (std::size_t x = 0; x + patch <= dims.x; x += patch) out.push_back({x, y, z});
  return out;
}

} // namespace aid_dti
