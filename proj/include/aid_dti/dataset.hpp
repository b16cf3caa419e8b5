#pragma once

#include "aid_dti/gradient_table.hpp"
#include "aid_dti/noise.hpp"
#include "aid_dti/tensor.hpp"
#include "aid_dti/volume.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace aid_dti {

enum class Split { train, val, test };

Split parse_split(const std::string& name);
const char* split_name(Split s);

/// Half-open range of z-slices.
struct SliceRange {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const SliceRange&) const = default;
};

struct DatasetOptions {
  std::array<double, 3> split{0.625, 0.1875, 0.1875}; // train, val, test
  /// Upper bound applied to b0-normalised inputs. Background voxels have a
  /// pure-noise b0, so their ratios are otherwise unbounded.
  double input_clip = 2.0;
};

/// Paired network inputs (7 channels, b0-normalised noisy DWI) and targets
/// (FA, MD, AD of the noise-free field, each scaled into [0, 1]).
struct Dataset {
  Volume3D inputs;
  Volume3D targets;
  /// target = physical value * target_scale[c].
  std::array<double, 3> target_scale{1.0, 1.0, 1.0};
  SliceRange train, val, test;
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;

  const SliceRange& range(Split s) const;
};

/// Splits are contiguous z-slabs in train/val/test order.
Dataset make_dataset(const TensorField& field, const GradientTable& gtab, const NoiseConfig& noise,
                     const DatasetOptions& opts = {});

/// Writes `<stem>_inputs.*`, `<stem>_targets.*` and `<stem>.dataset.json`.
void save_dataset(const Dataset& ds, const std::string& stem);
Dataset load_dataset(const std::string& stem);

/// Physical-unit metrics volume from a scaled target/prediction volume.
Volume3D unscale_targets(const Volume3D& scaled, const std::array<double, 3>& scale);

struct PatchOrigin {
  std::size_t x = 0, y = 0, z = 0;
};

/// Row-major (y, x) patch with channels last: index ((y*P + x)*C + c).
std::vector<double> extract_patch(const Volume3D& v, const PatchOrigin& o, std::size_t patch);
void write_patch(Volume3D& v, const PatchOrigin& o, std::size_t patch, const std::vector<double>& values);

/// Patch origins on a regular grid over the slices in `range`. The last
/// origin along each axis is pulled back so the grid reaches the border.
std::vector<PatchOrigin> strided_origins(const Dims& dims, const SliceRange& range, std::size_t patch,
                                         std::size_t stride);

/// Non-overlapping tiling; voxels beyond the last full tile are not covered.
std::vector<PatchOrigin> tile_origins(const Dims& dims, const SliceRange& range, std::size_t patch);

} // namespace aid_dti
