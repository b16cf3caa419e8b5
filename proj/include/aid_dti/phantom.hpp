#pragma once

#include "aid_dti/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace aid_dti {

/// Tube of constant radius around a Catmull-Rom curve through the control
/// points (voxel coordinates).
struct BundleSpec {
  std::vector<Eigen::Vector3d> control_points;
  double radius = 3.0; // voxels
};

struct PhantomConfig {
  std::array<std::size_t, 3> dims{64, 64, 16};
  std::array<double, 3> voxel_size{1.25, 1.25, 1.25};
  double background_md = 0.7e-3; // mm^2/s
  /// Relative per-voxel jitter of the background diffusivity (isotropic, so FA stays 0).
  double background_jitter = 0.05;
  double axial = 1.7e-3;  // mm^2/s
  double radial = 0.3e-3; // mm^2/s
  double s0 = 1.0;
  /// Semi-axes of the ellipsoidal tissue mask as fractions of each dimension.
  std::array<double, 3> mask_semi_axes{0.46, 0.47, 0.65};
  std::vector<BundleSpec> bundles;
  std::uint64_t seed = 42;

  /// Throws ValidationError when an invariant is violated.
  void validate() const;
};

/// 64x64x16 with three curved, partly crossing bundles.
PhantomConfig default_phantom_config();

/// Parses `key = value` lines. Lines starting with '#' are comments. Keys:
/// dims, voxel_size, background_md, background_jitter, axial, radial, s0,
/// mask_semi_axes, seed, and repeated `bundle = r; x,y,z; x,y,z; ...` lines.
/// Keys that are absent keep the value from default_phantom_config(); a
/// `bundles = none` line clears the default bundles.
PhantomConfig parse_phantom_config(const std::string& text);
PhantomConfig load_phantom_config(const std::string& path);
std::string format_phantom_config(const PhantomConfig& cfg);

/// Deterministic tensor field for `cfg`. Bundle voxels carry the axial
/// diffusivity along the local curve tangent; overlapping bundles average
/// their tensors. Outside the ellipsoidal mask both tensor and S0 are zero.
TensorField generate_phantom(const PhantomConfig& cfg);

/// True where the phantom has tissue (S0 > 0).
std::vector<std::uint8_t> tissue_mask(const TensorField& field);

} // namespace aid_dti
