#pragma once

#include "aid_dti/volume.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace aid_dti {

/// Six unique components of a symmetric 3x3 diffusion tensor, mm^2/s.
struct TensorComponents {
  double dxx = 0, dyy = 0, dzz = 0, dxy = 0, dxz = 0, dyz = 0;

  Eigen::Matrix3d matrix() const;
  static TensorComponents from_matrix(const Eigen::Matrix3d& m);
};

/// Per-voxel diffusion tensor plus the unweighted signal S0.
struct TensorField {
  Dims dims; // c is ignored
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  std::vector<TensorComponents> tensors;
  std::vector<double> s0;
  /// 0 where a fit was not possible (non-positive signal); tensor is zero there.
  std::vector<std::uint8_t> valid;

  TensorField() = default;
  TensorField(std::size_t x, std::size_t y, std::size_t z);

  std::size_t voxels() const { return tensors.size(); }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * dims.y + y) * dims.x + x;
  }
};

/// Channels Dxx, Dyy, Dzz, Dxy, Dxz, Dyz, S0.
Volume3D tensor_field_to_volume(const TensorField& f);
TensorField tensor_field_from_volume(const Volume3D& v);

/// Eigenvalues (descending) and matching orthonormal eigenvectors.
struct EigenSystem {
  Eigen::Vector3d values;  // lambda1 >= lambda2 >= lambda3
  Eigen::Matrix3d vectors; // column i belongs to values[i]
};

/// Closed-form (trigonometric) solver with a cyclic Jacobi fallback for
/// near-degenerate spectra. Only the upper triangle of `m` is read.
EigenSystem eig_symmetric3(const Eigen::Matrix3d& m);

/// Cyclic Jacobi iteration; exposed for tests.
EigenSystem eig_symmetric3_jacobi(const Eigen::Matrix3d& m);

} // namespace aid_dti
