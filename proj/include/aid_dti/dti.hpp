#pragma once

#include "aid_dti/exec.hpp"
#include "aid_dti/gradient_table.hpp"
#include "aid_dti/tensor.hpp"
#include "aid_dti/volume.hpp"

#include <Eigen/Core>

namespace aid_dti {

/// Log-linear DTI design: one row b*(gx^2, gy^2, gz^2, 2gxgy, 2gxgz, 2gygz)
/// per b > 0 entry, in gradient-table order.
Eigen::MatrixXd design_matrix(const GradientTable& gtab);

/// S_i = s0 * exp(-b_i g_i^T D g_i); b=0 entries return s0 exactly.
Eigen::VectorXd predict_signal(const Eigen::Matrix3d& tensor, double s0, const GradientTable& gtab);

/// Noise-free DWI volume (C = gtab.size()) for every voxel of `field`.
Volume3D simulate_dwi(const TensorField& field, const GradientTable& gtab, Exec exec = Exec::parallel);

/// Ordinary least squares on -ln(S/S0), with S0 the mean of the b=0 channels.
///
/// Voxels with any signal <= 0 are marked invalid and left at zero. Throws
/// ConfigError if the design matrix is rank deficient.
TensorField fit_tensor_ols(const Volume3D& dwi, const GradientTable& gtab, Exec exec = Exec::parallel);

struct DtiMetrics {
  double fa = 0, md = 0, ad = 0;
};

/// FA uses eigenvalues clamped at zero; MD and AD use them as given.
DtiMetrics metrics_from_eigenvalues(const Eigen::Vector3d& lambda);
DtiMetrics tensor_metrics(const Eigen::Matrix3d& tensor);

/// Three-channel volume (FA, MD, AD) in physical units.
Volume3D compute_metrics(const TensorField& field, Exec exec = Exec::parallel);

} // namespace aid_dti
