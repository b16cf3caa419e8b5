#include "aid_dti/dti.hpp"

#include "aid_dti/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace aid_dti {

Eigen::MatrixXd design_matrix(const GradientTable& gtab) {
  const auto dwi = gtab.dwi_indices();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(dwi.size()), 6);
  for (std::size_t r = 0; r < dwi.size(); ++r) {
    const auto& e = gtab[dwi[r]];
    const Eigen::Vector3d& g = e.direction;
    const auto row = static_cast<Eigen::Index>(r);
    a(row, 0) = e.b * g.x() * g.x();
    a(row, 1) = e.b * g.y() * g.y();
    a(row, 2) = e.b * g.z() * g.z();
    a(row, 3) = e.b * 2.0 * g.x() * g.y();
    a(row, 4) = e.b * 2.0 * g.x() * g.z();
    a(row, 5) = e.b * 2.0 * g.y() * g.z();
  }
  return a;
}

Eigen::VectorXd predict_signal(const Eigen::Matrix3d& tensor, double s0, const GradientTable& gtab) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(gtab.size()));
  for (std::size_t i = 0; i < gtab.size(); ++i) {
    const auto& e = gtab[i];
    const auto row = static_cast<Eigen::Index>(i);
    if (e.b == 0.0) {
      s(row) = s0;
      continue;
    }
    const double adc = e.direction.dot(tensor * e.direction);
    s(row) = s0 * std::exp(-e.b * adc);
  }
  return s;
}

Volume3D simulate_dwi(const TensorField& field, const GradientTable& gtab, Exec exec) {
  const std::size_t nc = gtab.size();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < nc; ++i)
    names.push_back(gtab[i].b == 0.0 ? "b0" : "dwi" + std::to_string(i));
  Volume3D out({field.dims.x, field.dims.y, field.dims.z, nc}, names, field.voxel_size);
  auto data = out.data();
  const auto n = static_cast<std::int64_t>(field.voxels());

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    const Eigen::VectorXd s = predict_signal(field.tensors[i].matrix(), field.s0[i], gtab);
    for (std::size_t c = 0; c < nc; ++c) data[i * nc + c] = static_cast<float>(s(static_cast<Eigen::Index>(c)));
  }
  return out;
}

TensorField fit_tensor_ols(const Volume3D& dwi, const GradientTable& gtab, Exec exec) {
  const Dims& d = dwi.dims();
  if (d.c != gtab.size())
    throw ValidationError("DWI has " + std::to_string(d.c) + " channels, gradient table has " +
                          std::to_string(gtab.size()) + " entries");
  const auto b0 = gtab.b0_indices();
  const auto dw = gtab.dwi_indices();
  if (b0.empty() || dw.size() < 6)
    throw ConfigError("tensor fit needs at least one b=0 and six b>0 volumes");

  const Eigen::MatrixXd a = design_matrix(gtab);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) throw ConfigError("design matrix is rank deficient; directions do not span a tensor");
  const Eigen::MatrixXd pinv = qr.solve(Eigen::MatrixXd::Identity(a.rows(), a.rows()));

  TensorField field(d.x, d.y, d.z);
  field.voxel_size = dwi.voxel_size();
  auto data = dwi.data();
  const auto n = static_cast<std::int64_t>(field.voxels());

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    const float* s = data.data() + i * d.c;
    double s0 = 0.0;
    bool ok = true;
    for (auto c : b0) {
      s0 += s[c];
      ok = ok && s[c] > 0.0f;
    }
    s0 /= static_cast<double>(b0.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(dw.size()));
    for (std::size_t r = 0; r < dw.size() && ok; ++r) {
      const double sig = s[dw[r]];
      ok = sig > 0.0;
      y(static_cast<Eigen::Index>(r)) = -std::log(sig / s0);
    }
    field.s0[i] = std::max(s0, 0.0);
    if (!ok) {
      field.valid[i] = 0;
      field.tensors[i] = {};
      continue;
    }
    const Eigen::Matrix<double, 6, 1> t = pinv * y;
    field.tensors[i] = {t(0), t(1), t(2), t(3), t(4), t(5)};
  }
  return field;
}

DtiMetrics metrics_from_eigenvalues(const Eigen::Vector3d& lambda) {
  DtiMetrics m;
  m.md = lambda.sum() / 3.0;
  m.ad = lambda.maxCoeff();
  const Eigen::Vector3d l = lambda.cwiseMax(0.0);
  const double norm2 = l.squaredNorm();
  if (norm2 < 1e-20) return m;
  const double mean = l.sum() / 3.0;
  const double dev2 = (l.array() - mean).square().sum();
  m.fa = std::min(1.0, std::sqrt(1.5) * std::sqrt(dev2) / std::sqrt(norm2));
  return m;
}

DtiMetrics tensor_metrics(const Eigen::Matrix3d& tensor) {
  return metrics_from_eigenvalues(eig_symmetric3(tensor).values);
}

Volume3D compute_metrics(const TensorField& field, Exec exec) {
  Volume3D out({field.dims.x, field.dims.y, field.dims.z, 3}, {"FA", "MD", "AD"}, field.voxel_size);
  auto data = out.data();
  const auto n = static_cast<std::int64_t>(field.voxels());

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::int64_t v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    const DtiMetrics m = tensor_metrics(field.tensors[i].matrix());
    data[i * 3 + 0] = static_cast<float>(m.fa);
    data[i * 3 + 1] = static_cast<float>(m.md);
    data[i * 3 + 2] = static_cast<float>(m.ad);
  }
  return out;
}

} // namespace aid_dti
