#include "aid_dti/tensor.hpp"

#include "aid_dti/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aid_dti {

Eigen::Matrix3d TensorComponents::matrix() const {
  Eigen::Matrix3d m;
  m << dxx, dxy, dxz, dxy, dyy, dyz, dxz, dyz, dzz;
  return m;
}

TensorComponents TensorComponents::from_matrix(const Eigen::Matrix3d& m) {
  return {m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2)};
}

TensorField::TensorField(std::size_t x, std::size_t y, std::size_t z)
    : dims{x, y, z, 1}, tensors(x * y * z), s0(x * y * z, 0.0), valid(x * y * z, 1) {}

Volume3D tensor_field_to_volume(const TensorField& f) {
  Volume3D v({f.dims.x, f.dims.y, f.dims.z, 7}, {"Dxx", "Dyy", "Dzz", "Dxy", "Dxz", "Dyz", "S0"},
             f.voxel_size);
  auto out = v.data();
  for (std::size_t i = 0; i < f.voxels(); ++i) {
    const auto& t = f.tensors[i];
    const double vals[7] = {t.dxx, t.dyy, t.dzz, t.dxy, t.dxz, t.dyz, f.s0[i]};
    for (int c = 0; c < 7; ++c) out[i * 7 + c] = static_cast<float>(vals[c]);
  }
  return v;
}

TensorField tensor_field_from_volume(const Volume3D& v) {
  const Dims& d = v.dims();
  if (d.c != 7) throw ValidationError("tensor volume must have 7 channels, found " + std::to_string(d.c));
  TensorField f(d.x, d.y, d.z);
  f.voxel_size = v.voxel_size();
  auto in = v.data();
  for (std::size_t i = 0; i < f.voxels(); ++i) {
    const float* p = in.data() + i * 7;
    f.tensors[i] = {p[0], p[1], p[2], p[3], p[4], p[5]};
    f.s0[i] = p[6];
    if (f.s0[i] < 0.0) throw ValidationError("tensor volume has negative S0");
  }
  return f;
}

namespace {

EigenSystem sorted(Eigen::Vector3d values, Eigen::Matrix3d vectors) {
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
  EigenSystem es;
  for (int i = 0; i < 3; ++i) {
    es.values[i] = values[order[i]];
    es.vectors.col(i) = vectors.col(order[i]);
  }
  return es;
}

// Null vector of the rank-2 matrix (b - lambda I) as the largest cross
// product of its rows. Returns a zero vector when the rank is below 2.
Eigen::Vector3d null_vector(const Eigen::Matrix3d& b, double lambda) {
  Eigen::Matrix3d k = b - lambda * Eigen::Matrix3d::Identity();
  const Eigen::Vector3d r0 = k.row(0), r1 = k.row(1), r2 = k.row(2);
  Eigen::Vector3d c[3] = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (c[i].squaredNorm() > c[best].squaredNorm()) best = i;
  const double n = c[best].norm();
  if (n < 1e-10) return Eigen::Vector3d::Zero();
  return c[best] / n;
}

bool acceptable(const Eigen::Matrix3d& b, const Eigen::Vector3d& values, const Eigen::Matrix3d& vecs) {
  const Eigen::Matrix3d gram = vecs.transpose() * vecs - Eigen::Matrix3d::Identity();
  if (gram.cwiseAbs().maxCoeff() > 1e-12) return false;
  const Eigen::Matrix3d back = vecs * values.asDiagonal() * vecs.transpose();
  return (back - b).cwiseAbs().maxCoeff() <= 1e-12;
}

} // namespace

EigenSystem eig_symmetric3_jacobi(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d a = m.selfadjointView<Eigen::Upper>();
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off <= 1e-40 * a.squaredNorm()) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        a(p, q) = a(q, p) = 0.0;
        v = v * rot;
      }
    }
  }
  return sorted(a.diagonal(), v);
}

EigenSystem eig_symmetric3(const Eigen::Matrix3d& m) {
  const Eigen::Matrix3d sym = m.selfadjointView<Eigen::Upper>();
  const double scale = sym.cwiseAbs().maxCoeff();
  if (scale == 0.0) return {Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity()};
  if (!std::isfinite(scale)) throw ValidationError("eig_symmetric3: non-finite tensor");

  const Eigen::Matrix3d b = sym / scale;
  const double mean = b.trace() / 3.0;
  const Eigen::Matrix3d k = b - mean * Eigen::Matrix3d::Identity();
  const double p = std::sqrt((k * k).trace() / 6.0);
  if (p < 1e-14) return {Eigen::Vector3d::Constant(mean * scale), Eigen::Matrix3d::Identity()};

  const double r = std::clamp(k.determinant() / (2.0 * p * p * p), -1.0, 1.0);
  // r = +-1 means a repeated root; the cross-product eigenvectors are then
  // ill-defined and the iterative solver takes over.
  if (1.0 - std::abs(r) < 1e-12) return eig_symmetric3_jacobi(m);

  const double phi = std::acos(r) / 3.0;
  const double l1 = mean + 2.0 * p * std::cos(phi);
  const double l3 = mean + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double l2 = 3.0 * mean - l1 - l3;

  Eigen::Vector3d v1 = null_vector(b, l1);
  Eigen::Vector3d v3 = null_vector(b, l3);
  if (v1.isZero() || v3.isZero()) return eig_symmetric3_jacobi(m);
  // Orthogonalise the eigenvector whose eigenvalue sits closer to the middle one.
  if (l1 - l2 < l2 - l3) {
    v1 -= v1.dot(v3) * v3;
    v1.normalize();
  } else {
    v3 -= v3.dot(v1) * v1;
    v3.normalize();
  }
  Eigen::Vector3d v2 = v3.cross(v1);
  v2.normalize();

  Eigen::Matrix3d vecs;
  vecs << v1, v2, v3;
  const Eigen::Vector3d values(l1, l2, l3);
  if (!acceptable(b, values, vecs)) return eig_symmetric3_jacobi(m);
  return {values * scale, vecs};
}

} // namespace aid_dti
