#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index m, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd a(m, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a;
}

inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, n, n));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  Eigen::Matrix3d q = random_orthogonal(rng, 3);
  if (q.determinant() < 0) q.col(0) = -q.col(0);
  return q;
}

/// Fresh empty directory under the system temp dir, unique per name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("aid_dti_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

} // namespace testutil
