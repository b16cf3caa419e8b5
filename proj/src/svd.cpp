#include "aid_dti/svd.hpp"

#include "aid_dti/error.hpp"
#include "aid_dti/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace aid_dti {

namespace {

constexpr int kMaxSweeps = 100;

// Orthogonalises the columns of w (m >= n) in place, accumulating the
// rotations into v. Columns whose squared norm is below `negligible` are
// roundoff and are left alone.
void hestenes_jacobi(Eigen::MatrixXd& w, Eigen::MatrixXd& v, double negligible) {
  const Eigen::Index m = w.rows(), n = w.cols();
  const double tol = std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(m));
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("Jacobi SVD did not converge in " + std::to_string(kMaxSweeps) + " sweeps");
}

// Extends the columns of u flagged in `missing` to an orthonormal set using
// the standard basis vector with the largest residual.
void complete_basis(Eigen::MatrixXd& u, const std::vector<bool>& missing) {
  const Eigen::Index m = u.rows(), r = u.cols();
  std::vector<Eigen::Index> have;
  for (Eigen::Index j = 0; j < r; ++j)
    if (!missing[static_cast<std::size_t>(j)]) have.push_back(j);
  for (Eigen::Index j = 0; j < r; ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    Eigen::VectorXd best;
    double best_norm = -1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(m, i);
      for (int pass = 0; pass < 2; ++pass)
        for (auto k : have) e -= u.col(k).dot(e) * u.col(k);
      const double nrm = e.norm();
      if (nrm > best_norm + 1e-12) {
        best_norm = nrm;
        best = e;
      }
    }
    u.col(j) = best / best_norm;
    have.push_back(j);
  }
}

SvdFactors svd_tall(const Eigen::MatrixXd& a) {
  const Eigen::Index m = a.rows(), n = a.cols();
  Eigen::MatrixXd w = a;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double floor = std::numeric_limits<double>::epsilon() * a.norm();
  hestenes_jacobi(w, v, floor * floor);

  Eigen::VectorXd norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = w.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SvdFactors f;
  f.u.resize(m, n);
  f.sigma.resize(n);
  f.v.resize(n, n);
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    f.sigma(j) = norms(src);
    f.v.col(j) = v.col(src);
    if (norms(src) > floor && norms(src) > 0.0) {
      f.u.col(j) = w.col(src) / norms(src);
    } else {
      f.u.col(j).setZero();
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(f.u, missing);
  return f;
}

void fix_signs(SvdFactors& f) {
  for (Eigen::Index j = 0; j < f.u.cols(); ++j) {
    for (Eigen::Index i = 0; i < f.u.rows(); ++i) {
      const double x = f.u(i, j);
      if (std::abs(x) <= 1e-12) continue;
      if (x < 0.0) {
        f.u.col(j) = -f.u.col(j);
        f.v.col(j) = -f.v.col(j);
      }
      break;
    }
  }
}

} // namespace

SvdFactors svd(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  if (a.rows() < 1 || a.cols() < 1) throw ValidationError("svd: empty matrix");
  if (!a.allFinite()) throw ValidationError("svd: non-finite input");
  SvdFactors f;
  if (a.rows() >= a.cols()) {
    f = svd_tall(a);
  } else {
    SvdFactors t = svd_tall(a.transpose());
    f.u = std::move(t.v);
    f.sigma = std::move(t.sigma);
    f.v = std::move(t.u);
  }
  fix_signs(f);
  return f;
}

Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a) { return svd(a).sigma; }

Eigen::MatrixXd truncate(const SvdFactors& f, Eigen::Index k) {
  if (k < 1 || k > f.rank_bound())
    throw ValidationError("truncate: rank " + std::to_string(k) + " outside [1, " + std::to_string(f.rank_bound()) + "]");
  return f.u.leftCols(k) * f.sigma.head(k).asDiagonal() * f.v.leftCols(k).transpose();
}

Eigen::MatrixXd sv_sensitivity(const SvdFactors& f, const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (weights.size() != f.rank_bound())
    throw ValidationError("sv_sensitivity: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(f.rank_bound()) + " singular values");
  return f.u * weights.asDiagonal() * f.v.transpose();
}

Eigen::Index numerical_rank(const SvdFactors& f, Eigen::Index max_dim) {
  if (f.sigma.size() == 0) return 0;
  const double tol = f.sigma(0) * static_cast<double>(max_dim) * std::numeric_limits<double>::epsilon();
  Eigen::Index r = 0;
  while (r < f.sigma.size() && f.sigma(r) > tol) ++r;
  return r;
}

std::vector<RankSweepRow> rank_sweep(const Eigen::Ref<const Eigen::MatrixXd>& clean,
                                     const Eigen::Ref<const Eigen::MatrixXd>& noisy,
                                     const std::vector<Eigen::Index>& ks) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols())
    throw ValidationError("rank_sweep: clean and noisy images differ in shape");
  const SvdFactors f = svd(noisy);
  const Eigen::Index nr = numerical_rank(f, std::max(noisy.rows(), noisy.cols()));
  std::vector<RankSweepRow> rows;
  for (auto k : ks) {
    if (k < 1 || k > f.sigma.size()) throw ValidationError("rank_sweep: rank out of range");
    // Components past the numerical rank are roundoff; adding them only perturbs the last bits.
    const Eigen::MatrixXd recon = truncate(f, std::max<Eigen::Index>(1, std::min(k, nr)));
    rows.push_back({k, psnr(clean, recon), ssim(clean, recon)});
  }
  return rows;
}

std::string rank_sweep_csv(const std::vector<RankSweepRow>& rows) {
  std::ostringstream out;
  out << "k,psnr,ssim\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f\n", static_cast<long long>(r.k), r.psnr, r.ssim);
    out << buf;
  }
  return out.str();
}

} // namespace aid_dti
