#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace aid_dti {

/// Thin SVD a = u * diag(sigma) * v^T with r = min(m, n).
///
/// Sign convention: the first non-negligible entry of each column of u is
/// positive, and the matching column of v follows it.
struct SvdFactors {
  Eigen::MatrixXd u;     // m x r, orthonormal columns
  Eigen::VectorXd sigma; // r, descending, >= 0
  Eigen::MatrixXd v;     // n x r, orthonormal columns

  Eigen::Index rank_bound() const { return sigma.size(); }
};

/// One-sided (Hestenes) Jacobi SVD in double precision.
/// Throws ValidationError on non-finite input, NumericError if the sweeps
/// fail to converge.
SvdFactors svd(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Singular values only; same algorithm as svd().
Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Rank-k reconstruction sum_{i<k} sigma_i u_i v_i^T, 1 <= k <= r.
Eigen::MatrixXd truncate(const SvdFactors& f, Eigen::Index k);

/// sum_k w_k u_k v_k^T: the adjoint of a -> sigma(a) applied to w, i.e. the
/// gradient of w . sigma(a). For repeated singular values this is one valid
/// subgradient.
Eigen::MatrixXd sv_sensitivity(const SvdFactors& f, const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Number of singular values above sigma_1 * max_dim * machine epsilon.
Eigen::Index numerical_rank(const SvdFactors& f, Eigen::Index max_dim);

struct RankSweepRow {
  Eigen::Index k = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Quality of the rank-k reconstruction of `noisy` against `clean`, for every k in `ks`.
/// Ranks above the numerical rank of `noisy` reuse the numerical-rank reconstruction.
std::vector<RankSweepRow> rank_sweep(const Eigen::Ref<const Eigen::MatrixXd>& clean,
                                     const Eigen::Ref<const Eigen::MatrixXd>& noisy,
                                     const std::vector<Eigen::Index>& ks);

/// CSV with header `k,psnr,ssim` and six decimals per value.
std::string rank_sweep_csv(const std::vector<RankSweepRow>& rows);

} // namespace aid_dti
