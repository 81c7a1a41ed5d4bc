#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

#include "hclors/error.hpp"

namespace hclors {

// Thin SVD of an n x q matrix, truncated to the numerical rank:
// singular values below 1e-12 * d_max are dropped together with their
// vectors, so U is n x r, V is q x r.
struct SvdFactors {
  Eigen::MatrixXd U;
  Eigen::VectorXd d;  // non-increasing, all > 0 after truncation
  Eigen::MatrixXd V;
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& W, const char* who) {
  if (!W.allFinite()) fail(ErrorKind::non_finite_input, who);
}

}  // namespace detail

inline SvdFactors svd(const Eigen::MatrixXd& W) {
  detail::require_finite(W, "svd: matrix has NaN or infinite entries");
  Eigen::BDCSVD<Eigen::MatrixXd> solver(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& d = solver.singularValues();
  const double cutoff = d.size() > 0 ? 1e-12 * d(0) : 0.0;
  Eigen::Index rank = 0;
  while (rank < d.size() && d(rank) > cutoff) ++rank;
  SvdFactors out;
  out.U = solver.matrixU().leftCols(rank);
  out.d = d.head(rank);
  out.V = solver.matrixV().leftCols(rank);
  return out;
}

// Singular-value soft-thresholding S_lambda(W): shrink every singular
// value by lambda and clamp at zero. This is the exact minimizer of
//   (1/2) * ||W - Z||_F^2 + lambda * ||Z||_*.
struct SvtResult {
  Eigen::MatrixXd Z;
  double nuclear_norm = 0.0;  // ||Z||_*, i.e. sum of the shrunk values
  int rank = 0;
};

// Works through the Gram matrix on the smaller side: with W = U D V^T,
// W^T W = V D^2 V^T, and
//   S_lambda(W) = W V diag(g) V^T,   g_i = (d_i - lambda)_+ / d_i,
// which never forms U and costs one symmetric eigen-decomposition of
// the min(n,q)-sized Gram matrix. g in [0,1] keeps the evaluation
// stable even for tiny singular values.
inline SvtResult soft_threshold_svd_full(const Eigen::MatrixXd& W, double lambda) {
  detail::require_finite(W, "soft_threshold_svd: matrix has NaN or infinite entries");
  if (!(lambda >= 0.0)) {
    fail(ErrorKind::invalid_argument, "soft_threshold_svd: lambda must be non-negative");
  }

  const bool gram_right = W.cols() <= W.rows();
  const Eigen::MatrixXd gram =
      gram_right ? Eigen::MatrixXd(W.transpose() * W) : Eigen::MatrixXd(W * W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& eigenvalues = eig.eigenvalues();  // ascending
  const Eigen::Index m = eigenvalues.size();

  SvtResult out;
  Eigen::VectorXd shrink(m);
  Eigen::Index kept = 0;
  for (Eigen::Index i = m - 1; i >= 0; --i) {  // descending by singular value
    const double d = std::sqrt(std::max(0.0, eigenvalues(i)));
    if (d <= lambda) break;
    shrink(kept) = (d - lambda) / d;
    out.nuclear_norm += d - lambda;
    ++kept;
  }
  out.rank = static_cast<int>(kept);
  if (kept == 0) {
    out.Z = Eigen::MatrixXd::Zero(W.rows(), W.cols());
    return out;
  }
  if (lambda == 0.0) {
    // Identity case: every g_i = 1 and the projector spans the full
    // row (or column) space, so return W without reassembly.
    out.Z = W;
    return out;
  }

  Eigen::MatrixXd basis(m, kept);
  for (Eigen::Index k = 0; k < kept; ++k) basis.col(k) = eig.eigenvectors().col(m - 1 - k);
  const auto g = shrink.head(kept).asDiagonal();
  if (gram_right) {
    out.Z = (W * basis) * g * basis.transpose();
  } else {
    out.Z = basis * g * (basis.transpose() * W);
  }
  return out;
}

inline Eigen::MatrixXd soft_threshold_svd(const Eigen::MatrixXd& W, double lambda) {
  return soft_threshold_svd_full(W, lambda).Z;
}

// Sum of singular values via the Gram spectrum on the smaller side.
inline double nuclear_norm(const Eigen::MatrixXd& W) {
  detail::require_finite(W, "nuclear_norm: matrix has NaN or infinite entries");
  const bool gram_right = W.cols() <= W.rows();
  const Eigen::MatrixXd gram =
      gram_right ? Eigen::MatrixXd(W.transpose() * W) : Eigen::MatrixXd(W * W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  double total = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    total += std::sqrt(std::max(0.0, eig.eigenvalues()(i)));
  }
  return total;
}

}  // namespace hclors
