#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/parallel.hpp"
#include "hclors/svt.hpp"

namespace hclors {

// One SNP's confounder-corrected marginal fit. The model is
//   Y = x beta + 1 mu + L + noise
// solved as  min (1/2)||Y - x beta - 1 mu - L||_F^2 + lambda ||L||_*
// by alternating an exact L update (singular-value soft-thresholding
// at lambda; the 1/2 on the loss keeps the threshold equal to lambda)
// with per-gene least squares for (beta, mu).
struct SnpFit {
  Eigen::RowVectorXd beta;  // 1 x q
  Eigen::RowVectorXd mu;    // 1 x q
  Eigen::MatrixXd L;        // n x q
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

struct MarginalFit {
  Eigen::MatrixXd beta_hat;  // p x q
  Eigen::MatrixXd mu_hat;    // p x q
  double lambda = 0.0;
  std::vector<int> iterations_per_snp;
  std::vector<std::uint8_t> converged;
};

inline SnpFit fit_one_snp(const Eigen::MatrixXd& Y, const Eigen::VectorXd& x, double lambda,
                          double tol = 1e-6, int max_iter = 100) {
  const Eigen::Index n = Y.rows();
  const Eigen::Index q = Y.cols();
  if (x.size() != n) {
    fail(ErrorKind::dimension_mismatch, "genotype vector has " + std::to_string(x.size()) +
                                            " samples, expression has " + std::to_string(n));
  }
  if (n < 3) fail(ErrorKind::invalid_argument, "marginal fit needs at least 3 samples");
  if (q < 1) fail(ErrorKind::empty_matrix, "expression matrix has no genes");
  if (!Y.allFinite() || !x.allFinite()) {
    fail(ErrorKind::non_finite_input, "marginal fit inputs must be finite");
  }
  if (!(lambda >= 0.0)) fail(ErrorKind::invalid_argument, "lambda must be non-negative");
  if (max_iter < 1) fail(ErrorKind::invalid_argument, "max_iter must be positive");

  const double x_mean = x.mean();
  const Eigen::VectorXd xc = x.array() - x_mean;
  const double sxx = xc.squaredNorm();
  if (sxx == 0.0) {
    fail(ErrorKind::degenerate_design, "genotype column is constant");
  }

  SnpFit fit;
  fit.beta = Eigen::RowVectorXd::Zero(q);
  fit.mu = Y.colwise().mean();
  fit.L = Eigen::MatrixXd::Zero(n, q);

  Eigen::MatrixXd W(n, q);
  W = Y;
  W.rowwise() -= fit.mu;
  double objective = 0.5 * W.squaredNorm();
  fit.objective_trace.push_back(objective);

  for (int iter = 1; iter <= max_iter; ++iter) {
    // exact minimizer in L given (beta, mu)
    W = Y;
    W.noalias() -= x * fit.beta;
    W.rowwise() -= fit.mu;
    const SvtResult svt = soft_threshold_svd_full(W, lambda);
    fit.L = svt.Z;

    // exact minimizer in (beta, mu) given L: per-gene simple
    // regression with intercept against the centered genotype
    const Eigen::MatrixXd R = Y - fit.L;
    fit.beta = (xc.transpose() * R) / sxx;
    fit.mu = R.colwise().mean() - fit.beta * x_mean;

    W = R;
    W.noalias() -= x * fit.beta;
    W.rowwise() -= fit.mu;
    const double previous = objective;
    objective = 0.5 * W.squaredNorm() + lambda * svt.nuclear_norm;
    fit.objective_trace.push_back(objective);
    fit.iterations = iter;
    if (std::abs(previous - objective) <= tol * (1.0 + std::abs(previous))) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

// Default screening penalty: the (k_cap + 1)-th singular value of the
// column-centered expression matrix, so the low-rank term retains at
// most k_cap directions on the warm start. When the matrix has rank
// at most k_cap the smallest positive singular value is used instead,
// which also blocks the degenerate lambda = 0 fit where L would
// swallow the whole residual.
inline double default_screen_lambda(const Eigen::MatrixXd& Y, int k_cap = 20) {
  if (k_cap < 1) fail(ErrorKind::invalid_argument, "k_cap must be positive");
  Eigen::MatrixXd Yc = Y;
  Yc.rowwise() -= Eigen::RowVectorXd(Y.colwise().mean());
  const SvdFactors f = svd(Yc);
  if (f.d.size() == 0) return 0.0;  // exactly centered-to-zero input
  // The hair of relative inflation keeps the cap honored by any
  // downstream thresholding even when singular values tie or two
  // algorithms round the borderline value differently.
  const double pick = k_cap < f.d.size() ? f.d(k_cap) : f.d(f.d.size() - 1);
  return pick * (1.0 + 1e-9);
}

// Row i of beta_hat is fit_one_snp against column i of X. Constant
// genotype columns are flagged (zero coefficients, converged = false)
// rather than fatal. Per-SNP fits are independent; the thread count
// never changes the result because each fit writes only its own row.
inline MarginalFit fit_all_snps(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, double lambda,
                                double tol = 1e-6, int max_iter = 100, int threads = 1) {
  const Eigen::Index n = Y.rows();
  const Eigen::Index p = X.cols();
  const Eigen::Index q = Y.cols();
  if (X.rows() != n) {
    fail(ErrorKind::dimension_mismatch, "genotype matrix has " + std::to_string(X.rows()) +
                                            " samples, expression has " + std::to_string(n));
  }
  if (p < 1) fail(ErrorKind::empty_matrix, "genotype matrix has no SNPs");
  if (!X.allFinite()) fail(ErrorKind::non_finite_input, "genotype matrix must be finite");

  MarginalFit out;
  out.lambda = lambda;
  out.beta_hat.resize(p, q);
  out.mu_hat.resize(p, q);
  out.iterations_per_snp.assign(static_cast<std::size_t>(p), 0);
  out.converged.assign(static_cast<std::size_t>(p), 0);
  const Eigen::RowVectorXd fallback_mu = Y.colwise().mean();

  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
    const Eigen::Index col = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = X.col(col);
    const double mean = x.mean();
    if ((x.array() - mean).abs().maxCoeff() == 0.0) {
      out.beta_hat.row(col).setZero();
      out.mu_hat.row(col) = fallback_mu;
      return;  // flagged: converged stays 0, iterations stay 0
    }
    const SnpFit fit = fit_one_snp(Y, x, lambda, tol, max_iter);
    out.beta_hat.row(col) = fit.beta;
    out.mu_hat.row(col) = fit.mu;
    out.iterations_per_snp[i] = fit.iterations;
    out.converged[i] = fit.converged ? 1 : 0;
  });
  return out;
}

}  // namespace hclors
