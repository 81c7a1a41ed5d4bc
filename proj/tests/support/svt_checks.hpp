#pragma once

#include <Eigen/Core>

#include "hclors/rng.hpp"
#include "hclors/svt.hpp"

// Shared between the module tests and the acceptance suite.
namespace testutil {

// Objective whose exact minimizer singular-value soft-thresholding
// must produce: (1/2) * ||W - Z||_F^2 + lambda * ||Z||_*.
//
// The nuclear norm here comes from hclors::nuclear_norm, whose
// spectrum is itself validated against the plain-loop Jacobi
// reference elsewhere; the perturbation check only needs the SAME
// norm on both sides of the comparison.
inline double svt_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Z, double lambda) {
  return 0.5 * (W - Z).squaredNorm() + lambda * hclors::nuclear_norm(Z);
}

// Verifies that no perturbed point beats the claimed minimizer.
// Directions are unit Frobenius norm, step 1e-3; strong convexity of
// the quadratic term makes the true margin >= step^2 / 2, far above
// the allowed numerical slack.
inline bool svt_perturbation_optimal(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Z,
                                     double lambda, int n_perturbations, hclors::Rng& rng,
                                     double* worst_margin = nullptr) {
  const double base = svt_objective(W, Z, lambda);
  const double slack = 1e-9 * std::max(1.0, base);
  const double step = 1e-3;
  bool ok = true;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_perturbations; ++k) {
    Eigen::MatrixXd P(W.rows(), W.cols());
    for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = rng.normal();
    P /= P.norm();
    const double margin = svt_objective(W, Z + step * P, lambda) - base;
    worst = std::min(worst, margin);
    if (margin < -slack) ok = false;
  }
  if (worst_margin != nullptr) *worst_margin = worst;
  return ok;
}

}  // namespace testutil
