#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "jacobi_eig.hpp"

// Independent alternating minimizer for
//   min ||Y - X B - 1 mu - L||_F^2 + rho ||B||_1 + lambda ||L||_*
// written with plain loops and the Jacobi-based shrinkage reference, so
// it can be started anywhere and shares nothing with the library path.
// The problem is jointly convex, so every start must land on the same
// objective value; the best of many random starts certifies it.
namespace oracle {

struct LorsState {
  Matrix B;                // r x q
  std::vector<double> mu;  // q
  Matrix L;                // n x q
};

inline double lors_objective(const Matrix& Y, const Matrix& X, const LorsState& state, double rho,
                             double lambda) {
  const std::size_t n = Y.size();
  const std::size_t q = n == 0 ? 0 : Y[0].size();
  const std::size_t r = state.B.size();
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < q; ++j) {
      double fitted = state.mu[j] + state.L[s][j];
      for (std::size_t k = 0; k < r; ++k) fitted += X[s][k] * state.B[k][j];
      const double gap = Y[s][j] - fitted;
      loss += gap * gap;
    }
  }
  double l1 = 0.0;
  for (const auto& row : state.B)
    for (const double v : row) l1 += std::abs(v);
  return loss + rho * l1 + lambda * nuclear_norm(state.L);
}

inline LorsState lors_descend(const Matrix& Y, const Matrix& X, double rho, double lambda,
                              LorsState state, int max_iter) {
  const std::size_t n = Y.size();
  const std::size_t q = Y[0].size();
  const std::size_t r = X[0].size();
  std::vector<double> col_sq(r, 0.0);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t s = 0; s < n; ++s) col_sq[k] += X[s][k] * X[s][k];

  double previous = lors_objective(Y, X, state, rho, lambda);
  for (int it = 0; it < max_iter; ++it) {
    if (lambda > 0.0) {
      Matrix W = make_matrix(n, q);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < q; ++j) {
          double fitted = state.mu[j];
          for (std::size_t k = 0; k < r; ++k) fitted += X[s][k] * state.B[k][j];
          W[s][j] = Y[s][j] - fitted;
        }
      state.L = svt_reference(W, lambda / 2.0);
    }
    for (std::size_t j = 0; j < q; ++j) {
      double total = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        double fitted = state.L[s][j];
        for (std::size_t k = 0; k < r; ++k) fitted += X[s][k] * state.B[k][j];
        total += Y[s][j] - fitted;
      }
      state.mu[j] = total / static_cast<double>(n);
    }
    // per-gene coordinate descent, 40 cycles per outer sweep
    for (std::size_t j = 0; j < q; ++j) {
      std::vector<double> res(n);
      for (std::size_t s = 0; s < n; ++s) {
        double fitted = state.mu[j] + state.L[s][j];
        for (std::size_t k = 0; k < r; ++k) fitted += X[s][k] * state.B[k][j];
        res[s] = Y[s][j] - fitted;
      }
      for (int cycle = 0; cycle < 40; ++cycle) {
        double moved = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
          if (col_sq[k] == 0.0) continue;
          double c = col_sq[k] * state.B[k][j];
          for (std::size_t s = 0; s < n; ++s) c += X[s][k] * res[s];
          double next = 0.0;
          const double half = rho / 2.0;
          if (c > half) next = (c - half) / col_sq[k];
          else if (c < -half) next = (c + half) / col_sq[k];
          const double delta = state.B[k][j] - next;
          if (delta != 0.0) {
            for (std::size_t s = 0; s < n; ++s) res[s] += X[s][k] * delta;
            state.B[k][j] = next;
            moved = std::max(moved, std::abs(delta));
          }
        }
        if (moved <= 1e-12) break;
      }
    }
    const double current = lors_objective(Y, X, state, rho, lambda);
    if (std::abs(previous - current) <= 1e-12 * (1.0 + std::abs(previous))) break;
    previous = current;
  }
  return state;
}

}  // namespace oracle
