#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/matrix_io.hpp"
#include "hclors/parallel.hpp"
#include "hclors/rng.hpp"
#include "hclors/svt.hpp"
#include "hclors/types.hpp"

namespace hclors {

struct LorsFit {
  Eigen::MatrixXd B;       // r x q
  Eigen::RowVectorXd mu;   // 1 x q
  Eigen::MatrixXd L;       // n x q
  double rho = 0.0;
  double lambda = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  Eigen::Index rank_L = 0;
  Eigen::Index nnz_B = 0;
};

struct CvConfig {
  std::vector<double> rho_grid;     // ascending
  std::vector<double> lambda_grid;  // ascending
  double holdout_fraction = 0.25;
  int repeats = 5;
  std::uint64_t seed = 1;
};

struct CvCell {
  double rho = 0.0;
  double lambda = 0.0;
  double mean_error = 0.0;
};

struct CvResult {
  double rho = 0.0;
  double lambda = 0.0;
  std::vector<CvCell> table;  // rho-major grid order
};

struct Association {
  std::string snp_id;
  std::string probe_id;
  double effect = 0.0;
};

namespace detail {

inline double soft(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

inline double largest_singular_value(const Eigen::MatrixXd& W) {
  // eigenvalues of the smaller Gram side; only the top one is needed
  const Eigen::MatrixXd gram =
      W.cols() <= W.rows() ? Eigen::MatrixXd(W.transpose() * W) : Eigen::MatrixXd(W * W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  return top > 0.0 ? std::sqrt(top) : 0.0;
}

}  // namespace detail

// One full cyclic coordinate-descent pass for a single gene's lasso
//   min_b || residual_col - X_r b ||^2 + rho ||b||_1,
// where residual_col already has the intercept and low-rank parts
// removed. The squared-loss carries no 1/2, so each coordinate solves
// b_k = soft(x_k' (partial residual), rho / 2) / ||x_k||^2. Zero-norm
// columns are skipped with b_k = 0.
inline Eigen::VectorXd lasso_column_update(const Eigen::VectorXd& residual_col, const Eigen::MatrixXd& X_r,
                                           const Eigen::VectorXd& b_col, double rho,
                                           const Eigen::VectorXd& col_sq_norms) {
  const Eigen::Index r = X_r.cols();
  if (residual_col.size() != X_r.rows() || b_col.size() != r || col_sq_norms.size() != r)
    fail(ErrorKind::dimension_mismatch, "lasso update: design is " + std::to_string(X_r.rows()) + "x" +
                                            std::to_string(r) + " but residual has " +
                                            std::to_string(residual_col.size()) + " entries and b has " +
                                            std::to_string(b_col.size()));
  if (rho < 0.0) fail(ErrorKind::invalid_argument, "rho must be nonnegative");

  const double threshold = rho / 2.0;
  Eigen::VectorXd b = b_col;
  Eigen::VectorXd res = residual_col - X_r * b;
  for (Eigen::Index k = 0; k < r; ++k) {
    const double sxx = col_sq_norms[k];
    if (sxx == 0.0) {
      if (b[k] != 0.0) {
        res += X_r.col(k) * b[k];
        b[k] = 0.0;
      }
      continue;
    }
    const double c = X_r.col(k).dot(res) + sxx * b[k];
    const double updated = detail::soft(c, threshold) / sxx;
    if (updated != b[k]) {
      res += X_r.col(k) * (b[k] - updated);
      b[k] = updated;
    }
  }
  return b;
}

inline Eigen::VectorXd lasso_column_update(const Eigen::VectorXd& residual_col, const Eigen::MatrixXd& X_r,
                                           const Eigen::VectorXd& b_col, double rho) {
  return lasso_column_update(residual_col, X_r, b_col, rho,
                             X_r.colwise().squaredNorm().transpose());
}

// Joint sparse + low-rank fit
//   min_{B, mu, L} ||Y - X_r B - 1 mu - L||_F^2 + rho ||B||_1 + lambda ||L||_*
// by block minimization: exact singular value shrinkage for L, column
// means for mu, and per-gene coordinate descent for B. The squared loss
// has no 1/2, so the exact L block minimizer shrinks at lambda / 2 and
// the coordinate threshold is rho / 2. lambda = 0 pins L at zero; the
// shrinkage step would otherwise return the exact residual and zero the
// loss. Each block update is an exact minimizer given the others, so
// the objective trace never increases.
inline LorsFit lors_fit(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X_r, double rho, double lambda,
                        double tol = 1e-6, int max_iter = 500, int threads = 1) {
  const Eigen::Index n = Y.rows();
  const Eigen::Index q = Y.cols();
  const Eigen::Index r = X_r.cols();
  if (X_r.rows() != n)
    fail(ErrorKind::dimension_mismatch, "Y has " + std::to_string(n) + " rows but the design has " +
                                            std::to_string(X_r.rows()));
  if (n == 0 || q == 0 || r == 0) fail(ErrorKind::empty_matrix, "joint fit needs non-empty Y and design");
  if (n < 2) fail(ErrorKind::invalid_argument, "joint fit needs at least two samples");
  if (!Y.allFinite() || !X_r.allFinite()) fail(ErrorKind::non_finite_input, "joint fit inputs must be finite");
  if (rho < 0.0 || lambda < 0.0) fail(ErrorKind::invalid_argument, "penalties must be nonnegative");
  if (!(tol > 0.0)) fail(ErrorKind::invalid_argument, "tolerance must be positive");
  if (max_iter < 1) fail(ErrorKind::invalid_argument, "max_iter must be at least 1");
  for (Eigen::Index k = 0; k < r; ++k) {
    const double spread = (X_r.col(k).array() - X_r.col(k).mean()).matrix().squaredNorm();
    if (spread == 0.0)
      fail(ErrorKind::degenerate_design, "design column " + std::to_string(k) + " is constant");
  }

  LorsFit fit;
  fit.rho = rho;
  fit.lambda = lambda;
  fit.B = Eigen::MatrixXd::Zero(r, q);
  fit.mu = Y.colwise().mean();
  fit.L = Eigen::MatrixXd::Zero(n, q);
  const Eigen::VectorXd col_sq = X_r.colwise().squaredNorm().transpose();

  double nuc = 0.0;
  const auto objective = [&]() {
    Eigen::MatrixXd resid = Y - X_r * fit.B - fit.L;
    resid.rowwise() -= fit.mu;
    return resid.squaredNorm() + rho * fit.B.lpNorm<1>() + lambda * nuc;
  };
  fit.objective_trace.push_back(objective());

  constexpr int max_cycles = 50;
  double previous = fit.objective_trace.front();
  for (int it = 1; it <= max_iter; ++it) {
    if (lambda > 0.0) {
      Eigen::MatrixXd W = Y - X_r * fit.B;
      W.rowwise() -= fit.mu;
      SvtResult shrunk = soft_threshold_svd_full(W, lambda / 2.0);
      fit.L = std::move(shrunk.Z);
      nuc = shrunk.nuclear_norm;
      fit.rank_L = shrunk.rank;
    }
    fit.mu = (Y - X_r * fit.B - fit.L).colwise().mean();

    Eigen::MatrixXd target = Y - fit.L;
    target.rowwise() -= fit.mu;
    parallel_for(static_cast<std::size_t>(q), threads, [&](std::size_t j) {
      const Eigen::Index col = static_cast<Eigen::Index>(j);
      Eigen::VectorXd b = fit.B.col(col);
      for (int cycle = 0; cycle < max_cycles; ++cycle) {
        const Eigen::VectorXd next = lasso_column_update(target.col(col), X_r, b, rho, col_sq);
        const double delta = (next - b).cwiseAbs().maxCoeff();
        b = next;
        if (delta <= 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())) break;
      }
      fit.B.col(col) = b;
    });

    const double current = objective();
    fit.objective_trace.push_back(current);
    fit.iterations = it;
    if (std::abs(current - previous) <= tol * (1.0 + std::abs(previous))) {
      fit.converged = true;
      break;
    }
    previous = current;
  }

  fit.nnz_B = 0;
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i < r; ++i)
      if (fit.B(i, j) != 0.0) ++fit.nnz_B;
  return fit;
}

// Grid defaults when the caller gives none: eight log-spaced points per
// penalty spanning two decades. The rho top is the null threshold,
// twice the largest |x_k' y_j| on column-centered data, above which B
// stays zero; the lambda top is sigma_max of the centered data, a
// strong but not quite nulling shrinkage of L.
inline CvConfig default_cv_config(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X_r) {
  if (Y.rows() == 0 || Y.cols() == 0 || X_r.cols() == 0 || X_r.rows() != Y.rows())
    fail(ErrorKind::dimension_mismatch, "grid defaults need matching non-empty Y and design");
  Eigen::MatrixXd Yc = Y;
  Yc.rowwise() -= Eigen::RowVectorXd(Y.colwise().mean());
  const double rho_top = 2.0 * (X_r.transpose() * Yc).cwiseAbs().maxCoeff();
  const double lambda_top = detail::largest_singular_value(Yc);
  CvConfig config;
  const auto fill = [](double top, std::vector<double>& grid) {
    if (top <= 0.0) {
      grid = {0.0};
      return;
    }
    for (int i = 0; i < 8; ++i) grid.push_back(top * std::pow(0.01, (7.0 - i) / 7.0));
  };
  fill(rho_top, config.rho_grid);
  fill(lambda_top, config.lambda_grid);
  return config;
}

// Monte-Carlo cross-validation over the penalty grid. Each repeat draws
// one holdout split shared by every grid pair; held-out error is
// ||Y_test - X_test B - 1 mu||_F^2, since the low-rank term belongs to
// the training samples and does not transport. Splits that leave a
// constant design column in training are redrawn, at most ten times.
// Ties prefer the larger (rho, lambda).
inline CvResult lors_cv(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X_r, const CvConfig& config,
                        double tol = 1e-6, int max_iter = 500, int threads = 1) {
  const Eigen::Index n = Y.rows();
  if (X_r.rows() != n)
    fail(ErrorKind::dimension_mismatch, "Y has " + std::to_string(n) + " rows but the design has " +
                                            std::to_string(X_r.rows()));
  if (config.rho_grid.empty() || config.lambda_grid.empty())
    fail(ErrorKind::invalid_argument, "penalty grids must be non-empty");
  for (const auto* grid : {&config.rho_grid, &config.lambda_grid}) {
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if ((*grid)[i] < 0.0) fail(ErrorKind::invalid_argument, "penalty grids must be nonnegative");
      if (i > 0 && (*grid)[i] < (*grid)[i - 1])
        fail(ErrorKind::invalid_argument, "penalty grids must be sorted ascending");
    }
  }
  if (!(config.holdout_fraction > 0.0) || !(config.holdout_fraction < 1.0))
    fail(ErrorKind::invalid_argument, "holdout fraction must lie strictly between 0 and 1");
  if (config.repeats < 1) fail(ErrorKind::invalid_argument, "repeats must be at least 1");
  const Eigen::Index n_hold = static_cast<Eigen::Index>(config.holdout_fraction * static_cast<double>(n));
  if (n_hold < 1) fail(ErrorKind::invalid_argument, "holdout keeps no samples at this fraction");
  const Eigen::Index n_train = n - n_hold;
  if (n_train < 10) fail(ErrorKind::invalid_argument, "holdout must leave at least 10 training samples");

  // all splits drawn up front so grid evaluation order cannot disturb
  // the random sequence
  Rng rng(config.seed);
  std::vector<std::vector<Eigen::Index>> holdouts;
  for (int rep = 0; rep < config.repeats; ++rep) {
    bool accepted = false;
    for (int attempt = 0; attempt < 11 && !accepted; ++attempt) {  // first draw plus ten redraws
      auto drawn = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                  static_cast<std::size_t>(n_hold));
      std::sort(drawn.begin(), drawn.end());
      std::vector<char> held(static_cast<std::size_t>(n), 0);
      for (const std::size_t s : drawn) held[s] = 1;
      bool ok = true;
      for (Eigen::Index k = 0; k < X_r.cols() && ok; ++k) {
        double first = 0.0;
        bool seen = false;
        bool varies = false;
        for (Eigen::Index s = 0; s < n && !varies; ++s) {
          if (held[static_cast<std::size_t>(s)]) continue;
          if (!seen) {
            first = X_r(s, k);
            seen = true;
          } else if (X_r(s, k) != first) {
            varies = true;
          }
        }
        ok = varies;
      }
      if (!ok) continue;
      std::vector<Eigen::Index> indices(drawn.size());
      for (std::size_t s = 0; s < drawn.size(); ++s) indices[s] = static_cast<Eigen::Index>(drawn[s]);
      holdouts.push_back(std::move(indices));
      accepted = true;
    }
    if (!accepted)
      fail(ErrorKind::degenerate_design, "every redraw left a constant design column in training");
  }

  struct Job {
    double rho;
    double lambda;
  };
  std::vector<Job> jobs;
  for (const double rho : config.rho_grid)
    for (const double lambda : config.lambda_grid) jobs.push_back({rho, lambda});

  std::vector<double> totals(jobs.size(), 0.0);
  parallel_for(jobs.size(), threads, [&](std::size_t pair) {
    for (int rep = 0; rep < config.repeats; ++rep) {
      const auto& hold = holdouts[static_cast<std::size_t>(rep)];
      std::vector<char> held(static_cast<std::size_t>(n), 0);
      for (const Eigen::Index s : hold) held[static_cast<std::size_t>(s)] = 1;
      Eigen::MatrixXd Y_train(n_train, Y.cols());
      Eigen::MatrixXd X_train(n_train, X_r.cols());
      Eigen::MatrixXd Y_test(n_hold, Y.cols());
      Eigen::MatrixXd X_test(n_hold, X_r.cols());
      Eigen::Index tr = 0;
      Eigen::Index te = 0;
      for (Eigen::Index s = 0; s < n; ++s) {
        if (held[static_cast<std::size_t>(s)]) {
          Y_test.row(te) = Y.row(s);
          X_test.row(te) = X_r.row(s);
          ++te;
        } else {
          Y_train.row(tr) = Y.row(s);
          X_train.row(tr) = X_r.row(s);
          ++tr;
        }
      }
      const LorsFit fit = lors_fit(Y_train, X_train, jobs[pair].rho, jobs[pair].lambda, tol, max_iter, 1);
      Eigen::MatrixXd gap = Y_test - X_test * fit.B;
      gap.rowwise() -= fit.mu;
      totals[pair] += gap.squaredNorm();
    }
  });

  CvResult out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t pair = 0; pair < jobs.size(); ++pair) {
    const double mean = totals[pair] / static_cast<double>(config.repeats);
    out.table.push_back({jobs[pair].rho, jobs[pair].lambda, mean});
    const bool wins = mean < best ||
                      (mean == best && (jobs[pair].rho > out.rho ||
                                        (jobs[pair].rho == out.rho && jobs[pair].lambda > out.lambda)));
    if (wins) {
      best = mean;
      out.rho = jobs[pair].rho;
      out.lambda = jobs[pair].lambda;
    }
  }
  return out;
}

// Nonzero coefficients ranked by |effect| descending; ties fall back to
// (snp_id, probe_id). Fewer nonzeros than asked for returns them all.
inline std::vector<Association> association_list(const LorsFit& fit, const std::vector<std::string>& snp_ids,
                                                 const std::vector<std::string>& probe_ids,
                                                 std::size_t top_k) {
  if (top_k < 1) fail(ErrorKind::invalid_argument, "top_k must be at least 1");
  if (static_cast<std::size_t>(fit.B.rows()) != snp_ids.size() ||
      static_cast<std::size_t>(fit.B.cols()) != probe_ids.size())
    fail(ErrorKind::dimension_mismatch, "coefficients are " + std::to_string(fit.B.rows()) + "x" +
                                            std::to_string(fit.B.cols()) + " but " +
                                            std::to_string(snp_ids.size()) + " snp ids and " +
                                            std::to_string(probe_ids.size()) + " probe ids were given");
  std::vector<Association> all;
  for (Eigen::Index i = 0; i < fit.B.rows(); ++i)
    for (Eigen::Index j = 0; j < fit.B.cols(); ++j)
      if (fit.B(i, j) != 0.0)
        all.push_back({snp_ids[static_cast<std::size_t>(i)], probe_ids[static_cast<std::size_t>(j)],
                       fit.B(i, j)});
  std::sort(all.begin(), all.end(), [](const Association& lhs, const Association& rhs) {
    const double la = std::abs(lhs.effect);
    const double ra = std::abs(rhs.effect);
    if (la != ra) return la > ra;
    if (lhs.snp_id != rhs.snp_id) return lhs.snp_id < rhs.snp_id;
    return lhs.probe_id < rhs.probe_id;
  });
  if (all.size() > top_k) all.resize(top_k);
  return all;
}

// B goes to a coefficient TSV; the scalars go to a key-value sidecar.
inline void save_lors_fit(const std::string& coefficients_path, const std::string& metadata_path,
                          const LorsFit& fit, const std::vector<std::string>& snp_ids,
                          const std::vector<std::string>& probe_ids) {
  CoefficientMatrix cm;
  cm.values = fit.B;
  cm.row_ids = snp_ids;
  cm.col_ids = probe_ids;
  save_coefficients(cm, coefficients_path);

  TextLineWriter writer(metadata_path);
  writer.write_line("rho\t" + format_double(fit.rho));
  writer.write_line("lambda\t" + format_double(fit.lambda));
  writer.write_line("iterations\t" + std::to_string(fit.iterations));
  writer.write_line("converged\t" + std::string(fit.converged ? "1" : "0"));
  writer.write_line("rank_L\t" + std::to_string(fit.rank_L));
  writer.write_line("nnz_B\t" + std::to_string(fit.nnz_B));
  writer.write_line("objective\t" + format_double(fit.objective_trace.back()));
  writer.close();
}

// One call per line in list order: snp_id, probe_id, effect.
inline void save_associations(const std::string& path, const std::vector<Association>& list) {
  TextLineWriter writer(path);
  writer.write_line("snp_id\tprobe_id\teffect");
  for (const Association& a : list) {
    detail::check_id_writable(a.snp_id, "snp id");
    detail::check_id_writable(a.probe_id, "probe id");
    writer.write(a.snp_id);
    writer.write("\t");
    writer.write(a.probe_id);
    writer.write("\t");
    writer.write_line(format_double(a.effect));
  }
  writer.close();
}

inline std::vector<Association> load_associations(const std::string& path) {
  TextLineReader reader(path);
  std::string line;
  if (!reader.next(line)) fail(ErrorKind::empty_matrix, "'" + path + "' has no header row");
  if (line != "snp_id\tprobe_id\teffect")
    fail(ErrorKind::dimension_mismatch,
         "'" + path + "' header is '" + line + "', expected 'snp_id\tprobe_id\teffect'");
  std::vector<Association> list;
  std::size_t line_number = 1;
  while (reader.next(line)) {
    ++line_number;
    const std::vector<std::string_view> fields = detail::split_tabs(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    const std::string context = "'" + path + "' row " + std::to_string(line_number);
    if (fields.size() != 3)
      fail(ErrorKind::dimension_mismatch,
           context + " has " + std::to_string(fields.size()) + " columns, expected 3");
    Association a;
    a.snp_id = std::string(fields[0]);
    a.probe_id = std::string(fields[1]);
    a.effect = detail::parse_cell(fields[2], context);
    list.push_back(std::move(a));
  }
  return list;
}

// Grid table in the stored (rho-major) order plus the winning pair.
inline void save_cv_table(const std::string& path, const CvResult& cv) {
  TextLineWriter writer(path);
  writer.write_line("rho\tlambda\tmean_error\tselected");
  for (const CvCell& cell : cv.table) {
    const bool selected = cell.rho == cv.rho && cell.lambda == cv.lambda;
    writer.write(format_double(cell.rho));
    writer.write("\t");
    writer.write(format_double(cell.lambda));
    writer.write("\t");
    writer.write(format_double(cell.mean_error));
    writer.write("\t");
    writer.write_line(selected ? "1" : "0");
  }
  writer.close();
}

}  // namespace hclors
