#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/matrix_io.hpp"
#include "hclors/parallel.hpp"
#include "hclors/types.hpp"

namespace hclors {

// P(N(0,1) > t), clamped away from zero so downstream ratios stay finite.
inline double normal_upper_tail(double t) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double u = 0.5 * std::erfc(t * inv_sqrt2);
  return u < std::numeric_limits<double>::min() ? std::numeric_limits<double>::min() : u;
}

// Threshold grid for the scan supremum. unrestricted scans every observed
// value, the literal sup over t >= 0, and is the default: deep thresholds
// are where a sparse-strong row's excess count towers over rows that are
// merely variance-inflated. The restricted grid drops thresholds whose
// tail probability falls below 1/q, the classical correction that stops a
// single extreme entry from dominating; it blunts exactly the deep-tail
// evidence the default keeps, so it is opt-in.
enum class HcGrid { restricted, unrestricted };

struct ZscoreMatrix {
  Eigen::MatrixXd values;  // p x q
  // cells where the residual had zero sample variance; their z is 0
  std::vector<std::pair<Eigen::Index, Eigen::Index>> zero_variance_cells;
  // rows whose genotype column was constant; the whole row is 0
  std::vector<Eigen::Index> degenerate_snps;
};

struct HcScoreTable {
  std::vector<std::string> snp_ids;
  std::vector<double> hc;          // aligned with snp_ids
  std::vector<std::size_t> rank;   // 1 = largest score
  std::size_t threshold_grid_size = 0;
};

struct ScreenResult {
  std::vector<std::string> kept_snp_ids;  // prefix of the rank order
  GenotypeMatrix x_reduced;
};

enum class BaselineMethod { row_means, extreme_val };

namespace detail {

struct HcEvaluation {
  double value;
  std::size_t grid_size;  // thresholds actually scanned (1 for the fallback)
};

// Scans the display sqrt(q) (S(t)/q - u) / sqrt(u (1 - u)) over the
// distinct observed |z| values. On each interval where S is constant the
// display increases toward the right endpoint, so observed values attain
// the supremum over all t >= 0; thresholds between them never need
// evaluating. Under the restricted grid, thresholds with u < 1/q are
// skipped, and when that empties the grid the smallest observed |z| is
// scored anyway so every row gets a finite value.
inline HcEvaluation hc_statistic_ex(const Eigen::VectorXd& z_row, HcGrid grid) {
  const std::size_t q = static_cast<std::size_t>(z_row.size());
  if (q < 2) fail(ErrorKind::invalid_argument, "hc statistic needs at least two z-scores per row");
  std::vector<double> a(q);
  for (std::size_t j = 0; j < q; ++j) {
    if (!std::isfinite(z_row[static_cast<Eigen::Index>(j)]))
      fail(ErrorKind::non_finite_input, "z-score row contains a non-finite value");
    a[j] = std::abs(z_row[static_cast<Eigen::Index>(j)]);
  }
  std::sort(a.begin(), a.end(), std::greater<double>());

  const double qd = static_cast<double>(q);
  const double sqrt_q = std::sqrt(qd);
  const double u_floor = 1.0 / qd;
  const auto display = [&](double t, std::size_t count) {
    const double u = normal_upper_tail(t);
    return sqrt_q * (static_cast<double>(count) / qd - u) / std::sqrt(u * (1.0 - u));
  };

  double best = -std::numeric_limits<double>::infinity();
  std::size_t scanned = 0;
  for (std::size_t k = 0; k < q; ++k) {
    if (k + 1 < q && a[k + 1] == a[k]) continue;  // not the last of its run; S would undercount
    const double t = a[k];
    if (grid == HcGrid::restricted && normal_upper_tail(t) < u_floor) continue;
    const double value = display(t, k + 1);
    if (scanned == 0 || value > best) best = value;
    ++scanned;
  }
  if (scanned == 0) return {display(a[q - 1], q), 1};  // every observed value beyond the cap
  return {best, scanned};
}

// Shared rank assignment: score descending, then snp_id ascending, then
// input position. Deterministic for any input, including duplicate ids.
inline void assign_ranks(const std::vector<std::string>& snp_ids, HcScoreTable& table) {
  const std::size_t p = table.hc.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
    if (table.hc[lhs] != table.hc[rhs]) return table.hc[lhs] > table.hc[rhs];
    if (snp_ids[lhs] != snp_ids[rhs]) return snp_ids[lhs] < snp_ids[rhs];
    return lhs < rhs;
  });
  table.rank.assign(p, 0);
  for (std::size_t k = 0; k < p; ++k) table.rank[order[k]] = k + 1;
}

}  // namespace detail

inline double hc_statistic(const Eigen::VectorXd& z_row, HcGrid grid = HcGrid::unrestricted) {
  return detail::hc_statistic_ex(z_row, grid).value;
}

// Z_ij = beta_hat_ij / sqrt((x_i' x_i)^{-1} Vhat(y_j - x_i beta_hat_ij)),
// with Vhat the sample variance (divisor n - 1). x_i is centered before
// x_i' x_i unless center_x is false; the residual variance is unaffected
// either way. Constant genotype columns yield a zero row plus a
// degenerate_snps entry instead of an error, matching the screen's
// tolerance, and zero residual variance yields z = 0 plus a cell flag.
inline ZscoreMatrix standardize(const Eigen::MatrixXd& beta_hat, const Eigen::MatrixXd& Y,
                                const Eigen::MatrixXd& X, bool center_x = true, int threads = 1) {
  const Eigen::Index p = beta_hat.rows();
  const Eigen::Index q = beta_hat.cols();
  const Eigen::Index n = Y.rows();
  if (X.rows() != n || X.cols() != p || Y.cols() != q)
    fail(ErrorKind::dimension_mismatch, "coefficients are " + std::to_string(p) + "x" + std::to_string(q) +
                                            " but X is " + std::to_string(X.rows()) + "x" +
                                            std::to_string(X.cols()) + " and Y is " + std::to_string(n) +
                                            "x" + std::to_string(Y.cols()));
  if (p == 0 || q == 0 || n == 0) fail(ErrorKind::empty_matrix, "standardize needs non-empty inputs");
  if (n < 2) fail(ErrorKind::invalid_argument, "sample variance needs at least two samples");
  if (!beta_hat.allFinite() || !Y.allFinite() || !X.allFinite())
    fail(ErrorKind::non_finite_input, "standardize inputs must be finite");

  ZscoreMatrix out;
  out.values.resize(p, q);
  std::vector<std::vector<Eigen::Index>> flagged_cols(static_cast<std::size_t>(p));
  std::vector<std::uint8_t> degenerate(static_cast<std::size_t>(p), 0);

  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t si) {
    const Eigen::Index i = static_cast<Eigen::Index>(si);
    Eigen::VectorXd x = X.col(i);
    if (center_x) x.array() -= x.mean();
    const double sxx = x.squaredNorm();
    if (sxx == 0.0) {
      out.values.row(i).setZero();
      degenerate[si] = 1;
      return;
    }
    // materialized so the products round once; a fused subtract would
    // leave rounding dust where the residual is exactly reproducible
    const Eigen::MatrixXd fitted = X.col(i) * beta_hat.row(i);
    Eigen::MatrixXd resid = Y - fitted;
    resid.rowwise() -= resid.colwise().mean();
    for (Eigen::Index j = 0; j < q; ++j) {
      const double var = resid.col(j).squaredNorm() / static_cast<double>(n - 1);
      // relative floor: variance at rounding-noise level means the gene
      // was fit exactly and its z-score would be numerical garbage
      const double ref = (Y.col(j).squaredNorm() + fitted.col(j).squaredNorm()) /
                         static_cast<double>(n - 1);
      if (var <= 1e-24 * ref) {
        out.values(i, j) = 0.0;
        flagged_cols[si].push_back(j);
      } else {
        out.values(i, j) = beta_hat(i, j) * std::sqrt(sxx / var);
      }
    }
  });

  for (Eigen::Index i = 0; i < p; ++i) {
    if (degenerate[static_cast<std::size_t>(i)]) out.degenerate_snps.push_back(i);
    for (const Eigen::Index j : flagged_cols[static_cast<std::size_t>(i)])
      out.zero_variance_cells.emplace_back(i, j);
  }
  return out;
}

// Scores every row and ranks the SNPs, largest score first. Rows are
// independent, so any thread count gives bit-identical output.
inline HcScoreTable hc_rank_all(const ZscoreMatrix& Z, const std::vector<std::string>& snp_ids,
                                HcGrid grid = HcGrid::unrestricted, int threads = 1) {
  const Eigen::Index p = Z.values.rows();
  if (static_cast<std::size_t>(p) != snp_ids.size())
    fail(ErrorKind::dimension_mismatch, "z-score matrix has " + std::to_string(p) + " rows but " +
                                            std::to_string(snp_ids.size()) + " snp ids were given");
  HcScoreTable table;
  table.snp_ids = snp_ids;
  table.hc.assign(static_cast<std::size_t>(p), 0.0);
  std::vector<std::size_t> grid_sizes(static_cast<std::size_t>(p), 0);
  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
    const auto ev = detail::hc_statistic_ex(Z.values.row(static_cast<Eigen::Index>(i)).transpose(), grid);
    table.hc[i] = ev.value;
    grid_sizes[i] = ev.grid_size;
  });
  for (const std::size_t g : grid_sizes) table.threshold_grid_size = std::max(table.threshold_grid_size, g);
  detail::assign_ranks(table.snp_ids, table);
  return table;
}

// Keeps the top min(n_keep, p) SNPs of the rank order and gathers their
// genotype columns in that order.
inline ScreenResult screen_top_n(const HcScoreTable& table, const GenotypeMatrix& X, std::size_t n_keep) {
  if (n_keep < 1) fail(ErrorKind::invalid_argument, "n_keep must be at least 1");
  const std::size_t p = table.snp_ids.size();
  if (table.rank.size() != p || table.hc.size() != p)
    fail(ErrorKind::dimension_mismatch, "score table fields have mismatched lengths");
  std::vector<std::size_t> order(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t r = table.rank[i];
    if (r < 1 || r > p || order[r - 1] != p)
      fail(ErrorKind::invalid_argument, "score table ranks are not a permutation of 1.." + std::to_string(p));
    order[r - 1] = i;
  }
  std::unordered_map<std::string, Eigen::Index> column_of;
  column_of.reserve(X.snp_ids.size());
  for (std::size_t c = 0; c < X.snp_ids.size(); ++c)
    column_of.emplace(X.snp_ids[c], static_cast<Eigen::Index>(c));

  const std::size_t keep = std::min(n_keep, p);
  ScreenResult out;
  out.kept_snp_ids.reserve(keep);
  out.x_reduced.values.resize(X.values.rows(), static_cast<Eigen::Index>(keep));
  out.x_reduced.sample_ids = X.sample_ids;
  for (std::size_t k = 0; k < keep; ++k) {
    const std::string& id = table.snp_ids[order[k]];
    const auto hit = column_of.find(id);
    if (hit == column_of.end())
      fail(ErrorKind::invalid_argument, "ranked snp '" + id + "' is missing from the genotype matrix");
    out.kept_snp_ids.push_back(id);
    out.x_reduced.snp_ids.push_back(id);
    out.x_reduced.values.col(static_cast<Eigen::Index>(k)) = X.values.col(hit->second);
  }
  return out;
}

// Reference rankings over the raw screening coefficients: signed row
// means, or the largest absolute entry per row. Same rank and tie
// semantics as the scan-statistic table.
inline HcScoreTable baseline_rank(const Eigen::MatrixXd& beta_hat, const std::vector<std::string>& snp_ids,
                                  BaselineMethod method) {
  const Eigen::Index p = beta_hat.rows();
  if (static_cast<std::size_t>(p) != snp_ids.size())
    fail(ErrorKind::dimension_mismatch, "coefficient matrix has " + std::to_string(p) + " rows but " +
                                            std::to_string(snp_ids.size()) + " snp ids were given");
  if (beta_hat.cols() == 0) fail(ErrorKind::empty_matrix, "baseline ranking needs at least one gene column");
  if (!beta_hat.allFinite()) fail(ErrorKind::non_finite_input, "baseline ranking needs finite coefficients");
  HcScoreTable table;
  table.snp_ids = snp_ids;
  table.hc.resize(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    table.hc[static_cast<std::size_t>(i)] = method == BaselineMethod::row_means
                                                ? beta_hat.row(i).mean()
                                                : beta_hat.row(i).cwiseAbs().maxCoeff();
  }
  detail::assign_ranks(table.snp_ids, table);
  return table;
}

// TSV with columns snp_id, hc, rank, one row per SNP in rank order.
inline void save_score_table(const std::string& path, const HcScoreTable& table) {
  const std::size_t p = table.snp_ids.size();
  if (table.rank.size() != p || table.hc.size() != p)
    fail(ErrorKind::dimension_mismatch, "score table fields have mismatched lengths");
  std::vector<std::size_t> order(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t r = table.rank[i];
    if (r < 1 || r > p || order[r - 1] != p)
      fail(ErrorKind::invalid_argument, "score table ranks are not a permutation of 1.." + std::to_string(p));
    order[r - 1] = i;
  }
  TextLineWriter writer(path);
  writer.write_line("snp_id\thc\trank");
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t i = order[k];
    detail::check_id_writable(table.snp_ids[i], "snp id");
    writer.write(table.snp_ids[i]);
    writer.write("\t");
    writer.write(format_double(table.hc[i]));
    writer.write("\t");
    writer.write_line(std::to_string(table.rank[i]));
  }
  writer.close();
}

// Inverse of save_score_table. Ranks must form a permutation of 1..p;
// the grid-size field is not serialized and comes back as zero.
inline HcScoreTable load_score_table(const std::string& path) {
  TextLineReader reader(path);
  std::string line;
  if (!reader.next(line)) fail(ErrorKind::empty_matrix, "'" + path + "' has no header row");
  if (line != "snp_id\thc\trank")
    fail(ErrorKind::dimension_mismatch,
         "'" + path + "' header is '" + line + "', expected 'snp_id\thc\trank'");
  HcScoreTable table;
  std::size_t line_number = 1;
  while (reader.next(line)) {
    ++line_number;
    const std::vector<std::string_view> fields = detail::split_tabs(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    const std::string context = "'" + path + "' row " + std::to_string(line_number);
    if (fields.size() != 3)
      fail(ErrorKind::dimension_mismatch,
           context + " has " + std::to_string(fields.size()) + " columns, expected 3");
    table.snp_ids.emplace_back(fields[0]);
    table.hc.push_back(detail::parse_cell(fields[1], context));
    const std::int64_t r = detail::parse_integer(fields[2], context);
    if (r < 1) fail(ErrorKind::invalid_argument, context + " has rank " + std::to_string(r));
    table.rank.push_back(static_cast<std::size_t>(r));
  }
  detail::check_unique(table.snp_ids, "snp id");
  const std::size_t p = table.snp_ids.size();
  std::vector<std::uint8_t> seen(p, 0);
  for (const std::size_t r : table.rank) {
    if (r > p || seen[r - 1])
      fail(ErrorKind::invalid_argument,
           "'" + path + "' ranks are not a permutation of 1.." + std::to_string(p));
    seen[r - 1] = 1;
  }
  return table;
}

}  // namespace hclors
