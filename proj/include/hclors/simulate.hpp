#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/rng.hpp"
#include "hclors/types.hpp"

namespace hclors {

struct SimConfig {
  Eigen::Index n_active_snps = 20;
  Eigen::Index genes_per_snp = 10;  // m
  double beta = 0.5;
  Eigen::Index k_hidden = 10;
  double hidden_scale = 0.1;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
};

struct GroundTruth {
  Eigen::MatrixXd B_true;  // p x q
  std::vector<std::string> active_snp_ids;
  std::map<std::string, std::vector<std::string>> influenced_genes;
};

struct SimResult {
  ExpressionMatrix Y;
  GroundTruth truth;
  Eigen::MatrixXd U;  // n x q hidden contribution
};

namespace detail {

inline std::string padded_id(char prefix, std::size_t index, std::size_t width) {
  std::string digits = std::to_string(index + 1);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

inline std::size_t id_width(Eigen::Index count) {
  return std::to_string(count).size();
}

}  // namespace detail

// One draw from N(0, scale * F F'), using the factor directly: with
// g ~ N(0, I) the vector sqrt(scale) * F g has exactly that covariance,
// rank-deficient or not. The g draws are consumed even at scale = 0 so
// the stream position does not depend on the scale.
inline Eigen::VectorXd sample_mvn_column(const Eigen::MatrixXd& factor, double scale, Rng& rng) {
  if (factor.rows() == 0 || factor.cols() == 0) fail(ErrorKind::empty_matrix, "covariance factor is empty");
  if (scale < 0.0) fail(ErrorKind::invalid_argument, "covariance scale must be nonnegative");
  Eigen::VectorXd g(factor.cols());
  for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = rng.normal();
  return std::sqrt(scale) * (factor * g);
}

// Builds Y = X B + U + e over the given genotypes. Draw order is fixed:
// active SNPs, then each active SNP's gene subset (both kept sorted),
// then H row by row, then per gene the hidden loadings and finally the
// noise column, so a seed pins the whole replicate bit for bit.
inline SimResult simulate(const GenotypeMatrix& X, Eigen::Index q, const SimConfig& config) {
  const Eigen::Index n = X.n_samples();
  const Eigen::Index p = X.n_snps();
  if (n == 0 || p == 0) fail(ErrorKind::empty_matrix, "genotypes are empty");
  if (static_cast<std::size_t>(p) != X.snp_ids.size())
    fail(ErrorKind::dimension_mismatch, "genotypes carry " + std::to_string(X.snp_ids.size()) +
                                            " snp ids for " + std::to_string(p) + " columns");
  if (!X.values.allFinite()) fail(ErrorKind::non_finite_input, "genotypes must be finite");
  if (q < 1 || config.n_active_snps < 1 || config.genes_per_snp < 1 || config.k_hidden < 1)
    fail(ErrorKind::invalid_argument, "all simulation counts must be positive");
  if (config.genes_per_snp > q)
    fail(ErrorKind::invalid_argument, "each active SNP needs " + std::to_string(config.genes_per_snp) +
                                          " genes but only " + std::to_string(q) + " exist");
  if (config.n_active_snps > p)
    fail(ErrorKind::invalid_argument, std::to_string(config.n_active_snps) + " active SNPs exceed the " +
                                          std::to_string(p) + " available");
  if (config.hidden_scale < 0.0 || config.noise_sd < 0.0)
    fail(ErrorKind::invalid_argument, "hidden_scale and noise_sd must be nonnegative");
  if (!std::isfinite(config.beta)) fail(ErrorKind::non_finite_input, "beta must be finite");

  Rng rng(config.seed);
  SimResult out;
  out.truth.B_true = Eigen::MatrixXd::Zero(p, q);

  auto active = rng.sample_without_replacement(static_cast<std::size_t>(p),
                                               static_cast<std::size_t>(config.n_active_snps));
  std::sort(active.begin(), active.end());

  const std::size_t gene_width = detail::id_width(q);
  std::vector<std::string> probe_ids;
  probe_ids.reserve(static_cast<std::size_t>(q));
  for (Eigen::Index j = 0; j < q; ++j)
    probe_ids.push_back(detail::padded_id('g', static_cast<std::size_t>(j), gene_width));

  for (const std::size_t snp : active) {
    auto genes = rng.sample_without_replacement(static_cast<std::size_t>(q),
                                                static_cast<std::size_t>(config.genes_per_snp));
    std::sort(genes.begin(), genes.end());
    const std::string& snp_id = X.snp_ids[snp];
    out.truth.active_snp_ids.push_back(snp_id);
    auto& influenced = out.truth.influenced_genes[snp_id];
    for (const std::size_t gene : genes) {
      out.truth.B_true(static_cast<Eigen::Index>(snp), static_cast<Eigen::Index>(gene)) = config.beta;
      influenced.push_back(probe_ids[gene]);
    }
  }

  Eigen::MatrixXd H(n, config.k_hidden);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < config.k_hidden; ++k) H(i, k) = rng.normal();

  out.U.resize(n, q);
  Eigen::MatrixXd noise(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    out.U.col(j) = sample_mvn_column(H, config.hidden_scale, rng);
    for (Eigen::Index i = 0; i < n; ++i) noise(i, j) = config.noise_sd * rng.normal();
  }

  out.Y.values = X.values * out.truth.B_true + out.U + noise;
  out.Y.probe_ids = std::move(probe_ids);
  out.Y.sample_ids = X.sample_ids;
  return out;
}

// Desk-scale genotype source: independent binomial(2, maf) columns with
// maf drawn uniformly per SNP. Columns that land constant are redrawn
// so downstream regressions never see a degenerate design.
inline GenotypeMatrix synthetic_genotypes(Eigen::Index n, Eigen::Index p, double maf_low, double maf_high,
                                          std::uint64_t seed) {
  if (n < 2 || p < 1) fail(ErrorKind::invalid_argument, "need at least 2 samples and 1 SNP");
  if (!(maf_low > 0.0) || !(maf_high < 1.0) || maf_low > maf_high)
    fail(ErrorKind::invalid_argument, "allele frequencies must satisfy 0 < low <= high < 1");

  Rng rng(seed);
  GenotypeMatrix X;
  X.values.resize(n, p);
  const std::size_t snp_width = detail::id_width(p);
  const std::size_t sample_width = detail::id_width(n);
  for (Eigen::Index i = 0; i < n; ++i)
    X.sample_ids.push_back(detail::padded_id('i', static_cast<std::size_t>(i), sample_width));
  for (Eigen::Index k = 0; k < p; ++k) {
    X.snp_ids.push_back(detail::padded_id('s', static_cast<std::size_t>(k), snp_width));
    bool varied = false;
    for (int attempt = 0; attempt < 100 && !varied; ++attempt) {
      const double maf = maf_low + (maf_high - maf_low) * rng.uniform();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double first = rng.uniform() < maf ? 1.0 : 0.0;
        const double second = rng.uniform() < maf ? 1.0 : 0.0;
        X.values(i, k) = first + second;
      }
      varied = (X.values.col(k).array() != X.values(0, k)).any();
    }
    if (!varied)
      fail(ErrorKind::degenerate_design, "SNP column " + std::to_string(k) + " stayed constant after 100 draws");
  }
  return X;
}

}  // namespace hclors
