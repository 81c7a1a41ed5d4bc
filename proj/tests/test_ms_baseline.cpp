#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "hclors/hc.hpp"
#include "hclors/marginal.hpp"
#include "hclors/ms_baseline.hpp"
#include "hclors/simulate.hpp"
#include "support/catch_matchers.hpp"
#include "support/temp_dir.hpp"

using hclors::Error;
using hclors::ErrorKind;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("per gene tops and their union") {
  Eigen::MatrixXd beta(4, 2);
  beta << 3.0, 0.0,
          -1.0, -5.0,
          2.0, 0.0,
          1.0, 0.0;
  const std::vector<std::string> snps = {"s1", "s2", "s3", "s4"};
  const std::vector<std::string> probes = {"p1", "p2"};

  const hclors::MsScreenResult two = hclors::ms_screen(beta, snps, probes, 2);
  REQUIRE(two.per_gene_top.at("p1") == std::vector<std::string>{"s1", "s3"});
  // gene 2 ties at |0|: the id breaks it
  REQUIRE(two.per_gene_top.at("p2") == std::vector<std::string>{"s2", "s1"});
  REQUIRE(two.kept_snp_ids == std::vector<std::string>{"s1", "s2", "s3"});

  // |-1| ties |1|: s2 sorts before s4
  const hclors::MsScreenResult three = hclors::ms_screen(beta, snps, probes, 3);
  REQUIRE(three.per_gene_top.at("p1") == std::vector<std::string>{"s1", "s3", "s2"});

  // a single gene is just that column's top list
  const hclors::MsScreenResult solo = hclors::ms_screen(beta.col(0), snps, {"p1"}, 3);
  REQUIRE(solo.kept_snp_ids == std::vector<std::string>{"s1", "s2", "s3"});
  REQUIRE(solo.per_gene_top.at("p1") == std::vector<std::string>{"s1", "s3", "s2"});

  // n_keep beyond p keeps every SNP
  const hclors::MsScreenResult all = hclors::ms_screen(beta, snps, probes, 10);
  REQUIRE(all.per_gene_top.at("p1").size() == 4);
  REQUIRE(all.kept_snp_ids.size() == 4);

  // disjoint argmaxes with n_keep = 1: union size equals the gene count
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(3, 3);
  diag(0, 0) = 1.0;
  diag(1, 1) = 2.0;
  diag(2, 2) = 3.0;
  const hclors::MsScreenResult spread =
      hclors::ms_screen(diag, {"s1", "s2", "s3"}, {"p1", "p2", "p3"}, 1);
  REQUIRE(spread.kept_snp_ids == std::vector<std::string>{"s1", "s2", "s3"});
}

TEST_CASE("gene column order cannot move the union") {
  hclors::Rng rng(410);
  Eigen::MatrixXd beta(6, 4);
  for (Eigen::Index j = 0; j < 4; ++j)
    for (Eigen::Index i = 0; i < 6; ++i) beta(i, j) = rng.normal();
  const std::vector<std::string> snps = {"s1", "s2", "s3", "s4", "s5", "s6"};

  const hclors::MsScreenResult forward =
      hclors::ms_screen(beta, snps, {"p1", "p2", "p3", "p4"}, 2);
  Eigen::MatrixXd shuffled(6, 4);
  shuffled.col(0) = beta.col(2);
  shuffled.col(1) = beta.col(0);
  shuffled.col(2) = beta.col(3);
  shuffled.col(3) = beta.col(1);
  const hclors::MsScreenResult backward =
      hclors::ms_screen(shuffled, snps, {"p3", "p1", "p4", "p2"}, 2);
  REQUIRE(forward.kept_snp_ids == backward.kept_snp_ids);
  REQUIRE(forward.per_gene_top.at("p2") == backward.per_gene_top.at("p2"));
}

TEST_CASE("the union outgrows a fixed-size screen on simulated data") {
  const hclors::GenotypeMatrix X = hclors::synthetic_genotypes(40, 120, 0.15, 0.5, 21);
  hclors::SimConfig config;
  config.n_active_snps = 6;
  config.genes_per_snp = 5;
  config.beta = 2.0;
  config.k_hidden = 4;
  config.seed = 9;
  const hclors::SimResult sim = hclors::simulate(X, 30, config);

  const double lambda = hclors::default_screen_lambda(sim.Y.values);
  const hclors::MarginalFit fit = hclors::fit_all_snps(sim.Y.values, X.values, lambda);
  const hclors::MsScreenResult ms = hclors::ms_screen(fit.beta_hat, X.snp_ids, sim.Y.probe_ids, 10);

  // the same budget per gene floods the union well past one screen's keep
  REQUIRE(ms.kept_snp_ids.size() > 10);
  for (const auto& [probe, top] : ms.per_gene_top) REQUIRE(top.size() == 10);
}

TEST_CASE("baseline screening rejects bad inputs") {
  Eigen::MatrixXd beta(2, 2);
  beta << 1.0, 2.0, 3.0, 4.0;
  const std::vector<std::string> snps = {"s1", "s2"};
  const std::vector<std::string> probes = {"p1", "p2"};

  REQUIRE_THROWS_MATCHES(hclors::ms_screen(beta, snps, probes, 0), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::ms_screen(beta, {"s1"}, probes, 1), Error,
                         testutil::error_kind(ErrorKind::dimension_mismatch));
  REQUIRE_THROWS_MATCHES(hclors::ms_screen(beta, snps, {"p1"}, 1), Error,
                         testutil::error_kind(ErrorKind::dimension_mismatch));
  REQUIRE_THROWS_MATCHES(hclors::ms_screen(Eigen::MatrixXd(0, 0), {}, {}, 1), Error,
                         testutil::error_kind(ErrorKind::empty_matrix));
  Eigen::MatrixXd bad = beta;
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_MATCHES(hclors::ms_screen(bad, snps, probes, 1), Error,
                         testutil::error_kind(ErrorKind::non_finite_input));
}

TEST_CASE("the kept set serializes as one id per line") {
  Eigen::MatrixXd beta(3, 1);
  beta << 2.0, -3.0, 1.0;
  const hclors::MsScreenResult result =
      hclors::ms_screen(beta, {"s1", "s2", "s3"}, {"p1"}, 2);
  testutil::TempDir dir;
  const std::string path = dir.file("kept.tsv");
  hclors::save_kept_set(path, result);
  REQUIRE(slurp(path) == "snp_id\ns1\ns2\n");
}
