#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hclors {

// Samples in rows once loaded; snp_ids indexes the columns.
struct GenotypeMatrix {
  Eigen::MatrixXd values;  // n x p
  std::vector<std::string> snp_ids;
  std::vector<std::string> sample_ids;

  Eigen::Index n_samples() const { return values.rows(); }
  Eigen::Index n_snps() const { return values.cols(); }
};

struct ExpressionMatrix {
  Eigen::MatrixXd values;  // n x q
  std::vector<std::string> probe_ids;
  std::vector<std::string> sample_ids;

  Eigen::Index n_samples() const { return values.rows(); }
  Eigen::Index n_probes() const { return values.cols(); }
};

// Effect estimates, SNPs in rows.
struct CoefficientMatrix {
  Eigen::MatrixXd values;  // r x q
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
};

struct Locus {
  std::string chromosome;
  std::int64_t bp = 0;  // base pairs, >= 0
};

struct AnnotationTable {
  std::map<std::string, Locus> snp_positions;
  std::map<std::string, Locus> probe_midpoints;
};

}  // namespace hclors
