#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/matrix_io.hpp"

namespace hclors {

struct MsScreenResult {
  std::vector<std::string> kept_snp_ids;                          // sorted unique union
  std::map<std::string, std::vector<std::string>> per_gene_top;   // probe id -> snp ids, rank order
};

// Comparison baseline, not a faithful replica of the full published
// pipeline: each gene keeps its top n_keep SNPs by |initial estimate|
// and the joint model sees the union. Ties break by snp id.
inline MsScreenResult ms_screen(const Eigen::MatrixXd& beta_hat, const std::vector<std::string>& snp_ids,
                                const std::vector<std::string>& probe_ids, Eigen::Index n_keep) {
  const Eigen::Index p = beta_hat.rows();
  const Eigen::Index q = beta_hat.cols();
  if (p == 0 || q == 0) fail(ErrorKind::empty_matrix, "no estimates to screen");
  if (n_keep < 1) fail(ErrorKind::invalid_argument, "n_keep must be at least 1");
  if (static_cast<std::size_t>(p) != snp_ids.size() || static_cast<std::size_t>(q) != probe_ids.size())
    fail(ErrorKind::dimension_mismatch, "estimates are " + std::to_string(p) + "x" + std::to_string(q) +
                                            " but " + std::to_string(snp_ids.size()) + " snp ids and " +
                                            std::to_string(probe_ids.size()) + " probe ids were given");
  if (!beta_hat.allFinite()) fail(ErrorKind::non_finite_input, "estimates must be finite");

  const Eigen::Index keep = std::min(n_keep, p);
  MsScreenResult out;
  std::set<std::string> in_union;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index lhs, Eigen::Index rhs) {
      const double la = std::abs(beta_hat(lhs, j));
      const double ra = std::abs(beta_hat(rhs, j));
      if (la != ra) return la > ra;
      return snp_ids[static_cast<std::size_t>(lhs)] < snp_ids[static_cast<std::size_t>(rhs)];
    });
    auto& top = out.per_gene_top[probe_ids[static_cast<std::size_t>(j)]];
    for (Eigen::Index k = 0; k < keep; ++k) {
      const std::string& id = snp_ids[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
      top.push_back(id);
      in_union.insert(id);
    }
  }
  out.kept_snp_ids.assign(in_union.begin(), in_union.end());
  return out;
}

inline void save_kept_set(const std::string& path, const MsScreenResult& result) {
  TextLineWriter writer(path);
  writer.write_line("snp_id");
  for (const std::string& id : result.kept_snp_ids) {
    detail::check_id_writable(id, "snp id");
    writer.write_line(id);
  }
  writer.close();
}

}  // namespace hclors
