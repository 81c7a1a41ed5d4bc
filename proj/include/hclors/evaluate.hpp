#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/lors.hpp"
#include "hclors/matrix_io.hpp"
#include "hclors/simulate.hpp"
#include "hclors/types.hpp"

namespace hclors {

struct PrCurve {
  std::vector<double> recall_points;  // strictly increasing, in (0, 1]
  std::vector<double> precision_means;
  int n_replicates = 1;
};

enum class CallClass { cis, semi_cis, trans, unknown };

inline const char* to_string(CallClass c) {
  switch (c) {
    case CallClass::cis: return "cis";
    case CallClass::semi_cis: return "semi_cis";
    case CallClass::trans: return "trans";
    default: return "unknown";
  }
}

struct EqtlCall {
  std::string snp_id;
  std::string probe_id;
  double effect = 0.0;
  std::optional<std::int64_t> distance_bp;  // absent off-annotation or across chromosomes
  CallClass classification = CallClass::unknown;
};

struct Hotspot {
  std::string snp_id;
  std::vector<std::string> probe_ids;  // sorted unique
};

struct OverlapResult {
  std::size_t count = 0;                    // calls found in the known set
  std::vector<double> cumulative_fraction;  // entry k-1 covers the top k calls
};

// Precision along the recall ladder j/|active|, j = 1..|active|, each
// taken at the shortest rank prefix reaching that recall. An active SNP
// missing from the ranking counts as ranked after everything else.
inline PrCurve ranking_pr_curve(const std::vector<std::string>& rank_order, const GroundTruth& truth) {
  if (truth.active_snp_ids.empty()) fail(ErrorKind::invalid_argument, "truth has no active SNPs");
  const std::set<std::string> active(truth.active_snp_ids.begin(), truth.active_snp_ids.end());
  std::set<std::string> seen;
  std::vector<std::size_t> hit_positions;  // 1-based prefix length at each new true positive
  for (std::size_t pos = 0; pos < rank_order.size(); ++pos) {
    const std::string& id = rank_order[pos];
    if (!seen.insert(id).second) fail(ErrorKind::duplicate_id, "ranking repeats snp id " + id);
    if (active.count(id)) hit_positions.push_back(pos + 1);
  }
  const std::size_t total = active.size();
  PrCurve curve;
  for (std::size_t j = 1; j <= total; ++j) {
    const std::size_t prefix = j <= hit_positions.size()
                                   ? hit_positions[j - 1]
                                   : rank_order.size() + (j - hit_positions.size());
    curve.recall_points.push_back(static_cast<double>(j) / static_cast<double>(total));
    curve.precision_means.push_back(static_cast<double>(j) / static_cast<double>(prefix));
  }
  return curve;
}

// Replicate curves share their recall ladder; precisions average
// entrywise.
inline PrCurve mean_pr_curve(const std::vector<PrCurve>& curves) {
  if (curves.empty()) fail(ErrorKind::invalid_argument, "no curves to average");
  PrCurve mean;
  mean.recall_points = curves.front().recall_points;
  mean.precision_means.assign(mean.recall_points.size(), 0.0);
  mean.n_replicates = 0;
  for (const PrCurve& curve : curves) {
    if (curve.recall_points != mean.recall_points)
      fail(ErrorKind::dimension_mismatch, "curves disagree on recall points");
    for (std::size_t i = 0; i < curve.precision_means.size(); ++i)
      mean.precision_means[i] += curve.precision_means[i];
    mean.n_replicates += curve.n_replicates;
  }
  for (double& value : mean.precision_means) value /= static_cast<double>(curves.size());
  return mean;
}

// precision@k over an ordered association list against the planted
// coefficients: the fraction of the top k pairs that are true effects.
inline std::vector<double> association_precision_curve(const std::vector<Association>& calls,
                                                       const Eigen::MatrixXd& B_true,
                                                       const std::vector<std::string>& snp_ids,
                                                       const std::vector<std::string>& probe_ids,
                                                       std::size_t top_k) {
  if (top_k < 1 || top_k > calls.size())
    fail(ErrorKind::invalid_argument, "top_k must lie in 1.." + std::to_string(calls.size()));
  if (static_cast<std::size_t>(B_true.rows()) != snp_ids.size() ||
      static_cast<std::size_t>(B_true.cols()) != probe_ids.size())
    fail(ErrorKind::dimension_mismatch, "truth ids do not match the coefficient matrix");
  std::map<std::string, Eigen::Index> snp_index;
  std::map<std::string, Eigen::Index> probe_index;
  for (std::size_t i = 0; i < snp_ids.size(); ++i) snp_index[snp_ids[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < probe_ids.size(); ++j) probe_index[probe_ids[j]] = static_cast<Eigen::Index>(j);

  std::vector<double> precision;
  std::size_t true_hits = 0;
  for (std::size_t k = 0; k < top_k; ++k) {
    const auto snp = snp_index.find(calls[k].snp_id);
    const auto probe = probe_index.find(calls[k].probe_id);
    if (snp == snp_index.end() || probe == probe_index.end())
      fail(ErrorKind::invalid_argument, "call (" + calls[k].snp_id + ", " + calls[k].probe_id +
                                            ") is outside the simulated panel");
    if (B_true(snp->second, probe->second) != 0.0) ++true_hits;
    precision.push_back(static_cast<double>(true_hits) / static_cast<double>(k + 1));
  }
  return precision;
}

// Distance classification. Thresholds are strict on both sides, so the
// exact boundary values fall in the middle band. Pairs on different
// chromosomes are trans with no distance; pairs off the annotation stay
// unknown.
inline EqtlCall classify_call(const std::string& snp_id, const std::string& probe_id,
                              const AnnotationTable& annotations) {
  EqtlCall call;
  call.snp_id = snp_id;
  call.probe_id = probe_id;
  const auto snp = annotations.snp_positions.find(snp_id);
  const auto probe = annotations.probe_midpoints.find(probe_id);
  if (snp == annotations.snp_positions.end() || probe == annotations.probe_midpoints.end()) return call;
  if (snp->second.chromosome != probe->second.chromosome) {
    call.classification = CallClass::trans;
    return call;
  }
  const std::int64_t distance = std::abs(snp->second.bp - probe->second.bp);
  call.distance_bp = distance;
  if (distance < 250000) call.classification = CallClass::cis;
  else if (distance > 5000000) call.classification = CallClass::trans;
  else call.classification = CallClass::semi_cis;
  return call;
}

// Minimum distinct-probe count that makes a SNP a hotspot. The small
// backoff keeps exactly-integer products from rounding up a notch.
inline std::size_t hotspot_threshold(std::size_t q_total, double fraction = 0.0021) {
  if (q_total < 1) fail(ErrorKind::invalid_argument, "q_total must be positive");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    fail(ErrorKind::invalid_argument, "hotspot fraction must lie strictly between 0 and 1");
  const double raw = fraction * static_cast<double>(q_total);
  const double needed = std::ceil(raw - 1e-9);
  return needed < 1.0 ? 1 : static_cast<std::size_t>(needed);
}

// SNPs whose calls reach the hotspot threshold, heaviest first, ties by
// snp id.
inline std::vector<Hotspot> detect_hotspots(const std::vector<EqtlCall>& calls, std::size_t q_total,
                                            double fraction = 0.0021) {
  const std::size_t threshold = hotspot_threshold(q_total, fraction);
  std::map<std::string, std::set<std::string>> probes_by_snp;
  for (const EqtlCall& call : calls) probes_by_snp[call.snp_id].insert(call.probe_id);
  std::vector<Hotspot> hotspots;
  for (auto& [snp_id, probes] : probes_by_snp) {
    if (probes.size() < threshold) continue;
    hotspots.push_back({snp_id, std::vector<std::string>(probes.begin(), probes.end())});
  }
  std::sort(hotspots.begin(), hotspots.end(), [](const Hotspot& lhs, const Hotspot& rhs) {
    if (lhs.probe_ids.size() != rhs.probe_ids.size()) return lhs.probe_ids.size() > rhs.probe_ids.size();
    return lhs.snp_id < rhs.snp_id;
  });
  return hotspots;
}

// Exact-pair overlap between an ordered call list and a known set, with
// the cumulative fraction at every prefix for plotting.
inline OverlapResult overlap_with_known(const std::vector<Association>& calls,
                                        const std::set<std::pair<std::string, std::string>>& known) {
  OverlapResult out;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < calls.size(); ++k) {
    if (known.count({calls[k].snp_id, calls[k].probe_id})) ++hits;
    out.cumulative_fraction.push_back(static_cast<double>(hits) / static_cast<double>(k + 1));
  }
  out.count = hits;
  return out;
}

inline OverlapResult overlap_with_known(const std::vector<Association>& calls, const std::string& path) {
  const auto rows = load_known_pairs(path);
  return overlap_with_known(calls, std::set<std::pair<std::string, std::string>>(rows.begin(), rows.end()));
}

// Plot-data writers: plain two-column TSVs.
inline void save_pr_curve(const std::string& path, const PrCurve& curve) {
  TextLineWriter writer(path);
  writer.write_line("recall\tprecision");
  for (std::size_t i = 0; i < curve.recall_points.size(); ++i)
    writer.write_line(format_double(curve.recall_points[i]) + "\t" + format_double(curve.precision_means[i]));
  writer.close();
}

inline void save_precision_at_k(const std::string& path, const std::vector<double>& precision) {
  TextLineWriter writer(path);
  writer.write_line("k\tprecision");
  for (std::size_t k = 0; k < precision.size(); ++k)
    writer.write_line(std::to_string(k + 1) + "\t" + format_double(precision[k]));
  writer.close();
}

inline void save_overlap_curve(const std::string& path, const OverlapResult& overlap) {
  TextLineWriter writer(path);
  writer.write_line("rank\toverlap_fraction");
  for (std::size_t k = 0; k < overlap.cumulative_fraction.size(); ++k)
    writer.write_line(std::to_string(k + 1) + "\t" + format_double(overlap.cumulative_fraction[k]));
  writer.close();
}

inline void save_calls(const std::string& path, const std::vector<EqtlCall>& calls) {
  TextLineWriter writer(path);
  writer.write_line("snp_id\tprobe_id\teffect\tdistance_bp\tclassification");
  for (const EqtlCall& call : calls) {
    detail::check_id_writable(call.snp_id, "snp id");
    detail::check_id_writable(call.probe_id, "probe id");
    writer.write_line(call.snp_id + "\t" + call.probe_id + "\t" + format_double(call.effect) + "\t" +
                      (call.distance_bp ? std::to_string(*call.distance_bp) : "NA") + "\t" +
                      to_string(call.classification));
  }
  writer.close();
}

inline void save_hotspots(const std::string& path, const std::vector<Hotspot>& hotspots) {
  TextLineWriter writer(path);
  writer.write_line("snp_id\tn_probes\tprobe_ids");
  for (const Hotspot& h : hotspots) {
    detail::check_id_writable(h.snp_id, "snp id");
    std::string joined;
    for (const std::string& probe : h.probe_ids) {
      detail::check_id_writable(probe, "probe id");
      if (probe.find(',') != std::string::npos)
        fail(ErrorKind::invalid_argument, "probe id '" + probe + "' contains a comma");
      if (!joined.empty()) joined += ',';
      joined += probe;
    }
    writer.write_line(h.snp_id + "\t" + std::to_string(h.probe_ids.size()) + "\t" + joined);
  }
  writer.close();
}

}  // namespace hclors
