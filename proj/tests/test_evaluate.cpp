#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hclors/evaluate.hpp"
#include "hclors/rng.hpp"
#include "support/catch_matchers.hpp"
#include "support/temp_dir.hpp"

using hclors::CallClass;
using hclors::Error;
using hclors::ErrorKind;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

hclors::GroundTruth truth_with_actives(const std::vector<std::string>& ids) {
  hclors::GroundTruth truth;
  truth.active_snp_ids = ids;
  return truth;
}

}  // namespace

TEST_CASE("perfect and reversed rankings bracket the precision curve") {
  std::vector<std::string> actives;
  for (int i = 1; i <= 20; ++i) actives.push_back("a" + std::to_string(i));
  std::vector<std::string> fillers;
  for (int i = 1; i <= 80; ++i) fillers.push_back("x" + std::to_string(i));
  const hclors::GroundTruth truth = truth_with_actives(actives);

  std::vector<std::string> perfect = actives;
  perfect.insert(perfect.end(), fillers.begin(), fillers.end());
  const hclors::PrCurve best = hclors::ranking_pr_curve(perfect, truth);
  REQUIRE(best.recall_points.size() == 20);
  REQUIRE(best.recall_points.front() == 1.0 / 20.0);
  REQUIRE(best.recall_points.back() == 1.0);
  for (const double precision : best.precision_means) REQUIRE(precision == 1.0);

  std::vector<std::string> reversed = fillers;
  reversed.insert(reversed.end(), actives.begin(), actives.end());
  const hclors::PrCurve worst = hclors::ranking_pr_curve(reversed, truth);
  REQUIRE(worst.precision_means.back() == 20.0 / 100.0);
  for (std::size_t j = 1; j <= 20; ++j)
    REQUIRE(worst.precision_means[j - 1] == static_cast<double>(j) / static_cast<double>(80 + j));
}

TEST_CASE("actives missing from the ranking count as ranked last") {
  const hclors::GroundTruth truth = truth_with_actives({"a1", "a2", "a3"});
  const hclors::PrCurve curve = hclors::ranking_pr_curve({"x1", "a1", "x2", "a2"}, truth);
  REQUIRE(curve.recall_points == std::vector<double>{1.0 / 3.0, 2.0 / 3.0, 1.0});
  REQUIRE(curve.precision_means[0] == 0.5);   // a1 found at prefix 2
  REQUIRE(curve.precision_means[1] == 0.5);   // a2 found at prefix 4
  REQUIRE(curve.precision_means[2] == 0.6);   // a3 appended after the list: 3 of 5

  REQUIRE_THROWS_MATCHES(hclors::ranking_pr_curve({"x1"}, truth_with_actives({})), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::ranking_pr_curve({"x1", "x1"}, truth), Error,
                         testutil::error_kind(ErrorKind::duplicate_id));
}

TEST_CASE("mean curves average replicates at fixed recall") {
  hclors::PrCurve one;
  one.recall_points = {0.5, 1.0};
  one.precision_means = {1.0, 0.5};
  hclors::PrCurve two;
  two.recall_points = {0.5, 1.0};
  two.precision_means = {0.5, 0.25};
  two.n_replicates = 2;

  const hclors::PrCurve mean = hclors::mean_pr_curve({one, two});
  REQUIRE(mean.recall_points == one.recall_points);
  REQUIRE(mean.precision_means == std::vector<double>{0.75, 0.375});
  REQUIRE(mean.n_replicates == 3);

  hclors::PrCurve other;
  other.recall_points = {0.25, 1.0};
  other.precision_means = {1.0, 1.0};
  REQUIRE_THROWS_MATCHES(hclors::mean_pr_curve({one, other}), Error,
                         testutil::error_kind(ErrorKind::dimension_mismatch));
  REQUIRE_THROWS_MATCHES(hclors::mean_pr_curve({}), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
}

TEST_CASE("precision at k matches brute force") {
  const std::vector<std::string> snps = {"s1", "s2", "s3", "s4", "s5", "s6"};
  const std::vector<std::string> probes = {"p1", "p2", "p3", "p4", "p5"};

  hclors::Rng rng(301);
  for (int instance = 0; instance < 30; ++instance) {
    Eigen::MatrixXd B_true = Eigen::MatrixXd::Zero(6, 5);
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = 0; j < 5; ++j)
        if (rng.uniform() < 0.3) B_true(i, j) = rng.uniform() < 0.5 ? 1.0 : -1.0;

    std::vector<hclors::Association> calls;
    for (const std::size_t flat : rng.sample_without_replacement(30, 30))
      calls.push_back({snps[flat / 5], probes[flat % 5], 1.0});

    const std::vector<double> curve =
        hclors::association_precision_curve(calls, B_true, snps, probes, calls.size());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < calls.size(); ++k) {
      const Eigen::Index i =
          std::find(snps.begin(), snps.end(), calls[k].snp_id) - snps.begin();
      const Eigen::Index j =
          std::find(probes.begin(), probes.end(), calls[k].probe_id) - probes.begin();
      if (B_true(i, j) != 0.0) ++hits;
      REQUIRE(curve[k] == static_cast<double>(hits) / static_cast<double>(k + 1));
    }
  }

  // the two worked patterns
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(6, 5);
  B(0, 0) = 1.0;
  B(1, 1) = 1.0;
  const std::vector<hclors::Association> alternating = {
      {"s1", "p1", 2.0}, {"s1", "p2", 1.5}, {"s2", "p2", 1.0}, {"s2", "p1", 0.5}};
  const auto alt = hclors::association_precision_curve(alternating, B, snps, probes, 4);
  REQUIRE(alt[1] == 0.5);
  REQUIRE(alt == std::vector<double>{1.0, 0.5, 2.0 / 3.0, 0.5});
  const std::vector<hclors::Association> all_true = {{"s1", "p1", 2.0}, {"s2", "p2", 1.0}};
  REQUIRE(hclors::association_precision_curve(all_true, B, snps, probes, 2) ==
          std::vector<double>{1.0, 1.0});

  REQUIRE_THROWS_MATCHES(hclors::association_precision_curve(all_true, B, snps, probes, 0), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::association_precision_curve(all_true, B, snps, probes, 3), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  const std::vector<hclors::Association> stranger = {{"nope", "p1", 1.0}};
  REQUIRE_THROWS_MATCHES(hclors::association_precision_curve(stranger, B, snps, probes, 1), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::association_precision_curve(all_true, B, snps, {"p1"}, 1), Error,
                         testutil::error_kind(ErrorKind::dimension_mismatch));
}

TEST_CASE("distance rules classify calls") {
  hclors::AnnotationTable ann;
  ann.snp_positions["s1"] = {"1", 100000};
  ann.probe_midpoints["p1"] = {"1", 145340};
  ann.snp_positions["s2"] = {"1", 1000000};
  ann.probe_midpoints["p2"] = {"1", 134630000};
  ann.snp_positions["s3"] = {"2", 0};
  ann.probe_midpoints["p3"] = {"2", 1000000};
  ann.probe_midpoints["p4"] = {"2", 250000};
  ann.probe_midpoints["p5"] = {"2", 5000000};
  ann.snp_positions["s6"] = {"3", 500};

  const hclors::EqtlCall cis = hclors::classify_call("s1", "p1", ann);
  REQUIRE(cis.classification == CallClass::cis);
  REQUIRE(cis.distance_bp.value() == 45340);

  const hclors::EqtlCall trans = hclors::classify_call("s2", "p2", ann);
  REQUIRE(trans.classification == CallClass::trans);
  REQUIRE(trans.distance_bp.value() == 133630000);

  const hclors::EqtlCall semi = hclors::classify_call("s3", "p3", ann);
  REQUIRE(semi.classification == CallClass::semi_cis);
  REQUIRE(semi.distance_bp.value() == 1000000);

  // both thresholds are strict, so the boundary lands in the middle
  REQUIRE(hclors::classify_call("s3", "p4", ann).classification == CallClass::semi_cis);
  REQUIRE(hclors::classify_call("s3", "p5", ann).classification == CallClass::semi_cis);

  const hclors::EqtlCall crossed = hclors::classify_call("s6", "p1", ann);
  REQUIRE(crossed.classification == CallClass::trans);
  REQUIRE(!crossed.distance_bp.has_value());

  const hclors::EqtlCall lost = hclors::classify_call("shrug", "p1", ann);
  REQUIRE(lost.classification == CallClass::unknown);
  REQUIRE(!lost.distance_bp.has_value());
  REQUIRE(hclors::classify_call("s1", "shrug", ann).classification == CallClass::unknown);
}

TEST_CASE("hotspot thresholds match the published arithmetic") {
  REQUIRE(hclors::hotspot_threshold(2010, 0.0021) == 5);
  REQUIRE(hclors::hotspot_threshold(7084, 0.0021) == 15);
  // an exact integer product must not round up a notch
  REQUIRE(hclors::hotspot_threshold(40, 0.25) == 10);
  REQUIRE_THROWS_MATCHES(hclors::hotspot_threshold(0, 0.1), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::hotspot_threshold(100, 0.0), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));
  REQUIRE_THROWS_MATCHES(hclors::hotspot_threshold(100, 1.0), Error,
                         testutil::error_kind(ErrorKind::invalid_argument));

  std::vector<hclors::EqtlCall> calls;
  auto add = [&](const std::string& snp, const std::string& probe) {
    hclors::EqtlCall call;
    call.snp_id = snp;
    call.probe_id = probe;
    calls.push_back(call);
  };
  for (int g = 1; g <= 5; ++g) add("h1", "g" + std::to_string(g));
  add("h1", "g1");  // duplicate pair must not inflate the count
  for (int g = 1; g <= 4; ++g) add("h2", "g" + std::to_string(g));
  for (int g = 1; g <= 6; ++g) add("h3", "g" + std::to_string(g));
  for (int g = 2; g <= 6; ++g) add("h0", "g" + std::to_string(g));

  const std::vector<hclors::Hotspot> hot = hclors::detect_hotspots(calls, 2010);
  REQUIRE(hot.size() == 3);
  REQUIRE(hot[0].snp_id == "h3");
  REQUIRE(hot[0].probe_ids.size() == 6);
  REQUIRE(hot[1].snp_id == "h0");  // ties on count fall back to the id
  REQUIRE(hot[2].snp_id == "h1");
  REQUIRE(hot[2].probe_ids == std::vector<std::string>{"g1", "g2", "g3", "g4", "g5"});
}

TEST_CASE("overlap against a known set") {
  const std::vector<hclors::Association> calls = {
      {"s1", "p1", 3.0}, {"s2", "p2", 2.0}, {"s1", "p3", 1.0}, {"s4", "p1", 0.5}};

  std::set<std::pair<std::string, std::string>> known;
  for (const auto& call : calls) known.insert({call.snp_id, call.probe_id});
  const hclors::OverlapResult full = hclors::overlap_with_known(calls, known);
  REQUIRE(full.count == 4);
  REQUIRE(full.cumulative_fraction == std::vector<double>{1.0, 1.0, 1.0, 1.0});

  const hclors::OverlapResult none =
      hclors::overlap_with_known(calls, std::set<std::pair<std::string, std::string>>{});
  REQUIRE(none.count == 0);
  REQUIRE(none.cumulative_fraction == std::vector<double>{0.0, 0.0, 0.0, 0.0});

  testutil::TempDir dir;
  const std::string path = dir.file("known.tsv");
  {
    std::ofstream out(path);
    out << "s1\tp1\n\ns2\tp2\n";
  }
  const hclors::OverlapResult half = hclors::overlap_with_known(calls, path);
  REQUIRE(half.count == 2);
  REQUIRE(half.cumulative_fraction == std::vector<double>{1.0, 1.0, 2.0 / 3.0, 0.5});

  const std::string broken = dir.file("broken.tsv");
  {
    std::ofstream out(broken);
    out << "s1\tp1\textra\n";
  }
  REQUIRE_THROWS_MATCHES(hclors::overlap_with_known(calls, broken), Error,
                         testutil::error_kind(ErrorKind::dimension_mismatch));
  REQUIRE_THROWS_MATCHES(hclors::overlap_with_known(calls, dir.file("absent.tsv")), Error,
                         testutil::error_kind(ErrorKind::io_failure));
}

TEST_CASE("a known set built from the truth reproduces the precision curve") {
  const std::vector<std::string> snps = {"s1", "s2", "s3"};
  const std::vector<std::string> probes = {"p1", "p2"};
  Eigen::MatrixXd B_true = Eigen::MatrixXd::Zero(3, 2);
  B_true(0, 0) = 2.0;
  B_true(2, 1) = -1.0;

  testutil::TempDir dir;
  const std::string path = dir.file("pairs.tsv");
  {
    std::ofstream out(path);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 2; ++j)
        if (B_true(i, j) != 0.0)
          out << snps[static_cast<std::size_t>(i)] << '\t' << probes[static_cast<std::size_t>(j)] << '\n';
  }

  const std::vector<hclors::Association> calls = {
      {"s1", "p1", 5.0}, {"s2", "p1", 4.0}, {"s3", "p2", 3.0}, {"s3", "p1", 2.0}};
  const hclors::OverlapResult overlap = hclors::overlap_with_known(calls, path);
  const std::vector<double> precision =
      hclors::association_precision_curve(calls, B_true, snps, probes, calls.size());
  REQUIRE(overlap.cumulative_fraction == precision);
}

TEST_CASE("plot data serializes in plain columns") {
  testutil::TempDir dir;

  hclors::PrCurve curve;
  curve.recall_points = {0.5, 1.0};
  curve.precision_means = {1.0, 0.25};
  const std::string pr = dir.file("pr.tsv");
  hclors::save_pr_curve(pr, curve);
  REQUIRE(slurp(pr) == "recall\tprecision\n0.5\t1\n1\t0.25\n");

  const std::string pk = dir.file("pk.tsv");
  hclors::save_precision_at_k(pk, {1.0, 0.5});
  REQUIRE(slurp(pk) == "k\tprecision\n1\t1\n2\t0.5\n");

  hclors::OverlapResult overlap;
  overlap.count = 1;
  overlap.cumulative_fraction = {0.0, 0.5};
  const std::string ov = dir.file("ov.tsv");
  hclors::save_overlap_curve(ov, overlap);
  REQUIRE(slurp(ov) == "rank\toverlap_fraction\n1\t0\n2\t0.5\n");

  hclors::EqtlCall near;
  near.snp_id = "s1";
  near.probe_id = "p1";
  near.effect = 1.25;
  near.distance_bp = 45340;
  near.classification = CallClass::cis;
  hclors::EqtlCall lost;
  lost.snp_id = "s9";
  lost.probe_id = "p9";
  lost.effect = -0.5;
  const std::string cl = dir.file("calls.tsv");
  hclors::save_calls(cl, {near, lost});
  REQUIRE(slurp(cl) ==
          "snp_id\tprobe_id\teffect\tdistance_bp\tclassification\n"
          "s1\tp1\t1.25\t45340\tcis\n"
          "s9\tp9\t-0.5\tNA\tunknown\n");
}
