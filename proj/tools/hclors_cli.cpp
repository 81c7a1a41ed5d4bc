// Subcommand front-end for the eQTL mapping pipeline. Every run writes
// its outputs plus a manifest.json recording inputs (with content
// hashes), the effective configuration, and per-stage wall times. Wall
// times live only in the manifest, so all other outputs are reproduced
// byte for byte by a rerun with the same inputs and seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <hclors/error.hpp>
#include <hclors/evaluate.hpp>
#include <hclors/hc.hpp>
#include <hclors/lors.hpp>
#include <hclors/marginal.hpp>
#include <hclors/matrix_io.hpp>
#include <hclors/simulate.hpp>
#include <hclors/types.hpp>
#include <hclors/version.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace {

using nlohmann::json;

// Command-line mistakes exit 2; failures while executing exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) hclors::fail(hclors::ErrorKind::io_failure, "cannot open '" + path + "' for hashing");
  std::uint64_t hash = 1469598103934665603ull;
  char buffer[1 << 16];
  for (;;) {
    in.read(buffer, sizeof buffer);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 1099511628211ull;
    }
    if (!in) break;
  }
  if (in.bad()) hclors::fail(hclors::ErrorKind::io_failure, "read error while hashing '" + path + "'");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

class StageClock {
 public:
  template <typename Fn>
  decltype(auto) timed(const char* name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<std::invoke_result_t<Fn>>) {
      fn();
      record(name, start);
    } else {
      auto out = fn();
      record(name, start);
      return out;
    }
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [name, seconds] : stages_) j[name] = seconds;
    return j;
  }

 private:
  void record(const char* name, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    stages_.emplace_back(name, elapsed.count());
  }

  std::vector<std::pair<std::string, double>> stages_;
};

struct Manifest {
  explicit Manifest(std::string name) : subcommand(std::move(name)) {}

  std::string subcommand;
  json inputs = json::object();
  json config = json::object();
  std::optional<std::uint64_t> seed;

  void add_input(const char* role, const std::string& path) {
    inputs[role] = {{"path", path}, {"fnv1a64", fnv1a64(path)}};
  }

  void write(const std::filesystem::path& dir, const StageClock& clock) const {
    json j;
    j["subcommand"] = subcommand;
    j["tool_version"] = hclors::version_string;
    j["inputs"] = inputs;
    j["config"] = config;
    if (seed) j["seed"] = *seed;
    j["timings_seconds"] = clock.to_json();
    const std::filesystem::path path = dir / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) hclors::fail(hclors::ErrorKind::io_failure, "cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    out.close();
    if (!out) hclors::fail(hclors::ErrorKind::io_failure, "write failed for '" + path.string() + "'");
  }
};

std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    hclors::fail(hclors::ErrorKind::io_failure, "cannot create directory '" + dir + "': " + ec.message());
  return std::filesystem::path(dir);
}

std::filesystem::path parent_dir(const std::string& file_path) {
  const std::filesystem::path parent = std::filesystem::path(file_path).parent_path();
  if (parent.empty()) return std::filesystem::path(".");
  return ensure_dir(parent.string());
}

// key=value lines applied to every option the command line left unset,
// so explicit flags always win. '#' starts a comment; keys are the long
// option names without the dashes; list values are comma-separated.
void apply_config(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  const auto trim = [](const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const std::string where = "'" + path + "' line " + std::to_string(line_number);
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) throw UsageError(where + " is not key=value: '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw UsageError(where + " has an empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw UsageError(where + " names no " + cmd->get_name() + " option: '" + key + "'");
    if (opt->count() > 0) continue;
    if (opt->get_expected_max() > 1) {
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = value.find(',', start);
        opt->add_result(trim(value.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

// "auto" defers the choice to a data-driven default.
std::optional<double> parse_auto(const std::string& text, const char* flag) {
  if (text == "auto") return std::nullopt;
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw UsageError(std::string(flag) + " expects a number or 'auto', got '" + text + "'");
  return value;
}

void check_samples_match(const hclors::GenotypeMatrix& X, const hclors::ExpressionMatrix& Y) {
  if (X.sample_ids != Y.sample_ids)
    hclors::fail(hclors::ErrorKind::dimension_mismatch,
                 "genotype and expression files disagree on the sample ids");
}

void write_id_column(const std::string& path, const std::vector<std::string>& ids) {
  hclors::TextLineWriter writer(path);
  writer.write_line("snp_id");
  for (const std::string& id : ids) writer.write_line(id);
  writer.close();
}

std::vector<std::string> load_id_column(const std::string& path) {
  hclors::TextLineReader reader(path);
  std::vector<std::string> ids;
  std::string line;
  bool first = true;
  while (reader.next(line)) {
    if (first && line == "snp_id") {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    ids.push_back(line);
  }
  if (ids.empty()) hclors::fail(hclors::ErrorKind::empty_matrix, "'" + path + "' lists no snp ids");
  return ids;
}

hclors::GenotypeMatrix select_columns(const hclors::GenotypeMatrix& X, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Eigen::Index> column_of;
  column_of.reserve(X.snp_ids.size());
  for (std::size_t c = 0; c < X.snp_ids.size(); ++c)
    column_of.emplace(X.snp_ids[c], static_cast<Eigen::Index>(c));
  hclors::GenotypeMatrix out;
  out.sample_ids = X.sample_ids;
  out.values.resize(X.values.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto hit = column_of.find(ids[k]);
    if (hit == column_of.end())
      hclors::fail(hclors::ErrorKind::invalid_argument,
                   "snp '" + ids[k] + "' is missing from the genotype matrix");
    out.snp_ids.push_back(ids[k]);
    out.values.col(static_cast<Eigen::Index>(k)) = X.values.col(hit->second);
  }
  return out;
}

// Rank column inverted back to the id order it encodes.
std::vector<std::string> rank_order_of(const hclors::HcScoreTable& table) {
  const std::size_t p = table.snp_ids.size();
  std::vector<std::string> order(p);
  for (std::size_t i = 0; i < p; ++i) order[table.rank[i] - 1] = table.snp_ids[i];
  return order;
}

std::vector<std::string> active_rows_of(const hclors::CoefficientMatrix& truth) {
  std::vector<std::string> active;
  for (Eigen::Index i = 0; i < truth.values.rows(); ++i) {
    if (truth.values.row(i).cwiseAbs().maxCoeff() > 0.0)
      active.push_back(truth.row_ids[static_cast<std::size_t>(i)]);
  }
  return active;
}

hclors::HcGrid parse_grid(const std::string& text) {
  return text == "unrestricted" ? hclors::HcGrid::unrestricted : hclors::HcGrid::restricted;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string config;
  std::string out_dir;
  std::string genotypes;
  long long n = 0;
  long long p = 0;
  long long q = 0;
  double maf_low = 0.1;
  double maf_high = 0.5;
  long long n_active = 20;
  long long genes_per_snp = 10;
  double beta = 0.5;
  long long k_hidden = 10;
  double hidden_scale = 0.1;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  long long genotype_seed = -1;  // -1 derives seed + 1 so the two streams differ
};

void run_simulate(const SimulateOpts& o) {
  require_flag(o.out_dir, "--out-dir");
  if (o.q < 1) throw UsageError("--q is required");
  const std::filesystem::path dir = ensure_dir(o.out_dir);
  Manifest manifest{"simulate"};
  StageClock clock;

  hclors::GenotypeMatrix X;
  if (!o.genotypes.empty()) {
    manifest.add_input("genotypes", o.genotypes);
    X = clock.timed("load", [&] { return hclors::load_genotype(o.genotypes); });
  } else {
    if (o.n < 1 || o.p < 1) throw UsageError("give --genotypes, or both --n and --p to synthesize them");
    const std::uint64_t gseed =
        o.genotype_seed >= 0 ? static_cast<std::uint64_t>(o.genotype_seed) : o.seed + 1;
    X = clock.timed("genotypes", [&] {
      return hclors::synthetic_genotypes(o.n, o.p, o.maf_low, o.maf_high, gseed);
    });
    hclors::save_genotype(X, (dir / "genotypes.tsv").string());
    manifest.config["genotype_seed"] = gseed;
    manifest.config["maf_low"] = o.maf_low;
    manifest.config["maf_high"] = o.maf_high;
  }

  hclors::SimConfig cfg;
  cfg.n_active_snps = o.n_active;
  cfg.genes_per_snp = o.genes_per_snp;
  cfg.beta = o.beta;
  cfg.k_hidden = o.k_hidden;
  cfg.hidden_scale = o.hidden_scale;
  cfg.noise_sd = o.noise_sd;
  cfg.seed = o.seed;
  const hclors::SimResult sim = clock.timed("simulate", [&] { return hclors::simulate(X, o.q, cfg); });

  clock.timed("write", [&] {
    hclors::save_expression(sim.Y, (dir / "expression.tsv").string());
    hclors::CoefficientMatrix truth;
    truth.values = sim.truth.B_true;
    truth.row_ids = X.snp_ids;
    truth.col_ids = sim.Y.probe_ids;
    hclors::save_coefficients(truth, (dir / "b_true.tsv").string());
    hclors::ExpressionMatrix hidden;
    hidden.values = sim.U;
    hidden.probe_ids = sim.Y.probe_ids;
    hidden.sample_ids = sim.Y.sample_ids;
    hclors::save_expression(hidden, (dir / "hidden.tsv").string());
  });

  manifest.config["q"] = o.q;
  manifest.config["n_active"] = o.n_active;
  manifest.config["genes_per_snp"] = o.genes_per_snp;
  manifest.config["beta"] = o.beta;
  manifest.config["k_hidden"] = o.k_hidden;
  manifest.config["hidden_scale"] = o.hidden_scale;
  manifest.config["noise_sd"] = o.noise_sd;
  manifest.seed = o.seed;
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- screen

struct ScreenOpts {
  std::string config;
  std::string genotypes;
  std::string expression;
  std::string out_dir;
  std::string lambda = "auto";
  double tol = 1e-6;
  long long max_iter = 100;
  int threads = 0;
};

void run_screen(const ScreenOpts& o) {
  require_flag(o.genotypes, "--genotypes");
  require_flag(o.expression, "--expression");
  require_flag(o.out_dir, "--out-dir");
  const std::optional<double> lambda_arg = parse_auto(o.lambda, "--lambda");
  const std::filesystem::path dir = ensure_dir(o.out_dir);
  Manifest manifest{"screen"};
  StageClock clock;
  manifest.add_input("genotypes", o.genotypes);
  manifest.add_input("expression", o.expression);

  hclors::GenotypeMatrix X;
  hclors::ExpressionMatrix Y;
  clock.timed("load", [&] {
    X = hclors::load_genotype(o.genotypes);
    Y = hclors::load_expression(o.expression);
    check_samples_match(X, Y);
  });

  const double lambda = lambda_arg ? *lambda_arg : hclors::default_screen_lambda(Y.values);
  const int threads = resolve_threads(o.threads);
  const hclors::MarginalFit fit = clock.timed("screen", [&] {
    return hclors::fit_all_snps(Y.values, X.values, lambda, o.tol, static_cast<int>(o.max_iter), threads);
  });

  clock.timed("write", [&] {
    hclors::CoefficientMatrix beta;
    beta.values = fit.beta_hat;
    beta.row_ids = X.snp_ids;
    beta.col_ids = Y.probe_ids;
    hclors::save_coefficients(beta, (dir / "beta_hat.tsv").string());
  });

  manifest.config["lambda"] = lambda;
  manifest.config["tol"] = o.tol;
  manifest.config["max_iter"] = o.max_iter;
  manifest.config["threads"] = threads;
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- rank

struct RankOpts {
  std::string config;
  std::string beta_hat;
  std::string out;
  std::string method = "hc";
  std::string grid = "restricted";
  std::string genotypes;
  std::string expression;
  bool no_center_x = false;
  int threads = 0;
};

void run_rank(const RankOpts& o) {
  require_flag(o.beta_hat, "--beta-hat");
  require_flag(o.out, "--out");
  if (o.method == "hc") {
    if (o.genotypes.empty() != o.expression.empty())
      throw UsageError("--genotypes and --expression must be given together");
  } else if (!o.genotypes.empty() || !o.expression.empty()) {
    throw UsageError("baseline methods rank the raw coefficients; omit --genotypes/--expression");
  }
  const std::filesystem::path dir = parent_dir(o.out);
  Manifest manifest{"rank"};
  StageClock clock;
  manifest.add_input("beta_hat", o.beta_hat);

  const hclors::CoefficientMatrix beta =
      clock.timed("load", [&] { return hclors::load_coefficients(o.beta_hat); });
  const int threads = resolve_threads(o.threads);

  hclors::HcScoreTable table;
  if (o.method == "hc") {
    hclors::ZscoreMatrix Z;
    if (!o.genotypes.empty()) {
      manifest.add_input("genotypes", o.genotypes);
      manifest.add_input("expression", o.expression);
      clock.timed("standardize", [&] {
        const hclors::GenotypeMatrix X = hclors::load_genotype(o.genotypes);
        const hclors::ExpressionMatrix Y = hclors::load_expression(o.expression);
        check_samples_match(X, Y);
        if (beta.row_ids != X.snp_ids || beta.col_ids != Y.probe_ids)
          hclors::fail(hclors::ErrorKind::dimension_mismatch,
                       "coefficient ids do not match the genotype/expression files");
        Z = hclors::standardize(beta.values, Y.values, X.values, !o.no_center_x, threads);
      });
    } else {
      // Without the raw matrices the loaded coefficients are taken to
      // be standardized scores already.
      Z.values = beta.values;
    }
    table = clock.timed("rank", [&] {
      return hclors::hc_rank_all(Z, beta.row_ids, parse_grid(o.grid), threads);
    });
  } else {
    const hclors::BaselineMethod method =
        o.method == "rowmeans" ? hclors::BaselineMethod::row_means : hclors::BaselineMethod::extreme_val;
    table = clock.timed("rank", [&] { return hclors::baseline_rank(beta.values, beta.row_ids, method); });
  }

  clock.timed("write", [&] { hclors::save_score_table(o.out, table); });

  manifest.config["method"] = o.method;
  if (o.method == "hc") {
    manifest.config["grid"] = o.grid;
    manifest.config["center_x"] = !o.no_center_x;
  }
  manifest.config["threads"] = threads;
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- fit

struct FitOpts {
  std::string config;
  std::string genotypes;
  std::string expression;
  std::string out_dir;
  std::string scores;
  std::string keep;
  std::string rho = "auto";
  std::string lambda = "auto";
  std::vector<double> rho_grid;
  std::vector<double> lambda_grid;
  long long n_keep = 0;  // 0 keeps as many SNPs as there are samples
  double tol = 1e-6;
  long long max_iter = 500;
  long long top_k = 1000;
  long long cv_repeats = 5;
  double cv_holdout = 0.25;
  std::uint64_t cv_seed = 1;
  int threads = 0;
};

void run_fit(const FitOpts& o) {
  require_flag(o.genotypes, "--genotypes");
  require_flag(o.expression, "--expression");
  require_flag(o.out_dir, "--out-dir");
  if (!o.scores.empty() && !o.keep.empty())
    throw UsageError("--scores and --keep are mutually exclusive");
  if (o.n_keep > 0 && o.scores.empty()) throw UsageError("--n-keep needs --scores");
  const std::optional<double> rho = parse_auto(o.rho, "--rho");
  const std::optional<double> lambda = parse_auto(o.lambda, "--lambda");
  if (rho.has_value() != lambda.has_value())
    throw UsageError("give both --rho and --lambda, or neither to cross-validate");
  const std::filesystem::path dir = ensure_dir(o.out_dir);
  Manifest manifest{"fit"};
  StageClock clock;
  manifest.add_input("genotypes", o.genotypes);
  manifest.add_input("expression", o.expression);

  hclors::GenotypeMatrix X;
  hclors::ExpressionMatrix Y;
  clock.timed("load", [&] {
    X = hclors::load_genotype(o.genotypes);
    Y = hclors::load_expression(o.expression);
    check_samples_match(X, Y);
  });

  bool reduced = false;
  if (!o.scores.empty()) {
    manifest.add_input("scores", o.scores);
    const std::size_t keep =
        o.n_keep > 0 ? static_cast<std::size_t>(o.n_keep) : static_cast<std::size_t>(X.n_samples());
    X = clock.timed("reduce", [&] {
      const hclors::HcScoreTable table = hclors::load_score_table(o.scores);
      return hclors::screen_top_n(table, X, keep).x_reduced;
    });
    manifest.config["n_keep"] = keep;
    reduced = true;
  } else if (!o.keep.empty()) {
    manifest.add_input("keep", o.keep);
    X = clock.timed("reduce", [&] { return select_columns(X, load_id_column(o.keep)); });
    reduced = true;
  }

  const int threads = resolve_threads(o.threads);
  double rho_used = 0.0;
  double lambda_used = 0.0;
  if (rho) {
    rho_used = *rho;
    lambda_used = *lambda;
  } else {
    hclors::CvConfig cfg = hclors::default_cv_config(Y.values, X.values);
    if (!o.rho_grid.empty()) cfg.rho_grid = o.rho_grid;
    if (!o.lambda_grid.empty()) cfg.lambda_grid = o.lambda_grid;
    cfg.repeats = static_cast<int>(o.cv_repeats);
    cfg.holdout_fraction = o.cv_holdout;
    cfg.seed = o.cv_seed;
    const hclors::CvResult cv = clock.timed("cv", [&] {
      return hclors::lors_cv(Y.values, X.values, cfg, o.tol, static_cast<int>(o.max_iter), threads);
    });
    hclors::save_cv_table((dir / "cv.tsv").string(), cv);
    rho_used = cv.rho;
    lambda_used = cv.lambda;
    manifest.config["cv_repeats"] = o.cv_repeats;
    manifest.config["cv_holdout"] = o.cv_holdout;
    manifest.seed = o.cv_seed;
  }

  const hclors::LorsFit fit = clock.timed("fit", [&] {
    return hclors::lors_fit(Y.values, X.values, rho_used, lambda_used, o.tol,
                            static_cast<int>(o.max_iter), threads);
  });

  clock.timed("write", [&] {
    hclors::save_lors_fit((dir / "coefficients.tsv").string(), (dir / "fit.tsv").string(), fit,
                          X.snp_ids, Y.probe_ids);
    const std::vector<hclors::Association> assoc =
        hclors::association_list(fit, X.snp_ids, Y.probe_ids, static_cast<std::size_t>(o.top_k));
    hclors::save_associations((dir / "associations.tsv").string(), assoc);
    if (reduced) write_id_column((dir / "kept.tsv").string(), X.snp_ids);
  });

  manifest.config["rho"] = rho_used;
  manifest.config["lambda"] = lambda_used;
  manifest.config["tol"] = o.tol;
  manifest.config["max_iter"] = o.max_iter;
  manifest.config["top_k"] = o.top_k;
  manifest.config["threads"] = threads;
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOpts {
  std::string config;
  std::string out_dir;
  std::string scores;
  std::string associations;
  std::string b_true;
  std::string known;
  long long top_k = 0;  // 0 picks min(100, number of calls)
};

void run_evaluate(const EvaluateOpts& o) {
  require_flag(o.out_dir, "--out-dir");
  const std::filesystem::path dir = ensure_dir(o.out_dir);
  Manifest manifest{"evaluate"};
  StageClock clock;

  std::optional<hclors::CoefficientMatrix> truth;
  if (!o.b_true.empty()) {
    manifest.add_input("b_true", o.b_true);
    truth = clock.timed("load", [&] { return hclors::load_coefficients(o.b_true); });
  }

  bool produced = false;
  if (!o.scores.empty()) {
    if (!truth) throw UsageError("--scores needs --b-true to score the ranking against");
    manifest.add_input("scores", o.scores);
    const hclors::PrCurve curve = clock.timed("pr_curve", [&] {
      const hclors::HcScoreTable table = hclors::load_score_table(o.scores);
      hclors::GroundTruth gt;
      gt.B_true = truth->values;
      gt.active_snp_ids = active_rows_of(*truth);
      return hclors::ranking_pr_curve(rank_order_of(table), gt);
    });
    hclors::save_pr_curve((dir / "pr_curve.tsv").string(), curve);
    produced = true;
  }

  if (!o.associations.empty()) {
    manifest.add_input("associations", o.associations);
    const std::vector<hclors::Association> calls =
        clock.timed("load_calls", [&] { return hclors::load_associations(o.associations); });
    if (truth) {
      const std::size_t top_k = o.top_k > 0 ? static_cast<std::size_t>(o.top_k)
                                            : std::min<std::size_t>(100, calls.size());
      const std::vector<double> precision = clock.timed("precision_at_k", [&] {
        return hclors::association_precision_curve(calls, truth->values, truth->row_ids,
                                                   truth->col_ids, top_k);
      });
      hclors::save_precision_at_k((dir / "precision_at_k.tsv").string(), precision);
      manifest.config["top_k"] = top_k;
      produced = true;
    }
    if (!o.known.empty()) {
      manifest.add_input("known", o.known);
      const hclors::OverlapResult overlap =
          clock.timed("overlap", [&] { return hclors::overlap_with_known(calls, o.known); });
      hclors::save_overlap_curve((dir / "overlap.tsv").string(), overlap);
      produced = true;
    }
  }

  if (!produced)
    throw UsageError("nothing to evaluate: give --scores with --b-true, or --associations with "
                     "--b-true and/or --known");
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- classify

struct ClassifyOpts {
  std::string config;
  std::string calls;
  std::string annotations;
  std::string out = "calls.tsv";
  std::string hotspots;
  long long q_total = 0;
  double hotspot_fraction = 0.0021;
};

void run_classify(const ClassifyOpts& o) {
  require_flag(o.calls, "--calls");
  require_flag(o.annotations, "--annotations");
  if (std::filesystem::path(o.out) == std::filesystem::path(o.calls))
    throw UsageError("--out would overwrite the --calls input");
  const std::filesystem::path dir = parent_dir(o.out);
  Manifest manifest{"classify"};
  StageClock clock;
  manifest.add_input("calls", o.calls);
  manifest.add_input("annotations", o.annotations);

  std::vector<hclors::Association> assoc;
  hclors::AnnotationTable ann;
  clock.timed("load", [&] {
    assoc = hclors::load_associations(o.calls);
    ann = hclors::load_annotations(o.annotations);
  });

  const std::vector<hclors::EqtlCall> calls = clock.timed("classify", [&] {
    std::vector<hclors::EqtlCall> out;
    out.reserve(assoc.size());
    for (const hclors::Association& a : assoc) {
      hclors::EqtlCall call = hclors::classify_call(a.snp_id, a.probe_id, ann);
      call.effect = a.effect;
      out.push_back(std::move(call));
    }
    return out;
  });

  clock.timed("write", [&] {
    hclors::save_calls(o.out, calls);
    if (o.q_total > 0) {
      const std::vector<hclors::Hotspot> hotspots =
          hclors::detect_hotspots(calls, static_cast<std::size_t>(o.q_total), o.hotspot_fraction);
      const std::string path = o.hotspots.empty() ? (dir / "hotspots.tsv").string() : o.hotspots;
      hclors::save_hotspots(path, hotspots);
    }
  });

  if (o.q_total > 0) {
    manifest.config["q_total"] = o.q_total;
    manifest.config["hotspot_fraction"] = o.hotspot_fraction;
  }
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- pipeline

struct PipelineOpts {
  std::string config;
  std::string genotypes;
  std::string expression;
  std::string out_dir;
  std::string screen_lambda = "auto";
  double screen_tol = 1e-6;
  long long screen_max_iter = 100;
  std::string method = "hc";
  std::string grid = "restricted";
  bool no_center_x = false;
  long long n_keep = 0;  // 0 keeps as many SNPs as there are samples
  std::string rho = "auto";
  std::string lambda = "auto";
  std::vector<double> rho_grid;
  std::vector<double> lambda_grid;
  double fit_tol = 1e-6;
  long long fit_max_iter = 500;
  long long top_k = 1000;
  long long cv_repeats = 5;
  double cv_holdout = 0.25;
  std::uint64_t cv_seed = 1;
  std::string b_true;
  std::string known;
  std::string annotations;
  long long eval_top_k = 0;
  double hotspot_fraction = 0.0021;
  int threads = 0;
};

void run_pipeline(const PipelineOpts& o) {
  require_flag(o.genotypes, "--genotypes");
  require_flag(o.expression, "--expression");
  require_flag(o.out_dir, "--out-dir");
  const std::optional<double> screen_lambda_arg = parse_auto(o.screen_lambda, "--screen-lambda");
  const std::optional<double> rho = parse_auto(o.rho, "--rho");
  const std::optional<double> lambda = parse_auto(o.lambda, "--lambda");
  if (rho.has_value() != lambda.has_value())
    throw UsageError("give both --rho and --lambda, or neither to cross-validate");
  const std::filesystem::path dir = ensure_dir(o.out_dir);
  Manifest manifest{"pipeline"};
  StageClock clock;
  manifest.add_input("genotypes", o.genotypes);
  manifest.add_input("expression", o.expression);

  hclors::GenotypeMatrix X;
  hclors::ExpressionMatrix Y;
  clock.timed("load", [&] {
    X = hclors::load_genotype(o.genotypes);
    Y = hclors::load_expression(o.expression);
    check_samples_match(X, Y);
  });
  const int threads = resolve_threads(o.threads);

  const double screen_lambda =
      screen_lambda_arg ? *screen_lambda_arg : hclors::default_screen_lambda(Y.values);
  const hclors::MarginalFit marginal = clock.timed("screen", [&] {
    return hclors::fit_all_snps(Y.values, X.values, screen_lambda, o.screen_tol,
                                static_cast<int>(o.screen_max_iter), threads);
  });
  {
    hclors::CoefficientMatrix beta;
    beta.values = marginal.beta_hat;
    beta.row_ids = X.snp_ids;
    beta.col_ids = Y.probe_ids;
    hclors::save_coefficients(beta, (dir / "beta_hat.tsv").string());
  }

  const hclors::HcScoreTable table = clock.timed("rank", [&] {
    if (o.method == "hc") {
      const hclors::ZscoreMatrix Z =
          hclors::standardize(marginal.beta_hat, Y.values, X.values, !o.no_center_x, threads);
      return hclors::hc_rank_all(Z, X.snp_ids, parse_grid(o.grid), threads);
    }
    const hclors::BaselineMethod method =
        o.method == "rowmeans" ? hclors::BaselineMethod::row_means : hclors::BaselineMethod::extreme_val;
    return hclors::baseline_rank(marginal.beta_hat, X.snp_ids, method);
  });
  hclors::save_score_table((dir / "scores.tsv").string(), table);

  const std::size_t n_keep =
      o.n_keep > 0 ? static_cast<std::size_t>(o.n_keep) : static_cast<std::size_t>(X.n_samples());
  const hclors::ScreenResult screened =
      clock.timed("reduce", [&] { return hclors::screen_top_n(table, X, n_keep); });
  write_id_column((dir / "kept.tsv").string(), screened.kept_snp_ids);

  double rho_used = 0.0;
  double lambda_used = 0.0;
  if (rho) {
    rho_used = *rho;
    lambda_used = *lambda;
  } else {
    hclors::CvConfig cfg = hclors::default_cv_config(Y.values, screened.x_reduced.values);
    if (!o.rho_grid.empty()) cfg.rho_grid = o.rho_grid;
    if (!o.lambda_grid.empty()) cfg.lambda_grid = o.lambda_grid;
    cfg.repeats = static_cast<int>(o.cv_repeats);
    cfg.holdout_fraction = o.cv_holdout;
    cfg.seed = o.cv_seed;
    const hclors::CvResult cv = clock.timed("cv", [&] {
      return hclors::lors_cv(Y.values, screened.x_reduced.values, cfg, o.fit_tol,
                             static_cast<int>(o.fit_max_iter), threads);
    });
    hclors::save_cv_table((dir / "cv.tsv").string(), cv);
    rho_used = cv.rho;
    lambda_used = cv.lambda;
    manifest.config["cv_repeats"] = o.cv_repeats;
    manifest.config["cv_holdout"] = o.cv_holdout;
    manifest.seed = o.cv_seed;
  }

  const hclors::LorsFit fit = clock.timed("fit", [&] {
    return hclors::lors_fit(Y.values, screened.x_reduced.values, rho_used, lambda_used, o.fit_tol,
                            static_cast<int>(o.fit_max_iter), threads);
  });
  hclors::save_lors_fit((dir / "coefficients.tsv").string(), (dir / "fit.tsv").string(), fit,
                        screened.kept_snp_ids, Y.probe_ids);
  const std::vector<hclors::Association> assoc = hclors::association_list(
      fit, screened.kept_snp_ids, Y.probe_ids, static_cast<std::size_t>(o.top_k));
  hclors::save_associations((dir / "associations.tsv").string(), assoc);

  if (!o.b_true.empty() || !o.known.empty() || !o.annotations.empty()) {
    clock.timed("evaluate", [&] {
      if (!o.b_true.empty()) {
        manifest.add_input("b_true", o.b_true);
        const hclors::CoefficientMatrix truth = hclors::load_coefficients(o.b_true);
        hclors::GroundTruth gt;
        gt.B_true = truth.values;
        gt.active_snp_ids = active_rows_of(truth);
        hclors::save_pr_curve((dir / "pr_curve.tsv").string(),
                              hclors::ranking_pr_curve(rank_order_of(table), gt));
        const std::size_t top_k = o.eval_top_k > 0 ? static_cast<std::size_t>(o.eval_top_k)
                                                   : std::min<std::size_t>(100, assoc.size());
        hclors::save_precision_at_k(
            (dir / "precision_at_k.tsv").string(),
            hclors::association_precision_curve(assoc, truth.values, truth.row_ids, truth.col_ids,
                                                top_k));
        manifest.config["eval_top_k"] = top_k;
      }
      if (!o.known.empty()) {
        manifest.add_input("known", o.known);
        hclors::save_overlap_curve((dir / "overlap.tsv").string(),
                                   hclors::overlap_with_known(assoc, o.known));
      }
      if (!o.annotations.empty()) {
        manifest.add_input("annotations", o.annotations);
        const hclors::AnnotationTable ann = hclors::load_annotations(o.annotations);
        std::vector<hclors::EqtlCall> calls;
        calls.reserve(assoc.size());
        for (const hclors::Association& a : assoc) {
          hclors::EqtlCall call = hclors::classify_call(a.snp_id, a.probe_id, ann);
          call.effect = a.effect;
          calls.push_back(std::move(call));
        }
        hclors::save_calls((dir / "calls.tsv").string(), calls);
        hclors::save_hotspots(
            (dir / "hotspots.tsv").string(),
            hclors::detect_hotspots(calls, static_cast<std::size_t>(Y.n_probes()), o.hotspot_fraction));
        manifest.config["hotspot_fraction"] = o.hotspot_fraction;
      }
    });
  }

  manifest.config["screen_lambda"] = screen_lambda;
  manifest.config["screen_tol"] = o.screen_tol;
  manifest.config["screen_max_iter"] = o.screen_max_iter;
  manifest.config["method"] = o.method;
  if (o.method == "hc") {
    manifest.config["grid"] = o.grid;
    manifest.config["center_x"] = !o.no_center_x;
  }
  manifest.config["n_keep"] = n_keep;
  manifest.config["rho"] = rho_used;
  manifest.config["lambda"] = lambda_used;
  manifest.config["fit_tol"] = o.fit_tol;
  manifest.config["fit_max_iter"] = o.fit_max_iter;
  manifest.config["top_k"] = o.top_k;
  manifest.config["threads"] = threads;
  manifest.write(dir, clock);
}

// ---------------------------------------------------------------- wiring

void add_threads_option(CLI::App* cmd, int& field) {
  cmd->add_option("--threads", field, "Worker threads (0 = all available)")
      ->envname("HC_EQTL_THREADS")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eQTL mapping: confounder-corrected screening, scan-statistic SNP ranking, and a "
               "sparse plus low-rank joint fit"};
  app.set_version_flag("--version", std::string(hclors::version_string));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default(true);

  SimulateOpts sim;
  {
    CLI::App* cmd = app.add_subcommand("simulate", "Draw an expression data set with planted effects");
    cmd->add_option("--config", sim.config, "Read unset options from a key=value file");
    cmd->add_option("--out-dir", sim.out_dir, "Output directory (required)");
    cmd->add_option("--genotypes", sim.genotypes, "Genotype TSV to reuse (otherwise synthesized)");
    cmd->add_option("--n", sim.n, "Samples for synthetic genotypes")->check(CLI::PositiveNumber);
    cmd->add_option("--p", sim.p, "SNPs for synthetic genotypes")->check(CLI::PositiveNumber);
    cmd->add_option("--q", sim.q, "Expression probes to simulate (required)")->check(CLI::PositiveNumber);
    cmd->add_option("--maf-low", sim.maf_low, "Lower allele-frequency bound");
    cmd->add_option("--maf-high", sim.maf_high, "Upper allele-frequency bound");
    cmd->add_option("--n-active", sim.n_active, "SNPs with planted effects")->check(CLI::PositiveNumber);
    cmd->add_option("--genes-per-snp", sim.genes_per_snp, "Genes influenced by each active SNP")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--beta", sim.beta, "Planted effect size");
    cmd->add_option("--k-hidden", sim.k_hidden, "Hidden factors")->check(CLI::PositiveNumber);
    cmd->add_option("--hidden-scale", sim.hidden_scale, "Variance scale of the hidden factors")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--noise-sd", sim.noise_sd, "Noise standard deviation")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", sim.seed, "Simulation seed");
    cmd->add_option("--genotype-seed", sim.genotype_seed, "Seed for synthetic genotypes (-1 = seed + 1)");
    cmd->callback([&sim, cmd] {
      if (!sim.config.empty()) apply_config(cmd, sim.config);
      run_simulate(sim);
    });
  }

  ScreenOpts scr;
  {
    CLI::App* cmd = app.add_subcommand("screen", "Fit the confounder-corrected marginal screen");
    cmd->add_option("--config", scr.config, "Read unset options from a key=value file");
    cmd->add_option("--genotypes", scr.genotypes, "Genotype TSV (required)");
    cmd->add_option("--expression", scr.expression, "Expression TSV (required)");
    cmd->add_option("--out-dir", scr.out_dir, "Output directory (required)");
    cmd->add_option("--lambda", scr.lambda, "Nuclear-norm penalty, or 'auto'");
    cmd->add_option("--tol", scr.tol, "Relative objective tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", scr.max_iter, "Iteration cap per SNP")->check(CLI::PositiveNumber);
    add_threads_option(cmd, scr.threads);
    cmd->callback([&scr, cmd] {
      if (!scr.config.empty()) apply_config(cmd, scr.config);
      run_screen(scr);
    });
  }

  RankOpts rank;
  {
    CLI::App* cmd = app.add_subcommand("rank", "Rank SNPs by a sparse-signal scan statistic");
    cmd->add_option("--config", rank.config, "Read unset options from a key=value file");
    cmd->add_option("--beta-hat", rank.beta_hat, "Screening coefficient TSV (required)");
    cmd->add_option("--out", rank.out, "Score table destination (required)");
    cmd->add_option("--method", rank.method, "Ranking method")
        ->check(CLI::IsMember({"hc", "rowmeans", "extremeval"}));
    cmd->add_option("--grid", rank.grid, "Threshold grid for the scan statistic")
        ->check(CLI::IsMember({"restricted", "unrestricted"}));
    cmd->add_option("--genotypes", rank.genotypes, "Genotype TSV (to standardize the coefficients)");
    cmd->add_option("--expression", rank.expression, "Expression TSV (to standardize the coefficients)");
    cmd->add_flag("--no-center-x", rank.no_center_x, "Skip genotype centering when standardizing");
    add_threads_option(cmd, rank.threads);
    cmd->callback([&rank, cmd] {
      if (!rank.config.empty()) apply_config(cmd, rank.config);
      run_rank(rank);
    });
  }

  FitOpts fit;
  {
    CLI::App* cmd = app.add_subcommand("fit", "Joint sparse plus low-rank regression");
    cmd->add_option("--config", fit.config, "Read unset options from a key=value file");
    cmd->add_option("--genotypes", fit.genotypes, "Genotype TSV (required)");
    cmd->add_option("--expression", fit.expression, "Expression TSV (required)");
    cmd->add_option("--out-dir", fit.out_dir, "Output directory (required)");
    cmd->add_option("--scores", fit.scores, "Score table for top-n screening");
    cmd->add_option("--keep", fit.keep, "File listing the SNPs to keep");
    cmd->add_option("--n-keep", fit.n_keep, "SNPs to keep from the score table (0 = sample count)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--rho", fit.rho, "Sparsity penalty, or 'auto' to cross-validate");
    cmd->add_option("--lambda", fit.lambda, "Nuclear-norm penalty, or 'auto' to cross-validate");
    cmd->add_option("--rho-grid", fit.rho_grid, "Ascending sparsity-penalty grid for cross-validation")->delimiter(',');
    cmd->add_option("--lambda-grid", fit.lambda_grid,
                    "Ascending nuclear-norm penalty grid for cross-validation")->delimiter(',');
    cmd->add_option("--tol", fit.tol, "Relative objective tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", fit.max_iter, "Outer iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--top-k", fit.top_k, "Associations to report")->check(CLI::PositiveNumber);
    cmd->add_option("--cv-repeats", fit.cv_repeats, "Cross-validation repeats")->check(CLI::PositiveNumber);
    cmd->add_option("--cv-holdout", fit.cv_holdout, "Held-out sample fraction");
    cmd->add_option("--cv-seed", fit.cv_seed, "Cross-validation seed");
    add_threads_option(cmd, fit.threads);
    cmd->callback([&fit, cmd] {
      if (!fit.config.empty()) apply_config(cmd, fit.config);
      run_fit(fit);
    });
  }

  EvaluateOpts eval;
  {
    CLI::App* cmd = app.add_subcommand("evaluate", "Score rankings and association lists");
    cmd->add_option("--config", eval.config, "Read unset options from a key=value file");
    cmd->add_option("--out-dir", eval.out_dir, "Output directory (required)");
    cmd->add_option("--scores", eval.scores, "Score table to turn into a precision-recall curve");
    cmd->add_option("--associations", eval.associations, "Association list to score");
    cmd->add_option("--b-true", eval.b_true, "Planted coefficient TSV");
    cmd->add_option("--known", eval.known, "Known snp/probe pairs, two tab-separated columns");
    cmd->add_option("--top-k", eval.top_k, "Association prefix to score (0 = min(100, list size))")
        ->check(CLI::NonNegativeNumber);
    cmd->callback([&eval, cmd] {
      if (!eval.config.empty()) apply_config(cmd, eval.config);
      run_evaluate(eval);
    });
  }

  ClassifyOpts cls;
  {
    CLI::App* cmd = app.add_subcommand("classify", "Label calls as cis, semi_cis, or trans");
    cmd->add_option("--config", cls.config, "Read unset options from a key=value file");
    cmd->add_option("--calls", cls.calls, "Association TSV to classify (required)");
    cmd->add_option("--annotations", cls.annotations, "Annotation TSV with id, chromosome, bp (required)");
    cmd->add_option("--out", cls.out, "Classified call destination");
    cmd->add_option("--q-total", cls.q_total, "Probe panel size; enables hotspot detection")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--hotspot-fraction", cls.hotspot_fraction, "Hotspot probe fraction");
    cmd->add_option("--hotspots", cls.hotspots, "Hotspot table destination");
    cmd->callback([&cls, cmd] {
      if (!cls.config.empty()) apply_config(cmd, cls.config);
      run_classify(cls);
    });
  }

  PipelineOpts pipe;
  {
    CLI::App* cmd = app.add_subcommand("pipeline", "Chain screen, rank, reduce, fit, and evaluate");
    cmd->add_option("--config", pipe.config, "Read unset options from a key=value file");
    cmd->add_option("--genotypes", pipe.genotypes, "Genotype TSV (required)");
    cmd->add_option("--expression", pipe.expression, "Expression TSV (required)");
    cmd->add_option("--out-dir", pipe.out_dir, "Output directory (required)");
    cmd->add_option("--screen-lambda", pipe.screen_lambda, "Marginal screen penalty, or 'auto'");
    cmd->add_option("--screen-tol", pipe.screen_tol, "Marginal screen tolerance")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--screen-max-iter", pipe.screen_max_iter, "Marginal screen iteration cap")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--method", pipe.method, "Ranking method")
        ->check(CLI::IsMember({"hc", "rowmeans", "extremeval"}));
    cmd->add_option("--grid", pipe.grid, "Threshold grid for the scan statistic")
        ->check(CLI::IsMember({"restricted", "unrestricted"}));
    cmd->add_flag("--no-center-x", pipe.no_center_x, "Skip genotype centering when standardizing");
    cmd->add_option("--n-keep", pipe.n_keep, "SNPs to keep after ranking (0 = sample count)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--rho", pipe.rho, "Sparsity penalty, or 'auto' to cross-validate");
    cmd->add_option("--lambda", pipe.lambda, "Nuclear-norm penalty, or 'auto' to cross-validate");
    cmd->add_option("--rho-grid", pipe.rho_grid, "Ascending sparsity-penalty grid for cross-validation")->delimiter(',');
    cmd->add_option("--lambda-grid", pipe.lambda_grid,
                    "Ascending nuclear-norm penalty grid for cross-validation")->delimiter(',');
    cmd->add_option("--fit-tol", pipe.fit_tol, "Joint fit tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--fit-max-iter", pipe.fit_max_iter, "Joint fit iteration cap")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--top-k", pipe.top_k, "Associations to report")->check(CLI::PositiveNumber);
    cmd->add_option("--cv-repeats", pipe.cv_repeats, "Cross-validation repeats")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--cv-holdout", pipe.cv_holdout, "Held-out sample fraction");
    cmd->add_option("--cv-seed", pipe.cv_seed, "Cross-validation seed");
    cmd->add_option("--b-true", pipe.b_true, "Planted coefficient TSV to evaluate against");
    cmd->add_option("--known", pipe.known, "Known snp/probe pairs to measure overlap with");
    cmd->add_option("--annotations", pipe.annotations, "Annotation TSV; enables call classification");
    cmd->add_option("--eval-top-k", pipe.eval_top_k,
                    "Association prefix for precision (0 = min(100, list size))")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--hotspot-fraction", pipe.hotspot_fraction, "Hotspot probe fraction");
    add_threads_option(cmd, pipe.threads);
    cmd->callback([&pipe, cmd] {
      if (!pipe.config.empty()) apply_config(cmd, pipe.config);
      run_pipeline(pipe);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
