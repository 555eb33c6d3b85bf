#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shillbid/environment.hpp"
#include "shillbid/instance.hpp"
#include "shillbid/policy.hpp"

namespace shillbid {

std::string artifact_version();
std::uint64_t fnv1a64(const std::string& bytes);
// Hash of the canonical (key-sorted, compact) dump of the document.
std::string config_hash(const nlohmann::json& doc);

// Builds a CDF from a named spec: "uniform", "zero", "one", "base",
// {"point_mass": x}, {"two_branch": gamma, "low": "uniform"|"atom_at_zero"},
// {"piecewise_linear": {"knots": [...], "values": [...]}} or a serialized cdf.
PiecewiseCdf cdf_from_spec(const nlohmann::json& spec, const std::string& where);

// Instance spec: {"family": "hard", "gamma": g, "cell": a | "random", "low_shill": ...},
// {"family": "custom", "value": ..., "buyer": ..., "shill": ...} or {"path": file}.
// `gamma` may be the string "1/T". Random cells come from Rng::stream(seed, 2).
AuctionInstance build_instance(const nlohmann::json& spec, std::size_t horizon,
                               std::uint64_t seed);

struct RunConfig {
  nlohmann::json instance;
  std::string policy = "shill_proof";
  PolicyConfig policy_config;  // horizon is overwritten by T
  std::size_t horizon = 1;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  bool emit_trace = true;
  std::size_t benchmark_grid = kDefaultBenchmarkGrid;
  nlohmann::json source;  // the parsed document, for hashing
};

// Throws ConfigError naming the offending field.
PolicyConfig policy_config_from_json(const nlohmann::json& params, std::size_t horizon);
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json read_config_file(const std::string& path);

// seeds: explicit list, or {"master_seed": s, "runs": n} giving s ^ i.
std::vector<std::uint64_t> seeds_from_json(const nlohmann::json& doc, const std::string& where);

struct RunOutcome {
  std::vector<RegretTrace> traces;
  std::string hash;
};

// One episode per seed; writes trace_<i>.csv (if emit_trace), summary.csv and
// summary.json into output_dir.
RunOutcome run(const RunConfig& config);
nlohmann::json trace_summary_json(const RegretTrace& trace);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

// Least squares of log R on log T. Nonpositive regrets are excluded;
// throws DomainError with fewer than 4 usable points.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

struct SweepCell {
  std::string policy;
  std::size_t horizon = 0;
  std::string gamma_label;  // ladder entry as written ("1/T" or the number)
  double gamma = 0.0;       // resolved
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  double total_regret = 0.0;
};

struct SweepAggregate {
  std::string policy;
  std::size_t horizon = 0;
  std::string gamma_label;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  double stderr_ = 0.0;
};

struct SweepFit {
  std::string policy;
  std::string gamma_label;
  RateFit fit;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // ordered by (policy, T, gamma, seed) ladder position
  std::vector<SweepAggregate> aggregates;
  std::vector<SweepFit> fits;  // only where the T ladder has >= 4 distinct values
  std::string hash;
};

struct SweepConfig {
  nlohmann::json instance;  // "gamma" is taken from the ladder
  std::vector<std::string> policies;
  std::vector<std::size_t> horizons;
  std::vector<nlohmann::json> gammas;
  std::vector<std::uint64_t> seeds;
  nlohmann::json policy_params = nlohmann::json::object();
  std::string output_dir = "out";
  std::size_t benchmark_grid = kDefaultBenchmarkGrid;
  std::size_t workers = 0;  // 0: SHILLBID_WORKERS or hardware concurrency
  nlohmann::json source;
};

SweepConfig sweep_config_from_json(const nlohmann::json& doc);
std::size_t default_workers();
SweepResult sweep(const SweepConfig& config);
// Cells and aggregates only (no files); used by sweep and by rereading.
void aggregate(SweepResult& result);

// cells.csv, regret_vs_T.csv, regret_vs_gamma.csv, fits.csv.
void emit_plot_data(const SweepResult& result, const std::string& dir);
// Reads cells.csv back and re-aggregates.
SweepResult reread_plot_data(const std::string& dir);

}  // namespace shillbid
