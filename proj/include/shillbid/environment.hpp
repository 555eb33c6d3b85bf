#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shillbid/instance.hpp"
#include "shillbid/piecewise_cdf.hpp"
#include "shillbid/rng.hpp"

namespace shillbid {

struct Feedback {
  std::size_t round = 0;
  double value = 0.0;
  double bid = 0.0;
  bool won = false;
  double reward = 0.0;
  // max{b_t, s_t}; present iff the round was lost.
  std::optional<double> report;
};

// Draws b ~ F_B then s ~ F_S from `rng`. The value is drawn by the caller.
Feedback play_round(const AuctionInstance& instance, std::size_t round, double value,
                    double bid, Rng& rng);

enum class Branch : int { kNone = -1, kRobust = 0, kOptimistic = 1 };

struct EpochSummary {
  int index = 0;
  std::size_t start = 0;   // n_m
  std::size_t length = 0;  // rounds played in the epoch
  // iota_m: 1 when the optimistic certificate triggered elimination.
  int iota = 0;
  // Ended by a validated certificate (false: horizon reached first).
  bool validated = false;
  std::optional<double> gamma_bar;
};

// observe value -> bid -> ingest feedback.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  virtual double bid(std::size_t round, double raw_value) = 0;
  virtual void ingest(const Feedback& feedback) = 0;
  virtual int epoch() const { return 0; }
  // Kind of the round most recently bid on.
  virtual Branch branch() const { return Branch::kNone; }
  virtual std::vector<EpochSummary> epochs() const { return {}; }
};

// max_p (v - p) F_B(p) over the grid {i / (n - 1)}, for any v, in
// O(log n): the maximum of the lines F_i v - q_i F_i is their upper
// envelope, and the slopes F_i are sorted because F_B is monotone.
class UtilityBenchmark {
 public:
  UtilityBenchmark(const PiecewiseCdf& buyer, std::size_t grid_size);
  double max_utility(double value) const;
  double argmax_bid(double value) const;
  std::size_t grid_size() const { return grid_size_; }

 private:
  std::size_t best_line(double value) const;
  std::size_t grid_size_;
  std::vector<double> slope_;
  std::vector<double> intercept_;
  std::vector<double> bid_;
  std::vector<double> breakpoint_;  // hull line k is optimal on [breakpoint_[k], breakpoint_[k+1])
};

inline constexpr std::size_t kDefaultBenchmarkGrid = 100001;

struct RoundRecord {
  std::size_t t = 0;
  double value = 0.0;
  double bid = 0.0;
  bool won = false;
  double inst_regret = 0.0;
  double cum_regret = 0.0;
  int epoch = 0;
  Branch branch = Branch::kNone;
};

struct RegretTrace {
  std::string policy;
  std::string instance;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;  // empty when not recorded
  double total_regret = 0.0;
  std::vector<EpochSummary> epochs;
};

struct EpisodeOptions {
  std::size_t benchmark_grid = kDefaultBenchmarkGrid;
  bool record_rounds = true;
};

// Environment randomness comes from Rng::stream(seed, 0); the policy owns
// its own stream. Pseudo-regret uses the exact F_B; per-round values are
// clamped at 0 so the cumulative sum is nondecreasing. Throws
// ProtocolViolation if the policy bids outside [0, 1].
RegretTrace run_episode(const AuctionInstance& instance, Policy& policy, std::size_t horizon,
                        std::uint64_t seed, const EpisodeOptions& options = {});

// One row per round: t,v,p,won,inst_regret,cum_regret,epoch,branch.
// A nonempty `comment` is written first as a "# " line.
void write_trace_csv(const RegretTrace& trace, const std::string& path,
                     const std::string& comment = "");
std::string format_double(double x);

}  // namespace shillbid
