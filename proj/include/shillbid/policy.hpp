#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shillbid/certificates.hpp"
#include "shillbid/environment.hpp"
#include "shillbid/instance.hpp"
#include "shillbid/piecewise_cdf.hpp"
#include "shillbid/rng.hpp"

namespace shillbid {

struct PolicyConfig {
  std::size_t horizon = 1;
  std::optional<double> delta;       // default 1 / T
  std::size_t value_grid = 0;        // 0: min(T, 1024)
  bool full_value_grid = false;      // force |V| = T
  double c_suf = 4.0;
  double c_s = 2.0;
  double c_val = 4.0;
  std::size_t benchmark_grid = kDefaultBenchmarkGrid;
  double schedule_ratio = 1.1;
  bool swap_parity = false;          // odd rounds optimistic
  // Robust-only: every round is robust by default. With `robust_on_parity`
  // the rounds the full algorithm gives to the optimistic branch post the
  // same uniform draw and their feedback is discarded.
  bool robust_on_parity = false;
  std::size_t naive_grid = 51;

  double resolved_delta() const;
  std::size_t resolved_value_grid() const;
  // Throws ConfigError.
  void validate() const;
};

// Nearest point of {i / (n - 1)}, ties rounded down. n = 1 gives {1}.
std::size_t round_to_value_grid(double raw, std::size_t n);
double value_grid_point(std::size_t i, std::size_t n);

// Local indices kept by elimination: every point that is not known, or whose
// utility is within `threshold` of the best known one. The kept points are
// returned as their convex hull.
std::optional<IndexSpan> surviving_range(const std::vector<double>& util,
                                         const std::vector<char>& known, double threshold);

struct EliminationEvent {
  int epoch = 0;
  Branch branch = Branch::kNone;
  std::optional<double> gamma_bar;
  const DyadicGrid* grid = nullptr;
  std::size_t value_grid = 0;
  // Per value-grid index, before and after elimination.
  const std::vector<Interval>* before = nullptr;
  const std::vector<Interval>* after = nullptr;
  // Value indices observed during the epoch.
  std::vector<std::size_t> observed;
};

class ShillProofPolicy : public Policy {
 public:
  enum class Mode { kShillProof, kRobustOnly };

  ShillProofPolicy(const PiecewiseCdf& shill, const PolicyConfig& config, std::uint64_t seed,
                   Mode mode = Mode::kShillProof);

  std::string_view name() const override;
  double bid(std::size_t round, double raw_value) override;
  void ingest(const Feedback& feedback) override;
  int epoch() const override { return epoch_; }
  Branch branch() const override { return pending_ ? pending_->branch : last_branch_; }
  std::vector<EpochSummary> epochs() const override;

  void set_elimination_observer(std::function<void(const EliminationEvent&)> f) {
    observer_ = std::move(f);
  }
  const Interval& active(std::size_t value_index) const { return active_[value_index]; }
  std::size_t value_grid_size() const { return values_; }
  bool terminal() const { return terminal_; }

 private:
  struct Pending {
    std::size_t round;
    std::size_t value_index;
    double value;
    IndexSpan span;
    std::size_t bid_index;
    Branch branch;
    bool recorded;
  };

  void start_epoch(int m);
  IndexSpan span_of(std::size_t value_index) const;
  void record_optimistic(const Pending& p, const Feedback& fb);
  std::optional<std::pair<double, WlsSolution>> race();
  bool robust_valid() const;
  void eliminate(Branch branch, const WlsSolution* sol, std::optional<double> gamma_bar);
  bool due(std::size_t& next_exponent) const;

  PiecewiseCdf shill_;
  PolicyConfig config_;
  Mode mode_;
  Rng rng_;
  double delta_;
  std::size_t values_;
  int max_epochs_;  // ceil(log2 T)
  std::vector<double> candidates_;
  double log_rob_;
  double log_opt_;

  int epoch_ = 0;
  bool terminal_ = false;
  DyadicGrid grid_{0};
  std::vector<Interval> active_;
  std::optional<RobustCertificate> robust_;
  std::optional<OptimisticAccumulator> optimistic_;
  std::map<std::size_t, std::size_t> visits_;  // value index -> rounds this epoch
  std::size_t epoch_start_ = 0;
  std::size_t tau_ = 0;
  std::size_t next_rob_ = 0;
  std::size_t next_opt_ = 0;
  bool suffix_blocked_ = false;

  std::optional<Pending> pending_;
  Branch last_branch_ = Branch::kNone;
  std::size_t clock_ = 0;
  std::vector<EpochSummary> done_;
  std::function<void(const EliminationEvent&)> observer_;
};

// Epsilon-greedy learner that takes reports at face value: explores with
// probability (t + 1)^(-1/3) by bidding 0 (so the report is always seen) and
// otherwise plays the argmax of (v - q) F_hat(q) on a uniform bid grid, F_hat
// being the empirical CDF of the explored reports.
class NaivePolicy : public Policy {
 public:
  NaivePolicy(const PolicyConfig& config, std::uint64_t seed);
  std::string_view name() const override { return "naive"; }
  double bid(std::size_t round, double raw_value) override;
  void ingest(const Feedback& feedback) override;
  Branch branch() const override { return Branch::kNone; }
  double estimate(double q) const;

 private:
  Rng rng_;
  std::size_t grid_;
  std::vector<std::size_t> hist_;  // explored reports binned to the bid grid (ceil)
  std::size_t samples_ = 0;
  bool exploring_ = false;
};

class OraclePolicy : public Policy {
 public:
  OraclePolicy(const PiecewiseCdf& buyer, std::size_t benchmark_grid);
  std::string_view name() const override { return "oracle"; }
  double bid(std::size_t round, double raw_value) override;
  void ingest(const Feedback&) override {}

 private:
  UtilityBenchmark bench_;
};

// "shill_proof", "robust_only", "naive", "oracle"; throws ConfigError.
std::unique_ptr<Policy> make_policy(const std::string& name, const AuctionInstance& instance,
                                    const PolicyConfig& config, std::uint64_t seed);

}  // namespace shillbid
