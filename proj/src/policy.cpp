#include "shillbid/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "shillbid/errors.hpp"

namespace shillbid {

double PolicyConfig::resolved_delta() const {
  return delta ? *delta : 1.0 / static_cast<double>(horizon);
}

std::size_t PolicyConfig::resolved_value_grid() const {
  if (full_value_grid) return horizon;
  if (value_grid > 0) return value_grid;
  return std::min<std::size_t>(horizon, 1024);
}

void PolicyConfig::validate() const {
  if (horizon < 1) throw ConfigError("policy: T must be >= 1");
  if (delta && !(*delta > 0.0 && *delta < 1.0)) throw ConfigError("policy: delta must lie in (0, 1)");
  if (!(c_suf > 0.0 && c_s > 0.0 && c_val > 0.0)) throw ConfigError("policy: constants must be positive");
  if (!(schedule_ratio >= 1.0)) throw ConfigError("policy: schedule_ratio must be >= 1");
  if (naive_grid < 2) throw ConfigError("policy: naive_grid must be >= 2");
  if (benchmark_grid < 2) throw ConfigError("policy: benchmark_grid must be >= 2");
}

std::size_t round_to_value_grid(double raw, std::size_t n) {
  if (n <= 1) return 0;
  const double x = std::clamp(raw, 0.0, 1.0) * static_cast<double>(n - 1);
  return static_cast<std::size_t>(std::ceil(x - 0.5));
}

double value_grid_point(std::size_t i, std::size_t n) {
  if (n <= 1) return 1.0;
  return static_cast<double>(i) / static_cast<double>(n - 1);
}

ShillProofPolicy::ShillProofPolicy(const PiecewiseCdf& shill, const PolicyConfig& config,
                                   std::uint64_t seed, Mode mode)
    : shill_(shill), config_(config), mode_(mode), rng_(Rng::stream(seed, 1)) {
  config_.validate();
  const double T = static_cast<double>(config_.horizon);
  delta_ = config_.resolved_delta();
  values_ = config_.resolved_value_grid();
  max_epochs_ = static_cast<int>(std::ceil(std::log2(T) - 1e-12));
  candidates_ = dyadic_candidates(T);
  log_rob_ = robust_log_term(T, delta_);
  log_opt_ = optimistic_log_term(T, delta_, candidates_.size());
  active_.reserve(values_);
  for (std::size_t i = 0; i < values_; ++i) active_.push_back({0.0, value_grid_point(i, values_)});
  start_epoch(0);
  if (max_epochs_ <= 0) terminal_ = true;
}

std::string_view ShillProofPolicy::name() const {
  return mode_ == Mode::kShillProof ? "shill_proof" : "robust_only";
}

void ShillProofPolicy::start_epoch(int m) {
  epoch_ = m;
  grid_ = DyadicGrid(m);
  robust_.emplace(grid_);
  optimistic_.emplace(grid_);
  visits_.clear();
  epoch_start_ = clock_;
  tau_ = 0;
  next_rob_ = 0;
  next_opt_ = 0;
}

IndexSpan ShillProofPolicy::span_of(std::size_t value_index) const {
  auto s = grid_.span(active_[value_index]);
  if (!s) {
    throw std::logic_error("empty active grid for value index " + std::to_string(value_index) +
                           " at epoch " + std::to_string(epoch_));
  }
  return *s;
}

bool ShillProofPolicy::due(std::size_t& next_exponent) const {
  if (config_.schedule_ratio <= 1.0) return true;
  auto threshold = [this](std::size_t j) {
    return std::ceil(std::pow(config_.schedule_ratio, static_cast<double>(j)));
  };
  const double tau = static_cast<double>(tau_);
  if (tau < threshold(next_exponent)) return false;
  while (threshold(next_exponent) <= tau) ++next_exponent;
  return true;
}

double ShillProofPolicy::bid(std::size_t round, double raw_value) {
  if (pending_) throw ProtocolViolation("bid requested twice without feedback");
  if (round != clock_) throw ProtocolViolation("round index out of sequence");
  const std::size_t vi = round_to_value_grid(raw_value, values_);
  const IndexSpan span = span_of(vi);

  const bool opt_round = (round % 2 == 0) != config_.swap_parity;
  Branch branch = Branch::kRobust;
  bool uniform = false;
  if (mode_ == Mode::kShillProof) {
    branch = opt_round ? Branch::kOptimistic : Branch::kRobust;
    uniform = opt_round;
  } else if (config_.robust_on_parity && opt_round) {
    branch = Branch::kNone;
    uniform = true;
  }

  std::size_t j = span.first;
  if (uniform) {
    j = span.first + static_cast<std::size_t>(rng_.index(span.size()));
  } else {
    for (std::size_t q = span.first + 1; q <= span.last; ++q) {
      if (robust_->count(q) < robust_->count(j)) j = q;
    }
  }
  pending_ = Pending{round, vi, value_grid_point(vi, values_), span, j, branch, uniform};
  return grid_.point(j);
}

void ShillProofPolicy::record_optimistic(const Pending& p, const Feedback& fb) {
  optimistic_->add(direct_measurement(p.bid_index, fb.won));
  std::vector<double> y(p.span.size(), 0.0);
  for (std::size_t j = p.bid_index; j <= p.span.last; ++j) {
    const double q = grid_.point(j);
    const double fs = shill_.eval(q);
    // Debiasing is undefined here; such classes are never admissible.
    if (!(fs > 0.0)) return;
    y[j - p.span.first] = debiased_suffix_obs(fb.won, fb.report.value_or(0.0), q, fs);
  }
  for (const Measurement& m :
       suffix_difference_rows(p.value, p.value_index, grid_, p.span, grid_.point(p.bid_index), y)) {
    optimistic_->add(m);
  }
}

std::optional<std::pair<double, WlsSolution>> ShillProofPolicy::race() {
  if (optimistic_->empty()) return std::nullopt;
  const double budget = std::ldexp(1.0, -(epoch_ + 1)) -
                        std::sqrt(log_opt_ / (2.0 * static_cast<double>(tau_)));
  if (budget < 0.0) return std::nullopt;

  std::vector<IndexSpan> spans;
  for (const auto& [vi, n] : visits_) spans.push_back(span_of(vi));
  const auto admissible =
      admissible_candidates(shill_, grid_, spans, candidates_, config_.c_val);
  const double tau = static_cast<double>(tau_);
  for (double gbar : admissible) {
    const double omega = candidate_weight(gbar, epoch_, grid_.mesh(), config_.c_suf);
    WlsSolution sol = solve_wls(*optimistic_, omega);
    double r_hat = 0.0;
    for (const auto& [vi, n] : visits_) {
      const RadiusReport r = optimistic_radius(*optimistic_, sol, gbar, value_grid_point(vi, values_),
                                               span_of(vi), log_opt_);
      r_hat += static_cast<double>(n) * r.radius / tau;
      if (!(r_hat <= budget)) break;
    }
    if (r_hat <= budget) return std::pair{gbar, std::move(sol)};
  }
  return std::nullopt;
}

bool ShillProofPolicy::robust_valid() const {
  const double budget = std::ldexp(1.0, -(epoch_ + 1)) -
                        std::sqrt(log_rob_ / (2.0 * static_cast<double>(tau_)));
  if (budget < 0.0) return false;
  // The robust radius only depends on the active span.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> classes;
  for (const auto& [vi, n] : visits_) {
    const IndexSpan s = span_of(vi);
    classes[{s.first, s.last}] += n;
  }
  const double tau = static_cast<double>(tau_);
  double r_hat = 0.0;
  for (const auto& [s, n] : classes) {
    r_hat += static_cast<double>(n) * robust_->radius({s.first, s.second}, log_rob_) / tau;
    if (!(r_hat <= budget)) return false;
  }
  return true;
}

std::optional<IndexSpan> surviving_range(const std::vector<double>& util,
                                         const std::vector<char>& known, double threshold) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < util.size(); ++i) {
    if (known[i]) best = std::max(best, util[i]);
  }
  std::optional<IndexSpan> out;
  for (std::size_t i = 0; i < util.size(); ++i) {
    if (known[i] && best - util[i] > threshold) continue;
    if (!out) out = IndexSpan{i, i};
    out->last = i;
  }
  return out;
}

void ShillProofPolicy::eliminate(Branch branch, const WlsSolution* sol,
                                 std::optional<double> gamma_bar) {
  const double threshold = std::ldexp(1.0, -(epoch_ + 1));
  const double half = grid_.mesh() / 2.0;
  const std::vector<Interval> before = active_;

  // Points whose utility is identified by the optimistic estimate.
  std::vector<char> identified;
  if (sol) {
    const Eigen::Index n = sol->gram.rows();
    identified.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index l = 0; l < n; ++l) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(n, l);
      identified[static_cast<std::size_t>(l)] = range_membership(sol->pi, e) ? 1 : 0;
    }
  }

  std::vector<double> util;
  std::vector<char> known;
  for (std::size_t vi = 0; vi < values_; ++vi) {
    const IndexSpan span = span_of(vi);
    const double v = value_grid_point(vi, values_);
    util.assign(span.size(), 0.0);
    known.assign(span.size(), 0);
    for (std::size_t j = span.first; j <= span.last; ++j) {
      const std::size_t i = j - span.first;
      const double c = v - grid_.point(j);
      if (sol) {
        if (c == 0.0) {
          known[i] = 1;
        } else if (auto l = optimistic_->local(j); l && identified[*l]) {
          known[i] = 1;
          util[i] = c * sol->estimate(static_cast<Eigen::Index>(*l));
        }
      } else if (robust_->count(j) > 0) {
        known[i] = 1;
        util[i] = c * robust_->mean(j);
      }
    }
    const auto keep = surviving_range(util, known, threshold);
    if (!keep) continue;  // unreachable: the maximiser always survives
    const std::size_t lo = span.first + keep->first, hi = span.first + keep->last;
    Interval& a = active_[vi];
    a = {std::max(a.lo, grid_.point(lo) - half), std::min(a.hi, grid_.point(hi) + half)};
  }

  EpochSummary summary;
  summary.index = epoch_;
  summary.start = epoch_start_;
  summary.length = tau_;
  summary.iota = branch == Branch::kOptimistic ? 1 : 0;
  summary.validated = true;
  summary.gamma_bar = gamma_bar;
  done_.push_back(summary);

  if (observer_) {
    EliminationEvent ev;
    ev.epoch = epoch_;
    ev.branch = branch;
    ev.gamma_bar = gamma_bar;
    ev.grid = &grid_;
    ev.value_grid = values_;
    ev.before = &before;
    ev.after = &active_;
    for (const auto& [vi, n] : visits_) ev.observed.push_back(vi);
    observer_(ev);
  }

  start_epoch(epoch_ + 1);
  if (epoch_ >= max_epochs_) terminal_ = true;
}

void ShillProofPolicy::ingest(const Feedback& fb) {
  if (!pending_ || fb.round != pending_->round) {
    throw ProtocolViolation("feedback does not match the pending round");
  }
  const Pending p = *pending_;
  pending_.reset();
  last_branch_ = p.branch;
  ++clock_;
  ++tau_;
  ++visits_[p.value_index];
  if (terminal_) return;

  if (p.branch == Branch::kRobust) {
    robust_->update_index(p.bid_index, fb.won);
  } else if (p.branch == Branch::kOptimistic) {
    record_optimistic(p, fb);
    if (due(next_opt_)) {
      if (auto hit = race()) {
        eliminate(Branch::kOptimistic, &hit->second, hit->first);
        return;
      }
    }
  }
  if (due(next_rob_) && robust_valid()) eliminate(Branch::kRobust, nullptr, std::nullopt);
}

std::vector<EpochSummary> ShillProofPolicy::epochs() const {
  std::vector<EpochSummary> out = done_;
  EpochSummary cur;
  cur.index = epoch_;
  cur.start = epoch_start_;
  cur.length = tau_;
  out.push_back(cur);
  return out;
}

NaivePolicy::NaivePolicy(const PolicyConfig& config, std::uint64_t seed)
    : rng_(Rng::stream(seed, 1)), grid_(config.naive_grid), hist_(config.naive_grid, 0) {
  config.validate();
}

double NaivePolicy::estimate(double q) const {
  if (samples_ == 0) return 0.0;
  const double x = std::clamp(q, 0.0, 1.0) * static_cast<double>(grid_ - 1);
  const std::size_t top = static_cast<std::size_t>(std::floor(x + 1e-9));
  std::size_t n = 0;
  for (std::size_t k = 0; k <= top && k < grid_; ++k) n += hist_[k];
  return static_cast<double>(n) / static_cast<double>(samples_);
}

double NaivePolicy::bid(std::size_t round, double raw_value) {
  const double rate = std::min(1.0, std::pow(static_cast<double>(round + 1), -1.0 / 3.0));
  exploring_ = samples_ == 0 || rng_.bernoulli(rate);
  if (exploring_) return 0.0;
  const double v = std::clamp(raw_value, 0.0, 1.0);
  const double step = 1.0 / static_cast<double>(grid_ - 1);
  double best = -1.0, arg = 0.0;
  std::size_t cum = 0;
  for (std::size_t i = 0; i < grid_; ++i) {
    cum += hist_[i];
    const double q = static_cast<double>(i) * step;
    const double u = (v - q) * static_cast<double>(cum) / static_cast<double>(samples_);
    if (u > best + 1e-12) {
      best = u;
      arg = q;
    }
  }
  return arg;
}

void NaivePolicy::ingest(const Feedback& fb) {
  if (!exploring_) return;
  const double o = fb.report.value_or(0.0);
  const double x = o * static_cast<double>(grid_ - 1);
  const std::size_t bin = std::min<std::size_t>(
      grid_ - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(x - 1e-9))));
  ++hist_[bin];
  ++samples_;
}

OraclePolicy::OraclePolicy(const PiecewiseCdf& buyer, std::size_t benchmark_grid)
    : bench_(buyer, benchmark_grid) {}

double OraclePolicy::bid(std::size_t, double raw_value) {
  return bench_.argmax_bid(std::clamp(raw_value, 0.0, 1.0));
}

std::unique_ptr<Policy> make_policy(const std::string& name, const AuctionInstance& instance,
                                    const PolicyConfig& config, std::uint64_t seed) {
  if (name == "shill_proof") {
    return std::make_unique<ShillProofPolicy>(instance.shill_dist, config, seed);
  }
  if (name == "robust_only") {
    return std::make_unique<ShillProofPolicy>(instance.shill_dist, config, seed,
                                              ShillProofPolicy::Mode::kRobustOnly);
  }
  if (name == "naive") return std::make_unique<NaivePolicy>(config, seed);
  if (name == "oracle") return std::make_unique<OraclePolicy>(instance.buyer_dist, config.benchmark_grid);
  throw ConfigError("unknown policy '" + name + "'");
}

}  // namespace shillbid
