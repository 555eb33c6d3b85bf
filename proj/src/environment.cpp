#include "shillbid/environment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "shillbid/errors.hpp"

namespace shillbid {

Feedback play_round(const AuctionInstance& instance, std::size_t round, double value,
                    double bid, Rng& rng) {
  const double b = instance.buyer_dist.sample(rng);
  const double s = instance.shill_dist.sample(rng);
  Feedback fb;
  fb.round = round;
  fb.value = value;
  fb.bid = bid;
  fb.won = bid >= b;
  fb.reward = fb.won ? value - bid : 0.0;
  if (!fb.won) fb.report = std::max(b, s);
  return fb;
}

UtilityBenchmark::UtilityBenchmark(const PiecewiseCdf& buyer, std::size_t grid_size)
    : grid_size_(grid_size) {
  if (grid_size < 2) throw DomainError("benchmark grid needs at least two points");
  const double denom = static_cast<double>(grid_size - 1);
  auto cross = [this](std::size_t a, double s, double c) {
    return (intercept_[a] - c) / (s - slope_[a]);
  };
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double q = static_cast<double>(i) / denom;
    const double s = buyer.eval(q);
    const double c = -q * s;
    if (!slope_.empty() && s == slope_.back()) {
      if (c <= intercept_.back()) continue;
      slope_.pop_back();
      intercept_.pop_back();
      bid_.pop_back();
      breakpoint_.pop_back();
    }
    while (!slope_.empty()) {
      const double x = cross(slope_.size() - 1, s, c);
      if (x <= breakpoint_.back()) {
        slope_.pop_back();
        intercept_.pop_back();
        bid_.pop_back();
        breakpoint_.pop_back();
      } else {
        breakpoint_.push_back(x);
        break;
      }
    }
    if (slope_.empty()) breakpoint_.assign(1, -std::numeric_limits<double>::infinity());
    slope_.push_back(s);
    intercept_.push_back(c);
    bid_.push_back(q);
  }
}

std::size_t UtilityBenchmark::best_line(double value) const {
  auto it = std::upper_bound(breakpoint_.begin(), breakpoint_.end(), value);
  return static_cast<std::size_t>(it - breakpoint_.begin()) - 1;
}

double UtilityBenchmark::max_utility(double value) const {
  const std::size_t k = best_line(value);
  return slope_[k] * value + intercept_[k];
}

double UtilityBenchmark::argmax_bid(double value) const { return bid_[best_line(value)]; }

RegretTrace run_episode(const AuctionInstance& instance, Policy& policy, std::size_t horizon,
                        std::uint64_t seed, const EpisodeOptions& options) {
  RegretTrace trace;
  trace.policy = std::string(policy.name());
  trace.instance = instance.label;
  trace.horizon = horizon;
  trace.seed = seed;
  if (options.record_rounds) trace.rounds.reserve(horizon);

  Rng env = Rng::stream(seed, 0);
  const UtilityBenchmark bench(instance.buyer_dist, options.benchmark_grid);
  double cum = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const double v = instance.value_dist.sample(env);
    const int epoch = policy.epoch();
    const double p = policy.bid(t, v);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ProtocolViolation(std::string(policy.name()) + " bid outside [0, 1] at round " +
                              std::to_string(t));
    }
    const Branch branch = policy.branch();
    const Feedback fb = play_round(instance, t, v, p, env);
    policy.ingest(fb);
    const double inst =
        std::max(0.0, bench.max_utility(v) - utility(v, p, instance.buyer_dist));
    cum += inst;
    if (options.record_rounds) {
      trace.rounds.push_back(RoundRecord{t, v, p, fb.won, inst, cum, epoch, branch});
    }
  }
  trace.total_regret = cum;
  trace.epochs = policy.epochs();
  return trace;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const RegretTrace& trace, const std::string& path,
                     const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file '" + path + "'");
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "t,v,p,won,inst_regret,cum_regret,epoch,branch\n";
  for (const RoundRecord& r : trace.rounds) {
    out << r.t << ',' << format_double(r.value) << ',' << format_double(r.bid) << ','
        << (r.won ? 1 : 0) << ',' << format_double(r.inst_regret) << ','
        << format_double(r.cum_regret) << ',' << r.epoch << ',' << static_cast<int>(r.branch)
        << '\n';
  }
}

}  // namespace shillbid
