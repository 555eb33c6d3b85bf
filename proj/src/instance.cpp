#include "shillbid/instance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "shillbid/errors.hpp"

namespace shillbid {

double bump_constant() { return std::numbers::pi; }

double kl_constant() {
  const double cb2 = bump_constant() + 2.0;
  return 256.0 + 128.0 * cb2 * cb2 / 9.0;
}

double gap_constant() {
  const double cb2 = bump_constant() + 2.0;
  return std::min({1.0 / 8.0, 9.0 / (1536.0 * std::sqrt(24.0) * cb2),
                   1.0 / std::sqrt(200.0 * kl_constant())});
}

HardRegime hard_instance_params(double horizon, double gamma) {
  if (!(horizon >= 1.0)) throw DomainError("hard instance needs T >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("hard instance needs gamma in (0, 1]");
  HardRegime r;
  const double c = gap_constant();
  r.low_gamma = gamma <= std::pow(horizon, -2.0 / 3.0);
  if (r.low_gamma) {
    r.h = std::pow(horizon, -1.0 / 3.0) / 24.0;
    r.eps = c * std::pow(horizon, -1.0 / 3.0);
  } else {
    r.h = std::min(std::sqrt(gamma), kHardWidth / 4.0);
    r.eps = c / (std::sqrt(horizon) * std::pow(gamma, 0.25));
  }
  // Relative slack so that |J| / h = 4 in exact arithmetic is not floored to 3.
  r.cells = static_cast<std::size_t>(std::floor(kHardWidth / r.h * (1.0 + 1e-12)));
  if (r.cells < 4) {
    std::ostringstream os;
    os << "hard instance too small: N = " << r.cells << " < 4";
    throw InstanceTooSmallError(os.str());
  }
  return r;
}

PiecewiseCdf base_buyer_cdf() {
  return PiecewiseCdf::from_segments({
      Segment{0.0, kHardLeft, {Term{1.0, {Linear{9.0 / 8.0, 0.0}}}}},
      Segment{kHardLeft, kHardRight, {Term{1.0, {Reciprocal{0.25}}}}},
      Segment{kHardRight, 1.0, {Term{0.5, {}}}},
  });
}

PiecewiseCdf planted_buyer_cdf(double h, double eps, std::size_t cell) {
  const double left = kHardLeft + static_cast<double>(cell - 1) * h;
  double right = left + h;
  if (std::abs(right - kHardRight) < 1e-12) right = kHardRight;
  if (right > kHardRight) throw InvalidDistributionError("planted cell extends beyond J");

  const Term plateau{1.0, {Reciprocal{0.25}}};
  const Term bump{eps, {Reciprocal{1.0}, SineSquared{left, h}}};
  std::vector<Segment> segs;
  segs.push_back(Segment{0.0, kHardLeft, {Term{1.0, {Linear{9.0 / 8.0, 0.0}}}}});
  if (left > kHardLeft) segs.push_back(Segment{kHardLeft, left, {plateau}});
  segs.push_back(Segment{left, right, {plateau, bump}});
  if (right < kHardRight) segs.push_back(Segment{right, kHardRight, {plateau}});
  segs.push_back(Segment{kHardRight, 1.0, {Term{0.5, {}}}});
  return PiecewiseCdf::from_segments(std::move(segs));
}

PiecewiseCdf two_branch_shill_cdf(double gamma, LowShill low) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("shill mass outside [0, 1]");
  if (low == LowShill::kAtomAtZero) {
    return PiecewiseCdf::from_segments({Segment{0.0, 1.0, {Term{gamma, {}}}}});
  }
  return PiecewiseCdf::from_segments({
      Segment{0.0, kLowShillTop, {Term{gamma, {Linear{1.0 / kLowShillTop, 0.0}}}}},
      Segment{kLowShillTop, 1.0, {Term{gamma, {}}}},
  });
}

std::size_t random_cell(std::size_t cells, Rng& rng) { return 1 + rng.index(cells); }

AuctionInstance make_hard_instance(double horizon, double gamma, std::size_t cell,
                                   LowShill low) {
  const HardRegime r = hard_instance_params(horizon, gamma);
  if (cell < 1 || cell > r.cells) {
    throw DomainError("planted cell index outside [1, N]");
  }
  HardParams hp;
  hp.horizon = horizon;
  hp.h = r.h;
  hp.eps = r.eps;
  hp.cells = r.cells;
  hp.cell = cell;
  hp.gamma = gamma;
  hp.low_shill = low;

  std::ostringstream label;
  label << "hard(T=" << horizon << ",gamma=" << gamma << ",a=" << cell << ")";
  AuctionInstance inst{point_mass(1.0), planted_buyer_cdf(r.h, r.eps, cell),
                       two_branch_shill_cdf(gamma, low), label.str(), hp};
  inst.validate();
  return inst;
}

AuctionInstance make_hard_instance(double horizon, double gamma, Rng& rng, LowShill low) {
  const HardRegime r = hard_instance_params(horizon, gamma);
  return make_hard_instance(horizon, gamma, random_cell(r.cells, rng), low);
}

void AuctionInstance::validate() const {
  if (!hard) return;
  const HardParams& p = *hard;
  auto fail = [](const std::string& msg) { throw InvalidDistributionError(msg); };
  if (!(p.h > 0.0 && p.h <= kHardWidth / 4.0 + 1e-15)) fail("hard params: h outside (0, |J|/4]");
  if (p.cell < 1 || p.cell > p.cells) fail("hard params: planted cell outside [1, N]");
  if (static_cast<double>(p.cells) * p.h > kHardWidth + 1e-12) fail("hard params: cells overflow J");
  const double cb2 = bump_constant() + 2.0;
  if (p.eps > 9.0 / (64.0 * cb2) * p.h * (1.0 + 1e-12)) fail("hard params: eps too large for monotonicity");
  if (p.eps > 1.0 / 8.0) fail("hard params: eps > 1/8");
}

Interval good_region(const AuctionInstance& instance) {
  if (!instance.hard) throw NotHardInstanceError("instance has no hard params");
  const HardParams& p = *instance.hard;
  const double left = p.cell_left();
  return {left + p.h / 4.0, left + 3.0 * p.h / 4.0};
}

}  // namespace shillbid
