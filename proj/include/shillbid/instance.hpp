#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "shillbid/piecewise_cdf.hpp"
#include "shillbid/rng.hpp"

namespace shillbid {

// Hard bid interval J = [1/3, 1/2] of the lower-bound construction.
inline constexpr double kHardLeft = 1.0 / 3.0;
inline constexpr double kHardRight = 0.5;
inline constexpr double kHardWidth = 1.0 / 6.0;
// Shill mass of the low branch lives inside [0, kLowShillTop].
inline constexpr double kLowShillTop = 1.0 / 8.0;

// sup |b_a'| = C_b / h for the sine-squared bump: C_b = pi.
double bump_constant();
// K = 256 + 128 (C_b + 2)^2 / 9.
double kl_constant();
// c_eps = min{1/8, 9 / (1536 sqrt(24) (C_b + 2)), 1 / sqrt(200 K)}.
double gap_constant();

enum class LowShill {
  kUniform,    // uniform on [0, 1/8]
  kAtomAtZero  // point mass at 0
};

struct HardParams {
  double horizon = 1.0;
  double h = 0.0;      // cell width
  double eps = 0.0;    // bump height
  std::size_t cells = 0;
  std::size_t cell = 1;  // planted cell a, 1-based
  double gamma = 1.0;  // low-shill mass
  LowShill low_shill = LowShill::kUniform;

  double cell_left() const { return kHardLeft + static_cast<double>(cell - 1) * h; }
};

struct AuctionInstance {
  PiecewiseCdf value_dist;
  PiecewiseCdf buyer_dist;
  PiecewiseCdf shill_dist;
  std::string label;
  std::optional<HardParams> hard;

  // Throws InvalidDistributionError when hard_params violate the
  // construction's constraints.
  void validate() const;
};

struct HardRegime {
  double h = 0.0;
  double eps = 0.0;
  std::size_t cells = 0;
  bool low_gamma = false;  // gamma <= T^{-2/3}
};

HardRegime hard_instance_params(double horizon, double gamma);

// F_base: 9p/8 on [0,1/3), 1/(4(1-p)) on [1/3,1/2), 1/2 on [1/2,1), atom 1/2 at 1.
PiecewiseCdf base_buyer_cdf();
// F_a = F_base + eps / (1 - p) * b_a(p).
PiecewiseCdf planted_buyer_cdf(double h, double eps, std::size_t cell);
// Mass gamma on the low branch, mass 1 - gamma at 1.
PiecewiseCdf two_branch_shill_cdf(double gamma, LowShill low = LowShill::kUniform);

std::size_t random_cell(std::size_t cells, Rng& rng);

// Value atom at 1, planted buyer, two-branch shill.
AuctionInstance make_hard_instance(double horizon, double gamma, std::size_t cell,
                                   LowShill low = LowShill::kUniform);
// Same, with the planted cell drawn uniformly from [1, N].
AuctionInstance make_hard_instance(double horizon, double gamma, Rng& rng,
                                   LowShill low = LowShill::kUniform);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double p) const { return p >= lo && p <= hi; }
};

// G_a = [l_a + h/4, l_a + 3h/4]. Throws NotHardInstanceError.
Interval good_region(const AuctionInstance& instance);

}  // namespace shillbid
