#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shillbid/rng.hpp"

namespace shillbid {

// Elementary closed-form factors. A segment formula is a weighted sum of
// products of these, which is closed under the two compositions the model
// needs (product for max-shilling, convex combination for mixtures).
struct Constant {
  double value = 0.0;
};
// slope * p + intercept
struct Linear {
  double slope = 0.0;
  double intercept = 0.0;
};
// scale / (1 - p)
struct Reciprocal {
  double scale = 0.0;
};
// sin^2(pi (p - left) / width) on [left, left + width], zero elsewhere.
struct SineSquared {
  double left = 0.0;
  double width = 1.0;
};

using Factor = std::variant<Constant, Linear, Reciprocal, SineSquared>;

double factor_value(const Factor& f, double p);
double factor_derivative(const Factor& f, double p);

struct Term {
  double weight = 1.0;
  std::vector<Factor> factors;

  double value(double p) const;
  double derivative(double p) const;
};

// Formula valid on [lo, hi). The formula's limit at hi is the left limit of
// the CDF at hi; a mismatch with the next segment's value at hi is an atom.
struct Segment {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<Term> terms;

  double value(double p) const;
  double derivative(double p) const;
};

struct Atom {
  double point = 0.0;
  double mass = 0.0;
};

// Right-continuous CDF on [0, 1] given segment-wise in closed form.
// Evaluation at 1 is exactly 1; whatever mass the last segment leaves
// below 1 is an atom at 1.
class PiecewiseCdf {
 public:
  // Validates the tiling and the CDF invariants; throws
  // InvalidDistributionError on failure.
  static PiecewiseCdf from_segments(std::vector<Segment> segments);

  double eval(double p) const;
  // lim_{x -> p^-} F(x); 0 at p = 0.
  double left_limit(double p) const;
  // Density of the continuous part, taken from the right at joints
  // (from the left at p = 1).
  double density(double p) const;
  double atom_mass(double p) const;
  std::vector<Atom> atoms() const;

  // Smallest x in [0, 1] with F(x) >= u, for u in (0, 1].
  double quantile(double u) const;
  double sample(Rng& rng) const { return quantile(rng.uniform()); }

  // f(p) / F(p). Throws DomainError outside (0, 1) and UndefinedRateError
  // when F(p) = 0 or p carries an atom.
  double reverse_hazard(double p) const;

  const std::vector<Segment>& segments() const { return segments_; }

 private:
  explicit PiecewiseCdf(std::vector<Segment> segments)
      : segments_(std::move(segments)) {}
  const Segment& segment_at(double p) const;  // lo <= p < hi
  void validate() const;

  std::vector<Segment> segments_;
};

// F_O = F_B * F_S, the law of max{b, s} for independent b, s.
PiecewiseCdf shilled_cdf(const PiecewiseCdf& buyer, const PiecewiseCdf& shill);

// lambda * F_B + (1 - lambda) * F_O. Throws DomainError for lambda outside
// [0, 1].
PiecewiseCdf mixture_cdf(const PiecewiseCdf& buyer, const PiecewiseCdf& shilled,
                         double lambda);

// Common building blocks.
PiecewiseCdf uniform_cdf();
// Point mass at x in [0, 1].
PiecewiseCdf point_mass(double x);
// Piecewise-linear CDF through (knots[i], values[i]); knots start at 0 and
// end at 1, residual mass at 1 becomes an atom there.
PiecewiseCdf piecewise_linear_cdf(const std::vector<double>& knots,
                                  const std::vector<double>& values);

double utility(double value, double bid, const PiecewiseCdf& buyer);

struct BestBid {
  double bid = 0.0;
  double utility = 0.0;
  std::size_t index = 0;
  // Bids attaining the maximum (within kArgmaxTolerance) span
  // [argmax_lo, argmax_hi]; argmax_hi is the rightmost grid maximizer.
  double argmax_lo = 0.0;
  double argmax_hi = 0.0;
  std::size_t rightmost_index = 0;
};

inline constexpr double kArgmaxTolerance = 1e-12;

// Exhaustive search over {i / (grid_size - 1)}. Ties within
// kArgmaxTolerance go to the smallest bid.
BestBid best_bid(double value, const PiecewiseCdf& buyer, std::size_t grid_size);

struct RhrCheck {
  bool holds = true;
  double violation_point = 0.0;
  double violation_size = 0.0;
  std::string reason;
};

// Checks that p + 1 / r_B(p) is nondecreasing on an interior grid.
// Zero density with F > 0 gives phi = +inf; F = 0 is a violation.
RhrCheck check_weak_rhr(const PiecewiseCdf& buyer, std::size_t grid_size);

}  // namespace shillbid
