#include "shillbid/piecewise_cdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "shillbid/errors.hpp"

namespace shillbid {
namespace {

constexpr double kValidationTolerance = 1e-12;
constexpr int kValidationPointsPerSegment = 64;
constexpr double kAtomThreshold = 1e-14;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Folds constant-valued factors into the weight.
Term normalize(Term term) {
  std::vector<Factor> kept;
  kept.reserve(term.factors.size());
  for (const auto& f : term.factors) {
    if (const auto* c = std::get_if<Constant>(&f)) {
      term.weight *= c->value;
    } else if (const auto* l = std::get_if<Linear>(&f); l && l->slope == 0.0) {
      term.weight *= l->intercept;
    } else {
      kept.push_back(f);
    }
  }
  term.factors = std::move(kept);
  return term;
}

std::vector<Term> multiply(const std::vector<Term>& a, const std::vector<Term>& b) {
  std::vector<Term> out;
  for (const auto& ta : a) {
    for (const auto& tb : b) {
      Term t{ta.weight * tb.weight, ta.factors};
      t.factors.insert(t.factors.end(), tb.factors.begin(), tb.factors.end());
      t = normalize(std::move(t));
      if (t.weight != 0.0) out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<Term> scaled(const std::vector<Term>& terms, double w) {
  std::vector<Term> out;
  if (w == 0.0) return out;
  for (auto t : terms) {
    t.weight *= w;
    out.push_back(std::move(t));
  }
  return out;
}

// Common refinement of two tilings, combining the formulas piecewise.
template <class Combine>
PiecewiseCdf combine(const PiecewiseCdf& x, const PiecewiseCdf& y, Combine fn) {
  std::vector<double> cuts;
  for (const auto& s : x.segments()) cuts.push_back(s.lo);
  for (const auto& s : y.segments()) cuts.push_back(s.lo);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  cuts.push_back(1.0);

  auto find = [](const PiecewiseCdf& c, double p) -> const Segment& {
    const auto& segs = c.segments();
    auto it = std::upper_bound(segs.begin(), segs.end(), p,
                               [](double v, const Segment& s) { return v < s.lo; });
    return *(it - 1);
  };

  std::vector<Segment> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const Segment& sx = find(x, cuts[k]);
    const Segment& sy = find(y, cuts[k]);
    out.push_back(Segment{cuts[k], cuts[k + 1], fn(sx.terms, sy.terms)});
  }
  return PiecewiseCdf::from_segments(std::move(out));
}

}  // namespace

double factor_value(const Factor& f, double p) {
  return std::visit(
      Overloaded{
          [](const Constant& c) { return c.value; },
          [p](const Linear& l) { return l.slope * p + l.intercept; },
          [p](const Reciprocal& r) { return r.scale / (1.0 - p); },
          [p](const SineSquared& s) {
            if (p < s.left || p > s.left + s.width) return 0.0;
            const double x = std::sin(std::numbers::pi * (p - s.left) / s.width);
            return x * x;
          },
      },
      f);
}

double factor_derivative(const Factor& f, double p) {
  return std::visit(
      Overloaded{
          [](const Constant&) { return 0.0; },
          [](const Linear& l) { return l.slope; },
          [p](const Reciprocal& r) { return r.scale / ((1.0 - p) * (1.0 - p)); },
          [p](const SineSquared& s) {
            if (p < s.left || p > s.left + s.width) return 0.0;
            // d/dp sin^2(k (p - l)) = k sin(2 k (p - l))
            const double k = std::numbers::pi / s.width;
            return k * std::sin(2.0 * k * (p - s.left));
          },
      },
      f);
}

double Term::value(double p) const {
  double v = weight;
  for (const auto& f : factors) v *= factor_value(f, p);
  return v;
}

double Term::derivative(double p) const {
  double total = 0.0;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    double d = weight * factor_derivative(factors[i], p);
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < factors.size(); ++j) {
      if (j != i) d *= factor_value(factors[j], p);
    }
    total += d;
  }
  return total;
}

double Segment::value(double p) const {
  double v = 0.0;
  for (const auto& t : terms) v += t.value(p);
  return v;
}

double Segment::derivative(double p) const {
  double d = 0.0;
  for (const auto& t : terms) d += t.derivative(p);
  return d;
}

PiecewiseCdf PiecewiseCdf::from_segments(std::vector<Segment> segments) {
  PiecewiseCdf cdf(std::move(segments));
  cdf.validate();
  return cdf;
}

void PiecewiseCdf::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidDistributionError(msg); };
  if (segments_.empty()) fail("cdf has no segments");
  if (segments_.front().lo != 0.0) fail("first segment must start at 0");
  if (segments_.back().hi != 1.0) fail("last segment must end at 1");
  double previous = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (!(s.lo < s.hi)) fail("segment with empty or inverted range");
    if (i + 1 < segments_.size() && s.hi != segments_[i + 1].lo) {
      fail("segments leave a gap or overlap");
    }
    for (int k = 0; k <= kValidationPointsPerSegment; ++k) {
      // k == kValidationPointsPerSegment probes the left limit at hi.
      const double p = s.lo + (s.hi - s.lo) * k / kValidationPointsPerSegment;
      const double v = s.value(p);
      if (!std::isfinite(v) || v < -kValidationTolerance ||
          v > 1.0 + kValidationTolerance) {
        std::ostringstream os;
        os << "cdf value " << v << " outside [0, 1] at p = " << p;
        fail(os.str());
      }
      if (v < previous - kValidationTolerance) {
        std::ostringstream os;
        os << "cdf decreases at p = " << p;
        fail(os.str());
      }
      previous = v;
    }
  }
}

const Segment& PiecewiseCdf::segment_at(double p) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), p,
                             [](double v, const Segment& s) { return v < s.lo; });
  return *(it - 1);
}

double PiecewiseCdf::eval(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("cdf evaluated outside [0, 1]");
  if (p == 1.0) return 1.0;
  return clamp01(segment_at(p).value(p));
}

double PiecewiseCdf::left_limit(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("cdf evaluated outside [0, 1]");
  if (p == 0.0) return 0.0;
  auto it = std::lower_bound(segments_.begin(), segments_.end(), p,
                             [](const Segment& s, double v) { return s.lo < v; });
  return clamp01((it - 1)->value(p));
}

double PiecewiseCdf::density(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("density evaluated outside [0, 1]");
  if (p == 1.0) return segments_.back().derivative(p);
  return segment_at(p).derivative(p);
}

double PiecewiseCdf::atom_mass(double p) const { return eval(p) - left_limit(p); }

std::vector<Atom> PiecewiseCdf::atoms() const {
  std::vector<Atom> out;
  auto probe = [&](double p) {
    const double m = atom_mass(p);
    if (m > kAtomThreshold) out.push_back({p, m});
  };
  probe(0.0);
  for (std::size_t i = 1; i < segments_.size(); ++i) probe(segments_[i].lo);
  probe(1.0);
  return out;
}

double PiecewiseCdf::quantile(double u) const {
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("quantile level outside (0, 1]");
  for (const Segment& s : segments_) {
    if (s.value(s.lo) >= u) return s.lo;
    if (s.value(s.hi) < u) continue;
    if (s.terms.size() == 1 && s.terms[0].factors.size() == 1) {
      const Term& t = s.terms[0];
      if (const auto* l = std::get_if<Linear>(&t.factors[0])) {
        return std::clamp((u / t.weight - l->intercept) / l->slope, s.lo, s.hi);
      }
      if (const auto* r = std::get_if<Reciprocal>(&t.factors[0])) {
        return std::clamp(1.0 - t.weight * r->scale / u, s.lo, s.hi);
      }
    }
    double lo = s.lo;
    double hi = s.hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (s.value(mid) >= u) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }
  return 1.0;
}

double PiecewiseCdf::reverse_hazard(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("reverse hazard needs p in (0, 1)");
  const double f_cdf = eval(p);
  if (f_cdf <= 0.0) throw UndefinedRateError("reverse hazard undefined: F(p) = 0");
  if (atom_mass(p) > kAtomThreshold) {
    throw UndefinedRateError("reverse hazard undefined: atom at p");
  }
  return density(p) / f_cdf;
}

PiecewiseCdf shilled_cdf(const PiecewiseCdf& buyer, const PiecewiseCdf& shill) {
  return combine(buyer, shill, [](const std::vector<Term>& a, const std::vector<Term>& b) {
    return multiply(a, b);
  });
}

PiecewiseCdf mixture_cdf(const PiecewiseCdf& buyer, const PiecewiseCdf& shilled,
                         double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("mixture weight outside [0, 1]");
  }
  return combine(buyer, shilled,
                 [lambda](const std::vector<Term>& a, const std::vector<Term>& b) {
                   auto out = scaled(a, lambda);
                   auto rest = scaled(b, 1.0 - lambda);
                   out.insert(out.end(), rest.begin(), rest.end());
                   return out;
                 });
}

PiecewiseCdf uniform_cdf() {
  return PiecewiseCdf::from_segments({Segment{0.0, 1.0, {Term{1.0, {Linear{1.0, 0.0}}}}}});
}

PiecewiseCdf point_mass(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("point mass outside [0, 1]");
  const Term zero{0.0, {}};
  const Term one{1.0, {}};
  if (x == 0.0) return PiecewiseCdf::from_segments({Segment{0.0, 1.0, {one}}});
  if (x == 1.0) return PiecewiseCdf::from_segments({Segment{0.0, 1.0, {zero}}});
  return PiecewiseCdf::from_segments({Segment{0.0, x, {zero}}, Segment{x, 1.0, {one}}});
}

PiecewiseCdf piecewise_linear_cdf(const std::vector<double>& knots,
                                  const std::vector<double>& values) {
  if (knots.size() < 2 || knots.size() != values.size()) {
    throw InvalidDistributionError("piecewise-linear cdf needs matching knots/values");
  }
  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double slope = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    const double intercept = values[i] - slope * knots[i];
    segs.push_back(Segment{knots[i], knots[i + 1], {Term{1.0, {Linear{slope, intercept}}}}});
  }
  return PiecewiseCdf::from_segments(std::move(segs));
}

double utility(double value, double bid, const PiecewiseCdf& buyer) {
  return (value - bid) * buyer.eval(bid);
}

BestBid best_bid(double value, const PiecewiseCdf& buyer, std::size_t grid_size) {
  if (grid_size < 2) throw DomainError("best_bid needs at least two grid points");
  const double denom = static_cast<double>(grid_size - 1);
  std::vector<double> u(grid_size);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_size; ++i) {
    u[i] = utility(value, static_cast<double>(i) / denom, buyer);
    best = std::max(best, u[i]);
  }
  BestBid out;
  bool first = true;
  for (std::size_t i = 0; i < grid_size; ++i) {
    if (u[i] < best - kArgmaxTolerance) continue;
    if (first) {
      out.index = i;
      out.bid = static_cast<double>(i) / denom;
      out.utility = u[i];
      out.argmax_lo = out.bid;
      first = false;
    }
    out.rightmost_index = i;
    out.argmax_hi = static_cast<double>(i) / denom;
  }
  return out;
}

RhrCheck check_weak_rhr(const PiecewiseCdf& buyer, std::size_t grid_size) {
  RhrCheck out;
  const double inf = std::numeric_limits<double>::infinity();
  double previous = -inf;
  for (std::size_t i = 1; i < grid_size; ++i) {
    const double p = static_cast<double>(i) / static_cast<double>(grid_size);
    const double f_cdf = buyer.eval(p);
    if (f_cdf <= 0.0 || buyer.atom_mass(p) > kAtomThreshold) {
      out.holds = false;
      out.violation_point = p;
      out.violation_size = inf;
      out.reason = f_cdf <= 0.0 ? "F(p) = 0, reverse hazard undefined"
                                : "atom at p, reverse hazard undefined";
      return out;
    }
    const double dens = buyer.density(p);
    const double phi = dens > 0.0 ? p + f_cdf / dens : inf;
    if (phi < previous - 1e-9) {
      out.holds = false;
      out.violation_point = p;
      out.violation_size = previous - phi;
      out.reason = std::isinf(previous) ? "zero density followed by positive density"
                                        : "p + 1/r(p) decreases";
      return out;
    }
    previous = phi;
  }
  return out;
}

}  // namespace shillbid
