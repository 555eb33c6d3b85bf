#include "shillbid/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "shillbid/errors.hpp"
#include "shillbid/environment.hpp"

namespace shillbid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string at(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

double grid_point(std::size_t i, std::size_t n) {
  return static_cast<double>(i) / static_cast<double>(n - 1);
}

void finish(CheckReport& r) { r.pass = r.worst <= r.tolerance; }

}  // namespace

nlohmann::json report_to_json(const CheckReport& r) {
  return {{"name", r.name},
          {"pass", r.pass},
          {"worst", std::isfinite(r.worst) ? nlohmann::json(r.worst) : nlohmann::json("inf")},
          {"location", r.location},
          {"samples", r.samples},
          {"tolerance", r.tolerance},
          {"negative_control", r.negative_control},
          {"as_expected", r.as_expected()},
          {"detail", r.detail}};
}

CheckReport check_rhr_decomposition(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                    const PiecewiseCdf& shilled, std::size_t grid_size,
                                    double tol) {
  if (grid_size < 3) throw DomainError("rhr check needs an interior grid");
  CheckReport r;
  r.name = "rhr_decomposition";
  r.tolerance = tol;
  std::size_t skipped = 0;
  for (std::size_t i = 1; i + 1 < grid_size; ++i) {
    const double p = grid_point(i, grid_size);
    double err;
    try {
      err = std::abs(shilled.reverse_hazard(p) - buyer.reverse_hazard(p) - shill.reverse_hazard(p));
    } catch (const UndefinedRateError&) {
      ++skipped;
      continue;
    }
    ++r.samples;
    if (err > r.worst) {
      r.worst = err;
      r.location = "p=" + at(p);
    }
  }
  r.detail = std::to_string(skipped) + " points with an undefined rate skipped";
  finish(r);
  return r;
}

CheckReport check_rhr_decomposition(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                    std::size_t grid_size, double tol) {
  return check_rhr_decomposition(buyer, shill, shilled_cdf(buyer, shill), grid_size, tol);
}

CheckReport check_shilled_identity(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                   std::size_t grid_size, double tol) {
  CheckReport r;
  r.name = "shilled_identity";
  r.tolerance = tol;
  const PiecewiseCdf o = shilled_cdf(buyer, shill);
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double p = grid_point(i, grid_size);
    const double fo = o.eval(p), fb = buyer.eval(p);
    const double err = std::max(std::abs(fo - fb * shill.eval(p)), fo - fb);
    ++r.samples;
    if (err > r.worst) {
      r.worst = err;
      r.location = "p=" + at(p);
    }
  }
  finish(r);
  return r;
}

CheckReport check_optimum_shift(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                const std::vector<double>& values, std::size_t grid_size,
                                ShiftMode mode) {
  CheckReport r;
  r.name = mode == ShiftMode::kStrict ? "strict_shift" : "optimum_shift";
  r.tolerance = 1e-12;
  const PiecewiseCdf o = shilled_cdf(buyer, shill);
  const double step = 1.0 / static_cast<double>(grid_size - 1);
  std::ostringstream detail;
  for (double v : values) {
    const double pb = best_bid(v, buyer, grid_size).argmax_hi;
    const double po = best_bid(v, o, grid_size).argmax_hi;
    double viol = 0.0;
    switch (mode) {
      case ShiftMode::kWeak: viol = std::max(0.0, pb - po); break;
      case ShiftMode::kStrict: viol = std::max(0.0, pb + step - po); break;
      case ShiftMode::kEqual: viol = std::abs(po - pb); break;
    }
    detail << "v=" << v << ": p_B=" << pb << " p_O=" << po << "; ";
    ++r.samples;
    if (r.location.empty() || viol > r.worst) {
      r.worst = viol;
      r.location = "v=" + at(v);
    }
  }
  r.detail = detail.str();
  finish(r);
  return r;
}

CheckReport check_mixture_monotone(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                   std::vector<double> ladder, const std::vector<double>& values,
                                   std::size_t grid_size) {
  CheckReport r;
  r.name = "mixture_monotone";
  r.tolerance = 1e-12;
  std::sort(ladder.begin(), ladder.end());
  const PiecewiseCdf o = shilled_cdf(buyer, shill);
  std::ostringstream detail;
  for (double v : values) {
    const double pb = best_bid(v, buyer, grid_size).argmax_hi;
    const double po = best_bid(v, o, grid_size).argmax_hi;
    double prev = kInf;
    detail << "v=" << v << ":";
    for (double lambda : ladder) {
      const double p = best_bid(v, mixture_cdf(buyer, o, lambda), grid_size).argmax_hi;
      detail << " " << p;
      const double viol = std::max({0.0, p - prev, pb - p, p - po});
      ++r.samples;
      if (viol > r.worst) {
        r.worst = viol;
        r.location = "v=" + at(v) + " lambda=" + at(lambda);
      }
      prev = p;
    }
    detail << "; ";
  }
  r.detail = detail.str();
  finish(r);
  return r;
}

LevelSet utility_level_set(const PiecewiseCdf& buyer, double value, double level,
                           std::size_t grid_size) {
  LevelSet s;
  for (std::size_t i = 0; i < grid_size; ++i) {
    if (utility(value, grid_point(i, grid_size), buyer) < level) continue;
    if (s.empty) s.first = i;
    s.empty = false;
    s.last = i;
    ++s.count;
  }
  s.contiguous = s.empty || s.count == s.last - s.first + 1;
  return s;
}

CheckReport check_level_sets(const PiecewiseCdf& buyer, const std::vector<double>& values,
                             const std::vector<double>& levels, std::size_t grid_size) {
  CheckReport r;
  r.name = "level_sets";
  r.tolerance = 0.0;
  for (double v : values) {
    for (double a : levels) {
      const LevelSet s = utility_level_set(buyer, v, a, grid_size);
      ++r.samples;
      if (!s.contiguous) {
        const double holes = static_cast<double>(s.last - s.first + 1 - s.count);
        if (holes > r.worst) {
          r.worst = holes;
          r.location = "v=" + at(v) + " level=" + at(a);
        }
      }
    }
  }
  r.detail = "worst = grid points missing inside the level-set hull";
  finish(r);
  return r;
}

CheckReport check_debias(const AuctionInstance& instance, double bid,
                         const std::vector<double>& qs, std::size_t n, std::uint64_t seed,
                         double denominator_scale) {
  CheckReport r;
  r.name = "debias";
  r.tolerance = 4.0;
  r.samples = n;
  std::vector<double> fs(qs.size());
  for (std::size_t j = 0; j < qs.size(); ++j) {
    if (qs[j] < bid) throw DomainError("debias check needs q >= bid");
    fs[j] = instance.shill_dist.eval(qs[j]) * denominator_scale;
    if (!(fs[j] > 0.0)) throw DomainError("debias check needs F_S(q) > 0");
  }
  std::vector<double> sum(qs.size(), 0.0), sq(qs.size(), 0.0);
  Rng rng(seed);
  for (std::size_t t = 0; t < n; ++t) {
    const double b = instance.buyer_dist.sample(rng);
    const double s = instance.shill_dist.sample(rng);
    const bool won = bid >= b;
    const double o = std::max(b, s);
    for (std::size_t j = 0; j < qs.size(); ++j) {
      const double y = won ? 1.0 : (o <= qs[j] ? 1.0 / fs[j] : 0.0);
      sum[j] += y;
      sq[j] += y * y;
    }
  }
  const double nn = static_cast<double>(n);
  std::ostringstream detail;
  for (std::size_t j = 0; j < qs.size(); ++j) {
    const double mean = sum[j] / nn;
    const double var = std::max(0.0, (sq[j] / nn - mean * mean) * nn / (nn - 1.0));
    const double se = std::sqrt(var / nn);
    const double err = std::abs(mean - instance.buyer_dist.eval(qs[j]));
    const double z = se > 0.0 ? err / se : (err == 0.0 ? 0.0 : kInf);
    detail << "q=" << qs[j] << " z=" << z << "; ";
    if (j == 0 || z > r.worst) {
      r.worst = z;
      r.location = "p=" + at(bid) + " q=" + at(qs[j]);
    }
  }
  r.detail = detail.str();
  finish(r);
  return r;
}

CheckReport check_suffix_covariance(const AuctionInstance& instance, double value,
                                    const std::vector<double>& points, int epoch, double mesh,
                                    double gamma, double c_suf, std::size_t n_blocks,
                                    std::uint64_t seed) {
  if (points.size() < 2) throw DomainError("suffix covariance needs two points");
  CheckReport r;
  r.name = "suffix_covariance";
  r.samples = n_blocks;
  r.tolerance = c_suf * (std::ldexp(1.0, -epoch) + mesh) / gamma;
  const std::size_t k = points.size();
  std::vector<double> a(k), fs(k), mean(k - 1);
  for (std::size_t j = 0; j < k; ++j) {
    a[j] = value - points[j];
    fs[j] = instance.shill_dist.eval(points[j]);
    if (!(fs[j] > 0.0)) throw DomainError("suffix covariance needs F_S > 0 on the points");
  }
  for (std::size_t j = 0; j + 1 < k; ++j) {
    mean[j] = utility(value, points[j + 1], instance.buyer_dist) -
              utility(value, points[j], instance.buyer_dist);
  }
  const Eigen::Index d = static_cast<Eigen::Index>(k - 1);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd xi(d);
  std::vector<double> y(k);
  Rng rng(seed);
  for (std::size_t t = 0; t < n_blocks; ++t) {
    const double b = instance.buyer_dist.sample(rng);
    const double s = instance.shill_dist.sample(rng);
    const bool won = points[0] >= b;
    const double o = std::max(b, s);
    for (std::size_t j = 0; j < k; ++j) y[j] = won ? 1.0 : (o <= points[j] ? 1.0 / fs[j] : 0.0);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      xi(static_cast<Eigen::Index>(j)) = a[j + 1] * y[j + 1] - a[j] * y[j] - mean[j];
    }
    cov.noalias() += xi * xi.transpose();
  }
  cov /= static_cast<double>(n_blocks);
  r.worst = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();
  r.location = "k=" + std::to_string(k) + " gamma=" + at(gamma);
  r.detail = "bound c_suf (2^-m + h) / gamma = " + at(r.tolerance);
  finish(r);
  return r;
}

namespace {

Eigen::MatrixXd path_inverse(std::size_t k, double beta) {
  const Eigen::Index n = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    a(i, i) += beta;
    a(i + 1, i + 1) += beta;
    a(i, i + 1) -= beta;
    a(i + 1, i) -= beta;
  }
  return a.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
}

}  // namespace

double path_inverse_form(std::size_t k, double beta, std::size_t a, std::size_t b) {
  const Eigen::MatrixXd inv = path_inverse(k, beta);
  const Eigen::Index i = static_cast<Eigen::Index>(a), j = static_cast<Eigen::Index>(b);
  return inv(i, i) + inv(j, j) - 2.0 * inv(i, j);
}

CheckReport check_path_inverse(const std::vector<std::size_t>& ks,
                               const std::vector<double>& betas, double c_max) {
  CheckReport r;
  r.name = "path_inverse";
  r.tolerance = c_max;
  for (std::size_t k : ks) {
    for (double beta : betas) {
      const Eigen::MatrixXd inv = path_inverse(k, beta);
      const Eigen::Index n = static_cast<Eigen::Index>(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
          const double form = inv(i, i) + inv(j, j) - 2.0 * inv(i, j);
          const double dist = static_cast<double>(j - i);
          const double bound = std::min({1.0, dist / beta, 1.0 / std::sqrt(beta)});
          const double c = form / bound;
          ++r.samples;
          if (c > r.worst) {
            r.worst = c;
            r.location = "k=" + std::to_string(k) + " beta=" + at(beta) + " a=" +
                         std::to_string(i) + " b=" + std::to_string(j);
          }
        }
      }
    }
  }
  r.detail = "worst = fitted constant C";
  finish(r);
  return r;
}

PiecewiseCdf random_piecewise_cdf(Rng& rng, std::size_t knots) {
  if (knots < 2) throw DomainError("random cdf needs two knots");
  std::vector<double> x{0.0, 1.0}, y{0.0};
  for (std::size_t i = 0; i + 2 < knots; ++i) x.push_back(rng.uniform());
  std::sort(x.begin(), x.end());
  std::vector<double> u;
  for (std::size_t i = 0; i + 1 < knots; ++i) u.push_back(rng.uniform());
  std::sort(u.begin(), u.end());
  const double top = 0.5 + 0.5 * rng.uniform();
  for (double v : u) y.push_back(v * top);
  return piecewise_linear_cdf(x, y);
}

namespace {

void add(std::vector<CheckReport>& out, const std::string& filter, CheckReport r,
         const std::string& suffix, bool negative = false) {
  r.name += "/" + suffix;
  r.negative_control = negative;
  if (filter.empty() || r.name.rfind(filter, 0) == 0) out.push_back(std::move(r));
}

bool wanted(const std::string& filter, const std::string& name) {
  return filter.empty() || name.rfind(filter, 0) == 0 || filter.rfind(name, 0) == 0;
}

PiecewiseCdf bimodal_buyer() {
  return piecewise_linear_cdf({0.0, 0.1, 0.5, 0.55, 1.0}, {0.0, 0.5, 0.5, 0.95, 1.0});
}

}  // namespace

std::vector<CheckReport> run_verify_suite(const VerifyOptions& o, const std::string& filter) {
  std::vector<CheckReport> out;
  const PiecewiseCdf uni = uniform_cdf();
  const PiecewiseCdf zero = point_mass(0.0);
  const PiecewiseCdf base = base_buyer_cdf();
  const AuctionInstance hard = make_hard_instance(1e4, 0.3, 2);
  const PiecewiseCdf& planted = hard.buyer_dist;
  const PiecewiseCdf& hard_shill = hard.shill_dist;
  const std::size_t g = o.grid_size;

  if (wanted(filter, "rhr_decomposition")) {
    add(out, filter, check_rhr_decomposition(uni, uni, g, 1e-10), "uniform-uniform");
    add(out, filter, check_rhr_decomposition(base, uni, g, 1e-8), "base-uniform");
    add(out, filter, check_rhr_decomposition(planted, hard_shill, g, 1e-8), "planted-lowshill");
    const PiecewiseCdf corrupted = mixture_cdf(uni, shilled_cdf(uni, uni), 1e-3);
    add(out, filter, check_rhr_decomposition(uni, uni, corrupted, g, 1e-10), "corrupted", true);
  }
  if (wanted(filter, "shilled_identity")) {
    add(out, filter, check_shilled_identity(uni, uni, g), "uniform-uniform");
    add(out, filter, check_shilled_identity(planted, hard_shill, g), "planted-lowshill");
    add(out, filter, check_shilled_identity(uni, zero, g), "uniform-zero");
  }
  if (wanted(filter, "optimum_shift")) {
    add(out, filter, check_optimum_shift(uni, uni, {0.25, 0.5, 0.75, 1.0}, g), "uniform-uniform");
    add(out, filter, check_optimum_shift(base, hard_shill, {0.5, 0.8, 1.0}, g), "base-lowshill");
    add(out, filter, check_optimum_shift(uni, zero, {0.25, 0.5, 1.0}, g, ShiftMode::kEqual),
        "zero-shill-equal");
    Rng rng(o.seed);
    CheckReport agg;
    agg.name = "optimum_shift";
    agg.tolerance = 1e-12;
    for (std::size_t i = 0; i < o.random_instances; ++i) {
      const PiecewiseCdf b = random_piecewise_cdf(rng, 5);
      const PiecewiseCdf s = random_piecewise_cdf(rng, 5);
      const CheckReport r = check_optimum_shift(b, s, {0.3, 0.6, 1.0}, g);
      agg.samples += r.samples;
      if (agg.location.empty() || r.worst > agg.worst) {
        agg.worst = r.worst;
        agg.location = "instance " + std::to_string(i) + " " + r.location;
      }
    }
    agg.detail = std::to_string(o.random_instances) + " random piecewise-linear (B, S) pairs";
    finish(agg);
    add(out, filter, agg, "random");
  }
  if (wanted(filter, "strict_shift")) {
    add(out, filter, check_optimum_shift(uni, uni, {1.0}, g, ShiftMode::kStrict), "uniform-uniform");
  }
  if (wanted(filter, "mixture_monotone")) {
    const std::vector<double> ladder{0.0, 0.25, 0.5, 0.75, 1.0};
    add(out, filter, check_mixture_monotone(uni, uni, ladder, {1.0, 0.75}, g), "uniform-uniform");
    add(out, filter, check_mixture_monotone(uni, zero, ladder, {1.0}, g), "zero-shill");
  }
  if (wanted(filter, "level_sets")) {
    add(out, filter, check_level_sets(base, {1.0, 0.8}, {0.1, 0.2, 0.24}, g), "base");
    const double eps = hard.hard->eps;
    CheckReport r = check_level_sets(planted, {1.0}, {0.25 + eps / 2.0}, g);
    const LevelSet s = utility_level_set(planted, 1.0, 0.25 + eps / 2.0, g);
    const Interval ga = good_region(hard);
    const double step = 1.0 / static_cast<double>(g - 1);
    const double off = s.empty ? kInf
                               : std::max(std::abs(grid_point(s.first, g) - ga.lo),
                                          std::abs(grid_point(s.last, g) - ga.hi));
    // Contiguity and agreement with the good region to within one grid step.
    if (off > step * (1.0 + 1e-9)) r.worst = std::max(r.worst, off / step);
    r.detail = "block [" + at(grid_point(s.first, g)) + ", " + at(grid_point(s.last, g)) +
               "] vs good region [" + at(ga.lo) + ", " + at(ga.hi) + "]";
    finish(r);
    add(out, filter, r, "planted-good-region");
    add(out, filter, check_level_sets(bimodal_buyer(), {1.0}, {0.4}, g), "bimodal", true);
  }
  if (wanted(filter, "debias")) {
    add(out, filter, check_debias(hard, 0.34, {0.36, 0.4, 0.45, 0.49}, o.debias_samples, o.seed),
        "planted-gamma0.3");
    const AuctionInstance full{point_mass(1.0), uni, zero, "uniform/zero", std::nullopt};
    add(out, filter, check_debias(full, 0.3, {0.3, 0.5, 0.8}, o.debias_samples, o.seed + 1),
        "zero-shill");
    add(out, filter,
        check_debias(hard, 0.34, {0.4, 0.45, 0.49}, o.debias_samples, o.seed + 2, 0.5),
        "wrong-denominator", true);
  }
  if (wanted(filter, "suffix_covariance")) {
    const int m = 6;
    const double h = std::ldexp(1.0, -m);
    std::vector<double> pts;
    for (int j = 22; j < 30; ++j) pts.push_back(j * h);
    std::uint64_t seed = o.seed;
    for (double gamma : {1.0, 0.5, 0.1}) {
      const AuctionInstance inst = make_hard_instance(1e4, gamma, 1);
      add(out, filter,
          check_suffix_covariance(inst, 1.0, pts, m, h, gamma, 4.0, o.covariance_blocks, ++seed),
          "k8-gamma" + at(gamma));
    }
    const AuctionInstance inst = make_hard_instance(1e4, 0.5, 1);
    CheckReport r = check_suffix_covariance(inst, 1.0, {pts[0], pts[1]}, m, h, 0.5, 4.0,
                                            o.covariance_blocks, ++seed);
    r.tolerance *= 2.0;
    finish(r);
    add(out, filter, r, "k2-degenerate");
  }
  if (wanted(filter, "path_inverse")) {
    std::vector<std::size_t> ks;
    for (std::size_t k = 2; k <= 200; ++k) ks.push_back(k);
    add(out, filter, check_path_inverse(ks, {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}), "k2-200");
  }
  return out;
}

bool suite_passed(const std::vector<CheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const CheckReport& r) { return r.as_expected(); });
}

}  // namespace shillbid
