#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "shillbid/instance.hpp"
#include "shillbid/piecewise_cdf.hpp"
#include "shillbid/rng.hpp"

namespace shillbid {

struct CheckReport {
  std::string name;
  bool pass = false;
  double worst = 0.0;
  std::string location;
  std::size_t samples = 0;
  double tolerance = 0.0;
  // A negative control is a deliberately broken input; the suite expects it to fail.
  bool negative_control = false;
  std::string detail;

  bool as_expected() const { return pass != negative_control; }
};

nlohmann::json report_to_json(const CheckReport& r);

// max |r_O - r_B - r_S| over the interior grid; points where a rate is
// undefined are skipped and counted in `detail`.
CheckReport check_rhr_decomposition(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                    const PiecewiseCdf& shilled, std::size_t grid_size,
                                    double tol);
CheckReport check_rhr_decomposition(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                    std::size_t grid_size, double tol);

// |F_O - F_B F_S| and max(F_O - F_B, 0) on the grid.
CheckReport check_shilled_identity(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                   std::size_t grid_size, double tol = 1e-12);

// Rightmost grid argmax under F_O minus that under F_B. `strict` requires a
// gap of at least one grid step; `equal` requires no shift at all.
enum class ShiftMode { kWeak, kStrict, kEqual };
CheckReport check_optimum_shift(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                const std::vector<double>& values, std::size_t grid_size,
                                ShiftMode mode = ShiftMode::kWeak);

// Rightmost argmax under lambda F_B + (1 - lambda) F_O along an increasing
// ladder must be nonincreasing and stay within [p_B, p_O].
CheckReport check_mixture_monotone(const PiecewiseCdf& buyer, const PiecewiseCdf& shill,
                                   std::vector<double> ladder, const std::vector<double>& values,
                                   std::size_t grid_size);

struct LevelSet {
  bool empty = true;
  bool contiguous = true;
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count = 0;
};
LevelSet utility_level_set(const PiecewiseCdf& buyer, double value, double level,
                           std::size_t grid_size);
CheckReport check_level_sets(const PiecewiseCdf& buyer, const std::vector<double>& values,
                             const std::vector<double>& levels, std::size_t grid_size);

// Monte Carlo mean of the debiased observation at each q against F_B(q);
// worst is max |error| / (sigma / sqrt(n)), tolerance 4. `denominator_scale`
// multiplies F_S(q) in the debiasing formula (1 is the correct estimator).
CheckReport check_debias(const AuctionInstance& instance, double bid,
                         const std::vector<double>& qs, std::size_t n, std::uint64_t seed,
                         double denominator_scale = 1.0);

// Largest eigenvalue of the empirical noise covariance of the suffix vector
// over `points` (played bid = points[0]) against c_suf (2^-m + h) / gamma.
CheckReport check_suffix_covariance(const AuctionInstance& instance, double value,
                                    const std::vector<double>& points, int epoch, double mesh,
                                    double gamma, double c_suf, std::size_t n_blocks,
                                    std::uint64_t seed);

// d' (I + beta L)^-1 d for the path Laplacian, d = e_a - e_b, against
// C min{1, |a - b| / beta, 1 / sqrt(beta)}. worst is the fitted C.
CheckReport check_path_inverse(const std::vector<std::size_t>& ks,
                               const std::vector<double>& betas, double c_max = 4.0);
double path_inverse_form(std::size_t k, double beta, std::size_t a, std::size_t b);

PiecewiseCdf random_piecewise_cdf(Rng& rng, std::size_t knots);

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t grid_size = 10000;
  std::size_t debias_samples = 1000000;
  std::size_t covariance_blocks = 100000;
  std::size_t random_instances = 50;
};

// Every positive case and negative control; `filter` keeps names with that prefix.
std::vector<CheckReport> run_verify_suite(const VerifyOptions& options,
                                          const std::string& filter = "");
bool suite_passed(const std::vector<CheckReport>& reports);

}  // namespace shillbid
