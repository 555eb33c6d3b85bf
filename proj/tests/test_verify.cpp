#include <gtest/gtest.h>

#include <cmath>

#include "shillbid/instance.hpp"
#include "shillbid/verify.hpp"

using namespace shillbid;

TEST(Rhr, UniformPairAndBase) {
  const PiecewiseCdf u = uniform_cdf();
  EXPECT_TRUE(check_rhr_decomposition(u, u, 10000, 1e-10).pass);
  EXPECT_NEAR(shilled_cdf(u, u).reverse_hazard(0.25), 8.0, 1e-12);  // 2 / p
  EXPECT_TRUE(check_rhr_decomposition(base_buyer_cdf(), u, 10000, 1e-8).pass);
}

TEST(Rhr, CorruptedControlFails) {
  const PiecewiseCdf u = uniform_cdf();
  // p^2 + 1e-3 p (1 - p): density off by about 1e-3
  const PiecewiseCdf bad = PiecewiseCdf::from_segments(
      {Segment{0.0, 1.0, {Term{1.0, {Linear{1.0, 0.0}, Linear{1.0, 0.0}}},
                          Term{1e-3, {Linear{1.0, 0.0}, Linear{-1.0, 1.0}}}}}});
  const CheckReport r = check_rhr_decomposition(u, u, bad, 10000, 1e-10);
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.location.empty());
  EXPECT_GT(r.worst, r.tolerance);
}

TEST(ShilledIdentity, Families) {
  EXPECT_TRUE(check_shilled_identity(uniform_cdf(), uniform_cdf(), 10000).pass);
  const AuctionInstance h = make_hard_instance(1e4, 0.3, 2);
  EXPECT_TRUE(check_shilled_identity(h.buyer_dist, h.shill_dist, 10000).pass);
  EXPECT_TRUE(check_shilled_identity(uniform_cdf(), point_mass(0.0), 10000).pass);
}

TEST(OptimumShift, UniformStrictToTwoThirds) {
  const PiecewiseCdf u = uniform_cdf();
  const std::size_t n = 10001;
  const BestBid b = best_bid(1.0, u, n);
  const BestBid o = best_bid(1.0, shilled_cdf(u, u), n);
  EXPECT_NEAR(b.argmax_hi, 0.5, 1e-4);
  EXPECT_NEAR(o.argmax_hi, 2.0 / 3.0, 1e-4);
  EXPECT_TRUE(check_optimum_shift(u, u, {1.0}, n, ShiftMode::kStrict).pass);
  EXPECT_TRUE(check_optimum_shift(u, point_mass(0.0), {0.3, 1.0}, n, ShiftMode::kEqual).pass);
  // a shift is not "equal"
  EXPECT_FALSE(check_optimum_shift(u, u, {1.0}, n, ShiftMode::kEqual).pass);
}

TEST(OptimumShift, RandomInstances) {
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const PiecewiseCdf b = random_piecewise_cdf(rng, 5), s = random_piecewise_cdf(rng, 5);
    EXPECT_TRUE(check_optimum_shift(b, s, {0.3, 0.6, 1.0}, 10000).pass);
  }
}

TEST(Mixture, Chain) {
  const PiecewiseCdf u = uniform_cdf();
  EXPECT_TRUE(check_mixture_monotone(u, u, {0.0, 0.25, 0.5, 0.75, 1.0}, {1.0}, 10001).pass);
  EXPECT_TRUE(check_mixture_monotone(u, u, {0.5, 0.5}, {1.0}, 10001).pass);
  EXPECT_TRUE(check_mixture_monotone(u, point_mass(0.0), {0.0, 0.5, 1.0}, {1.0}, 10001).pass);
  const PiecewiseCdf o = shilled_cdf(u, u);
  double prev = 1.0;
  for (double l : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double p = best_bid(1.0, mixture_cdf(u, o, l), 10001).argmax_hi;
    EXPECT_LE(p, prev);
    EXPECT_GE(p, 0.5 - 1e-4);
    EXPECT_LE(p, 2.0 / 3.0 + 1e-4);
    prev = p;
  }
}

TEST(LevelSets, BaseAndPlanted) {
  const LevelSet base = utility_level_set(base_buyer_cdf(), 1.0, 0.2, 10001);
  EXPECT_FALSE(base.empty);
  EXPECT_TRUE(base.contiguous);
  EXPECT_TRUE(utility_level_set(base_buyer_cdf(), 1.0, 0.3, 10001).empty);
  EXPECT_TRUE(utility_level_set(base_buyer_cdf(), 1.0, 0.3, 10001).contiguous);

  const AuctionInstance h = make_hard_instance(1e4, 1.0, 2);
  const double eps = h.hard->eps;
  const std::size_t n = 100001;
  const LevelSet g = utility_level_set(h.buyer_dist, 1.0, 0.25 + eps / 2, n);
  ASSERT_FALSE(g.empty);
  EXPECT_TRUE(g.contiguous);
  const Interval gr = good_region(h);
  const double step = 1.0 / (n - 1);
  EXPECT_NEAR(g.first * step, gr.lo, step);
  EXPECT_NEAR(g.last * step, gr.hi, step);
}

TEST(LevelSets, BimodalControlNotContiguous) {
  // utility of v = 1 peaks near 0.1 (0.45) and 0.55 (0.4275), dips to 0.25 at 0.5
  const PiecewiseCdf bi =
      piecewise_linear_cdf({0.0, 0.1, 0.5, 0.55, 1.0}, {0.0, 0.5, 0.5, 0.95, 1.0});
  EXPECT_FALSE(check_level_sets(bi, {1.0}, {0.4}, 10001).pass);
  EXPECT_FALSE(utility_level_set(bi, 1.0, 0.4, 10001).contiguous);
}

TEST(Debias, PlantedAndControls) {
  const AuctionInstance h = make_hard_instance(1e4, 0.3, 2);
  EXPECT_TRUE(check_debias(h, 0.34, {0.36, 0.4, 0.45}, 200000, 1).pass);
  const AuctionInstance z{point_mass(1.0), uniform_cdf(), point_mass(0.0), "z", std::nullopt};
  EXPECT_TRUE(check_debias(z, 0.3, {0.3, 0.5, 0.8}, 200000, 2).pass);
  EXPECT_FALSE(check_debias(h, 0.34, {0.36, 0.4, 0.45}, 200000, 3, 0.5).pass);
}

TEST(PathInverse, ClosedFormAndLimits) {
  for (double beta : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
    EXPECT_NEAR(path_inverse_form(2, beta, 0, 1), 2.0 / (1.0 + 2.0 * beta), 1e-12);
  }
  EXPECT_NEAR(path_inverse_form(50, 1e-9, 3, 40), 2.0, 1e-6);
  EXPECT_EQ(path_inverse_form(50, 1.0, 7, 7), 0.0);
  const double v = path_inverse_form(200, 1e3, 0, 199);
  EXPECT_LE(v, 4.0 / std::sqrt(1e3));
  const CheckReport r = check_path_inverse({2, 3, 10, 50}, {1e-3, 1e-1, 1.0, 10.0, 1e3});
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.worst, 4.0);
}

TEST(Suite, FilterAndJson) {
  VerifyOptions o;
  o.debias_samples = 20000;
  o.covariance_blocks = 5000;
  o.random_instances = 5;
  const auto reports = run_verify_suite(o, "shilled_identity");
  ASSERT_EQ(reports.size(), 3u);
  for (const CheckReport& r : reports) {
    EXPECT_TRUE(r.as_expected());
    const nlohmann::json j = report_to_json(r);
    for (const char* k : {"name", "pass", "worst", "location", "samples", "tolerance"}) {
      EXPECT_TRUE(j.contains(k)) << k;
    }
  }
  EXPECT_TRUE(suite_passed(reports));
  CheckReport bad;
  bad.name = "x";
  bad.pass = false;
  EXPECT_FALSE(suite_passed({bad}));
  bad.negative_control = true;
  EXPECT_TRUE(suite_passed({bad}));
}

TEST(Suite, PassIffWorstWithinTolerance) {
  VerifyOptions o;
  o.debias_samples = 20000;
  o.covariance_blocks = 5000;
  o.random_instances = 5;
  for (const CheckReport& r : run_verify_suite(o)) {
    EXPECT_EQ(r.pass, r.worst <= r.tolerance) << r.name;
  }
}
