#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "shillbid/certificates.hpp"
#include "shillbid/environment.hpp"
#include "shillbid/errors.hpp"
#include "shillbid/instance.hpp"
#include "shillbid/rng.hpp"

using namespace shillbid;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Measurement noiseless(const Measurement& shape, const Eigen::VectorXd& f, std::size_t count) {
  Measurement m = shape;
  m.count = count;
  double r = 0.0;
  for (std::size_t a = 0; a < m.index.size(); ++a) r += m.coef[a] * f(m.index[a]);
  m.response_sum = r * static_cast<double>(count);
  return m;
}

}  // namespace

TEST(DyadicGrid, PointsAndSpans) {
  const DyadicGrid g(3);
  EXPECT_EQ(g.size(), 9u);
  EXPECT_EQ(g.mesh(), 0.125);
  EXPECT_EQ(g.index_of(0.375), 3u);
  EXPECT_THROW(g.index_of(0.3), DomainError);
  const auto s = g.span({0.3, 0.6});
  ASSERT_TRUE(s);
  EXPECT_EQ(s->first, 3u);
  EXPECT_EQ(s->last, 4u);
  EXPECT_FALSE(g.span({0.3, 0.32}));
  // nesting
  const DyadicGrid fine(4);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NO_THROW(fine.index_of(g.point(j)));
}

TEST(Robust, RunningMean) {
  const DyadicGrid g(2);
  RobustCertificate c(g);
  c.update(0.5, true);
  c.update(0.5, false);
  c.update(0.5, true);
  EXPECT_NEAR(c.mean(2), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(c.count(2), 3u);
  EXPECT_EQ(c.count(1), 0u);
  EXPECT_EQ(c.mean(1), 0.0);
  EXPECT_THROW(c.update(0.3, true), DomainError);
}

TEST(Robust, MonteCarloMean) {
  const DyadicGrid g(3);
  RobustCertificate c(g);
  Rng rng(1);
  const double fq = base_buyer_cdf().eval(0.375);
  for (int i = 0; i < 100000; ++i) c.update(0.375, rng.bernoulli(fq));
  EXPECT_NEAR(c.mean(3), fq, 0.01);
}

TEST(Robust, Gap) {
  const DyadicGrid g(3);
  RobustCertificate c(g);
  // Exact uniform F at 0.375 and 0.5, v = 1: 0.25 - 0.234375.
  for (int i = 0; i < 8; ++i) c.update(0.5, i < 4);
  for (int i = 0; i < 8; ++i) c.update(0.375, i < 3);
  EXPECT_NEAR(c.gap(1.0, 0.5, 0.375), 0.25 - 0.625 * 0.375, 1e-15);
  EXPECT_EQ(c.gap(1.0, 0.5, 0.5), 0.0);
  EXPECT_THROW(c.gap(1.0, 0.5, 0.25), DomainError);
}

TEST(Robust, Radius) {
  const DyadicGrid g(2);
  RobustCertificate c(g);
  for (int i = 0; i < 8; ++i) c.update_index(1, true);
  EXPECT_NEAR(c.radius({1, 1}, 4.0), 1.0, 1e-15);
  for (int i = 0; i < 8; ++i) c.update_index(1, false);
  EXPECT_NEAR(c.radius({1, 1}, 4.0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(c.radius({1, 2}, 4.0), kInf);
}

TEST(Debias, Formula) {
  EXPECT_EQ(debiased_suffix_obs(true, 0.0, 0.4, 0.5), 1.0);
  EXPECT_EQ(debiased_suffix_obs(false, 0.3, 0.4, 0.5), 2.0);
  EXPECT_EQ(debiased_suffix_obs(false, 0.6, 0.4, 0.5), 0.0);
  EXPECT_THROW(debiased_suffix_obs(false, 0.3, 0.4, 0.0), DomainError);
}

TEST(SuffixRows, Substitution) {
  const DyadicGrid g(2);
  const auto rows = suffix_difference_rows(1.0, 7, g, {1, 2}, 0.25, {1.0, 1.0});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].response_sum, 0.5 - 0.75, 1e-15);
  EXPECT_EQ(rows[0].index, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(rows[0].coef, (std::vector<double>{-0.75, 0.5}));
  EXPECT_EQ(rows[0].key.value, 7u);
  EXPECT_TRUE(suffix_difference_rows(1.0, 0, g, {1, 2}, 0.5, {1.0, 1.0}).empty());
  // only pairs at or above the bid
  EXPECT_EQ(suffix_difference_rows(1.0, 0, g, {0, 4}, 0.5, std::vector<double>(5, 1.0)).size(), 2u);
}

TEST(SuffixRows, ExpectedResponseIsUtilityDifference) {
  const AuctionInstance inst{point_mass(1.0), uniform_cdf(), uniform_cdf(), "uu", std::nullopt};
  const DyadicGrid g(3);
  const double lo = 0.375, hi = 0.5;
  const double exact = (1 - hi) * hi - (1 - lo) * lo;
  Rng rng(2);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Feedback fb = play_round(inst, 0, 1.0, lo, rng);
    const double o = fb.report.value_or(0.0);
    const std::vector<double> y{debiased_suffix_obs(fb.won, o, lo, lo),
                                debiased_suffix_obs(fb.won, o, hi, hi)};
    const double r = suffix_difference_rows(1.0, 0, g, {3, 4}, lo, y)[0].response_sum;
    sum += r;
    sq += r * r;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LE(std::abs(mean - exact), 4.0 * sd / std::sqrt(n));
}

TEST(Candidates, Weight) {
  EXPECT_NEAR(candidate_weight(0.5, 1, 0.5, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(candidate_weight(0.25, 3, 0.125, 4.0), 2 * candidate_weight(0.125, 3, 0.125, 4.0), 1e-15);
  EXPECT_NEAR(candidate_weight(0.5, 4, 0.0625, 4.0), 2 * candidate_weight(0.5, 3, 0.125, 4.0), 1e-15);
}

TEST(Candidates, DyadicSet) {
  const auto c = dyadic_candidates(1000.0);
  ASSERT_EQ(c.size(), 11u);  // l = 0..10
  EXPECT_EQ(c.front(), 1.0);
  EXPECT_EQ(c.back(), std::ldexp(1.0, -10));
  EXPECT_EQ(dyadic_candidates(1024.0).size(), 11u);
  EXPECT_EQ(dyadic_candidates(1.0).size(), 1u);
}

TEST(Candidates, Admissible) {
  const DyadicGrid g(5);
  const auto spans = std::vector<IndexSpan>{*g.span({1.0 / 3.0, 0.5})};
  const auto cands = dyadic_candidates(1e4);
  const AuctionInstance hard = make_hard_instance(1e4, 0.3, 1);
  for (double gb : admissible_candidates(hard.shill_dist, g, spans, cands, 4.0)) EXPECT_LE(gb, 0.3);
  EXPECT_EQ(admissible_candidates(hard.shill_dist, g, spans, cands, 4.0).front(), 0.25);
  EXPECT_EQ(admissible_candidates(hard.shill_dist, g, spans, cands, 4.0).size(), cands.size() - 2);

  // brute-force oracle on a few shapes, including a jump inside the span
  const std::vector<PiecewiseCdf> shapes{
      uniform_cdf(), hard.shill_dist,
      piecewise_linear_cdf({0.0, 0.4, 0.41, 1.0}, {0.3, 0.35, 0.55, 0.6})};
  for (const PiecewiseCdf& fs : shapes) {
    std::vector<double> expect;
    for (double gb : cands) {
      bool ok = true;
      for (std::size_t j = spans[0].first; j <= spans[0].last; ++j) {
        if (fs.eval(g.point(j)) < gb) ok = false;
        if (j > spans[0].first && fs.eval(g.point(j)) - fs.eval(g.point(j - 1)) > 4.0 * gb * g.mesh()) ok = false;
      }
      if (ok) expect.push_back(gb);
    }
    EXPECT_EQ(admissible_candidates(fs, g, spans, cands, 4.0), expect);
  }
  EXPECT_TRUE(admissible_candidates(shapes[2], g, spans, cands, 4.0).empty());
  EXPECT_TRUE(admissible_candidates(point_mass(1.0), g, spans, cands, 4.0).empty());
}

TEST(Accumulator, DedupAndGram) {
  const DyadicGrid g(3);
  OptimisticAccumulator acc(g);
  acc.add(direct_measurement(3, true));
  acc.add(direct_measurement(3, false));
  acc.add(direct_measurement(5, true));
  for (const Measurement& m : suffix_difference_rows(1.0, 0, g, {3, 5}, 0.375, {2.0, 0.0, 1.0})) acc.add(m);
  for (const Measurement& m : suffix_difference_rows(1.0, 0, g, {3, 5}, 0.375, {1.0, 1.0, 1.0})) acc.add(m);
  EXPECT_EQ(acc.rows().size(), 4u);  // two direct keys, two suffix keys
  const Eigen::MatrixXd& gd = acc.gram_direct();
  EXPECT_EQ(gd(*acc.local(3), *acc.local(3)), 2.0);
  EXPECT_EQ(gd(*acc.local(5), *acc.local(5)), 1.0);
  EXPECT_EQ(gd(*acc.local(3), *acc.local(5)), 0.0);
  const Eigen::MatrixXd& gs = acc.gram_suffix();
  EXPECT_LE((gs - gs.transpose()).norm(), 1e-15);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gs).eigenvalues().minCoeff(), -1e-12);
  // moments agree with stored rows
  Eigen::VectorXd z = Eigen::VectorXd::Zero(acc.dimension());
  for (const auto& [k, m] : acc.rows()) {
    if (k.kind != MeasurementKind::kSuffix) continue;
    for (std::size_t a = 0; a < m.index.size(); ++a) z(*acc.local(m.index[a])) += m.coef[a] * m.response_sum;
  }
  EXPECT_LE((z - acc.moment_suffix()).norm(), 1e-12);
}

TEST(Wls, DirectOnlyIsEmpiricalMean) {
  const DyadicGrid g(3);
  OptimisticAccumulator acc(g);
  for (int i = 0; i < 4; ++i) acc.add(direct_measurement(2, i < 3));
  for (int i = 0; i < 5; ++i) acc.add(direct_measurement(6, i < 1));
  for (double w : {0.0, 1.0}) {
    const WlsSolution s = solve_wls(acc, w);
    EXPECT_NEAR(s.estimate(*acc.local(2)), 0.75, 1e-14);
    EXPECT_NEAR(s.estimate(*acc.local(6)), 0.2, 1e-14);
  }
}

TEST(Wls, ZeroWeightIgnoresSuffixRows) {
  const DyadicGrid g(3);
  OptimisticAccumulator a(g), b(g);
  for (auto* acc : {&a, &b}) {
    acc->add(direct_measurement(3, true));
    acc->add(direct_measurement(4, false));
  }
  for (const Measurement& m : suffix_difference_rows(1.0, 0, g, {3, 4}, 0.375, {3.0, 0.0})) b.add(m);
  EXPECT_LE((solve_wls(a, 0.0).estimate - solve_wls(b, 0.0).estimate).norm(), 1e-15);
}

TEST(Wls, NoiselessRecoveryOnRange) {
  const DyadicGrid g(4);
  Eigen::VectorXd f(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) f(j) = 0.2 + 0.5 * g.point(j) * g.point(j);
  OptimisticAccumulator acc(g);
  acc.add(noiseless(direct_measurement(6, false), f, 3));
  for (const Measurement& m : suffix_difference_rows(0.9, 1, g, {4, 10}, 0.25, std::vector<double>(7, 0.0))) {
    acc.add(noiseless(m, f, 2));
  }
  for (const Measurement& m : suffix_difference_rows(0.7, 2, g, {8, 12}, 0.5, std::vector<double>(5, 0.0))) {
    acc.add(noiseless(m, f, 1));
  }
  const WlsSolution sol = solve_wls(acc, 0.37);
  Eigen::VectorXd local_f(acc.dimension());
  for (std::size_t i = 0; i < acc.dimension(); ++i) local_f(i) = f(acc.global(i));
  Rng rng(3);
  int tested = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd h(acc.dimension());
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = rng.uniform() - 0.5;
    const Eigen::VectorXd gvec = sol.gram * h;  // lies in range(G)
    ASSERT_TRUE(range_membership(sol.pi, gvec));
    EXPECT_NEAR(gvec.dot(sol.estimate), gvec.dot(local_f), 1e-8 * std::max(1.0, gvec.norm()));
    ++tested;
  }
  EXPECT_EQ(tested, 200);
  // the point 0.25 only enters through suffix rows starting at 0.25 for v = 0.9
  EXPECT_TRUE(optimistic_gap(acc, sol, 0.9, 4, 10).has_value());
  const double exact = (0.9 - g.point(4)) * f(4) - (0.9 - g.point(10)) * f(10);
  EXPECT_NEAR(*optimistic_gap(acc, sol, 0.9, 4, 10), exact, 1e-8);
}

TEST(Gap, Substitution) {
  Eigen::VectorXd est(2);
  est << 0.4, 0.5;
  EXPECT_NEAR(optimistic_gap(est, 1.0, 0.4, 0, 0.5, 1), -0.01, 1e-15);
  EXPECT_EQ(optimistic_gap(est, 1.0, 0.4, 0, 0.4, 0), 0.0);
  Eigen::VectorXd exact(2);
  exact << 0.375, 0.5;
  EXPECT_NEAR(optimistic_gap(exact, 1.0, 0.5, 1, 0.375, 0), 0.25 - 0.625 * 0.375, 1e-15);
}

TEST(Range, Examples) {
  Eigen::MatrixXd full = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  Eigen::VectorXd g(3);
  g << 1.0, -2.0, 0.5;
  EXPECT_TRUE(range_membership(full, g));
  EXPECT_FALSE(range_membership(Eigen::MatrixXd::Zero(3, 3), g));
  const Eigen::MatrixXd rank1 = g * g.transpose();
  EXPECT_TRUE(range_membership(rank1, g));
  Eigen::VectorXd orth(3);
  orth << 2.0, 1.0, 0.0;
  EXPECT_FALSE(range_membership(rank1, orth));
  EXPECT_EQ(pseudo_inverse(rank1).rank, 1);
}

TEST(OptimisticRadius, DirectOnly) {
  const DyadicGrid g(3);
  const double v = 1.0, L = 5.0;
  for (std::size_t n : {4u, 16u}) {
    OptimisticAccumulator acc(g);
    for (std::size_t j = 3; j <= 5; ++j) {
      for (std::size_t i = 0; i < n; ++i) acc.add(direct_measurement(j, i % 2 == 0));
    }
    const WlsSolution sol = solve_wls(acc, 0.5);
    const RadiusReport r = optimistic_radius(acc, sol, 0.5, v, {3, 5}, L);
    double q = 0.0;
    for (std::size_t i = 3; i <= 5; ++i) {
      for (std::size_t j = i + 1; j <= 5; ++j) {
        q = std::max(q, (std::pow(v - g.point(i), 2) + std::pow(v - g.point(j), 2)) / n);
      }
    }
    EXPECT_NEAR(r.q, q, 1e-14);
    // B: for direct rows |g' G^+ phi| = (v - q) / n, scale 1
    EXPECT_NEAR(r.b, (v - g.point(3)) / n, 1e-14);
    EXPECT_NEAR(r.radius, std::sqrt(2 * L * r.q) + 2.0 / 3.0 * L * r.b, 1e-14);
  }
}

TEST(OptimisticRadius, OutOfRangeIsInfinite) {
  const DyadicGrid g(3);
  OptimisticAccumulator acc(g);
  acc.add(direct_measurement(3, true));
  const WlsSolution sol = solve_wls(acc, 0.5);
  EXPECT_EQ(optimistic_radius(acc, sol, 0.5, 1.0, {3, 4}, 3.0).radius, kInf);
}

TEST(OptimisticRadius, CoverageOnSyntheticRuns) {
  // Uniform buyer, uniform shill, v = 1, active span {0.25 .. 0.5} on the level-3 grid.
  const AuctionInstance inst{point_mass(1.0), uniform_cdf(), uniform_cdf(), "uu", std::nullopt};
  const DyadicGrid g(3);
  const IndexSpan span{2, 4};
  const double delta = 0.1, gamma_bar = 0.25;
  const double L = optimistic_log_term(1000.0, delta, 11);
  const double omega = candidate_weight(gamma_bar, 3, g.mesh(), 4.0);
  int covered = 0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = Rng::stream(rep, 0);
    OptimisticAccumulator acc(g);
    for (int t = 0; t < 300; ++t) {
      const std::size_t j = span.first + rng.index(span.size());
      const double p = g.point(j);
      const Feedback fb = play_round(inst, t, 1.0, p, rng);
      acc.add(direct_measurement(j, fb.won));
      std::vector<double> y(span.size(), 0.0);
      for (std::size_t k = j; k <= span.last; ++k) {
        const double q = g.point(k);
        y[k - span.first] = debiased_suffix_obs(fb.won, fb.report.value_or(0.0), q, q);
      }
      for (const Measurement& m : suffix_difference_rows(1.0, 0, g, span, p, y)) acc.add(m);
    }
    const WlsSolution sol = solve_wls(acc, omega);
    const double r = optimistic_radius(acc, sol, gamma_bar, 1.0, span, L).radius;
    bool ok = true;
    for (std::size_t i = span.first; i <= span.last; ++i) {
      for (std::size_t j = i + 1; j <= span.last; ++j) {
        const auto est = optimistic_gap(acc, sol, 1.0, i, j);
        const double qi = g.point(i), qj = g.point(j);
        const double exact = (1 - qi) * qi - (1 - qj) * qj;
        if (!est || std::abs(*est - exact) > r) ok = false;
      }
    }
    covered += ok;
  }
  EXPECT_GE(covered, static_cast<int>((1.0 - delta) * reps));
}

TEST(Validate, Threshold) {
  EXPECT_TRUE(validate_certificate(0.0, 1u << 30, 3, 1.0));
  EXPECT_FALSE(validate_certificate(0.0, 1, 10, 10.0));
  EXPECT_FALSE(validate_certificate(0.0, 0, 0, 1.0));
  // 0.25 + sqrt(1 / 16) equals the epoch-0 threshold 0.5
  EXPECT_TRUE(validate_certificate(0.25, 8, 0, 1.0));
  EXPECT_FALSE(validate_certificate(0.25 + 1e-12, 8, 0, 1.0));
}

TEST(LogTerms, Formulas) {
  EXPECT_NEAR(robust_log_term(1000.0, 0.001), std::log(2e6), 1e-12);
  EXPECT_NEAR(optimistic_log_term(1000.0, 0.001, 11), std::log(2.2e7), 1e-12);
}
