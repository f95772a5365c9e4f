#include "demlab/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "demlab/simlab.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace demlab;
using testkit::Alternative;
using testkit::SampleSummary;

namespace {

SampleSummary summarise(const std::vector<double>& xs) {
  SampleSummary s;
  s.count = static_cast<long long>(xs.size());
  s.mean = oracles::mean(xs);
  s.variance = oracles::variance(xs);
  return s;
}

}  // namespace

TEST_CASE("welch t test basics") {
  const SampleSummary a{5, 10.0, 4.0};
  const SampleSummary b{7, 12.0, 9.0};
  SUBCASE("identical summaries give statistic zero and p one") {
    const auto out = testkit::welch_t_test(a, a, 0.0, Alternative::two_sided, 0.05);
    CHECK(out.statistic == doctest::Approx(0.0));
    CHECK(*out.p_value == doctest::Approx(1.0));
    CHECK_FALSE(out.reject);
  }
  SUBCASE("statistic and dof match the direct formulas") {
    const auto out = testkit::welch_t_test(a, b, 0.0, Alternative::two_sided, 0.05, false);
    const double se2 = 4.0 / 5.0 + 9.0 / 7.0;
    const double stat = 2.0 / std::sqrt(se2);
    const double dof =
        se2 * se2 / ((4.0 / 5.0) * (4.0 / 5.0) / 4.0 + (9.0 / 7.0) * (9.0 / 7.0) / 6.0);
    CHECK(std::fabs(out.statistic - stat) < 1e-10);
    CHECK(std::fabs(*out.dof - dof) < 1e-10);
  }
  SUBCASE("equal sizes and variances collapse the dof to n + m - 2") {
    const SampleSummary c{9, 1.0, 2.5};
    const SampleSummary d{9, 1.4, 2.5};
    const auto out = testkit::welch_t_test(c, d, 0.0, Alternative::two_sided, 0.05, false);
    CHECK(*out.dof == doctest::Approx(16.0));
  }
  SUBCASE("error paths") {
    CHECK_THROWS_AS(testkit::welch_t_test({1, 0.0, 1.0}, b, 0.0, Alternative::two_sided, 0.05),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        testkit::welch_t_test({5, 0.0, 0.0}, {5, 1.0, 0.0}, 0.0, Alternative::two_sided, 0.05),
        numeric_error);
  }
}

TEST_CASE("rejection is dual to the confidence interval") {
  simlab::Rng rng(314);
  for (int i = 0; i < 1000; ++i) {
    SampleSummary a{10 + static_cast<long long>(rng.below(200)), rng.normal(0.0, 2.0),
                    0.2 + 3.0 * rng.uniform()};
    SampleSummary b{10 + static_cast<long long>(rng.below(200)), rng.normal(0.0, 2.0),
                    0.2 + 3.0 * rng.uniform()};
    const double delta0 = rng.normal(0.0, 1.0);
    const auto out = testkit::welch_t_test(a, b, delta0, Alternative::two_sided, 0.05);
    const bool outside = delta0 < *out.ci_low || delta0 > *out.ci_high;
    CHECK(out.reject == outside);
  }
}

TEST_CASE("z test basics") {
  const SampleSummary a{50, 1.0, 1.0};
  const SampleSummary b{50, 1.0, 1.0};
  const auto same = testkit::z_test(a, b, 0.0, 1.0, 1.0, Alternative::two_sided, 0.05);
  CHECK(*same.p_value == doctest::Approx(1.0));
  // at z_obs = 0 the greater-tail p is one half
  const auto half = testkit::z_test(a, b, 0.0, 1.0, 1.0, Alternative::greater, 0.05);
  CHECK(*half.p_value == doctest::Approx(0.5));
  // theta / SE = 2.8016 rejects a two-sided 5% test
  SampleSummary c = a, d = b;
  d.mean = c.mean + 2.8016 * std::sqrt(2.0 / 50.0);
  const auto rej = testkit::z_test(c, d, 0.0, 1.0, 1.0, Alternative::two_sided, 0.05);
  CHECK(rej.reject);
}

TEST_CASE("practical t agrees with z when plug-in variances match") {
  const SampleSummary a{20000, 0.50, 1.7};
  const SampleSummary b{30000, 0.52, 1.9};
  const auto practical = testkit::welch_t_test(a, b, 0.0, Alternative::two_sided, 0.05, true);
  const auto z = testkit::z_test(a, b, 0.0, 1.7, 1.9, Alternative::two_sided, 0.05);
  CHECK(std::fabs(*practical.p_value - *z.p_value) < 1e-6);
}

TEST_CASE("cohens d") {
  const SampleSummary a{10, 0.0, 1.0};
  const SampleSummary b{10, 0.5, 1.0};
  CHECK(testkit::cohens_d(a, b) == doctest::Approx(0.5));
  CHECK(testkit::cohens_d(b, a) == doctest::Approx(-0.5));
  CHECK(testkit::cohens_d(a, a) == doctest::Approx(0.0));
  CHECK_THROWS_AS(testkit::cohens_d({10, 0.0, 0.0}, {10, 1.0, 0.0}), numeric_error);
}

TEST_CASE("binomial exact test") {
  SUBCASE("all outcomes equally or less likely sum to one") {
    const auto out = testkit::binomial_exact_test(1, 2, 0.5, Alternative::two_sided, 0.05);
    CHECK(*out.p_value == doctest::Approx(1.0));
  }
  SUBCASE("greater tail at k = n") {
    const auto out = testkit::binomial_exact_test(8, 8, 0.4, Alternative::greater, 0.05);
    CHECK(*out.p_value == doctest::Approx(std::pow(0.4, 8.0)));
  }
  SUBCASE("matches full enumeration for every small configuration") {
    for (long long n = 1; n <= 12; ++n) {
      for (int t = 1; t <= 9; ++t) {
        const double theta = t / 10.0;
        for (long long k = 0; k <= n; ++k) {
          // enumeration oracle with Pascal-triangle masses
          std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
          for (long long i = 0; i <= n; ++i) pmf[i] = oracles::binomial_pmf_exact(i, n, theta);
          double upper = 0.0, lower = 0.0, two = 0.0;
          for (long long i = k; i <= n; ++i) upper += pmf[i];
          for (long long i = 0; i <= k; ++i) lower += pmf[i];
          for (long long i = 0; i <= n; ++i) {
            if (pmf[i] <= pmf[k] * (1.0 + 1e-10)) two += pmf[i];
          }
          two = std::min(two, 1.0);
          const auto g = testkit::binomial_exact_test(k, n, theta, Alternative::greater, 0.05);
          const auto l = testkit::binomial_exact_test(k, n, theta, Alternative::less, 0.05);
          const auto b = testkit::binomial_exact_test(k, n, theta, Alternative::two_sided, 0.05);
          CHECK(std::fabs(*g.p_value - upper) < 1e-12);
          CHECK(std::fabs(*l.p_value - lower) < 1e-12);
          CHECK(std::fabs(*b.p_value - two) < 1e-12);
        }
      }
    }
  }
  SUBCASE("impossible rejection is flagged") {
    const auto out = testkit::binomial_exact_test(2, 3, 0.5, Alternative::two_sided, 0.05);
    CHECK(out.note == "empty critical set");
  }
  SUBCASE("bounds are validated") {
    CHECK_THROWS_AS(testkit::binomial_exact_test(5, 3, 0.5, Alternative::two_sided, 0.05),
                    std::invalid_argument);
    CHECK_THROWS_AS(testkit::binomial_exact_test(1, 3, 0.0, Alternative::two_sided, 0.05),
                    std::invalid_argument);
  }
}

TEST_CASE("mann whitney u") {
  SUBCASE("every y above every x zeroes the statistic") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const std::vector<double> y{4.0, 5.0};
    const auto out = testkit::mann_whitney_u(x, y, Alternative::greater, 0.05);
    CHECK(out.statistic == doctest::Approx(0.0));
  }
  SUBCASE("complement identity") {
    simlab::Rng rng(2718);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x(1 + rng.below(30)), y(1 + rng.below(30));
      for (auto& v : x) v = std::floor(rng.normal() * 4.0);
      for (auto& v : y) v = std::floor(rng.normal() * 4.0);
      const auto xy = testkit::mann_whitney_u(x, y, Alternative::two_sided, 0.05);
      const auto yx = testkit::mann_whitney_u(y, x, Alternative::two_sided, 0.05);
      CHECK(xy.statistic + yx.statistic ==
            doctest::Approx(static_cast<double>(x.size() * y.size())));
    }
  }
  SUBCASE("rank method equals the double sum on tied data") {
    simlab::Rng rng(16180);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x(1 + rng.below(50)), y(1 + rng.below(50));
      for (auto& v : x) v = std::floor(rng.normal() * 3.0);  // coarse grid forces ties
      for (auto& v : y) v = std::floor(rng.normal() * 3.0);
      double direct = 0.0;
      for (double xv : x) {
        for (double yv : y) direct += yv < xv ? 1.0 : (yv == xv ? 0.5 : 0.0);
      }
      const auto out = testkit::mann_whitney_u(x, y, Alternative::two_sided, 0.05);
      CHECK(out.statistic == doctest::Approx(direct).epsilon(1e-12));
    }
  }
  SUBCASE("exact permutation mode on a small sample") {
    const std::vector<double> x{1.0, 3.0, 5.0, 9.0};
    const std::vector<double> y{2.0, 4.0, 6.0};
    const auto approx_out = testkit::mann_whitney_u(x, y, Alternative::two_sided, 0.05);
    const auto exact_out = testkit::mann_whitney_u(x, y, Alternative::two_sided, 0.05, true);
    CHECK(exact_out.statistic == doctest::Approx(approx_out.statistic));
    CHECK(*exact_out.p_value > 0.0);
    CHECK(*exact_out.p_value <= 1.0);
    std::vector<double> big(15, 0.0), big2(15, 1.0);
    CHECK_THROWS_AS(testkit::mann_whitney_u(big, big2, Alternative::two_sided, 0.05, true),
                    std::invalid_argument);
  }
  SUBCASE("empty sample errors") {
    const std::vector<double> x{1.0};
    const std::vector<double> none;
    CHECK_THROWS_AS(testkit::mann_whitney_u(x, none, Alternative::two_sided, 0.05),
                    std::invalid_argument);
  }
}

TEST_CASE("chi squared goodness of fit") {
  SUBCASE("proportional observations") {
    const std::vector<double> obs{300.0, 200.0, 100.0};
    const std::vector<double> ratios{3.0, 2.0, 1.0};
    const auto out = testkit::chi2_gof(obs, ratios);
    CHECK(out.statistic == doctest::Approx(0.0));
    CHECK(*out.p_value == doctest::Approx(1.0));
  }
  SUBCASE("sample ratio mismatch at scale") {
    const std::vector<double> obs{1050000.0, 950000.0};
    const std::vector<double> ratios{1.0, 1.0};
    const auto out = testkit::chi2_gof(obs, ratios);
    CHECK(out.statistic == doctest::Approx(5000.0));
    CHECK(*out.p_value < 1e-100);
    CHECK(out.reject);
  }
  SUBCASE("permutation invariance") {
    const std::vector<double> obs{37.0, 111.0, 59.0};
    const std::vector<double> ratios{0.2, 0.5, 0.3};
    const auto base = testkit::chi2_gof(obs, ratios);
    const std::vector<double> obs2{59.0, 37.0, 111.0};
    const std::vector<double> ratios2{0.3, 0.2, 0.5};
    const auto perm = testkit::chi2_gof(obs2, ratios2);
    CHECK(base.statistic == doctest::Approx(perm.statistic));
  }
  SUBCASE("error and warning paths") {
    const std::vector<double> obs{5.0, 5.0};
    const std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(testkit::chi2_gof(obs, bad), std::invalid_argument);
    const std::vector<double> small{3.0, 4.0};
    const std::vector<double> ratios{1.0, 1.0};
    CHECK(testkit::chi2_gof(small, ratios).note == "expected count below 5");
  }
}

TEST_CASE("power") {
  SUBCASE("at the null the two-sided power equals alpha") {
    CHECK(testkit::power(0.3, 0.3, 1.0, 1.0, 50, 50, 0.05, Alternative::two_sided) ==
          doctest::Approx(0.05).epsilon(1e-9));
  }
  SUBCASE("doubling the standard error collapses an 80% design to about 29%") {
    // design the effect for 80% power, then quadruple the variances
    const double theta = testkit::mde(1.0, 1.0, 100, 100, 0.05, 0.8, Alternative::two_sided);
    const double p = testkit::power(theta, 0.0, 4.0, 4.0, 100, 100, 0.05, Alternative::two_sided);
    CHECK(std::fabs(p - 0.288) < 0.005);
  }
  SUBCASE("power runs to one with the sample size") {
    double prev = 0.0;
    for (long long n : {10LL, 100LL, 1000LL, 100000LL}) {
      const double p = testkit::power(0.2, 0.0, 1.0, 1.0, n, n, 0.05, Alternative::two_sided);
      CHECK(p >= prev);
      prev = p;
    }
    CHECK(prev > 0.999);
  }
}

TEST_CASE("required sample size") {
  SUBCASE("reproduces the 15.698 multiplier behind the rule of 16") {
    const auto res =
        testkit::required_sample_size(0.05, 0.0, 1.0, 1.0, 0.05, 0.8, Alternative::two_sided);
    const double multiplier = static_cast<double>(res.n) * 0.05 * 0.05;
    CHECK(std::fabs(multiplier - 15.698) / 15.698 < 0.005);
    CHECK(res.rule_of_thumb == doctest::Approx(16.0 / (0.05 * 0.05)));
    CHECK(res.m == res.n);
  }
  SUBCASE("halving the effect quadruples the requirement") {
    const auto big =
        testkit::required_sample_size(0.2, 0.0, 1.0, 1.0, 0.05, 0.8, Alternative::two_sided);
    const auto small =
        testkit::required_sample_size(0.1, 0.0, 1.0, 1.0, 0.05, 0.8, Alternative::two_sided);
    CHECK(std::fabs(static_cast<double>(small.n) / static_cast<double>(big.n) - 4.0) < 0.02);
  }
  SUBCASE("computed size achieves the simulated power") {
    const double theta = 0.25;
    const auto res =
        testkit::required_sample_size(theta, 0.0, 1.0, 1.0, 0.05, 0.8, Alternative::two_sided);
    const std::uint64_t trials = 20000;
    const auto rejections =
        simlab::run_collect<int>(271828, trials, 0, [&](std::uint64_t, simlab::Rng& rng) {
          const auto n = static_cast<std::size_t>(res.n);
          std::vector<double> xs(n), ys(n);
          for (auto& v : xs) v = rng.normal();
          for (auto& v : ys) v = rng.normal(theta, 1.0);
          const auto out = testkit::welch_t_test(summarise(xs), summarise(ys), 0.0,
                                                 Alternative::two_sided, 0.05);
          return out.reject ? 1 : 0;
        });
    double rate = 0.0;
    for (int r : rejections) rate += r;
    rate /= static_cast<double>(trials);
    CHECK(std::fabs(rate - 0.8) < 0.02);
  }
  SUBCASE("unequal allocation") {
    const auto res = testkit::required_sample_size(0.2, 0.0, 1.0, 1.0, 0.05, 0.8,
                                                   Alternative::two_sided, 2.0);
    CHECK(res.m == 2 * res.n);
    CHECK(testkit::power(0.2, 0.0, 1.0, 1.0, res.n, res.m, 0.05, Alternative::two_sided) >= 0.8);
    CHECK(testkit::power(0.2, 0.0, 1.0, 1.0, res.n - 1, 2 * (res.n - 1), 0.05,
                         Alternative::two_sided) < 0.8);
  }
  SUBCASE("rejects a nil effect") {
    CHECK_THROWS_AS(
        testkit::required_sample_size(0.0, 0.0, 1.0, 1.0, 0.05, 0.8, Alternative::two_sided),
        std::invalid_argument);
  }
}

TEST_CASE("minimum detectable effect") {
  SUBCASE("multiplier at the standard design point") {
    const double theta = testkit::mde(1.0, 1.0, 1000, 1000, 0.05, 0.8, Alternative::two_sided);
    const double se = std::sqrt(2.0 / 1000.0);
    CHECK(std::fabs(theta / se - 2.8016) < 1e-3);
  }
  SUBCASE("shrinks as one over root n") {
    const double theta1 = testkit::mde(1.0, 1.0, 500, 500, 0.05, 0.8, Alternative::two_sided);
    const double theta2 = testkit::mde(1.0, 1.0, 1000, 1000, 0.05, 0.8, Alternative::two_sided);
    CHECK(theta1 / theta2 == doctest::Approx(std::sqrt(2.0)));
    const double theta3 =
        testkit::mde(1.0, 1.0, 1 << 24, 1 << 24, 0.05, 0.8, Alternative::two_sided);
    CHECK(theta3 < 1e-2);
  }
  SUBCASE("round trip through power") {
    for (Alternative alt : {Alternative::greater, Alternative::two_sided}) {
      const double theta = testkit::mde(1.3, 0.8, 400, 900, 0.05, 0.8, alt);
      const double p = testkit::power(theta, 0.0, 1.3, 0.8, 400, 900, 0.05, alt, true);
      CHECK(std::fabs(p - 0.8) < 1e-9);
    }
  }
}

TEST_CASE("ci for a mean") {
  SUBCASE("degenerate variance gives a point interval") {
    const auto [lo, hi] = testkit::ci_mean({10, 2.5, 0.0}, 0.05);
    CHECK(lo == 2.5);
    CHECK(hi == 2.5);
  }
  SUBCASE("width scales as one over root n") {
    const auto [lo1, hi1] = testkit::ci_mean({100, 0.0, 1.0}, 0.05);
    const auto [lo4, hi4] = testkit::ci_mean({400, 0.0, 1.0}, 0.05);
    CHECK((hi1 - lo1) / (hi4 - lo4) == doctest::Approx(2.0).epsilon(0.01));
  }
  SUBCASE("half width from the t quantile") {
    const auto [lo, hi] = testkit::ci_mean({31, 0.0, 1.0}, 0.05);
    CHECK(std::fabs(hi - 0.3667) < 5e-4);
  }
  CHECK_THROWS_AS(testkit::ci_mean({1, 0.0, 1.0}, 0.05), std::invalid_argument);
}

TEST_CASE("skewness rule of thumb") {
  CHECK(testkit::skewness_min_sample(1.0).min_samples == 355);
  CHECK(testkit::skewness_min_sample(1.0).heuristic_reliable == false);
  CHECK(testkit::skewness_min_sample(2.0).min_samples == 1420);
  CHECK(testkit::skewness_min_sample(2.0).heuristic_reliable);
  CHECK(testkit::skewness_min_sample(0.0).min_samples == 0);
  CHECK_FALSE(testkit::skewness_min_sample(0.0).heuristic_reliable);
}

TEST_CASE("A/A rejection rates sit at the significance level") {
  const double alpha = 0.05;
  const std::uint64_t trials = 20000;
  struct Rates {
    int practical = 0, welch = 0, z = 0, mw = 0, binom = 0;
  };
  const auto results =
      simlab::run_collect<Rates>(606, trials, 0, [&](std::uint64_t, simlab::Rng& rng) {
        Rates r;
        std::vector<double> xs(60), ys(60);
        for (auto& v : xs) v = rng.normal(1.0, 2.0);
        for (auto& v : ys) v = rng.normal(1.0, 2.0);
        const auto sx = summarise(xs);
        const auto sy = summarise(ys);
        r.practical =
            testkit::welch_t_test(sx, sy, 0.0, Alternative::two_sided, alpha, true).reject;
        r.welch = testkit::welch_t_test(sx, sy, 0.0, Alternative::two_sided, alpha, false).reject;
        r.z = testkit::z_test(sx, sy, 0.0, 4.0, 4.0, Alternative::two_sided, alpha).reject;
        r.mw = testkit::mann_whitney_u(xs, ys, Alternative::two_sided, alpha).reject;
        // binary responses with a large count keep the exact test near alpha
        long long k = 0;
        const long long n = 2000;
        for (long long i = 0; i < n; ++i) k += rng.uniform() < 0.3 ? 1 : 0;
        r.binom = testkit::binomial_exact_test(k, n, 0.3, Alternative::two_sided, alpha).reject;
        return r;
      });
  double practical = 0, welch = 0, z = 0, mw = 0, binom = 0;
  for (const auto& r : results) {
    practical += r.practical;
    welch += r.welch;
    z += r.z;
    mw += r.mw;
    binom += r.binom;
  }
  const double t = static_cast<double>(trials);
  CHECK(std::fabs(practical / t - alpha) < 0.01);
  CHECK(std::fabs(welch / t - alpha) < 0.01);
  CHECK(std::fabs(z / t - alpha) < 0.01);
  CHECK(std::fabs(mw / t - alpha) < 0.01);
  CHECK(std::fabs(binom / t - alpha) < 0.01);
}
