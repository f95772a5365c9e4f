#include "demlab/distkit.hpp"

#include <cmath>

#include "demlab/simlab.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace demlab;

TEST_CASE("normal cdf and quantile") {
  CHECK(distkit::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(std::fabs(distkit::normal_quantile(0.95) - 1.645) < 5e-4);
  // Frozen from a Newton iteration on an adaptive quadrature of the density.
  const double q975 = oracles::normal_quantile_newton(0.975);
  CHECK(std::fabs(q975 - 1.959964) < 1e-5);
  CHECK(std::fabs(distkit::normal_quantile(0.975) - q975) < 1e-9);
  CHECK_THROWS_AS(distkit::normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(distkit::normal_quantile(1.0), std::invalid_argument);
  CHECK_THROWS_AS(distkit::normal_quantile(-0.2), std::invalid_argument);
}

TEST_CASE("normal quantile inverts the cdf on a grid") {
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double x = distkit::normal_quantile(p);
    CHECK(std::fabs(distkit::normal_cdf(x) - p) < 1e-8);
  }
}

TEST_CASE("student t cdf matches the quoted t30 tail values") {
  CHECK(distkit::student_t_cdf(0.0, 1.0) == doctest::Approx(0.5));
  CHECK(distkit::student_t_cdf(0.0, 17.5) == doctest::Approx(0.5));
  CHECK(std::fabs(distkit::student_t_cdf(1.64485, 30.0) - 0.94478) < 1e-4);
  CHECK(std::fabs(distkit::student_t_cdf(2.32635, 30.0) - 0.98652) < 1e-4);
  CHECK_THROWS_AS(distkit::student_t_cdf(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(distkit::student_t_cdf(1.0, -3.0), std::invalid_argument);
}

TEST_CASE("student t converges to the normal for huge dof") {
  for (double x = -5.0; x <= 5.0; x += 0.25) {
    CHECK(std::fabs(distkit::student_t_cdf(x, 1e6) - distkit::normal_cdf(x)) < 1e-5);
  }
}

TEST_CASE("student t quantile inverts the cdf") {
  for (double dof : {0.7, 2.0, 5.5, 30.0, 240.0}) {
    for (int i = 1; i < 40; ++i) {
      const double p = i / 40.0;
      const double x = distkit::student_t_quantile(p, dof);
      CHECK(std::fabs(distkit::student_t_cdf(x, dof) - p) < 1e-8);
    }
  }
}

TEST_CASE("owens t special values and quadrature oracle") {
  CHECK(distkit::owens_t(0.3, 0.0) == 0.0);
  CHECK(std::fabs(distkit::owens_t(0.0, 0.7) -
                  std::atan(0.7) / (2.0 * 3.14159265358979323846)) < 1e-14);
  CHECK(std::fabs(distkit::owens_t(0.5, 1.0) - oracles::owens_t_quadrature(0.5, 1.0)) < 1e-10);
  // spot values across regions, including the |a| > 1 reduction
  for (double h : {0.05, 0.4, 1.3, 3.7}) {
    for (double a : {0.01, 0.35, 0.85, 1.0, 1.8, 5.0, 40.0}) {
      CHECK(std::fabs(distkit::owens_t(h, a) - oracles::owens_t_quadrature(h, a)) < 1e-10);
    }
  }
  CHECK_THROWS_AS(distkit::owens_t(std::numeric_limits<double>::infinity(), 1.0),
                  std::invalid_argument);
}

TEST_CASE("owens t symmetries hold to rounding") {
  simlab::Rng rng(20240517);
  for (int i = 0; i < 10000; ++i) {
    const double h = 6.0 * (rng.uniform() - 0.5);
    const double a = 8.0 * (rng.uniform() - 0.5);
    CHECK(distkit::owens_t(h, a) == distkit::owens_t(-h, a));
    CHECK(distkit::owens_t(h, -a) == -distkit::owens_t(h, a));
  }
}

TEST_CASE("binomial pmf, cdf, quantile") {
  CHECK(distkit::binomial_pmf(0, 5, 0.0) == doctest::Approx(1.0));
  double total = 0.0;
  for (long long k = 0; k <= 20; ++k) total += distkit::binomial_pmf(k, 20, 0.3);
  CHECK(std::fabs(total - 1.0) < 1e-12);
  CHECK_THROWS_AS(distkit::binomial_pmf(6, 5, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(distkit::binomial_pmf(1, 5, 1.5), std::invalid_argument);

  // quantile: smallest k with CDF >= q
  for (double q : {0.05, 0.31, 0.5, 0.77, 0.95}) {
    const long long k = distkit::binomial_quantile(q, 40, 0.3);
    CHECK(distkit::binomial_cdf(k, 40, 0.3) >= q);
    if (k > 0) CHECK(distkit::binomial_cdf(k - 1, 40, 0.3) < q);
  }
}

TEST_CASE("chi squared cdf and quantile") {
  CHECK_THROWS_AS(distkit::chi2_cdf(1.0, 0.5), std::invalid_argument);
  // root of the numerically integrated density
  const double q = distkit::chi2_quantile(0.95, 1.0);
  CHECK(std::fabs(q - 3.8415) < 1e-3);
  // integrate the chi2(1) density with x = u^2 to tame the root singularity
  const double mass = oracles::integrate(
      [](double u) { return distkit::chi2_pdf(u * u, 1.0) * 2.0 * u; }, 0.0, std::sqrt(q), 1e-12);
  CHECK(std::fabs(mass - 0.95) < 1e-7);
  for (double dof : {1.0, 2.0, 7.0, 31.5, 400.0}) {
    for (double p : {0.01, 0.2, 0.5, 0.9, 0.999}) {
      const double x = distkit::chi2_quantile(p, dof);
      CHECK(std::fabs(distkit::chi2_cdf(x, dof) - p) < 1e-8);
    }
  }
}

TEST_CASE("beta binomial pmf") {
  // alpha = beta = 1 mixes to the discrete uniform
  const distkit::BetaParams uniform(1.0, 1.0);
  for (long long k = 0; k <= 9; ++k) {
    CHECK(distkit::beta_binomial_pmf(k, 9, uniform) == doctest::Approx(1.0 / 10.0));
  }
  const distkit::BetaParams params(2.0, 5.0);
  double total = 0.0;
  for (long long k = 0; k <= 17; ++k) total += distkit::beta_binomial_pmf(k, 17, params);
  CHECK(std::fabs(total - 1.0) < 1e-10);
  // quadrature over the mixing density
  const double direct = oracles::integrate(
      [](double p) {
        return oracles::binomial_pmf_exact(3, 9, p) * 30.0 * p * std::pow(1.0 - p, 4.0);
      },
      0.0, 1.0, 1e-12);
  CHECK(std::fabs(distkit::beta_binomial_pmf(3, 9, params) - direct) < 1e-8);
  CHECK_THROWS_AS(distkit::BetaParams(0.0, 1.0), numeric_error);
  CHECK_THROWS_AS(distkit::BetaParams(1.0, -2.0), numeric_error);
}

TEST_CASE("cdfs are non-decreasing") {
  double prev_n = 0.0, prev_t = 0.0, prev_c = 0.0;
  bool first = true;
  for (double x = -8.0; x <= 8.0; x += 0.05) {
    const double n = distkit::normal_cdf(x);
    const double t = distkit::student_t_cdf(x, 3.3);
    const double c = distkit::chi2_cdf(x, 2.0);
    if (!first) {
      CHECK(n >= prev_n);
      CHECK(t >= prev_t);
      CHECK(c >= prev_c);
    }
    prev_n = n;
    prev_t = t;
    prev_c = c;
    first = false;
  }
}
