#pragma once

// Fixed-horizon tests, effect sizes, confidence intervals, and the
// power / required-sample-size / minimum-detectable-effect calculators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "demlab/common.hpp"
#include "demlab/distkit.hpp"

namespace demlab::testkit {

enum class Alternative { two_sided, greater, less };

/// Per-group sufficient statistics for the two-sample tests.
struct SampleSummary {
  long long count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
};

struct TestOutcome {
  double statistic = 0.0;
  std::optional<double> p_value;
  std::optional<double> dof;
  bool reject = false;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  Alternative alternative = Alternative::two_sided;
  std::string note;  // diagnostics such as "empty critical set"
};

namespace detail {

inline void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("significance level must be in (0, 1)");
  }
}

inline double tail_p(double stat, Alternative alt, const std::function<double(double)>& cdf) {
  switch (alt) {
    case Alternative::greater:
      return 1.0 - cdf(stat);
    case Alternative::less:
      return cdf(stat);
    case Alternative::two_sided:
    default:
      return 2.0 * (1.0 - cdf(std::fabs(stat)));
  }
}

// Confidence bounds for the mean difference given the quantile function of
// the reference distribution.
inline void attach_ci(TestOutcome& out, double diff, double se, double alpha, Alternative alt,
                      const std::function<double(double)>& quantile) {
  switch (alt) {
    case Alternative::two_sided: {
      const double q = quantile(1.0 - alpha / 2.0);
      out.ci_low = diff - q * se;
      out.ci_high = diff + q * se;
      break;
    }
    case Alternative::greater: {
      const double q = quantile(1.0 - alpha);
      out.ci_low = diff - q * se;
      out.ci_high = std::numeric_limits<double>::infinity();
      break;
    }
    case Alternative::less: {
      const double q = quantile(1.0 - alpha);
      out.ci_low = -std::numeric_limits<double>::infinity();
      out.ci_high = diff + q * se;
      break;
    }
  }
}

}  // namespace detail

/// Two-sample t-test on the mean difference b - a. `practical` (the default,
/// and the industry norm) takes the plug-in normal reference; switching it
/// off gives the pure Welch test with Welch-Satterthwaite degrees of freedom.
inline TestOutcome welch_t_test(const SampleSummary& a, const SampleSummary& b, double delta0,
                                Alternative alt, double alpha, bool practical = true) {
  detail::require_alpha(alpha);
  if (a.count < 2 || b.count < 2) {
    throw std::invalid_argument("welch_t_test requires at least 2 observations per group");
  }
  if (!(a.variance >= 0.0) || !(b.variance >= 0.0)) {
    throw std::invalid_argument("welch_t_test requires non-negative variances");
  }
  if (a.variance == 0.0 && b.variance == 0.0) {
    throw numeric_error("welch_t_test: degenerate samples (both variances zero)");
  }
  const double n = static_cast<double>(a.count);
  const double m = static_cast<double>(b.count);
  const double se = std::sqrt(a.variance / n + b.variance / m);
  const double diff = b.mean - a.mean;
  TestOutcome out;
  out.alternative = alt;
  out.statistic = (diff - delta0) / se;
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;
  if (practical) {
    cdf = [](double x) { return distkit::normal_cdf(x); };
    quantile = [](double p) { return distkit::normal_quantile(p); };
  } else {
    const double va = a.variance / n;
    const double vb = b.variance / m;
    const double dof =
        (va + vb) * (va + vb) / (va * va / (n - 1.0) + vb * vb / (m - 1.0));
    out.dof = dof;
    cdf = [dof](double x) { return distkit::student_t_cdf(x, dof); };
    quantile = [dof](double p) { return distkit::student_t_quantile(p, dof); };
  }
  out.p_value = detail::tail_p(out.statistic, alt, cdf);
  out.reject = *out.p_value < alpha;
  detail::attach_ci(out, diff, se, alpha, alt, quantile);
  return out;
}

/// Two-sample z-test with known population variances.
inline TestOutcome z_test(const SampleSummary& a, const SampleSummary& b, double delta0,
                          double known_var_a, double known_var_b, Alternative alt, double alpha) {
  detail::require_alpha(alpha);
  if (a.count < 1 || b.count < 1) {
    throw std::invalid_argument("z_test requires at least 1 observation per group");
  }
  if (!(known_var_a > 0.0) || !(known_var_b > 0.0)) {
    throw std::invalid_argument("z_test requires positive population variances");
  }
  const double se =
      std::sqrt(known_var_a / static_cast<double>(a.count) + known_var_b / static_cast<double>(b.count));
  const double diff = b.mean - a.mean;
  TestOutcome out;
  out.alternative = alt;
  out.statistic = (diff - delta0) / se;
  out.p_value = detail::tail_p(out.statistic, alt,
                               [](double x) { return distkit::normal_cdf(x); });
  out.reject = *out.p_value < alpha;
  detail::attach_ci(out, diff, se, alpha, alt,
                    [](double p) { return distkit::normal_quantile(p); });
  return out;
}

/// Standardised effect size: mean difference over the pooled standard deviation.
inline double cohens_d(const SampleSummary& a, const SampleSummary& b) {
  if (a.count + b.count <= 2) {
    throw std::invalid_argument("cohens_d requires n + m > 2");
  }
  const double pooled = ((static_cast<double>(a.count) - 1.0) * a.variance +
                         (static_cast<double>(b.count) - 1.0) * b.variance) /
                        (static_cast<double>(a.count + b.count) - 2.0);
  if (!(pooled > 0.0)) throw numeric_error("cohens_d: pooled variance is zero");
  return (b.mean - a.mean) / std::sqrt(pooled);
}

/// Exact binomial test of a proportion against theta0. The two-sided p-value
/// sums the masses of all outcomes no more likely than the observed one.
inline TestOutcome binomial_exact_test(long long k, long long n, double theta0, Alternative alt,
                                       double alpha) {
  detail::require_alpha(alpha);
  if (k < 0 || n < 1 || k > n) throw std::invalid_argument("binomial test requires 0 <= k <= n");
  if (!(theta0 > 0.0 && theta0 < 1.0)) {
    throw std::invalid_argument("binomial test requires theta0 in (0, 1)");
  }
  TestOutcome out;
  out.alternative = alt;
  out.statistic = static_cast<double>(k);
  double p = 1.0;
  switch (alt) {
    case Alternative::greater:
      p = k == 0 ? 1.0 : 1.0 - distkit::binomial_cdf(k - 1, n, theta0);
      break;
    case Alternative::less:
      p = distkit::binomial_cdf(k, n, theta0);
      break;
    case Alternative::two_sided: {
      const double pk = distkit::binomial_pmf(k, n, theta0);
      const double bar = pk * (1.0 + 1e-10);  // tolerate rounding in the mass comparison
      double total = 0.0;
      for (long long i = 0; i <= n; ++i) {
        if (distkit::binomial_pmf(i, n, theta0) <= bar) total += distkit::binomial_pmf(i, n, theta0);
      }
      p = std::min(total, 1.0);
      break;
    }
  }
  out.p_value = p;
  out.reject = p < alpha;

  // Critical-set diagnostics: rejection can be impossible for small n because
  // the quantiles themselves are excluded from the critical set.
  double min_p = 1.0;
  switch (alt) {
    case Alternative::greater: {
      const long long q = distkit::binomial_quantile(1.0 - alpha, n, theta0);
      if (q >= n) out.note = "empty critical set";
      min_p = distkit::binomial_pmf(n, n, theta0);
      break;
    }
    case Alternative::less: {
      const long long q = distkit::binomial_quantile(alpha, n, theta0);
      if (q <= 0) out.note = "empty critical set";
      min_p = distkit::binomial_pmf(0, n, theta0);
      break;
    }
    case Alternative::two_sided: {
      min_p = std::min(distkit::binomial_pmf(0, n, theta0), distkit::binomial_pmf(n, n, theta0));
      if (!(min_p < alpha)) out.note = "empty critical set";
      break;
    }
  }
  if (out.note.empty() && !(min_p < alpha)) out.note = "empty critical set";

  // Clopper-Pearson interval for the success probability.
  const double level = alt == Alternative::two_sided ? alpha / 2.0 : alpha;
  const auto solve = [n](const std::function<double(double)>& fn, double target) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (fn(mid) > target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    (void)n;
    return 0.5 * (lo + hi);
  };
  double lower = 0.0, upper = 1.0;
  if (k > 0) {
    lower = solve([&](double p2) { return 1.0 - distkit::binomial_cdf(k - 1, n, p2); }, level);
  }
  if (k < n) {
    upper = 1.0 - solve([&](double p2) { return distkit::binomial_cdf(k, n, 1.0 - p2); }, level);
  }
  if (alt == Alternative::greater) upper = 1.0;
  if (alt == Alternative::less) lower = 0.0;
  out.ci_low = lower;
  out.ci_high = upper;
  return out;
}

namespace detail {

// Midranks of the combined sample plus the tie-correction term sum(t^3 - t).
inline void midranks(std::span<const double> x, std::span<const double> y,
                     std::vector<double>& rank_x_sum, double& tie_term) {
  struct Tagged {
    double value;
    bool from_x;
  };
  std::vector<Tagged> all;
  all.reserve(x.size() + y.size());
  for (double v : x) all.push_back({v, true});
  for (double v : y) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.value < b.value; });
  rank_x_sum.assign(1, 0.0);
  tie_term = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double tied = static_cast<double>(j - i);
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].from_x) rank_x_sum[0] += mid;
    }
    if (tied > 1.0) tie_term += tied * tied * tied - tied;
    i = j;
  }
}

}  // namespace detail

/// Mann-Whitney U test. The statistic counts pairs with y below x (ties at
/// one half), computed through midranks; the reference is the tie-corrected
/// normal approximation, or the full permutation distribution when
/// `exact` is set and n + m <= 20.
inline TestOutcome mann_whitney_u(std::span<const double> x, std::span<const double> y,
                                  Alternative alt, double alpha, bool exact = false) {
  detail::require_alpha(alpha);
  if (x.empty() || y.empty()) throw std::invalid_argument("mann_whitney_u requires non-empty samples");
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::vector<double> rank_sum;
  double tie_term = 0.0;
  detail::midranks(x, y, rank_sum, tie_term);
  const double u = rank_sum[0] - n * (n + 1.0) / 2.0;

  TestOutcome out;
  out.alternative = alt;
  out.statistic = u;
  const double mu = n * m / 2.0;
  if (exact) {
    if (x.size() + y.size() > 20) {
      throw std::invalid_argument("exact Mann-Whitney is limited to n + m <= 20");
    }
    // enumerate all assignments of the combined sample to the x positions
    std::vector<double> all(x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());
    const std::size_t total = all.size();
    std::vector<int> pick(total, 0);
    std::fill(pick.begin(), pick.begin() + x.size(), 1);
    std::sort(pick.begin(), pick.end());
    std::uint64_t count = 0, extreme = 0;
    std::vector<double> xs, ys;
    do {
      xs.clear();
      ys.clear();
      for (std::size_t i = 0; i < total; ++i) {
        (pick[i] ? xs : ys).push_back(all[i]);
      }
      double up = 0.0;
      for (double xv : xs) {
        for (double yv : ys) up += yv < xv ? 1.0 : (yv == xv ? 0.5 : 0.0);
      }
      ++count;
      switch (alt) {
        case Alternative::greater:
          extreme += up <= u ? 1 : 0;
          break;
        case Alternative::less:
          extreme += up >= u ? 1 : 0;
          break;
        case Alternative::two_sided:
          extreme += std::fabs(up - mu) >= std::fabs(u - mu) ? 1 : 0;
          break;
      }
    } while (std::next_permutation(pick.begin(), pick.end()));
    out.p_value = static_cast<double>(extreme) / static_cast<double>(count);
  } else {
    const double nm = n + m;
    const double sigma2 = n * m / 12.0 * ((nm + 1.0) - tie_term / (nm * (nm - 1.0)));
    if (!(sigma2 > 0.0)) throw numeric_error("mann_whitney_u: all observations tied");
    const double z = (u - mu) / std::sqrt(sigma2);
    // under the greater alternative (y stochastically above x) small U is the
    // extreme direction
    switch (alt) {
      case Alternative::greater:
        out.p_value = distkit::normal_cdf(z);
        break;
      case Alternative::less:
        out.p_value = 1.0 - distkit::normal_cdf(z);
        break;
      case Alternative::two_sided:
        out.p_value = 2.0 * (1.0 - distkit::normal_cdf(std::fabs(z)));
        break;
    }
  }
  out.reject = *out.p_value < alpha;
  return out;
}

/// Chi-squared goodness-of-fit against expected ratios; the sample-ratio-
/// mismatch check is this test with the designed split as the ratios.
inline TestOutcome chi2_gof(std::span<const double> observed, std::span<const double> ratios) {
  if (observed.size() < 2) throw std::invalid_argument("chi2_gof requires >= 2 categories");
  if (observed.size() != ratios.size()) {
    throw std::invalid_argument("chi2_gof: observed and ratios must have equal length");
  }
  double total = 0.0, ratio_total = 0.0;
  for (double o : observed) {
    if (o < 0.0) throw std::invalid_argument("chi2_gof: negative count");
    total += o;
  }
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("chi2_gof: expected count would be zero");
    ratio_total += r;
  }
  TestOutcome out;
  out.alternative = Alternative::greater;
  double stat = 0.0;
  bool small_expected = false;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = ratios[i] / ratio_total * total;
    const double d = observed[i] - e;
    stat += d * d / e;
    if (e < 5.0) small_expected = true;
  }
  out.statistic = stat;
  out.dof = static_cast<double>(observed.size() - 1);
  out.p_value = 1.0 - distkit::chi2_cdf(stat, *out.dof);
  out.reject = *out.p_value < 0.05;
  if (small_expected) out.note = "expected count below 5";
  return out;
}

/// Power of the two-sample test at true effect `theta` against H0 at theta0.
/// Two-sided power uses both tail contributions exactly; `approx` opts into
/// the single-tail form, valid when |theta - theta0| / SE >> 0.
inline double power(double theta, double theta0, double var_a, double var_b, long long n,
                    long long m, double alpha, Alternative alt, bool approx = false) {
  detail::require_alpha(alpha);
  if (!(var_a > 0.0) || !(var_b > 0.0)) throw std::invalid_argument("power requires positive variances");
  if (n < 1 || m < 1) throw std::invalid_argument("power requires counts >= 1");
  const double se = std::sqrt(var_a / static_cast<double>(n) + var_b / static_cast<double>(m));
  const double shift = (theta - theta0) / se;
  switch (alt) {
    case Alternative::greater:
      return 1.0 - distkit::normal_cdf(distkit::normal_quantile(1.0 - alpha) - shift);
    case Alternative::less:
      return distkit::normal_cdf(distkit::normal_quantile(alpha) - shift);
    case Alternative::two_sided:
    default: {
      const double zh = distkit::normal_quantile(1.0 - alpha / 2.0);
      if (approx) return 1.0 - distkit::normal_cdf(zh - std::fabs(shift));
      return distkit::normal_cdf(-zh - shift) + 1.0 - distkit::normal_cdf(zh - shift);
    }
  }
}

/// Validity condition of the single-tail two-sided approximation.
inline bool approx_power_valid(double theta, double theta0, double var_a, double var_b,
                               long long n, long long m, double alpha) {
  const double se = std::sqrt(var_a / static_cast<double>(n) + var_b / static_cast<double>(m));
  return std::fabs(theta - theta0) / se > distkit::normal_quantile(1.0 - alpha / 2.0) + 1.0;
}

struct SampleSizeResult {
  long long n = 0;          // first group
  long long m = 0;          // second group (allocation_ratio * n, rounded up)
  double rule_of_thumb = 0; // 16 sigma^2 / theta^2
};

/// Smallest per-group sample size meeting the power target. Equal allocation
/// by default; unequal splits via allocation_ratio = m / n.
inline SampleSizeResult required_sample_size(double theta, double theta0, double var_a,
                                             double var_b, double alpha, double power_target,
                                             Alternative alt, double allocation_ratio = 1.0) {
  detail::require_alpha(alpha);
  if (theta == theta0) throw std::invalid_argument("required_sample_size requires theta != theta0");
  if (!(power_target > alpha && power_target < 1.0)) {
    throw std::invalid_argument("required_sample_size requires power_target in (alpha, 1)");
  }
  if (!(allocation_ratio > 0.0)) {
    throw std::invalid_argument("required_sample_size requires allocation_ratio > 0");
  }
  const auto m_of = [&](long long n) {
    return static_cast<long long>(
        std::ceil(allocation_ratio * static_cast<double>(n) - 1e-9));
  };
  const auto enough = [&](long long n) {
    const long long m = std::max<long long>(1, m_of(n));
    return power(theta, theta0, var_a, var_b, n, m, alpha, alt) >= power_target;
  };
  long long hi = 2;
  while (!enough(hi)) {
    hi *= 2;
    if (hi > (1LL << 40)) throw numeric_error("required_sample_size: no attainable size");
  }
  long long lo = hi / 2;
  while (lo < hi) {
    const long long mid = lo + (hi - lo) / 2;
    if (enough(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  SampleSizeResult res;
  res.n = hi;
  res.m = std::max<long long>(1, m_of(hi));
  const double sigma2 = 0.5 * (var_a + var_b);
  res.rule_of_thumb = 16.0 * sigma2 / ((theta - theta0) * (theta - theta0));
  return res;
}

/// Minimum detectable effect at the given design. Uses the single-tail z form,
/// whose round trip through power() is exact for one-sided tests and for the
/// approximate two-sided form.
inline double mde(double var_a, double var_b, long long n, long long m, double alpha,
                  double power_target, Alternative alt) {
  detail::require_alpha(alpha);
  if (n < 1 || m < 1) throw std::invalid_argument("mde requires counts >= 1");
  if (!(power_target > alpha && power_target < 1.0)) {
    throw std::invalid_argument("mde requires power_target in (alpha, 1)");
  }
  const double z_alpha = alt == Alternative::two_sided
                             ? distkit::normal_quantile(1.0 - alpha / 2.0)
                             : distkit::normal_quantile(1.0 - alpha);
  const double z_power = distkit::normal_quantile(1.0 - power_target);
  const double se = std::sqrt(var_a / static_cast<double>(n) + var_b / static_cast<double>(m));
  return (z_alpha - z_power) * se;
}

/// (1 - alpha) confidence interval for a population mean from its summary.
inline std::pair<double, double> ci_mean(const SampleSummary& s, double alpha) {
  detail::require_alpha(alpha);
  if (s.count < 2) throw std::invalid_argument("ci_mean requires n >= 2");
  if (!(s.variance >= 0.0)) throw std::invalid_argument("ci_mean requires variance >= 0");
  if (s.variance == 0.0) return {s.mean, s.mean};
  const double q = distkit::student_t_quantile(1.0 - alpha / 2.0, static_cast<double>(s.count - 1));
  const double half = q * std::sqrt(s.variance / static_cast<double>(s.count));
  return {s.mean - half, s.mean + half};
}

struct SkewnessRule {
  long long min_samples = 0;
  bool heuristic_reliable = false;  // the rule is most useful when |skew| > 1
};

/// Minimum per-group sample size for the plug-in normal reference to hold
/// under skewed responses: ceil(355 * skewness^2).
inline SkewnessRule skewness_min_sample(double sample_skewness) {
  if (!std::isfinite(sample_skewness)) {
    throw std::invalid_argument("skewness_min_sample requires a finite input");
  }
  SkewnessRule rule;
  rule.min_samples =
      static_cast<long long>(std::ceil(355.0 * sample_skewness * sample_skewness - 1e-9));
  rule.heuristic_reliable = std::fabs(sample_skewness) > 1.0;
  return rule;
}

}  // namespace demlab::testkit
