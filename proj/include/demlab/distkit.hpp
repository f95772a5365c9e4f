#pragma once

// Special functions and distributions shared by every other module: normal,
// Student's t, chi-squared, binomial, beta-binomial, and Owen's T. All
// functions are pure and reentrant.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "demlab/common.hpp"

namespace demlab::distkit {

/// Parameters of a beta distribution; both must be strictly positive.
struct BetaParams {
  double alpha;
  double beta;

  BetaParams(double a, double b) : alpha(a), beta(b) {
    if (!(a > 0.0) || !(b > 0.0)) {
      throw numeric_error("BetaParams requires alpha > 0 and beta > 0, got alpha=" +
                          std::to_string(a) + " beta=" + std::to_string(b));
    }
  }
};

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

// Acklam's rational approximation to the standard normal quantile, refined
// below with Halley steps against the erfc-based CDF.
inline double normal_quantile_estimate(double p) {
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile requires p in (0, 1), got p=" +
                                std::to_string(p));
  }
  double x = detail::normal_quantile_estimate(p);
  // Two Halley refinements push the estimate to full double precision.
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace detail {

inline double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int max_iter = 500;
  constexpr double eps = 3.0e-16;
  constexpr double fpmin = 1.0e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

// I_x(a, b) with the logs of x and 1-x supplied so callers can keep precision
// when x is extremely close to 0 or 1 (large-dof t CDF).
inline double incbeta_ln(double a, double b, double x, double lnx, double ln1mx) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(a * lnx + b * ln1mx - lbeta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

inline double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return incbeta_ln(a, b, x, std::log(x), std::log1p(-x));
}

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) {
    // series representation
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1.0e-16) break;
    }
    const double lg = -x + a * std::log(x) - std::lgamma(a);
    return sum * std::exp(lg);
  }
  // continued fraction for Q(a, x) (modified Lentz)
  constexpr double fpmin = 1.0e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1.0e-16) break;
  }
  const double lg = -x + a * std::log(x) - std::lgamma(a);
  return 1.0 - std::exp(lg) * h;
}

// Safeguarded Newton on a monotone CDF; keeps a hard bracket and bisects
// whenever the Newton step leaves it. Tolerance 1e-10 on the abscissa.
template <class Cdf, class Pdf>
double invert_cdf(const Cdf& cdf, const Pdf& pdf, double p, double lo, double hi,
                  double x0) {
  double x = std::clamp(x0, lo, hi);
  double flo = cdf(lo) - p;
  double fhi = cdf(hi) - p;
  // expand the bracket if the initial one does not straddle
  for (int i = 0; i < 200 && flo > 0.0; ++i) {
    hi = lo;
    lo = lo - std::max(1.0, std::fabs(lo)) * 2.0;
    flo = cdf(lo) - p;
  }
  for (int i = 0; i < 200 && fhi < 0.0; ++i) {
    lo = hi;
    hi = hi + std::max(1.0, std::fabs(hi)) * 2.0;
    fhi = cdf(hi) - p;
  }
  x = std::clamp(x, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double f = cdf(x) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double deriv = pdf(x);
    double next = (deriv > 0.0) ? x - f / deriv : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::fabs(next - x);
    x = next;
    if (step < 1.0e-10 * std::max(1.0, std::fabs(x)) || hi - lo < 1.0e-14 * std::max(1.0, std::fabs(x))) {
      break;
    }
  }
  return x;
}

// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton iteration
// on the Legendre recurrence.
template <int N>
struct GaussLegendre {
  std::array<double, N> node{};
  std::array<double, N> weight{};
  GaussLegendre() {
    const int m = (N + 1) / 2;
    for (int i = 0; i < m; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (N + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < N; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
        }
        pp = N * (x * p0 - p1) / (x * x - 1.0);
        const double dx = p0 / pp;
        x -= dx;
        if (std::fabs(dx) < 1.0e-15) break;
      }
      node[i] = -x;
      node[N - 1 - i] = x;
      weight[i] = 2.0 / ((1.0 - x * x) * pp * pp);
      weight[N - 1 - i] = weight[i];
    }
  }
};

// T(h, a) for 0 <= a <= 1 by 48-point Gauss-Legendre on the defining integral.
inline double owens_t_core(double h, double a) {
  static const GaussLegendre<48> gl;
  const double half_h2 = 0.5 * h * h;
  double sum = 0.0;
  for (int i = 0; i < 48; ++i) {
    const double x = 0.5 * a * (gl.node[i] + 1.0);
    const double one_x2 = 1.0 + x * x;
    sum += gl.weight[i] * std::exp(-half_h2 * one_x2) / one_x2;
  }
  return sum * 0.5 * a / (2.0 * std::numbers::pi);
}

}  // namespace detail

/// Owen's T function T(h, a) = (1/2pi) * int_0^a exp(-h^2(1+x^2)/2)/(1+x^2) dx.
inline double owens_t(double h, double a) {
  if (!std::isfinite(h) || !std::isfinite(a)) {
    throw std::invalid_argument("owens_t requires finite arguments");
  }
  if (a == 0.0) return 0.0;
  const double sign = a < 0.0 ? -1.0 : 1.0;  // T(h,-a) = -T(h,a)
  h = std::fabs(h);                          // T(-h,a) = T(h,a)
  a = std::fabs(a);
  if (a <= 1.0) return sign * detail::owens_t_core(h, a);
  // Range reduction to a <= 1: T(h,a) + T(ah, 1/a) = (Phi(h)+Phi(ah))/2 - Phi(h)Phi(ah)
  const double ph = normal_cdf(h);
  const double pah = normal_cdf(a * h);
  const double t = 0.5 * (ph + pah) - ph * pah - detail::owens_t_core(a * h, 1.0 / a);
  return sign * t;
}

inline double student_t_pdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_pdf requires dof > 0");
  const double lg = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                    0.5 * std::log(dof * std::numbers::pi) -
                    0.5 * (dof + 1.0) * std::log1p(x * x / dof);
  return std::exp(lg);
}

inline double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_cdf requires dof > 0");
  if (x == 0.0) return 0.5;
  // I_{nu/(nu+x^2)}(nu/2, 1/2) computed with exact logs of both arguments.
  const double x2 = x * x;
  const double z = dof / (dof + x2);
  const double lnz = -std::log1p(x2 / dof);
  const double ln1mz = std::log(x2) - std::log(dof + x2);
  const double tail = 0.5 * detail::incbeta_ln(0.5 * dof, 0.5, z, lnz, ln1mz);
  return x > 0.0 ? 1.0 - tail : tail;
}

inline double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("student_t_quantile requires p in (0, 1)");
  }
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_quantile requires dof > 0");
  if (p == 0.5) return 0.0;
  const double z = normal_quantile(p);
  // Initial guess from the first Cornish-Fisher correction term.
  const double x0 = z + (z * z * z + z) / (4.0 * dof);
  const auto cdf = [dof](double x) { return student_t_cdf(x, dof); };
  const auto pdf = [dof](double x) { return student_t_pdf(x, dof); };
  const double spread = std::max(10.0, 2.0 * std::fabs(x0));
  return detail::invert_cdf(cdf, pdf, p, -spread, spread, x0);
}

inline double chi2_pdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  const double k = 0.5 * dof;
  return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::numbers::ln2 - std::lgamma(k));
}

inline double chi2_cdf(double x, double dof) {
  if (!(dof >= 1.0)) throw std::invalid_argument("chi2_cdf requires dof >= 1");
  if (x <= 0.0) return 0.0;
  return detail::gamma_p(0.5 * dof, 0.5 * x);
}

inline double chi2_quantile(double q, double dof) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("chi2_quantile requires q in (0, 1)");
  if (!(dof >= 1.0)) throw std::invalid_argument("chi2_quantile requires dof >= 1");
  // Wilson-Hilferty starting point.
  const double z = normal_quantile(q);
  const double c = 2.0 / (9.0 * dof);
  double x0 = dof * std::pow(1.0 - c + z * std::sqrt(c), 3.0);
  if (!(x0 > 0.0)) x0 = 0.5 * dof;
  const auto cdf = [dof](double x) { return chi2_cdf(x, dof); };
  const auto pdf = [dof](double x) { return chi2_pdf(x, dof); };
  return detail::invert_cdf(cdf, pdf, q, 0.0, std::max(4.0 * dof, 4.0 * x0), x0);
}

inline double log_binomial_pmf(long long k, long long n, double p) {
  if (k < 0 || n < 0 || k > n) {
    throw std::invalid_argument("binomial pmf requires 0 <= k <= n");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial pmf requires p in [0, 1]");
  if (p == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p == 1.0) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
  const double lchoose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return lchoose + k * std::log(p) + (n - k) * std::log1p(-p);
}

inline double binomial_pmf(long long k, long long n, double p) {
  return std::exp(log_binomial_pmf(k, n, p));
}

/// P(B <= k) for B ~ Bin(n, p).
inline double binomial_cdf(long long k, long long n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  return detail::incbeta(static_cast<double>(n - k), static_cast<double>(k + 1), 1.0 - p);
}

/// Smallest k with P(B <= k) >= q.
inline long long binomial_quantile(double q, long long n, double p) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("binomial_quantile requires q in [0, 1]");
  if (n < 0) throw std::invalid_argument("binomial_quantile requires n >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial_quantile requires p in [0, 1]");
  long long lo = 0, hi = n;
  while (lo < hi) {
    const long long mid = lo + (hi - lo) / 2;
    if (binomial_cdf(mid, n, p) >= q) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

/// Closed-form beta-binomial pmf via log-gamma, stable for large n.
inline double beta_binomial_pmf(long long k, long long n, const BetaParams& params) {
  if (k < 0 || n < 0 || k > n) {
    throw std::invalid_argument("beta_binomial_pmf requires 0 <= k <= n");
  }
  const double lchoose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  const double lp = lchoose + detail::lbeta(k + params.alpha, n - k + params.beta) -
                    detail::lbeta(params.alpha, params.beta);
  return std::exp(lp);
}

}  // namespace demlab::distkit
