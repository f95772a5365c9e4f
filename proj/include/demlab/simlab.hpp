#pragma once

// Shared Monte Carlo machinery: counter-seeded RNG streams, a deterministic
// worker pool, bootstrap confidence intervals, percentile-rank calibration,
// and noisy bisection for empirical minimum detectable effects.
//
// Determinism contract: run i always draws from a stream derived from
// (seed, i) alone, so aggregate results are identical for any worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "demlab/common.hpp"
#include "demlab/distkit.hpp"

namespace demlab::simlab {

struct McConfig {
  std::uint64_t seed = 0;
  std::uint64_t runs = 10000;
  unsigned workers = 0;  // 0 = hardware concurrency
  std::uint64_t bootstrap_resamples = 2000;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Mixes an arbitrary list of 64-bit keys into one stream seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = 0x243f6a8885a308d3ULL;
  for (std::uint64_t k : keys) {
    s ^= k + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    detail::splitmix64(s);
    s = detail::splitmix64(s);
  }
  return s;
}

/// Small self-contained generator (splitmix64 core) with the handful of
/// variates the toolkit needs. Cheap to construct, one per (seed, stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  /// Uniform in (0, 1].
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (second variate cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Poisson with unit mean (Knuth product-of-uniforms).
  std::uint64_t poisson1() {
    static const double limit = std::exp(-1.0);
    std::uint64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

  /// Gamma(shape, 1) for shape >= 1 by Marsaglia-Tsang squeeze.
  double gamma(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Standard Student's t with dof > 2 (normal over sqrt of chi-squared).
  double student_t(double dof) {
    const double chi2 = 2.0 * gamma(0.5 * dof);
    return normal() * std::sqrt(dof / chi2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift rejection method.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0ULL - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Rng rng_for(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix_seed({seed, stream}));
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs `fn(run_index, rng)` for every run index and collects the results in
/// run order. Bit-identical output for any worker count.
template <class T, class Fn>
std::vector<T> run_collect(std::uint64_t seed, std::uint64_t runs, unsigned workers, Fn fn) {
  std::vector<T> out(runs);
  const unsigned w = std::min<std::uint64_t>(resolve_workers(workers), std::max<std::uint64_t>(runs, 1));
  if (w <= 1) {
    for (std::uint64_t i = 0; i < runs; ++i) {
      Rng rng = rng_for(seed, i);
      out[i] = fn(i, rng);
    }
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (std::uint64_t i = t; i < runs; i += w) {
        Rng rng = rng_for(seed, i);
        out[i] = fn(i, rng);
      }
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Unbiased sample variance (n-1 denominator).
inline double variance_of(std::span<const double> xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

enum class Statistic { mean, variance };

struct BootstrapCi {
  double low = 0.0;
  double high = 0.0;
  bool degenerate = false;  // all input samples equal
};

/// Centred percentile bootstrap interval for the mean or variance.
inline BootstrapCi bootstrap_ci(std::span<const double> samples, Statistic stat,
                                std::uint64_t resamples, double alpha, std::uint64_t seed) {
  if (samples.size() < 2) throw std::invalid_argument("bootstrap_ci requires >= 2 samples");
  if (resamples < 100) throw std::invalid_argument("bootstrap_ci requires >= 100 resamples");
  const bool all_equal =
      std::all_of(samples.begin(), samples.end(), [&](double v) { return v == samples[0]; });
  if (all_equal) {
    const double c = stat == Statistic::mean ? samples[0] : 0.0;
    return {c, c, true};
  }
  const std::uint64_t n = samples.size();
  std::vector<double> stats(resamples);
  std::vector<double> buf(n);
  Rng rng = rng_for(seed, 0x626f6f74ULL);
  for (std::uint64_t b = 0; b < resamples; ++b) {
    for (std::uint64_t i = 0; i < n; ++i) buf[i] = samples[rng.below(n)];
    stats[b] = stat == Statistic::mean ? mean_of(buf) : variance_of(buf);
  }
  std::sort(stats.begin(), stats.end());
  const auto pick = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < stats.size() ? stats[i] * (1.0 - frac) + stats[i + 1] * frac : stats[i];
  };
  return {pick(alpha / 2.0), pick(1.0 - alpha / 2.0), false};
}

/// Fraction of empirical samples strictly below the theoretical value.
inline double percentile_rank_calibration(double theoretical, std::span<const double> samples) {
  if (samples.size() < 100) {
    throw std::invalid_argument("percentile_rank_calibration requires >= 100 samples");
  }
  std::uint64_t below = 0;
  for (double s : samples) {
    if (s < theoretical) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(samples.size());
}

struct CalibrationReport {
  double statistic = 0.0;   // chi-squared against the uniform histogram
  double p_value = 1.0;
  std::vector<std::uint64_t> histogram;
  bool under_dispersed = false;  // characteristic U-shape in the ranks
};

/// Chi-squared uniformity check on a histogram of percentile ranks.
inline CalibrationReport calibration_histogram(std::span<const double> ranks, int bins = 20) {
  if (bins < 2) throw std::invalid_argument("calibration_histogram requires >= 2 bins");
  CalibrationReport report;
  report.histogram.assign(bins, 0);
  for (double r : ranks) {
    int b = static_cast<int>(r * bins);
    b = std::clamp(b, 0, bins - 1);
    ++report.histogram[b];
  }
  const double expected = static_cast<double>(ranks.size()) / bins;
  double c2 = 0.0;
  for (auto o : report.histogram) {
    const double d = static_cast<double>(o) - expected;
    c2 += d * d / expected;
  }
  report.statistic = c2;
  report.p_value = 1.0 - distkit::chi2_cdf(c2, bins - 1);
  // U-shape heuristic: both extreme bins heavy while the middle runs light.
  const double ends =
      0.5 * (static_cast<double>(report.histogram.front()) + static_cast<double>(report.histogram.back()));
  double middle = 0.0;
  const int mid_lo = bins / 3;
  const int mid_hi = bins - bins / 3;
  for (int b = mid_lo; b < mid_hi; ++b) middle += static_cast<double>(report.histogram[b]);
  middle /= static_cast<double>(mid_hi - mid_lo);
  report.under_dispersed = static_cast<double>(report.histogram.front()) > 1.25 * expected &&
                           static_cast<double>(report.histogram.back()) > 1.25 * expected &&
                           ends > 1.25 * expected && middle < expected;
  return report;
}

struct BisectionResult {
  double theta_hat = 0.0;
  int bisections = 0;
  std::uint64_t samples_used = 0;
};

/// Bisects a noisy, monotone-increasing power curve for the abscissa hitting
/// `target`. At each midpoint the sample count grows until the comparison
/// against the target is significant at the 1% level (or the per-point budget
/// is exhausted), then the bracket halves; at most 10 bisections.
///
/// `power_fn(theta, n, rng)` must return the number of successes out of n.
template <class PowerFn>
BisectionResult noisy_bisection(PowerFn power_fn, double target, double lo, double hi,
                                std::uint64_t point_budget, std::uint64_t seed) {
  if (!(lo < hi)) throw std::invalid_argument("noisy_bisection requires lo < hi");
  if (!(target > 0.0 && target < 1.0)) {
    throw std::invalid_argument("noisy_bisection requires target in (0, 1)");
  }
  constexpr double z99 = 2.5758293035489004;  // 99.5th normal percentile
  BisectionResult res;
  std::uint64_t stream = 0;
  // Estimates power at theta minus target; significance-driven sample growth.
  const auto estimate_sign = [&](double theta) {
    std::uint64_t n = 0, k = 0;
    std::uint64_t batch = 256;
    Rng rng = rng_for(seed, 0x6269ULL + stream++);
    for (;;) {
      k += power_fn(theta, batch, rng);
      n += batch;
      res.samples_used += batch;
      const double p_hat = static_cast<double>(k) / static_cast<double>(n);
      const double se = std::sqrt(std::max(p_hat * (1.0 - p_hat), 1.0 / static_cast<double>(n)) /
                                  static_cast<double>(n));
      if (std::fabs(p_hat - target) > z99 * se || n >= point_budget) {
        return p_hat - target;
      }
      batch = std::min(batch * 2, point_budget - n);
      if (batch == 0) return p_hat - target;
    }
  };
  const double at_lo = estimate_sign(lo);
  const double at_hi = estimate_sign(hi);
  if (!(at_lo < 0.0 && at_hi > 0.0)) {
    throw input_error("noisy_bisection: bracket does not straddle the target power");
  }
  for (int i = 0; i < 10; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (estimate_sign(mid) >= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
    ++res.bisections;
  }
  res.theta_hat = 0.5 * (lo + hi);
  return res;
}

}  // namespace demlab::simlab
