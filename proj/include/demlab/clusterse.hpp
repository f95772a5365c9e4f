#pragma once

// Standard errors for transaction-/item-level metrics under user-level
// randomisation: the vanilla i.i.d. estimate, one-way and two-way Poisson
// reweighting bootstraps, and the power/coverage degradation diagnostics.
//
// Bootstrap weights are derived statelessly from (seed, unit, resample), so a
// pass over the rows in any storage order gives identical estimates and the
// resampling parallelises trivially.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "demlab/common.hpp"
#include "demlab/distkit.hpp"
#include "demlab/simlab.hpp"

namespace demlab::clusterse {

struct Record {
  std::string user_id;     // primary (randomisation) unit
  std::string product_id;  // secondary unit, may be empty for one-way use
  double value = 0.0;      // one response per analysis unit
};

using ClusteredRecords = std::vector<Record>;

struct SeEstimate {
  double mean = 0.0;
  double se = 0.0;
  double se_ci_low = 0.0;
  double se_ci_high = 0.0;
  long long b_resamples = 0;
  double coefficient_of_variation = 0.0;  // (jackknife sd of the SE) / SE
  long long skipped_resamples = 0;        // zero-total-weight draws
  bool degenerate = false;                // fewer than two distinct values
  std::string note;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t poisson_weight(std::uint64_t seed, std::uint64_t unit_hash,
                                    std::uint64_t resample) {
  simlab::Rng rng(simlab::mix_seed({seed, unit_hash, resample}));
  return rng.poisson1();
}

// SD of the resample means plus a block-jackknife spread of that SD.
inline void finish(SeEstimate& est, const std::vector<double>& means) {
  const auto b = static_cast<double>(means.size());
  double m = 0.0;
  for (double v : means) m += v;
  m /= b;
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  est.se = std::sqrt(ss / (b - 1.0));

  // jackknife over blocks of resamples for the spread of the SD itself
  const int blocks = means.size() >= 200 ? 20 : 5;
  const std::size_t per = means.size() / blocks;
  std::vector<double> leave_out(blocks);
  for (int k = 0; k < blocks; ++k) {
    double mk = 0.0;
    std::size_t nk = 0;
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (i / per == static_cast<std::size_t>(k) && k < blocks) continue;
      mk += means[i];
      ++nk;
    }
    mk /= static_cast<double>(nk);
    double sk = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (i / per == static_cast<std::size_t>(k) && k < blocks) continue;
      sk += (means[i] - mk) * (means[i] - mk);
    }
    leave_out[k] = std::sqrt(sk / static_cast<double>(nk - 1));
  }
  double jm = 0.0;
  for (double v : leave_out) jm += v;
  jm /= blocks;
  double jv = 0.0;
  for (double v : leave_out) jv += (v - jm) * (v - jm);
  const double se_of_se = std::sqrt((blocks - 1.0) / blocks * jv);
  est.coefficient_of_variation = est.se > 0.0 ? se_of_se / est.se : 0.0;
  const double z = distkit::normal_quantile(0.975);
  est.se_ci_low = std::max(0.0, est.se - z * se_of_se);
  est.se_ci_high = est.se + z * se_of_se;
}

inline void require_rows(const ClusteredRecords& records) {
  if (records.size() < 2) throw input_error("standard errors require at least 2 rows");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].user_id.empty()) {
      throw input_error("empty user_id at row " + std::to_string(i + 1));
    }
  }
}

}  // namespace detail

/// Analysis-unit standard error under the i.i.d. assumption (biased when
/// responses cluster by user).
inline SeEstimate vanilla_se(const ClusteredRecords& records) {
  detail::require_rows(records);
  const auto n = static_cast<double>(records.size());
  double m = 0.0;
  for (const auto& r : records) m += r.value;
  m /= n;
  double ss = 0.0;
  bool distinct = false;
  for (const auto& r : records) {
    ss += (r.value - m) * (r.value - m);
    distinct = distinct || r.value != records[0].value;
  }
  SeEstimate est;
  est.mean = m;
  est.se = std::sqrt(ss / (n - 1.0) / n);
  est.se_ci_low = est.se_ci_high = est.se;
  if (!distinct) {
    est.degenerate = true;
    est.note = "all values equal";
  }
  return est;
}

/// One-way bootstrap: one Poisson(1) weight per user per resample, applied to
/// all the user's rows; the SE is the spread of the weighted means.
inline SeEstimate oneway_bootstrap_se(const ClusteredRecords& records, long long b,
                                      std::uint64_t seed) {
  detail::require_rows(records);
  if (b < 100) throw input_error("oneway_bootstrap_se requires b >= 100");
  std::vector<std::uint64_t> user_hash(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    user_hash[i] = detail::fnv1a(records[i].user_id);
  }
  SeEstimate est;
  est.b_resamples = b;
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(b));
  const auto resample_means = simlab::run_collect<double>(
      seed, static_cast<std::uint64_t>(b), 0, [&](std::uint64_t r, simlab::Rng&) {
        double sw = 0.0, swv = 0.0;
        for (std::size_t i = 0; i < records.size(); ++i) {
          const auto w =
              static_cast<double>(detail::poisson_weight(seed, user_hash[i], r));
          sw += w;
          swv += w * records[i].value;
        }
        return sw > 0.0 ? swv / sw : std::numeric_limits<double>::quiet_NaN();
      });
  for (double v : resample_means) {
    if (std::isnan(v)) {
      ++est.skipped_resamples;
    } else {
      means.push_back(v);
    }
  }
  if (means.size() < 2) throw numeric_error("oneway_bootstrap_se: all resamples were empty");
  if (est.skipped_resamples * 100 > b) est.note = "more than 1% of resamples had zero weight";
  const auto base = vanilla_se(records);
  est.mean = base.mean;
  est.degenerate = base.degenerate;
  detail::finish(est, means);
  return est;
}

/// Two-way bootstrap: independent Poisson(1) weights per user and per product;
/// each row carries the product of its two unit weights.
inline SeEstimate twoway_bootstrap_se(const ClusteredRecords& records, long long b,
                                      std::uint64_t seed) {
  detail::require_rows(records);
  if (b < 100) throw input_error("twoway_bootstrap_se requires b >= 100");
  std::vector<std::uint64_t> user_hash(records.size()), product_hash(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].product_id.empty()) {
      throw input_error("twoway_bootstrap_se: missing product_id at row " + std::to_string(i + 1));
    }
    user_hash[i] = detail::fnv1a(records[i].user_id);
    product_hash[i] = detail::fnv1a(records[i].product_id) ^ 0x517cc1b727220a95ULL;
  }
  SeEstimate est;
  est.b_resamples = b;
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(b));
  const auto resample_means = simlab::run_collect<double>(
      seed, static_cast<std::uint64_t>(b), 0, [&](std::uint64_t r, simlab::Rng&) {
        double sw = 0.0, swv = 0.0;
        for (std::size_t i = 0; i < records.size(); ++i) {
          const auto wu = detail::poisson_weight(seed, user_hash[i], r);
          const auto wp = detail::poisson_weight(seed, product_hash[i], r);
          const auto w = static_cast<double>(wu * wp);
          sw += w;
          swv += w * records[i].value;
        }
        return sw > 0.0 ? swv / sw : std::numeric_limits<double>::quiet_NaN();
      });
  for (double v : resample_means) {
    if (std::isnan(v)) {
      ++est.skipped_resamples;
    } else {
      means.push_back(v);
    }
  }
  if (means.size() < 2) throw numeric_error("twoway_bootstrap_se: all resamples were empty");
  if (est.skipped_resamples * 100 > b) est.note = "more than 1% of resamples had zero weight";
  const auto base = vanilla_se(records);
  est.mean = base.mean;
  est.degenerate = base.degenerate;
  detail::finish(est, means);
  return est;
}

/// Test power left when the true standard error is `se` but the effect was
/// sized for a nominal design; normal reference unless dof is given.
inline double power_under_se(double theta, double se, double alpha, double dof = 0.0) {
  if (!(se > 0.0)) throw std::invalid_argument("power_under_se requires se > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("power_under_se requires alpha in (0, 1)");
  }
  const double shift = theta / se;
  if (dof > 0.0) {
    const double crit = distkit::student_t_quantile(1.0 - alpha / 2.0, dof);
    return 1.0 - distkit::student_t_cdf(crit - shift, dof) +
           distkit::student_t_cdf(-crit - shift, dof);
  }
  const double crit = distkit::normal_quantile(1.0 - alpha / 2.0);
  return 1.0 - distkit::normal_cdf(crit - shift) + distkit::normal_cdf(-crit - shift);
}

/// Actual coverage of a nominal (1 - alpha) interval whose width was computed
/// with a standard error `ratio` times too small.
inline double coverage_under_se_ratio(double ratio, double alpha) {
  if (!(ratio >= 1.0)) throw std::invalid_argument("coverage_under_se_ratio requires ratio >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("coverage_under_se_ratio requires alpha in (0, 1)");
  }
  return 2.0 * distkit::normal_cdf(distkit::normal_quantile(1.0 - alpha / 2.0) / ratio) - 1.0;
}

}  // namespace demlab::clusterse
