#pragma once

// Ranking under lower uncertainty: theoretical moments of the mean true value
// of the top-M items selected by noisy estimates, the gain from reducing the
// estimation noise, rank-coincidence probabilities, the Sharpe ratio, and the
// matching generative Monte Carlo sampler.
//
// Closed forms exist for the normal value family only; the Student-t family
// is supported by simulate() alone and the theoretical operations reject it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "demlab/common.hpp"
#include "demlab/distkit.hpp"
#include "demlab/simlab.hpp"

namespace demlab::rulu {

enum class NoiseLevel { high, low };

struct RuluParams {
  long long n_items = 1;           // N, candidate items
  long long capacity = 1;          // M, items selected
  double mean_value = 0.0;         // mu_V
  double mean_noise = 0.0;         // mu_eps
  double var_value = 1.0;          // sigma^2_V
  double var_noise_high = 1.0;     // sigma^2_1
  double var_noise_low = 1.0;      // sigma^2_2  (<= sigma^2_1)
  std::optional<double> t_dof;     // empty: normal family; set: Student-t(nu)
  double quantile_correction = 0.4;  // c, rank-to-quantile correction

  double noise_var(NoiseLevel level) const {
    return level == NoiseLevel::high ? var_noise_high : var_noise_low;
  }

  void validate() const {
    if (n_items < 1) throw std::invalid_argument("rulu: n_items must be >= 1");
    if (capacity < 1 || capacity > n_items) {
      throw std::invalid_argument("rulu: capacity must satisfy 1 <= M <= N");
    }
    if (!(var_value >= 0.0)) throw std::invalid_argument("rulu: var_value must be >= 0");
    if (!(var_noise_high > 0.0) || !(var_noise_low > 0.0)) {
      throw std::invalid_argument("rulu: noise variances must be > 0");
    }
    if (var_noise_low > var_noise_high) {
      throw std::invalid_argument("rulu: var_noise_low must not exceed var_noise_high");
    }
    if (t_dof && !(*t_dof > 2.0)) {
      throw std::invalid_argument("rulu: Student-t family requires dof > 2");
    }
  }
};

struct RuluMoments {
  double expected_w_high = 0.0;
  double expected_w_low = 0.0;
  double expected_gain = 0.0;  // E(D)
  double var_w_high = 0.0;
  double var_w_low = 0.0;
  double cov_w = 0.0;
  double var_gain = 0.0;  // Var(D)
  int degenerate_fit_rows = 0;   // rank-coincidence fits that fell back
  bool covariance_capped = false;
};

namespace detail {

inline void require_closed_form(const RuluParams& p, const char* op) {
  p.validate();
  if (p.t_dof) {
    throw std::invalid_argument(std::string(op) +
                                ": closed forms exist for the normal family only; "
                                "use simulate() for the Student-t family");
  }
  if (!(p.var_value > 0.0)) {
    throw numeric_error(std::string(op) +
                        ": var_value = 0 degenerates the value-estimate correlation");
  }
}

inline void require_rank(long long r, long long n, const char* op) {
  if (r < 1 || r > n) {
    throw std::invalid_argument(std::string(op) + ": rank out of range 1..N");
  }
}

inline double rank_quantile(long long r, long long n, double c) {
  return (static_cast<double>(r) - c) / (static_cast<double>(n) - 2.0 * c + 1.0);
}

/// Mean of the corrected rank quantiles of the top M ranks.
inline double mean_top_quantile(long long n, long long m, double c) {
  double s = 0.0;
  for (long long r = n - m + 1; r <= n; ++r) {
    s += distkit::normal_quantile(rank_quantile(r, n, c));
  }
  return s / static_cast<double>(m);
}

/// Variance of the r-th standard-normal order statistic (first-order form).
inline double order_stat_var_z(long long r, long long n) {
  const double nn = static_cast<double>(n);
  const double rr = static_cast<double>(r);
  const double q = distkit::normal_quantile(rr / (nn + 1.0));
  const double f = distkit::normal_pdf(q);
  return rr * (nn - rr + 1.0) / ((nn + 1.0) * (nn + 1.0) * (nn + 2.0)) / (f * f);
}

/// Covariance of the r-th and s-th standard-normal order statistics, r <= s.
inline double order_stat_cov_z(long long r, long long s, long long n) {
  const double nn = static_cast<double>(n);
  const double qr = distkit::normal_quantile(static_cast<double>(r) / (nn + 1.0));
  const double qs = distkit::normal_quantile(static_cast<double>(s) / (nn + 1.0));
  return static_cast<double>(r) * (nn - static_cast<double>(s) + 1.0) /
         ((nn + 1.0) * (nn + 1.0) * (nn + 2.0)) /
         (distkit::normal_pdf(qr) * distkit::normal_pdf(qs));
}

}  // namespace detail

/// E(E_(r)) under the given noise level.
inline double expected_order_stat(long long r, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "expected_order_stat");
  detail::require_rank(r, p.n_items, "expected_order_stat");
  const double total_var = p.var_value + p.noise_var(level);
  return p.mean_value + p.mean_noise +
         std::sqrt(total_var) *
             distkit::normal_quantile(detail::rank_quantile(r, p.n_items, p.quantile_correction));
}

/// E(V_I(r)): expected true value of the r-th ranked item.
inline double expected_concomitant(long long r, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "expected_concomitant");
  detail::require_rank(r, p.n_items, "expected_concomitant");
  const double total_var = p.var_value + p.noise_var(level);
  return p.mean_value +
         p.var_value / std::sqrt(total_var) *
             distkit::normal_quantile(detail::rank_quantile(r, p.n_items, p.quantile_correction));
}

/// E(W): mean expected true value over the selected top-M ranks.
inline double expected_selected_value(const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "expected_selected_value");
  const double total_var = p.var_value + p.noise_var(level);
  return p.mean_value + p.var_value / std::sqrt(total_var) *
                            detail::mean_top_quantile(p.n_items, p.capacity, p.quantile_correction);
}

/// E(D): expected gain from reducing the noise from the high to the low level.
inline double expected_gain(const RuluParams& p) {
  detail::require_closed_form(p, "expected_gain");
  const double factor = p.var_value / std::sqrt(p.var_value + p.var_noise_low) -
                        p.var_value / std::sqrt(p.var_value + p.var_noise_high);
  return factor * detail::mean_top_quantile(p.n_items, p.capacity, p.quantile_correction);
}

/// E(D)/E(W | high noise) for a zero-centred value distribution.
inline double relative_gain(const RuluParams& p) {
  detail::require_closed_form(p, "relative_gain");
  return std::sqrt((p.var_value + p.var_noise_high) / (p.var_value + p.var_noise_low)) - 1.0;
}

/// Var of the r-th order statistic of the estimated values.
inline double order_stat_var(long long r, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "order_stat_var");
  detail::require_rank(r, p.n_items, "order_stat_var");
  return (p.var_value + p.noise_var(level)) * detail::order_stat_var_z(r, p.n_items);
}

inline double order_stat_cov(long long r, long long s, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "order_stat_cov");
  detail::require_rank(r, p.n_items, "order_stat_cov");
  detail::require_rank(s, p.n_items, "order_stat_cov");
  if (r > s) std::swap(r, s);
  if (r == s) return order_stat_var(r, p, level);
  return (p.var_value + p.noise_var(level)) * detail::order_stat_cov_z(r, s, p.n_items);
}

/// Var(V_I(r)) via the law of total variance.
inline double concomitant_var(long long r, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "concomitant_var");
  detail::require_rank(r, p.n_items, "concomitant_var");
  const double sv = p.var_value;
  const double se = p.noise_var(level);
  return se * sv / (sv + se) + sv * sv / (sv + se) * detail::order_stat_var_z(r, p.n_items);
}

/// Cov(V_I(r), V_I(s)) within one noise level (equals the variance at r == s).
inline double concomitant_cov(long long r, long long s, const RuluParams& p, NoiseLevel level) {
  detail::require_closed_form(p, "concomitant_cov");
  detail::require_rank(r, p.n_items, "concomitant_cov");
  detail::require_rank(s, p.n_items, "concomitant_cov");
  if (r > s) std::swap(r, s);
  if (r == s) return concomitant_var(r, p, level);
  const double sv = p.var_value;
  const double se = p.noise_var(level);
  return sv * sv / (sv + se) * detail::order_stat_cov_z(r, s, p.n_items);
}

/// Cov(H_(r), L_(s)) across the two noise levels.
inline double cross_order_stat_cov(long long r, long long s, const RuluParams& p) {
  detail::require_closed_form(p, "cross_order_stat_cov");
  detail::require_rank(r, p.n_items, "cross_order_stat_cov");
  detail::require_rank(s, p.n_items, "cross_order_stat_cov");
  const double sv = p.var_value;
  const double covz = r <= s ? detail::order_stat_cov_z(r, s, p.n_items)
                             : detail::order_stat_cov_z(s, r, p.n_items);
  return sv * sv / std::sqrt((sv + p.var_noise_high) * (sv + p.var_noise_low)) * covz;
}

/// Beta parameters of the fitted rank-coincidence marginal for rank r of the
/// high-noise ranking. Throws numeric_error when the moment fit degenerates.
inline distkit::BetaParams rank_coincidence_fit(long long r, const RuluParams& p) {
  detail::require_closed_form(p, "rank_coincidence_fit");
  detail::require_rank(r, p.n_items, "rank_coincidence_fit");
  const double sv = p.var_value;
  const double s1 = p.var_noise_high;
  const double s2 = p.var_noise_low;
  const double base = p.mean_value + p.mean_noise;
  // Moments of L_I(r): the low-noise estimate attached to the item that holds
  // rank r in the high-noise ranking.
  const double e_lir =
      base + sv / std::sqrt(sv + s1) *
                 distkit::normal_quantile(detail::rank_quantile(r, p.n_items, p.quantile_correction));
  const double var_lir =
      s1 * sv / (sv + s1) + sv * sv / (sv + s1) * detail::order_stat_var_z(r, p.n_items) + s2;
  // Normalised by the marginal law of L_j, then through the Gaussian-integral
  // identities for E(Phi(mu + sigma Z)) and its variance (Owen's T).
  const double mu_star = (e_lir - base) / std::sqrt(sv + s2);
  const double var_star = var_lir / (sv + s2);
  const double g = mu_star / std::sqrt(1.0 + var_star);
  const double mu_p = distkit::normal_cdf(g);
  const double var_p = mu_p * (1.0 - mu_p) -
                       2.0 * distkit::owens_t(g, 1.0 / std::sqrt(1.0 + 2.0 * var_star));
  if (!(var_p > 0.0) || !(mu_p > 0.0 && mu_p < 1.0)) {
    throw numeric_error("rank_coincidence_fit: degenerate success-probability moments at rank " +
                        std::to_string(r));
  }
  const double alpha = ((1.0 - mu_p) / var_p - 1.0 / mu_p) * mu_p * mu_p;
  const double beta = alpha * (1.0 / mu_p - 1.0);
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw numeric_error("rank_coincidence_fit: moment fit gave non-positive beta parameters at rank " +
                        std::to_string(r));
  }
  return {alpha, beta};
}

namespace detail {

/// Full beta-binomial row pmf over k = 0..n computed by the term recurrence.
inline std::vector<double> beta_binomial_row(long long n, const distkit::BetaParams& bp) {
  std::vector<double> row(static_cast<std::size_t>(n) + 1);
  if (n == 0) {
    row[0] = 1.0;
    return row;
  }
  // pmf(0) = B(alpha, n + beta) / B(alpha, beta)
  double v = std::exp(distkit::detail::lbeta(bp.alpha, static_cast<double>(n) + bp.beta) -
                      distkit::detail::lbeta(bp.alpha, bp.beta));
  for (long long k = 0; k <= n; ++k) {
    row[static_cast<std::size_t>(k)] = v;
    if (k < n) {
      v *= (static_cast<double>(n - k) * (bp.alpha + static_cast<double>(k))) /
           (static_cast<double>(k + 1) * (bp.beta + static_cast<double>(n - k - 1)));
    }
  }
  return row;
}

}  // namespace detail

/// P(I(r) = J(s)): probability that the r-th ranked high-noise estimate and
/// the s-th ranked low-noise estimate were generated by the same item.
inline double rank_coincidence_prob(long long r, long long s, const RuluParams& p) {
  detail::require_rank(s, p.n_items, "rank_coincidence_prob");
  const auto fit = rank_coincidence_fit(r, p);
  return distkit::beta_binomial_pmf(s - 1, p.n_items - 1, fit);
}

/// Fitted marginal P(I(r) = J(s)) for all s = 1..N (index s-1 in the result).
inline std::vector<double> rank_coincidence_row(long long r, const RuluParams& p) {
  const auto fit = rank_coincidence_fit(r, p);
  return detail::beta_binomial_row(p.n_items - 1, fit);
}

/// Cov(V_I(r), V_J(s)) across noise levels: the rank-coincidence-weighted
/// mixture of the same-item and different-item branches.
inline double cross_concomitant_cov(long long r, long long s, const RuluParams& p) {
  detail::require_closed_form(p, "cross_concomitant_cov");
  detail::require_rank(r, p.n_items, "cross_concomitant_cov");
  detail::require_rank(s, p.n_items, "cross_concomitant_cov");
  const double sv = p.var_value;
  const double s1 = p.var_noise_high;
  const double s2 = p.var_noise_low;
  const double d3 = sv * s1 + sv * s2 + s1 * s2;
  const double same = sv * s1 * s2 / d3 +
                      (sv * s1 / d3) * (sv * s1 / d3) * order_stat_var(s, p, NoiseLevel::low) +
                      (sv / (sv + s1)) * (sv / (sv + s1)) * order_stat_var(r, p, NoiseLevel::high);
  const double diff = sv / (sv + s1) * sv / (sv + s2) * cross_order_stat_cov(r, s, p);
  double prob;
  try {
    prob = rank_coincidence_prob(r, s, p);
  } catch (const numeric_error&) {
    prob = 0.0;  // fall back to the different-item branch only
  }
  return prob * same + (1.0 - prob) * diff;
}

/// Full moment bundle for the gain D = W_low - W_high.
inline RuluMoments gain_variance(const RuluParams& p) {
  detail::require_closed_form(p, "gain_variance");
  RuluMoments m;
  const long long n = p.n_items;
  const long long lo = n - p.capacity + 1;
  const double mm = static_cast<double>(p.capacity);
  const double sv = p.var_value;
  const double s1 = p.var_noise_high;
  const double s2 = p.var_noise_low;

  m.expected_w_high = expected_selected_value(p, NoiseLevel::high);
  m.expected_w_low = expected_selected_value(p, NoiseLevel::low);
  m.expected_gain = m.expected_w_low - m.expected_w_high;

  // Standardised order-statistic variances/covariances over the selected ranks.
  std::vector<double> vz(static_cast<std::size_t>(p.capacity));
  for (long long r = lo; r <= n; ++r) {
    vz[static_cast<std::size_t>(r - lo)] = detail::order_stat_var_z(r, n);
  }
  std::vector<double> covz(static_cast<std::size_t>(p.capacity) * static_cast<std::size_t>(p.capacity));
  const auto cz = [&](long long r, long long s) -> double& {
    return covz[static_cast<std::size_t>(r - lo) * static_cast<std::size_t>(p.capacity) +
                static_cast<std::size_t>(s - lo)];
  };
  for (long long r = lo; r <= n; ++r) {
    cz(r, r) = vz[static_cast<std::size_t>(r - lo)];
    for (long long s = r + 1; s <= n; ++s) {
      const double c = detail::order_stat_cov_z(r, s, n);
      cz(r, s) = c;
      cz(s, r) = c;
    }
  }

  const auto var_w = [&](double se) {
    double acc = 0.0;
    for (long long r = lo; r <= n; ++r) {
      acc += se * sv / (sv + se) + sv * sv / (sv + se) * vz[static_cast<std::size_t>(r - lo)];
      for (long long s = r + 1; s <= n; ++s) {
        acc += 2.0 * sv * sv / (sv + se) * cz(r, s);
      }
    }
    return acc / (mm * mm);
  };
  m.var_w_high = var_w(s1);
  m.var_w_low = var_w(s2);

  const double d3 = sv * s1 + sv * s2 + s1 * s2;
  const double same_const = sv * s1 * s2 / d3;
  const double w_low = (sv * s1 / d3) * (sv * s1 / d3) * (sv + s2);
  const double w_high = (sv / (sv + s1)) * (sv / (sv + s1)) * (sv + s1);
  const double diff_scale =
      sv / (sv + s1) * sv / (sv + s2) * sv * sv / std::sqrt((sv + s1) * (sv + s2));

  double cov = 0.0;
  for (long long r = lo; r <= n; ++r) {
    std::vector<double> row;
    bool have_fit = true;
    try {
      row = rank_coincidence_row(r, p);
    } catch (const numeric_error&) {
      have_fit = false;
      ++m.degenerate_fit_rows;
    }
    const double var_h_r = w_high * vz[static_cast<std::size_t>(r - lo)];
    for (long long s = lo; s <= n; ++s) {
      const double diff = diff_scale * cz(r, s);
      if (!have_fit) {
        cov += diff;
        continue;
      }
      const double prob = row[static_cast<std::size_t>(s - 1)];
      const double same = same_const + w_low * vz[static_cast<std::size_t>(s - lo)] + var_h_r;
      cov += prob * same + (1.0 - prob) * diff;
    }
  }
  cov /= mm * mm;

  // The first-order approximations can push the cross-covariance slightly past
  // the bound implied by Var(D) >= 0 when N and M are tiny; cap it there.
  const double cap = 0.5 * (m.var_w_high + m.var_w_low);
  if (cov > cap) {
    cov = cap;
    m.covariance_capped = true;
  }
  m.cov_w = cov;
  m.var_gain = m.var_w_high + m.var_w_low - 2.0 * cov;
  return m;
}

/// Risk-adjusted excess gain (E(D) - risk_free) / sqrt(Var(D)).
inline double sharpe_ratio(double expected_gain_value, double var_gain, double risk_free) {
  if (!(var_gain > 0.0)) {
    throw std::invalid_argument("sharpe_ratio requires var_gain > 0");
  }
  return (expected_gain_value - risk_free) / std::sqrt(var_gain);
}

struct SimOptions {
  std::uint64_t runs = 10000;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  double partial_noise_fraction = 1.0;  // share of items measured at the low noise level
  long long rank_high = 0;              // recorded rank r for H / V_I(r); 0 = N
  long long rank_low = 0;               // recorded rank s for L / V_J(s); 0 = N
};

struct SimResult {
  std::vector<double> w_high;            // W under the high noise level
  std::vector<double> w_low;             // W under the low noise level
  std::vector<double> gain;              // D = w_low - w_high
  std::vector<double> order_stat_high;   // H_(r)
  std::vector<double> order_stat_low;    // L_(s)
  std::vector<double> concomitant_high;  // V_I(r)
  std::vector<double> concomitant_low;   // V_J(s)
};

/// Generative four-step sampler: draw values, rank the high-noise estimates,
/// record the selected true values, repeat with the low-noise estimates, and
/// take the difference. Deterministic for a given (seed, runs).
inline SimResult simulate(const RuluParams& p, const SimOptions& opt) {
  p.validate();
  if (opt.runs < 1) throw std::invalid_argument("simulate requires runs >= 1");
  if (!(opt.partial_noise_fraction >= 0.0 && opt.partial_noise_fraction <= 1.0)) {
    throw std::invalid_argument("simulate requires partial_noise_fraction in [0, 1]");
  }
  const long long n = p.n_items;
  const long long m = p.capacity;
  const long long r_high = opt.rank_high == 0 ? n : opt.rank_high;
  const long long r_low = opt.rank_low == 0 ? n : opt.rank_low;
  detail::require_rank(r_high, n, "simulate");
  detail::require_rank(r_low, n, "simulate");
  const long long k_low = std::llround(opt.partial_noise_fraction * static_cast<double>(n));
  const double sd_v = std::sqrt(p.var_value);
  const double sd_1 = std::sqrt(p.var_noise_high);
  const double sd_2 = std::sqrt(p.var_noise_low);
  const double t_scale = p.t_dof ? std::sqrt((*p.t_dof - 2.0) / *p.t_dof) : 1.0;

  struct RunSample {
    double w1, w2, d, hr, ls, vir, vjs;
  };

  const auto one_run = [&](std::uint64_t, simlab::Rng& rng) -> RunSample {
    const auto draw = [&](double sd) {
      return p.t_dof ? sd * t_scale * rng.student_t(*p.t_dof) : sd * rng.normal();
    };
    std::vector<double> value(static_cast<std::size_t>(n));
    std::vector<double> high(static_cast<std::size_t>(n));
    std::vector<double> low(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) value[i] = p.mean_value + draw(sd_v);
    for (long long i = 0; i < n; ++i) high[i] = value[i] + p.mean_noise + draw(sd_1);
    for (long long i = 0; i < n; ++i) {
      low[i] = value[i] + p.mean_noise + draw(i < k_low ? sd_2 : sd_1);
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    const auto pick = [&](const std::vector<double>& est, long long rank, double& stat,
                          double& conc) {
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) { return est[a] < est[b]; });
      stat = est[idx[static_cast<std::size_t>(rank - 1)]];
      conc = value[idx[static_cast<std::size_t>(rank - 1)]];
      double top = 0.0;
      for (long long j = n - m; j < n; ++j) top += value[idx[static_cast<std::size_t>(j)]];
      return top / static_cast<double>(m);
    };
    RunSample s{};
    s.w1 = pick(high, r_high, s.hr, s.vir);
    s.w2 = pick(low, r_low, s.ls, s.vjs);
    s.d = s.w2 - s.w1;
    return s;
  };

  const auto rows = simlab::run_collect<RunSample>(opt.seed, opt.runs, opt.workers, one_run);
  SimResult out;
  out.w_high.reserve(rows.size());
  out.w_low.reserve(rows.size());
  out.gain.reserve(rows.size());
  out.order_stat_high.reserve(rows.size());
  out.order_stat_low.reserve(rows.size());
  out.concomitant_high.reserve(rows.size());
  out.concomitant_low.reserve(rows.size());
  for (const auto& s : rows) {
    out.w_high.push_back(s.w1);
    out.w_low.push_back(s.w2);
    out.gain.push_back(s.d);
    out.order_stat_high.push_back(s.hr);
    out.order_stat_low.push_back(s.ls);
    out.concomitant_high.push_back(s.vir);
    out.concomitant_low.push_back(s.vjs);
  }
  return out;
}

}  // namespace demlab::rulu
