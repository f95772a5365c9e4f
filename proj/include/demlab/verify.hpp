#pragma once

// Monte Carlo calibration harness for the ranking-under-lower-uncertainty
// closed forms: random-parameter trials comparing each theoretical quantity
// against a 95% interval built from simulation, mirroring the empirical
// check the formulas were originally validated with. Means and variances use
// bootstrap intervals over the simulated runs; the cross-level concomitant
// covariance uses the empirical distribution of batch covariances, since
// within-run resampling would not preserve the ranking information.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "demlab/rulu.hpp"
#include "demlab/simlab.hpp"

namespace demlab::rulu {

struct CalibrationConfig {
  std::uint64_t trials = 300;
  std::uint64_t runs = 10000;                // simulation runs per trial
  std::uint64_t bootstrap_resamples = 2000;  // resamples for mean/variance CIs
  std::uint64_t cov_batches = 250;           // batch count for the covariance
  std::uint64_t cov_batch_size = 200;        // runs per covariance batch
  std::uint64_t seed = 0;
  double n_exp_lo = 1.0;  // N ~ 10^U(lo, hi)
  double n_exp_hi = 3.0;
  unsigned workers = 0;
};

struct CalibrationReport {
  std::uint64_t trials = 0;
  double frac_expected_w = 0.0;     // E(W) inside its bootstrap CI
  double frac_expected_gain = 0.0;  // E(D)
  double frac_var_w = 0.0;          // Var(W), a known slight underestimate
  double frac_cross_cov = 0.0;      // Cov(V_I(r), V_J(s)) inside the batch CI
};

namespace detail {

inline RuluParams draw_calibration_params(simlab::Rng& rng, double n_exp_lo, double n_exp_hi,
                                          long long* rank_high, long long* rank_low) {
  RuluParams p;
  p.n_items = std::max<long long>(
      2, static_cast<long long>(std::pow(10.0, n_exp_lo + (n_exp_hi - n_exp_lo) * rng.uniform())));
  const double m_frac = 0.01 + 0.79 * rng.uniform();
  p.capacity = std::max<long long>(
      1, static_cast<long long>(m_frac * static_cast<double>(p.n_items)));
  p.mean_value = -10.0 + 20.0 * rng.uniform();
  p.mean_noise = -10.0 + 20.0 * rng.uniform();
  const double sd_v = 0.3 + 9.7 * rng.uniform();
  const double sd_1 = 0.3 + 9.7 * rng.uniform();
  p.var_value = sd_v * sd_v;
  p.var_noise_high = sd_1 * sd_1;
  const double sd_2 = std::max(0.2, sd_1 * (0.1 + 0.89 * rng.uniform()));
  p.var_noise_low = std::min(sd_2 * sd_2, p.var_noise_high);
  const long long lo = p.n_items - p.capacity + 1;
  *rank_high = lo + static_cast<long long>(rng.below(static_cast<std::uint64_t>(p.capacity)));
  *rank_low = lo + static_cast<long long>(rng.below(static_cast<std::uint64_t>(p.capacity)));
  return p;
}

struct TripleCi {
  double w_lo, w_hi, d_lo, d_hi, var_lo, var_hi;
};

// One bootstrap pass over the (w, d) run samples covering all three
// statistics with shared resample indices.
inline TripleCi joint_bootstrap(const std::vector<double>& w, const std::vector<double>& d,
                                std::uint64_t resamples, std::uint64_t seed) {
  const std::uint64_t n = w.size();
  std::vector<double> mw(resamples), md(resamples), vw(resamples);
  simlab::Rng rng = simlab::rng_for(seed, 0x7472697 /* trip */);
  for (std::uint64_t b = 0; b < resamples; ++b) {
    double sw = 0.0, sw2 = 0.0, sd = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto k = rng.below(n);
      sw += w[k];
      sw2 += w[k] * w[k];
      sd += d[k];
    }
    const double nn = static_cast<double>(n);
    mw[b] = sw / nn;
    md[b] = sd / nn;
    vw[b] = (sw2 - sw * sw / nn) / (nn - 1.0);
  }
  const auto pick = [](std::vector<double>& xs, double q) {
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < xs.size() ? xs[i] * (1.0 - frac) + xs[i + 1] * frac : xs[i];
  };
  TripleCi ci{};
  ci.w_lo = pick(mw, 0.025);
  ci.w_hi = pick(mw, 0.975);
  ci.d_lo = pick(md, 0.025);
  ci.d_hi = pick(md, 0.975);
  ci.var_lo = pick(vw, 0.025);
  ci.var_hi = pick(vw, 0.975);
  return ci;
}

}  // namespace detail

inline CalibrationReport calibrate(const CalibrationConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("calibrate requires trials >= 1");
  CalibrationReport report;
  report.trials = cfg.trials;
  std::uint64_t in_w = 0, in_d = 0, in_var = 0, in_cov = 0;
  for (std::uint64_t t = 0; t < cfg.trials; ++t) {
    simlab::Rng rng = simlab::rng_for(cfg.seed, 0xCA11 + t);
    long long r = 0, s = 0;
    const auto p = detail::draw_calibration_params(rng, cfg.n_exp_lo, cfg.n_exp_hi, &r, &s);

    const double theory_w = expected_selected_value(p, NoiseLevel::high);
    const double theory_d = expected_gain(p);
    const auto moments = gain_variance(p);
    const double theory_cov = cross_concomitant_cov(r, s, p);

    SimOptions opt;
    opt.runs = cfg.runs;
    opt.seed = simlab::mix_seed({cfg.seed, 0xAAULL, t});
    opt.workers = cfg.workers;
    const auto sim = simulate(p, opt);
    const auto ci = detail::joint_bootstrap(sim.w_high, sim.gain, cfg.bootstrap_resamples,
                                            simlab::mix_seed({cfg.seed, 0xBBULL, t}));
    if (ci.w_lo <= theory_w && theory_w <= ci.w_hi) ++in_w;
    if (ci.d_lo <= theory_d && theory_d <= ci.d_hi) ++in_d;
    if (ci.var_lo <= moments.var_w_high && moments.var_w_high <= ci.var_hi) ++in_var;

    SimOptions cov_opt;
    cov_opt.runs = cfg.cov_batches * cfg.cov_batch_size;
    cov_opt.seed = simlab::mix_seed({cfg.seed, 0xCCULL, t});
    cov_opt.workers = cfg.workers;
    cov_opt.rank_high = r;
    cov_opt.rank_low = s;
    const auto cov_sim = simulate(p, cov_opt);
    std::vector<double> batch_covs(cfg.cov_batches);
    for (std::uint64_t b = 0; b < cfg.cov_batches; ++b) {
      double mx = 0.0, my = 0.0;
      const std::uint64_t base = b * cfg.cov_batch_size;
      for (std::uint64_t i = 0; i < cfg.cov_batch_size; ++i) {
        mx += cov_sim.concomitant_high[base + i];
        my += cov_sim.concomitant_low[base + i];
      }
      mx /= static_cast<double>(cfg.cov_batch_size);
      my /= static_cast<double>(cfg.cov_batch_size);
      double acc = 0.0;
      for (std::uint64_t i = 0; i < cfg.cov_batch_size; ++i) {
        acc += (cov_sim.concomitant_high[base + i] - mx) * (cov_sim.concomitant_low[base + i] - my);
      }
      batch_covs[b] = acc / static_cast<double>(cfg.cov_batch_size - 1);
    }
    std::sort(batch_covs.begin(), batch_covs.end());
    const auto pick = [&](double q) {
      const double pos = q * static_cast<double>(batch_covs.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      return i + 1 < batch_covs.size() ? batch_covs[i] * (1.0 - frac) + batch_covs[i + 1] * frac
                                       : batch_covs[i];
    };
    if (pick(0.025) <= theory_cov && theory_cov <= pick(0.975)) ++in_cov;
  }
  const double tt = static_cast<double>(cfg.trials);
  report.frac_expected_w = static_cast<double>(in_w) / tt;
  report.frac_expected_gain = static_cast<double>(in_d) / tt;
  report.frac_var_w = static_cast<double>(in_var) / tt;
  report.frac_cross_cov = static_cast<double>(in_cov) / tt;
  return report;
}

}  // namespace demlab::rulu
