#pragma once

// Sequential and Bayesian monitors: Wald's SPRT, the two-sample mixture SPRT
// with always-valid p-values, the Bayes-factor test with its effective-sample-
// size decomposition, checkpoint replay, and cross-experiment hyperparameter
// estimation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "demlab/checkpoint.hpp"
#include "demlab/common.hpp"
#include "demlab/distkit.hpp"
#include "demlab/testkit.hpp"

namespace demlab::seqkit {

enum class SprtDecision { accept_h1, accept_h0, continue_sampling };

/// Wald sequential probability ratio test on a cumulative log-likelihood sum.
struct SprtState {
  double log_likelihood_sum = 0.0;
  double upper_boundary = 0.0;  // accept H1 at or above
  double lower_boundary = 0.0;  // accept H0 at or below
  long long steps = 0;
};

inline SprtState make_sprt(double alpha, double beta) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("make_sprt requires alpha, beta in (0, 1)");
  }
  SprtState s;
  s.upper_boundary = std::log((1.0 - beta) / alpha);
  s.lower_boundary = std::log(beta / (1.0 - alpha));
  return s;
}

inline SprtDecision sprt_step(SprtState& state, double log_likelihood_ratio_increment) {
  if (!std::isfinite(log_likelihood_ratio_increment)) {
    throw std::invalid_argument("sprt_step requires a finite increment");
  }
  state.log_likelihood_sum += log_likelihood_ratio_increment;
  ++state.steps;
  if (state.log_likelihood_sum >= state.upper_boundary) return SprtDecision::accept_h1;
  if (state.log_likelihood_sum <= state.lower_boundary) return SprtDecision::accept_h0;
  return SprtDecision::continue_sampling;
}

/// Two-sample mixture SPRT state. The p value is the running minimum of the
/// reciprocal statistic, capped at one, which makes it monotone non-increasing
/// and always valid under the null.
struct MsprtState {
  long long n = 0;           // paired observations so far
  double lambda = 1.0;       // mixture likelihood ratio
  double p_running = 1.0;
  double tau2 = 1.0;         // mixing-prior variance
  double theta0 = 0.0;
  double var_sum = 1.0;      // sigma_X^2 + sigma_Y^2 (plug-in allowed)
  double alpha = 0.05;
};

inline MsprtState make_msprt(double tau2, double theta0, double alpha) {
  if (!(tau2 > 0.0)) throw std::invalid_argument("make_msprt requires tau2 > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("make_msprt requires alpha in (0, 1)");
  MsprtState s;
  s.tau2 = tau2;
  s.theta0 = theta0;
  s.alpha = alpha;
  return s;
}

/// Advances the monitor to the cumulative means at n pairs. `var_sum` is the
/// (plug-in) sum of the two response variances at this checkpoint.
inline MsprtState msprt_update(MsprtState state, double mean_a_n, double mean_b_n, long long n,
                               double var_sum) {
  if (n <= state.n) throw std::invalid_argument("msprt_update requires strictly increasing n");
  if (!(var_sum > 0.0)) throw std::invalid_argument("msprt_update requires var_sum > 0");
  const double nn = static_cast<double>(n);
  const double dev = mean_b_n - mean_a_n - state.theta0;
  const double denom = var_sum + nn * state.tau2;
  state.lambda = std::sqrt(var_sum / denom) *
                 std::exp(nn * nn * state.tau2 * dev * dev / (2.0 * var_sum * denom));
  state.p_running = std::min(state.p_running, std::min(1.0, 1.0 / state.lambda));
  state.n = n;
  state.var_sum = var_sum;
  return state;
}

inline MsprtState msprt_update(MsprtState state, double mean_a_n, double mean_b_n, long long n) {
  return msprt_update(state, mean_a_n, mean_b_n, n, state.var_sum);
}

inline bool msprt_rejects(const MsprtState& state) { return state.p_running < state.alpha; }

/// Bayes-factor test state built from the Wald decomposition.
struct BayesState {
  long long n = 0;
  long long m = 0;
  double delta = 0.0;        // standardised effect statistic
  double effective_n = 0.0;  // 1 / (1/n + 1/m)
  double v2 = 0.0;           // prior variance of the standardised effect
  double prior_h0 = 0.5;
  double bf10 = 1.0;
  double posterior_h0 = 0.5;
};

inline BayesState bayes_update(const testkit::SampleSummary& a, const testkit::SampleSummary& b,
                               double theta0, double v2, double prior_h0) {
  if (a.count < 2 || b.count < 2) {
    throw std::invalid_argument("bayes_update requires at least 2 observations per group");
  }
  if (!(a.variance > 0.0) || !(b.variance > 0.0)) {
    throw numeric_error("bayes_update: zero plug-in variances");
  }
  if (!(v2 > 0.0)) throw std::invalid_argument("bayes_update requires v2 > 0");
  if (!(prior_h0 > 0.0 && prior_h0 < 1.0)) {
    throw std::invalid_argument("bayes_update requires prior_h0 in (0, 1)");
  }
  const double n = static_cast<double>(a.count);
  const double m = static_cast<double>(b.count);
  const double inv_e = 1.0 / n + 1.0 / m;
  BayesState s;
  s.n = a.count;
  s.m = b.count;
  s.effective_n = 1.0 / inv_e;
  s.v2 = v2;
  s.prior_h0 = prior_h0;
  s.delta = (b.mean - a.mean) / std::sqrt((a.variance / n + b.variance / m) / inv_e);
  const auto log_normal_pdf = [](double x, double mu, double var) {
    const double d = x - mu;
    return -0.5 * std::log(2.0 * 3.14159265358979323846 * var) - d * d / (2.0 * var);
  };
  const double log_bf = log_normal_pdf(s.delta, theta0, v2 + inv_e) -
                        log_normal_pdf(s.delta, theta0, inv_e);
  s.bf10 = std::exp(log_bf);
  // posterior odds of H1 over H0, then back to a posterior probability
  const double log_odds = log_bf + std::log((1.0 - prior_h0) / prior_h0);
  s.posterior_h0 = 1.0 / (1.0 + std::exp(log_odds));
  return s;
}

/// End-of-experiment statistics an estimation run collates per experiment.
struct ExperimentEnd {
  double delta = 0.0;     // final standardised effect statistic
  double cohens_d = 0.0;  // final standardised effect size
};

struct HyperparamEstimate {
  double v2_hat = 0.0;          // prior variance of the standardised effect
  double tau2_scale_hat = 0.0;  // applied at test time as tau2 = scale * running variance
  bool degenerate = false;
};

/// Moment estimates of the effect-size priors over several experiments.
inline HyperparamEstimate estimate_hyperparams(std::span<const ExperimentEnd> ends) {
  if (ends.size() < 2) {
    throw std::invalid_argument("estimate_hyperparams requires >= 2 experiments");
  }
  double md = 0.0, mc = 0.0;
  for (const auto& e : ends) {
    md += e.delta;
    mc += e.cohens_d;
  }
  md /= static_cast<double>(ends.size());
  mc /= static_cast<double>(ends.size());
  double vd = 0.0, vc = 0.0;
  for (const auto& e : ends) {
    vd += (e.delta - md) * (e.delta - md);
    vc += (e.cohens_d - mc) * (e.cohens_d - mc);
  }
  HyperparamEstimate est;
  est.v2_hat = vd / static_cast<double>(ends.size() - 1);
  est.tau2_scale_hat = vc / static_cast<double>(ends.size() - 1);
  est.degenerate = !(est.v2_hat > 0.0) || !(est.tau2_scale_hat > 0.0);
  return est;
}

enum class Monitor { msprt, bayes, fixed_t };

struct ReplayConfig {
  Monitor monitor = Monitor::msprt;
  double alpha = 0.05;
  double theta0 = 0.0;
  std::optional<double> tau2;       // fixed mixing variance; otherwise scaled
  double tau2_scale = 1.0;          // tau2 = scale * running control variance
  double v2 = 1.0;                  // Bayes prior variance
  double prior_h0 = 0.75;
  double posterior_reject_threshold = 0.5;
  std::optional<std::vector<double>> alpha_schedule;  // per-checkpoint alpha
};

struct TrajectoryPoint {
  long long time_index = 0;
  long long n = 0;  // control count used
  long long m = 0;  // treatment count used
  double statistic = 0.0;
  double p_or_posterior = 1.0;
  bool reject = false;
};

struct ReplayResult {
  std::vector<TrajectoryPoint> trajectory;
  bool final_reject = false;
};

/// A two-variant experiment stream: checkpoints must share time indexes.
struct ExperimentStream {
  CheckpointSeries control;
  CheckpointSeries treatment;

  void validate() const {
    control.validate();
    treatment.validate();
    if (control.rows.size() != treatment.rows.size()) {
      throw input_error("experiment stream: variants have different checkpoint counts");
    }
    for (std::size_t i = 0; i < control.rows.size(); ++i) {
      if (control.rows[i].time_index != treatment.rows[i].time_index) {
        throw input_error("experiment stream: variants disagree on time_index at row " +
                          std::to_string(i + 1));
      }
    }
  }
};

/// Replays a monitor over a checkpoint stream. Pure: same input, same output.
inline ReplayResult replay(const ExperimentStream& stream, const ReplayConfig& config) {
  stream.validate();
  if (config.alpha_schedule && config.alpha_schedule->size() != stream.control.rows.size()) {
    throw input_error("replay: alpha schedule length must match the checkpoint count");
  }
  ReplayResult result;
  result.trajectory.reserve(stream.control.rows.size());

  MsprtState msprt;
  bool msprt_started = false;
  bool ever_rejected = false;
  for (std::size_t i = 0; i < stream.control.rows.size(); ++i) {
    const auto& a = stream.control.rows[i];
    const auto& b = stream.treatment.rows[i];
    const double alpha =
        config.alpha_schedule ? (*config.alpha_schedule)[i] : config.alpha;
    TrajectoryPoint pt;
    pt.time_index = a.time_index;
    switch (config.monitor) {
      case Monitor::msprt: {
        // the paired reduction assumes equal arrival; take the smaller count
        const long long n = std::min(a.count_c, b.count_c);
        pt.n = n;
        pt.m = n;
        const double var_sum = a.variance_c + b.variance_c;
        if (n < 2 || !(var_sum > 0.0) || (msprt_started && n <= msprt.n)) {
          pt.statistic = msprt_started ? msprt.lambda : 1.0;
          pt.p_or_posterior = msprt_started ? msprt.p_running : 1.0;
        } else {
          if (!msprt_started) {
            const double tau2 =
                config.tau2 ? *config.tau2 : config.tau2_scale * a.variance_c;
            msprt = make_msprt(std::max(tau2, 1e-300), config.theta0, alpha);
            msprt_started = true;
          }
          msprt = msprt_update(msprt, a.mean_c, b.mean_c, n, var_sum);
          pt.statistic = msprt.lambda;
          pt.p_or_posterior = msprt.p_running;
        }
        pt.reject = pt.p_or_posterior < alpha;
        break;
      }
      case Monitor::bayes: {
        pt.n = a.count_c;
        pt.m = b.count_c;
        if (a.count_c < 2 || b.count_c < 2 || !(a.variance_c > 0.0) || !(b.variance_c > 0.0)) {
          pt.statistic = 0.0;
          pt.p_or_posterior = config.prior_h0;
          pt.reject = false;
        } else {
          const auto s = bayes_update({a.count_c, a.mean_c, a.variance_c},
                                      {b.count_c, b.mean_c, b.variance_c}, config.theta0,
                                      config.v2, config.prior_h0);
          pt.statistic = s.delta;
          pt.p_or_posterior = s.posterior_h0;
          pt.reject = s.posterior_h0 < config.posterior_reject_threshold;
        }
        break;
      }
      case Monitor::fixed_t: {
        pt.n = a.count_c;
        pt.m = b.count_c;
        if (a.count_c < 2 || b.count_c < 2 ||
            (!(a.variance_c > 0.0) && !(b.variance_c > 0.0))) {
          pt.statistic = 0.0;
          pt.p_or_posterior = 1.0;
          pt.reject = false;
        } else {
          const auto out = testkit::welch_t_test({a.count_c, a.mean_c, a.variance_c},
                                                 {b.count_c, b.mean_c, b.variance_c},
                                                 config.theta0, testkit::Alternative::two_sided,
                                                 alpha);
          pt.statistic = out.statistic;
          pt.p_or_posterior = *out.p_value;
          pt.reject = out.reject;
        }
        break;
      }
    }
    ever_rejected = ever_rejected || pt.reject;
    result.trajectory.push_back(pt);
  }
  // sequential monitors stop at first rejection; the fixed-horizon reference
  // and the Bayes posterior decide at the end of the stream
  switch (config.monitor) {
    case Monitor::msprt:
      result.final_reject = ever_rejected;
      break;
    case Monitor::bayes:
    case Monitor::fixed_t:
      result.final_reject = result.trajectory.empty() ? false : result.trajectory.back().reject;
      break;
  }
  return result;
}

/// 2x2 verdict counts of a monitor against the fixed-horizon reference.
/// Monitor-rejects with reference-not-reject is the quasi type I cell.
struct ConfusionMatrix {
  long long both_reject = 0;
  long long monitor_only = 0;  // quasi type I
  long long reference_only = 0;
  long long neither = 0;
};

inline ConfusionMatrix confusion_matrix(const std::vector<bool>& monitor_rejects,
                                        const std::vector<bool>& reference_rejects) {
  if (monitor_rejects.size() != reference_rejects.size()) {
    throw std::invalid_argument("confusion_matrix requires equally many verdicts");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < monitor_rejects.size(); ++i) {
    if (monitor_rejects[i] && reference_rejects[i]) {
      ++cm.both_reject;
    } else if (monitor_rejects[i]) {
      ++cm.monitor_only;
    } else if (reference_rejects[i]) {
      ++cm.reference_only;
    } else {
      ++cm.neither;
    }
  }
  return cm;
}

}  // namespace demlab::seqkit
