#pragma once

// Evaluation framework for personalisation-strategy experiment designs:
// actual effect size and minimum detectable effect for the four standard
// setups, the superiority comparison, and the dilution / dual-control
// decision rules with their rearranged closed-form shortcuts.
//
// Group codes follow the treatment grid: users qualify for neither strategy
// (group 0), only strategy 1 (group 1), only strategy 2 (group 2), or both
// (group 3); response moments exist for each group-scenario cell C0..C3,
// I1, I2 and the two intersection treatments Iphi (strategy 1) / Ipsi
// (strategy 2). All random splits are 50/50.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "demlab/common.hpp"
#include "demlab/distkit.hpp"
#include "demlab/simlab.hpp"

namespace demlab::pse {

struct GroupStats {
  double mu = 0.0;
  double var = 1.0;
};

struct PseScenario {
  double n0 = 0.0;  // group sizes; treated as reals inside the closed forms
  double n1 = 0.0;
  double n2 = 0.0;
  double n3 = 0.0;
  GroupStats c0, c1, c2, c3, i1, i2, iphi, ipsi;
  double alpha = 0.05;
  double power_target = 0.8;

  void validate() const {
    for (const auto* g : {&c0, &c1, &c2, &c3, &i1, &i2, &iphi, &ipsi}) {
      if (!(g->var > 0.0)) throw std::invalid_argument("pse: all response variances must be > 0");
    }
    if (n0 < 0.0 || n1 < 0.0 || n2 < 0.0 || n3 < 0.0) {
      throw std::invalid_argument("pse: group sizes must be non-negative");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("pse: alpha must be in (0, 1)");
    if (!(power_target > alpha && power_target < 1.0)) {
      throw std::invalid_argument("pse: power_target must be in (alpha, 1)");
    }
  }
};

struct SetupEvaluation {
  int setup_id = 0;
  double actual_effect = 0.0;  // Delta
  double mde = 0.0;            // theta*
};

namespace detail {

inline double z_multiplier(const PseScenario& s) {
  return distkit::normal_quantile(1.0 - s.alpha / 2.0) -
         distkit::normal_quantile(1.0 - s.power_target);
}

inline double eta(const PseScenario& s) {
  return s.n1 * (s.c1.mu - s.i1.mu) + s.n2 * (s.i2.mu - s.c2.mu) + s.n3 * (s.ipsi.mu - s.iphi.mu);
}

inline double xi(const PseScenario& s) {
  return s.n1 * (s.i1.var + s.c1.var) + s.n2 * (s.c2.var + s.i2.var) +
         s.n3 * (s.iphi.var + s.ipsi.var);
}

}  // namespace detail

/// Closed-form actual effect and MDE of one of the four setups.
inline SetupEvaluation evaluate_setup(int setup_id, const PseScenario& s) {
  s.validate();
  const double z = detail::z_multiplier(s);
  const double n123 = s.n1 + s.n2 + s.n3;
  const double n_tot = s.n0 + n123;
  SetupEvaluation eval;
  eval.setup_id = setup_id;
  switch (setup_id) {
    case 1: {  // users in the intersection only
      if (s.n3 < 2.0) throw std::invalid_argument("setup 1 requires group 3 to have >= 2 users");
      eval.actual_effect = s.ipsi.mu - s.iphi.mu;
      eval.mde = z * std::sqrt(s.iphi.var / (s.n3 / 2.0) + s.ipsi.var / (s.n3 / 2.0));
      break;
    }
    case 2: {  // all samples
      if (n123 < 2.0) throw std::invalid_argument("setup 2 requires groups 1-3 to hold >= 2 users");
      eval.actual_effect = detail::eta(s) / n_tot;
      eval.mde = z * std::sqrt(2.0 * (2.0 * s.n0 * s.c0.var + detail::xi(s)) / (n_tot * n_tot));
      break;
    }
    case 3: {  // qualified users only
      if (n123 < 2.0) throw std::invalid_argument("setup 3 requires groups 1-3 to hold >= 2 users");
      eval.actual_effect = detail::eta(s) / n123;
      eval.mde = z * std::sqrt(2.0 * detail::xi(s) / (n123 * n123));
      break;
    }
    case 4: {  // dual control / multi-cell lift test
      if (s.n1 + s.n3 < 1.0) {
        throw std::invalid_argument("setup 4 requires strategy-1 qualifiers (groups 1 and 3)");
      }
      if (s.n2 + s.n3 < 1.0) {
        throw std::invalid_argument("setup 4 requires strategy-2 qualifiers (groups 2 and 3)");
      }
      const double a = s.n1 + s.n3;
      const double b = s.n2 + s.n3;
      eval.actual_effect = (s.n2 * (s.i2.mu - s.c2.mu) + s.n3 * (s.ipsi.mu - s.c3.mu)) / b -
                           (s.n1 * (s.i1.mu - s.c1.mu) + s.n3 * (s.iphi.mu - s.c3.mu)) / a;
      eval.mde = 2.0 * z *
                 std::sqrt((s.n1 * (s.c1.var + s.i1.var) + s.n3 * (s.c3.var + s.iphi.var)) / (a * a) +
                           (s.n2 * (s.c2.var + s.i2.var) + s.n3 * (s.c3.var + s.ipsi.var)) / (b * b));
      break;
    }
    default:
      throw std::invalid_argument("setup_id must be 1..4");
  }
  return eval;
}

enum class Verdict { a_superior, b_superior, neither };
enum class Criterion { dominance, net_gain, none };

struct CompareResult {
  Verdict verdict = Verdict::neither;
  Criterion criterion = Criterion::none;
  bool swapped = false;       // both effects were negative and were flipped
  bool likely_error = false;  // effects of opposite sign
};

/// Superiority of setup a over setup b: dominance first (higher effect and
/// lower MDE), then the net-gain criterion (effect gain beats the loss in
/// sensitivity). Negative pairs are sign-flipped; opposite signs are flagged.
inline CompareResult compare(const SetupEvaluation& a, const SetupEvaluation& b) {
  CompareResult res;
  double da = a.actual_effect;
  double db = b.actual_effect;
  if (da < 0.0 && db < 0.0) {
    da = -da;
    db = -db;
    res.swapped = true;
  } else if (da * db < 0.0) {
    res.likely_error = true;
    return res;
  }
  if (da > db && a.mde < b.mde) {
    res.verdict = Verdict::a_superior;
    res.criterion = Criterion::dominance;
  } else if (db > da && b.mde < a.mde) {
    res.verdict = Verdict::b_superior;
    res.criterion = Criterion::dominance;
  } else if (da - db > a.mde - b.mde) {
    res.verdict = Verdict::a_superior;
    res.criterion = Criterion::net_gain;
  } else if (db - da > b.mde - a.mde) {
    res.verdict = Verdict::b_superior;
    res.criterion = Criterion::net_gain;
  }
  return res;
}

/// Rearranged closed-form rules from the dilution and dual-control analyses,
/// exposed for the algebraic-equivalence checks and quick advice paths.
namespace rules {

/// Variance threshold on group 0 equivalent to theta*_S3 < theta*_S2.
inline double dilution_variance_threshold(const PseScenario& s) {
  const double n123 = s.n1 + s.n2 + s.n3;
  return detail::xi(s) * (s.n0 + 2.0 * n123) / (2.0 * n123 * n123);
}

inline bool dilution_criterion1(const PseScenario& s) {
  return dilution_variance_threshold(s) < s.c0.var;
}

/// Master inequality of the second criterion, signed form. Its truth is
/// equivalent to Delta_S3 - Delta_S2 > theta*_S3 - theta*_S2.
inline double dilution_master_lhs(const PseScenario& s) {
  const double n123 = s.n1 + s.n2 + s.n3;
  return n123 / s.n0 * std::sqrt(2.0 * s.n0 * s.c0.var + detail::xi(s));
}

inline double dilution_master_rhs(const PseScenario& s) {
  const double n123 = s.n1 + s.n2 + s.n3;
  const double n_tot = s.n0 + n123;
  return n_tot / s.n0 * std::sqrt(detail::xi(s)) -
         detail::eta(s) / (std::sqrt(2.0) * detail::z_multiplier(s));
}

inline bool dilution_master(const PseScenario& s) {
  return dilution_master_lhs(s) > dilution_master_rhs(s);
}

/// Trivial case of the master inequality: its right side is non-positive.
inline bool dilution_strong(const PseScenario& s) {
  const auto s3 = evaluate_setup(3, s);
  const double n_tot = s.n0 + s.n1 + s.n2 + s.n3;
  return n_tot / s.n0 * s3.mde <= s3.actual_effect;
}

/// Adequately-powered shortcut: the undiluted setup already detects its own
/// effect, so dilution can only hurt.
inline bool dilution_weak(const PseScenario& s) {
  const auto s3 = evaluate_setup(3, s);
  return s3.mde <= s3.actual_effect;
}

/// Squared fallback form, valid when the master right side is positive.
inline bool dilution_fallback(const PseScenario& s) {
  const auto s3 = evaluate_setup(3, s);
  const double z = detail::z_multiplier(s);
  const double ratio = (s.n1 + s.n2 + s.n3) / s.n0;
  const double first = s3.mde - s3.actual_effect + ratio * s3.mde;
  const double second = ratio * s3.mde;
  return 2.0 * s.c0.var / s.n0 > (first * first - second * second) / (2.0 * z * z);
}

/// Left and right sides of the full dual-control criterion-2 inequality;
/// LHS > RHS is equivalent to Delta_S4 - Delta_S3 > theta*_S4 - theta*_S3.
inline double dual_full_lhs(const PseScenario& s) {
  const double a = s.n1 + s.n3;
  const double b = s.n2 + s.n3;
  const double num = s.n1 * (s.n2 * (s.i2.mu - s.c2.mu) + s.n3 * (s.ipsi.mu - s.c3.mu)) / b -
                     s.n2 * (s.n1 * (s.i1.mu - s.c1.mu) + s.n3 * (s.iphi.mu - s.c3.mu)) / a;
  return num / std::sqrt(detail::xi(s));
}

inline double dual_full_rhs(const PseScenario& s) {
  const double a = s.n1 + s.n3;
  const double b = s.n2 + s.n3;
  const double n123 = s.n1 + s.n2 + s.n3;
  const double ca = n123 / a;
  const double cb = n123 / b;
  const double top = ca * ca * (s.n1 * (s.c1.var + s.i1.var) + s.n3 * (s.c3.var + s.iphi.var)) +
                     cb * cb * (s.n2 * (s.c2.var + s.i2.var) + s.n3 * (s.c3.var + s.ipsi.var));
  const double z = detail::z_multiplier(s);
  return std::sqrt(2.0) * z * (std::sqrt(2.0 * top / detail::xi(s)) - 1.0);
}

/// RHS under similar response variances across the qualified groups.
inline double dual_rhs_sigma_simplified(const PseScenario& s) {
  const double n123 = s.n1 + s.n2 + s.n3;
  const double z = detail::z_multiplier(s);
  return std::sqrt(2.0) * z *
         (std::sqrt(2.0 * n123 / (s.n1 + s.n3) + 2.0 * n123 / (s.n2 + s.n3)) - 1.0);
}

/// LHS under similar group sizes (n1 = n2 = n3 = n).
inline double dual_lhs_n_simplified(const PseScenario& s) {
  const double n = (s.n1 + s.n2 + s.n3) / 3.0;
  const double delta =
      (s.i2.mu - s.c2.mu) - (s.i1.mu - s.c1.mu) + s.ipsi.mu - s.iphi.mu;
  const double var6 =
      s.c1.var + s.i1.var + s.c2.var + s.i2.var + s.iphi.var + s.ipsi.var;
  return std::sqrt(n) * delta / (2.0 * std::sqrt(var6));
}

/// Users required per group for dual control to emerge superior under the
/// equal-variance, equal-size simplifications.
inline double dual_min_n(double z, double sigma2_g, double delta) {
  if (!(delta > 0.0)) return std::numeric_limits<double>::infinity();
  const double coeff = 2.0 * std::sqrt(12.0) * (std::sqrt(6.0) - 1.0) * z;
  return coeff * coeff * sigma2_g / (delta * delta);
}

}  // namespace rules

enum class DilutionAdvice { diluted_worse, diluted_better, inconclusive };

struct DilutionResult {
  DilutionAdvice advice = DilutionAdvice::inconclusive;
  std::string rule;  // the first decisive rule
  double variance_threshold = 0.0;
  CompareResult direct;  // compare(setup 3, setup 2)
  bool consistent = false;
};

/// Should qualified-only analysis (setup 3) be preferred over diluting with
/// group-0 users (setup 2)? Evaluates the closed-form rules in order and
/// cross-checks the verdict against the direct comparison.
inline DilutionResult dilution_advice(const PseScenario& s) {
  s.validate();
  if (!(s.n0 >= 1.0)) throw std::invalid_argument("dilution_advice: no dilution possible (n0 = 0)");
  DilutionResult res;
  res.variance_threshold = rules::dilution_variance_threshold(s);
  // the rules assume the swap convention: a non-negative qualified effect
  PseScenario flipped = s;
  if (detail::eta(s) < 0.0) {
    for (auto* g : {&flipped.c0, &flipped.c1, &flipped.c2, &flipped.c3, &flipped.i1, &flipped.i2,
                    &flipped.iphi, &flipped.ipsi}) {
      g->mu = -g->mu;
    }
  }
  if (rules::dilution_criterion1(flipped)) {
    res.advice = DilutionAdvice::diluted_worse;
    res.rule = "variance threshold (criterion 1)";
  } else if (rules::dilution_strong(flipped)) {
    res.advice = DilutionAdvice::diluted_worse;
    res.rule = "trivial condition (master right side non-positive)";
  } else if (rules::dilution_weak(flipped)) {
    res.advice = DilutionAdvice::diluted_worse;
    res.rule = "adequately powered (weak condition)";
  } else {
    const auto s3 = evaluate_setup(3, flipped);
    const double z = detail::z_multiplier(flipped);
    const double ratio = (s.n1 + s.n2 + s.n3) / s.n0;
    const double first = s3.mde - s3.actual_effect + ratio * s3.mde;
    const double second = ratio * s3.mde;
    const double rhs = (first * first - second * second) / (2.0 * z * z);
    const double lhs = 2.0 * s.c0.var / s.n0;
    if (lhs > rhs) {
      res.advice = DilutionAdvice::diluted_worse;
      res.rule = "group-0 standard error above the noise gap (fallback)";
    } else if (lhs < rhs) {
      res.advice = DilutionAdvice::diluted_better;
      res.rule = "group-0 responses stabilise the effect (fallback)";
    } else {
      res.advice = DilutionAdvice::inconclusive;
      res.rule = "exact tie";
    }
  }
  res.direct = compare(evaluate_setup(3, s), evaluate_setup(2, s));
  const bool direct_worse = res.direct.verdict == Verdict::a_superior;
  const bool direct_better = res.direct.verdict == Verdict::b_superior;
  res.consistent = (res.advice == DilutionAdvice::diluted_worse && direct_worse) ||
                   (res.advice == DilutionAdvice::diluted_better && direct_better) ||
                   (res.advice == DilutionAdvice::inconclusive &&
                    res.direct.verdict == Verdict::neither);
  return res;
}

struct DualControlResult {
  bool s4_superior = false;
  double lhs = 0.0;              // full criterion-2 inequality, left side
  double rhs = 0.0;              // right side (always positive)
  double min_n_equalized = 0.0;  // minimum per-group n under the simplifications
  std::string note;
};

/// Is the dual-control setup (4) worth its sensitivity loss against the
/// qualified-only A/B test (3)? Sensitivity dominance is impossible
/// (theta*_S4 > theta*_S3 always), so only the net-gain criterion applies.
inline DualControlResult dual_control_threshold(const PseScenario& s) {
  s.validate();
  if (s.n1 < 1.0 || s.n2 < 1.0 || s.n3 < 1.0) {
    throw std::invalid_argument("dual_control_threshold requires n1, n2, n3 >= 1");
  }
  DualControlResult res;
  res.lhs = rules::dual_full_lhs(s);
  res.rhs = rules::dual_full_rhs(s);
  const auto s3 = evaluate_setup(3, s);
  const auto s4 = evaluate_setup(4, s);
  const double gain = s4.actual_effect - s3.actual_effect;
  if (!(gain > 0.0)) {
    res.s4_superior = false;
    res.note = "no effect gain: the net-gain criterion requires a positive gain";
  } else {
    res.s4_superior = gain > s4.mde - s3.mde;
  }
  const double sigma2_g = (s.c1.var + s.i1.var + s.c2.var + s.i2.var + s.c3.var + s.iphi.var +
                           s.ipsi.var) /
                          7.0;
  const double delta = (s.i2.mu - s.c2.mu) - (s.i1.mu - s.c1.mu) + s.ipsi.mu - s.iphi.mu;
  res.min_n_equalized = rules::dual_min_n(detail::z_multiplier(s), sigma2_g, delta);
  return res;
}

struct SetupVerification {
  int setup_id = 0;
  double theory_effect = 0.0;
  double mc_effect = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool effect_in_ci = false;
  double theory_mde = 0.0;
  double empirical_mde = 0.0;  // zero when the MDE search was not requested
};

struct VerifyOptions {
  std::uint64_t runs = 10000;
  std::uint64_t seed = 0;
  std::uint64_t bootstrap_resamples = 1000;
  bool with_mde = false;
  std::uint64_t mde_point_budget = 1 << 18;
  std::uint64_t mde_null_draws = 50000;
};

namespace detail {

struct Cell {
  double mu;
  double var;
  double size;
};

// Analysis-arm composition per setup under 50/50 (setup 4: 25/25/25/25) splits.
inline void arms_for_setup(int setup_id, const PseScenario& s, std::vector<Cell>& arm_a,
                           std::vector<Cell>& arm_b, std::vector<Cell>& arm_a2,
                           std::vector<Cell>& arm_b2) {
  arm_a.clear();
  arm_b.clear();
  arm_a2.clear();
  arm_b2.clear();
  switch (setup_id) {
    case 1:
      arm_a = {{s.iphi.mu, s.iphi.var, s.n3 / 2.0}};
      arm_b = {{s.ipsi.mu, s.ipsi.var, s.n3 / 2.0}};
      break;
    case 2:
      arm_a = {{s.c0.mu, s.c0.var, s.n0 / 2.0},
               {s.i1.mu, s.i1.var, s.n1 / 2.0},
               {s.c2.mu, s.c2.var, s.n2 / 2.0},
               {s.iphi.mu, s.iphi.var, s.n3 / 2.0}};
      arm_b = {{s.c0.mu, s.c0.var, s.n0 / 2.0},
               {s.c1.mu, s.c1.var, s.n1 / 2.0},
               {s.i2.mu, s.i2.var, s.n2 / 2.0},
               {s.ipsi.mu, s.ipsi.var, s.n3 / 2.0}};
      break;
    case 3:
      arm_a = {{s.i1.mu, s.i1.var, s.n1 / 2.0},
               {s.c2.mu, s.c2.var, s.n2 / 2.0},
               {s.iphi.mu, s.iphi.var, s.n3 / 2.0}};
      arm_b = {{s.c1.mu, s.c1.var, s.n1 / 2.0},
               {s.i2.mu, s.i2.var, s.n2 / 2.0},
               {s.ipsi.mu, s.ipsi.var, s.n3 / 2.0}};
      break;
    case 4:
      arm_a = {{s.c1.mu, s.c1.var, s.n1 / 4.0}, {s.c3.mu, s.c3.var, s.n3 / 4.0}};   // A1
      arm_a2 = {{s.i1.mu, s.i1.var, s.n1 / 4.0}, {s.iphi.mu, s.iphi.var, s.n3 / 4.0}};  // A2
      arm_b = {{s.c2.mu, s.c2.var, s.n2 / 4.0}, {s.c3.mu, s.c3.var, s.n3 / 4.0}};   // B1
      arm_b2 = {{s.i2.mu, s.i2.var, s.n2 / 4.0}, {s.ipsi.mu, s.ipsi.var, s.n3 / 4.0}};  // B2
      break;
    default:
      throw std::invalid_argument("setup_id must be 1..4");
  }
}

// One draw of an arm mean: size-weighted combination of exact cell means.
inline double draw_arm(const std::vector<Cell>& cells, simlab::Rng& rng, bool centred) {
  double total = 0.0, weighted = 0.0;
  for (const auto& c : cells) {
    if (c.size <= 0.0) continue;
    const double mean = centred ? 0.0 : c.mu;
    const double m = rng.normal(mean, std::sqrt(c.var / c.size));
    total += c.size;
    weighted += c.size * m;
  }
  return weighted / total;
}

}  // namespace detail

/// One simulated realisation of the setup's measured effect.
inline double simulate_effect(int setup_id, const PseScenario& s, simlab::Rng& rng,
                              bool centred = false) {
  std::vector<detail::Cell> a, b, a2, b2;
  detail::arms_for_setup(setup_id, s, a, b, a2, b2);
  if (setup_id == 4) {
    const double a1m = detail::draw_arm(a, rng, centred);
    const double a2m = detail::draw_arm(a2, rng, centred);
    const double b1m = detail::draw_arm(b, rng, centred);
    const double b2m = detail::draw_arm(b2, rng, centred);
    return (b2m - b1m) - (a2m - a1m);
  }
  return detail::draw_arm(b, rng, centred) - detail::draw_arm(a, rng, centred);
}

/// Monte Carlo verification of the closed forms: the mean simulated effect
/// against its bootstrap CI, and optionally the empirical MDE by noisy
/// bisection on simulated rejection rates.
inline std::vector<SetupVerification> verify_scenario(const PseScenario& s,
                                                      const VerifyOptions& opt) {
  s.validate();
  if (opt.runs < 1000) throw std::invalid_argument("verify_scenario requires runs >= 1000");
  std::vector<SetupVerification> report;
  for (int setup_id = 1; setup_id <= 4; ++setup_id) {
    SetupVerification v;
    v.setup_id = setup_id;
    const auto eval = evaluate_setup(setup_id, s);
    v.theory_effect = eval.actual_effect;
    v.theory_mde = eval.mde;
    const auto effects = simlab::run_collect<double>(
        simlab::mix_seed({opt.seed, static_cast<std::uint64_t>(setup_id)}), opt.runs, 0,
        [&](std::uint64_t, simlab::Rng& rng) { return simulate_effect(setup_id, s, rng); });
    v.mc_effect = simlab::mean_of(effects);
    const auto ci = simlab::bootstrap_ci(effects, simlab::Statistic::mean,
                                         opt.bootstrap_resamples, 0.05, opt.seed + setup_id);
    v.ci_low = ci.low;
    v.ci_high = ci.high;
    v.effect_in_ci = ci.low <= v.theory_effect && v.theory_effect <= ci.high;

    if (opt.with_mde) {
      // critical value from the empirical null spread of the effect statistic
      simlab::Rng null_rng(simlab::mix_seed({opt.seed, 0xAAULL, static_cast<std::uint64_t>(setup_id)}));
      double ss = 0.0;
      for (std::uint64_t i = 0; i < opt.mde_null_draws; ++i) {
        const double d = simulate_effect(setup_id, s, null_rng, true);
        ss += d * d;
      }
      const double null_sd = std::sqrt(ss / static_cast<double>(opt.mde_null_draws));
      const double crit = distkit::normal_quantile(1.0 - s.alpha / 2.0) * null_sd;
      const auto power_fn = [&](double theta, std::uint64_t k, simlab::Rng& rng) {
        std::uint64_t hits = 0;
        for (std::uint64_t i = 0; i < k; ++i) {
          const double d = simulate_effect(setup_id, s, rng, true) + theta;
          if (std::fabs(d) > crit) ++hits;
        }
        return hits;
      };
      const auto res = simlab::noisy_bisection(
          power_fn, s.power_target, 0.2 * null_sd, 8.0 * null_sd, opt.mde_point_budget,
          simlab::mix_seed({opt.seed, 0xBBULL, static_cast<std::uint64_t>(setup_id)}));
      v.empirical_mde = res.theta_hat;
    }
    report.push_back(v);
  }
  return report;
}

}  // namespace demlab::pse
