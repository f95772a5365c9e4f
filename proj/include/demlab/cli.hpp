#pragma once

// Command-line surface binding every library capability: design calculators,
// fixed-horizon tests on response CSVs, sequential replays over checkpoint
// CSVs, bootstrap standard errors over transaction CSVs, and the evaluation
// of personalisation-strategy experiment setups from scenario files.
//
// Every subcommand emits a versioned report (schema: 1) as JSON, CSV, or an
// aligned table. Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "demlab/clusterse.hpp"
#include "demlab/common.hpp"
#include "demlab/distkit.hpp"
#include "demlab/io.hpp"
#include "demlab/pse.hpp"
#include "demlab/rulu.hpp"
#include "demlab/seqkit.hpp"
#include "demlab/testkit.hpp"
#include "demlab/verify.hpp"
#include "json.hpp"

namespace demlab::cli {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string json_scalar_to_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline void emit(const Json& report, const std::string& format, std::ostream& out) {
  if (format == "json") {
    out << report.dump(2) << '\n';
    return;
  }
  // flatten: either the "rows" array or the scalar fields of the report
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  if (report.contains("rows") && report["rows"].is_array() && !report["rows"].empty()) {
    for (const auto& [key, value] : report["rows"][0].items()) {
      (void)value;
      header.push_back(key);
    }
    for (const auto& r : report["rows"]) {
      std::vector<std::string> fields;
      for (const auto& h : header) fields.push_back(json_scalar_to_string(r.at(h)));
      rows.push_back(std::move(fields));
    }
  } else {
    std::vector<std::string> fields;
    for (const auto& [key, value] : report.items()) {
      if (value.is_object() || value.is_array()) continue;
      header.push_back(key);
      fields.push_back(json_scalar_to_string(value));
    }
    rows.push_back(std::move(fields));
  }
  if (format == "csv") {
    io::CsvTable table;
    table.header = header;
    table.rows = rows;
    io::write_csv(out, table);
    return;
  }
  // aligned table
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  const auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t c = 0; c < fields.size(); ++c) {
      out << fields[c] << std::string(width[c] - fields[c].size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("DEMLAB_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw input_error("DEMLAB_SEED is not an unsigned integer");
    }
  }
  return 0;
}

inline testkit::Alternative parse_alternative(const std::string& s) {
  if (s == "two-sided" || s == "two_sided") return testkit::Alternative::two_sided;
  if (s == "greater") return testkit::Alternative::greater;
  if (s == "less") return testkit::Alternative::less;
  throw input_error("unknown alternative: " + s);
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(io::detail::parse_double(item, 1, "list"));
  }
  if (out.empty()) throw input_error("empty list: " + s);
  return out;
}

inline const char* alternative_name(testkit::Alternative alt) {
  switch (alt) {
    case testkit::Alternative::greater:
      return "greater";
    case testkit::Alternative::less:
      return "less";
    default:
      return "two-sided";
  }
}

inline Json outcome_to_json(const testkit::TestOutcome& out) {
  Json j;
  j["statistic"] = out.statistic;
  if (out.p_value) j["p_value"] = *out.p_value;
  if (out.dof) j["dof"] = *out.dof;
  j["reject"] = out.reject;
  if (out.ci_low) j["ci_low"] = *out.ci_low;
  if (out.ci_high) j["ci_high"] = *out.ci_high;
  j["alternative"] = alternative_name(out.alternative);
  if (!out.note.empty()) j["note"] = out.note;
  return j;
}

inline testkit::SampleSummary summarise(const std::vector<double>& xs) {
  if (xs.size() < 2) throw input_error("group needs at least 2 responses");
  double m = 0.0;
  for (double v : xs) m += v;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double v : xs) ss += (v - m) * (v - m);
  return {static_cast<long long>(xs.size()), m, ss / static_cast<double>(xs.size() - 1)};
}

// Assembles the two-variant stream for one experiment/metric pair.
inline seqkit::ExperimentStream select_stream(const std::vector<CheckpointSeries>& all,
                                              std::string experiment, std::string metric,
                                              std::string variant_a, std::string variant_b) {
  if (experiment.empty()) experiment = all.front().experiment_id;
  std::vector<const CheckpointSeries*> candidates;
  for (const auto& s : all) {
    if (s.experiment_id == experiment && (metric.empty() || s.metric_id == metric)) {
      if (metric.empty()) metric = s.metric_id;
      if (s.metric_id == metric) candidates.push_back(&s);
    }
  }
  if (candidates.size() < 2) {
    throw input_error("experiment '" + experiment + "' metric '" + metric +
                      "' does not have two variants");
  }
  if (variant_a.empty()) variant_a = candidates[0]->variant_id;
  if (variant_b.empty()) {
    for (const auto* c : candidates) {
      if (c->variant_id != variant_a) {
        variant_b = c->variant_id;
        break;
      }
    }
  }
  const CheckpointSeries* a = nullptr;
  const CheckpointSeries* b = nullptr;
  for (const auto* c : candidates) {
    if (c->variant_id == variant_a) a = c;
    if (c->variant_id == variant_b) b = c;
  }
  if (a == nullptr || b == nullptr || a == b) {
    throw input_error("variants '" + variant_a + "' and '" + variant_b + "' not found for " +
                      experiment + "/" + metric);
  }
  return {*a, *b};
}

inline Json replay_to_json(const seqkit::ReplayResult& res, const char* value_name) {
  Json rows = Json::array();
  for (const auto& pt : res.trajectory) {
    Json r;
    r["time_index"] = pt.time_index;
    r["n"] = pt.n;
    r["m"] = pt.m;
    r["statistic"] = pt.statistic;
    r[value_name] = pt.p_or_posterior;
    r["reject"] = pt.reject;
    rows.push_back(r);
  }
  Json j;
  j["final_reject"] = res.final_reject;
  j["rows"] = rows;
  return j;
}

}  // namespace detail

/// Parses argv, runs the selected subcommand, prints the report to `out`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"demlab: statistics toolkit for digital experimentation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string format = "json";
  app.add_option("--format", format, "output format")
      ->check(CLI::IsMember({"json", "csv", "table"}))
      ->capture_default_str();
  std::uint64_t seed = detail::default_seed();
  app.add_option("--seed", seed, "seed for stochastic subcommands (default: DEMLAB_SEED or 0)");

  Json report;
  report["schema"] = 1;

  // ---- rulu-value ----------------------------------------------------
  auto* rulu_value = app.add_subcommand("rulu-value", "closed-form value of reduced estimation noise");
  struct {
    long long n = 100, m = 10;
    double mu_v = 0.0, mu_eps = 0.0;
    double sigma_v = 1.0, sigma1 = 0.5, sigma2 = 0.4;
    double correction = 0.4, risk_free = 0.0;
  } rv;
  rulu_value->add_option("--n", rv.n, "candidate items N")->required();
  rulu_value->add_option("--m", rv.m, "selected items M")->required();
  rulu_value->add_option("--mu-v", rv.mu_v, "mean item value");
  rulu_value->add_option("--mu-eps", rv.mu_eps, "mean estimation noise");
  rulu_value->add_option("--sigma-v", rv.sigma_v, "sd of item values")->required();
  rulu_value->add_option("--sigma1", rv.sigma1, "sd of the high noise level")->required();
  rulu_value->add_option("--sigma2", rv.sigma2, "sd of the low noise level")->required();
  rulu_value->add_option("--correction", rv.correction, "rank-quantile correction");
  rulu_value->add_option("--risk-free", rv.risk_free, "risk-free return for the Sharpe ratio");
  rulu_value->callback([&] {
    rulu::RuluParams p;
    p.n_items = rv.n;
    p.capacity = rv.m;
    p.mean_value = rv.mu_v;
    p.mean_noise = rv.mu_eps;
    p.var_value = rv.sigma_v * rv.sigma_v;
    p.var_noise_high = rv.sigma1 * rv.sigma1;
    p.var_noise_low = rv.sigma2 * rv.sigma2;
    p.quantile_correction = rv.correction;
    const auto m = rulu::gain_variance(p);
    report["n_items"] = p.n_items;
    report["capacity"] = p.capacity;
    report["expected_w_high"] = m.expected_w_high;
    report["expected_w_low"] = m.expected_w_low;
    report["expected_gain"] = m.expected_gain;
    report["relative_gain"] = rulu::relative_gain(p);
    report["var_w_high"] = m.var_w_high;
    report["var_w_low"] = m.var_w_low;
    report["cov_w"] = m.cov_w;
    report["var_gain"] = m.var_gain;
    if (m.var_gain > 0.0) {
      report["sharpe_ratio"] = rulu::sharpe_ratio(m.expected_gain, m.var_gain, rv.risk_free);
    }
    if (m.degenerate_fit_rows > 0) report["degenerate_fit_rows"] = m.degenerate_fit_rows;
    if (m.covariance_capped) report["covariance_capped"] = true;
  });

  // ---- rulu-verify ---------------------------------------------------
  auto* rulu_verify = app.add_subcommand("rulu-verify", "Monte Carlo calibration of the closed forms");
  rulu::CalibrationConfig cal;
  cal.trials = 50;
  cal.runs = 4000;
  cal.bootstrap_resamples = 800;
  cal.cov_batches = 100;
  rulu_verify->add_option("--trials", cal.trials, "random-parameter trials");
  rulu_verify->add_option("--runs", cal.runs, "simulation runs per trial");
  rulu_verify->add_option("--resamples", cal.bootstrap_resamples, "bootstrap resamples");
  rulu_verify->add_option("--cov-batches", cal.cov_batches, "covariance batches");
  rulu_verify->add_option("--cov-batch-size", cal.cov_batch_size, "runs per covariance batch");
  rulu_verify->add_option("--n-exp-lo", cal.n_exp_lo, "log10 lower bound of N");
  rulu_verify->add_option("--n-exp-hi", cal.n_exp_hi, "log10 upper bound of N");
  rulu_verify->callback([&] {
    cal.seed = seed;
    const auto rep = rulu::calibrate(cal);
    report["trials"] = rep.trials;
    report["frac_expected_w_in_ci"] = rep.frac_expected_w;
    report["frac_expected_gain_in_ci"] = rep.frac_expected_gain;
    report["frac_var_w_in_ci"] = rep.frac_var_w;
    report["frac_cross_cov_in_ci"] = rep.frac_cross_cov;
  });

  // ---- power / samplesize / mde ---------------------------------------
  struct {
    double theta = 0.0, theta0 = 0.0, var_a = 1.0, var_b = 1.0;
    long long n = 1000, m = 1000;
    double alpha = 0.05, power = 0.8, ratio = 1.0;
    std::string alternative = "two-sided";
    bool approx = false;
  } design;
  auto* power_cmd = app.add_subcommand("power", "power of the two-sample test");
  power_cmd->add_option("--theta", design.theta, "true effect")->required();
  power_cmd->add_option("--theta0", design.theta0, "null effect");
  power_cmd->add_option("--var-a", design.var_a, "variance of group a");
  power_cmd->add_option("--var-b", design.var_b, "variance of group b");
  power_cmd->add_option("--n", design.n, "size of group a")->required();
  power_cmd->add_option("--m", design.m, "size of group b")->required();
  power_cmd->add_option("--alpha", design.alpha, "significance level");
  power_cmd->add_option("--alternative", design.alternative, "two-sided|greater|less");
  power_cmd->add_flag("--approx", design.approx, "single-tail two-sided approximation");
  power_cmd->callback([&] {
    const auto alt = detail::parse_alternative(design.alternative);
    report["power"] = testkit::power(design.theta, design.theta0, design.var_a, design.var_b,
                                     design.n, design.m, design.alpha, alt, design.approx);
    if (design.approx) {
      const bool valid = testkit::approx_power_valid(design.theta, design.theta0, design.var_a,
                                                     design.var_b, design.n, design.m,
                                                     design.alpha);
      report["approx_valid"] = valid;
      if (!valid) {
        err << "warning: |theta - theta0|/SE is too small for the single-tail approximation\n";
      }
    }
  });

  auto* samplesize_cmd = app.add_subcommand("samplesize", "required per-group sample size");
  samplesize_cmd->add_option("--theta", design.theta, "target effect")->required();
  samplesize_cmd->add_option("--theta0", design.theta0, "null effect");
  samplesize_cmd->add_option("--var-a", design.var_a, "variance of group a");
  samplesize_cmd->add_option("--var-b", design.var_b, "variance of group b");
  samplesize_cmd->add_option("--alpha", design.alpha, "significance level");
  samplesize_cmd->add_option("--power", design.power, "power target");
  samplesize_cmd->add_option("--alternative", design.alternative, "two-sided|greater|less");
  samplesize_cmd->add_option("--ratio", design.ratio, "allocation ratio m/n");
  samplesize_cmd->callback([&] {
    const auto alt = detail::parse_alternative(design.alternative);
    const auto res = testkit::required_sample_size(design.theta, design.theta0, design.var_a,
                                                   design.var_b, design.alpha, design.power, alt,
                                                   design.ratio);
    report["n"] = res.n;
    report["m"] = res.m;
    report["rule_of_thumb"] = res.rule_of_thumb;
  });

  auto* mde_cmd = app.add_subcommand("mde", "minimum detectable effect");
  mde_cmd->add_option("--var-a", design.var_a, "variance of group a");
  mde_cmd->add_option("--var-b", design.var_b, "variance of group b");
  mde_cmd->add_option("--n", design.n, "size of group a")->required();
  mde_cmd->add_option("--m", design.m, "size of group b")->required();
  mde_cmd->add_option("--alpha", design.alpha, "significance level");
  mde_cmd->add_option("--power", design.power, "power target");
  mde_cmd->add_option("--alternative", design.alternative, "two-sided|greater|less");
  mde_cmd->callback([&] {
    const auto alt = detail::parse_alternative(design.alternative);
    const double theta = testkit::mde(design.var_a, design.var_b, design.n, design.m, design.alpha,
                                      design.power, alt);
    const double se = std::sqrt(design.var_a / static_cast<double>(design.n) +
                                design.var_b / static_cast<double>(design.m));
    report["mde"] = theta;
    report["se"] = se;
    report["multiplier"] = theta / se;
  });

  // ---- test ------------------------------------------------------------
  auto* test_cmd = app.add_subcommand("test", "run a two-sample test on a responses csv");
  struct {
    std::string input;
    std::string name = "practical";
    std::string group_a, group_b, group;
    double delta0 = 0.0, theta0 = 0.5, alpha = 0.05, var_a = 1.0, var_b = 1.0;
    std::string alternative = "two-sided";
    bool exact = false;
  } tc;
  test_cmd->add_option("--input", tc.input, "responses csv (unit_id,group,value)")->required();
  test_cmd->add_option("--test", tc.name, "practical|welch|z|mannwhitney|binomial");
  test_cmd->add_option("--group-a", tc.group_a, "label of the first group");
  test_cmd->add_option("--group-b", tc.group_b, "label of the second group");
  test_cmd->add_option("--group", tc.group, "group for the one-sample binomial test");
  test_cmd->add_option("--delta0", tc.delta0, "null mean difference");
  test_cmd->add_option("--theta0", tc.theta0, "null proportion (binomial)");
  test_cmd->add_option("--alpha", tc.alpha, "significance level");
  test_cmd->add_option("--var-a", tc.var_a, "known variance of group a (z test)");
  test_cmd->add_option("--var-b", tc.var_b, "known variance of group b (z test)");
  test_cmd->add_option("--alternative", tc.alternative, "two-sided|greater|less");
  test_cmd->add_flag("--exact", tc.exact, "exact permutation p (mannwhitney, n+m <= 20)");
  test_cmd->callback([&] {
    auto in = io::open_input(tc.input);
    const auto responses = io::read_responses(in);
    const auto alt = detail::parse_alternative(tc.alternative);
    testkit::TestOutcome outcome;
    if (tc.name == "binomial") {
      const std::string group = tc.group.empty() ? responses.groups().front() : tc.group;
      const auto values = responses.values_of(group);
      if (values.empty()) throw input_error("group '" + group + "' has no responses");
      long long k = 0;
      for (double v : values) {
        if (v != 0.0 && v != 1.0) {
          throw input_error("binomial test needs 0/1 responses; got " + std::to_string(v));
        }
        k += v == 1.0 ? 1 : 0;
      }
      outcome = testkit::binomial_exact_test(k, static_cast<long long>(values.size()), tc.theta0,
                                             alt, tc.alpha);
      report["group"] = group;
      report["successes"] = k;
      report["trials"] = values.size();
    } else {
      const auto groups = responses.groups();
      if (groups.size() < 2 && (tc.group_a.empty() || tc.group_b.empty())) {
        throw input_error("two-sample tests need two groups in the data");
      }
      const std::string ga = tc.group_a.empty() ? groups[0] : tc.group_a;
      const std::string gb = tc.group_b.empty()
                                 ? (groups[0] == ga && groups.size() > 1 ? groups[1] : groups[0])
                                 : tc.group_b;
      const auto xs = responses.values_of(ga);
      const auto ys = responses.values_of(gb);
      if (xs.empty()) throw input_error("group '" + ga + "' has no responses");
      if (ys.empty()) throw input_error("group '" + gb + "' has no responses");
      if (tc.name == "practical" || tc.name == "welch") {
        outcome = testkit::welch_t_test(detail::summarise(xs), detail::summarise(ys), tc.delta0,
                                        alt, tc.alpha, tc.name == "practical");
      } else if (tc.name == "z") {
        outcome = testkit::z_test(detail::summarise(xs), detail::summarise(ys), tc.delta0,
                                  tc.var_a, tc.var_b, alt, tc.alpha);
      } else if (tc.name == "mannwhitney") {
        outcome = testkit::mann_whitney_u(xs, ys, alt, tc.alpha, tc.exact);
      } else {
        throw input_error("unknown test: " + tc.name);
      }
      report["group_a"] = ga;
      report["group_b"] = gb;
    }
    report["test"] = tc.name;
    const Json details = detail::outcome_to_json(outcome);
    for (const auto& [key, value] : details.items()) {
      report[key] = value;
    }
  });

  // ---- srm ---------------------------------------------------------------
  auto* srm_cmd = app.add_subcommand("srm", "sample-ratio-mismatch check");
  struct {
    std::string counts, ratios;
    double alpha = 0.001;
  } srm;
  srm_cmd->add_option("--counts", srm.counts, "observed counts, comma separated")->required();
  srm_cmd->add_option("--ratios", srm.ratios, "designed split ratios, comma separated")->required();
  srm_cmd->add_option("--alpha", srm.alpha, "flagging level");
  srm_cmd->callback([&] {
    const auto counts = detail::parse_list(srm.counts);
    const auto ratios = detail::parse_list(srm.ratios);
    const auto outcome = testkit::chi2_gof(counts, ratios);
    report["statistic"] = outcome.statistic;
    report["dof"] = *outcome.dof;
    report["p_value"] = *outcome.p_value;
    report["srm"] = *outcome.p_value < srm.alpha;
    if (!outcome.note.empty()) report["note"] = outcome.note;
  });

  // ---- msprt-replay / bayes-replay / confusion ----------------------------
  struct {
    std::string input, experiment, metric, variant_a, variant_b;
    double alpha = 0.05, theta0 = 0.0;
    double tau2 = 0.0;  // 0 = use tau2_scale * running control variance
    double tau2_scale = 5.92e-6;
    double v2 = 5.93e-6, prior_h0 = 0.75, threshold = 0.5;
  } rp;
  const auto add_stream_options = [&](CLI::App* cmd) {
    cmd->add_option("--input", rp.input, "checkpoint csv")->required();
    cmd->add_option("--experiment", rp.experiment, "experiment id (default: first)");
    cmd->add_option("--metric", rp.metric, "metric id (default: first)");
    cmd->add_option("--variant-a", rp.variant_a, "control variant (default: first)");
    cmd->add_option("--variant-b", rp.variant_b, "treatment variant (default: second)");
    cmd->add_option("--alpha", rp.alpha, "significance level");
    cmd->add_option("--theta0", rp.theta0, "null effect");
  };
  auto* msprt_cmd = app.add_subcommand("msprt-replay", "replay a mixture SPRT over checkpoints");
  add_stream_options(msprt_cmd);
  msprt_cmd->add_option("--tau2", rp.tau2, "fixed mixing variance (0: scale by running variance)");
  msprt_cmd->add_option("--tau2-scale", rp.tau2_scale, "mixing variance per unit response variance");
  msprt_cmd->callback([&] {
    auto in = io::open_input(rp.input);
    const auto all = io::read_checkpoint_series(in);
    const auto stream =
        detail::select_stream(all, rp.experiment, rp.metric, rp.variant_a, rp.variant_b);
    seqkit::ReplayConfig cfg;
    cfg.monitor = seqkit::Monitor::msprt;
    cfg.alpha = rp.alpha;
    cfg.theta0 = rp.theta0;
    if (rp.tau2 > 0.0) cfg.tau2 = rp.tau2;
    cfg.tau2_scale = rp.tau2_scale;
    const auto res = seqkit::replay(stream, cfg);
    report["monitor"] = "msprt";
    report["experiment"] = stream.control.experiment_id;
    report["metric"] = stream.control.metric_id;
    const Json details = detail::replay_to_json(res, "p_value");
    for (const auto& [key, value] : details.items()) {
      report[key] = value;
    }
  });

  auto* bayes_cmd = app.add_subcommand("bayes-replay", "replay a Bayes-factor test over checkpoints");
  add_stream_options(bayes_cmd);
  bayes_cmd->add_option("--v2", rp.v2, "prior variance of the standardised effect");
  bayes_cmd->add_option("--prior-h0", rp.prior_h0, "prior probability of the null");
  bayes_cmd->add_option("--threshold", rp.threshold, "posterior threshold for rejecting the null");
  bayes_cmd->callback([&] {
    auto in = io::open_input(rp.input);
    const auto all = io::read_checkpoint_series(in);
    const auto stream =
        detail::select_stream(all, rp.experiment, rp.metric, rp.variant_a, rp.variant_b);
    seqkit::ReplayConfig cfg;
    cfg.monitor = seqkit::Monitor::bayes;
    cfg.alpha = rp.alpha;
    cfg.theta0 = rp.theta0;
    cfg.v2 = rp.v2;
    cfg.prior_h0 = rp.prior_h0;
    cfg.posterior_reject_threshold = rp.threshold;
    const auto res = seqkit::replay(stream, cfg);
    report["monitor"] = "bayes";
    report["experiment"] = stream.control.experiment_id;
    report["metric"] = stream.control.metric_id;
    const Json details = detail::replay_to_json(res, "posterior_h0");
    for (const auto& [key, value] : details.items()) {
      report[key] = value;
    }
  });

  auto* confusion_cmd =
      app.add_subcommand("confusion", "monitor verdicts against the fixed-horizon t test");
  struct {
    std::string input;
    std::string monitor = "msprt";
  } cf;
  confusion_cmd->add_option("--input", cf.input, "checkpoint csv or a directory of them")
      ->required();
  confusion_cmd->add_option("--monitor", cf.monitor, "msprt|bayes");
  confusion_cmd->add_option("--alpha", rp.alpha, "significance level");
  confusion_cmd->add_option("--tau2-scale", rp.tau2_scale, "mixing variance scale (msprt)");
  confusion_cmd->add_option("--v2", rp.v2, "prior variance (bayes)");
  confusion_cmd->add_option("--prior-h0", rp.prior_h0, "prior null probability (bayes)");
  confusion_cmd->callback([&] {
    std::vector<CheckpointSeries> all;
    const std::filesystem::path path(cf.input);
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(path)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw input_error("no csv files in directory: " + cf.input);
      for (const auto& f : files) {
        auto in = io::open_input(f.string());
        auto part = io::read_checkpoint_series(in);
        all.insert(all.end(), part.begin(), part.end());
      }
    } else {
      auto in = io::open_input(cf.input);
      all = io::read_checkpoint_series(in);
    }
    // one comparison per (experiment, metric) pair with at least two variants
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& s : all) {
      const auto key = std::make_pair(s.experiment_id, s.metric_id);
      if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) pairs.push_back(key);
    }
    std::vector<bool> monitor_rejects, reference_rejects;
    for (const auto& [experiment, metric] : pairs) {
      const auto stream = detail::select_stream(all, experiment, metric, "", "");
      seqkit::ReplayConfig mcfg;
      mcfg.monitor = cf.monitor == "bayes" ? seqkit::Monitor::bayes : seqkit::Monitor::msprt;
      if (cf.monitor != "bayes" && cf.monitor != "msprt") {
        throw input_error("unknown monitor: " + cf.monitor);
      }
      mcfg.alpha = rp.alpha;
      mcfg.tau2_scale = rp.tau2_scale;
      mcfg.v2 = rp.v2;
      mcfg.prior_h0 = rp.prior_h0;
      seqkit::ReplayConfig fcfg;
      fcfg.monitor = seqkit::Monitor::fixed_t;
      fcfg.alpha = rp.alpha;
      monitor_rejects.push_back(seqkit::replay(stream, mcfg).final_reject);
      reference_rejects.push_back(seqkit::replay(stream, fcfg).final_reject);
    }
    const auto cm = seqkit::confusion_matrix(monitor_rejects, reference_rejects);
    report["monitor"] = cf.monitor;
    report["experiments"] = pairs.size();
    report["both_reject"] = cm.both_reject;
    report["monitor_only"] = cm.monitor_only;
    report["reference_only"] = cm.reference_only;
    report["neither"] = cm.neither;
    report["quasi_type_1_rate"] =
        pairs.empty() ? 0.0
                      : static_cast<double>(cm.monitor_only) / static_cast<double>(pairs.size());
  });

  // ---- bootstrap-se --------------------------------------------------------
  auto* boot_cmd = app.add_subcommand("bootstrap-se", "clustered standard error of a metric");
  struct {
    std::string input;
    std::string mode = "oneway";
    long long b = 500;
  } bs;
  boot_cmd->add_option("--input", bs.input, "transactions csv (user_id,product_id,value)")
      ->required();
  boot_cmd->add_option("--mode", bs.mode, "oneway|twoway")
      ->check(CLI::IsMember({"oneway", "twoway"}));
  boot_cmd->add_option("--b", bs.b, "bootstrap resamples");
  boot_cmd->callback([&] {
    auto in = io::open_input(bs.input);
    const auto records = io::read_transactions(in);
    const auto vanilla = clusterse::vanilla_se(records);
    const auto boot = bs.mode == "twoway" ? clusterse::twoway_bootstrap_se(records, bs.b, seed)
                                          : clusterse::oneway_bootstrap_se(records, bs.b, seed);
    report["mode"] = bs.mode;
    report["mean"] = boot.mean;
    report["vanilla_se"] = vanilla.se;
    report["bootstrap_se"] = boot.se;
    report["ratio"] = vanilla.se > 0.0 ? boot.se / vanilla.se : 0.0;
    report["se_ci_low"] = boot.se_ci_low;
    report["se_ci_high"] = boot.se_ci_high;
    report["b"] = boot.b_resamples;
    report["cv"] = boot.coefficient_of_variation;
    if (boot.skipped_resamples > 0) report["skipped_resamples"] = boot.skipped_resamples;
    if (!boot.note.empty()) report["note"] = boot.note;
  });

  // ---- pse-* ---------------------------------------------------------------
  struct {
    std::string scenario;
    int setup = 0;
    int setup_a = 3, setup_b = 2;
    std::uint64_t runs = 10000;
    bool with_mde = false;
    std::uint64_t budget = 1 << 18;
  } ps;
  const auto load_scenario = [&] {
    auto in = io::open_input(ps.scenario);
    return io::read_scenario(in);
  };

  auto* pse_eval = app.add_subcommand("pse-eval", "effect size and MDE of the setups");
  pse_eval->add_option("--scenario", ps.scenario, "scenario file")->required();
  pse_eval->add_option("--setup", ps.setup, "setup 1..4 (0: all)");
  pse_eval->callback([&] {
    const auto scenario = load_scenario();
    Json rows = Json::array();
    for (int id = 1; id <= 4; ++id) {
      if (ps.setup != 0 && ps.setup != id) continue;
      const auto eval = pse::evaluate_setup(id, scenario);
      Json r;
      r["setup"] = eval.setup_id;
      r["actual_effect"] = eval.actual_effect;
      r["mde"] = eval.mde;
      rows.push_back(r);
    }
    report["rows"] = rows;
  });

  auto* pse_compare = app.add_subcommand("pse-compare", "superiority of one setup over another");
  pse_compare->add_option("--scenario", ps.scenario, "scenario file")->required();
  pse_compare->add_option("--setup-a", ps.setup_a, "first setup");
  pse_compare->add_option("--setup-b", ps.setup_b, "second setup");
  pse_compare->callback([&] {
    const auto scenario = load_scenario();
    const auto a = pse::evaluate_setup(ps.setup_a, scenario);
    const auto b = pse::evaluate_setup(ps.setup_b, scenario);
    const auto res = pse::compare(a, b);
    report["setup_a"] = ps.setup_a;
    report["setup_b"] = ps.setup_b;
    report["effect_a"] = a.actual_effect;
    report["mde_a"] = a.mde;
    report["effect_b"] = b.actual_effect;
    report["mde_b"] = b.mde;
    report["verdict"] = res.verdict == pse::Verdict::a_superior
                            ? "a_superior"
                            : (res.verdict == pse::Verdict::b_superior ? "b_superior" : "neither");
    report["criterion"] = res.criterion == pse::Criterion::dominance
                              ? "dominance"
                              : (res.criterion == pse::Criterion::net_gain ? "net_gain" : "none");
    report["swapped"] = res.swapped;
    report["likely_error"] = res.likely_error;
  });

  auto* pse_advise = app.add_subcommand("pse-advise", "dilution and dual-control recommendations");
  pse_advise->add_option("--scenario", ps.scenario, "scenario file")->required();
  pse_advise->callback([&] {
    const auto scenario = load_scenario();
    const auto dil = pse::dilution_advice(scenario);
    Json dilution;
    dilution["advice"] = dil.advice == pse::DilutionAdvice::diluted_worse
                             ? "diluted_worse"
                             : (dil.advice == pse::DilutionAdvice::diluted_better
                                    ? "diluted_better"
                                    : "inconclusive");
    dilution["rule"] = dil.rule;
    dilution["variance_threshold"] = dil.variance_threshold;
    dilution["consistent_with_direct"] = dil.consistent;
    report["dilution"] = dilution;
    const auto dual = pse::dual_control_threshold(scenario);
    Json dc;
    dc["s4_superior"] = dual.s4_superior;
    dc["lhs"] = dual.lhs;
    dc["rhs"] = dual.rhs;
    dc["min_n_equalized"] = dual.min_n_equalized;
    if (!dual.note.empty()) dc["note"] = dual.note;
    report["dual_control"] = dc;
  });

  auto* pse_verify = app.add_subcommand("pse-verify", "Monte Carlo check of the setup closed forms");
  pse_verify->add_option("--scenario", ps.scenario, "scenario file")->required();
  pse_verify->add_option("--runs", ps.runs, "simulation runs");
  pse_verify->add_flag("--with-mde", ps.with_mde, "also search the empirical MDE");
  pse_verify->add_option("--budget", ps.budget, "per-point sample budget for the MDE search");
  pse_verify->callback([&] {
    const auto scenario = load_scenario();
    pse::VerifyOptions opt;
    opt.runs = ps.runs;
    opt.seed = seed;
    opt.with_mde = ps.with_mde;
    opt.mde_point_budget = ps.budget;
    const auto results = pse::verify_scenario(scenario, opt);
    Json rows = Json::array();
    for (const auto& v : results) {
      Json r;
      r["setup"] = v.setup_id;
      r["theory_effect"] = v.theory_effect;
      r["mc_effect"] = v.mc_effect;
      r["ci_low"] = v.ci_low;
      r["ci_high"] = v.ci_high;
      r["effect_in_ci"] = v.effect_in_ci;
      r["theory_mde"] = v.theory_mde;
      if (ps.with_mde) r["empirical_mde"] = v.empirical_mde;
      rows.push_back(r);
    }
    report["rows"] = rows;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);  // --help and friends
    }
    err << "error: " << e.what() << '\n';
    err << app.help() << '\n';
    return 2;
  } catch (const input_error& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const numeric_error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  detail::emit(report, format, out);
  return 0;
}

}  // namespace demlab::cli
