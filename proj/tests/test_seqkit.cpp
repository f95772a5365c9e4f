#include "demlab/seqkit.hpp"

#include <cmath>
#include <vector>

#include "demlab/simlab.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace demlab;

namespace {

// Builds a two-variant checkpoint stream from pairwise normal draws.
seqkit::ExperimentStream aa_stream(simlab::Rng& rng, long long horizon, long long checkpoints,
                                   double effect = 0.0) {
  seqkit::ExperimentStream stream;
  stream.control.experiment_id = stream.treatment.experiment_id = "exp";
  stream.control.metric_id = stream.treatment.metric_id = "m1";
  stream.control.variant_id = "a";
  stream.treatment.variant_id = "b";
  double sa = 0.0, qa = 0.0, sb = 0.0, qb = 0.0;
  long long n = 0;
  const long long step = horizon / checkpoints;
  for (long long c = 1; c <= checkpoints; ++c) {
    for (long long i = 0; i < step; ++i) {
      const double x = rng.normal();
      const double y = rng.normal(effect, 1.0);
      ++n;
      sa += x;
      qa += x * x;
      sb += y;
      qb += y * y;
    }
    const double nn = static_cast<double>(n);
    demlab::CheckpointRow ra{c, n, sa / nn, (qa - sa * sa / nn) / (nn - 1.0)};
    demlab::CheckpointRow rb{c, n, sb / nn, (qb - sb * sb / nn) / (nn - 1.0)};
    stream.control.rows.push_back(ra);
    stream.treatment.rows.push_back(rb);
  }
  return stream;
}

}  // namespace

TEST_CASE("sprt boundaries and stepping") {
  auto state = seqkit::make_sprt(0.05, 0.05);
  CHECK(state.upper_boundary == doctest::Approx(std::log(19.0)));
  CHECK(state.lower_boundary == doctest::Approx(-std::log(19.0)));
  // zero increments never decide
  for (int i = 0; i < 10000; ++i) {
    CHECK(seqkit::sprt_step(state, 0.0) == seqkit::SprtDecision::continue_sampling);
  }
  CHECK_THROWS_AS(seqkit::sprt_step(state, std::numeric_limits<double>::quiet_NaN()),
                  std::invalid_argument);
  CHECK_THROWS_AS(seqkit::make_sprt(0.0, 0.1), std::invalid_argument);
}

TEST_CASE("sprt accepts H1 at close to the designed rate under H1 data") {
  // one-sample normal with known unit variance, theta0 = 0 vs theta1 = 1
  const double theta1 = 1.0;
  const std::uint64_t streams = 5000;
  const auto outcomes =
      simlab::run_collect<int>(777, streams, 0, [&](std::uint64_t, simlab::Rng& rng) {
        auto s = seqkit::make_sprt(0.05, 0.05);
        for (int i = 0; i < 2000; ++i) {
          const double x = rng.normal(theta1, 1.0);
          const double llr = theta1 * x - 0.5 * theta1 * theta1;  // N(0,1) vs N(theta1,1)
          const auto d = seqkit::sprt_step(s, llr);
          if (d == seqkit::SprtDecision::accept_h1) return 1;
          if (d == seqkit::SprtDecision::accept_h0) return 0;
        }
        return 0;
      });
  double accepted = 0.0;
  for (int o : outcomes) accepted += o;
  CHECK(accepted / static_cast<double>(streams) >= 1.0 - 0.05 - 0.02);
}

TEST_CASE("msprt closed form and monotone p") {
  auto state = seqkit::make_msprt(0.5, 0.0, 0.05);
  SUBCASE("zero deviation leaves only the shrink factor") {
    const auto next = seqkit::msprt_update(state, 1.0, 1.0, 10, 2.0);
    CHECK(next.lambda == doctest::Approx(std::sqrt(2.0 / (2.0 + 10.0 * 0.5))));
    CHECK(next.lambda < 1.0);
    CHECK(next.p_running == doctest::Approx(1.0));  // capped
  }
  SUBCASE("p is non-increasing along any stream") {
    simlab::Rng rng(12);
    auto s = seqkit::make_msprt(0.1, 0.0, 0.05);
    double prev = 1.0;
    for (long long n = 2; n <= 400; ++n) {
      s = seqkit::msprt_update(s, rng.normal(), rng.normal(), n, 2.0);
      CHECK(s.p_running <= prev);
      prev = s.p_running;
    }
  }
  SUBCASE("monotone n is enforced") {
    auto s = seqkit::msprt_update(state, 0.0, 0.0, 5, 2.0);
    CHECK_THROWS_AS(seqkit::msprt_update(s, 0.0, 0.0, 5, 2.0), std::invalid_argument);
  }
}

TEST_CASE("msprt keeps the always-valid guarantee on A/A streams") {
  const std::uint64_t streams = 2000;
  const long long horizon = 5000;
  const auto rejected =
      simlab::run_collect<int>(99, streams, 0, [&](std::uint64_t, simlab::Rng& rng) {
        auto s = seqkit::make_msprt(5.92e-6, 0.0, 0.05);
        double sa = 0.0, sb = 0.0;
        for (long long n = 1; n <= horizon; ++n) {
          sa += rng.normal();
          sb += rng.normal();
          const double nn = static_cast<double>(n);
          s = seqkit::msprt_update(s, sa / nn, sb / nn, n, 2.0);
          if (seqkit::msprt_rejects(s)) return 1;
        }
        return 0;
      });
  double rate = 0.0;
  for (int r : rejected) rate += r;
  rate /= static_cast<double>(streams);
  CHECK(rate <= 0.05);  // typically far below at this mixing variance
}

TEST_CASE("bayes factor update") {
  const testkit::SampleSummary a{200, 0.0, 1.0};
  SUBCASE("at the null centre the factor favours H0") {
    const testkit::SampleSummary b{200, 0.0, 1.0};
    const auto s = seqkit::bayes_update(a, b, 0.0, 0.5, 0.5);
    const double inv_e = 1.0 / 200.0 + 1.0 / 200.0;
    CHECK(s.bf10 == doctest::Approx(std::sqrt(inv_e / (0.5 + inv_e))));
    CHECK(s.bf10 < 1.0);
    CHECK(s.posterior_h0 > 0.5);
  }
  SUBCASE("posterior falls as the statistic moves away from the null") {
    double prev = 1.0;
    for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const testkit::SampleSummary b{200, shift * 0.1, 1.0};
      const auto s = seqkit::bayes_update(a, b, 0.0, 0.25, 0.75);
      CHECK(s.posterior_h0 < prev);
      prev = s.posterior_h0;
    }
  }
  SUBCASE("decomposition identity of the Wald statistic") {
    simlab::Rng rng(41);
    for (int i = 0; i < 10000; ++i) {
      const testkit::SampleSummary sa{2 + static_cast<long long>(rng.below(500)),
                                      rng.normal(0.0, 2.0), 0.1 + 3.0 * rng.uniform()};
      const testkit::SampleSummary sb{2 + static_cast<long long>(rng.below(500)),
                                      rng.normal(0.0, 2.0), 0.1 + 3.0 * rng.uniform()};
      const double delta_true = rng.normal(0.0, 1.0);
      const auto s = seqkit::bayes_update(sa, sb, 0.0, 0.5, 0.5);
      const double n = static_cast<double>(sa.count);
      const double m = static_cast<double>(sb.count);
      const double se = std::sqrt(sa.variance / n + sb.variance / m);
      const double sqrt_w = (sb.mean - sa.mean - delta_true) / se;
      const double pooled = std::sqrt((sa.variance / n + sb.variance / m) / (1.0 / n + 1.0 / m));
      const double delta_std = delta_true / pooled;
      const double recomposed = (s.delta - delta_std) * std::sqrt(s.effective_n);
      CHECK(std::fabs(sqrt_w - recomposed) < 1e-12 * std::max(1.0, std::fabs(sqrt_w)));
      CHECK(s.effective_n == doctest::Approx(1.0 / (1.0 / n + 1.0 / m)));
    }
  }
  SUBCASE("error paths") {
    CHECK_THROWS_AS(seqkit::bayes_update({1, 0.0, 1.0}, {5, 0.0, 1.0}, 0.0, 0.5, 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(seqkit::bayes_update({5, 0.0, 0.0}, {5, 0.0, 0.0}, 0.0, 0.5, 0.5),
                    numeric_error);
  }
}

TEST_CASE("hyperparameter estimation") {
  SUBCASE("identical experiments are degenerate") {
    std::vector<seqkit::ExperimentEnd> ends(5, {1.5e-3, 2.0e-3});
    const auto est = seqkit::estimate_hyperparams(ends);
    CHECK(est.v2_hat == doctest::Approx(0.0));
    CHECK(est.degenerate);
  }
  SUBCASE("two experiments by hand") {
    std::vector<seqkit::ExperimentEnd> ends{{0.0, 0.0}, {2e-3, 1e-3}};
    const auto est = seqkit::estimate_hyperparams(ends);
    CHECK(est.v2_hat == doctest::Approx(2e-6));
    CHECK(est.tau2_scale_hat == doctest::Approx(5e-7));
  }
  SUBCASE("generate and recover the prior variance over 78 experiments") {
    const double v2_true = 0.04;
    simlab::Rng rng(7878);
    std::vector<seqkit::ExperimentEnd> ends;
    for (int e = 0; e < 78; ++e) {
      const double effect = rng.normal(0.0, std::sqrt(v2_true));  // standardised
      const long long n = 20000;
      double sa = 0.0, qa = 0.0, sb = 0.0, qb = 0.0;
      for (long long i = 0; i < n; ++i) {
        const double x = rng.normal();
        const double y = rng.normal(effect, 1.0);
        sa += x;
        qa += x * x;
        sb += y;
        qb += y * y;
      }
      const double nn = static_cast<double>(n);
      const testkit::SampleSummary a{n, sa / nn, (qa - sa * sa / nn) / (nn - 1.0)};
      const testkit::SampleSummary b{n, sb / nn, (qb - sb * sb / nn) / (nn - 1.0)};
      const auto s = seqkit::bayes_update(a, b, 0.0, 1.0, 0.5);
      ends.push_back({s.delta, testkit::cohens_d(a, b)});
    }
    const auto est = seqkit::estimate_hyperparams(ends);
    CHECK(std::fabs(est.v2_hat - v2_true) / v2_true < 0.30);
    CHECK(std::fabs(est.tau2_scale_hat - v2_true) / v2_true < 0.30);
  }
  SUBCASE("needs at least two experiments") {
    std::vector<seqkit::ExperimentEnd> one{{1e-3, 1e-3}};
    CHECK_THROWS_AS(seqkit::estimate_hyperparams(one), std::invalid_argument);
  }
}

TEST_CASE("replay") {
  SUBCASE("a single checkpoint under the fixed reference is a plain t test") {
    simlab::Rng rng(3);
    auto stream = aa_stream(rng, 500, 1, 0.2);
    seqkit::ReplayConfig cfg;
    cfg.monitor = seqkit::Monitor::fixed_t;
    const auto res = seqkit::replay(stream, cfg);
    const auto& a = stream.control.rows[0];
    const auto& b = stream.treatment.rows[0];
    const auto direct = testkit::welch_t_test({a.count_c, a.mean_c, a.variance_c},
                                              {b.count_c, b.mean_c, b.variance_c}, 0.0,
                                              testkit::Alternative::two_sided, 0.05);
    REQUIRE(res.trajectory.size() == 1);
    CHECK(res.trajectory[0].statistic == doctest::Approx(direct.statistic));
    CHECK(res.trajectory[0].p_or_posterior == doctest::Approx(*direct.p_value));
    CHECK(res.final_reject == direct.reject);
  }
  SUBCASE("replays are bit-identical when repeated") {
    simlab::Rng rng(4);
    const auto stream = aa_stream(rng, 2000, 20);
    seqkit::ReplayConfig cfg;
    cfg.monitor = seqkit::Monitor::msprt;
    cfg.tau2 = 1e-4;
    const auto r1 = seqkit::replay(stream, cfg);
    const auto r2 = seqkit::replay(stream, cfg);
    REQUIRE(r1.trajectory.size() == r2.trajectory.size());
    for (std::size_t i = 0; i < r1.trajectory.size(); ++i) {
      CHECK(r1.trajectory[i].p_or_posterior == r2.trajectory[i].p_or_posterior);
      CHECK(r1.trajectory[i].statistic == r2.trajectory[i].statistic);
    }
  }
  SUBCASE("msprt trajectories are monotone and A/A confusion concentrates on neither") {
    const std::uint64_t experiments = 1000;
    const auto rows = simlab::run_collect<std::pair<bool, bool>>(
        31415, experiments, 0, [&](std::uint64_t, simlab::Rng& rng) {
          const auto stream = aa_stream(rng, 1000, 10);
          seqkit::ReplayConfig mcfg;
          mcfg.monitor = seqkit::Monitor::msprt;
          mcfg.tau2_scale = 1e-3;
          const auto m = seqkit::replay(stream, mcfg);
          double prev = 1.0;
          for (const auto& pt : m.trajectory) {
            if (pt.p_or_posterior > prev) throw std::logic_error("p increased");
            prev = pt.p_or_posterior;
          }
          seqkit::ReplayConfig fcfg;
          fcfg.monitor = seqkit::Monitor::fixed_t;
          const auto f = seqkit::replay(stream, fcfg);
          return std::make_pair(m.final_reject, f.final_reject);
        });
    std::vector<bool> monitor_rejects(experiments), reference_rejects(experiments);
    for (std::size_t i = 0; i < experiments; ++i) {
      monitor_rejects[i] = rows[i].first;
      reference_rejects[i] = rows[i].second;
    }
    const auto cm = seqkit::confusion_matrix(monitor_rejects, reference_rejects);
    CHECK(cm.both_reject + cm.monitor_only + cm.reference_only + cm.neither ==
          static_cast<long long>(experiments));
    CHECK(static_cast<double>(cm.neither) / static_cast<double>(experiments) >= 0.90);
  }
  SUBCASE("integrity failures are named") {
    simlab::Rng rng(5);
    auto stream = aa_stream(rng, 500, 5);
    stream.control.rows[3].count_c = stream.control.rows[2].count_c - 10;
    seqkit::ReplayConfig cfg;
    CHECK_THROWS_WITH_AS(seqkit::replay(stream, cfg),
                         doctest::Contains("cumulative count decreases at row 4"), input_error);
  }
  SUBCASE("per-checkpoint alpha schedules") {
    simlab::Rng rng(6);
    const auto stream = aa_stream(rng, 1500, 5, 0.12);
    seqkit::ReplayConfig cfg;
    cfg.monitor = seqkit::Monitor::fixed_t;
    cfg.alpha_schedule = std::vector<double>{0.001, 0.001, 0.001};  // wrong length
    CHECK_THROWS_AS(seqkit::replay(stream, cfg), input_error);
    cfg.alpha_schedule = std::vector<double>(5, 1e-12);  // never reject
    const auto strict = seqkit::replay(stream, cfg);
    CHECK_FALSE(strict.final_reject);
    cfg.alpha_schedule.reset();
    cfg.alpha = 0.05;
    const auto loose = seqkit::replay(stream, cfg);
    CHECK(loose.final_reject);  // a 0.12 sd effect over 1500 pairs clears 5%
  }
}
