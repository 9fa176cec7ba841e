#include <catch2/catch_amalgamated.hpp>

#include "mcs/diagnostics.hpp"
#include "mcs/samplers.hpp"
#include "mcs/targets.hpp"
#include "support/discrete.hpp"

using namespace mcs;

namespace {

ChainTrace trace_from_series(const std::vector<double>& xs) {
  ChainTrace tr;
  tr.dim = 1;
  tr.length = (long)xs.size();
  tr.states = xs;
  tr.log_density.assign(xs.size(), 0.0);
  tr.accepted.assign(xs.size(), 1);
  return tr;
}

GmsRun tiny_run(std::vector<WeightedSet> sets, std::vector<std::uint8_t> accepted) {
  GmsRun run;
  run.dim = sets[0].dim;
  run.candidates = sets[0].size;
  run.length = (long)sets.size();
  run.initial_state = std::vector<double>((std::size_t)run.dim, 0.0);
  run.sets = std::move(sets);
  run.accepted = std::move(accepted);
  run.log_zhat.assign((std::size_t)run.length, 0.0);
  return run;
}

double first_coord(std::span<const double> x) { return x[0]; }

}  // namespace

TEST_CASE("chain means") {
  SECTION("constant chain") {
    const auto tr = trace_from_series({3.5, 3.5, 3.5});
    REQUIRE(chain_mean_estimator(tr) == std::vector<double>{3.5});
  }
  SECTION("two-state alternation") {
    const auto tr = trace_from_series({0, 1, 0, 1, 0, 1});
    REQUIRE(chain_mean_estimator(tr) == std::vector<double>{0.5});
  }
  SECTION("independent draws from the mixture hit the analytic mean") {
    const auto mix = trimodal_mixture(1);
    std::mt19937_64 g(8);
    const long T = 5000;
    std::vector<double> xs((std::size_t)T);
    for (auto& x : xs) mix.sample(g, std::span<double>(&x, 1));
    const auto m = chain_mean_estimator(trace_from_series(xs));
    REQUIRE_THAT(m[0], Catch::Matchers::WithinAbs(-1.0 / 3.0,
                                                  3 * std::sqrt(85.0 / 18.0 / T)));
  }
  SECTION("burn-in drops the leading fraction") {
    const auto tr = trace_from_series({100, 100, 1, 1});
    REQUIRE(chain_mean_estimator(tr, 0.5) == std::vector<double>{1.0});
  }
}

TEST_CASE("autocorrelation") {
  SECTION("lag zero is one") {
    std::mt19937_64 g(1);
    std::vector<double> xs(500);
    for (auto& x : xs) x = normal01(g);
    REQUIRE(autocorr(xs, 0) == 1.0);
  }
  SECTION("strict alternation approaches minus one") {
    std::vector<double> xs(1000);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (i % 2 == 0) ? 1.0 : -1.0;
    REQUIRE_THAT(autocorr(xs, 1), Catch::Matchers::WithinAbs(-1.0, 2.0 / 1000));
  }
  SECTION("white noise stays inside the sampling band") {
    std::mt19937_64 g(2);
    const long T = 100000;
    std::vector<double> xs((std::size_t)T);
    for (auto& x : xs) x = normal01(g);
    REQUIRE(std::abs(autocorr(xs, 1)) <= 3.0 / std::sqrt((double)T));
  }
  SECTION("bounded by one on arbitrary series") {
    std::mt19937_64 g(3);
    std::vector<double> xs(200);
    for (auto& x : xs) x = std::exp(3.0 * normal01(g));
    for (long tau : {1L, 2L, 5L, 50L}) REQUIRE(std::abs(autocorr(xs, tau)) <= 1.0 + 1e-12);
  }
  SECTION("degenerate series") {
    std::vector<double> flat(100, 2.0);
    REQUIRE_THROWS_AS(autocorr(flat, 1), undefined_statistic_error);
  }
}

TEST_CASE("chain effective size") {
  SECTION("zero lag budget returns the full length") {
    std::vector<double> xs = {1, 2, 3, 4};
    REQUIRE(ess_of_chain(xs, 0) == 4.0);
    REQUIRE(ess_from_autocorr(123, {}) == 123.0);
  }
  SECTION("independent draws count almost fully") {
    std::mt19937_64 g(4);
    const long T = 10000;
    std::vector<double> xs((std::size_t)T);
    for (auto& x : xs) x = normal01(g);
    const double r = ess_of_chain(xs) / (double)T;
    REQUIRE(r > 0.9);
    REQUIRE(r < 1.1);
  }
  SECTION("sticky chains discount by the holding time") {
    // Geometric holding with mean k has autocorrelation (1-1/k)^tau, so the
    // discounted size tends to T / (2k - 1).
    std::mt19937_64 g(5);
    const int k = 3;
    const long T = 100000;
    std::vector<double> xs;
    xs.reserve((std::size_t)T);
    double level = normal01(g);
    while ((long)xs.size() < T) {
      if (uniform01(g) < 1.0 / k) level = normal01(g);
      xs.push_back(level);
    }
    const double r = ess_of_chain(xs, 30) / (double)T;
    REQUIRE_THAT(r, Catch::Matchers::WithinRel(1.0 / (2.0 * k - 1.0), 0.1));
  }
  SECTION("clamped into (0, T]") {
    std::vector<double> phis = {-0.9};  // would push the denominator negative
    REQUIRE(ess_from_autocorr(100, phis) == 100.0);
    std::vector<double> huge = {10.0};
    REQUIRE(ess_from_autocorr(100, huge) > 0.0);
  }
}

TEST_CASE("weighted-set estimator") {
  WeightedSet s1{1, 2, {1.0, 3.0}, {std::log(0.5), std::log(0.5)}, {0.0, 0.0}};
  SECTION("equal weights reduce to the plain mean") {
    auto run = tiny_run({s1}, {1});
    REQUIRE_THAT(gms_estimate(run, first_coord), Catch::Matchers::WithinAbs(2.0, 1e-14));
  }
  SECTION("identical sets give the single-set value") {
    WeightedSet s2{1, 2, {1.0, 3.0}, {std::log(0.2), std::log(0.8)}, {0.0, 0.0}};
    auto once = tiny_run({s2}, {1});
    auto thrice = tiny_run({s2, s2, s2}, {1, 0, 0});
    REQUIRE_THAT(gms_estimate(thrice, first_coord),
                 Catch::Matchers::WithinAbs(gms_estimate(once, first_coord), 1e-14));
  }
  SECTION("per-set weight scaling drops out") {
    WeightedSet scaled = s1;
    for (auto& w : scaled.log_weights) w += 7.25;
    auto a = tiny_run({s1, s1}, {1, 0});
    auto b = tiny_run({s1, scaled}, {1, 1});
    REQUIRE_THAT(gms_estimate(a, first_coord),
                 Catch::Matchers::WithinAbs(gms_estimate(b, first_coord), 1e-13));
  }
  SECTION("a degenerate set names its iteration") {
    WeightedSet dead{1, 2, {1.0, 3.0}, {kNegInf, kNegInf}, {kNegInf, kNegInf}};
    auto run = tiny_run({s1, dead}, {1, 1});
    try {
      gms_estimate(run, first_coord);
      FAIL("expected degeneracy");
    } catch (const degenerate_weights_error& e) {
      REQUIRE(e.step == 1);
    }
  }
}

TEST_CASE("chain recovery from a set run") {
  const auto mix = trimodal_mixture(1);
  const auto target = mix.target();
  const auto prop = gaussian_independent({0.0}, std::sqrt(2.0));

  SECTION("rejected sets repeat the previous state") {
    WeightedSet s{1, 1, {2.5}, {0.0}, {-1.0}};
    auto run = tiny_run({s, s, s}, {1, 0, 0});
    std::mt19937_64 g(1);
    const auto tr = recover_imtm2_chain(run, g);
    REQUIRE(tr.states == std::vector<double>{2.5, 2.5, 2.5});
    REQUIRE(tr.log_density == std::vector<double>{-1.0, -1.0, -1.0});
  }
  SECTION("one-candidate sets recover their sole members") {
    WeightedSet a{1, 1, {1.0}, {0.0}, {0.0}};
    WeightedSet b{1, 1, {4.0}, {0.0}, {0.0}};
    auto run = tiny_run({a, b, b}, {1, 1, 0});
    std::mt19937_64 g(2);
    const auto tr = recover_imtm2_chain(run, g);
    REQUIRE(tr.states == std::vector<double>{1.0, 4.0, 4.0});
  }
  SECTION("recovered chain keeps the target law") {
    const auto dtarget = testsupport::make_discrete_target({0.4, 0.1, 0.3, 0.2});
    const auto dprop = testsupport::make_discrete_independent({0.25, 0.35, 0.15, 0.25});
    RunOptions opts;
    opts.init_state = std::vector<double>{0.0};
    const long T = 300000;
    const GmsRun run = run_gms(dtarget, dprop, T, 2, 7, opts);
    std::mt19937_64 g(3);
    const auto tr = recover_imtm2_chain(run, g);
    const auto counts = testsupport::state_counts(tr, 4);
    const std::vector<double> pi = {0.4, 0.1, 0.3, 0.2};
    std::vector<double> indicator((std::size_t)T);
    for (int i = 0; i < 4; ++i) {
      for (long t = 0; t < T; ++t)
        indicator[(std::size_t)t] =
            testsupport::state_index(tr.state(t)[0]) == i ? 1.0 : 0.0;
      const double ess = ess_of_chain(indicator, 50);
      const double se =
          std::sqrt(pi[(std::size_t)i] * (1 - pi[(std::size_t)i]) / ess);
      REQUIRE_THAT((double)counts[(std::size_t)i] / (double)T,
                   Catch::Matchers::WithinAbs(pi[(std::size_t)i], 4 * se));
    }
  }
  SECTION("many recovered chains approach the set estimator") {
    const GmsRun run = run_gms(target, prop, 300, 20, 9);
    const double direct = gms_estimate(run, first_coord);
    std::mt19937_64 g(4);
    const int C = 2000;
    const auto rec = recover_parallel_chains(run, C, first_coord, g);
    double var = 0.0;
    for (const auto& tr : rec.chains) {
      double m = 0.0;
      for (long t = 0; t < tr.length; ++t) m += tr.state(t)[0];
      m /= (double)tr.length;
      var += (m - rec.combined_estimate) * (m - rec.combined_estimate);
    }
    var /= (C - 1);
    REQUIRE_THAT(rec.combined_estimate,
                 Catch::Matchers::WithinAbs(direct, 3 * std::sqrt(var / C) + 1e-12));
  }
  SECTION("weights concentrated on one candidate freeze every chain") {
    WeightedSet a{1, 3, {1.0, 2.0, 3.0}, {kNegInf, 0.0, kNegInf}, {0, 0, 0}};
    WeightedSet b{1, 3, {5.0, 6.0, 7.0}, {0.0, kNegInf, kNegInf}, {0, 0, 0}};
    auto run = tiny_run({a, b}, {1, 1});
    std::mt19937_64 g(5);
    const auto rec = recover_parallel_chains(run, 4, first_coord, g);
    for (const auto& tr : rec.chains) {
      REQUIRE(tr.states == std::vector<double>{2.0, 5.0});
      REQUIRE(tr.target_evals == 0);  // recovery costs no density work
    }
  }
}

TEST_CASE("repeated-run error harness") {
  const std::vector<double> truth = {1.0, 2.0};
  SECTION("an exact estimator scores zero") {
    auto run_one = [&](std::uint64_t) { return RunStats{{1.0, 2.0}, 0.5, 1.0}; };
    const auto r = mse_harness(run_one, truth, 8, 1);
    REQUIRE(r.mse == 0.0);
    REQUIRE(r.stderr_ == 0.0);
    REQUIRE(r.acceptance_rate == 0.5);
  }
  SECTION("a unit offset scores one") {
    auto run_one = [&](std::uint64_t) { return RunStats{{2.0, 3.0}, 0.0, 0.0}; };
    REQUIRE(mse_harness(run_one, truth, 4, 1).mse == 1.0);
  }
  SECTION("independent-draw baseline matches variance over draws") {
    const auto mix = trimodal_mixture(2);
    const auto [mean, var] = mixture_moments(mix);
    const long T = 200;
    auto run_one = [&](std::uint64_t s) {
      std::mt19937_64 g(s);
      std::vector<double> acc(2, 0.0), x(2);
      for (long t = 0; t < T; ++t) {
        mix.sample(g, x);
        acc[0] += x[0];
        acc[1] += x[1];
      }
      for (auto& v : acc) v /= (double)T;
      return RunStats{acc, 1.0, 1.0};
    };
    const auto r = mse_harness(run_one, mean, 400, 99);
    const double expected = (var[0] + var[1]) / 2.0 / (double)T;
    REQUIRE_THAT(r.mse, Catch::Matchers::WithinAbs(expected, 3 * r.stderr_));
  }
  SECTION("results do not depend on the worker count") {
    auto run_one = [&](std::uint64_t s) {
      std::mt19937_64 g(s);
      return RunStats{{normal01(g), normal01(g)}, 0.0, 0.0};
    };
    const auto a = mse_harness(run_one, truth, 16, 5, 1);
    const auto b = mse_harness(run_one, truth, 16, 5, 4);
    REQUIRE(a.per_run == b.per_run);
  }
  REQUIRE_THROWS_AS(mse_harness([](std::uint64_t) { return RunStats{}; }, truth, 1, 1),
                    invalid_parameter);
}

TEST_CASE("run summaries") {
  const auto mix = trimodal_mixture(1);
  const auto target = mix.target();
  const auto prop = gaussian_independent({0.0}, std::sqrt(2.0));
  const auto tr = run_imtm(target, prop, 2000, 10, 31);
  const auto [mean, var] = mixture_moments(mix);
  std::vector<double> truth = mean;
  truth.insert(truth.end(), var.begin(), var.end());
  const RunSummary s = summarize(tr, truth);
  REQUIRE(s.estimate.size() == 2);
  REQUIRE(s.acceptance_rate >= 0.0);
  REQUIRE(s.acceptance_rate <= 1.0);
  for (double phi : s.autocorrelation) REQUIRE(std::abs(phi) <= 1.0 + 1e-12);
  REQUIRE(s.ess > 0.0);
  REQUIRE(s.ess <= 2000.0);
  REQUIRE(s.evals == 10 * 2000);
  const auto j = s.to_json();
  REQUIRE(j.contains("mse"));
  REQUIRE(j.contains("ess"));
}

TEST_CASE("zero autocorrelations leave the full sample count") {
  const std::vector<double> zeros = {0.0, 0.0, 0.0};
  REQUIRE(ess_from_autocorr(500, zeros) == 500.0);
}
