#include <catch2/catch_amalgamated.hpp>

#include "mcs/proposal.hpp"
#include "mcs/targets.hpp"

using namespace mcs;

namespace {

// Trapezoid quadrature of exp(log_density) on [-lim, lim].
double normalization_1d(const std::function<double(double)>& logq, double lim,
                        int n = 20000) {
  const double h = 2.0 * lim / n;
  double acc = 0.5 * (std::exp(logq(-lim)) + std::exp(logq(lim)));
  for (int i = 1; i < n; ++i) acc += std::exp(logq(-lim + i * h));
  return acc * h;
}

}  // namespace

TEST_CASE("independent gaussian proposal") {
  SECTION("density values") {
    const auto p1 = gaussian_independent({0.0}, 1.0);
    const std::vector<double> zero = {0.0};
    REQUIRE_THAT(p1.log_density(zero),
                 Catch::Matchers::WithinAbs(-0.5 * std::log(kTwoPi), 1e-14));
    const auto p2 = gaussian_independent({0.0, 0.0}, 2.0);
    const std::vector<double> x = {2.0, 0.0};
    REQUIRE_THAT(p2.log_density(x),
                 Catch::Matchers::WithinAbs(-std::log(kTwoPi * 4.0) - 0.5, 1e-14));
  }
  SECTION("sample mean") {
    const std::vector<double> mu = {1.5, -2.0};
    const auto p = gaussian_independent(mu, 1.0);
    std::mt19937_64 g(1);
    std::vector<double> x(2), acc(2, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      p.sample(g, x);
      acc[0] += x[0];
      acc[1] += x[1];
    }
    REQUIRE_THAT(acc[0] / n, Catch::Matchers::WithinAbs(mu[0], 0.02));
    REQUIRE_THAT(acc[1] / n, Catch::Matchers::WithinAbs(mu[1], 0.02));
  }
  SECTION("normalization") {
    const auto p = gaussian_independent({0.3}, 1.7);
    const double z = normalization_1d(
        [&](double x) { return p.log_density(std::span<const double>(&x, 1)); }, 15.0);
    REQUIRE_THAT(z, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }
  SECTION("parameter validation") {
    REQUIRE_THROWS_AS(gaussian_independent({0.0}, 0.0), invalid_parameter);
    REQUIRE_THROWS_AS(gaussian_independent({0.0}, -1.0), invalid_parameter);
  }
}

TEST_CASE("random walk proposal") {
  const auto p = gaussian_random_walk(2, 1.3);
  REQUIRE(p.symmetric);
  SECTION("exact symmetry in the log domain") {
    std::mt19937_64 g(3);
    std::vector<double> a(2), b(2);
    for (int i = 0; i < 100; ++i) {
      for (auto& v : a) v = uniform_in(g, -5, 5);
      for (auto& v : b) v = uniform_in(g, -5, 5);
      REQUIRE(p.log_density(a, b) == p.log_density(b, a));
    }
  }
  SECTION("at zero displacement it matches the independent density at its mean") {
    const auto q = gaussian_independent({0.0, 0.0}, 1.3);
    const std::vector<double> zero = {0.0, 0.0};
    REQUIRE(p.log_density(zero, zero) == q.log_density(zero));
  }
  SECTION("increment variance") {
    const auto p1 = gaussian_random_walk(1, 2.0);
    std::mt19937_64 g(5);
    const std::vector<double> origin = {0.0};
    std::vector<double> x(1);
    double s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      p1.sample(origin, g, x);
      s2 += x[0] * x[0];
    }
    REQUIRE_THAT(s2 / n, Catch::Matchers::WithinRel(4.0, 0.02));
  }
  SECTION("normalization given the previous point") {
    const std::vector<double> prev = {0.7};
    const auto p1 = gaussian_random_walk(1, 0.9);
    const double z = normalization_1d(
        [&](double x) { return p1.log_density(std::span<const double>(&x, 1), prev); },
        12.0);
    REQUIRE_THAT(z, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }
  REQUIRE_THROWS_AS(gaussian_random_walk(1, 0.0), invalid_parameter);
}

TEST_CASE("gradient-drifted proposal") {
  SECTION("zero gradient reduces to the random walk draw") {
    LogTarget flatish;
    flatish.dim = 1;
    flatish.log_density = [](std::span<const double> x) { return -0.5 * (x[0] - 2.0) * (x[0] - 2.0); };
    flatish.gradient = [](std::span<const double> x, std::span<double> out) {
      out[0] = -(x[0] - 2.0);
    };
    const auto drift = mala_proposal(flatish, 0.8, 0.32);
    const auto walk = gaussian_random_walk(1, 0.8);
    const std::vector<double> at_mode = {2.0};
    std::mt19937_64 g1(11), g2(11);
    std::vector<double> a(1), b(1);
    drift.sample(at_mode, g1, a);
    walk.sample(at_mode, g2, b);
    REQUIRE(a[0] == b[0]);
  }
  SECTION("quadratic target, hand gradient") {
    LogTarget quad;
    quad.dim = 1;
    quad.log_density = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
    quad.gradient = [](std::span<const double> x, std::span<double> out) { out[0] = -x[0]; };
    const auto drift = mala_proposal(quad, 1.0, 0.5);
    const std::vector<double> prev = {2.0};
    // Proposal mean is prev + beta * grad = 2 - 1 = 1.
    const std::vector<double> at_mean = {1.0};
    REQUIRE_THAT(drift.log_density(at_mean, prev),
                 Catch::Matchers::WithinAbs(-0.5 * std::log(kTwoPi), 1e-14));
    std::mt19937_64 g(2);
    std::vector<double> x(1);
    double acc = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      drift.sample(prev, g, x);
      acc += x[0];
    }
    REQUIRE_THAT(acc / n, Catch::Matchers::WithinAbs(1.0, 0.02));
  }
  SECTION("finite-difference fallback matches the analytic mixture gradient") {
    const auto mix = trimodal_mixture(2);
    LogTarget with_grad = mix.target();
    LogTarget without = with_grad;
    without.gradient = nullptr;
    const auto a = mala_proposal(with_grad, 1.0, 0.5);
    const auto b = mala_proposal(without, 1.0, 0.5);
    std::mt19937_64 g(7);
    std::vector<double> prev(2), x(2);
    for (int i = 0; i < 100; ++i) {
      prev[0] = uniform_in(g, -5, 4);
      prev[1] = uniform_in(g, -5, 4);
      x[0] = prev[0] + 0.3;
      x[1] = prev[1] - 0.2;
      REQUIRE_THAT(b.log_density(x, prev),
                   Catch::Matchers::WithinAbs(a.log_density(x, prev), 1e-5));
    }
  }
  SECTION("non-finite gradient falls back to zero drift and counts the event") {
    LogTarget bad;
    bad.dim = 1;
    bad.log_density = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
    bad.gradient = [](std::span<const double>, std::span<double> out) {
      out[0] = std::numeric_limits<double>::quiet_NaN();
    };
    DriftedProposalStats stats;
    const auto drift = mala_proposal(bad, 1.0, 0.5, stats);
    const auto walk = gaussian_random_walk(1, 1.0);
    const std::vector<double> prev = {3.0};
    std::mt19937_64 g1(4), g2(4);
    std::vector<double> a(1), b(1);
    drift.sample(prev, g1, a);
    walk.sample(prev, g2, b);
    REQUIRE(a[0] == b[0]);
    REQUIRE(stats.drift_fallbacks->load() == 1);
  }
}

TEST_CASE("mean adaptation") {
  SECTION("before the training fraction the center stays put") {
    AdaptState st({5.0, 5.0});
    const std::vector<double> out = {1.0, 2.0};
    adapt_mean(st, out, 10, 100);  // 10 < 0.2 * 100
    REQUIRE(st.current == std::vector<double>{5.0, 5.0});
  }
  SECTION("constant outputs adapt to that constant") {
    AdaptState st({0.0});
    const std::vector<double> c = {3.25};
    for (long t = 1; t <= 50; ++t) adapt_mean(st, c, t, 50);
    REQUIRE(st.current == std::vector<double>{3.25});
  }
  SECTION("arithmetic mean of recorded outputs") {
    AdaptState st({9.0});
    for (double v : {1.0, 2.0, 3.0}) {
      const std::vector<double> out = {v};
      adapt_mean(st, out, 40, 100);  // past the training period
    }
    REQUIRE_THAT(st.current[0], Catch::Matchers::WithinAbs(2.0, 1e-15));
  }
}

TEST_CASE("chained path proposal") {
  const auto p = markov_gaussian_proposal(4, -2.0, 2.0, 1.0);
  SECTION("joint density equals the product of the factors") {
    std::mt19937_64 g(13);
    std::vector<double> x(4);
    for (int i = 0; i < 200; ++i) {
      p.sample_path(g, x);
      double manual = p.log_first(x[0]);
      for (int d = 1; d < 4; ++d)
        manual += p.log_next(d, x[(std::size_t)d],
                             std::span<const double>(x.data(), (std::size_t)d));
      REQUIRE_THAT(p.log_joint(x), Catch::Matchers::WithinAbs(manual, 1e-12));
    }
  }
  SECTION("batch view draws the same path from the same stream") {
    const auto ind = p.as_independent();
    std::mt19937_64 g1(21), g2(21);
    std::vector<double> a(4), b(4);
    p.sample_path(g1, a);
    ind.sample(g2, b);
    REQUIRE(a == b);
    REQUIRE(ind.log_density(a) == p.log_joint(a));
  }
}

TEST_CASE("drifted proposal integrates to one given the previous point") {
  LogTarget quad;
  quad.dim = 1;
  quad.log_density = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
  quad.gradient = [](std::span<const double> x, std::span<double> out) { out[0] = -x[0]; };
  const auto drift = mala_proposal(quad, 1.1, 0.6);
  const std::vector<double> prev = {1.7};
  const double z = normalization_1d(
      [&](double x) { return drift.log_density(std::span<const double>(&x, 1), prev); },
      14.0);
  REQUIRE_THAT(z, Catch::Matchers::WithinAbs(1.0, 1e-3));
}
