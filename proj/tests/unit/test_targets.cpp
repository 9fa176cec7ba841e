#include <catch2/catch_amalgamated.hpp>

#include "mcs/targets.hpp"

using namespace mcs;

namespace {

// Scalar-by-scalar reference for the range-model log posterior.
double wsn_reference(std::span<const double> z, std::span<const double> zeta,
                     std::span<const double> Y, int n_obs, const WsnConfig& cfg) {
  const int S = cfg.n_sensors();
  double acc = 0.0;
  for (int k = 0; k < n_obs; ++k)
    for (int j = 0; j < S; ++j) {
      const double dx = z[0] - cfg.sensors[(std::size_t)j][0];
      const double dy = z[1] - cfg.sensors[(std::size_t)j][1];
      const double dist = std::sqrt(dx * dx + dy * dy);
      const double mean = 20.0 * std::log(dist);
      const double r = Y[(std::size_t)(k * S + j)] - mean;
      const double zj = zeta[(std::size_t)j];
      acc += -0.5 * std::log(2.0 * M_PI * zj * zj) - r * r / (2.0 * zj * zj);
    }
  return acc;
}

}  // namespace

TEST_CASE("mixture moments match the closed form") {
  SECTION("three-bump benchmark values") {
    const auto mix = trimodal_mixture(3);
    const auto [mean, var] = mixture_moments(mix);
    for (int d = 0; d < 3; ++d) {
      REQUIRE_THAT(mean[(std::size_t)d], Catch::Matchers::WithinAbs(-1.0 / 3.0, 1e-15));
      REQUIRE_THAT(var[(std::size_t)d], Catch::Matchers::WithinAbs(85.0 / 18.0, 1e-13));
    }
  }
  SECTION("symmetric identity case") {
    MixtureGaussianTarget m;
    m.dim = 2;
    m.means = {{0, 0}, {0, 0}, {0, 0}};
    m.variances = {1, 1, 1};
    const auto [mean, var] = mixture_moments(m);
    REQUIRE(mean[0] == 0.0);
    REQUIRE_THAT(var[0], Catch::Matchers::WithinAbs(1.0, 1e-15));
  }
  SECTION("two-moment formula against Monte Carlo") {
    MixtureGaussianTarget m;
    m.dim = 1;
    m.means = {{-1.0}, {0.0}, {1.0}};
    m.variances = {2.0, 2.0, 2.0};
    const auto [mean, var] = mixture_moments(m);
    REQUIRE_THAT(mean[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(var[0], Catch::Matchers::WithinAbs(2.0 + 2.0 / 3.0, 1e-14));
    // Independent check by direct sampling.
    std::mt19937_64 g(11);
    const long n = 1000000;
    double s1 = 0.0, s2 = 0.0;
    double x;
    for (long i = 0; i < n; ++i) {
      m.sample(g, std::span<double>(&x, 1));
      s1 += x;
      s2 += x * x;
    }
    const double mc_mean = s1 / n;
    const double mc_var = s2 / n - mc_mean * mc_mean;
    REQUIRE_THAT(mc_mean, Catch::Matchers::WithinAbs(mean[0], 4 * std::sqrt(var[0] / n)));
    REQUIRE_THAT(mc_var, Catch::Matchers::WithinAbs(var[0], 0.02));
  }
}

TEST_CASE("mixture density and gradient are consistent") {
  const auto mix = trimodal_mixture(2);
  const auto t = mix.target();
  std::mt19937_64 g(5);
  std::vector<double> x(2), grad(2), fd(2);
  auto fdg = finite_difference_gradient(t.log_density, 1e-6);
  for (int i = 0; i < 50; ++i) {
    x[0] = uniform_in(g, -6.0, 5.0);
    x[1] = uniform_in(g, -6.0, 5.0);
    REQUIRE(std::isfinite(t.log_density(x)));
    t.gradient(x, grad);
    fdg(x, fd);
    REQUIRE_THAT(grad[0], Catch::Matchers::WithinAbs(fd[0], 1e-6));
    REQUIRE_THAT(grad[1], Catch::Matchers::WithinAbs(fd[1], 1e-6));
  }
}

TEST_CASE("in-support probe gives finite densities") {
  std::mt19937_64 g(17);
  SECTION("factorized product form matches its joint") {
    const FactorizedTarget ft = factorized_gaussian({2, 2, 2, 4, 4, 4, 4, -1, -1, -1}, 0.5);
    const LogTarget joint = ft.joint();
    std::vector<double> x(10);
    for (int i = 0; i < 1000; ++i) {
      for (auto& v : x) v = uniform_in(g, -5.0, 6.0);
      double manual = ft.log_first(x[0]);
      for (int d = 1; d < 10; ++d)
        manual += ft.log_next(d, x[(std::size_t)d],
                              std::span<const double>(x.data(), (std::size_t)d));
      REQUIRE_THAT(joint.log_density(x), Catch::Matchers::WithinAbs(manual, 1e-12));
      REQUIRE(std::isfinite(manual));
    }
  }
  SECTION("range-model posterior is finite on the prior box") {
    WsnConfig cfg;
    const auto ref = cfg.reference_state();
    const auto Y = generate_wsn_observations(3, std::span(ref).subspan(0, 2),
                                             std::span(ref).subspan(2), 20, cfg);
    WsnTarget wt{cfg, Y, 20};
    const LogTarget t = wt.target();
    std::vector<double> x(8);
    for (int i = 0; i < 100; ++i) {
      cfg.prior_box().sample_uniform(g, x);
      const double lp = t.log_density(x);
      REQUIRE((std::isfinite(lp) || lp == kNegInf));
      if (x[2] > 0.0) REQUIRE(std::isfinite(lp));
    }
  }
}

TEST_CASE("range-model log posterior") {
  SECTION("single sensor, zero residual") {
    WsnConfig cfg;
    cfg.sensors = {{{0.0, 0.0}}};
    const std::vector<double> z = {3.0, 4.0};  // distance 5
    const double zeta = 0.5;
    const std::vector<double> Y = {20.0 * std::log(5.0)};
    const double lp = wsn_log_posterior(z, std::span(&zeta, 1), Y, 1, cfg);
    REQUIRE_THAT(lp, Catch::Matchers::WithinAbs(-0.5 * std::log(2.0 * M_PI * zeta * zeta), 1e-13));

    // Doubling the scale with zero residual costs exactly log 2.
    const double zeta2 = 1.0;
    const double lp2 = wsn_log_posterior(z, std::span(&zeta2, 1), Y, 1, cfg);
    REQUIRE_THAT(lp - lp2, Catch::Matchers::WithinAbs(std::log(2.0), 1e-13));
  }
  SECTION("full configuration against the double-loop reference") {
    WsnConfig cfg;
    const auto ref_state = cfg.reference_state();
    const auto Y = generate_wsn_observations(41, std::span(ref_state).subspan(0, 2),
                                             std::span(ref_state).subspan(2), 20, cfg);
    const std::vector<double> z = {1.5, -2.0};
    const std::vector<double> zeta = {1.0, 2.0, 0.7, 0.5, 3.0, 0.4};
    const double got = wsn_log_posterior(z, zeta, Y, 20, cfg);
    const double want = wsn_reference(z, zeta, Y, 20, cfg);
    REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-12 * std::abs(want)));
  }
  SECTION("support boundaries and singularities") {
    WsnConfig cfg;
    const auto ref = cfg.reference_state();
    const auto Y = generate_wsn_observations(5, std::span(ref).subspan(0, 2),
                                             std::span(ref).subspan(2), 2, cfg);
    std::vector<double> zeta(6, 1.0);
    std::vector<double> z = {31.0, 0.0};  // outside the position box
    REQUIRE(wsn_log_posterior(z, zeta, Y, 2, cfg) == kNegInf);
    z = {0.0, 0.0};
    zeta[2] = 0.0;  // scale at zero
    REQUIRE(wsn_log_posterior(z, zeta, Y, 2, cfg) == kNegInf);
    zeta[2] = 1.0;
    std::atomic<long> hits{0};
    z = {3.0, -8.0};  // exactly on the first sensor
    REQUIRE(wsn_log_posterior(z, zeta, Y, 2, cfg, &hits) == kNegInf);
    REQUIRE(hits.load() == 1);
  }
  SECTION("growing any residual lowers the density") {
    WsnConfig cfg;
    cfg.sensors = {{{0.0, 0.0}}, {{4.0, 0.0}}};
    const std::vector<double> z = {1.0, 1.0};
    const std::vector<double> zeta = {1.0, 2.0};
    std::vector<double> Y = {20.0 * std::log(std::sqrt(2.0)) + 0.3,
                             20.0 * std::log(std::sqrt(10.0)) - 0.1};
    const double base = wsn_log_posterior(z, zeta, Y, 1, cfg);
    Y[0] += 0.5;  // residual 0.3 -> 0.8
    REQUIRE(wsn_log_posterior(z, zeta, Y, 1, cfg) < base);
    Y[0] -= 0.5;
    Y[1] -= 0.4;  // residual -0.1 -> -0.5
    REQUIRE(wsn_log_posterior(z, zeta, Y, 1, cfg) < base);
  }
}

TEST_CASE("range-model observation generator") {
  WsnConfig cfg;
  const std::vector<double> z_star = {2.5, 2.5};
  SECTION("zero noise replays the exact ranges") {
    const std::vector<double> zeta0(6, 0.0);
    const auto Y = generate_wsn_observations(9, z_star, zeta0, 4, cfg);
    for (int j = 0; j < 6; ++j) {
      const double expect = wsn_range_mean(z_star, cfg.sensors[(std::size_t)j]);
      for (int k = 0; k < 4; ++k) REQUIRE(Y[(std::size_t)(k * 6 + j)] == expect);
    }
  }
  SECTION("deterministic under the seed") {
    const std::vector<double> zs = {1.0, 2.0, 1.0, 0.5, 3.0, 0.2};
    REQUIRE(generate_wsn_observations(123, z_star, zs, 20, cfg) ==
            generate_wsn_observations(123, z_star, zs, 20, cfg));
  }
  SECTION("column scatter matches the per-sensor scales") {
    const std::vector<double> zs = {1.0, 2.0, 1.0, 0.5, 3.0, 0.2};
    const int n = 10000;
    const auto Y = generate_wsn_observations(77, z_star, zs, n, cfg);
    for (int j = 0; j < 6; ++j) {
      double s1 = 0.0, s2 = 0.0;
      for (int k = 0; k < n; ++k) {
        const double v = Y[(std::size_t)(k * 6 + j)];
        s1 += v;
        s2 += v * v;
      }
      const double sd = std::sqrt(s2 / n - (s1 / n) * (s1 / n));
      const double se = zs[(std::size_t)j] / std::sqrt(2.0 * n);
      REQUIRE_THAT(sd, Catch::Matchers::WithinAbs(zs[(std::size_t)j], 3 * se));
    }
  }
  SECTION("source on a sensor is rejected") {
    const std::vector<double> zs(6, 1.0);
    const std::vector<double> bad = {3.0, -8.0};
    REQUIRE_THROWS_AS(generate_wsn_observations(1, bad, zs, 2, cfg),
                      singular_geometry_error);
  }
}

TEST_CASE("signal-strength localization target") {
  const std::vector<double> z_star = {2.5, 2.0};
  const auto Y = generate_rss_observations(5, z_star, 5);
  const LogTarget t = rss_target(Y, 5);
  SECTION("analytic gradient agrees with finite differences") {
    auto fdg = finite_difference_gradient(t.log_density, 1e-6);
    std::mt19937_64 g(2);
    std::vector<double> x(2), ga(2), gf(2);
    for (int i = 0; i < 50; ++i) {
      x[0] = uniform_in(g, 0.2, 3.8);
      x[1] = uniform_in(g, 0.2, 3.8);
      t.gradient(x, ga);
      fdg(x, gf);
      REQUIRE_THAT(ga[0], Catch::Matchers::WithinAbs(gf[0], 1e-4));
      REQUIRE_THAT(ga[1], Catch::Matchers::WithinAbs(gf[1], 1e-4));
    }
  }
  SECTION("outside the prior the density vanishes") {
    const std::vector<double> x = {4.5, 1.0};
    REQUIRE(t.log_density(x) == kNegInf);
  }
  SECTION("generation is deterministic") {
    REQUIRE(generate_rss_observations(5, z_star, 5) == Y);
  }
}

TEST_CASE("observation matrices round-trip through csv") {
  WsnConfig cfg;
  const auto ref = cfg.reference_state();
  const auto Y = generate_wsn_observations(3, std::span(ref).subspan(0, 2),
                                           std::span(ref).subspan(2), 7, cfg);
  const std::string csv = wsn_observations_to_csv(Y, 7, cfg);
  int n_obs = 0;
  const auto back = wsn_observations_from_csv(csv, n_obs);
  REQUIRE(n_obs == 7);
  REQUIRE(back == Y);
}
