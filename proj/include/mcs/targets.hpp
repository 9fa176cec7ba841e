#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <sstream>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/io.hpp"
#include "mcs/logmath.hpp"
#include "mcs/target.hpp"

namespace mcs {

// ---------------------------------------------------------------------------
// Equal-weight isotropic Gaussian mixture with closed-form marginal moments.
// ---------------------------------------------------------------------------

struct MixtureGaussianTarget {
  int dim = 1;
  std::vector<std::vector<double>> means;  // one vector per component
  std::vector<double> variances;           // isotropic variance per component

  int components() const { return static_cast<int>(means.size()); }

  double log_density(std::span<const double> x) const {
    const int k = components();
    std::vector<double> comp(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const double sd = std::sqrt(variances[static_cast<std::size_t>(i)]);
      double s = -std::log(static_cast<double>(k));
      for (int d = 0; d < dim; ++d)
        s += log_normal_pdf(x[static_cast<std::size_t>(d)],
                            means[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)], sd);
      comp[static_cast<std::size_t>(i)] = s;
    }
    return logsumexp(comp);
  }

  void gradient(std::span<const double> x, std::span<double> out) const {
    const int k = components();
    std::vector<double> comp(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const double sd = std::sqrt(variances[static_cast<std::size_t>(i)]);
      double s = -std::log(static_cast<double>(k));
      for (int d = 0; d < dim; ++d)
        s += log_normal_pdf(x[static_cast<std::size_t>(d)],
                            means[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)], sd);
      comp[static_cast<std::size_t>(i)] = s;
    }
    const double total = logsumexp(comp);
    for (int d = 0; d < dim; ++d) out[static_cast<std::size_t>(d)] = 0.0;
    for (int i = 0; i < k; ++i) {
      const double resp = std::exp(comp[static_cast<std::size_t>(i)] - total);
      for (int d = 0; d < dim; ++d) {
        const auto di = static_cast<std::size_t>(d);
        out[di] -= resp *
                   (x[di] - means[static_cast<std::size_t>(i)][di]) /
                   variances[static_cast<std::size_t>(i)];
      }
    }
  }

  /// Exact draw; used by i.i.d. baselines and histogram noise floors.
  void sample(std::mt19937_64& g, std::span<double> out) const {
    const int k = components();
    const int i = std::min(k - 1, static_cast<int>(uniform01(g) * k));
    const double sd = std::sqrt(variances[static_cast<std::size_t>(i)]);
    for (int d = 0; d < dim; ++d)
      out[static_cast<std::size_t>(d)] =
          means[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] + sd * normal01(g);
  }

  LogTarget target() const {
    auto self = std::make_shared<MixtureGaussianTarget>(*this);
    LogTarget t;
    t.dim = dim;
    t.log_density = [self](std::span<const double> x) { return self->log_density(x); };
    t.gradient = [self](std::span<const double> x, std::span<double> out) {
      self->gradient(x, out);
    };
    return t;
  }
};

/// Per-dimension mean and variance of the mixture, in closed form.
inline std::pair<std::vector<double>, std::vector<double>> mixture_moments(
    const MixtureGaussianTarget& m) {
  const int k = m.components();
  std::vector<double> mean(static_cast<std::size_t>(m.dim), 0.0);
  std::vector<double> var(static_cast<std::size_t>(m.dim), 0.0);
  for (int d = 0; d < m.dim; ++d) {
    const auto di = static_cast<std::size_t>(d);
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      m1 += m.means[ii][di];
      m2 += m.variances[ii] + m.means[ii][di] * m.means[ii][di];
    }
    mean[di] = m1 / k;
    var[di] = m2 / k - mean[di] * mean[di];
  }
  return {mean, var};
}

/// The three-bump benchmark mixture: component means -3, 0, 2 replicated
/// across dimensions, common variance 0.5.
inline MixtureGaussianTarget trimodal_mixture(int dim) {
  MixtureGaussianTarget m;
  m.dim = dim;
  for (double mu : {-3.0, 0.0, 2.0})
    m.means.push_back(std::vector<double>(static_cast<std::size_t>(dim), mu));
  m.variances = {0.5, 0.5, 0.5};
  return m;
}

// ---------------------------------------------------------------------------
// Product-form Gaussian target, the test bed for sequential candidate
// generation.
// ---------------------------------------------------------------------------

inline FactorizedTarget factorized_gaussian(std::vector<double> mu, double sigma) {
  if (sigma <= 0.0) throw invalid_parameter("factorized_gaussian: sigma must be > 0");
  FactorizedTarget t;
  t.dim = static_cast<int>(mu.size());
  auto means = std::make_shared<std::vector<double>>(std::move(mu));
  t.log_first = [means, sigma](double x) {
    return log_normal_pdf(x, (*means)[0], sigma);
  };
  t.log_next = [means, sigma](int d, double x, std::span<const double>) {
    return log_normal_pdf(x, (*means)[static_cast<std::size_t>(d)], sigma);
  };
  return t;
}

// ---------------------------------------------------------------------------
// Range-based localization with per-sensor noise scales.
// State is theta = [z_1, z_2, zeta_1..zeta_S]; flat priors on boxes.
// ---------------------------------------------------------------------------

struct WsnConfig {
  std::vector<std::array<double, 2>> sensors = {
      {{3.0, -8.0}}, {{8.0, 10.0}}, {{-4.0, -6.0}},
      {{-8.0, 1.0}}, {{10.0, 0.0}}, {{0.0, 10.0}}};
  double z_lo = -30.0, z_hi = 30.0;
  double zeta_lo = 0.0, zeta_hi = 20.0;

  int n_sensors() const { return static_cast<int>(sensors.size()); }
  int dim() const { return 2 + n_sensors(); }

  Box prior_box() const {
    Box b = Box::cube(dim(), zeta_lo, zeta_hi);
    b.lo[0] = b.lo[1] = z_lo;
    b.hi[0] = b.hi[1] = z_hi;
    return b;
  }

  std::vector<double> reference_state() const {
    // The configuration the synthetic observations are generated from.
    std::vector<double> s = {2.5, 2.5, 1.0, 2.0, 1.0, 0.5, 3.0, 0.2};
    s.resize(static_cast<std::size_t>(dim()), 1.0);
    return s;
  }
};

inline double wsn_range_mean(std::span<const double> z,
                             const std::array<double, 2>& h) {
  const double dx = z[0] - h[0], dy = z[1] - h[1];
  return 20.0 * 0.5 * std::log(dx * dx + dy * dy);  // 20 * log(distance)
}

/// Log posterior of (z, zeta) given the observation matrix Y (n_obs rows,
/// n_sensors columns, row-major). Returns -inf outside the prior boxes and at
/// the log-range singularity z == h_j; the latter also bumps `singular_hits`
/// when a counter is supplied.
inline double wsn_log_posterior(std::span<const double> z,
                                std::span<const double> zeta,
                                std::span<const double> Y, int n_obs,
                                const WsnConfig& cfg,
                                std::atomic<long>* singular_hits = nullptr) {
  const int S = cfg.n_sensors();
  if (z[0] < cfg.z_lo || z[0] > cfg.z_hi || z[1] < cfg.z_lo || z[1] > cfg.z_hi)
    return kNegInf;
  for (int j = 0; j < S; ++j) {
    const double zj = zeta[static_cast<std::size_t>(j)];
    if (zj <= 0.0 || zj > cfg.zeta_hi) return kNegInf;
  }
  double acc = 0.0;
  for (int j = 0; j < S; ++j) {
    const auto& h = cfg.sensors[static_cast<std::size_t>(j)];
    const double dx = z[0] - h[0], dy = z[1] - h[1];
    const double d2 = dx * dx + dy * dy;
    if (d2 == 0.0) {
      if (singular_hits) singular_hits->fetch_add(1, std::memory_order_relaxed);
      return kNegInf;
    }
    const double mean = 10.0 * std::log(d2);  // == 20 log(distance)
    const double zj = zeta[static_cast<std::size_t>(j)];
    for (int k = 0; k < n_obs; ++k)
      acc += log_normal_pdf(Y[static_cast<std::size_t>(k * S + j)], mean, zj);
  }
  return acc;
}

/// Observation matrix (n_obs x n_sensors, row-major) from the range model.
inline std::vector<double> generate_wsn_observations(
    std::uint64_t seed, std::span<const double> z_star,
    std::span<const double> zeta_star, int n_obs, const WsnConfig& cfg = {}) {
  const int S = cfg.n_sensors();
  for (int j = 0; j < S; ++j) {
    const auto& h = cfg.sensors[static_cast<std::size_t>(j)];
    if (z_star[0] == h[0] && z_star[1] == h[1])
      throw singular_geometry_error("generate_wsn_observations: source sits on a sensor");
  }
  std::mt19937_64 g(derive_seed(seed, streams::data, 0));
  std::vector<double> Y(static_cast<std::size_t>(n_obs * S));
  for (int k = 0; k < n_obs; ++k)
    for (int j = 0; j < S; ++j) {
      const double mean = wsn_range_mean(z_star, cfg.sensors[static_cast<std::size_t>(j)]);
      Y[static_cast<std::size_t>(k * S + j)] =
          mean + zeta_star[static_cast<std::size_t>(j)] * normal01(g);
    }
  return Y;
}

/// Matrix header names the sensors by position.
inline std::string wsn_observations_to_csv(std::span<const double> Y, int n_obs,
                                           const WsnConfig& cfg) {
  const int S = cfg.n_sensors();
  std::string out;
  for (int j = 0; j < S; ++j) {
    const auto& h = cfg.sensors[static_cast<std::size_t>(j)];
    if (j) out += ',';
    out += "sensor_" + std::to_string(j + 1) + "_at_" + format_double(h[0]) + "_" +
           format_double(h[1]);
  }
  out += '\n';
  for (int k = 0; k < n_obs; ++k) {
    for (int j = 0; j < S; ++j) {
      if (j) out += ',';
      out += format_double(Y[static_cast<std::size_t>(k * S + j)]);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<double> wsn_observations_from_csv(const std::string& csv,
                                                     int& n_obs_out) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw config_error("wsn csv: empty");
  const int S = static_cast<int>(split_csv_line(line).size());
  std::vector<double> Y;
  n_obs_out = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != S) throw config_error("wsn csv: ragged row");
    for (auto& c : cells) Y.push_back(std::stod(c));
    ++n_obs_out;
  }
  return Y;
}

struct WsnTarget {
  WsnConfig cfg;
  std::vector<double> Y;  // n_obs x n_sensors
  int n_obs = 0;
  std::shared_ptr<std::atomic<long>> singular_hits =
      std::make_shared<std::atomic<long>>(0);

  LogTarget target() const {
    auto self = std::make_shared<WsnTarget>(*this);
    LogTarget t;
    t.dim = cfg.dim();
    t.support = cfg.prior_box();
    t.log_density = [self](std::span<const double> x) {
      const int S = self->cfg.n_sensors();
      return wsn_log_posterior(x.subspan(0, 2), x.subspan(2, static_cast<std::size_t>(S)),
                               self->Y, self->n_obs, self->cfg,
                               self->singular_hits.get());
    };
    return t;
  }
};

// ---------------------------------------------------------------------------
// Received-signal-strength localization: two unknown coordinates, fixed
// path-loss offset and noise scale.
// ---------------------------------------------------------------------------

struct RssConfig {
  std::vector<std::array<double, 2>> sensors = {
      {{0.5, 1.0}}, {{3.5, 1.0}}, {{2.0, 3.0}}};
  double kappa = -26.58;
  double zeta = 4.73;
  Box prior = Box::cube(2, 0.0, 4.0);

  int n_sensors() const { return static_cast<int>(sensors.size()); }
};

inline std::vector<double> generate_rss_observations(std::uint64_t seed,
                                                     std::span<const double> z_star,
                                                     int n_obs,
                                                     const RssConfig& cfg = {}) {
  std::mt19937_64 g(derive_seed(seed, streams::data, 1));
  const int S = cfg.n_sensors();
  std::vector<double> Y(static_cast<std::size_t>(n_obs * S));
  for (int k = 0; k < n_obs; ++k)
    for (int i = 0; i < S; ++i) {
      const auto& h = cfg.sensors[static_cast<std::size_t>(i)];
      const double dx = z_star[0] - h[0], dy = z_star[1] - h[1];
      const double mean = cfg.kappa - 10.0 * std::log(dx * dx + dy * dy);
      Y[static_cast<std::size_t>(k * S + i)] = mean + cfg.zeta * normal01(g);
    }
  return Y;
}

/// Posterior over the source position; carries an analytic gradient for
/// drifted proposals.
inline LogTarget rss_target(std::vector<double> Y, int n_obs, RssConfig cfg = {}) {
  auto data = std::make_shared<std::vector<double>>(std::move(Y));
  auto conf = std::make_shared<RssConfig>(std::move(cfg));
  LogTarget t;
  t.dim = 2;
  t.support = conf->prior;
  t.log_density = [data, conf, n_obs](std::span<const double> z) {
    if (!conf->prior.contains(z)) return kNegInf;
    const int S = conf->n_sensors();
    double acc = 0.0;
    for (int i = 0; i < S; ++i) {
      const auto& h = conf->sensors[static_cast<std::size_t>(i)];
      const double dx = z[0] - h[0], dy = z[1] - h[1];
      const double d2 = dx * dx + dy * dy;
      if (d2 == 0.0) return kNegInf;
      const double mean = conf->kappa - 10.0 * std::log(d2);
      for (int k = 0; k < n_obs; ++k)
        acc += log_normal_pdf((*data)[static_cast<std::size_t>(k * S + i)], mean,
                              conf->zeta);
    }
    return acc;
  };
  t.gradient = [data, conf, n_obs](std::span<const double> z, std::span<double> out) {
    out[0] = out[1] = 0.0;
    if (!conf->prior.contains(z)) return;
    const int S = conf->n_sensors();
    const double inv_var = 1.0 / (conf->zeta * conf->zeta);
    for (int i = 0; i < S; ++i) {
      const auto& h = conf->sensors[static_cast<std::size_t>(i)];
      const double dx = z[0] - h[0], dy = z[1] - h[1];
      const double d2 = dx * dx + dy * dy;
      if (d2 == 0.0) return;
      const double mean = conf->kappa - 10.0 * std::log(d2);
      for (int k = 0; k < n_obs; ++k) {
        const double r = (*data)[static_cast<std::size_t>(k * S + i)] - mean;
        // d(resid)/dz = +20 (z - h) / d^2
        out[0] += -r * inv_var * 20.0 * dx / d2;
        out[1] += -r * inv_var * 20.0 * dy / d2;
      }
    }
  };
  return t;
}

}  // namespace mcs
