#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/logmath.hpp"
#include "mcs/rng.hpp"
#include "mcs/target.hpp"

namespace mcs {

/// Proposal that ignores the current chain state.
struct IndependentProposal {
  int dim = 0;
  std::function<void(std::mt19937_64&, std::span<double>)> sample;
  std::function<double(std::span<const double>)> log_density;
};

/// Proposal conditioned on the previous state (random walk, drifted, ...).
/// `symmetric` declares log_density(a|b) == log_density(b|a); weight choices
/// that drop the proposal factor require it.
struct ConditionalProposal {
  int dim = 0;
  bool symmetric = false;
  std::function<void(std::span<const double>, std::mt19937_64&, std::span<double>)> sample;
  std::function<double(std::span<const double>, std::span<const double>)> log_density;
};

/// Proposal that factors coordinate-by-coordinate; the prefix passed to the
/// later factors is the whole sampled path so far.
struct FactorizedProposal {
  int dim = 0;
  std::function<double(std::mt19937_64&)> sample_first;
  std::function<double(double)> log_first;
  std::function<double(int, std::span<const double>, std::mt19937_64&)> sample_next;
  std::function<double(int, double, std::span<const double>)> log_next;

  double log_joint(std::span<const double> x) const {
    double s = log_first(x[0]);
    for (int d = 1; d < dim; ++d)
      s += log_next(d, x[static_cast<std::size_t>(d)],
                    x.subspan(0, static_cast<std::size_t>(d)));
    return s;
  }

  void sample_path(std::mt19937_64& g, std::span<double> out) const {
    out[0] = sample_first(g);
    for (int d = 1; d < dim; ++d)
      out[static_cast<std::size_t>(d)] =
          sample_next(d, out.subspan(0, static_cast<std::size_t>(d)), g);
  }

  /// Batch view: one call draws a full path. Lets batch samplers consume the
  /// same per-slot streams as the sequential engine.
  IndependentProposal as_independent() const {
    auto self = std::make_shared<FactorizedProposal>(*this);
    IndependentProposal p;
    p.dim = dim;
    p.sample = [self](std::mt19937_64& g, std::span<double> out) {
      self->sample_path(g, out);
    };
    p.log_density = [self](std::span<const double> x) { return self->log_joint(x); };
    return p;
  }
};

// ---------------------------------------------------------------------------
// Gaussian builders.
// ---------------------------------------------------------------------------

inline IndependentProposal gaussian_independent(std::vector<double> mu, double sigma) {
  if (sigma <= 0.0) throw invalid_parameter("gaussian_independent: sigma must be > 0");
  auto mean = std::make_shared<std::vector<double>>(std::move(mu));
  IndependentProposal p;
  p.dim = static_cast<int>(mean->size());
  p.sample = [mean, sigma](std::mt19937_64& g, std::span<double> out) {
    for (std::size_t i = 0; i < mean->size(); ++i)
      out[i] = (*mean)[i] + sigma * normal01(g);
  };
  p.log_density = [mean, sigma](std::span<const double> x) {
    return log_normal_pdf(x, *mean, sigma);
  };
  return p;
}

inline ConditionalProposal gaussian_random_walk(int dim, double sigma) {
  if (sigma <= 0.0) throw invalid_parameter("gaussian_random_walk: sigma must be > 0");
  ConditionalProposal p;
  p.dim = dim;
  p.symmetric = true;
  p.sample = [sigma](std::span<const double> prev, std::mt19937_64& g,
                     std::span<double> out) {
    for (std::size_t i = 0; i < prev.size(); ++i) out[i] = prev[i] + sigma * normal01(g);
  };
  p.log_density = [sigma](std::span<const double> x, std::span<const double> prev) {
    return log_normal_pdf(x, prev, sigma);
  };
  return p;
}

/// Gradient-drifted Gaussian: mean prev + beta * grad log pi(prev),
/// covariance sigma^2 I. Falls back to zero drift (and counts the event)
/// whenever the gradient is non-finite. Uses the target's analytic gradient
/// when present, otherwise central finite differences with step 1e-5.
struct DriftedProposalStats {
  std::shared_ptr<std::atomic<long>> drift_fallbacks =
      std::make_shared<std::atomic<long>>(0);
};

inline ConditionalProposal mala_proposal(const LogTarget& target, double sigma,
                                         double beta,
                                         DriftedProposalStats stats = {}) {
  if (sigma <= 0.0) throw invalid_parameter("mala_proposal: sigma must be > 0");
  auto grad = target.has_gradient()
                  ? target.gradient
                  : finite_difference_gradient(target.log_density, 1e-5);
  auto drifted_mean = [grad, beta, stats, dim = target.dim](
                          std::span<const double> prev) {
    std::vector<double> g(static_cast<std::size_t>(dim));
    grad(prev, g);
    bool ok = true;
    for (double v : g)
      if (!std::isfinite(v)) ok = false;
    std::vector<double> mean(prev.begin(), prev.end());
    if (ok) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += beta * g[i];
    } else {
      stats.drift_fallbacks->fetch_add(1, std::memory_order_relaxed);
    }
    return mean;
  };
  ConditionalProposal p;
  p.dim = target.dim;
  p.symmetric = false;
  p.sample = [drifted_mean, sigma](std::span<const double> prev, std::mt19937_64& g,
                                   std::span<double> out) {
    const auto mean = drifted_mean(prev);
    for (std::size_t i = 0; i < mean.size(); ++i) out[i] = mean[i] + sigma * normal01(g);
  };
  p.log_density = [drifted_mean, sigma](std::span<const double> x,
                                        std::span<const double> prev) {
    const auto mean = drifted_mean(prev);
    return log_normal_pdf(x, mean, sigma);
  };
  return p;
}

/// Chained Gaussian path proposal: the first coordinate from N(mu1, sd1^2),
/// each later one centered on its predecessor with scale sd_step.
inline FactorizedProposal markov_gaussian_proposal(int dim, double mu1, double sd1,
                                                   double sd_step) {
  if (sd1 <= 0.0 || sd_step <= 0.0)
    throw invalid_parameter("markov_gaussian_proposal: scales must be > 0");
  FactorizedProposal p;
  p.dim = dim;
  p.sample_first = [mu1, sd1](std::mt19937_64& g) { return mu1 + sd1 * normal01(g); };
  p.log_first = [mu1, sd1](double x) { return log_normal_pdf(x, mu1, sd1); };
  p.sample_next = [sd_step](int, std::span<const double> prefix, std::mt19937_64& g) {
    return prefix.back() + sd_step * normal01(g);
  };
  p.log_next = [sd_step](int, double x, std::span<const double> prefix) {
    return log_normal_pdf(x, prefix.back(), sd_step);
  };
  return p;
}

// ---------------------------------------------------------------------------
// Mean adaptation: record chain outputs, switch the proposal center from mu0
// to their running mean once the training fraction of the run has passed.
// Single-owner state, confined to one chain.
// ---------------------------------------------------------------------------

struct AdaptState {
  std::vector<double> mu0;
  double eta_adapt = 0.2;          // training fraction of the run
  bool accepted_only = false;      // record only accepted iterations
  std::vector<double> sum;
  long count = 0;
  std::vector<double> current;     // mean in effect for the next iteration

  explicit AdaptState(std::vector<double> mu0_, double eta = 0.2)
      : mu0(std::move(mu0_)), eta_adapt(eta), sum(mu0.size(), 0.0), current(mu0) {}

  std::vector<double> running_mean() const {
    std::vector<double> m(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) m[i] = sum[i] / static_cast<double>(count);
    return m;
  }
};

/// Record one output and refresh the effective mean: mu0 until t reaches
/// eta_adapt * T, the arithmetic mean of everything recorded afterwards.
inline void adapt_mean(AdaptState& st, std::span<const double> output, long t, long T) {
  for (std::size_t i = 0; i < st.sum.size(); ++i) st.sum[i] += output[i];
  st.count += 1;
  if (static_cast<double>(t) >= st.eta_adapt * static_cast<double>(T) && st.count > 0)
    st.current = st.running_mean();
  else
    st.current = st.mu0;
}

/// Independent Gaussian whose center tracks an AdaptState owned by the chain.
inline IndependentProposal adaptive_gaussian(std::shared_ptr<AdaptState> state,
                                             double sigma) {
  if (sigma <= 0.0) throw invalid_parameter("adaptive_gaussian: sigma must be > 0");
  IndependentProposal p;
  p.dim = static_cast<int>(state->mu0.size());
  p.sample = [state, sigma](std::mt19937_64& g, std::span<double> out) {
    for (std::size_t i = 0; i < state->current.size(); ++i)
      out[i] = state->current[i] + sigma * normal01(g);
  };
  p.log_density = [state, sigma](std::span<const double> x) {
    return log_normal_pdf(x, state->current, sigma);
  };
  return p;
}

}  // namespace mcs
