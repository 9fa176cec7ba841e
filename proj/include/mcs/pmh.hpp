#pragma once

// Chain samplers whose candidates come from a particle filter pass. Streams
// follow the common protocol: particle slot n propagates from candidate
// stream n, in-filter resampling has its own stream, path selection and the
// accept test use the chain stream.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mcs/particle.hpp"
#include "mcs/samplers.hpp"

namespace mcs {

namespace detail {

struct FilterChainSetup {
  StreamBank cand;
  std::mt19937_64 resample_rng;
  std::mt19937_64 chain;
  FilterChainSetup(std::uint64_t seed, int N)
      : cand(seed, streams::candidate, N),
        resample_rng(derive_seed(seed, streams::resample, 0)),
        chain(derive_seed(seed, streams::chain, 0)) {}
};

}  // namespace detail

/// Particle-filter candidate generation with the running-estimate acceptance
/// ratio: one pass per iteration, one path resampled from the final weights,
/// accept on the ratio of the product-form estimates.
inline ChainTrace run_pmh(const FactorizedTarget& target,
                          const FactorizedProposal& proposal, long T, int N,
                          double eta, std::uint64_t seed,
                          const RunOptions& opts = {}, SirOptions filter = {}) {
  detail::check_run_args(T, N);
  filter.eta = eta;
  const int D = target.dim;
  const LogTarget joint = target.joint();
  ChainTrace tr = detail::make_trace(D, T);
  detail::FilterChainSetup rng(seed, N);

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(joint, opts, seed, lp, tr.init_evals);

  // Disposable pass for the initial estimate.
  double log_z = detail::run_filter(target, proposal, N, filter, rng.cand,
                                    rng.resample_rng)
                     .final_log_zbar();
  tr.init_evals += N;
  if (log_z == kNegInf)
    throw initialization_error("initial filter pass is degenerate");

  for (long t = 0; t < T; ++t) {
    bool acc = false;
    try {
      const ParticleSystem sys =
          detail::run_filter(target, proposal, N, filter, rng.cand, rng.resample_rng);
      tr.target_evals += N;
      const int j = (N == 1) ? 0 : select_index(sys.log_w, rng.chain);
      const double log_zstar = sys.final_log_zbar();
      acc = accept_with(log_accept_from_ratio(log_zstar, log_z), rng.chain);
      if (acc) {
        auto pj = sys.path(j);
        std::copy(pj.begin(), pj.end(), state.begin());
        lp = sys.log_target[static_cast<std::size_t>(j)];
        log_z = log_zstar;
      }
    } catch (const degenerate_weights_error&) {
      tr.target_evals += N;
      ++tr.degenerate_moves;
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

/// Same candidate generation, but the accept ratio swaps the selected entry
/// of the weight sum for the previous state's weight, as in the independent
/// multiple-try scheme. The previous state carries the weight it had when it
/// was selected; with in-filter resampling those are the properly flattened
/// weights, without it they are the raw path weights, and the scheme then
/// coincides with the batch multiple-try chain on paths.
inline ChainTrace run_var_pmh(const FactorizedTarget& target,
                              const FactorizedProposal& proposal, long T, int N,
                              double eta, std::uint64_t seed,
                              const RunOptions& opts = {}, SirOptions filter = {}) {
  detail::check_run_args(T, N);
  filter.eta = eta;
  const int D = target.dim;
  const LogTarget joint = target.joint();
  ChainTrace tr = detail::make_trace(D, T);
  detail::FilterChainSetup rng(seed, N);

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(joint, opts, seed, lp, tr.init_evals);
  double log_w_prev = lp - proposal.log_joint(state);
  std::vector<double> swapped(static_cast<std::size_t>(N));

  for (long t = 0; t < T; ++t) {
    bool acc = false;
    try {
      const ParticleSystem sys =
          detail::run_filter(target, proposal, N, filter, rng.cand, rng.resample_rng);
      tr.target_evals += N;
      const int j = (N == 1) ? 0 : select_index(sys.log_w, rng.chain);
      swapped.assign(sys.log_w.begin(), sys.log_w.end());
      swapped[static_cast<std::size_t>(j)] = log_w_prev;
      const double log_alpha =
          log_accept_from_ratio(logsumexp(sys.log_w), logsumexp(swapped));
      acc = accept_with(log_alpha, rng.chain);
      if (acc) {
        auto pj = sys.path(j);
        std::copy(pj.begin(), pj.end(), state.begin());
        lp = sys.log_target[static_cast<std::size_t>(j)];
        log_w_prev = sys.log_w[static_cast<std::size_t>(j)];
      }
    } catch (const degenerate_weights_error&) {
      tr.target_evals += N;
      ++tr.degenerate_moves;
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// Joint dynamic/static inference. The state block is handled by a filter run
// at the proposed parameter value; the parameter block moves by a classical
// accept test on the filter's evidence estimate times prior and proposal
// corrections.
// ---------------------------------------------------------------------------

struct PmmhModel {
  int state_dim = 0;
  int lambda_dim = 0;
  std::function<FactorizedTarget(std::span<const double>)> conditional_target;
  std::function<FactorizedProposal(std::span<const double>)> state_proposal;
  LogTarget lambda_prior;               // log g(lambda)
  ConditionalProposal lambda_proposal;  // q(lambda | lambda_prev)
  std::optional<Box> lambda_init_box;
};

/// Trace states are [x_1..x_D, lambda_1..lambda_d]; log_density holds
/// log pi(x | lambda) + log g(lambda).
inline ChainTrace run_pmmh(const PmmhModel& model, long T, int N, double eta,
                           std::uint64_t seed, const RunOptions& opts = {},
                           SirOptions filter = {}) {
  detail::check_run_args(T, N);
  filter.eta = eta;
  const int Dx = model.state_dim, Dl = model.lambda_dim;
  ChainTrace tr = detail::make_trace(Dx + Dl, T);
  detail::FilterChainSetup rng(seed, N);

  std::vector<double> x(static_cast<std::size_t>(Dx));
  std::vector<double> lambda(static_cast<std::size_t>(Dl));
  {
    std::mt19937_64 ig(derive_seed(seed, streams::init, 0));
    if (opts.init_state) {
      if (static_cast<int>(opts.init_state->size()) != Dx + Dl)
        throw invalid_parameter("init_state dimension mismatch");
      std::copy_n(opts.init_state->begin(), Dx, x.begin());
      std::copy_n(opts.init_state->begin() + Dx, Dl, lambda.begin());
    } else {
      Box xb = opts.init_box ? *opts.init_box : Box::cube(Dx, -10.0, 10.0);
      xb.sample_uniform(ig, x);
      Box lb = model.lambda_init_box
                   ? *model.lambda_init_box
                   : (model.lambda_prior.support ? *model.lambda_prior.support
                                                 : Box::cube(Dl, -10.0, 10.0));
      lb.sample_uniform(ig, lambda);
    }
  }
  double log_prior = model.lambda_prior.log_density(lambda);
  if (log_prior == kNegInf)
    throw initialization_error("initial parameter value has zero prior mass");
  FactorizedTarget cond = model.conditional_target(lambda);
  double lp_x = cond.log_joint(x);
  ++tr.init_evals;
  if (!(lp_x > kNegInf))
    throw initialization_error("initial state has non-finite conditional density");

  double log_z;
  {
    FactorizedProposal q = model.state_proposal(lambda);
    log_z = detail::run_filter(cond, q, N, filter, rng.cand, rng.resample_rng)
                .final_log_zbar();
    tr.init_evals += N;
    if (log_z == kNegInf)
      throw initialization_error("initial filter pass is degenerate");
  }

  std::vector<double> lambda_star(static_cast<std::size_t>(Dl));
  for (long t = 0; t < T; ++t) {
    bool acc = false;
    model.lambda_proposal.sample(lambda, rng.chain, lambda_star);
    const double log_prior_star = model.lambda_prior.log_density(lambda_star);
    if (log_prior_star == kNegInf) {
      // Zero prior mass: reject without spending a filter pass.
      ++tr.degenerate_moves;
    } else {
      try {
        FactorizedTarget cond_star = model.conditional_target(lambda_star);
        FactorizedProposal q_star = model.state_proposal(lambda_star);
        const ParticleSystem sys = detail::run_filter(cond_star, q_star, N, filter,
                                                      rng.cand, rng.resample_rng);
        tr.target_evals += N;
        const int j = (N == 1) ? 0 : select_index(sys.log_w, rng.chain);
        const double log_num = sys.final_log_zbar() + log_prior_star +
                               model.lambda_proposal.log_density(lambda, lambda_star);
        const double log_den = log_z + log_prior +
                               model.lambda_proposal.log_density(lambda_star, lambda);
        acc = accept_with(log_accept_from_ratio(log_num, log_den), rng.chain);
        if (acc) {
          auto pj = sys.path(j);
          std::copy(pj.begin(), pj.end(), x.begin());
          lambda = lambda_star;
          log_prior = log_prior_star;
          lp_x = sys.log_target[static_cast<std::size_t>(j)];
          log_z = sys.final_log_zbar();
        }
      } catch (const degenerate_weights_error&) {
        tr.target_evals += N;
        ++tr.degenerate_moves;
      }
    }
    auto row = tr.state(t);
    std::copy(x.begin(), x.end(), row.begin());
    std::copy(lambda.begin(), lambda.end(), row.begin() + Dx);
    tr.log_density[static_cast<std::size_t>(t)] = lp_x + log_prior;
    tr.accepted[static_cast<std::size_t>(t)] = acc ? 1 : 0;
    if (opts.on_state) opts.on_state(row, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

}  // namespace mcs
