#pragma once

// Multiple-candidate Metropolis samplers over a common run(target, proposal,
// T, ...) -> ChainTrace surface.
//
// Randomness protocol (shared by every sampler so that the one-candidate
// reductions hold bit-for-bit, not just in distribution):
//   * candidate slot n draws from stream (candidate, n); a slot keeps its
//     stream for the whole run, so batch and component-wise generation of the
//     same candidate consume identical words;
//   * selection and acceptance uniforms come from stream (chain, c), in that
//     order inside an iteration; a one-entry selection consumes nothing;
//   * an iteration whose candidate set carries no finite weight rejects
//     deterministically and consumes no chain-stream randomness;
//   * the initial state, when not user-supplied, comes from stream (init, 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcs/chain.hpp"
#include "mcs/errors.hpp"
#include "mcs/logmath.hpp"
#include "mcs/proposal.hpp"
#include "mcs/rng.hpp"
#include "mcs/target.hpp"

namespace mcs {

struct RunOptions {
  std::optional<std::vector<double>> init_state;
  std::optional<Box> init_box;  // fallback: target support, then [-10,10]^D
  // Called after every iteration with (state, t, accepted); hosts adaptation.
  std::function<void(std::span<const double>, long, bool)> on_state;
};

// ---------------------------------------------------------------------------
// Acceptance primitives (pure; unit-testable in isolation).
// ---------------------------------------------------------------------------

/// min(1, num/den) in the log domain, with the conventions 0/x = 0 and
/// x/0 = +inf for x > 0.
inline double log_accept_from_ratio(double log_num, double log_den) {
  if (log_num == kNegInf) return kNegInf;
  if (log_den == kNegInf) return 0.0;
  return std::min(0.0, log_num - log_den);
}

/// Classical two-point acceptance written as a ratio of the two importance
/// weights w(new|prev) and w(prev|new).
inline double mh_log_acceptance(double log_pi_new, double log_q_fwd,
                                double log_pi_prev, double log_q_rev) {
  if (log_pi_new == kNegInf) return kNegInf;
  return log_accept_from_ratio(log_pi_new - log_q_fwd, log_pi_prev - log_q_rev);
}

inline bool accept_with(double log_alpha, std::mt19937_64& chain) {
  if (log_alpha == kNegInf) return false;  // deterministic; no draw
  return std::log(uniform01(chain)) < log_alpha;
}

// ---------------------------------------------------------------------------
// Candidate weights.
// ---------------------------------------------------------------------------

enum class WeightKind {
  importance,   // pi(x) / q(x|prev)
  pi_times_q,   // pi(x) * q(prev|x)
  target_only,  // pi(x); requires a symmetric proposal
};

inline void check_weight_kind(WeightKind kind, const ConditionalProposal& q) {
  if (kind == WeightKind::target_only && !q.symmetric)
    throw invalid_parameter("target_only weights require a symmetric proposal");
}

/// Log candidate weight given a cached log-density value.
inline double mtm_log_weight_cached(double log_pi, std::span<const double> theta,
                                    std::span<const double> prev, WeightKind kind,
                                    const ConditionalProposal& q) {
  if (log_pi == kNegInf) return kNegInf;
  switch (kind) {
    case WeightKind::importance:
      return log_pi - q.log_density(theta, prev);
    case WeightKind::pi_times_q:
      return log_pi + q.log_density(prev, theta);
    case WeightKind::target_only:
      return log_pi;
  }
  return kNegInf;
}

inline double mtm_log_weight(std::span<const double> theta,
                             std::span<const double> prev, WeightKind kind,
                             const LogTarget& target, const ConditionalProposal& q) {
  check_weight_kind(kind, q);
  return mtm_log_weight_cached(target.log_density(theta), theta, prev, kind, q);
}

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> initial_state(const LogTarget& target,
                                         const RunOptions& opts, std::uint64_t seed,
                                         double& log_pi, long& init_evals) {
  std::vector<double> s(static_cast<std::size_t>(target.dim));
  if (opts.init_state) {
    if (static_cast<int>(opts.init_state->size()) != target.dim)
      throw invalid_parameter("init_state dimension mismatch");
    s = *opts.init_state;
  } else {
    Box box = opts.init_box ? *opts.init_box
                            : (target.support ? *target.support
                                              : Box::cube(target.dim, -10.0, 10.0));
    std::mt19937_64 g(derive_seed(seed, streams::init, 0));
    box.sample_uniform(g, s);
  }
  log_pi = target.log_density(s);
  ++init_evals;
  if (!(log_pi > kNegInf))
    throw initialization_error("initial state has non-finite log-density");
  return s;
}

inline ChainTrace make_trace(int dim, long T) {
  ChainTrace tr;
  tr.dim = dim;
  tr.length = T;
  tr.states.resize(static_cast<std::size_t>(T * dim));
  tr.log_density.resize(static_cast<std::size_t>(T));
  tr.accepted.resize(static_cast<std::size_t>(T));
  return tr;
}

inline void record(ChainTrace& tr, long t, std::span<const double> state,
                   double log_pi, bool accepted) {
  std::copy(state.begin(), state.end(), tr.state(t).begin());
  tr.log_density[static_cast<std::size_t>(t)] = log_pi;
  tr.accepted[static_cast<std::size_t>(t)] = accepted ? 1 : 0;
}

inline void check_run_args(long T, int N) {
  if (T < 1) throw invalid_parameter("T must be >= 1");
  if (N < 1) throw invalid_parameter("N must be >= 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-point samplers.
// ---------------------------------------------------------------------------

inline ChainTrace run_mh(const LogTarget& target, const ConditionalProposal& prop,
                         long T, std::uint64_t seed, const RunOptions& opts = {}) {
  detail::check_run_args(T, 1);
  ChainTrace tr = detail::make_trace(target.dim, T);
  StreamBank cand(seed, streams::candidate, 1);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  std::vector<double> prop_state(static_cast<std::size_t>(target.dim));

  for (long t = 0; t < T; ++t) {
    prop.sample(state, cand[0], prop_state);
    const double lp_new = target.log_density(prop_state);
    ++tr.target_evals;
    double log_alpha = kNegInf;
    if (lp_new > kNegInf)
      log_alpha = mh_log_acceptance(lp_new, prop.log_density(prop_state, state), lp,
                                    prop.log_density(state, prop_state));
    else
      ++tr.degenerate_moves;
    const bool acc = accept_with(log_alpha, chain);
    if (acc) {
      state = prop_state;
      lp = lp_new;
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

inline ChainTrace run_imh(const LogTarget& target, const IndependentProposal& prop,
                          long T, std::uint64_t seed, const RunOptions& opts = {}) {
  detail::check_run_args(T, 1);
  ChainTrace tr = detail::make_trace(target.dim, T);
  StreamBank cand(seed, streams::candidate, 1);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  std::vector<double> prop_state(static_cast<std::size_t>(target.dim));

  for (long t = 0; t < T; ++t) {
    prop.sample(cand[0], prop_state);
    const double lp_new = target.log_density(prop_state);
    ++tr.target_evals;
    double log_alpha = kNegInf;
    if (lp_new > kNegInf) {
      const double w_new = lp_new - prop.log_density(prop_state);
      const double w_prev = lp - prop.log_density(state);
      log_alpha = log_accept_from_ratio(w_new, w_prev);
    } else {
      ++tr.degenerate_moves;
    }
    const bool acc = accept_with(log_alpha, chain);
    if (acc) {
      state = prop_state;
      lp = lp_new;
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// Multiple-try Metropolis with a state-conditioned proposal. Each iteration
// draws N candidates, selects one by weight, then draws N-1 auxiliary points
// around the selected candidate for the reverse-move weight sum.
// ---------------------------------------------------------------------------

inline ChainTrace run_mtm(const LogTarget& target, const ConditionalProposal& prop,
                          long T, int N, WeightKind kind, std::uint64_t seed,
                          const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  check_weight_kind(kind, prop);
  const int D = target.dim;
  ChainTrace tr = detail::make_trace(D, T);
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  std::vector<double> cands(static_cast<std::size_t>(N * D));
  std::vector<double> aux(static_cast<std::size_t>(N * D));
  std::vector<double> lps(static_cast<std::size_t>(N));
  std::vector<double> logw(static_cast<std::size_t>(N));
  std::vector<double> logw_aux(static_cast<std::size_t>(N));
  auto cand_at = [&](int n) {
    return std::span<double>(cands.data() + n * D, static_cast<std::size_t>(D));
  };
  auto aux_at = [&](int n) {
    return std::span<double>(aux.data() + n * D, static_cast<std::size_t>(D));
  };

  for (long t = 0; t < T; ++t) {
    for (int n = 0; n < N; ++n) {
      prop.sample(state, cand[n], cand_at(n));
      lps[static_cast<std::size_t>(n)] = target.log_density(cand_at(n));
      ++tr.target_evals;
      logw[static_cast<std::size_t>(n)] = mtm_log_weight_cached(
          lps[static_cast<std::size_t>(n)], cand_at(n), state, kind, prop);
    }
    const WeightSummary fwd = summarize_log_weights(logw);
    bool acc = false;
    if (fwd.degenerate()) {
      ++tr.degenerate_moves;
    } else {
      const int j = (N == 1) ? 0 : pick_index(fwd, uniform01(chain));
      const double lp_j = lps[static_cast<std::size_t>(j)];
      // Reverse set: auxiliary draws around the selected candidate; slot j is
      // the previous state itself.
      for (int n = 0; n < N; ++n) {
        if (n == j) {
          logw_aux[static_cast<std::size_t>(n)] =
              mtm_log_weight_cached(lp, state, cand_at(j), kind, prop);
          continue;
        }
        prop.sample(cand_at(j), cand[n], aux_at(n));
        const double lpv = target.log_density(aux_at(n));
        ++tr.target_evals;
        logw_aux[static_cast<std::size_t>(n)] =
            mtm_log_weight_cached(lpv, aux_at(n), cand_at(j), kind, prop);
      }
      const double log_alpha =
          log_accept_from_ratio(fwd.log_sum, logsumexp(logw_aux));
      acc = accept_with(log_alpha, chain);
      if (acc) {
        std::copy(cand_at(j).begin(), cand_at(j).end(), state.begin());
        lp = lp_j;
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

namespace detail {

// One batch of independent candidates: sample, evaluate, weight.
struct BatchWeights {
  std::vector<double> states;  // N x D
  std::vector<double> log_pi;
  std::vector<double> log_w;
  int dim = 0;

  std::span<const double> state(int n) const {
    return {states.data() + n * dim, static_cast<std::size_t>(dim)};
  }
};

inline void draw_batch(const LogTarget& target, const IndependentProposal& prop,
                       int N, StreamBank& cand, BatchWeights& b, long& evals) {
  const int D = target.dim;
  b.dim = D;
  b.states.resize(static_cast<std::size_t>(N * D));
  b.log_pi.resize(static_cast<std::size_t>(N));
  b.log_w.resize(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    std::span<double> s(b.states.data() + n * D, static_cast<std::size_t>(D));
    prop.sample(cand[n], s);
    const double lp = target.log_density(s);
    ++evals;
    b.log_pi[static_cast<std::size_t>(n)] = lp;
    b.log_w[static_cast<std::size_t>(n)] =
        (lp == kNegInf) ? kNegInf : lp - prop.log_density(s);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Independent multiple-try Metropolis: the candidate batch doubles as the
// reverse-move set, with the selected slot swapped for the previous state.
// ---------------------------------------------------------------------------

inline ChainTrace run_imtm(const LogTarget& target, const IndependentProposal& prop,
                           long T, int N, std::uint64_t seed,
                           const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  ChainTrace tr = detail::make_trace(target.dim, T);
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  detail::BatchWeights batch;
  std::vector<double> swapped(static_cast<std::size_t>(N));

  for (long t = 0; t < T; ++t) {
    detail::draw_batch(target, prop, N, cand, batch, tr.target_evals);
    const WeightSummary s = summarize_log_weights(batch.log_w);
    bool acc = false;
    if (s.degenerate()) {
      ++tr.degenerate_moves;
    } else {
      const int j = (N == 1) ? 0 : pick_index(s, uniform01(chain));
      swapped = batch.log_w;
      swapped[static_cast<std::size_t>(j)] = lp - prop.log_density(state);
      const double log_alpha = log_accept_from_ratio(s.log_sum, logsumexp(swapped));
      acc = accept_with(log_alpha, chain);
      if (acc) {
        auto sj = batch.state(j);
        std::copy(sj.begin(), sj.end(), state.begin());
        lp = batch.log_pi[static_cast<std::size_t>(j)];
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// Alternative independent multiple-try scheme: the acceptance ratio compares
// the batch estimate of the normalizing constant against the running one, so
// a rejected iteration keeps both the state and the estimate.
// ---------------------------------------------------------------------------

inline ChainTrace run_imtm2(const LogTarget& target, const IndependentProposal& prop,
                            long T, int N, std::uint64_t seed,
                            const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  ChainTrace tr = detail::make_trace(target.dim, T);
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  detail::BatchWeights batch;

  // One disposable batch seeds the running estimate.
  detail::draw_batch(target, prop, N, cand, batch, tr.init_evals);
  double log_zhat =
      summarize_log_weights(batch.log_w).log_sum - std::log(static_cast<double>(N));
  if (log_zhat == kNegInf)
    throw initialization_error("initial normalizing-constant batch is degenerate");

  for (long t = 0; t < T; ++t) {
    detail::draw_batch(target, prop, N, cand, batch, tr.target_evals);
    const WeightSummary s = summarize_log_weights(batch.log_w);
    bool acc = false;
    if (s.degenerate()) {
      ++tr.degenerate_moves;
    } else {
      const int j = (N == 1) ? 0 : pick_index(s, uniform01(chain));
      const double log_zstar = s.log_sum - std::log(static_cast<double>(N));
      const double log_alpha = log_accept_from_ratio(log_zstar, log_zhat);
      acc = accept_with(log_alpha, chain);
      if (acc) {
        auto sj = batch.state(j);
        std::copy(sj.begin(), sj.end(), state.begin());
        lp = batch.log_pi[static_cast<std::size_t>(j)];
        log_zhat = log_zstar;
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// C chains sharing one candidate batch per iteration: N target evaluations
// per iteration in total, resampled separately for each chain. The chains are
// dependent by construction.
// ---------------------------------------------------------------------------

struct MultiChainResult {
  std::vector<ChainTrace> chains;
  long target_evals = 0;
  long init_evals = 0;
};

inline MultiChainResult run_parallel_imtm_shared(const LogTarget& target,
                                                 const IndependentProposal& prop,
                                                 long T, int N, int C,
                                                 std::uint64_t seed,
                                                 const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  if (C < 1) throw invalid_parameter("C must be >= 1");
  const int D = target.dim;
  MultiChainResult out;
  StreamBank cand(seed, streams::candidate, N);
  std::vector<std::mt19937_64> chain;
  chain.reserve(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c)
    chain.emplace_back(derive_seed(seed, streams::chain, static_cast<std::uint64_t>(c)));

  // Chain 0 resolves its start exactly like a single run; later chains
  // continue the same init stream.
  std::vector<std::vector<double>> state(static_cast<std::size_t>(C));
  std::vector<double> lp(static_cast<std::size_t>(C));
  {
    std::mt19937_64 ig(derive_seed(seed, streams::init, 0));
    Box box = opts.init_box ? *opts.init_box
                            : (target.support ? *target.support
                                              : Box::cube(D, -10.0, 10.0));
    for (int c = 0; c < C; ++c) {
      auto& s = state[static_cast<std::size_t>(c)];
      s.resize(static_cast<std::size_t>(D));
      if (opts.init_state)
        s = *opts.init_state;
      else
        box.sample_uniform(ig, s);
      lp[static_cast<std::size_t>(c)] = target.log_density(s);
      ++out.init_evals;
      if (!(lp[static_cast<std::size_t>(c)] > kNegInf))
        throw initialization_error("initial state has non-finite log-density");
    }
  }

  out.chains.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) out.chains[static_cast<std::size_t>(c)] = detail::make_trace(D, T);

  detail::BatchWeights batch;
  std::vector<double> swapped(static_cast<std::size_t>(N));
  for (long t = 0; t < T; ++t) {
    detail::draw_batch(target, prop, N, cand, batch, out.target_evals);
    const WeightSummary s = summarize_log_weights(batch.log_w);
    for (int c = 0; c < C; ++c) {
      auto& tr = out.chains[static_cast<std::size_t>(c)];
      auto& st = state[static_cast<std::size_t>(c)];
      auto& lpc = lp[static_cast<std::size_t>(c)];
      bool acc = false;
      if (s.degenerate()) {
        ++tr.degenerate_moves;
      } else {
        auto& g = chain[static_cast<std::size_t>(c)];
        const int j = (N == 1) ? 0 : pick_index(s, uniform01(g));
        swapped = batch.log_w;
        swapped[static_cast<std::size_t>(j)] = lpc - prop.log_density(st);
        const double log_alpha = log_accept_from_ratio(s.log_sum, logsumexp(swapped));
        acc = accept_with(log_alpha, g);
        if (acc) {
          auto sj = batch.state(j);
          std::copy(sj.begin(), sj.end(), st.begin());
          lpc = batch.log_pi[static_cast<std::size_t>(j)];
        }
      }
      detail::record(tr, t, st, lpc, acc);
    }
  }
  for (auto& tr : out.chains) tr.estimator_samples = T;
  return out;
}

// ---------------------------------------------------------------------------
// Set-valued sampler: keeps (or repeats) whole weighted candidate sets and a
// running normalizing-constant estimate. No within-run resampling.
// ---------------------------------------------------------------------------

inline GmsRun run_gms(const LogTarget& target, const IndependentProposal& prop,
                      long T, int N, std::uint64_t seed, const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  const int D = target.dim;
  GmsRun run;
  run.dim = D;
  run.length = T;
  run.candidates = N;
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp0 = 0.0;
  run.initial_state = detail::initial_state(target, opts, seed, lp0, run.init_evals);

  detail::BatchWeights batch;
  detail::draw_batch(target, prop, N, cand, batch, run.init_evals);
  WeightedSet current{D, N, batch.states, batch.log_w, batch.log_pi};
  run.initial_set = current;
  double log_zhat =
      summarize_log_weights(batch.log_w).log_sum - std::log(static_cast<double>(N));
  if (log_zhat == kNegInf)
    throw initialization_error("initial normalizing-constant batch is degenerate");

  run.sets.reserve(static_cast<std::size_t>(T));
  run.accepted.resize(static_cast<std::size_t>(T));
  run.log_zhat.resize(static_cast<std::size_t>(T));
  for (long t = 0; t < T; ++t) {
    detail::draw_batch(target, prop, N, cand, batch, run.target_evals);
    const WeightSummary s = summarize_log_weights(batch.log_w);
    bool acc = false;
    if (s.degenerate()) {
      ++run.degenerate_moves;
    } else {
      const double log_zstar = s.log_sum - std::log(static_cast<double>(N));
      acc = accept_with(log_accept_from_ratio(log_zstar, log_zhat), chain);
      if (acc) {
        current = WeightedSet{D, N, batch.states, batch.log_w, batch.log_pi};
        log_zhat = log_zstar;
      }
    }
    run.sets.push_back(current);
    run.accepted[static_cast<std::size_t>(t)] = acc ? 1 : 0;
    run.log_zhat[static_cast<std::size_t>(t)] = log_zhat;
    if (opts.on_state) {
      // A set has no single state; the hook sees its weighted mean. On a
      // rejection that is the previous mean again, matching the repeat
      // semantics of the chain-valued samplers.
      std::vector<double> mean(static_cast<std::size_t>(D), 0.0);
      const WeightSummary ws = summarize_log_weights(current.log_weights);
      for (int n = 0; n < N; ++n) {
        const double w = ws.p[static_cast<std::size_t>(n)] / ws.sum;
        auto sn = current.state(n);
        for (int d = 0; d < D; ++d)
          mean[static_cast<std::size_t>(d)] += w * sn[static_cast<std::size_t>(d)];
      }
      opts.on_state(mean, t + 1, acc);
    }
  }
  run.estimator_samples = static_cast<long>(N) * T;
  return run;
}

// ---------------------------------------------------------------------------
// Ensemble transitions: the next state is resampled among the N tries plus
// the previous state. No separate accept test.
// ---------------------------------------------------------------------------

inline ChainTrace run_enmcmc(const LogTarget& target, const ConditionalProposal& prop,
                             long T, int N, std::uint64_t seed,
                             const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  const int D = target.dim;
  ChainTrace tr = detail::make_trace(D, T);
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  std::vector<double> tries(static_cast<std::size_t>((N + 1) * D));
  std::vector<double> lps(static_cast<std::size_t>(N + 1));
  std::vector<double> mass(static_cast<std::size_t>(N + 1));
  auto try_at = [&](int n) {
    return std::span<double>(tries.data() + n * D, static_cast<std::size_t>(D));
  };

  for (long t = 0; t < T; ++t) {
    for (int n = 0; n < N; ++n) {
      prop.sample(state, cand[n], try_at(n));
      lps[static_cast<std::size_t>(n)] = target.log_density(try_at(n));
      ++tr.target_evals;
    }
    std::copy(state.begin(), state.end(), try_at(N).begin());
    lps[static_cast<std::size_t>(N)] = lp;

    // Selection mass of entry j: pi(try_j) times the joint proposal density of
    // the other N entries conditioned on try_j.
    bool any_new_finite = false;
    for (int j = 0; j <= N; ++j) {
      double m = lps[static_cast<std::size_t>(j)];
      if (m != kNegInf) {
        for (int i = 0; i <= N; ++i) {
          if (i == j) continue;
          m += prop.log_density(try_at(i), try_at(j));
        }
      }
      mass[static_cast<std::size_t>(j)] = m;
      if (j < N && m != kNegInf) any_new_finite = true;
    }
    bool acc = false;
    if (!any_new_finite) {
      ++tr.degenerate_moves;
    } else {
      const int j = select_index(mass, chain);
      acc = (j != N);
      if (acc) {
        auto sj = try_at(j);
        std::copy(sj.begin(), sj.end(), state.begin());
        lp = lps[static_cast<std::size_t>(j)];
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

inline ChainTrace run_ienmcmc(const LogTarget& target, const IndependentProposal& prop,
                              long T, int N, std::uint64_t seed,
                              const RunOptions& opts = {}) {
  detail::check_run_args(T, N);
  ChainTrace tr = detail::make_trace(target.dim, T);
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  detail::BatchWeights batch;
  std::vector<double> mass(static_cast<std::size_t>(N + 1));

  for (long t = 0; t < T; ++t) {
    detail::draw_batch(target, prop, N, cand, batch, tr.target_evals);
    bool any_new_finite = false;
    for (int n = 0; n < N; ++n) {
      mass[static_cast<std::size_t>(n)] = batch.log_w[static_cast<std::size_t>(n)];
      if (mass[static_cast<std::size_t>(n)] != kNegInf) any_new_finite = true;
    }
    mass[static_cast<std::size_t>(N)] = lp - prop.log_density(state);
    bool acc = false;
    if (!any_new_finite) {
      ++tr.degenerate_moves;
    } else {
      const int j = select_index(mass, chain);
      acc = (j != N);
      if (acc) {
        auto sj = batch.state(j);
        std::copy(sj.begin(), sj.end(), state.begin());
        lp = batch.log_pi[static_cast<std::size_t>(j)];
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// Two-stage delayed rejection. The second-stage proposal may condition on the
// rejected first candidate.
// ---------------------------------------------------------------------------

struct TwoStageProposal {
  int dim = 0;
  std::function<void(std::span<const double> prev, std::span<const double> first,
                     std::mt19937_64&, std::span<double>)>
      sample;
  std::function<double(std::span<const double> x, std::span<const double> first,
                       std::span<const double> prev)>
      log_density;
};

/// Second stage with its own scale, centered on the current state.
inline TwoStageProposal drm_second_stage_gaussian(int dim, double sigma) {
  if (sigma <= 0.0) throw invalid_parameter("drm_second_stage_gaussian: sigma must be > 0");
  TwoStageProposal p;
  p.dim = dim;
  p.sample = [sigma](std::span<const double> prev, std::span<const double>,
                     std::mt19937_64& g, std::span<double> out) {
    for (std::size_t i = 0; i < prev.size(); ++i) out[i] = prev[i] + sigma * normal01(g);
  };
  p.log_density = [sigma](std::span<const double> x, std::span<const double>,
                          std::span<const double> prev) {
    return log_normal_pdf(x, prev, sigma);
  };
  return p;
}

/// Second stage that shrinks the first-stage scale by `factor`.
inline TwoStageProposal drm_shrunk_second_stage(int dim, double sigma1,
                                                double factor = 0.5) {
  return drm_second_stage_gaussian(dim, sigma1 * factor);
}

inline ChainTrace run_drm2(const LogTarget& target, const ConditionalProposal& q1,
                           const TwoStageProposal& q2, long T, std::uint64_t seed,
                           const RunOptions& opts = {}) {
  detail::check_run_args(T, 1);
  const int D = target.dim;
  ChainTrace tr = detail::make_trace(D, T);
  StreamBank cand(seed, streams::candidate, 2);
  std::mt19937_64 chain(derive_seed(seed, streams::chain, 0));

  double lp = 0.0;
  std::vector<double> state = detail::initial_state(target, opts, seed, lp, tr.init_evals);
  std::vector<double> first(static_cast<std::size_t>(D)), second(static_cast<std::size_t>(D));

  for (long t = 0; t < T; ++t) {
    q1.sample(state, cand[0], first);
    const double lp1 = target.log_density(first);
    ++tr.target_evals;
    const double log_a1 = mh_log_acceptance(lp1, q1.log_density(first, state), lp,
                                            q1.log_density(state, first));
    bool acc = false;
    if (accept_with(log_a1, chain)) {
      state = first;
      lp = lp1;
      acc = true;
    } else {
      q2.sample(state, first, cand[1], second);
      const double lp2 = target.log_density(second);
      ++tr.target_evals;
      double log_alpha2 = kNegInf;
      if (lp2 > kNegInf) {
        // Hypothetical reverse first stage: starting at `second`, proposing
        // `first`. If that move would be sure, its rejection mass is zero and
        // the whole numerator collapses.
        const double log_a1_rev =
            mh_log_acceptance(lp1, q1.log_density(first, second), lp2,
                              q1.log_density(second, first));
        const double log_num = lp2 + q1.log_density(first, second) +
                               q2.log_density(state, first, second) +
                               log1m_exp(log_a1_rev);
        const double log_den = lp + q1.log_density(first, state) +
                               q2.log_density(second, first, state) +
                               log1m_exp(log_a1);
        if (log_num != kNegInf && log_den == kNegInf)
          log_alpha2 = 0.0;
        else if (log_num == kNegInf)
          log_alpha2 = kNegInf;
        else
          log_alpha2 = std::min(0.0, log_num - log_den);
      } else {
        ++tr.degenerate_moves;
      }
      if (accept_with(log_alpha2, chain)) {
        state = second;
        lp = lp2;
        acc = true;
      }
    }
    detail::record(tr, t, state, lp, acc);
    if (opts.on_state) opts.on_state(state, t + 1, acc);
  }
  tr.estimator_samples = T;
  return tr;
}

// ---------------------------------------------------------------------------
// N independent random-walk chains under one budget; comparison baseline.
// ---------------------------------------------------------------------------

inline MultiChainResult run_parallel_mh(const LogTarget& target,
                                        const ConditionalProposal& prop, long T,
                                        int N, std::uint64_t seed,
                                        const RunOptions& opts = {}) {
  if (N < 1) throw invalid_parameter("N must be >= 1");
  MultiChainResult out;
  out.chains.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    ChainTrace tr =
        run_mh(target, prop, T, derive_seed(seed, streams::run, static_cast<std::uint64_t>(n)), opts);
    out.target_evals += tr.target_evals;
    out.init_evals += tr.init_evals;
    out.chains.push_back(std::move(tr));
  }
  return out;
}

}  // namespace mcs
