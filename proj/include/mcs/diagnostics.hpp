#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcs/chain.hpp"
#include "mcs/errors.hpp"
#include "mcs/logmath.hpp"
#include "mcs/rng.hpp"

namespace mcs {

using StateFunction = std::function<void(std::span<const double>, std::span<double>)>;

inline StateFunction identity_function() {
  return [](std::span<const double> x, std::span<double> out) {
    std::copy(x.begin(), x.end(), out.begin());
  };
}

/// Arithmetic mean of f over the chain states; an optional leading fraction
/// of the chain can be dropped (none by default).
inline std::vector<double> chain_mean_estimator(const ChainTrace& tr,
                                                const StateFunction& f, int out_dim,
                                                double burn_in_frac = 0.0) {
  if (tr.length < 1) throw invalid_parameter("chain_mean_estimator: empty chain");
  const long start = std::min<long>(
      tr.length - 1, static_cast<long>(burn_in_frac * static_cast<double>(tr.length)));
  std::vector<double> acc(static_cast<std::size_t>(out_dim), 0.0);
  std::vector<double> buf(static_cast<std::size_t>(out_dim));
  for (long t = start; t < tr.length; ++t) {
    f(tr.state(t), buf);
    for (int k = 0; k < out_dim; ++k) acc[static_cast<std::size_t>(k)] += buf[static_cast<std::size_t>(k)];
  }
  const double norm = static_cast<double>(tr.length - start);
  for (double& v : acc) v /= norm;
  return acc;
}

inline std::vector<double> chain_mean_estimator(const ChainTrace& tr,
                                                double burn_in_frac = 0.0) {
  return chain_mean_estimator(tr, identity_function(), tr.dim, burn_in_frac);
}

/// Per-dimension means and plug-in variances of the chain, concatenated
/// [mean_1..mean_D, var_1..var_D].
inline std::vector<double> chain_moments(const ChainTrace& tr,
                                               double burn_in_frac = 0.0) {
  const int D = tr.dim;
  StateFunction f = [D](std::span<const double> x, std::span<double> out) {
    for (int d = 0; d < D; ++d) {
      out[static_cast<std::size_t>(d)] = x[static_cast<std::size_t>(d)];
      out[static_cast<std::size_t>(D + d)] =
          x[static_cast<std::size_t>(d)] * x[static_cast<std::size_t>(d)];
    }
  };
  std::vector<double> m = chain_mean_estimator(tr, f, 2 * D, burn_in_frac);
  for (int d = 0; d < D; ++d)
    m[static_cast<std::size_t>(D + d)] -=
        m[static_cast<std::size_t>(d)] * m[static_cast<std::size_t>(d)];
  return m;
}

// ---------------------------------------------------------------------------
// Autocorrelation and chain effective size.
// ---------------------------------------------------------------------------

/// Empirical autocorrelation at lag tau with the 1/T normalization, which
/// keeps |phi| <= 1 and the sequence positive semidefinite.
inline double autocorr(std::span<const double> series, long tau) {
  const long T = static_cast<long>(series.size());
  if (tau < 0 || tau >= T) throw invalid_parameter("autocorr: need 0 <= tau < T");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(T);
  double c0 = 0.0;
  for (double v : series) c0 += (v - mean) * (v - mean);
  if (c0 <= 0.0)
    throw undefined_statistic_error("autocorr: series has zero variance");
  double ct = 0.0;
  for (long t = 0; t + tau < T; ++t)
    ct += (series[static_cast<std::size_t>(t)] - mean) *
          (series[static_cast<std::size_t>(t + tau)] - mean);
  return ct / c0;
}

/// T / (1 + 2 sum phi), denominator clamped away from zero, result clamped
/// to (0, T].
inline double ess_from_autocorr(long T, std::span<const double> phis) {
  double denom = 1.0;
  for (double p : phis) denom += 2.0 * p;
  denom = std::max(denom, 1e-6);
  return std::min(static_cast<double>(T), static_cast<double>(T) / denom);
}

inline double ess_of_chain(std::span<const double> series, long tau_max = 10) {
  const long T = static_cast<long>(series.size());
  std::vector<double> phis;
  phis.reserve(static_cast<std::size_t>(tau_max));
  for (long tau = 1; tau <= tau_max && tau < T; ++tau)
    phis.push_back(autocorr(series, tau));
  return ess_from_autocorr(T, phis);
}

/// Mean across dimensions of the per-dimension ESS/T ratio. Coordinates with
/// zero variance carry no information and are skipped; an all-constant chain
/// reports 0.
inline double trace_ess_ratio(const ChainTrace& tr, long tau_max = 10) {
  double acc = 0.0;
  int used = 0;
  std::vector<double> series(static_cast<std::size_t>(tr.length));
  for (int d = 0; d < tr.dim; ++d) {
    for (long t = 0; t < tr.length; ++t)
      series[static_cast<std::size_t>(t)] = tr.states[t * tr.dim + d];
    try {
      acc += ess_of_chain(series, tau_max) / static_cast<double>(tr.length);
      ++used;
    } catch (const undefined_statistic_error&) {
    }
  }
  return used > 0 ? acc / used : 0.0;
}

// ---------------------------------------------------------------------------
// Weighted-set estimators and chain recovery.
// ---------------------------------------------------------------------------

/// Doubly averaged estimate over a run of weighted sets: within-set weight
/// normalization happens in the log domain; a fully degenerate set is an
/// error naming the iteration.
inline double gms_estimate(const GmsRun& run,
                           const std::function<double(std::span<const double>)>& f) {
  double acc = 0.0;
  for (long t = 0; t < run.length; ++t) {
    const WeightedSet& s = run.sets[static_cast<std::size_t>(t)];
    const WeightSummary ws = summarize_log_weights(s.log_weights);
    if (ws.degenerate())
      throw degenerate_weights_error("gms_estimate: degenerate set at iteration " +
                                         std::to_string(t + 1),
                                     t);
    double inner = 0.0;
    for (int n = 0; n < s.size; ++n)
      inner += (ws.p[static_cast<std::size_t>(n)] / ws.sum) * f(s.state(n));
    acc += inner;
  }
  return acc / static_cast<double>(run.length);
}

/// Vector-valued variant evaluating f into out_dim components in one sweep;
/// an optional leading fraction of the sets can be dropped.
inline std::vector<double> gms_estimate_vector(const GmsRun& run,
                                               const StateFunction& f, int out_dim,
                                               double burn_in_frac = 0.0) {
  const long start = std::min<long>(
      run.length - 1, static_cast<long>(burn_in_frac * static_cast<double>(run.length)));
  std::vector<double> acc(static_cast<std::size_t>(out_dim), 0.0);
  std::vector<double> buf(static_cast<std::size_t>(out_dim));
  for (long t = start; t < run.length; ++t) {
    const WeightedSet& s = run.sets[static_cast<std::size_t>(t)];
    const WeightSummary ws = summarize_log_weights(s.log_weights);
    if (ws.degenerate())
      throw degenerate_weights_error("gms_estimate: degenerate set at iteration " +
                                         std::to_string(t + 1),
                                     t);
    for (int n = 0; n < s.size; ++n) {
      const double w = ws.p[static_cast<std::size_t>(n)] / ws.sum;
      f(s.state(n), buf);
      for (int k = 0; k < out_dim; ++k)
        acc[static_cast<std::size_t>(k)] += w * buf[static_cast<std::size_t>(k)];
    }
  }
  for (double& v : acc) v /= static_cast<double>(run.length - start);
  return acc;
}

/// Collapse a set run back to a single chain: resample one member wherever
/// the set changed, repeat the previous state elsewhere. The start of the
/// chain is one resample from the initial batch, so the conditional mean of
/// every chain state is its set's weighted mean and averaging many recovered
/// chains reproduces the set estimator without an initialization offset.
inline ChainTrace recover_imtm2_chain(const GmsRun& run, std::mt19937_64& g) {
  ChainTrace tr;
  tr.dim = run.dim;
  tr.length = run.length;
  tr.states.resize(static_cast<std::size_t>(run.length * run.dim));
  tr.log_density.resize(static_cast<std::size_t>(run.length));
  tr.accepted = run.accepted;
  std::vector<double> state = run.initial_state;
  double lp = kNegInf;
  if (run.initial_set.size > 0) {
    const int j = select_index(run.initial_set.log_weights, g);
    auto sj = run.initial_set.state(j);
    state.assign(sj.begin(), sj.end());
    lp = run.initial_set.log_pi[static_cast<std::size_t>(j)];
  }
  for (long t = 0; t < run.length; ++t) {
    if (run.accepted[static_cast<std::size_t>(t)]) {
      const WeightedSet& s = run.sets[static_cast<std::size_t>(t)];
      const int j = select_index(s.log_weights, g);
      auto sj = s.state(j);
      state.assign(sj.begin(), sj.end());
      lp = s.log_pi[static_cast<std::size_t>(j)];
    }
    std::copy(state.begin(), state.end(), tr.state(t).begin());
    tr.log_density[static_cast<std::size_t>(t)] = lp;
  }
  tr.estimator_samples = run.length;
  return tr;
}

struct ParallelRecovery {
  std::vector<ChainTrace> chains;
  double combined_estimate = 0.0;  // mean over chains of their chain means
};

/// C dependent chains recovered from one set run, iterating sets outermost so
/// a single chain consumes randomness exactly like recover_imtm2_chain.
inline ParallelRecovery recover_parallel_chains(
    const GmsRun& run, int C, const std::function<double(std::span<const double>)>& f,
    std::mt19937_64& g) {
  if (C < 1) throw invalid_parameter("recover_parallel_chains: C must be >= 1");
  ParallelRecovery out;
  out.chains.resize(static_cast<std::size_t>(C));
  std::vector<std::vector<double>> state(static_cast<std::size_t>(C), run.initial_state);
  std::vector<double> lp(static_cast<std::size_t>(C), kNegInf);
  if (run.initial_set.size > 0) {
    for (int c = 0; c < C; ++c) {
      const int j = select_index(run.initial_set.log_weights, g);
      auto sj = run.initial_set.state(j);
      state[static_cast<std::size_t>(c)].assign(sj.begin(), sj.end());
      lp[static_cast<std::size_t>(c)] = run.initial_set.log_pi[static_cast<std::size_t>(j)];
    }
  }
  for (int c = 0; c < C; ++c) {
    auto& tr = out.chains[static_cast<std::size_t>(c)];
    tr.dim = run.dim;
    tr.length = run.length;
    tr.states.resize(static_cast<std::size_t>(run.length * run.dim));
    tr.log_density.resize(static_cast<std::size_t>(run.length));
    tr.accepted = run.accepted;
    tr.estimator_samples = run.length;
  }
  for (long t = 0; t < run.length; ++t) {
    const WeightedSet& s = run.sets[static_cast<std::size_t>(t)];
    for (int c = 0; c < C; ++c) {
      if (run.accepted[static_cast<std::size_t>(t)]) {
        const int j = select_index(s.log_weights, g);
        auto sj = s.state(j);
        state[static_cast<std::size_t>(c)].assign(sj.begin(), sj.end());
        lp[static_cast<std::size_t>(c)] = s.log_pi[static_cast<std::size_t>(j)];
      }
      auto& tr = out.chains[static_cast<std::size_t>(c)];
      std::copy(state[static_cast<std::size_t>(c)].begin(),
                state[static_cast<std::size_t>(c)].end(), tr.state(t).begin());
      tr.log_density[static_cast<std::size_t>(t)] = lp[static_cast<std::size_t>(c)];
    }
  }
  double acc = 0.0;
  for (int c = 0; c < C; ++c) {
    const auto& tr = out.chains[static_cast<std::size_t>(c)];
    double m = 0.0;
    for (long t = 0; t < tr.length; ++t) m += f(tr.state(t));
    acc += m / static_cast<double>(tr.length);
  }
  out.combined_estimate = acc / static_cast<double>(C);
  return out;
}

// ---------------------------------------------------------------------------
// Repeated-run error harness.
// ---------------------------------------------------------------------------

struct RunStats {
  std::vector<double> estimate;
  double acceptance_rate = 0.0;
  double ess_ratio = 0.0;
};

struct MseResult {
  double mse = 0.0;     // mean over runs of the per-run averaged square error
  double stderr_ = 0.0;  // standard error of that mean
  double acceptance_rate = 0.0;
  double ess_ratio = 0.0;
  std::vector<double> per_run;
  std::vector<double> per_run_ar;
};

/// Per-run averaged squared error against `truth`, averaged over R
/// repetitions with derived, non-overlapping seeds. Runs fan out over
/// `jobs` workers; results are collected by run index, so the schedule
/// cannot change the outcome.
inline MseResult mse_harness(const std::function<RunStats(std::uint64_t)>& run_one,
                             std::span<const double> truth, int R,
                             std::uint64_t seed, int jobs = 0) {
  if (R < 2) throw invalid_parameter("mse_harness: R must be >= 2");
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs <= 0) jobs = 1;
  jobs = std::min(jobs, R);

  std::vector<RunStats> stats(static_cast<std::size_t>(R));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) return;
      stats[static_cast<std::size_t>(r)] =
          run_one(derive_seed(seed, streams::run, static_cast<std::uint64_t>(r)));
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  MseResult out;
  out.per_run.resize(static_cast<std::size_t>(R));
  out.per_run_ar.resize(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) {
    const auto& st = stats[static_cast<std::size_t>(r)];
    if (st.estimate.size() != truth.size())
      throw invalid_parameter("mse_harness: estimate/truth size mismatch");
    double err = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const double e = st.estimate[k] - truth[k];
      err += e * e;
    }
    out.per_run[static_cast<std::size_t>(r)] = err / static_cast<double>(truth.size());
    out.per_run_ar[static_cast<std::size_t>(r)] = st.acceptance_rate;
    out.mse += out.per_run[static_cast<std::size_t>(r)];
    out.acceptance_rate += st.acceptance_rate;
    out.ess_ratio += st.ess_ratio;
  }
  out.mse /= R;
  out.acceptance_rate /= R;
  out.ess_ratio /= R;
  double var = 0.0;
  for (double v : out.per_run) var += (v - out.mse) * (v - out.mse);
  var /= (R - 1);
  out.stderr_ = std::sqrt(var / R);
  return out;
}

// ---------------------------------------------------------------------------
// Per-run summary bundle.
// ---------------------------------------------------------------------------

struct RunSummary {
  std::vector<double> estimate;
  double mse = 0.0;
  double acceptance_rate = 0.0;
  std::vector<double> autocorrelation;  // lags 1..tau_max
  double ess = 0.0;
  long evals = 0;
  long estimator_samples = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"estimate", estimate},
                          {"mse", mse},
                          {"acceptance_rate", acceptance_rate},
                          {"autocorrelation", autocorrelation},
                          {"ess", ess},
                          {"evals", evals},
                          {"samples_in_estimator", estimator_samples}};
  }
};

/// Bundle the usual per-run quantities. `truth` may be the per-dimension
/// means (size D) or means plus variances (size 2D). Autocorrelations are
/// per-lag averages across dimensions; constant coordinates are skipped.
inline RunSummary summarize(const ChainTrace& tr, std::span<const double> truth,
                            long tau_max = 10) {
  RunSummary s;
  s.estimate = (static_cast<int>(truth.size()) == 2 * tr.dim)
                   ? chain_moments(tr)
                   : chain_mean_estimator(tr);
  if (s.estimate.size() != truth.size())
    throw invalid_parameter("summarize: truth must have D or 2D entries");
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double e = s.estimate[k] - truth[k];
    s.mse += e * e;
  }
  s.mse /= static_cast<double>(truth.size());
  s.acceptance_rate = tr.acceptance_rate();
  s.autocorrelation.assign(static_cast<std::size_t>(tau_max), 0.0);
  std::vector<double> series(static_cast<std::size_t>(tr.length));
  int used = 0;
  double ess_acc = 0.0;
  for (int d = 0; d < tr.dim; ++d) {
    for (long t = 0; t < tr.length; ++t)
      series[static_cast<std::size_t>(t)] = tr.states[t * tr.dim + d];
    try {
      for (long tau = 1; tau <= tau_max && tau < tr.length; ++tau)
        s.autocorrelation[static_cast<std::size_t>(tau - 1)] += autocorr(series, tau);
      ess_acc += ess_of_chain(series, tau_max);
      ++used;
    } catch (const undefined_statistic_error&) {
    }
  }
  if (used > 0) {
    for (double& v : s.autocorrelation) v /= used;
    s.ess = ess_acc / used;
  }
  s.evals = tr.target_evals;
  s.estimator_samples = tr.estimator_samples;
  return s;
}

}  // namespace mcs
