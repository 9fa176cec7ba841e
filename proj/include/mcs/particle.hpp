#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/io.hpp"
#include "mcs/logmath.hpp"
#include "mcs/proposal.hpp"
#include "mcs/rng.hpp"
#include "mcs/target.hpp"

namespace mcs {

enum class EssKind { inverse_sum_squares, inverse_max };

struct SirOptions {
  double eta = 1.0;              // resample when ESS < eta * N
  bool proper_weighting = true;  // set every weight to the running mean after a resample
  EssKind ess_kind = EssKind::inverse_sum_squares;
};

/// Effective-size approximation of a log-weight vector; always in [1, N].
inline double ess_hat(std::span<const double> log_w, EssKind kind) {
  const WeightSummary s = summarize_log_weights(log_w);
  if (s.degenerate()) throw degenerate_weights_error("ess_hat: all weights are -inf");
  if (kind == EssKind::inverse_max) {
    double pmax = 0.0;
    for (double p : s.p) pmax = std::max(pmax, p);
    return s.sum / pmax;
  }
  double sq = 0.0;
  for (double p : s.p) sq += p * p;
  return s.sum * s.sum / sq;
}

/// `count` i.i.d. index draws proportional to exp(log_w), inverse-CDF on the
/// max-shifted weights.
inline std::vector<int> multinomial_resample(std::span<const double> log_w, int count,
                                             std::mt19937_64& g) {
  const WeightSummary s = summarize_log_weights(log_w);
  if (s.degenerate())
    throw degenerate_weights_error("multinomial_resample: all weights are -inf");
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) idx[static_cast<std::size_t>(k)] = pick_index(s, uniform01(g));
  return idx;
}

/// N weighted paths with the per-step increments, the two running estimates
/// of the normalizing constant, and the resampling log.
struct ParticleSystem {
  int n_particles = 0;
  int dim = 0;
  std::vector<double> paths;       // N x D
  std::vector<double> log_w;       // current weights
  std::vector<double> log_target;  // accumulated log gamma along each path
  std::vector<double> log_beta;    // N x D per-step increments
  std::vector<double> log_w_hist;  // N x D weights after each step
  std::vector<double> log_zhat;    // per step, computed before any resample
  std::vector<double> log_zbar;
  std::vector<int> resampled_steps;
  long gamma_evals = 0;

  std::span<const double> path(int n) const {
    return {paths.data() + n * dim, static_cast<std::size_t>(dim)};
  }
  double final_log_zhat() const { return log_zhat.back(); }
  double final_log_zbar() const { return log_zbar.back(); }

  void to_csv(std::ostream& out) const {
    out << "n,d,x,log_w\n";
    for (int n = 0; n < n_particles; ++n)
      for (int d = 0; d < dim; ++d)
        out << (n + 1) << ',' << (d + 1) << ','
            << format_double(paths[static_cast<std::size_t>(n * dim + d)]) << ','
            << format_double(log_w_hist[static_cast<std::size_t>(n * dim + d)]) << '\n';
  }
};

inline double estimator_zhat(const ParticleSystem& sys) { return sys.final_log_zhat(); }
inline double estimator_zbar(const ParticleSystem& sys) { return sys.final_log_zbar(); }

namespace detail {

/// One forward pass. Candidate streams are owned by the caller so repeated
/// passes (one per chain iteration) keep consuming the same per-slot streams.
inline ParticleSystem run_filter(const FactorizedTarget& target,
                                 const FactorizedProposal& proposal, int N,
                                 const SirOptions& opt, StreamBank& cand,
                                 std::mt19937_64& resample_rng) {
  // A single particle is allowed here: its effective size is exactly one, so
  // the strict trigger never fires and the pass degenerates to plain
  // sequential weighting.
  if (N < 1) throw invalid_parameter("particle filter: N must be >= 1");
  const int D = target.dim;
  ParticleSystem sys;
  sys.n_particles = N;
  sys.dim = D;
  sys.paths.assign(static_cast<std::size_t>(N * D), 0.0);
  sys.log_w.assign(static_cast<std::size_t>(N), 0.0);
  sys.log_target.assign(static_cast<std::size_t>(N), 0.0);
  sys.log_beta.assign(static_cast<std::size_t>(N * D), 0.0);
  sys.log_w_hist.assign(static_cast<std::size_t>(N * D), 0.0);
  sys.log_zhat.reserve(static_cast<std::size_t>(D));
  sys.log_zbar.reserve(static_cast<std::size_t>(D));

  // log-sum of the weights entering the current step; uniform start.
  double lse_prev = std::log(static_cast<double>(N));
  double log_zbar = 0.0;

  for (int d = 0; d < D; ++d) {
    for (int n = 0; n < N; ++n) {
      auto row = std::span<double>(sys.paths.data() + n * D, static_cast<std::size_t>(D));
      auto prefix = std::span<const double>(row.data(), static_cast<std::size_t>(d));
      double x, lg, lq;
      if (d == 0) {
        x = proposal.sample_first(cand[n]);
        lg = target.log_first(x);
        lq = proposal.log_first(x);
      } else {
        x = proposal.sample_next(d, prefix, cand[n]);
        lg = target.log_next(d, x, prefix);
        lq = proposal.log_next(d, x, prefix);
      }
      ++sys.gamma_evals;
      row[static_cast<std::size_t>(d)] = x;
      const double beta = (lg == kNegInf) ? kNegInf : lg - lq;
      sys.log_beta[static_cast<std::size_t>(n * D + d)] = beta;
      sys.log_target[static_cast<std::size_t>(n)] += lg;
      sys.log_w[static_cast<std::size_t>(n)] += beta;
    }

    const double lse_now = logsumexp(sys.log_w);
    if (lse_now == kNegInf)
      throw degenerate_weights_error("particle filter: every weight vanished", d);
    // Both estimates are taken before any resampling at this step.
    sys.log_zhat.push_back(lse_now - std::log(static_cast<double>(N)));
    log_zbar += lse_now - lse_prev;
    sys.log_zbar.push_back(log_zbar);

    bool resampled = false;
    if (opt.eta > 0.0 && ess_hat(sys.log_w, opt.ess_kind) <
                             opt.eta * static_cast<double>(N)) {
      const std::vector<int> idx = multinomial_resample(sys.log_w, N, resample_rng);
      std::vector<double> new_paths(sys.paths);
      std::vector<double> new_beta(sys.log_beta);
      std::vector<double> new_hist(sys.log_w_hist);
      std::vector<double> new_lt(sys.log_target);
      std::vector<double> new_w(sys.log_w);
      for (int n = 0; n < N; ++n) {
        const int a = idx[static_cast<std::size_t>(n)];
        for (int j = 0; j <= d; ++j) {
          new_paths[static_cast<std::size_t>(n * D + j)] =
              sys.paths[static_cast<std::size_t>(a * D + j)];
          new_beta[static_cast<std::size_t>(n * D + j)] =
              sys.log_beta[static_cast<std::size_t>(a * D + j)];
          new_hist[static_cast<std::size_t>(n * D + j)] =
              sys.log_w_hist[static_cast<std::size_t>(a * D + j)];
        }
        new_lt[static_cast<std::size_t>(n)] = sys.log_target[static_cast<std::size_t>(a)];
        new_w[static_cast<std::size_t>(n)] =
            opt.proper_weighting ? sys.log_zhat.back()
                                 : 0.0;  // flat placeholder weight
      }
      sys.paths.swap(new_paths);
      sys.log_beta.swap(new_beta);
      sys.log_w_hist.swap(new_hist);
      sys.log_target.swap(new_lt);
      sys.log_w.swap(new_w);
      sys.resampled_steps.push_back(d);
      resampled = true;
    }
    for (int n = 0; n < N; ++n)
      sys.log_w_hist[static_cast<std::size_t>(n * D + d)] =
          sys.log_w[static_cast<std::size_t>(n)];
    lse_prev = resampled ? logsumexp(sys.log_w) : lse_now;
  }
  return sys;
}

}  // namespace detail

inline ParticleSystem run_sir(const FactorizedTarget& target,
                              const FactorizedProposal& proposal, int N, double eta,
                              bool proper_weighting, EssKind ess_kind,
                              std::uint64_t seed) {
  if (eta > 0.0 && N < 2)
    throw invalid_parameter("run_sir: resampling requires N >= 2");
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 rs(derive_seed(seed, streams::resample, 0));
  SirOptions opt{eta, proper_weighting, ess_kind};
  return detail::run_filter(target, proposal, N, opt, cand, rs);
}

/// No resampling: the final weights are the plain batch importance weights.
inline ParticleSystem run_sis(const FactorizedTarget& target,
                              const FactorizedProposal& proposal, int N,
                              std::uint64_t seed) {
  StreamBank cand(seed, streams::candidate, N);
  std::mt19937_64 rs(derive_seed(seed, streams::resample, 0));
  SirOptions opt{0.0, true, EssKind::inverse_sum_squares};
  return detail::run_filter(target, proposal, N, opt, cand, rs);
}

}  // namespace mcs
