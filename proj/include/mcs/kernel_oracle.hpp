#pragma once

// Exact transition kernels of the samplers on small discrete state spaces,
// obtained by enumerating every candidate tuple, auxiliary tuple, selection
// and accept outcome. The arithmetic here is independent of the continuous
// sampler code; agreement between the two is what the stationarity tests
// establish.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/logmath.hpp"
#include "mcs/proposal.hpp"
#include "mcs/samplers.hpp"
#include "mcs/target.hpp"

namespace mcs {

enum class KernelKind { mh, imh, mtm, imtm, enmcmc, ienmcmc, drm2 };

struct DiscreteInstance {
  std::vector<double> pi;                        // K masses, positive, sum 1
  std::vector<double> q_independent;             // K masses
  std::vector<std::vector<double>> q_conditional;  // K row-stochastic rows
  std::vector<std::vector<double>> q2_conditional; // second-stage rows (drm2); defaults to q_conditional
  int tries = 1;
  WeightKind kind = WeightKind::importance;

  int n_states() const { return static_cast<int>(pi.size()); }
};

using KernelMatrix = std::vector<std::vector<double>>;

inline double check_stationarity(const KernelMatrix& P, std::span<const double> pi) {
  const int K = static_cast<int>(pi.size());
  double worst = 0.0;
  for (int j = 0; j < K; ++j) {
    double m = 0.0;
    for (int i = 0; i < K; ++i) m += pi[static_cast<std::size_t>(i)] * P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    worst = std::max(worst, std::abs(m - pi[static_cast<std::size_t>(j)]));
  }
  return worst;
}

inline double detailed_balance_violation(const KernelMatrix& P,
                                         std::span<const double> pi) {
  const int K = static_cast<int>(pi.size());
  double worst = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      worst = std::max(worst, std::abs(pi[static_cast<std::size_t>(i)] * P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                                       pi[static_cast<std::size_t>(j)] * P[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]));
  return worst;
}

namespace detail {

inline double disc_weight(const DiscreteInstance& in, int x, int cond,
                          bool independent) {
  const double pi_x = in.pi[static_cast<std::size_t>(x)];
  if (independent) return pi_x / in.q_independent[static_cast<std::size_t>(x)];
  switch (in.kind) {
    case WeightKind::importance:
      return pi_x / in.q_conditional[static_cast<std::size_t>(cond)][static_cast<std::size_t>(x)];
    case WeightKind::pi_times_q:
      return pi_x * in.q_conditional[static_cast<std::size_t>(x)][static_cast<std::size_t>(cond)];
    case WeightKind::target_only:
      return pi_x;
  }
  return 0.0;
}

/// Iterate all K^n tuples, calling fn(tuple, prob).
template <class Fn>
inline void for_each_tuple(int K, int n, std::span<const double> row, Fn&& fn) {
  std::vector<int> tuple(static_cast<std::size_t>(n), 0);
  for (;;) {
    double p = 1.0;
    for (int m = 0; m < n; ++m) p *= row[static_cast<std::size_t>(tuple[static_cast<std::size_t>(m)])];
    fn(std::span<const int>(tuple), p);
    int pos = n - 1;
    while (pos >= 0 && ++tuple[static_cast<std::size_t>(pos)] == K) {
      tuple[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

inline KernelMatrix zero_kernel(int K) {
  return KernelMatrix(static_cast<std::size_t>(K),
                      std::vector<double>(static_cast<std::size_t>(K), 0.0));
}

inline KernelMatrix enumerate_mh(const DiscreteInstance& in, bool independent) {
  const int K = in.n_states();
  KernelMatrix P = zero_kernel(K);
  for (int i = 0; i < K; ++i) {
    double stay = 0.0;
    for (int j = 0; j < K; ++j) {
      const double q_fwd = independent ? in.q_independent[static_cast<std::size_t>(j)]
                                       : in.q_conditional[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const double q_rev = independent ? in.q_independent[static_cast<std::size_t>(i)]
                                       : in.q_conditional[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      const double alpha = std::min(
          1.0, (in.pi[static_cast<std::size_t>(j)] * q_rev) / (in.pi[static_cast<std::size_t>(i)] * q_fwd));
      P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += q_fwd * alpha;
      stay += q_fwd * (1.0 - alpha);
    }
    P[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += stay;
  }
  return P;
}

inline KernelMatrix enumerate_mtm(const DiscreteInstance& in) {
  const int K = in.n_states();
  const int N = in.tries;
  KernelMatrix P = zero_kernel(K);
  for (int i = 0; i < K; ++i) {
    for_each_tuple(K, N, in.q_conditional[static_cast<std::size_t>(i)],
                   [&](std::span<const int> cand, double pc) {
      std::vector<double> w(static_cast<std::size_t>(N));
      double W = 0.0;
      for (int n = 0; n < N; ++n) {
        w[static_cast<std::size_t>(n)] = disc_weight(in, cand[static_cast<std::size_t>(n)], i, false);
        W += w[static_cast<std::size_t>(n)];
      }
      for (int sel = 0; sel < N; ++sel) {
        const double psel = w[static_cast<std::size_t>(sel)] / W;
        if (psel <= 0.0) continue;
        const int j = cand[static_cast<std::size_t>(sel)];
        // Reverse set: N-1 auxiliary draws around j, plus the source state.
        for_each_tuple(K, N - 1, in.q_conditional[static_cast<std::size_t>(j)],
                       [&](std::span<const int> aux, double pv) {
          double denom = disc_weight(in, i, j, false);
          for (int m = 0; m < N - 1; ++m)
            denom += disc_weight(in, aux[static_cast<std::size_t>(m)], j, false);
          const double alpha = std::min(1.0, W / denom);
          P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += pc * psel * pv * alpha;
          P[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += pc * psel * pv * (1.0 - alpha);
        });
      }
    });
  }
  return P;
}

inline KernelMatrix enumerate_imtm(const DiscreteInstance& in) {
  const int K = in.n_states();
  const int N = in.tries;
  KernelMatrix P = zero_kernel(K);
  for (int i = 0; i < K; ++i) {
    const double w_prev = in.pi[static_cast<std::size_t>(i)] / in.q_independent[static_cast<std::size_t>(i)];
    for_each_tuple(K, N, in.q_independent, [&](std::span<const int> cand, double pc) {
      std::vector<double> w(static_cast<std::size_t>(N));
      double W = 0.0;
      for (int n = 0; n < N; ++n) {
        w[static_cast<std::size_t>(n)] = disc_weight(in, cand[static_cast<std::size_t>(n)], i, true);
        W += w[static_cast<std::size_t>(n)];
      }
      for (int sel = 0; sel < N; ++sel) {
        const double psel = w[static_cast<std::size_t>(sel)] / W;
        if (psel <= 0.0) continue;
        const int j = cand[static_cast<std::size_t>(sel)];
        const double denom = W - w[static_cast<std::size_t>(sel)] + w_prev;
        const double alpha = std::min(1.0, W / denom);
        P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += pc * psel * alpha;
        P[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += pc * psel * (1.0 - alpha);
      }
    });
  }
  return P;
}

inline KernelMatrix enumerate_enmcmc(const DiscreteInstance& in, bool independent) {
  const int K = in.n_states();
  const int N = in.tries;
  KernelMatrix P = zero_kernel(K);
  for (int i = 0; i < K; ++i) {
    const auto& row = independent ? in.q_independent : in.q_conditional[static_cast<std::size_t>(i)];
    for_each_tuple(K, N, row, [&](std::span<const int> cand, double pc) {
      // Entries 0..N-1 are the tries, entry N is the source state.
      std::vector<int> entry(cand.begin(), cand.end());
      entry.push_back(i);
      std::vector<double> mass(static_cast<std::size_t>(N + 1));
      double total = 0.0;
      for (int j = 0; j <= N; ++j) {
        double m;
        if (independent) {
          m = in.pi[static_cast<std::size_t>(entry[static_cast<std::size_t>(j)])] /
              in.q_independent[static_cast<std::size_t>(entry[static_cast<std::size_t>(j)])];
        } else {
          m = in.pi[static_cast<std::size_t>(entry[static_cast<std::size_t>(j)])];
          for (int n = 0; n <= N; ++n) {
            if (n == j) continue;
            m *= in.q_conditional[static_cast<std::size_t>(entry[static_cast<std::size_t>(j)])]
                                 [static_cast<std::size_t>(entry[static_cast<std::size_t>(n)])];
          }
        }
        mass[static_cast<std::size_t>(j)] = m;
        total += m;
      }
      for (int j = 0; j <= N; ++j)
        P[static_cast<std::size_t>(i)][static_cast<std::size_t>(entry[static_cast<std::size_t>(j)])] +=
            pc * mass[static_cast<std::size_t>(j)] / total;
    });
  }
  return P;
}

inline KernelMatrix enumerate_drm2(const DiscreteInstance& in) {
  const int K = in.n_states();
  const auto& q1 = in.q_conditional;
  const auto& q2 = in.q2_conditional.empty() ? in.q_conditional : in.q2_conditional;
  KernelMatrix P = zero_kernel(K);
  auto alpha1 = [&](int from, int to) {
    return std::min(1.0, (in.pi[static_cast<std::size_t>(to)] * q1[static_cast<std::size_t>(to)][static_cast<std::size_t>(from)]) /
                             (in.pi[static_cast<std::size_t>(from)] * q1[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)]));
  };
  for (int i = 0; i < K; ++i) {
    for (int t1 = 0; t1 < K; ++t1) {
      const double p1 = q1[static_cast<std::size_t>(i)][static_cast<std::size_t>(t1)];
      const double a1 = alpha1(i, t1);
      P[static_cast<std::size_t>(i)][static_cast<std::size_t>(t1)] += p1 * a1;
      const double rejected = p1 * (1.0 - a1);
      if (rejected <= 0.0) continue;
      for (int t2 = 0; t2 < K; ++t2) {
        const double p2 = q2[static_cast<std::size_t>(i)][static_cast<std::size_t>(t2)];
        const double num = in.pi[static_cast<std::size_t>(t2)] *
                           q1[static_cast<std::size_t>(t2)][static_cast<std::size_t>(t1)] *
                           q2[static_cast<std::size_t>(t2)][static_cast<std::size_t>(i)] *
                           (1.0 - alpha1(t2, t1));
        const double den = in.pi[static_cast<std::size_t>(i)] *
                           q1[static_cast<std::size_t>(i)][static_cast<std::size_t>(t1)] *
                           q2[static_cast<std::size_t>(i)][static_cast<std::size_t>(t2)] *
                           (1.0 - a1);
        const double a2 = std::min(1.0, num / den);
        P[static_cast<std::size_t>(i)][static_cast<std::size_t>(t2)] += rejected * p2 * a2;
        P[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += rejected * p2 * (1.0 - a2);
      }
    }
  }
  return P;
}

}  // namespace detail

inline KernelMatrix enumerate_kernel(const DiscreteInstance& in, KernelKind kind) {
  if (in.n_states() < 2) throw invalid_parameter("enumerate_kernel: need K >= 2");
  switch (kind) {
    case KernelKind::mh:
      return detail::enumerate_mh(in, false);
    case KernelKind::imh:
      return detail::enumerate_mh(in, true);
    case KernelKind::mtm:
      if (in.kind == WeightKind::target_only) {
        // Valid only for a symmetric conditional proposal.
        for (std::size_t a = 0; a < in.q_conditional.size(); ++a)
          for (std::size_t b = 0; b < in.q_conditional.size(); ++b)
            if (std::abs(in.q_conditional[a][b] - in.q_conditional[b][a]) > 1e-14)
              throw invalid_parameter("target_only weights require a symmetric proposal");
      }
      return detail::enumerate_mtm(in);
    case KernelKind::imtm:
      return detail::enumerate_imtm(in);
    case KernelKind::enmcmc:
      return detail::enumerate_enmcmc(in, false);
    case KernelKind::ienmcmc:
      return detail::enumerate_enmcmc(in, true);
    case KernelKind::drm2:
      return detail::enumerate_drm2(in);
  }
  throw invalid_parameter("enumerate_kernel: unsupported sampler kind");
}

// ---------------------------------------------------------------------------
// Random instances for property tests.
// ---------------------------------------------------------------------------

inline std::vector<double> random_simplex(int K, std::mt19937_64& g, double floor_mass = 0.05) {
  std::vector<double> v(static_cast<std::size_t>(K));
  double total = 0.0;
  for (double& x : v) {
    x = floor_mass + uniform01(g);
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

inline DiscreteInstance random_instance(int K, int tries, WeightKind kind,
                                        std::mt19937_64& g) {
  DiscreteInstance in;
  in.pi = random_simplex(K, g);
  in.q_independent = random_simplex(K, g);
  in.tries = tries;
  in.kind = kind;
  if (kind == WeightKind::target_only) {
    // Symmetric row-stochastic proposal: a lazy uniform walk.
    const double hold = 0.2 + 0.6 * uniform01(g);
    in.q_conditional.assign(static_cast<std::size_t>(K),
                            std::vector<double>(static_cast<std::size_t>(K),
                                                (1.0 - hold) / K));
    for (int i = 0; i < K; ++i)
      in.q_conditional[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += hold;
  } else {
    for (int i = 0; i < K; ++i) in.q_conditional.push_back(random_simplex(K, g));
  }
  return in;
}

// ---------------------------------------------------------------------------
// Monte Carlo check of the density of a weighted-selection draw.
// ---------------------------------------------------------------------------

struct GridSpec {
  double lo = -8.0, hi = 8.0;
  int bins = 120;
};

/// Total-variation distance between the histogram of resampled candidates and
/// the normalized target on the grid, for each candidate count in `Ns`.
/// Out-of-range draws land in the nearest edge bin.
inline std::vector<double> resampled_density_tv(const LogTarget& target,
                                                const IndependentProposal& proposal,
                                                std::span<const int> Ns,
                                                const GridSpec& grid, long mc_draws,
                                                std::uint64_t seed) {
  const double width = (grid.hi - grid.lo) / grid.bins;
  std::vector<double> target_mass(static_cast<std::size_t>(grid.bins));
  {
    std::vector<double> logp(static_cast<std::size_t>(grid.bins));
    for (int b = 0; b < grid.bins; ++b) {
      const double x = grid.lo + (b + 0.5) * width;
      logp[static_cast<std::size_t>(b)] = target.log_density(std::span<const double>(&x, 1));
    }
    const double total = logsumexp(logp);
    for (int b = 0; b < grid.bins; ++b)
      target_mass[static_cast<std::size_t>(b)] = std::exp(logp[static_cast<std::size_t>(b)] - total);
  }

  std::vector<double> tvs;
  tvs.reserve(Ns.size());
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const int N = Ns[k];
    std::mt19937_64 g(derive_seed(seed, streams::run, static_cast<std::uint64_t>(k)));
    std::vector<long> counts(static_cast<std::size_t>(grid.bins), 0);
    std::vector<double> cand(static_cast<std::size_t>(N));
    std::vector<double> logw(static_cast<std::size_t>(N));
    for (long m = 0; m < mc_draws; ++m) {
      for (int n = 0; n < N; ++n) {
        double x;
        proposal.sample(g, std::span<double>(&x, 1));
        cand[static_cast<std::size_t>(n)] = x;
        const double lp = target.log_density(std::span<const double>(&x, 1));
        logw[static_cast<std::size_t>(n)] =
            (lp == kNegInf) ? kNegInf
                            : lp - proposal.log_density(std::span<const double>(&x, 1));
      }
      const int j = select_index(logw, g);
      const double x = cand[static_cast<std::size_t>(j)];
      int b = static_cast<int>((x - grid.lo) / width);
      b = std::max(0, std::min(grid.bins - 1, b));
      ++counts[static_cast<std::size_t>(b)];
    }
    double tv = 0.0;
    for (int b = 0; b < grid.bins; ++b)
      tv += std::abs(static_cast<double>(counts[static_cast<std::size_t>(b)]) / mc_draws -
                     target_mass[static_cast<std::size_t>(b)]);
    tvs.push_back(0.5 * tv);
  }
  return tvs;
}

}  // namespace mcs
