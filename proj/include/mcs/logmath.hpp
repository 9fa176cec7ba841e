#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/rng.hpp"

namespace mcs {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logsumexp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (or an explicit +inf)
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// log(1 - exp(x)) for x <= 0; -inf when x == 0.
inline double log1m_exp(double x) {
  if (x >= 0.0) return kNegInf;
  if (x > -0.6931471805599453)  // exp(x) close to one: use expm1
    return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

/// Max-shifted exponentiated weights, the common currency of the selection
/// and estimator code paths.
struct WeightSummary {
  std::vector<double> p;  // exp(w - max), zeros for -inf entries
  double max = kNegInf;
  double sum = 0.0;                 // sum of p
  double log_sum = kNegInf;         // logsumexp(w)
  bool degenerate() const { return !(sum > 0.0) || max == kNegInf; }
};

inline WeightSummary summarize_log_weights(std::span<const double> w) {
  WeightSummary s;
  for (double v : w) s.max = std::max(s.max, v);
  s.p.resize(w.size());
  if (s.max == kNegInf) {
    std::fill(s.p.begin(), s.p.end(), 0.0);
    return s;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.p[i] = std::exp(w[i] - s.max);
    s.sum += s.p[i];
  }
  s.log_sum = s.max + std::log(s.sum);
  return s;
}

/// Inverse-CDF pick from pre-exponentiated weights; ties resolve to the
/// lowest index. `u` must be in [0, 1).
inline int pick_index(const WeightSummary& s, double u) {
  const double threshold = u * s.sum;
  double cum = 0.0;
  const int n = static_cast<int>(s.p.size());
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    if (s.p[i] <= 0.0) continue;
    cum += s.p[i];
    last_positive = i;
    if (cum > threshold) return i;
  }
  return last_positive;  // rounding pushed the threshold past the total
}

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(kTwoPi * sd * sd) - 0.5 * z * z;
}

/// Isotropic normal on a span, standard deviation `sd` in every coordinate.
inline double log_normal_pdf(std::span<const double> x,
                             std::span<const double> mean, double sd) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) / sd;
    acc += -0.5 * std::log(kTwoPi * sd * sd) - 0.5 * z * z;
  }
  return acc;
}

/// Select one index proportional to exp(log_w). A single-entry set consumes
/// no randomness, which keeps one-candidate samplers aligned with their
/// classical counterparts stream-for-stream.
inline int select_index(std::span<const double> log_w, std::mt19937_64& g) {
  if (log_w.size() == 1) {
    if (log_w[0] == kNegInf)
      throw degenerate_weights_error("select_index: the only weight is -inf");
    return 0;
  }
  const WeightSummary s = summarize_log_weights(log_w);
  if (s.degenerate())
    throw degenerate_weights_error("select_index: all weights are -inf");
  return pick_index(s, uniform01(g));
}

}  // namespace mcs
