#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/logmath.hpp"
#include "mcs/rng.hpp"

namespace mcs {

/// Axis-aligned box, used for prior supports and initial-state draws.
struct Box {
  std::vector<double> lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }

  void sample_uniform(std::mt19937_64& g, std::span<double> out) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      out[i] = uniform_in(g, lo[i], hi[i]);
  }

  static Box cube(int dim, double lo, double hi) {
    return Box{std::vector<double>(static_cast<std::size_t>(dim), lo),
               std::vector<double>(static_cast<std::size_t>(dim), hi)};
  }
};

/// Unnormalized log-density on R^dim. Evaluation must be deterministic and
/// return -inf exactly outside `support` (builders enforce this).
struct LogTarget {
  int dim = 0;
  std::function<double(std::span<const double>)> log_density;
  std::optional<Box> support;
  // Gradient of the log-density; empty when not available analytically.
  std::function<void(std::span<const double>, std::span<double>)> gradient;

  double operator()(std::span<const double> x) const { return log_density(x); }
  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// Target that factors into per-coordinate conditionals,
/// log pi(x) = log_first(x_1) + sum_d log_next(d, x_d, x_{1:d-1}).
struct FactorizedTarget {
  int dim = 0;
  std::function<double(double)> log_first;
  // d in [1, dim); prefix holds x_1..x_d (the first d coordinates).
  std::function<double(int, double, std::span<const double>)> log_next;

  double log_joint(std::span<const double> x) const {
    double s = log_first(x[0]);
    for (int d = 1; d < dim; ++d) {
      if (s == kNegInf) return kNegInf;
      s += log_next(d, x[static_cast<std::size_t>(d)],
                    x.subspan(0, static_cast<std::size_t>(d)));
    }
    return s;
  }

  LogTarget joint() const {
    auto self = *this;
    return LogTarget{dim, [self](std::span<const double> x) { return self.log_joint(x); },
                     std::nullopt, nullptr};
  }
};

/// Central finite-difference gradient used when a target carries none.
inline std::function<void(std::span<const double>, std::span<double>)>
finite_difference_gradient(std::function<double(std::span<const double>)> f,
                           double h = 1e-5) {
  return [f = std::move(f), h](std::span<const double> x, std::span<double> out) {
    std::vector<double> p(x.begin(), x.end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = f(p);
      p[i] = orig - h;
      const double dn = f(p);
      p[i] = orig;
      out[i] = (up - dn) / (2.0 * h);
    }
  };
}

}  // namespace mcs
