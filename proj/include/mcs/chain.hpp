#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcs/io.hpp"

namespace mcs {

/// One chain: states, per-state log-density, acceptance flags and the
/// bookkeeping counters. `target_evals` counts density evaluations made
/// inside the T iterations; start-up work (initial state, initial marginal
/// likelihood batch) is reported separately in `init_evals`.
struct ChainTrace {
  int dim = 0;
  long length = 0;
  std::vector<double> states;       // length x dim, row-major
  std::vector<double> log_density;  // per state
  std::vector<std::uint8_t> accepted;
  long target_evals = 0;
  long init_evals = 0;
  long estimator_samples = 0;  // states feeding the final estimators
  long degenerate_moves = 0;   // iterations rejected because every weight was -inf

  std::span<const double> state(long t) const {
    return {states.data() + t * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> state(long t) {
    return {states.data() + t * dim, static_cast<std::size_t>(dim)};
  }

  double acceptance_rate() const {
    if (length == 0) return 0.0;
    long n = 0;
    for (auto a : accepted) n += a;
    return static_cast<double>(n) / static_cast<double>(length);
  }

  void to_csv(std::ostream& out) const {
    out << "t";
    for (int d = 0; d < dim; ++d) out << ",theta_" << (d + 1);
    out << ",accepted,log_pi\n";
    for (long t = 0; t < length; ++t) {
      out << (t + 1);
      for (int d = 0; d < dim; ++d) out << ',' << format_double(states[t * dim + d]);
      out << ',' << int(accepted[static_cast<std::size_t>(t)]) << ','
          << format_double(log_density[static_cast<std::size_t>(t)]) << '\n';
    }
  }

  nlohmann::json summary() const {
    return nlohmann::json{{"length", length},
                          {"dim", dim},
                          {"evals", target_evals},
                          {"init_evals", init_evals},
                          {"samples_in_estimator", estimator_samples},
                          {"acceptance_rate", acceptance_rate()},
                          {"degenerate_moves", degenerate_moves}};
  }
};

/// One weighted candidate set.
struct WeightedSet {
  int dim = 0;
  int size = 0;
  std::vector<double> states;       // size x dim
  std::vector<double> log_weights;  // size
  std::vector<double> log_pi;       // target value per candidate

  std::span<const double> state(int n) const {
    return {states.data() + n * dim, static_cast<std::size_t>(dim)};
  }
};

/// Output of the set-valued sampler: the sequence of weighted sets plus the
/// running marginal-likelihood estimate. On a rejected iteration the stored
/// set is a bit-identical copy of its predecessor.
struct GmsRun {
  int dim = 0;
  long length = 0;
  int candidates = 0;
  std::vector<double> initial_state;
  WeightedSet initial_set;             // the batch behind the starting estimate
  std::vector<WeightedSet> sets;       // length entries
  std::vector<std::uint8_t> accepted;  // set replaced at t
  std::vector<double> log_zhat;        // running estimate after t
  long target_evals = 0;
  long init_evals = 0;
  long estimator_samples = 0;
  long degenerate_moves = 0;

  double acceptance_rate() const {
    if (length == 0) return 0.0;
    long n = 0;
    for (auto a : accepted) n += a;
    return static_cast<double>(n) / static_cast<double>(length);
  }
};

}  // namespace mcs
