#pragma once

// Benchmark harness behind the mcmc-bench command line. Every command is a
// pure function of (config, seed): sweep cells derive their seeds from the
// master seed and the cell coordinates, never from the sampler name or the
// sweep position, so columns are reproducible and one-candidate rows of
// different samplers coincide where the algorithms do.

#include <cstring>
#include <filesystem>
#include <ostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcs/diagnostics.hpp"
#include "mcs/gp.hpp"
#include "mcs/io.hpp"
#include "mcs/kernel_oracle.hpp"
#include "mcs/pmh.hpp"
#include "mcs/targets.hpp"

namespace mcs::experiments {

struct ExperimentConfig {
  std::string experiment;  // mixture | factorized | gp | wsn | rss
  std::string sampler;     // empty = the experiment's default set
  int n = 0;               // candidates per iteration (0 = sweep defaults)
  long t = 0;              // chain length (0 = experiment default)
  int c = 1;               // recovered parallel chains where applicable
  double sigma = 0.0;      // proposal scale (0 = experiment default)
  int dim = 0;             // problem dimension where configurable
  double eta = -1.0;       // resampling threshold (-1 = default)
  double sigma_p = 2.0;    // step scale of the chained path proposal
  int runs = 0;            // repetitions (0 = desk default 200)
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;
  std::string out_dir = "out";
  bool paper_scale = false;
  double burn_in = 0.0;
  int jobs = 0;
};

inline const std::map<std::string, std::vector<std::string>>& sampler_sets() {
  static const std::map<std::string, std::vector<std::string>> sets = {
      {"mixture", {"imtm", "imtm2", "ienmcmc"}},
      {"factorized", {"imtm", "imtm2", "pmh", "varpmh"}},
      {"gp", {"gms", "imtm2", "amh", "static-is"}},
      {"wsn", {"gms", "imtm", "parallel-mh"}},
      {"rss", {"mh", "mala", "mtm"}},
  };
  return sets;
}

inline void validate(const ExperimentConfig& cfg) {
  auto it = sampler_sets().find(cfg.experiment);
  if (it == sampler_sets().end())
    throw config_error("unknown experiment: '" + cfg.experiment + "'");
  if (!cfg.sampler.empty()) {
    const auto& allowed = it->second;
    bool ok = false;
    for (const auto& s : allowed) ok = ok || s == cfg.sampler;
    // The one-candidate classical rows are admissible everywhere their
    // multi-candidate versions are.
    if (cfg.experiment == "mixture" && (cfg.sampler == "imh")) ok = true;
    if (!ok)
      throw config_error("sampler '" + cfg.sampler + "' is not available for experiment '" +
                         cfg.experiment + "'");
  }
  if (cfg.n < 0 || cfg.t < 0 || cfg.runs < 0) throw config_error("n, t, runs must be >= 0");
  if (cfg.c < 1) throw config_error("c must be >= 1");
  if (cfg.sigma < 0) throw config_error("sigma must be >= 0");
  if (cfg.sigma_p <= 0) throw config_error("sigma_p must be > 0");
  if (cfg.eta > 1.0) throw config_error("eta must be in [0,1]");
  if (cfg.burn_in < 0.0 || cfg.burn_in >= 1.0) throw config_error("burn-in fraction must be in [0,1)");
  if (cfg.dim < 0 || cfg.dim > 64) throw config_error("dim out of range");
  if (cfg.runs == 1) throw config_error("runs must be 0 (default) or >= 2");
  if (cfg.out_dir.empty()) throw config_error("output directory must be set");
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  return nlohmann::json{{"experiment", c.experiment},
                        {"sampler", c.sampler},
                        {"n", c.n},
                        {"t", c.t},
                        {"c", c.c},
                        {"sigma", c.sigma},
                        {"dim", c.dim},
                        {"eta", c.eta},
                        {"sigma_p", c.sigma_p},
                        {"runs", c.runs},
                        {"seed", c.seed},
                        {"data_seed", c.data_seed},
                        {"out_dir", c.out_dir},
                        {"paper_scale", c.paper_scale},
                        {"burn_in", c.burn_in},
                        {"jobs", c.jobs}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.experiment = j.value("experiment", c.experiment);
  c.sampler = j.value("sampler", c.sampler);
  c.n = j.value("n", c.n);
  c.t = j.value("t", c.t);
  c.c = j.value("c", c.c);
  c.sigma = j.value("sigma", c.sigma);
  c.dim = j.value("dim", c.dim);
  c.eta = j.value("eta", c.eta);
  c.sigma_p = j.value("sigma_p", c.sigma_p);
  c.runs = j.value("runs", c.runs);
  c.seed = j.value("seed", c.seed);
  c.data_seed = j.value("data_seed", c.data_seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.paper_scale = j.value("paper_scale", c.paper_scale);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.jobs = j.value("jobs", c.jobs);
  return c;
}

// ---------------------------------------------------------------------------
// Sweep plumbing.
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string param_name;
  double param_value = 0.0;
  MseResult result;
};

inline std::string config_echo_line(const ExperimentConfig& c, const std::string& extra = "") {
  std::string line = "# experiment=" + c.experiment + " sampler=" + c.sampler +
                     " n=" + std::to_string(c.n) + " t=" + std::to_string(c.t) +
                     " c=" + std::to_string(c.c) + " sigma=" + format_double(c.sigma) +
                     " dim=" + std::to_string(c.dim) + " eta=" + format_double(c.eta) +
                     " sigma_p=" + format_double(c.sigma_p) + " runs=" + std::to_string(c.runs) +
                     " seed=" + std::to_string(c.seed) + " data_seed=" + std::to_string(c.data_seed) +
                     " paper_scale=" + (c.paper_scale ? "1" : "0") +
                     " burn_in=" + format_double(c.burn_in);
  if (!extra.empty()) line += " " + extra;
  return line;
}

inline std::string sweep_csv(const std::string& echo, const std::vector<SweepRow>& rows) {
  std::string out = echo + "\n";
  out += "param_name,param_value,mse,stderr,ar,ess_ratio\n";
  for (const auto& r : rows) {
    out += r.param_name + "," + format_double(r.param_value) + "," +
           format_double(r.result.mse) + "," + format_double(r.result.stderr_) + "," +
           format_double(r.result.acceptance_rate) + "," +
           format_double(r.result.ess_ratio) + "\n";
  }
  return out;
}

/// Cell seed: master seed mixed with the sweep coordinate only. Two samplers
/// evaluated at the same coordinate share candidate streams, so rows that are
/// algebraically the same algorithm produce identical numbers.
inline std::uint64_t cell_seed(std::uint64_t master, const std::string& param_name,
                               double param_value) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(param_value));
  std::memcpy(&bits, &param_value, sizeof(bits));
  return derive_seed(master, fnv1a64(param_name), bits);
}

namespace detail {

inline void ensure_budget(long actual, long expected, const std::string& where) {
  if (actual != expected)
    throw std::logic_error("evaluation budget mismatch in " + where + ": " +
                           std::to_string(actual) + " != " + std::to_string(expected));
}

inline std::vector<double> grid_posterior_mean_2d(const LogTarget& target,
                                                  const Box& box, int n) {
  const double xs = (box.hi[0] - box.lo[0]) / n;
  const double ys = (box.hi[1] - box.lo[1]) / n;
  std::vector<double> logw;
  logw.reserve(static_cast<std::size_t>(n) * n);
  std::vector<double> xv, yv;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double pt[2] = {box.lo[0] + (i + 0.5) * xs, box.lo[1] + (j + 0.5) * ys};
      logw.push_back(target.log_density(std::span<const double>(pt, 2)));
      xv.push_back(pt[0]);
      yv.push_back(pt[1]);
    }
  const double total = logsumexp(logw);
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < logw.size(); ++k) {
    const double w = std::exp(logw[k] - total);
    mx += w * xv[k];
    my += w * yv[k];
  }
  return {mx, my};
}

}  // namespace detail

/// Self-normalized importance-sampling estimate of the posterior mean; the
/// fixed-budget, zero-iteration baseline.
inline RunStats static_is_stats(const LogTarget& target, const IndependentProposal& prop,
                                int N, std::uint64_t seed) {
  StreamBank cand(seed, streams::candidate, N);
  const int D = target.dim;
  std::vector<double> x(static_cast<std::size_t>(D));
  std::vector<double> logw(static_cast<std::size_t>(N));
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    prop.sample(cand[n], x);
    const double lp = target.log_density(x);
    logw[static_cast<std::size_t>(n)] =
        (lp == kNegInf) ? kNegInf : lp - prop.log_density(x);
    pts[static_cast<std::size_t>(n)] = x;
  }
  const WeightSummary s = summarize_log_weights(logw);
  if (s.degenerate()) throw degenerate_weights_error("static IS: all weights are -inf");
  RunStats st;
  st.estimate.assign(static_cast<std::size_t>(D), 0.0);
  for (int n = 0; n < N; ++n) {
    const double w = s.p[static_cast<std::size_t>(n)] / s.sum;
    for (int d = 0; d < D; ++d)
      st.estimate[static_cast<std::size_t>(d)] +=
          w * pts[static_cast<std::size_t>(n)][static_cast<std::size_t>(d)];
  }
  st.acceptance_rate = 0.0;
  st.ess_ratio = ess_hat(logw, EssKind::inverse_sum_squares) / N;
  return st;
}

// ---------------------------------------------------------------------------
// Trimodal-mixture benchmark.
// ---------------------------------------------------------------------------

namespace detail {

inline RunStats mixture_run_one(const std::string& sampler, int N, long T, int D,
                                double sigma, double burn_in, std::uint64_t seed) {
  const MixtureGaussianTarget mix = trimodal_mixture(D);
  const LogTarget target = mix.target();
  const IndependentProposal prop =
      gaussian_independent(std::vector<double>(static_cast<std::size_t>(D), 0.0), sigma);
  ChainTrace tr;
  if (sampler == "imtm")
    tr = run_imtm(target, prop, T, N, seed);
  else if (sampler == "imtm2")
    tr = run_imtm2(target, prop, T, N, seed);
  else if (sampler == "ienmcmc")
    tr = run_ienmcmc(target, prop, T, N, seed);
  else if (sampler == "imh")
    tr = run_imh(target, prop, T, seed);
  else
    throw config_error("mixture: unknown sampler '" + sampler + "'");
  if (sampler != "imh") ensure_budget(tr.target_evals, static_cast<long>(N) * T, "mixture");
  RunStats st;
  st.estimate = chain_moments(tr, burn_in);
  st.acceptance_rate = tr.acceptance_rate();
  st.ess_ratio = trace_ess_ratio(tr);
  return st;
}

}  // namespace detail

inline nlohmann::json cmd_mixture(const ExperimentConfig& cfg) {
  const int R = cfg.runs > 0 ? cfg.runs : (cfg.paper_scale ? 3000 : 200);
  const int D0 = cfg.dim > 0 ? cfg.dim : 1;
  const long T0 = cfg.t > 0 ? cfg.t : 500;
  const int N0 = cfg.n > 0 ? cfg.n : 5;
  const double S0 = cfg.sigma > 0 ? cfg.sigma : std::sqrt(2.0);

  const std::vector<int> n_sweep = cfg.n > 0 ? std::vector<int>{cfg.n}
                                             : std::vector<int>{1, 5, 50, 500};
  const std::vector<long> t_sweep = cfg.t > 0 ? std::vector<long>{cfg.t}
                                              : std::vector<long>{100, 250, 500, 1000, 2000};
  const std::vector<int> d_sweep =
      cfg.dim > 0 ? std::vector<int>{cfg.dim} : std::vector<int>{1, 5, 10};
  const std::vector<double> s_sweep = cfg.sigma > 0
                                          ? std::vector<double>{cfg.sigma}
                                          : std::vector<double>{0.5, 1.0, 2.0, 3.0};

  std::vector<std::string> samplers =
      cfg.sampler.empty() ? sampler_sets().at("mixture") : std::vector<std::string>{cfg.sampler};

  nlohmann::json summary;
  summary["experiment"] = "mixture";
  summary["config"] = config_json(cfg);
  summary["runs"] = R;
  for (const auto& sampler : samplers) {
    std::vector<SweepRow> rows;
    auto cell = [&](const std::string& pname, double pvalue, int N, long T, int D,
                    double sigma) {
      auto [mean, var] = mixture_moments(trimodal_mixture(D));
      std::vector<double> truth = mean;
      truth.insert(truth.end(), var.begin(), var.end());
      auto run_one = [&, N, T, D, sigma](std::uint64_t s) {
        return detail::mixture_run_one(sampler, N, T, D, sigma, cfg.burn_in, s);
      };
      rows.push_back(SweepRow{pname, pvalue,
                              mse_harness(run_one, truth, R,
                                          cell_seed(cfg.seed, pname, pvalue), cfg.jobs)});
    };
    for (int N : n_sweep) cell("N", N, N, T0, D0, S0);
    for (long T : t_sweep) cell("T", static_cast<double>(T), N0, T, D0, S0);
    for (int D : d_sweep) cell("D", D, N0, T0, D, S0);
    for (double s : s_sweep) cell("sigma", s, N0, 100, D0, s);

    ExperimentConfig echo_cfg = cfg;
    echo_cfg.sampler = sampler;
    echo_cfg.runs = R;
    const std::string path = cfg.out_dir + "/mixture_" + sampler + ".csv";
    write_text_file(path, sweep_csv(config_echo_line(echo_cfg), rows));
    summary["outputs"][path] = rows.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Product-form Gaussian benchmark, batch versus filtered candidates.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> factorized_means() {
  return {2, 2, 2, 4, 4, 4, 4, -1, -1, -1};
}

inline RunStats factorized_run_one(const std::string& sampler, int N, long T,
                                   double eta, double sigma_p, double burn_in,
                                   std::uint64_t seed) {
  const std::vector<double> mu = factorized_means();
  const int D = static_cast<int>(mu.size());
  const FactorizedTarget ft = factorized_gaussian(mu, 0.5);
  const FactorizedProposal fp = markov_gaussian_proposal(D, -2.0, 2.0, sigma_p);
  RunOptions opts;
  opts.init_state = std::vector<double>(static_cast<std::size_t>(D), 0.0);
  ChainTrace tr;
  if (sampler == "pmh")
    tr = run_pmh(ft, fp, T, N, eta, seed, opts);
  else if (sampler == "varpmh")
    tr = run_var_pmh(ft, fp, T, N, eta, seed, opts);
  else if (sampler == "imtm")
    tr = run_imtm(ft.joint(), fp.as_independent(), T, N, seed, opts);
  else if (sampler == "imtm2")
    tr = run_imtm2(ft.joint(), fp.as_independent(), T, N, seed, opts);
  else
    throw config_error("factorized: unknown sampler '" + sampler + "'");
  ensure_budget(tr.target_evals, static_cast<long>(N) * T, "factorized");
  RunStats st;
  st.estimate = chain_mean_estimator(tr, burn_in);
  st.acceptance_rate = tr.acceptance_rate();
  st.ess_ratio = trace_ess_ratio(tr);
  return st;
}

}  // namespace detail

inline nlohmann::json cmd_factorized(const ExperimentConfig& cfg) {
  const int R = cfg.runs > 0 ? cfg.runs : (cfg.paper_scale ? 500 : 200);
  const int N0 = cfg.n > 0 ? cfg.n : 3;
  const double eta = cfg.eta >= 0.0 ? cfg.eta : 1.0;

  const std::vector<long> t_sweep = cfg.t > 0 ? std::vector<long>{cfg.t}
                                              : std::vector<long>{250, 500, 1000, 2000};
  const std::vector<int> n_sweep =
      cfg.n > 0 ? std::vector<int>{cfg.n} : std::vector<int>{3, 10, 50, 200};
  const long T_for_n = cfg.t > 0 ? cfg.t : 2000;

  std::vector<std::string> samplers =
      cfg.sampler.empty() ? sampler_sets().at("factorized") : std::vector<std::string>{cfg.sampler};

  const std::vector<double> truth = detail::factorized_means();
  nlohmann::json summary;
  summary["experiment"] = "factorized";
  summary["config"] = config_json(cfg);
  summary["runs"] = R;
  for (const auto& sampler : samplers) {
    std::vector<SweepRow> rows;
    auto cell = [&](const std::string& pname, double pvalue, int N, long T) {
      auto run_one = [&, N, T](std::uint64_t s) {
        return detail::factorized_run_one(sampler, N, T, eta, cfg.sigma_p, cfg.burn_in, s);
      };
      rows.push_back(SweepRow{pname, pvalue,
                              mse_harness(run_one, truth, R,
                                          cell_seed(cfg.seed, pname, pvalue), cfg.jobs)});
    };
    for (long T : t_sweep) cell("T", static_cast<double>(T), N0, T);
    for (int N : n_sweep) cell("N", N, N, T_for_n);

    ExperimentConfig echo_cfg = cfg;
    echo_cfg.sampler = sampler;
    echo_cfg.runs = R;
    const std::string path = cfg.out_dir + "/factorized_" + sampler + ".csv";
    write_text_file(path, sweep_csv(config_echo_line(echo_cfg), rows));
    summary["outputs"][path] = rows.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Hyperparameter posterior of the squared-exponential regression model,
// equal-budget comparison.
// ---------------------------------------------------------------------------

namespace detail {

struct GpBench {
  std::shared_ptr<GpData> data;
  LogTarget target;
  std::vector<double> truth;
};

inline GpBench make_gp_bench(std::uint64_t data_seed, int grid_n) {
  GpBench b;
  b.data = std::make_shared<GpData>(generate_gp_data(data_seed, 200, 3.0, 10.0, 1));
  b.target = gp_posterior_target(*b.data);
  b.truth = gp_grid_posterior_mean(*b.data, grid_n);
  return b;
}

inline RunStats gp_run_one(const GpBench& bench, const std::string& sampler, int N,
                           long T, double lambda, double burn_in, std::uint64_t seed,
                           int recover_chains = 1) {
  const std::vector<double> mu0 = {1.0, 1.0};
  auto adapt = std::make_shared<AdaptState>(mu0);
  RunOptions opts;
  opts.init_state = mu0;
  opts.on_state = [adapt, T](std::span<const double> st, long t, bool) {
    adapt_mean(*adapt, st, t, T);
  };
  const IndependentProposal prop = adaptive_gaussian(adapt, lambda);
  RunStats st;
  if (sampler == "gms") {
    GmsRun run = run_gms(bench.target, prop, T, N, seed, opts);
    ensure_budget(run.target_evals, static_cast<long>(N) * T, "gp/gms");
    st.estimate = gms_estimate_vector(run, identity_function(), 2, burn_in);
    st.acceptance_rate = run.acceptance_rate();
    std::mt19937_64 rec(derive_seed(seed, streams::recover, 0));
    if (recover_chains <= 1) {
      st.ess_ratio = trace_ess_ratio(recover_imtm2_chain(run, rec));
    } else {
      const auto pr = recover_parallel_chains(
          run, recover_chains, [](std::span<const double> x) { return x[0]; }, rec);
      double acc = 0.0;
      for (const auto& tr : pr.chains) acc += trace_ess_ratio(tr);
      st.ess_ratio = acc / recover_chains;
    }
  } else if (sampler == "imtm2") {
    ChainTrace tr = run_imtm2(bench.target, prop, T, N, seed, opts);
    ensure_budget(tr.target_evals, static_cast<long>(N) * T, "gp/imtm2");
    st.estimate = chain_mean_estimator(tr, burn_in);
    st.acceptance_rate = tr.acceptance_rate();
    st.ess_ratio = trace_ess_ratio(tr);
  } else if (sampler == "amh") {
    ChainTrace tr = run_imh(bench.target, prop, T, seed, opts);
    ensure_budget(tr.target_evals, T, "gp/amh");
    st.estimate = chain_mean_estimator(tr, burn_in);
    st.acceptance_rate = tr.acceptance_rate();
    st.ess_ratio = trace_ess_ratio(tr);
  } else if (sampler == "static-is") {
    st = static_is_stats(bench.target, gaussian_independent(mu0, lambda), N, seed);
  } else {
    throw config_error("gp: unknown sampler '" + sampler + "'");
  }
  return st;
}

}  // namespace detail

inline nlohmann::json cmd_gp(const ExperimentConfig& cfg) {
  const int R = cfg.runs > 0 ? cfg.runs : (cfg.paper_scale ? 1000 : 200);
  const double lambda = cfg.sigma > 0 ? cfg.sigma : 5.0;
  const long budget = (cfg.n > 0 && cfg.t > 0) ? static_cast<long>(cfg.n) * cfg.t : 1000;

  detail::GpBench bench = detail::make_gp_bench(cfg.data_seed, 400);
  std::filesystem::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/gp_data.csv", gp_data_to_csv(*bench.data));

  const std::vector<int> n_sweep = cfg.n > 0 ? std::vector<int>{cfg.n}
                                             : std::vector<int>{1, 10, 100, 1000};
  const std::vector<long> t_sweep =
      cfg.t > 0 ? std::vector<long>{cfg.t} : std::vector<long>{10, 20, 50};

  std::vector<std::string> samplers =
      cfg.sampler.empty() ? sampler_sets().at("gp") : std::vector<std::string>{cfg.sampler};

  nlohmann::json summary;
  summary["experiment"] = "gp";
  summary["config"] = config_json(cfg);
  summary["runs"] = R;
  summary["truth"] = bench.truth;
  summary["budget"] = budget;
  for (const auto& sampler : samplers) {
    std::vector<SweepRow> rows;
    auto cell = [&](const std::string& pname, double pvalue, int N, long T) {
      auto run_one = [&, N, T](std::uint64_t s) {
        return detail::gp_run_one(bench, sampler, N, T, lambda, cfg.burn_in, s, cfg.c);
      };
      rows.push_back(SweepRow{pname, pvalue,
                              mse_harness(run_one, bench.truth, R,
                                          cell_seed(cfg.seed, pname, pvalue), cfg.jobs)});
    };
    if (sampler == "amh") {
      cell("T", static_cast<double>(budget), 1, budget);
    } else if (sampler == "static-is") {
      cell("N", static_cast<double>(budget), static_cast<int>(budget), 1);
    } else {
      // Equal-budget split sweep: T = budget / N.
      for (int N : n_sweep) {
        const long T = std::max<long>(1, budget / N);
        cell("N", N, N, T);
      }
      const int N_fixed = 100;
      for (long T : t_sweep) cell("T", static_cast<double>(T), N_fixed, T);
    }
    ExperimentConfig echo_cfg = cfg;
    echo_cfg.sampler = sampler;
    echo_cfg.runs = R;
    const std::string path = cfg.out_dir + "/gp_" + sampler + ".csv";
    write_text_file(path, sweep_csv(config_echo_line(echo_cfg), rows));
    summary["outputs"][path] = rows.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Range-based localization with unknown per-sensor noise, equal budget.
// ---------------------------------------------------------------------------

namespace detail {

struct WsnBench {
  std::shared_ptr<WsnTarget> wsn;
  LogTarget target;
  std::vector<double> truth;
};

inline WsnBench make_wsn_bench(std::uint64_t data_seed) {
  WsnBench b;
  WsnConfig cfg;
  const std::vector<double> ref = cfg.reference_state();
  const std::span<const double> z_star(ref.data(), 2);
  const std::span<const double> zeta_star(ref.data() + 2,
                                          static_cast<std::size_t>(cfg.n_sensors()));
  const int n_obs = 20;
  auto wsn = std::make_shared<WsnTarget>();
  wsn->cfg = cfg;
  wsn->n_obs = n_obs;
  wsn->Y = generate_wsn_observations(data_seed, z_star, zeta_star, n_obs, cfg);
  b.wsn = wsn;
  b.target = wsn->target();
  b.truth = ref;
  return b;
}

inline RunStats wsn_run_one(const WsnBench& bench, const std::string& sampler, int N,
                            long T, double sigma, double burn_in, std::uint64_t seed,
                            int recover_chains = 1) {
  const int D = bench.target.dim;
  std::vector<double> mu0(static_cast<std::size_t>(D));
  {
    std::mt19937_64 g(derive_seed(seed, streams::init, 1));
    Box::cube(D, 1.0, 5.0).sample_uniform(g, mu0);
  }
  RunStats st;
  if (sampler == "parallel-mh") {
    RunOptions opts;
    opts.init_box = Box::cube(D, 1.0, 5.0);
    const ConditionalProposal rw = gaussian_random_walk(D, sigma);
    MultiChainResult res = run_parallel_mh(bench.target, rw, T, N, seed, opts);
    ensure_budget(res.target_evals, static_cast<long>(N) * T, "wsn/parallel-mh");
    st.estimate.assign(static_cast<std::size_t>(D), 0.0);
    double ar = 0.0, ess = 0.0;
    for (const auto& tr : res.chains) {
      const std::vector<double> m = chain_mean_estimator(tr, burn_in);
      for (int d = 0; d < D; ++d) st.estimate[static_cast<std::size_t>(d)] += m[static_cast<std::size_t>(d)];
      ar += tr.acceptance_rate();
      ess += trace_ess_ratio(tr);
    }
    for (double& v : st.estimate) v /= N;
    st.acceptance_rate = ar / N;
    st.ess_ratio = ess / N;
    return st;
  }

  auto adapt = std::make_shared<AdaptState>(mu0);
  RunOptions opts;
  opts.init_state = mu0;
  opts.on_state = [adapt, T](std::span<const double> s, long t, bool) {
    adapt_mean(*adapt, s, t, T);
  };
  const IndependentProposal prop = adaptive_gaussian(adapt, sigma);
  if (sampler == "gms") {
    GmsRun run = run_gms(bench.target, prop, T, N, seed, opts);
    ensure_budget(run.target_evals, static_cast<long>(N) * T, "wsn/gms");
    st.estimate = gms_estimate_vector(run, identity_function(), D, burn_in);
    st.acceptance_rate = run.acceptance_rate();
    std::mt19937_64 rec(derive_seed(seed, streams::recover, 0));
    if (recover_chains <= 1) {
      st.ess_ratio = trace_ess_ratio(recover_imtm2_chain(run, rec));
    } else {
      const auto pr = recover_parallel_chains(
          run, recover_chains, [](std::span<const double> x) { return x[0]; }, rec);
      double acc = 0.0;
      for (const auto& tr : pr.chains) acc += trace_ess_ratio(tr);
      st.ess_ratio = acc / recover_chains;
    }
  } else if (sampler == "imtm") {
    ChainTrace tr = run_imtm(bench.target, prop, T, N, seed, opts);
    ensure_budget(tr.target_evals, static_cast<long>(N) * T, "wsn/imtm");
    st.estimate = chain_mean_estimator(tr, burn_in);
    st.acceptance_rate = tr.acceptance_rate();
    st.ess_ratio = trace_ess_ratio(tr);
  } else {
    throw config_error("wsn: unknown sampler '" + sampler + "'");
  }
  return st;
}

}  // namespace detail

inline nlohmann::json cmd_wsn(const ExperimentConfig& cfg) {
  const int R = cfg.runs > 0 ? cfg.runs : (cfg.paper_scale ? 500 : 200);
  const double sigma = cfg.sigma > 0 ? cfg.sigma : 1.0;
  const long budget = (cfg.n > 0 && cfg.t > 0) ? static_cast<long>(cfg.n) * cfg.t : 10000;

  detail::WsnBench bench = detail::make_wsn_bench(cfg.data_seed);
  std::filesystem::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/wsn_observations.csv",
                  wsn_observations_to_csv(bench.wsn->Y, bench.wsn->n_obs, bench.wsn->cfg));

  const std::vector<int> n_multi = cfg.n > 0 ? std::vector<int>{cfg.n}
                                             : std::vector<int>{10, 20, 50, 100, 200, 500, 1000, 2000};
  const std::vector<int> n_pmh = cfg.n > 0 ? std::vector<int>{cfg.n}
                                           : std::vector<int>{1, 5, 10, 50, 100, 500, 1000, 2000};

  std::vector<std::string> samplers =
      cfg.sampler.empty() ? sampler_sets().at("wsn") : std::vector<std::string>{cfg.sampler};

  nlohmann::json summary;
  summary["experiment"] = "wsn";
  summary["config"] = config_json(cfg);
  summary["runs"] = R;
  summary["truth"] = bench.truth;
  summary["budget"] = budget;
  for (const auto& sampler : samplers) {
    std::vector<SweepRow> rows;
    const auto& sweep = (sampler == "parallel-mh") ? n_pmh : n_multi;
    for (int N : sweep) {
      const long T = std::max<long>(1, budget / N);
      auto run_one = [&, N, T](std::uint64_t s) {
        return detail::wsn_run_one(bench, sampler, N, T, sigma, cfg.burn_in, s, cfg.c);
      };
      rows.push_back(SweepRow{"N", static_cast<double>(N),
                              mse_harness(run_one, bench.truth, R,
                                          cell_seed(cfg.seed, "N", N), cfg.jobs)});
    }
    ExperimentConfig echo_cfg = cfg;
    echo_cfg.sampler = sampler;
    echo_cfg.runs = R;
    const std::string path = cfg.out_dir + "/wsn_" + sampler + ".csv";
    write_text_file(path, sweep_csv(config_echo_line(echo_cfg), rows));
    summary["outputs"][path] = rows.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Signal-strength localization, synthetic stand-in data from the fitted
// observation model.
// ---------------------------------------------------------------------------

namespace detail {

struct RssBench {
  LogTarget target;
  std::vector<double> truth;
  std::vector<double> observations;
  int n_obs = 5;
};

inline RssBench make_rss_bench(std::uint64_t data_seed, int grid_n) {
  RssBench b;
  const RssConfig cfg;
  const std::vector<double> z_star = {2.5, 2.0};
  b.observations = generate_rss_observations(data_seed, z_star, b.n_obs, cfg);
  b.target = rss_target(b.observations, b.n_obs, cfg);
  b.truth = grid_posterior_mean_2d(b.target, cfg.prior, grid_n);
  return b;
}

inline RunStats rss_run_one(const RssBench& bench, const std::string& sampler, int N,
                            long T, double sigma, double burn_in, std::uint64_t seed) {
  RunOptions opts;
  opts.init_box = bench.target.support;
  ChainTrace tr;
  if (sampler == "mh") {
    tr = run_mh(bench.target, gaussian_random_walk(2, sigma), T, seed, opts);
  } else if (sampler == "mala") {
    tr = run_mh(bench.target, mala_proposal(bench.target, sigma, sigma * sigma / 2.0), T,
                seed, opts);
  } else if (sampler == "mtm") {
    tr = run_mtm(bench.target, gaussian_random_walk(2, sigma), T, N,
                 WeightKind::importance, seed, opts);
  } else {
    throw config_error("rss: unknown sampler '" + sampler + "'");
  }
  RunStats st;
  st.estimate = chain_mean_estimator(tr, burn_in);
  st.acceptance_rate = tr.acceptance_rate();
  st.ess_ratio = trace_ess_ratio(tr);
  return st;
}

}  // namespace detail

inline nlohmann::json cmd_rss(const ExperimentConfig& cfg) {
  const int R = cfg.runs > 0 ? cfg.runs : (cfg.paper_scale ? 2000 : 200);
  const double sigma = cfg.sigma > 0 ? cfg.sigma : 1.0;
  const long T0 = cfg.t > 0 ? cfg.t : 1000;

  detail::RssBench bench = detail::make_rss_bench(cfg.data_seed, 400);
  std::filesystem::create_directories(cfg.out_dir);
  {
    RssConfig rc;
    write_text_file(cfg.out_dir + "/rss_observations.csv",
                    wsn_observations_to_csv(bench.observations, bench.n_obs,
                                            WsnConfig{rc.sensors, 0.0, 4.0, 0.0, 4.0}));
  }

  const std::vector<int> n_sweep =
      cfg.n > 0 ? std::vector<int>{cfg.n} : std::vector<int>{10, 100, 1000};
  const std::vector<long> mala_t = cfg.t > 0 ? std::vector<long>{cfg.t}
                                             : std::vector<long>{1000, 5000};

  std::vector<std::string> samplers =
      cfg.sampler.empty() ? sampler_sets().at("rss") : std::vector<std::string>{cfg.sampler};

  nlohmann::json summary;
  summary["experiment"] = "rss";
  summary["config"] = config_json(cfg);
  summary["note"] = "synthetic stand-in data generated from the fitted observation model";
  summary["runs"] = R;
  summary["truth"] = bench.truth;
  for (const auto& sampler : samplers) {
    std::vector<SweepRow> rows;
    auto cell = [&](const std::string& pname, double pvalue, int N, long T) {
      auto run_one = [&, N, T](std::uint64_t s) {
        return detail::rss_run_one(bench, sampler, N, T, sigma, cfg.burn_in, s);
      };
      rows.push_back(SweepRow{pname, pvalue,
                              mse_harness(run_one, bench.truth, R,
                                          cell_seed(cfg.seed, pname, pvalue), cfg.jobs)});
    };
    if (sampler == "mh") {
      cell("T", static_cast<double>(T0), 1, T0);
    } else if (sampler == "mala") {
      for (long T : mala_t) cell("T", static_cast<double>(T), 1, T);
    } else {
      for (int N : n_sweep) cell("N", N, N, T0);
    }
    ExperimentConfig echo_cfg = cfg;
    echo_cfg.sampler = sampler;
    echo_cfg.runs = R;
    const std::string path = cfg.out_dir + "/rss_" + sampler + ".csv";
    write_text_file(path, sweep_csv(config_echo_line(echo_cfg,
                                                     "synthetic_standin=1"),
                                    rows));
    summary["outputs"][path] = rows.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

inline nlohmann::json run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  nlohmann::json summary;
  if (cfg.experiment == "mixture")
    summary = cmd_mixture(cfg);
  else if (cfg.experiment == "factorized")
    summary = cmd_factorized(cfg);
  else if (cfg.experiment == "gp")
    summary = cmd_gp(cfg);
  else if (cfg.experiment == "wsn")
    summary = cmd_wsn(cfg);
  else if (cfg.experiment == "rss")
    summary = cmd_rss(cfg);
  write_text_file(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
  return summary;
}

/// Stationarity audit over random discrete instances; returns the worst
/// deviation seen (used by the `verify` subcommand).
inline double verify_kernels(std::ostream& out, int instances = 20, std::uint64_t seed = 99) {
  std::mt19937_64 g(seed);
  struct Case {
    const char* name;
    KernelKind kind;
    WeightKind weights;
  };
  const std::vector<Case> cases = {
      {"mh", KernelKind::mh, WeightKind::importance},
      {"imh", KernelKind::imh, WeightKind::importance},
      {"mtm-importance", KernelKind::mtm, WeightKind::importance},
      {"mtm-pi-times-q", KernelKind::mtm, WeightKind::pi_times_q},
      {"mtm-target-only", KernelKind::mtm, WeightKind::target_only},
      {"imtm", KernelKind::imtm, WeightKind::importance},
      {"enmcmc", KernelKind::enmcmc, WeightKind::importance},
      {"ienmcmc", KernelKind::ienmcmc, WeightKind::importance},
      {"drm2", KernelKind::drm2, WeightKind::importance},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    double dev = 0.0;
    for (int k = 0; k < instances; ++k) {
      DiscreteInstance in = random_instance(4, 2, c.weights, g);
      const KernelMatrix P = enumerate_kernel(in, c.kind);
      dev = std::max(dev, check_stationarity(P, in.pi));
    }
    out << c.name << ": max |pi P - pi| = " << dev << "\n";
    worst = std::max(worst, dev);
  }
  return worst;
}

}  // namespace mcs::experiments
