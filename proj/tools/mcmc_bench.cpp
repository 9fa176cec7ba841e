// mcmc-bench: run the benchmark experiments and emit CSV/JSON result tables.

#include <CLI11.hpp>
#include <iostream>

#include "mcs/experiments.hpp"

namespace {

void add_common_options(CLI::App* cmd, mcs::experiments::ExperimentConfig& cfg,
                        std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON config file (flags override it)");
  cmd->add_option("--sampler", cfg.sampler, "restrict to one sampler");
  cmd->add_option("--n", cfg.n, "candidates per iteration");
  cmd->add_option("--t", cfg.t, "chain length");
  cmd->add_option("--c", cfg.c, "parallel chains where applicable");
  cmd->add_option("--sigma", cfg.sigma, "proposal scale");
  cmd->add_option("--dim", cfg.dim, "problem dimension where configurable");
  cmd->add_option("--eta", cfg.eta, "resampling threshold in [0,1]");
  cmd->add_option("--sigma-p", cfg.sigma_p, "step scale of the chained path proposal");
  cmd->add_option("--runs", cfg.runs, "independent repetitions per cell");
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--data-seed", cfg.data_seed, "synthetic data set seed");
  cmd->add_option("--jobs", cfg.jobs, "worker threads (0 = hardware)");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_flag("--paper-scale", cfg.paper_scale, "use the full-scale repetition counts");
  cmd->add_option("--burn-in", cfg.burn_in, "fraction of each chain dropped in estimators");
}

int run(const std::string& experiment, mcs::experiments::ExperimentConfig cfg,
        const std::string& config_path, const CLI::App* cmd) {
  if (!config_path.empty()) {
    const auto base = mcs::experiments::config_from_json(
        nlohmann::json::parse(mcs::read_text_file(config_path)));
    // Start from the file, then re-apply anything given on the command line.
    mcs::experiments::ExperimentConfig merged = base;
    if (cmd->count("--sampler")) merged.sampler = cfg.sampler;
    if (cmd->count("--n")) merged.n = cfg.n;
    if (cmd->count("--t")) merged.t = cfg.t;
    if (cmd->count("--c")) merged.c = cfg.c;
    if (cmd->count("--sigma")) merged.sigma = cfg.sigma;
    if (cmd->count("--dim")) merged.dim = cfg.dim;
    if (cmd->count("--eta")) merged.eta = cfg.eta;
    if (cmd->count("--sigma-p")) merged.sigma_p = cfg.sigma_p;
    if (cmd->count("--runs")) merged.runs = cfg.runs;
    if (cmd->count("--seed")) merged.seed = cfg.seed;
    if (cmd->count("--data-seed")) merged.data_seed = cfg.data_seed;
    if (cmd->count("--jobs")) merged.jobs = cfg.jobs;
    if (cmd->count("--out")) merged.out_dir = cfg.out_dir;
    if (cmd->count("--paper-scale")) merged.paper_scale = cfg.paper_scale;
    if (cmd->count("--burn-in")) merged.burn_in = cfg.burn_in;
    cfg = merged;
  }
  cfg.experiment = experiment;
  const auto summary = mcs::experiments::run_experiment(cfg);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiple-candidate MCMC benchmark harness"};
  app.require_subcommand(1);

  const std::vector<std::string> experiments = {"mixture", "factorized", "gp", "wsn", "rss"};
  struct SubState {
    mcs::experiments::ExperimentConfig cfg;
    std::string config_path;
    CLI::App* cmd = nullptr;
  };
  std::vector<SubState> subs(experiments.size());
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    subs[i].cmd = app.add_subcommand(experiments[i], experiments[i] + " experiment");
    add_common_options(subs[i].cmd, subs[i].cfg, subs[i].config_path);
  }

  auto* verify = app.add_subcommand("verify", "stationarity audit of the sampler kernels");
  int verify_instances = 20;
  std::uint64_t verify_seed = 99;
  verify->add_option("--instances", verify_instances, "random instances per sampler");
  verify->add_option("--seed", verify_seed, "audit seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      const double worst =
          mcs::experiments::verify_kernels(std::cout, verify_instances, verify_seed);
      std::cout << "worst deviation: " << worst << "\n";
      return worst <= 1e-10 ? 0 : 1;
    }
    for (std::size_t i = 0; i < experiments.size(); ++i)
      if (subs[i].cmd->parsed())
        return run(experiments[i], subs[i].cfg, subs[i].config_path, subs[i].cmd);
  } catch (const mcs::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mcs::invalid_parameter& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mcs::degenerate_weights_error& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return 3;
  } catch (const mcs::initialization_error& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return 3;
  } catch (const mcs::singular_kernel_error& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return 3;
  } catch (const mcs::singular_geometry_error& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
