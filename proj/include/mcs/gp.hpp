#pragma once

#include <Eigen/Cholesky>
#include <sstream>
#include <string>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "mcs/errors.hpp"
#include "mcs/io.hpp"
#include "mcs/logmath.hpp"
#include "mcs/rng.hpp"
#include "mcs/target.hpp"

namespace mcs {

/// Regression data for the squared-exponential GP posterior over
/// (length-scale, noise scale). Squared input distances are precomputed once;
/// everything here is immutable after construction.
struct GpData {
  Eigen::MatrixXd inputs;   // L x P
  Eigen::VectorXd outputs;  // P
  Eigen::MatrixXd sqdist;   // P x P pairwise squared distances

  int n_points() const { return static_cast<int>(outputs.size()); }
  int input_dim() const { return static_cast<int>(inputs.rows()); }

  static GpData from_raw(Eigen::MatrixXd Z, Eigen::VectorXd y) {
    GpData d;
    d.inputs = std::move(Z);
    d.outputs = std::move(y);
    const int P = d.n_points();
    d.sqdist.resize(P, P);
    for (int i = 0; i < P; ++i)
      for (int j = 0; j < P; ++j)
        d.sqdist(i, j) = (d.inputs.col(i) - d.inputs.col(j)).squaredNorm();
    return d;
  }
};

/// Unnormalized log posterior of (delta, sigma): Gaussian log marginal
/// likelihood with a flat prior, additive constant fixed to zero. Uses a
/// Cholesky factorization throughout; an explicit inverse never appears.
inline double gp_log_marginal(double delta, double sigma, const GpData& data) {
  if (delta <= 0.0 || sigma <= 0.0) return kNegInf;
  const int P = data.n_points();
  // Only the lower triangle is needed by the factorization.
  Eigen::MatrixXd M(P, P);
  const double scale = -0.5 / (delta * delta);
  for (int j = 0; j < P; ++j) {
    M(j, j) = 1.0 + sigma * sigma;
    for (int i = j + 1; i < P; ++i) M(i, j) = std::exp(scale * data.sqdist(i, j));
  }
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(M);
  if (llt.info() != Eigen::Success)
    throw singular_kernel_error("gp_log_marginal: kernel matrix is not positive definite");
  double logdet = 0.0;
  for (int i = 0; i < P; ++i) logdet += 2.0 * std::log(M(i, i));  // M holds L in place
  const double quad = data.outputs.dot(llt.solve(data.outputs));
  return -0.5 * quad - 0.5 * logdet;
}

inline LogTarget gp_posterior_target(GpData data, Box prior = Box::cube(2, 0.0, 20.0)) {
  auto d = std::make_shared<GpData>(std::move(data));
  LogTarget t;
  t.dim = 2;
  t.support = prior;
  t.log_density = [d, prior](std::span<const double> x) {
    if (!prior.contains(x)) return kNegInf;
    return gp_log_marginal(x[0], x[1], *d);
  };
  return t;
}

/// Latent draw plus noise at given inputs: the covariance is factorized by
/// eigenvalues (clamped at zero), and exactly duplicated inputs receive
/// exactly equal latent values.
inline Eigen::VectorXd gp_sample_outputs(std::mt19937_64& g, const Eigen::MatrixXd& Z,
                                         double delta_star, double sigma_star) {
  const int P = static_cast<int>(Z.cols());
  Eigen::MatrixXd K(P, P);
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < P; ++j)
      K(i, j) = std::exp(-(Z.col(i) - Z.col(j)).squaredNorm() /
                         (2.0 * delta_star * delta_star));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  const double clamp = 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
  Eigen::VectorXd xi(P);
  for (int i = 0; i < P; ++i) xi(i) = normal01(g);
  Eigen::VectorXd scaled(P);
  for (int i = 0; i < P; ++i) {
    const double lam = eig.eigenvalues()(i);
    scaled(i) = (lam > clamp) ? std::sqrt(lam) * xi(i) : 0.0;
  }
  Eigen::VectorXd f = eig.eigenvectors() * scaled;
  for (int j = 0; j < P; ++j)
    for (int i = 0; i < j; ++i)
      if ((Z.col(i) - Z.col(j)).squaredNorm() == 0.0) {
        f(j) = f(i);
        break;
      }
  Eigen::VectorXd y(P);
  for (int i = 0; i < P; ++i) y(i) = f(i) + sigma_star * normal01(g);
  return y;
}

/// Synthetic regression set: inputs uniform on [0,10]^L, outputs from
/// gp_sample_outputs.
inline GpData generate_gp_data(std::uint64_t seed, int P, double delta_star,
                               double sigma_star, int L = 1) {
  if (P < 1) throw invalid_parameter("generate_gp_data: P must be >= 1");
  if (delta_star <= 0.0 || sigma_star < 0.0)
    throw invalid_parameter("generate_gp_data: bad kernel or noise scale");
  std::mt19937_64 g(derive_seed(seed, streams::data, 2));
  Eigen::MatrixXd Z(L, P);
  for (int j = 0; j < P; ++j)
    for (int l = 0; l < L; ++l) Z(l, j) = uniform_in(g, 0.0, 10.0);
  Eigen::VectorXd y = gp_sample_outputs(g, Z, delta_star, sigma_star);
  return GpData::from_raw(std::move(Z), std::move(y));
}

inline std::string gp_data_to_csv(const GpData& d) {
  std::string out;
  for (int l = 0; l < d.input_dim(); ++l) out += "z_" + std::to_string(l + 1) + ",";
  out += "y\n";
  for (int j = 0; j < d.n_points(); ++j) {
    for (int l = 0; l < d.input_dim(); ++l) out += format_double(d.inputs(l, j)) + ",";
    out += format_double(d.outputs(j)) + "\n";
  }
  return out;
}

inline GpData gp_data_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw config_error("gp csv: empty");
  const int cols = static_cast<int>(split_csv_line(line).size());
  const int L = cols - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != cols) throw config_error("gp csv: ragged row");
    std::vector<double> row;
    for (auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  const int P = static_cast<int>(rows.size());
  Eigen::MatrixXd Z(L, P);
  Eigen::VectorXd y(P);
  for (int j = 0; j < P; ++j) {
    for (int l = 0; l < L; ++l) Z(l, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)];
    y(j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(L)];
  }
  return GpData::from_raw(std::move(Z), std::move(y));
}

/// Posterior mean of (delta, sigma) by midpoint quadrature on an n x n grid.
/// One eigendecomposition per length-scale column makes the noise sweep cheap.
inline std::vector<double> gp_grid_posterior_mean(const GpData& data, int grid_n,
                                                  const Box& prior = Box::cube(2, 0.0, 20.0)) {
  const int P = data.n_points();
  const double dstep = (prior.hi[0] - prior.lo[0]) / grid_n;
  const double sstep = (prior.hi[1] - prior.lo[1]) / grid_n;
  std::vector<double> logw;
  std::vector<double> ds, ss;
  logw.reserve(static_cast<std::size_t>(grid_n) * grid_n);
  for (int i = 0; i < grid_n; ++i) {
    const double delta = prior.lo[0] + (i + 0.5) * dstep;
    Eigen::MatrixXd K =
        (data.sqdist * (-0.5 / (delta * delta))).array().exp().matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    const Eigen::VectorXd c = eig.eigenvectors().transpose() * data.outputs;
    for (int j = 0; j < grid_n; ++j) {
      const double sigma = prior.lo[1] + (j + 0.5) * sstep;
      const double s2 = sigma * sigma;
      double logdet = 0.0, quad = 0.0;
      for (int k = 0; k < P; ++k) {
        const double lam = std::max(eig.eigenvalues()(k), 0.0) + s2;
        logdet += std::log(lam);
        quad += c(k) * c(k) / lam;
      }
      logw.push_back(-0.5 * quad - 0.5 * logdet);
      ds.push_back(delta);
      ss.push_back(sigma);
    }
  }
  const double total = logsumexp(logw);
  double md = 0.0, ms = 0.0;
  for (std::size_t k = 0; k < logw.size(); ++k) {
    const double w = std::exp(logw[k] - total);
    md += w * ds[k];
    ms += w * ss[k];
  }
  return {md, ms};
}

}  // namespace mcs
