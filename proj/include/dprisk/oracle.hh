#pragma once

// Brute-force and quadrature references for validating the samplers and the
// risk and criterion formulas on tiny instances. Nothing here shares code
// with the samplers beyond the design coding.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/dpmcmc.hh"
#include "dprisk/model_spec.hh"
#include "dprisk/table.hh"

namespace dprisk::oracle {

inline constexpr int kMaxEnumerationItems = 9;

// Bell numbers from B_{n+1} = sum_s C(n, s) B_s.
std::uint64_t bell_number(int n);

// Every set partition of {0..n-1} as a restricted growth string (labels by
// order of first appearance). Throws InputError for n < 1 or n > 9.
std::vector<std::vector<int>> enumerate_partitions(int n);

// Gamma(m) m^c prod_j Gamma(n_j) / Gamma(m + n).
long double log_ewens_weight(std::span<const int> labels, long double m);
double ewens_weight(std::span<const int> labels, double m);

struct PartitionPosterior {
  std::vector<std::vector<int>> partitions;
  // log(Ewens weight x prod_j cluster marginal) per partition.
  std::vector<long double> log_terms;
  long double log_total = 0.0L;
  std::vector<double> probabilities;
};

// Enumerates the exact posterior over partitions of the non-structural cells
// (design-row order) for fixed beta and m under a Gamma base.
PartitionPosterior partition_posterior(const ContingencyTable& table,
                                       const ModelSpec& spec,
                                       const Eigen::VectorXd& beta, double m,
                                       const GammaBase& base);

// log L(beta, m | f): the Ewens-weighted average of per-partition likelihoods.
// Up to 8 cells.
long double exact_marginal_likelihood(const ContingencyTable& table,
                                      const ModelSpec& spec,
                                      const Eigen::VectorXd& beta, double m,
                                      const GammaBase& base);

// log of the Gamma-Poisson marginal of one cluster of cells.
long double log_cluster_marginal(std::span<const double> counts,
                                 std::span<const double> exposures,
                                 const GammaBase& base);

struct QuadratureGrid {
  double lo = -10.0;
  double hi = 10.0;
  std::size_t points = 20001;
};

struct Posterior1D {
  std::vector<double> x;
  std::vector<double> density;  // normalized
  std::vector<double> cdf;
  double mean = 0.0;
  double variance = 0.0;

  double cdf_at(double v) const;
  // E[g(X)] by the trapezoid rule.
  double expect(const std::function<double(double)>& g) const;
  // Inverse CDF by linear interpolation.
  double quantile(double p) const;
};

// Trapezoid-normalized posterior proportional to exp(loglik + logprior).
// Throws NumericError if the integrand is non-finite anywhere on the grid.
Posterior1D quadrature_posterior_1d(const std::function<double(double)>& loglik,
                                    const std::function<double(double)>& logprior,
                                    const QuadratureGrid& grid);

struct McRisk {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau1_se = 0.0;
  double tau2_se = 0.0;
};

// Simulates Y ~ Poisson((1 - pi) lambda) and averages 1{Y = 0} and 1/(1 + Y).
McRisk mc_risk_oracle(double lambda, double pi, std::size_t draws,
                      std::uint64_t seed);

// Kolmogorov-Smirnov distance between a sample and a reference CDF.
double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf);

// Exact conditional log density (unnormalized) of the DP mass given c
// clusters over n items and a Gamma(shape, rate) prior.
double log_mass_conditional(double m, std::size_t c, std::size_t n,
                            double shape, double rate);

}  // namespace dprisk::oracle
