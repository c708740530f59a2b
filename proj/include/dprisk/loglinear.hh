#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/model_spec.hh"
#include "dprisk/table.hh"

namespace dprisk {

// Poisson log-linear likelihood of the sample counts,
//   sum_k f_k (log pi + eta_k) - pi exp(eta_k) - log f_k!,
// with eta_k = w_k' beta + offset_k over the non-structural cells.
class PoissonLikelihood {
 public:
  PoissonLikelihood(const ContingencyTable& table, const DesignMatrix& design);

  struct Terms {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    // Expected information sum_k pi lambda_k w_k w_k' (equal to the negative
    // Hessian for the canonical link).
    Eigen::MatrixXd fisher;
  };

  // `offset` is indexed by design row and may be empty.
  double log_likelihood(const Eigen::VectorXd& beta,
                        std::span<const double> offset = {}) const;
  Terms evaluate(const Eigen::VectorXd& beta, std::span<const double> offset = {},
                 bool with_fisher = true) const;

  const DesignMatrix& design() const { return design_; }
  double pi() const { return pi_; }
  const std::vector<double>& counts() const { return f_; }

 private:
  const DesignMatrix& design_;
  double pi_;
  double log_pi_;
  std::vector<double> f_;
  double log_factorial_sum_ = 0.0;
};

struct MLOptions {
  int max_iterations = 200;
  double rel_loglik_tol = 1e-10;
  double gradient_tol = 1e-6;
};

struct MLFit {
  Eigen::VectorXd beta_hat;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_max_norm = 0.0;
  std::string diagnostic;
};

// Newton-Raphson with step halving from the intercept-only stationary point.
// Never throws on numerical trouble: failures come back as a non-converged fit
// with a diagnostic.
MLFit fit_ml(const ContingencyTable& table, const ModelSpec& spec,
             const MLOptions& options = {});

// loglik - d * gamma with d = q(spec) - baseline_q. Throws on a
// non-converged fit.
double c0_score(const ModelSpec& spec, const MLFit& fit, double gamma,
                std::size_t baseline_q);

struct C0Step {
  std::size_t u = 0;
  std::size_t v = 0;
  std::string term;
  double gamma = 0.0;
  double c0 = 0.0;
  std::size_t d = 0;
  double loglik = 0.0;
};

struct C0PathResult {
  double base_loglik = 0.0;
  std::vector<C0Step> steps;
  // Independence first, then one spec per step.
  std::vector<ModelSpec> candidate_specs;
  std::vector<Eigen::VectorXd> candidate_beta;
  std::vector<std::string> warnings;
};

struct C0SearchOptions {
  // Strictly descending, positive. Empty means default_gamma_grid().
  std::vector<double> gamma_grid;
  std::size_t max_steps = 4;
  bool decomposability_check = true;
  MLOptions ml;
};

// `count` log-spaced values from |base_loglik|/2 down to 2.
std::vector<double> default_gamma_grid(double base_loglik,
                                       std::size_t count = 20);

// Forward stepwise search over two-way interactions: at each gamma (largest
// first) the candidate with the largest C0(gamma) is added if it beats the
// current model by more than 1e-9; ties go to the lexicographically smallest
// variable pair.
C0PathResult c0_path_search(const ContingencyTable& table,
                            const ModelSpec& base,
                            const C0SearchOptions& options = {});

}  // namespace dprisk
