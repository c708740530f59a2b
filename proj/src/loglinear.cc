#include "dprisk/loglinear.hh"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "dprisk/errors.hh"

namespace dprisk {

PoissonLikelihood::PoissonLikelihood(const ContingencyTable& table,
                                     const DesignMatrix& design)
    : design_(design),
      pi_(table.sampling_fraction()),
      log_pi_(std::log(table.sampling_fraction())) {
  f_.reserve(design.rows());
  for (std::size_t r = 0; r < design.rows(); ++r) {
    const double f = static_cast<double>(table.f(design.cell(r)));
    f_.push_back(f);
    log_factorial_sum_ += std::lgamma(f + 1.0);
  }
}

double PoissonLikelihood::log_likelihood(const Eigen::VectorXd& beta,
                                         std::span<const double> offset) const {
  double ll = -log_factorial_sum_;
  for (std::size_t r = 0; r < design_.rows(); ++r) {
    double eta = design_.dot(r, beta.data());
    if (!offset.empty()) eta += offset[r];
    ll += f_[r] * (log_pi_ + eta) - pi_ * std::exp(eta);
  }
  return ll;
}

PoissonLikelihood::Terms PoissonLikelihood::evaluate(
    const Eigen::VectorXd& beta, std::span<const double> offset,
    bool with_fisher) const {
  const auto q = static_cast<Eigen::Index>(design_.cols());
  Terms t;
  t.loglik = -log_factorial_sum_;
  t.gradient = Eigen::VectorXd::Zero(q);
  if (with_fisher) t.fisher = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t r = 0; r < design_.rows(); ++r) {
    double eta = design_.dot(r, beta.data());
    if (!offset.empty()) eta += offset[r];
    const double mean = pi_ * std::exp(eta);
    t.loglik += f_[r] * (log_pi_ + eta) - mean;
    const double resid = f_[r] - mean;
    const auto* b = design_.row_begin(r);
    const auto* e = design_.row_end(r);
    for (auto p = b; p != e; ++p) {
      t.gradient[*p] += resid;
      if (with_fisher) {
        for (auto s = b; s <= p; ++s) t.fisher(*p, *s) += mean;
      }
    }
  }
  if (with_fisher) {
    t.fisher.triangularView<Eigen::StrictlyUpper>() =
        t.fisher.transpose().triangularView<Eigen::StrictlyUpper>();
  }
  return t;
}

MLFit fit_ml(const ContingencyTable& table, const ModelSpec& spec,
             const MLOptions& options) {
  const DesignMatrix design(spec, table);
  const PoissonLikelihood lik(table, design);
  const auto q = static_cast<Eigen::Index>(design.cols());

  MLFit fit;
  fit.beta_hat = Eigen::VectorXd::Zero(q);
  const double n = static_cast<double>(table.sample_size());
  if (n <= 0.0 || design.rows() == 0) {
    fit.diagnostic = "empty table: no sample counts to fit";
    return fit;
  }

  // A zero sufficient statistic drives its coefficient to -infinity.
  std::vector<double> suff(design.cols(), 0.0);
  for (std::size_t r = 0; r < design.rows(); ++r) {
    for (auto p = design.row_begin(r); p != design.row_end(r); ++p) {
      suff[*p] += lik.counts()[r];
    }
  }
  for (std::size_t c = 0; c < suff.size(); ++c) {
    if (suff[c] == 0.0) {
      std::ostringstream msg;
      msg << "ML estimate does not exist: sufficient statistic of column " << c
          << " is zero";
      fit.diagnostic = msg.str();
      fit.loglik = -std::numeric_limits<double>::infinity();
      return fit;
    }
  }

  fit.beta_hat[0] = std::log(n / (table.sampling_fraction() *
                                  static_cast<double>(design.rows())));
  auto terms = lik.evaluate(fit.beta_hat);
  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    Eigen::LLT<Eigen::MatrixXd> llt(terms.fisher);
    if (llt.info() != Eigen::Success) {
      fit.diagnostic = "information matrix is not positive definite "
                       "(rank-deficient design)";
      fit.loglik = terms.loglik;
      return fit;
    }
    const Eigen::VectorXd step = llt.solve(terms.gradient);
    // Near the optimum the predicted gain falls below the resolution of the
    // log-likelihood, so changes within rounding count as no decrease.
    const double floor_ll =
        terms.loglik - 64.0 * std::numeric_limits<double>::epsilon() *
                           std::max(1.0, std::abs(terms.loglik));
    double scale = 1.0;
    Eigen::VectorXd proposal;
    double proposal_ll = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 40; ++h) {
      proposal = fit.beta_hat + scale * step;
      proposal_ll = lik.log_likelihood(proposal);
      if (std::isfinite(proposal_ll) && proposal_ll >= floor_ll) break;
      scale *= 0.5;
    }
    if (!std::isfinite(proposal_ll) || proposal_ll < floor_ll) {
      // No ascent possible: either already at the optimum to machine
      // precision or the fit diverged.
      fit.loglik = terms.loglik;
      fit.gradient_max_norm = terms.gradient.lpNorm<Eigen::Infinity>();
      fit.converged = fit.gradient_max_norm < options.gradient_tol;
      if (!fit.converged) fit.diagnostic = "step halving failed to increase the log-likelihood";
      return fit;
    }
    const double prev = terms.loglik;
    fit.beta_hat = proposal;
    terms = lik.evaluate(fit.beta_hat);
    fit.loglik = terms.loglik;
    fit.gradient_max_norm = terms.gradient.lpNorm<Eigen::Infinity>();
    if (!fit.beta_hat.allFinite() || !std::isfinite(fit.loglik)) {
      fit.diagnostic = "non-finite coefficients during Newton iterations";
      return fit;
    }
    const double rel = std::abs(fit.loglik - prev) /
                       std::max(1.0, std::abs(fit.loglik));
    if (rel < options.rel_loglik_tol &&
        fit.gradient_max_norm < options.gradient_tol) {
      fit.converged = true;
      return fit;
    }
  }
  fit.diagnostic = "Newton iterations did not converge";
  return fit;
}

double c0_score(const ModelSpec& spec, const MLFit& fit, double gamma,
                std::size_t baseline_q) {
  if (!fit.converged) {
    throw NumericError("C0 needs a converged ML fit: " + fit.diagnostic);
  }
  const double d = static_cast<double>(spec.num_params()) -
                   static_cast<double>(baseline_q);
  return fit.loglik - d * gamma;
}

std::vector<double> default_gamma_grid(double base_loglik, std::size_t count) {
  const double hi = std::max(std::abs(base_loglik) / 2.0, 4.0);
  const double lo = 2.0;
  std::vector<double> grid;
  if (count == 1) return {hi};
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count - 1);
    grid.push_back(std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi))));
  }
  return grid;
}

C0PathResult c0_path_search(const ContingencyTable& table,
                            const ModelSpec& base,
                            const C0SearchOptions& options) {
  if (!base.interactions().empty()) {
    throw InputError("C0 search starts from the independence model");
  }
  const MLFit base_fit = fit_ml(table, base, options.ml);
  if (!base_fit.converged) {
    throw NumericError("independence model fit failed: " + base_fit.diagnostic);
  }

  std::vector<double> grid = options.gamma_grid;
  if (grid.empty()) grid = default_gamma_grid(base_fit.loglik);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw InputError("gamma grid values must be > 0");
    if (i > 0 && !(grid[i] < grid[i - 1])) {
      throw InputError("gamma grid must be strictly descending");
    }
  }

  C0PathResult result;
  result.base_loglik = base_fit.loglik;
  result.candidate_specs.push_back(base);
  result.candidate_beta.push_back(base_fit.beta_hat);

  const std::size_t baseline_q = base.independence_params();
  const std::size_t nvar = base.variables().size();
  ModelSpec current = base;
  MLFit current_fit = base_fit;
  // Fits of current + (u, v); invalidated whenever a term is added.
  std::map<std::pair<std::size_t, std::size_t>, MLFit> cache;

  for (double gamma : grid) {
    if (result.steps.size() >= options.max_steps) break;
    const double current_c0 = c0_score(current, current_fit, gamma, baseline_q);

    bool found = false;
    double best_c0 = 0.0;
    std::pair<std::size_t, std::size_t> best_pair{0, 0};
    for (std::size_t u = 0; u < nvar; ++u) {
      for (std::size_t v = u + 1; v < nvar; ++v) {
        if (current.has_interaction(u, v)) continue;
        const ModelSpec cand = current.with_interaction(u, v);
        if (options.decomposability_check &&
            !interaction_graph_is_chordal(cand)) {
          continue;
        }
        auto it = cache.find({u, v});
        if (it == cache.end()) {
          MLFit f = fit_ml(table, cand, options.ml);
          if (!f.converged) {
            result.warnings.push_back("skipping " + cand.to_string() + ": " +
                                      f.diagnostic);
          }
          it = cache.emplace(std::make_pair(u, v), std::move(f)).first;
        }
        if (!it->second.converged) continue;
        const double c0 = c0_score(cand, it->second, gamma, baseline_q);
        if (!found || c0 > best_c0 + 1e-9) {
          found = true;
          best_c0 = c0;
          best_pair = {u, v};
        }
      }
    }
    if (!found || !(best_c0 > current_c0 + 1e-9)) continue;

    const auto [u, v] = best_pair;
    current_fit = cache.at(best_pair);
    current.add_interaction(u, v);
    cache.clear();

    C0Step step;
    step.u = u;
    step.v = v;
    step.term = base.variables()[u].name + "*" + base.variables()[v].name;
    step.gamma = gamma;
    step.c0 = best_c0;
    step.d = current.num_params() - baseline_q;
    step.loglik = current_fit.loglik;
    result.steps.push_back(step);
    result.candidate_specs.push_back(current);
    result.candidate_beta.push_back(current_fit.beta_hat);
  }
  return result;
}

}  // namespace dprisk
