#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/loglinear.hh"
#include "dprisk/model_spec.hh"
#include "dprisk/random.hh"
#include "dprisk/table.hh"

namespace dprisk {

// omega = exp(phi) ~ Gamma(a, b), b a rate. Conjugate with the Poisson cells.
struct GammaBase {
  double a = 1.0;
  double b = 0.1;
};

// phi ~ N(alpha, sigma2) with alpha ~ N(mean0, var0) and
// sigma2 ~ InvGamma(shape, scale).
struct GaussianBase {
  double mean0 = 0.0;
  double var0 = 10.0;
  double shape = 1.0;
  double scale = 1.0;
};

// Parametric counterpart: no random effects at all.
struct NoRandomEffects {};

using BaseMeasure = std::variant<NoRandomEffects, GammaBase, GaussianBase>;

void validate_base(const BaseMeasure& base);
std::string base_name(const BaseMeasure& base);

struct SamplerConfig {
  int burn_in = 5000;
  int H = 5000;
  int thin = 2;
  double epsilon = 0.5;
  double epsilon_adapt_target = 0.574;
  bool adapt_epsilon = true;
  double m_prior_shape = 1.0;
  double m_prior_rate = 0.1;
  double m_init = 1.0;
  // Holds m at this value and skips the Escobar-West step.
  std::optional<double> fixed_m;
  double beta_prior_var = 10.0;
  // Number of Metropolis reassignment attempts per cell (Gaussian base).
  int aux_components = 3;
  // Random-walk scale for cluster values under the Gaussian base.
  double re_step = 0.5;
  bool update_beta = true;
  bool update_partition = true;
  bool update_base_hyper = true;
  // Fix beta at the initial value (the ML estimate) and skip its update.
  bool empirical_bayes = false;
  // Retain lambda for every non-structural cell instead of sample uniques.
  bool track_all_cells = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// Items are the non-structural cells in design-row order. Cluster slots are
// recycled; `active()` lists the live ones.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::size_t items);

  std::size_t items() const { return label_.size(); }
  int cluster_of(std::size_t i) const { return label_[i]; }
  int size(int slot) const { return size_[static_cast<std::size_t>(slot)]; }
  const std::vector<int>& active() const { return active_; }
  std::size_t num_clusters() const { return active_.size(); }
  std::size_t slots() const { return size_.size(); }

  int new_cluster();
  // Moves item i into `slot`; i must currently be unassigned.
  void assign(std::size_t i, int slot);
  // Unassigns item i; returns true when its cluster became empty (and was
  // released).
  bool remove(std::size_t i);

  // Relabels clusters by order of first appearance (0, 1, ...).
  std::vector<int> canonical_labels() const;

 private:
  void release(int slot);

  std::vector<int> label_;
  std::vector<int> size_;
  std::vector<int> free_;
  std::vector<int> active_;
  std::vector<int> position_;
};

struct DPState {
  Eigen::VectorXd beta;
  Partition partition;
  // Random effect phi_j per cluster slot (omega_j = exp(phi_j) under the Gamma
  // base).
  std::vector<double> phi;
  double m = 1.0;
  // Current base hyperparameters (Gaussian base only).
  double alpha = 0.0;
  double sigma2 = 1.0;

  std::size_t num_clusters() const { return partition.num_clusters(); }
  // phi of the cluster holding design row r (0 for parametric chains).
  double effect(std::size_t r) const;
};

// Everything the cluster and beta updates need about one table and model.
class ChainContext {
 public:
  ChainContext(const ContingencyTable& table, const ModelSpec& spec);
  ChainContext(const ChainContext&) = delete;
  ChainContext& operator=(const ChainContext&) = delete;

  const ContingencyTable& table() const { return *table_; }
  const DesignMatrix& design() const { return design_; }
  const PoissonLikelihood& likelihood() const { return likelihood_; }
  std::size_t items() const { return design_.rows(); }
  double pi() const { return table_->sampling_fraction(); }
  double count(std::size_t r) const { return likelihood_.counts()[r]; }

  // t_r = pi * exp(w_r' beta).
  std::vector<double> fixed_rates(const Eigen::VectorXd& beta) const;

 private:
  const ContingencyTable* table_;
  DesignMatrix design_;
  PoissonLikelihood likelihood_;
};

struct SmmalaTerms {
  double log_target = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd metric;
};

// Log conditional posterior of beta given the random effects, its gradient
// and the metric (Fisher information plus prior precision).
SmmalaTerms smmala_terms(const ChainContext& ctx, const Eigen::VectorXd& beta,
                         std::span<const double> offset, double prior_var);

struct SmmalaResult {
  bool accepted = false;
  // min(1, Hastings ratio); drives step-size adaptation.
  double accept_prob = 0.0;
};

// One simplified-manifold MALA step on beta given the current random effects.
SmmalaResult smmala_update(DPState& state, const ChainContext& ctx,
                           const SamplerConfig& config, double epsilon,
                           Rng& rng);

// Collapsed reassignment of every cell followed by a conjugate draw of each
// cluster's omega.
void neal3_update(DPState& state, const ChainContext& ctx,
                  const GammaBase& base, Rng& rng);

struct Neal5Stats {
  std::size_t value_proposals = 0;
  std::size_t value_accepts = 0;
};

// Metropolis reassignment with proposals from the conditional prior (new
// clusters drawn from the base), random-walk refresh of each cluster value and
// conjugate refresh of (alpha, sigma2).
Neal5Stats neal5_update(DPState& state, const ChainContext& ctx,
                        const GaussianBase& base, const SamplerConfig& config,
                        double re_step, Rng& rng);

// Auxiliary-variable draw of the DP mass given c clusters over k items.
double escobar_west_update(double m, std::size_t c, std::size_t k,
                           double prior_shape, double prior_rate, Rng& rng);

struct PosteriorDraws {
  double pi = 1.0;
  // Table cell ids of the tracked columns.
  std::vector<std::size_t> cells;
  // H x cells.size().
  Eigen::MatrixXd lambda;
  // Posterior mean of lambda per non-structural cell (design-row order), with
  // the matching table cell ids.
  std::vector<std::size_t> all_cells;
  std::vector<double> lambda_mean;
  std::vector<int> c_trace;
  std::vector<double> m_trace;
  Eigen::MatrixXd beta_trace;
  double acceptance_rate = 0.0;
  double final_epsilon = 0.0;
  std::string base;
  std::string spec;

  std::size_t num_draws() const {
    return static_cast<std::size_t>(lambda.rows());
  }
  // Column of table cell k; -1 if not tracked.
  int column_of(std::size_t k) const;
};

// `init_beta` is used when non-empty (typically the ML estimate).
PosteriorDraws run_chain(const ContingencyTable& table, const ModelSpec& spec,
                         const BaseMeasure& base, const SamplerConfig& config,
                         const Eigen::VectorXd& init_beta = {});

// Independent chains with seeds derived from config.seed, draws pooled in
// chain order.
PosteriorDraws run_chains(const ContingencyTable& table, const ModelSpec& spec,
                          const BaseMeasure& base, const SamplerConfig& config,
                          int chains, const Eigen::VectorXd& init_beta = {});

// Initial state used by run_chain (single cluster, phi = 0).
DPState initial_state(const ChainContext& ctx, const BaseMeasure& base,
                      const SamplerConfig& config,
                      const Eigen::VectorXd& init_beta);

}  // namespace dprisk
