#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dprisk/dpmcmc.hh"
#include "dprisk/loglinear.hh"
#include "dprisk/risk.hh"
#include "dprisk/table.hh"

namespace dprisk {

// Log pointwise predictive density over the sample-unique cells:
//   sum_{k: f_k = 1} log( (1/H) sum_h pi lambda_k^(h) exp(-pi lambda_k^(h)) ).
double c1_score(const PosteriorDraws& draws, const ContingencyTable& table);

struct WaicU {
  double waic_u = 0.0;
  double p_waic_u = 0.0;
  double c1 = 0.0;
};

// C1 minus the summed posterior variance of the per-cell log predictive terms.
WaicU waic_u_score(const PosteriorDraws& draws, const ContingencyTable& table);

struct ModelScore {
  std::string spec_id;
  std::string label;  // "NP+..." or "P+..."
  bool nonparametric = true;
  bool candidate = true;
  double c1 = 0.0;
  double waic_u = 0.0;
  double p_waic_u = 0.0;
  double tau1_hat = 0.0;
  double tau2_hat = 0.0;
  double tau1_median = 0.0;
  double tau2_median = 0.0;
  double tau1_lo95 = 0.0;
  double tau1_hi95 = 0.0;
  double tau2_lo95 = 0.0;
  double tau2_hi95 = 0.0;
  double acceptance_rate = 0.0;
  double mean_clusters = 0.0;
};

struct SelectionConfig {
  C0SearchOptions c0;
  SamplerConfig sampler;
  BaseMeasure base = GammaBase{};
  // Consecutive strict C1 declines that stop stage two.
  int patience = 1;
  bool report_parametric = false;
  int chains = 1;
};

struct SelectionRun {
  C0PathResult path;
  std::vector<ModelSpec> specs;       // evaluated candidates, path order
  std::vector<ModelScore> scores;     // one per evaluated candidate
  std::vector<ModelScore> parametric; // reporting-only counterparts
  std::size_t chosen = 0;             // index into scores
  std::string chosen_spec;
  std::string stop_reason;
  std::vector<std::string> warnings;
  std::optional<TrueRisks> truth;
};

// Scores one model (DP or parametric, depending on `base`) from its draws.
ModelScore score_model(const PosteriorDraws& draws,
                       const ContingencyTable& table, const ModelSpec& spec,
                       const BaseMeasure& base);

// Index at which a C1 sequence stops: the first position where `patience`
// consecutive strict declines have been seen, or the last index.
std::size_t stop_index(const std::vector<double>& c1, int patience);

SelectionRun run_two_stage(const ContingencyTable& table,
                           const SelectionConfig& config);

struct RankingRow {
  std::string label;
  bool candidate = true;
  double c1 = 0.0;
  double waic_u = 0.0;
  std::optional<double> true_error;  // tau1_hat - true tau1
  int c1_rank = 0;
  int waic_rank = 0;
  std::optional<int> error_rank;
  // |C1 gap| to the next-ranked model below the near-tie threshold.
  bool near_tie = false;
};

// Ranks by C1 (desc), WAIC_U (desc) and |true tau1 error| (asc, only with
// truth). Ties keep input order.
std::vector<RankingRow> rank_models(const std::vector<ModelScore>& scores,
                                    const std::optional<TrueRisks>& truth,
                                    double near_tie_threshold = 2.0);

}  // namespace dprisk
