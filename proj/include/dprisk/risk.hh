#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/dpmcmc.hh"
#include "dprisk/table.hh"

namespace dprisk {

struct CellRiskPair {
  double tau1 = 0.0;
  double tau2 = 0.0;
};

// Risks of a sample-unique cell given its rate, from
// F_k - 1 | f_k = 1 ~ Poisson((1 - pi) lambda):
//   Pr{F_k = 1} = exp(-mu),  E[1/F_k] = (1 - exp(-mu)) / mu.
CellRiskPair per_cell_risk(double lambda, double pi);

struct RiskTraces {
  double tau1 = 0.0;
  double tau2 = 0.0;
  std::vector<double> tau1_trace;
  std::vector<double> tau2_trace;
  bool no_uniques = false;
};

// Per draw: sum of per_cell_risk over sample uniques; estimate is the mean.
RiskTraces global_risk_star(const PosteriorDraws& draws,
                            const ContingencyTable& table);

// Per draw: simulate F_k = 1 + Poisson((1 - pi) lambda_k) for sample uniques
// and evaluate the risk definitions directly.
RiskTraces global_risk_sim(const PosteriorDraws& draws,
                           const ContingencyTable& table, std::uint64_t seed);

inline constexpr double kDefaultQuantileLevels[] = {0.005, 0.025, 0.50, 0.975,
                                                    0.995};

// Linear interpolation between order statistics (h = (n - 1) p).
std::vector<double> risk_quantiles(std::span<const double> trace,
                                   std::span<const double> levels =
                                       kDefaultQuantileLevels);

struct SeDecomposition {
  double se = 0.0;
  double within = 0.0;      // V_w
  double between = 0.0;     // D_b
  double codeviance = 0.0;  // C_b
};

// `per_draw` is H x U (draws by contributing cells). `cells` is the number of
// cells the between/codeviance terms are centred over; defaults to U.
SeDecomposition se_decomposition(const Eigen::MatrixXd& per_draw,
                                 std::optional<std::size_t> cells = {});

// H x U matrix of per-draw per-cell risks over the sample uniques.
struct PerCellRiskDraws {
  std::vector<std::size_t> cells;
  Eigen::MatrixXd tau1;
  Eigen::MatrixXd tau2;
};

PerCellRiskDraws per_cell_risk_draws(const PosteriorDraws& draws,
                                     const ContingencyTable& table);

struct PerCellRiskRow {
  std::size_t cell = 0;
  std::vector<int> index;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau1_sd = 0.0;
  double tau2_sd = 0.0;
  double lambda_mean = 0.0;
};

struct QuantileRow {
  double level = 0.0;
  double value = 0.0;
};

struct RiskReport {
  std::size_t sample_uniques = 0;
  double tau1_star = 0.0;
  double tau2_star = 0.0;
  double tau1_star_median = 0.0;
  double tau2_star_median = 0.0;
  double tau1_sim = 0.0;
  double tau2_sim = 0.0;
  std::vector<QuantileRow> tau1_quantiles;
  std::vector<QuantileRow> tau2_quantiles;
  SeDecomposition tau1_se;
  SeDecomposition tau2_se;
  std::vector<PerCellRiskRow> per_cell;
  std::optional<TrueRisks> truth;
};

RiskReport build_risk_report(const PosteriorDraws& draws,
                             const ContingencyTable& table, std::uint64_t seed,
                             std::span<const double> levels =
                                 kDefaultQuantileLevels);

}  // namespace dprisk
