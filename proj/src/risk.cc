#include "dprisk/risk.hh"

#include <algorithm>
#include <cmath>

#include "dprisk/errors.hh"
#include "dprisk/random.hh"

namespace dprisk {

CellRiskPair per_cell_risk(double lambda, double pi) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InputError("per-cell risk needs a finite rate > 0");
  }
  if (!(pi > 0.0 && pi <= 1.0)) throw InputError("pi must lie in (0, 1]");
  if (pi == 1.0) return {1.0, 1.0};
  const double mu = (1.0 - pi) * lambda;
  return {std::exp(-mu), -std::expm1(-mu) / mu};
}

namespace {

std::vector<std::size_t> unique_columns(const PosteriorDraws& draws,
                                        const ContingencyTable& table,
                                        std::vector<std::size_t>* cells) {
  std::vector<std::size_t> cols;
  for (auto k : table.sample_uniques()) {
    const int c = draws.column_of(k);
    if (c < 0) {
      throw InputError("posterior draws do not cover sample-unique cell " +
                       std::to_string(k));
    }
    cols.push_back(static_cast<std::size_t>(c));
    if (cells) cells->push_back(k);
  }
  return cols;
}

}  // namespace

PerCellRiskDraws per_cell_risk_draws(const PosteriorDraws& draws,
                                     const ContingencyTable& table) {
  PerCellRiskDraws out;
  const auto cols = unique_columns(draws, table, &out.cells);
  const auto H = draws.lambda.rows();
  const auto U = static_cast<Eigen::Index>(cols.size());
  out.tau1.resize(H, U);
  out.tau2.resize(H, U);
  for (Eigen::Index h = 0; h < H; ++h) {
    for (Eigen::Index u = 0; u < U; ++u) {
      const auto r = per_cell_risk(
          draws.lambda(h, static_cast<Eigen::Index>(cols[static_cast<std::size_t>(u)])),
          draws.pi);
      out.tau1(h, u) = r.tau1;
      out.tau2(h, u) = r.tau2;
    }
  }
  return out;
}

RiskTraces global_risk_star(const PosteriorDraws& draws,
                            const ContingencyTable& table) {
  if (draws.num_draws() == 0) throw InputError("no posterior draws");
  const auto pc = per_cell_risk_draws(draws, table);
  RiskTraces out;
  out.no_uniques = pc.cells.empty();
  const auto H = static_cast<std::size_t>(draws.lambda.rows());
  out.tau1_trace.resize(H);
  out.tau2_trace.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    const auto hi = static_cast<Eigen::Index>(h);
    out.tau1_trace[h] = pc.cells.empty() ? 0.0 : pc.tau1.row(hi).sum();
    out.tau2_trace[h] = pc.cells.empty() ? 0.0 : pc.tau2.row(hi).sum();
    out.tau1 += out.tau1_trace[h];
    out.tau2 += out.tau2_trace[h];
  }
  out.tau1 /= static_cast<double>(H);
  out.tau2 /= static_cast<double>(H);
  return out;
}

RiskTraces global_risk_sim(const PosteriorDraws& draws,
                           const ContingencyTable& table, std::uint64_t seed) {
  if (draws.num_draws() == 0) throw InputError("no posterior draws");
  const auto cols = unique_columns(draws, table, nullptr);
  Rng rng(seed);
  RiskTraces out;
  out.no_uniques = cols.empty();
  const auto H = static_cast<std::size_t>(draws.lambda.rows());
  out.tau1_trace.assign(H, 0.0);
  out.tau2_trace.assign(H, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (auto c : cols) {
      const double mu = (1.0 - draws.pi) *
                        draws.lambda(static_cast<Eigen::Index>(h),
                                     static_cast<Eigen::Index>(c));
      const auto F = 1 + poisson_draw(rng, mu);
      if (F == 1) out.tau1_trace[h] += 1.0;
      out.tau2_trace[h] += 1.0 / static_cast<double>(F);
    }
    out.tau1 += out.tau1_trace[h];
    out.tau2 += out.tau2_trace[h];
  }
  out.tau1 /= static_cast<double>(H);
  out.tau2 /= static_cast<double>(H);
  return out;
}

std::vector<double> risk_quantiles(std::span<const double> trace,
                                   std::span<const double> levels) {
  if (trace.empty()) throw InputError("quantiles of an empty trace");
  std::vector<double> sorted(trace.begin(), trace.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(levels.size());
  const double last = static_cast<double>(sorted.size() - 1);
  for (double p : levels) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level outside [0, 1]");
    const double h = last * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    out.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }
  return out;
}

SeDecomposition se_decomposition(const Eigen::MatrixXd& per_draw,
                                 std::optional<std::size_t> cells) {
  const auto H = per_draw.rows();
  if (H < 2) throw InputError("standard-error decomposition needs H >= 2");
  const auto U = per_draw.cols();
  const double Kc = static_cast<double>(cells.value_or(static_cast<std::size_t>(U)));
  if (Kc < static_cast<double>(U)) {
    throw InputError("cell count below number of contributing cells");
  }
  const double Hd = static_cast<double>(H);

  const Eigen::VectorXd cell_mean = per_draw.colwise().mean().transpose();
  const double total = cell_mean.sum();
  const double mean_sq_sum = per_draw.array().square().sum() / Hd;
  const double sq_mean_sum = cell_mean.squaredNorm();
  const Eigen::VectorXd row_sum = per_draw.rowwise().sum();
  // sum_k sum_{j != k} mean_h(x_hk x_hj) = mean_h (sum_k x_hk)^2 - sum_k mean_h x_hk^2
  const double cross = row_sum.squaredNorm() / Hd - mean_sq_sum;
  const double per_cell = total / (Kc > 0.0 ? Kc : 1.0);

  SeDecomposition out;
  out.within = mean_sq_sum - sq_mean_sum;
  out.between = sq_mean_sum - Kc * per_cell * per_cell;
  out.codeviance = cross - Kc * (Kc - 1.0) * per_cell * per_cell;
  const double var = out.within + out.between + out.codeviance;
  out.se = std::sqrt(std::max(var, 0.0));
  return out;
}

RiskReport build_risk_report(const PosteriorDraws& draws,
                             const ContingencyTable& table, std::uint64_t seed,
                             std::span<const double> levels) {
  const auto uniques = table.sample_uniques();
  if (uniques.empty()) {
    throw DegenerateInputError("table has no sample uniques; risks are zero");
  }
  RiskReport rep;
  rep.sample_uniques = uniques.size();
  const auto star = global_risk_star(draws, table);
  const auto sim = global_risk_sim(draws, table, seed);
  rep.tau1_star = star.tau1;
  rep.tau2_star = star.tau2;
  rep.tau1_sim = sim.tau1;
  rep.tau2_sim = sim.tau2;
  const std::vector<double> half{0.5};
  rep.tau1_star_median = risk_quantiles(star.tau1_trace, half)[0];
  rep.tau2_star_median = risk_quantiles(star.tau2_trace, half)[0];
  const auto q1 = risk_quantiles(star.tau1_trace, levels);
  const auto q2 = risk_quantiles(star.tau2_trace, levels);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    rep.tau1_quantiles.push_back({levels[i], q1[i]});
    rep.tau2_quantiles.push_back({levels[i], q2[i]});
  }

  const auto pc = per_cell_risk_draws(draws, table);
  if (draws.num_draws() >= 2) {
    rep.tau1_se = se_decomposition(pc.tau1);
    rep.tau2_se = se_decomposition(pc.tau2);
  }
  for (std::size_t u = 0; u < pc.cells.size(); ++u) {
    const auto ui = static_cast<Eigen::Index>(u);
    PerCellRiskRow row;
    row.cell = pc.cells[u];
    row.index = table.multi_index(row.cell);
    const auto c1 = pc.tau1.col(ui);
    const auto c2 = pc.tau2.col(ui);
    row.tau1 = c1.mean();
    row.tau2 = c2.mean();
    const double n = static_cast<double>(c1.size());
    if (c1.size() > 1) {
      row.tau1_sd = std::sqrt((c1.array() - row.tau1).square().sum() / (n - 1.0));
      row.tau2_sd = std::sqrt((c2.array() - row.tau2).square().sum() / (n - 1.0));
    }
    row.lambda_mean =
        draws.lambda.col(static_cast<Eigen::Index>(draws.column_of(row.cell))).mean();
    rep.per_cell.push_back(std::move(row));
  }
  if (table.has_population()) rep.truth = true_risks(table);
  return rep;
}

}  // namespace dprisk
