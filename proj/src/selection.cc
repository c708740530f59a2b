#include "dprisk/selection.hh"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dprisk/errors.hh"
#include "dprisk/random.hh"

namespace dprisk {

namespace {

// Columns of the sample uniques; throws DegenerateInputError if none.
std::vector<Eigen::Index> unique_columns(const PosteriorDraws& draws,
                                         const ContingencyTable& table) {
  const auto uniques = table.sample_uniques();
  if (uniques.empty()) {
    throw DegenerateInputError("C1 is undefined without sample uniques");
  }
  std::vector<Eigen::Index> cols;
  for (auto k : uniques) {
    const int c = draws.column_of(k);
    if (c < 0) {
      throw InputError("posterior draws do not cover sample-unique cell " +
                       std::to_string(k));
    }
    cols.push_back(c);
  }
  return cols;
}

// log Poisson(1; pi * lambda).
double log_pmf_one(double pi, double lambda) {
  const double rate = pi * lambda;
  return std::log(rate) - rate;
}

}  // namespace

double c1_score(const PosteriorDraws& draws, const ContingencyTable& table) {
  const auto cols = unique_columns(draws, table);
  const auto H = draws.lambda.rows();
  if (H < 1) throw InputError("C1 needs at least one draw");
  double c1 = 0.0;
  std::vector<double> terms(static_cast<std::size_t>(H));
  for (auto c : cols) {
    for (Eigen::Index h = 0; h < H; ++h) {
      terms[static_cast<std::size_t>(h)] = log_pmf_one(draws.pi, draws.lambda(h, c));
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    c1 += mx + std::log(s / static_cast<double>(H));
  }
  return c1;
}

WaicU waic_u_score(const PosteriorDraws& draws, const ContingencyTable& table) {
  const auto H = draws.lambda.rows();
  if (H < 2) throw InputError("WAIC_U needs at least two draws");
  const auto cols = unique_columns(draws, table);
  WaicU out;
  out.c1 = c1_score(draws, table);
  for (auto c : cols) {
    double mean = 0.0;
    double m2 = 0.0;
    for (Eigen::Index h = 0; h < H; ++h) {
      const double x = log_pmf_one(draws.pi, draws.lambda(h, c));
      const double d = x - mean;
      mean += d / static_cast<double>(h + 1);
      m2 += d * (x - mean);
    }
    out.p_waic_u += m2 / static_cast<double>(H - 1);
  }
  out.waic_u = out.c1 - out.p_waic_u;
  return out;
}

ModelScore score_model(const PosteriorDraws& draws,
                       const ContingencyTable& table, const ModelSpec& spec,
                       const BaseMeasure& base) {
  ModelScore s;
  s.spec_id = spec.to_string();
  s.nonparametric = !std::holds_alternative<NoRandomEffects>(base);
  s.candidate = s.nonparametric;
  s.label = (s.nonparametric ? "NP+" : "P+") + s.spec_id;
  const auto w = waic_u_score(draws, table);
  s.c1 = w.c1;
  s.waic_u = w.waic_u;
  s.p_waic_u = w.p_waic_u;
  const auto star = global_risk_star(draws, table);
  s.tau1_hat = star.tau1;
  s.tau2_hat = star.tau2;
  const std::vector<double> lv{0.025, 0.5, 0.975};
  const auto q1 = risk_quantiles(star.tau1_trace, lv);
  const auto q2 = risk_quantiles(star.tau2_trace, lv);
  s.tau1_lo95 = q1[0];
  s.tau1_median = q1[1];
  s.tau1_hi95 = q1[2];
  s.tau2_lo95 = q2[0];
  s.tau2_median = q2[1];
  s.tau2_hi95 = q2[2];
  s.acceptance_rate = draws.acceptance_rate;
  if (!draws.c_trace.empty()) {
    s.mean_clusters = std::accumulate(draws.c_trace.begin(), draws.c_trace.end(), 0.0) /
                      static_cast<double>(draws.c_trace.size());
  }
  return s;
}

std::size_t stop_index(const std::vector<double>& c1, int patience) {
  if (c1.empty()) throw InputError("empty C1 sequence");
  int declines = 0;
  for (std::size_t i = 1; i < c1.size(); ++i) {
    declines = c1[i] < c1[i - 1] ? declines + 1 : 0;
    if (declines >= patience) return i;
  }
  return c1.size() - 1;
}

SelectionRun run_two_stage(const ContingencyTable& table,
                           const SelectionConfig& config) {
  if (config.patience < 1) throw InputError("patience must be >= 1");
  if (table.sample_uniques().empty()) {
    throw DegenerateInputError("table has no sample uniques");
  }
  SelectionRun run;
  if (table.has_population()) run.truth = true_risks(table);

  const ModelSpec base(table.variables());
  run.path = c0_path_search(table, base, config.c0);
  run.warnings = run.path.warnings;

  std::vector<double> c1_seq;
  int declines = 0;
  run.stop_reason = "search path exhausted";
  for (std::size_t i = 0; i < run.path.candidate_specs.size(); ++i) {
    const auto& spec = run.path.candidate_specs[i];
    SamplerConfig sc = config.sampler;
    sc.seed = substream(config.sampler.seed, i)();
    try {
      const auto draws = run_chains(table, spec, config.base, sc, config.chains,
                                    run.path.candidate_beta[i]);
      run.scores.push_back(score_model(draws, table, spec, config.base));
      run.specs.push_back(spec);
    } catch (const NumericError& e) {
      run.warnings.push_back("candidate " + spec.to_string() +
                             " skipped: " + e.what());
      continue;
    }
    if (config.report_parametric) {
      SamplerConfig pc = config.sampler;
      pc.seed = substream(config.sampler.seed, 1000 + i)();
      try {
        const auto pd = run_chains(table, spec, NoRandomEffects{}, pc,
                                   config.chains, run.path.candidate_beta[i]);
        run.parametric.push_back(score_model(pd, table, spec, NoRandomEffects{}));
      } catch (const NumericError& e) {
        run.warnings.push_back("parametric counterpart of " + spec.to_string() +
                               " skipped: " + e.what());
      }
    }
    const double c1 = run.scores.back().c1;
    if (!c1_seq.empty()) declines = c1 < c1_seq.back() ? declines + 1 : 0;
    c1_seq.push_back(c1);
    if (declines >= config.patience) {
      run.stop_reason = "C1 declined at candidate " + std::to_string(run.scores.size() - 1);
      break;
    }
  }
  if (run.scores.empty()) {
    throw NumericError("every candidate model failed to sample");
  }
  run.chosen = 0;
  for (std::size_t i = 1; i < run.scores.size(); ++i) {
    if (run.scores[i].c1 > run.scores[run.chosen].c1) run.chosen = i;
  }
  run.chosen_spec = run.scores[run.chosen].spec_id;
  return run;
}

std::vector<RankingRow> rank_models(const std::vector<ModelScore>& scores,
                                    const std::optional<TrueRisks>& truth,
                                    double near_tie_threshold) {
  std::vector<RankingRow> rows;
  for (const auto& s : scores) {
    RankingRow r;
    r.label = s.label;
    r.candidate = s.candidate;
    r.c1 = s.c1;
    r.waic_u = s.waic_u;
    if (truth) r.true_error = s.tau1_hat - static_cast<double>(truth->tau1);
    rows.push_back(r);
  }
  auto assign = [&](auto key, auto set) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    for (std::size_t i = 0; i < order.size(); ++i) set(order[i], static_cast<int>(i + 1));
    return order;
  };
  const auto by_c1 = assign([&](std::size_t i) { return -rows[i].c1; },
                            [&](std::size_t i, int rk) { rows[i].c1_rank = rk; });
  assign([&](std::size_t i) { return -rows[i].waic_u; },
         [&](std::size_t i, int rk) { rows[i].waic_rank = rk; });
  if (truth) {
    assign([&](std::size_t i) { return std::abs(*rows[i].true_error); },
           [&](std::size_t i, int rk) { rows[i].error_rank = rk; });
  }
  for (std::size_t i = 0; i + 1 < by_c1.size(); ++i) {
    if (std::abs(rows[by_c1[i]].c1 - rows[by_c1[i + 1]].c1) <= near_tie_threshold) {
      rows[by_c1[i]].near_tie = true;
      rows[by_c1[i + 1]].near_tie = true;
    }
  }
  return rows;
}

}  // namespace dprisk
