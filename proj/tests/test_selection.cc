#include <algorithm>
#include <random>

#include "doctest.h"
#include "helpers.hh"

#include "dprisk/errors.hh"
#include "dprisk/population.hh"
#include "dprisk/selection.hh"

using namespace dprisk;

namespace {

PosteriorDraws draws_for(const ContingencyTable& table, const Eigen::MatrixXd& lambda) {
  PosteriorDraws d;
  d.pi = table.sampling_fraction();
  for (std::size_t k = 0; k < table.num_cells(); ++k) d.cells.push_back(k);
  d.lambda = lambda;
  return d;
}

ModelScore score(const std::string& label, double c1, double waic, double tau1 = 0.0) {
  ModelScore s;
  s.label = label;
  s.spec_id = label;
  s.c1 = c1;
  s.waic_u = waic;
  s.tau1_hat = tau1;
  return s;
}

// Sample from a population with one B*C interaction on A:3, B:3, C:2.
ContingencyTable interaction_sample(std::uint64_t seed) {
  const auto vars = parse_variable_declarations("A:3,B:3,C:2");
  const auto spec = ModelSpec::parse("I + B*C", vars);
  const auto beta = testutil::vec({0.0, 0.4, -0.3, 0.5, -0.2, 0.6, 1.5, -1.5});
  RandomEffectLaw law;
  law.kind = RandomEffectLaw::Kind::kGamma;
  law.shape = 2.0;
  law.rate = 2.0;
  const auto pop = generate_population(spec, beta, law, 400.0, seed);
  return draw_sample(pop.table, 0.1, seed + 1);
}

SelectionConfig small_config() {
  SelectionConfig c;
  c.sampler.burn_in = 200;
  c.sampler.H = 200;
  c.sampler.thin = 1;
  c.sampler.seed = 77;
  c.c0.max_steps = 2;
  return c;
}

}  // namespace

TEST_CASE("C1: one draw, one unique cell with pi lambda = 1") {
  const auto t = testutil::table_from_counts(testutil::single_var(2), {1, 3}, 0.5);
  Eigen::MatrixXd lambda(1, 2);
  lambda << 2.0, 7.0;
  CHECK(c1_score(draws_for(t, lambda), t) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("C1 is unchanged by duplicating the draws and is at most zero") {
  const auto t = testutil::table_from_counts(testutil::single_var(4), {1, 0, 1, 1}, 0.3);
  std::mt19937_64 gen(4);
  std::gamma_distribution<double> g(2.0, 3.0);
  Eigen::MatrixXd lambda(250, 4);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda.data()[i] = g(gen);
  Eigen::MatrixXd twice(500, 4);
  twice << lambda, lambda;
  const double a = c1_score(draws_for(t, lambda), t);
  CHECK(c1_score(draws_for(t, twice), t) == doctest::Approx(a).epsilon(1e-13));
  CHECK(a <= 0.0);
}

TEST_CASE("C1 needs sample uniques") {
  const auto t = testutil::table_from_counts(testutil::single_var(2), {2, 3}, 0.5);
  const auto d = draws_for(t, Eigen::MatrixXd::Ones(3, 2));
  CHECK_THROWS_AS(c1_score(d, t), DegenerateInputError);
  CHECK_THROWS_AS(waic_u_score(d, t), DegenerateInputError);
}

TEST_CASE("property: C1 is invariant to draw order and cell order") {
  const std::vector<std::int64_t> f{1, 2, 1, 0, 1};
  std::mt19937_64 gen(6);
  std::gamma_distribution<double> g(1.5, 2.0);
  Eigen::MatrixXd lambda(300, 5);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda.data()[i] = g(gen);
  const auto t = testutil::table_from_counts(testutil::single_var(5), f, 0.2);
  const double base = c1_score(draws_for(t, lambda), t);

  std::vector<Eigen::Index> rows(300);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), gen);
  Eigen::MatrixXd shuffled(300, 5);
  for (Eigen::Index i = 0; i < 300; ++i) shuffled.row(i) = lambda.row(rows[static_cast<std::size_t>(i)]);
  CHECK(c1_score(draws_for(t, shuffled), t) == doctest::Approx(base).epsilon(1e-12));

  const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  std::vector<std::int64_t> fp(5);
  Eigen::MatrixXd lp(300, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    fp[j] = f[perm[j]];
    lp.col(static_cast<Eigen::Index>(j)) = lambda.col(static_cast<Eigen::Index>(perm[j]));
  }
  const auto tp = testutil::table_from_counts(testutil::single_var(5), fp, 0.2);
  CHECK(c1_score(draws_for(tp, lp), tp) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("WAIC_U: constant draws give no penalty and it never exceeds C1") {
  const auto t = testutil::table_from_counts(testutil::single_var(3), {1, 1, 4}, 0.4);
  const auto flat = waic_u_score(draws_for(t, Eigen::MatrixXd::Constant(10, 3, 2.0)), t);
  CHECK(flat.p_waic_u == 0.0);
  CHECK(flat.waic_u == flat.c1);
  CHECK_THROWS_AS(waic_u_score(draws_for(t, Eigen::MatrixXd::Ones(1, 3)), t), InputError);

  std::mt19937_64 gen(7);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd lambda(40, 3);
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda.data()[i] = ln(gen);
    const auto w = waic_u_score(draws_for(t, lambda), t);
    CHECK(w.p_waic_u >= 0.0);
    CHECK(w.waic_u <= w.c1);
    CHECK(w.waic_u == w.c1 - w.p_waic_u);
  }
}

TEST_CASE("WAIC_U can prefer a tight parametric fit that C1 ranks lower") {
  const auto t = testutil::table_from_counts(testutil::single_var(2), {1, 1}, 1.0);
  // Nonparametric draws spread across pi lambda in {0.2, 1.0}; parametric
  // draws fixed at 0.35.
  Eigen::MatrixXd np(1000, 2);
  for (Eigen::Index h = 0; h < 1000; ++h) np.row(h).setConstant(h % 2 ? 1.0 : 0.2);
  const auto p = draws_for(t, Eigen::MatrixXd::Constant(1000, 2, 0.35));
  const auto wn = waic_u_score(draws_for(t, np), t);
  const auto wp = waic_u_score(p, t);
  CHECK(wn.c1 > wp.c1);
  CHECK(wn.waic_u < wp.waic_u);
  auto sp = score("P+I", wp.c1, wp.waic_u);
  sp.candidate = false;
  const auto ranks = rank_models({score("NP+I", wn.c1, wn.waic_u), sp}, std::nullopt);
  CHECK(ranks[0].c1_rank == 1);
  CHECK(ranks[0].waic_rank == 2);
  CHECK(ranks[1].waic_rank == 1);
}

TEST_CASE("C1 on a one-cell table matches numerical integration") {
  // Parametric model log lambda = beta0 with beta0 ~ N(0, 10) and f = 1.
  const double pi = 0.2;
  const auto post = oracle::quadrature_posterior_1d(
      [&](double b) { return std::log(pi) + b - pi * std::exp(b); },
      [](double b) { return -0.5 * b * b / 10.0; }, {-15.0, 15.0, 40001});
  const double direct = std::log(
      post.expect([&](double b) { return pi * std::exp(b) * std::exp(-pi * std::exp(b)); }));

  const auto t = testutil::one_cell_table(1, pi);
  const int H = 20000;
  Eigen::MatrixXd lambda(H, 2);
  for (int h = 0; h < H; ++h) {
    lambda(h, 0) = std::exp(post.quantile((h + 0.5) / H));
    lambda(h, 1) = 1.0;
  }
  CHECK(std::abs(c1_score(draws_for(t, lambda), t) - direct) < 1e-3);

  // The same quantity from a parametric chain.
  SamplerConfig sc;
  sc.burn_in = 2000;
  sc.H = 20000;
  sc.thin = 1;
  sc.seed = 5;
  const ModelSpec spec(t.variables());
  const auto d = run_chain(t, spec, NoRandomEffects{}, sc);
  std::vector<double> pmf;
  const int col = d.column_of(0);
  REQUIRE(col >= 0);
  for (Eigen::Index h = 0; h < d.lambda.rows(); ++h) {
    const double r = pi * d.lambda(h, col);
    pmf.push_back(r * std::exp(-r));
  }
  const double se = testutil::batch_se(pmf) / testutil::mean_of(pmf);
  CHECK(std::abs(c1_score(d, t) - direct) < 4 * se + 1e-3);
}

TEST_CASE("stopping rule") {
  CHECK(stop_index({-10, -8, -7, -9, -6}, 1) == 3);
  CHECK(stop_index({-10, -8, -7, -9, -6}, 2) == 4);
  CHECK(stop_index({-10, -11, -12}, 2) == 2);
  CHECK(stop_index({-10, -9}, 1) == 1);
  CHECK(stop_index({-3}, 1) == 0);
  CHECK(stop_index({-10, -10, -10}, 1) == 2);
  CHECK_THROWS_AS(stop_index({}, 1), InputError);
}

TEST_CASE("property: values after the stop index never change the chosen model") {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> c1(2 + rep % 6);
    for (auto& x : c1) x = z(gen);
    const auto stop = stop_index(c1, 1);
    const auto chosen = static_cast<std::size_t>(
        std::max_element(c1.begin(), c1.begin() + static_cast<long>(stop) + 1) - c1.begin());
    auto longer = c1;
    for (int i = 0; i < 3; ++i) longer.push_back(10.0 * z(gen));
    const auto stop2 = stop_index(longer, 1);
    if (stop < c1.size() - 1) {
      CHECK(stop2 == stop);
      const auto chosen2 = static_cast<std::size_t>(
          std::max_element(longer.begin(), longer.begin() + static_cast<long>(stop2) + 1) -
          longer.begin());
      CHECK(chosen2 == chosen);
    }
  }
}

TEST_CASE("ranking: C1 order, truth column and near ties") {
  const auto r = rank_models({score("NP+I", -10, -11), score("NP+I + A*B", -5, -7)}, std::nullopt);
  CHECK(r[0].c1_rank == 2);
  CHECK(r[1].c1_rank == 1);
  CHECK_FALSE(r[0].error_rank.has_value());
  CHECK_FALSE(r[0].true_error.has_value());
  CHECK_FALSE(r[0].near_tie);

  TrueRisks truth{10, 12.0};
  const auto t = rank_models(
      {score("a", -10, -11, 13.0), score("b", -9.5, -12, 9.5), score("c", -20, -10, 4.0)}, truth);
  CHECK(t[0].error_rank == 2);
  CHECK(t[1].error_rank == 1);
  CHECK(t[2].error_rank == 3);
  CHECK(*t[1].true_error == doctest::Approx(-0.5));
  CHECK(t[0].near_tie);
  CHECK(t[1].near_tie);
  CHECK_FALSE(t[2].near_tie);
  CHECK(t[2].waic_rank == 1);

  const auto tie = rank_models({score("x", -3, -3), score("y", -3, -3)}, std::nullopt);
  CHECK(tie[0].c1_rank == 1);
  CHECK(tie[1].c1_rank == 2);
}

TEST_CASE("two-stage: an empty path evaluates and chooses NP+I") {
  const auto t = interaction_sample(3);
  auto cfg = small_config();
  cfg.c0.gamma_grid = {1e12};
  const auto run = run_two_stage(t, cfg);
  CHECK(run.path.steps.empty());
  REQUIRE(run.scores.size() == 1);
  CHECK(run.chosen == 0);
  CHECK(run.scores[0].label == "NP+I");
  CHECK(run.chosen_spec == "I");
  CHECK(run.truth.has_value());
}

TEST_CASE("two-stage: deterministic and chooses the C1 maximizer") {
  const auto t = interaction_sample(4);
  auto cfg = small_config();
  cfg.report_parametric = true;
  const auto a = run_two_stage(t, cfg);
  const auto b = run_two_stage(t, cfg);
  REQUIRE(a.scores.size() == b.scores.size());
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i].c1 == b.scores[i].c1);
    CHECK(a.scores[i].tau1_hat == b.scores[i].tau1_hat);
  }
  CHECK(a.chosen_spec == b.chosen_spec);
  CHECK(a.parametric.size() == a.scores.size());
  for (const auto& p : a.parametric) {
    CHECK_FALSE(p.candidate);
    CHECK(p.label.rfind("P+", 0) == 0);
  }
  for (const auto& s : a.scores) CHECK(s.c1 <= a.scores[a.chosen].c1);
  CHECK(a.scores.front().spec_id == "I");
}

TEST_CASE("two-stage rejects tables without uniques and bad patience") {
  const auto t = testutil::table_from_counts(testutil::single_var(3), {2, 2, 3}, 0.5);
  CHECK_THROWS_AS(run_two_stage(t, small_config()), DegenerateInputError);
  auto cfg = small_config();
  cfg.patience = 0;
  CHECK_THROWS_AS(run_two_stage(interaction_sample(5), cfg), InputError);
}
