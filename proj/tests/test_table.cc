#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helpers.hh"

#include "dprisk/errors.hh"
#include "dprisk/population.hh"
#include "dprisk/random.hh"
#include "dprisk/table.hh"

using namespace dprisk;
using testutil::single_var;
using testutil::table_from_counts;

namespace {

Microdata microdata(const std::string& text) {
  std::istringstream in(text);
  return read_microdata(in);
}

std::vector<KeyVariable> numbered_vars(const std::vector<int>& levels) {
  std::string decl;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    decl += (i ? ",V" : "V") + std::to_string(i) + ":" + std::to_string(levels[i]);
  }
  return parse_variable_declarations(decl);
}

// Random microdata over `vars` with skewed level probabilities.
Microdata random_microdata(const std::vector<KeyVariable>& vars, int rows,
                           std::uint64_t seed) {
  Rng rng(seed);
  Microdata d;
  for (const auto& v : vars) d.header.push_back(v.name);
  for (int r = 0; r < rows; ++r) {
    std::vector<std::string> row;
    for (const auto& v : vars) {
      const double u = uniform01(rng);
      const auto l = static_cast<std::size_t>(u * u * static_cast<double>(v.num_levels()));
      row.push_back(v.levels[std::min(l, v.num_levels() - 1)]);
    }
    d.rows.push_back(row);
  }
  return d;
}

}  // namespace

TEST_CASE("tabulate counts a 2x2 cross-classification") {
  const auto t = tabulate(microdata("A,B\n0,0\n0,0\n1,1\n"),
                          parse_variable_declarations("A:2,B:2"));
  CHECK(t.num_cells() == 4);
  CHECK(t.sample_counts() == std::vector<std::int64_t>{2, 0, 0, 1});
  CHECK(t.sample_size() == 3);
}

TEST_CASE("tabulate rejects empty input") {
  CHECK_THROWS_AS(microdata(""), InputError);
  CHECK_THROWS_AS(tabulate(microdata("A,B\n"), parse_variable_declarations("A:2,B:2")),
                  InputError);
}

TEST_CASE("tabulate reports the row of an unknown label") {
  try {
    tabulate(microdata("A,B\n0,0\n1,7\n"), parse_variable_declarations("A:2,B:2"));
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("tab-delimited microdata with labelled levels") {
  const auto data = microdata("SEX\tAGE\nM\told\nF\tyoung\nM\told\n");
  const auto t = tabulate(data, parse_variable_declarations("SEX:M|F,AGE:young|old"));
  const std::vector<int> m_old{0, 1};
  CHECK(t.f(t.cell_index(m_old)) == 2);
  CHECK(infer_variables(data, {"AGE"})[0].levels == std::vector<std::string>{"old", "young"});
}

TEST_CASE("variable declarations are validated") {
  CHECK_THROWS_AS(parse_variable_declarations("A:1"), InputError);
  CHECK_THROWS_AS(parse_variable_declarations("A:2,A:3"), InputError);
  CHECK_THROWS_AS(parse_variable_declarations("A:x|x"), InputError);
  CHECK_THROWS_AS(parse_variable_declarations("A"), InputError);
  CHECK(parse_variable_declarations("AGE:12,SEX:M|F")[1].levels ==
        std::vector<std::string>{"M", "F"});
}

TEST_CASE("cross-classified sizes of the large census-style tables") {
  CHECK(cross_classified_size(numbered_vars({10, 10, 2, 6, 5, 5, 3, 10, 2, 2})) == 3600000);
  CHECK(cross_classified_size(numbered_vars({11, 12, 2, 20, 4, 2, 4, 5})) == 844800);
}

TEST_CASE("multi-index is row-major with the last variable fastest") {
  ContingencyTable t(numbered_vars({2, 3, 4}));
  CHECK(t.multi_index(1) == std::vector<int>{0, 0, 1});
  CHECK(t.multi_index(4) == std::vector<int>{0, 1, 0});
  for (std::size_t k = 0; k < t.num_cells(); ++k) {
    CHECK(t.cell_index(t.multi_index(k)) == k);
  }
}

TEST_CASE("structural zeros are excluded from active cells") {
  auto t = table_from_counts(single_var(3), {1, 0, 2}, 0.5);
  t.set_structural_zero(1, true);
  CHECK(t.num_active_cells() == 2);
  CHECK(t.active_cells() == std::vector<std::size_t>{0, 2});
  CHECK(t.sample_uniques() == std::vector<std::size_t>{0});
  t.set_f(1, 1);
  CHECK_THROWS_AS(t.validate(), InputError);
}

TEST_CASE("draw_sample with pi = 1 returns the population counts") {
  const auto pop = generate_population(ModelSpec(numbered_vars({3, 4})),
                                       testutil::vec({0, 0.5, -0.5, 0.2, 0.1, -1.0}),
                                       {}, 500, 11);
  const auto s = draw_sample(pop.table, 1.0, 3);
  CHECK(s.sample_counts() == pop.table.population_counts());
  CHECK(s.sampling_fraction() == 1.0);
}

TEST_CASE("draw_sample keeps empty population cells empty") {
  ContingencyTable pop(single_var(2));
  pop.enable_population();
  pop.set_F(0, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = draw_sample(pop, 0.5, seed);
    CHECK(s.sample_size() == 2);
    CHECK(s.f(0) <= 4);
    CHECK(s.f(1) == 0);
    CHECK(s.sampling_fraction() == 0.5);
  }
  CHECK_THROWS_AS(draw_sample(pop, 0.0, 1), InputError);
  CHECK_THROWS_AS(draw_sample(pop, 1.5, 1), InputError);
}

TEST_CASE("draw_sample cell means match the hypergeometric mean") {
  const auto vars = numbered_vars({3, 4});
  const auto pop = generate_population(ModelSpec(vars),
                                       testutil::vec({0, 0.8, -0.4, 0.3, -0.6, 0.2}),
                                       {}, 10000, 5);
  const double N = static_cast<double>(pop.table.population_size());
  const double pi = 0.05;
  const double n = std::round(pi * N);
  const int reps = 400;
  std::vector<double> sum(pop.table.num_cells(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto s = draw_sample(pop.table, pi, 1000 + static_cast<std::uint64_t>(r));
    CHECK(s.sample_size() == static_cast<std::int64_t>(n));
    for (std::size_t k = 0; k < s.num_cells(); ++k) {
      sum[k] += static_cast<double>(s.f(k));
      CHECK(s.f(k) <= pop.table.F(k));
    }
  }
  for (std::size_t k = 0; k < pop.table.num_cells(); ++k) {
    const double p = static_cast<double>(pop.table.F(k)) / N;
    const double mean = n * p;
    const double var = n * p * (1 - p) * (N - n) / (N - 1);
    const double se = std::sqrt(var / reps);
    CHECK(std::abs(sum[k] / reps - mean) < 3 * se);
  }
}

TEST_CASE("true risks by hand") {
  auto t = table_from_counts(single_var(3), {1, 1, 2}, 0.5);
  t.enable_population();
  t.set_F(0, 1);
  t.set_F(1, 3);
  t.set_F(2, 2);
  const auto r = true_risks(t);
  CHECK(r.tau1 == 1);
  CHECK(r.tau2 == doctest::Approx(1.0 + 1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("true risks of a census equal the number of population uniques") {
  const auto pop = generate_population(ModelSpec(numbered_vars({4, 5})),
                                       testutil::vec({0, 0.5, -1, 0.3, 0.2, -0.7, 1.2, -2}),
                                       {}, 60, 9);
  const auto s = draw_sample(pop.table, 1.0, 1);
  auto census = s;
  census.enable_population();
  std::int64_t uniques = 0;
  for (std::size_t k = 0; k < s.num_cells(); ++k) {
    census.set_F(k, pop.table.F(k));
    uniques += pop.table.F(k) == 1 ? 1 : 0;
  }
  const auto r = true_risks(census);
  CHECK(r.tau1 == uniques);
  CHECK(r.tau2 == doctest::Approx(static_cast<double>(uniques)));
}

TEST_CASE("true risks need population counts") {
  const auto t = table_from_counts(single_var(2), {1, 0}, 0.5);
  CHECK_THROWS_AS(true_risks(t), InputError);
}

TEST_CASE("true risks match a record-level recount") {
  const auto vars = numbered_vars({11, 12, 2, 6});
  const auto pop_rows = random_microdata(vars, 3000, 17);
  auto pop = tabulate(pop_rows, vars);
  pop.enable_population();
  for (std::size_t k = 0; k < pop.num_cells(); ++k) pop.set_F(k, pop.f(k));

  // Sample records directly, then recount with a map keyed by label tuples.
  Rng rng(23);
  Microdata sample_rows{pop_rows.header, {}};
  std::vector<std::size_t> order(pop_rows.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < 300; ++i) sample_rows.rows.push_back(pop_rows.rows[order[i]]);

  std::map<std::vector<std::string>, int> fpop;
  std::map<std::vector<std::string>, int> fs;
  for (const auto& r : pop_rows.rows) ++fpop[r];
  for (const auto& r : sample_rows.rows) ++fs[r];
  std::int64_t tau1 = 0;
  double tau2 = 0.0;
  for (const auto& [key, c] : fs) {
    if (c != 1) continue;
    tau1 += fpop[key] == 1 ? 1 : 0;
    tau2 += 1.0 / fpop[key];
  }

  auto sample = tabulate(sample_rows, vars, 0.1);
  sample.enable_population();
  for (std::size_t k = 0; k < sample.num_cells(); ++k) sample.set_F(k, pop.F(k));
  const auto r = true_risks(sample);
  CHECK(r.tau1 == tau1);
  CHECK(r.tau2 == doctest::Approx(tau2).epsilon(1e-12));
}

TEST_CASE("property: marginalizing equals tabulating on the kept variables") {
  const auto vars = numbered_vars({3, 4, 2, 5});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = random_microdata(vars, 200, seed);
    const auto full = tabulate(data, vars);
    const std::vector<std::size_t> keep{3, 1};
    const auto reduced = marginalize(full, keep);
    Microdata sub;
    sub.header = {"V3", "V1"};
    for (const auto& r : data.rows) sub.rows.push_back({r[3], r[1]});
    const auto direct = tabulate(sub, {vars[3], vars[1]});
    CHECK(reduced.sample_counts() == direct.sample_counts());
    CHECK(reduced.sample_size() == full.sample_size());
  }
}

TEST_CASE("property: risk bounds on random population tables") {
  const auto vars = numbered_vars({4, 5, 3});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pop = generate_population(ModelSpec(vars),
                                         testutil::vec({0, 0.4, -0.3, 1.0, 0.2, -0.5, 0.1, 0.9, -0.2, 0.3}),
                                         {}, 150, seed);
    const auto s = draw_sample(pop.table, 0.3, seed + 100);
    auto t = s;
    t.enable_population();
    std::int64_t maxF = 0;
    for (std::size_t k = 0; k < t.num_cells(); ++k) {
      t.set_F(k, pop.table.F(k));
      maxF = std::max(maxF, pop.table.F(k));
    }
    CHECK(t.sample_size() == std::llround(0.3 * static_cast<double>(pop.table.population_size())));
    const auto r = true_risks(t);
    const auto u = static_cast<double>(t.sample_uniques().size());
    CHECK(static_cast<double>(r.tau1) <= u);
    CHECK(r.tau2 <= u + 1e-12);
    CHECK(static_cast<double>(r.tau1) <= r.tau2 + 1e-12);
    CHECK(static_cast<double>(r.tau1) <= r.tau2 * static_cast<double>(maxF) + 1e-12);
  }
}

TEST_CASE("generate_population: intercept-only rates are equal") {
  const auto vars = numbered_vars({3, 4});
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(6);
  beta[0] = std::log(7.0);
  const auto pop = generate_population(ModelSpec(vars), beta, {}, 1200, 1);
  for (double l : pop.lambda) CHECK(l == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(pop.table.sampling_fraction() == 1.0);
  CHECK(pop.table.sample_counts() == pop.table.population_counts());
}

TEST_CASE("generate_population is deterministic given the seed") {
  const auto vars = numbered_vars({3, 4});
  RandomEffectLaw law;
  law.kind = RandomEffectLaw::Kind::kGamma;
  law.shape = 2.0;
  law.rate = 2.0;
  law.mass = 3.0;
  const auto b = testutil::vec({0, 0.3, 0.1, -0.2, 0.4, 0.5});
  const auto a = generate_population(ModelSpec(vars), b, law, 800, 42);
  const auto c = generate_population(ModelSpec(vars), b, law, 800, 42);
  CHECK(a.table.population_counts() == c.table.population_counts());
  CHECK(a.lambda == c.lambda);
}

TEST_CASE("generate_population cell means match the rates") {
  const auto vars = numbered_vars({3, 4});
  const auto b = testutil::vec({0, 0.7, -0.4, 0.5, -0.3, 0.2});
  const int reps = 500;
  std::vector<double> sum(12, 0.0);
  std::vector<double> lambda;
  for (int r = 0; r < reps; ++r) {
    const auto pop = generate_population(ModelSpec(vars), b, {}, 600, 300 + static_cast<std::uint64_t>(r));
    lambda = pop.lambda;
    for (std::size_t k = 0; k < 12; ++k) sum[k] += static_cast<double>(pop.table.F(k));
  }
  double total = 0.0;
  for (double l : lambda) total += l;
  CHECK(total == doctest::Approx(600.0).epsilon(1e-12));
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(std::abs(sum[k] / reps - lambda[k]) < 4 * std::sqrt(lambda[k] / reps));
  }
}

TEST_CASE("generate_population honours the structural mask") {
  const auto vars = numbered_vars({2, 3});
  std::vector<unsigned char> mask(6, 0);
  mask[4] = 1;
  const auto pop = generate_population(ModelSpec(vars), Eigen::VectorXd::Zero(4), {}, 500, 3, mask);
  CHECK(pop.table.is_structural_zero(4));
  CHECK(pop.table.F(4) == 0);
  CHECK(pop.lambda[4] == 0.0);
}
