// Command-line front end: tabulate, sample, generate, fit-ml, search-c0,
// fit-dp, risk, select, report.
//
// Exit codes: 0 ok, 2 input error, 3 degenerate input, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dprisk/dpmcmc.hh"
#include "dprisk/errors.hh"
#include "dprisk/io.hh"
#include "dprisk/loglinear.hh"
#include "dprisk/population.hh"
#include "dprisk/risk.hh"
#include "dprisk/selection.hh"
#include "dprisk/table.hh"

namespace fs = std::filesystem;
using dprisk::io::Json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitNumeric = 4;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw dprisk::InputError("bad number '" + item + "' in " + what);
    }
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dprisk::InputError("cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Sampler settings: defaults, then the config file, then explicit flags.
struct SamplerFlags {
  std::string config;
  int burn_in = 0;
  int draws = 0;
  int thin = 0;
  double epsilon = 0.0;
  double fixed_m = 0.0;
  bool empirical_bayes = false;
  bool track_all = false;
  std::string base = "gamma";
  double gamma_a = 1.0;
  double gamma_b = 0.1;
  int chains = 1;
  CLI::Option* o_burn = nullptr;
  CLI::Option* o_draws = nullptr;
  CLI::Option* o_thin = nullptr;
  CLI::Option* o_eps = nullptr;
  CLI::Option* o_fixed_m = nullptr;
  CLI::Option* o_base = nullptr;
  CLI::Option* o_a = nullptr;
  CLI::Option* o_b = nullptr;
  CLI::Option* o_chains = nullptr;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    o_burn = app->add_option("--burn-in", burn_in, "burn-in sweeps");
    o_draws = app->add_option("--draws", draws, "retained draws H");
    o_thin = app->add_option("--thin", thin, "thinning interval");
    o_eps = app->add_option("--epsilon", epsilon, "initial SMMALA step size");
    o_fixed_m = app->add_option("--fixed-m", fixed_m, "hold the DP mass fixed");
    app->add_flag("--empirical-bayes", empirical_bayes, "fix beta at the ML estimate");
    app->add_flag("--track-all-cells", track_all, "keep draws for every cell");
    o_base = app->add_option("--base", base, "gamma, gaussian or none")
                 ->check(CLI::IsMember({"gamma", "gaussian", "none"}));
    o_a = app->add_option("--gamma-a", gamma_a, "Gamma base shape");
    o_b = app->add_option("--gamma-b", gamma_b, "Gamma base rate");
    o_chains = app->add_option("--chains", chains, "parallel chains")->check(CLI::PositiveNumber);
  }

  Json config_json() const {
    if (config.empty()) return Json::object();
    Json cfg = dprisk::io::read_json_file(config);
    if (!cfg.is_object()) throw dprisk::InputError("config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (key != "sampler" && key != "base" && key != "chains") {
        throw dprisk::InputError("unknown config key '" + key + "'");
      }
    }
    if (cfg.contains("base")) {
      if (!cfg["base"].is_object()) throw dprisk::InputError("config 'base' must be an object");
      for (const auto& [key, value] : cfg["base"].items()) {
        if (key != "kind" && key != "a" && key != "b") {
          throw dprisk::InputError("unknown config key 'base." + key + "'");
        }
      }
    }
    return cfg;
  }

  dprisk::BaseMeasure base_measure(const Json& cfg) const {
    std::string kind = "gamma";
    double a = 1.0;
    double b = 0.1;
    if (cfg.contains("base")) {
      const auto& jb = cfg["base"];
      kind = jb.value("kind", kind);
      a = jb.value("a", a);
      b = jb.value("b", b);
    }
    if (o_base->count()) kind = base;
    if (o_a->count()) a = gamma_a;
    if (o_b->count()) b = gamma_b;
    dprisk::BaseMeasure out;
    if (kind == "gamma") out = dprisk::GammaBase{a, b};
    else if (kind == "gaussian") out = dprisk::GaussianBase{};
    else if (kind == "none") out = dprisk::NoRandomEffects{};
    else throw dprisk::InputError("unknown base '" + kind + "'");
    dprisk::validate_base(out);
    return out;
  }

  dprisk::SamplerConfig sampler(const Json& cfg, const dprisk::BaseMeasure& b,
                                std::uint64_t seed) const {
    dprisk::SamplerConfig c;
    // The Gaussian-base variant uses a Gamma(1, 1) prior on the DP mass.
    if (std::holds_alternative<dprisk::GaussianBase>(b)) c.m_prior_rate = 1.0;
    if (cfg.contains("sampler")) dprisk::io::apply_json(c, cfg["sampler"]);
    if (o_burn->count()) c.burn_in = burn_in;
    if (o_draws->count()) c.H = draws;
    if (o_thin->count()) c.thin = thin;
    if (o_eps->count()) c.epsilon = epsilon;
    if (o_fixed_m->count()) c.fixed_m = fixed_m;
    if (empirical_bayes) c.empirical_bayes = true;
    if (track_all) c.track_all_cells = true;
    c.seed = seed;
    c.validate();
    return c;
  }

  int num_chains(const Json& cfg) const {
    if (o_chains->count()) return chains;
    return cfg.value("chains", 1);
  }
};

dprisk::ContingencyTable load_table(const std::string& prefix,
                                    const std::string& mask) {
  auto table = dprisk::io::read_table(prefix);
  if (!mask.empty()) {
    std::ifstream in(mask, std::ios::binary);
    if (!in) throw dprisk::InputError("cannot open " + mask);
    dprisk::io::apply_structural_zero_mask(table, in);
  }
  return table;
}

Eigen::VectorXd ml_start(const dprisk::ContingencyTable& table,
                         const dprisk::ModelSpec& spec) {
  const auto fit = dprisk::fit_ml(table, spec);
  if (fit.converged) return fit.beta_hat;
  std::cerr << "warning: ML fit did not converge (" << fit.diagnostic
            << "); starting from the intercept-only point\n";
  return {};
}

void write_draws(const dprisk::PosteriorDraws& d, const dprisk::ContingencyTable& t,
                 const std::string& dir, const dprisk::SamplerConfig& cfg, int chains) {
  ensure_dir(dir);
  std::ostringstream draws;
  dprisk::io::write_draws_csv(d, draws);
  dprisk::io::write_file(join(dir, "draws.csv"), draws.str());
  auto diag = dprisk::io::diagnostics_json(d);
  diag["chains"] = chains;
  diag["sampler"] = dprisk::io::to_json(cfg);
  dprisk::io::write_file(join(dir, "diagnostics.json"), diag.dump(2) + "\n");
  std::ostringstream means;
  dprisk::io::write_lambda_mean_csv(d, t, means);
  dprisk::io::write_file(join(dir, "lambda_mean.csv"), means.str());
}

void print_risk_summary(const dprisk::RiskReport& r) {
  std::cout << std::fixed;
  std::cout.precision(3);
  std::cout << "sample uniques: " << r.sample_uniques << "\n"
            << "tau1*: " << r.tau1_star << " (median " << r.tau1_star_median
            << ", se " << r.tau1_se.se << ")\n"
            << "tau2*: " << r.tau2_star << " (median " << r.tau2_star_median
            << ", se " << r.tau2_se.se << ")\n"
            << "tau1 (sim): " << r.tau1_sim << "\n"
            << "tau2 (sim): " << r.tau2_sim << "\n";
  if (r.truth) {
    std::cout << "true tau1: " << r.truth->tau1 << "\n"
              << "true tau2: " << r.truth->tau2 << "\n";
  }
}

std::string render_report(const Json& j) {
  std::ostringstream out;
  out << std::fixed;
  if (j.contains("candidates")) {
    out.precision(2);
    if (j.contains("truth")) {
      out << "true tau1 = " << j["truth"]["tau1"].get<long long>() << ", true tau2 = "
          << j["truth"]["tau2"].get<double>() << "\n";
    }
    std::vector<Json> rows;
    for (const auto& c : j["candidates"]) rows.push_back(c);
    for (const auto& c : j["parametric"]) rows.push_back(c);
    const auto& rk = j["ranking"];
    out << "model, tau1, tau2, C1, WAIC_U, rank_err, rank_C1, rank_WAIC\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const auto& k = rk.at(i);
      out << r["label"].get<std::string>() << (r["candidate"].get<bool>() ? "" : " (ref)")
          << ", " << r["tau1_hat"].get<double>() << ", " << r["tau2_hat"].get<double>()
          << ", " << r["c1"].get<double>() << ", " << r["waic_u"].get<double>() << ", "
          << (k.contains("error_rank") ? std::to_string(k["error_rank"].get<int>()) : "-")
          << ", " << k["c1_rank"].get<int>() << ", " << k["waic_rank"].get<int>() << "\n";
    }
    out << "chosen: NP+" << j["chosen_spec"].get<std::string>() << "\n";
  } else if (j.contains("tau1_star")) {
    out.precision(3);
    out << "sample uniques: " << j["sample_uniques"].get<long long>() << "\n";
    for (const char* m : {"tau1", "tau2"}) {
      const std::string s = m;
      out << s << "*: " << j[s + "_star"].get<double>() << " median "
          << j[s + "_star_median"].get<double>() << " se "
          << j[s + "_se"]["se"].get<double>() << "\n  quantiles:";
      for (const auto& q : j[s + "_quantiles"]) {
        out << " " << q["level"].get<double>() << "=" << q["value"].get<double>();
      }
      out << "\n";
    }
    if (j.contains("truth")) {
      out << "true tau1: " << j["truth"]["tau1"].get<long long>()
          << ", true tau2: " << j["truth"]["tau2"].get<double>() << "\n";
    }
  } else {
    throw dprisk::InputError("report input is neither a selection nor a risk report");
  }
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disclosure-risk estimation for categorical microdata"};
  app.require_subcommand(1);

  // tabulate
  auto* tab = app.add_subcommand("tabulate", "cross-classify microdata into a table");
  std::string tab_input, tab_vars, tab_columns, tab_out, tab_mask;
  double tab_pi = 1.0;
  bool tab_population = false;
  bool tab_size_only = false;
  tab->add_option("--input", tab_input, "delimited microdata with a header row");
  tab->add_option("--variables", tab_vars, "declarations, e.g. AGE:12,SEX:M|F");
  tab->add_option("--columns", tab_columns, "columns to use, levels inferred");
  tab->add_option("--pi", tab_pi, "sampling fraction");
  tab->add_flag("--population", tab_population, "store counts as population F");
  tab->add_option("--mask", tab_mask, "structural-zero mask file");
  tab->add_flag("--size-only", tab_size_only, "report K from --variables and stop");
  tab->add_option("--out", tab_out, "output prefix");

  // sample
  auto* smp = app.add_subcommand("sample", "draw a simple random sample from a population");
  std::string smp_pop, smp_out;
  double smp_pi = 0.05;
  std::uint64_t smp_seed = 0;
  smp->add_option("--population", smp_pop, "population table prefix")->required();
  smp->add_option("--pi", smp_pi, "sampling fraction");
  smp->add_option("--seed", smp_seed, "random seed")->required();
  smp->add_option("--out", smp_out, "output prefix")->required();

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize a population table");
  std::string gen_vars, gen_spec = "I", gen_beta, gen_re = "none", gen_out, gen_mask;
  double gen_n = 10000, gen_main_sd = 1.0, gen_inter_sd = 1.0;
  double gen_re_shape = 1.0, gen_re_rate = 1.0, gen_re_sd = 1.0, gen_re_mass = 0.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--variables", gen_vars, "variable declarations")->required();
  gen->add_option("--spec", gen_spec, "model shorthand, e.g. 'I + A*B'");
  gen->add_option("--beta", gen_beta, "comma-separated coefficients (default: random)");
  gen->add_option("--main-sd", gen_main_sd, "sd of random main effects");
  gen->add_option("--interaction-sd", gen_inter_sd, "sd of random interaction effects");
  gen->add_option("--re", gen_re, "random effects: none, gamma or normal")
      ->check(CLI::IsMember({"none", "gamma", "normal"}));
  gen->add_option("--re-shape", gen_re_shape, "Gamma effect shape");
  gen->add_option("--re-rate", gen_re_rate, "Gamma effect rate");
  gen->add_option("--re-sd", gen_re_sd, "Normal effect sd");
  gen->add_option("--re-mass", gen_re_mass, "DP mass for shared effects (0 = iid)");
  gen->add_option("--N", gen_n, "expected population size");
  gen->add_option("--mask", gen_mask, "structural-zero mask file");
  gen->add_option("--seed", gen_seed, "random seed")->required();
  gen->add_option("--out", gen_out, "output prefix")->required();

  // fit-ml
  auto* fml = app.add_subcommand("fit-ml", "maximum-likelihood log-linear fit");
  std::string fml_table, fml_spec = "I", fml_out, fml_mask;
  fml->add_option("--table", fml_table, "table prefix")->required();
  fml->add_option("--spec", fml_spec, "model shorthand");
  fml->add_option("--mask", fml_mask, "structural-zero mask file");
  fml->add_option("--out", fml_out, "output JSON");

  // search-c0
  auto* sc0 = app.add_subcommand("search-c0", "penalized-likelihood path search");
  std::string sc0_table, sc0_grid, sc0_out, sc0_mask;
  std::size_t sc0_steps = 4;
  bool sc0_no_decomp = false;
  sc0->add_option("--table", sc0_table, "table prefix")->required();
  sc0->add_option("--gamma-grid", sc0_grid, "descending comma-separated penalties");
  sc0->add_option("--max-steps", sc0_steps, "maximum interactions added");
  sc0->add_flag("--no-decomposability-check", sc0_no_decomp, "allow non-chordal models");
  sc0->add_option("--mask", sc0_mask, "structural-zero mask file");
  sc0->add_option("--out", sc0_out, "output JSON");

  // fit-dp
  auto* fdp = app.add_subcommand("fit-dp", "run the mixed-model sampler");
  std::string fdp_table, fdp_spec = "I", fdp_dir, fdp_mask;
  std::uint64_t fdp_seed = 0;
  SamplerFlags fdp_flags;
  fdp->add_option("--table", fdp_table, "table prefix")->required();
  fdp->add_option("--spec", fdp_spec, "model shorthand");
  fdp->add_option("--mask", fdp_mask, "structural-zero mask file");
  fdp->add_option("--seed", fdp_seed, "random seed")->required();
  fdp->add_option("--out-dir", fdp_dir, "output directory")->required();
  fdp_flags.add(fdp);

  // risk
  auto* rsk = app.add_subcommand("risk", "risk estimates from draws or a fresh chain");
  std::string rsk_table, rsk_draws, rsk_spec, rsk_dir, rsk_mask;
  std::uint64_t rsk_seed = 0;
  SamplerFlags rsk_flags;
  rsk->add_option("--table", rsk_table, "table prefix")->required();
  rsk->add_option("--draws-dir", rsk_draws, "directory written by fit-dp");
  rsk->add_option("--spec", rsk_spec, "model shorthand (runs a chain)");
  rsk->add_option("--mask", rsk_mask, "structural-zero mask file");
  rsk->add_option("--seed", rsk_seed, "random seed")->required();
  rsk->add_option("--out-dir", rsk_dir, "output directory")->required();
  rsk_flags.add(rsk);

  // select
  auto* sel = app.add_subcommand("select", "two-stage model selection");
  std::string sel_table, sel_dir, sel_grid, sel_mask;
  std::uint64_t sel_seed = 0;
  int sel_patience = 1;
  std::size_t sel_steps = 4;
  double sel_near_tie = 2.0;
  bool sel_parametric = false;
  SamplerFlags sel_flags;
  sel->add_option("--table", sel_table, "table prefix")->required();
  sel->add_option("--mask", sel_mask, "structural-zero mask file");
  sel->add_option("--seed", sel_seed, "random seed")->required();
  sel->add_option("--out-dir", sel_dir, "output directory")->required();
  auto* o_patience = sel->add_option("--patience", sel_patience, "consecutive C1 declines to stop");
  auto* o_grid = sel->add_option("--gamma-grid", sel_grid, "descending comma-separated penalties");
  auto* o_steps = sel->add_option("--max-steps", sel_steps, "maximum interactions added");
  auto* o_tie = sel->add_option("--near-tie", sel_near_tie, "C1 near-tie threshold");
  sel->add_flag("--report-parametric", sel_parametric, "add parametric reference rows");
  sel_flags.add(sel);

  // report
  auto* rep = app.add_subcommand("report", "render a selection or risk JSON as text");
  std::string rep_in;
  rep->add_option("input", rep_in, "selection.json or risk.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (tab->parsed()) {
      std::vector<dprisk::KeyVariable> vars;
      if (!tab_vars.empty()) vars = dprisk::parse_variable_declarations(tab_vars);
      if (tab_size_only) {
        if (vars.empty()) throw dprisk::InputError("--size-only needs --variables");
        std::cout << "K = " << dprisk::cross_classified_size(vars) << "\n";
        return 0;
      }
      if (tab_input.empty() || tab_out.empty()) {
        throw dprisk::InputError("tabulate needs --input and --out");
      }
      std::ifstream in(tab_input, std::ios::binary);
      if (!in) throw dprisk::InputError("cannot open " + tab_input);
      const auto data = dprisk::read_microdata(in);
      if (vars.empty()) {
        const auto cols = tab_columns.empty() ? data.header : split_list(tab_columns);
        vars = dprisk::infer_variables(data, cols);
      }
      auto table = dprisk::tabulate(data, vars, tab_population ? 1.0 : tab_pi);
      if (tab_population) {
        table.enable_population();
        for (std::size_t k = 0; k < table.num_cells(); ++k) table.set_F(k, table.f(k));
      }
      if (!tab_mask.empty()) {
        std::ifstream m(tab_mask, std::ios::binary);
        if (!m) throw dprisk::InputError("cannot open " + tab_mask);
        dprisk::io::apply_structural_zero_mask(table, m);
      }
      dprisk::io::write_table(table, tab_out);
      std::cout << "K = " << table.num_cells() << "\n"
                << "n = " << table.sample_size() << "\n"
                << "sample uniques = " << table.sample_uniques().size() << "\n";
    } else if (smp->parsed()) {
      const auto pop = dprisk::io::read_table(smp_pop);
      const auto s = dprisk::draw_sample(pop, smp_pi, smp_seed);
      dprisk::io::write_table(s, smp_out);
      std::cout << "n = " << s.sample_size() << "\n"
                << "sample uniques = " << s.sample_uniques().size() << "\n";
    } else if (gen->parsed()) {
      const auto vars = dprisk::parse_variable_declarations(gen_vars);
      const auto spec = dprisk::ModelSpec::parse(gen_spec, vars);
      Eigen::VectorXd beta(static_cast<Eigen::Index>(spec.num_params()));
      if (!gen_beta.empty()) {
        const auto b = parse_doubles(gen_beta, "--beta");
        if (b.size() != spec.num_params()) {
          throw dprisk::InputError("--beta has " + std::to_string(b.size()) +
                                   " values, model has " +
                                   std::to_string(spec.num_params()));
        }
        for (std::size_t i = 0; i < b.size(); ++i) beta[static_cast<Eigen::Index>(i)] = b[i];
      } else {
        auto rng = dprisk::substream(gen_seed, 7);
        beta.setZero();
        const auto first_inter = spec.independence_params();
        for (std::size_t i = 1; i < spec.num_params(); ++i) {
          const double sd = i < first_inter ? gen_main_sd : gen_inter_sd;
          beta[static_cast<Eigen::Index>(i)] = sd * dprisk::std_normal(rng);
        }
      }
      dprisk::RandomEffectLaw law;
      if (gen_re == "gamma") {
        law.kind = dprisk::RandomEffectLaw::Kind::kGamma;
        law.shape = gen_re_shape;
        law.rate = gen_re_rate;
      } else if (gen_re == "normal") {
        law.kind = dprisk::RandomEffectLaw::Kind::kNormal;
        law.sd = gen_re_sd;
      }
      law.mass = gen_re_mass;
      std::vector<unsigned char> mask;
      if (!gen_mask.empty()) {
        dprisk::ContingencyTable probe(vars);
        std::ifstream m(gen_mask, std::ios::binary);
        if (!m) throw dprisk::InputError("cannot open " + gen_mask);
        dprisk::io::apply_structural_zero_mask(probe, m);
        for (std::size_t k = 0; k < probe.num_cells(); ++k) {
          mask.push_back(probe.is_structural_zero(k) ? 1 : 0);
        }
      }
      const auto pop = dprisk::generate_population(spec, beta, law, gen_n, gen_seed, mask);
      dprisk::io::write_table(pop.table, gen_out);
      std::cout << "K = " << pop.table.num_cells() << "\n"
                << "N = " << pop.table.population_size() << "\n";
    } else if (fml->parsed()) {
      const auto table = load_table(fml_table, fml_mask);
      const auto spec = dprisk::ModelSpec::parse(fml_spec, table.variables());
      const auto fit = dprisk::fit_ml(table, spec);
      const auto j = dprisk::io::to_json(fit, spec);
      if (!fml_out.empty()) dprisk::io::write_file(fml_out, j.dump(2) + "\n");
      std::cout << "spec: " << spec.to_string() << "\n"
                << "converged: " << (fit.converged ? "yes" : "no") << "\n"
                << "loglik: " << dprisk::io::format_double(fit.loglik) << "\n";
      if (!fit.converged) {
        std::cerr << "error: " << fit.diagnostic << "\n";
        return kExitNumeric;
      }
    } else if (sc0->parsed()) {
      const auto table = load_table(sc0_table, sc0_mask);
      dprisk::C0SearchOptions opt;
      if (!sc0_grid.empty()) opt.gamma_grid = parse_doubles(sc0_grid, "--gamma-grid");
      opt.max_steps = sc0_steps;
      opt.decomposability_check = !sc0_no_decomp;
      const auto path =
          dprisk::c0_path_search(table, dprisk::ModelSpec(table.variables()), opt);
      for (const auto& w : path.warnings) std::cerr << "warning: " << w << "\n";
      const auto j = dprisk::io::to_json(path);
      if (!sc0_out.empty()) dprisk::io::write_file(sc0_out, j.dump(2) + "\n");
      for (const auto& s : path.candidate_specs) std::cout << s.to_string() << "\n";
    } else if (fdp->parsed()) {
      const auto table = load_table(fdp_table, fdp_mask);
      const auto spec = dprisk::ModelSpec::parse(fdp_spec, table.variables());
      const auto cfg = fdp_flags.config_json();
      const auto base = fdp_flags.base_measure(cfg);
      const auto sc = fdp_flags.sampler(cfg, base, fdp_seed);
      const int chains = fdp_flags.num_chains(cfg);
      const auto draws =
          dprisk::run_chains(table, spec, base, sc, chains, ml_start(table, spec));
      write_draws(draws, table, fdp_dir, sc, chains);
      std::cout << "draws: " << draws.num_draws() << "\n"
                << "acceptance rate: " << draws.acceptance_rate << "\n";
    } else if (rsk->parsed()) {
      const auto table = load_table(rsk_table, rsk_mask);
      dprisk::PosteriorDraws draws;
      if (!rsk_draws.empty()) {
        std::ifstream in(join(rsk_draws, "draws.csv"), std::ios::binary);
        if (!in) throw dprisk::InputError("cannot open draws in " + rsk_draws);
        draws = dprisk::io::read_draws_csv(in);
        draws.pi = table.sampling_fraction();
      } else {
        if (rsk_spec.empty()) throw dprisk::InputError("risk needs --draws-dir or --spec");
        const auto spec = dprisk::ModelSpec::parse(rsk_spec, table.variables());
        const auto cfg = rsk_flags.config_json();
        const auto base = rsk_flags.base_measure(cfg);
        const auto sc = rsk_flags.sampler(cfg, base, rsk_seed);
        draws = dprisk::run_chains(table, spec, base, sc, rsk_flags.num_chains(cfg),
                                   ml_start(table, spec));
      }
      const auto report = dprisk::build_risk_report(draws, table, rsk_seed);
      ensure_dir(rsk_dir);
      dprisk::io::write_file(join(rsk_dir, "risk.json"),
                             dprisk::io::to_json(report).dump(2) + "\n");
      std::ostringstream pc;
      dprisk::io::write_per_cell_csv(report, table, pc);
      dprisk::io::write_file(join(rsk_dir, "per_cell.csv"), pc.str());
      std::ostringstream qs;
      dprisk::io::write_quantiles_csv(report, qs);
      dprisk::io::write_file(join(rsk_dir, "quantiles.csv"), qs.str());
      print_risk_summary(report);
    } else if (sel->parsed()) {
      const auto table = load_table(sel_table, sel_mask);
      const auto cfg = sel_flags.config_json();
      dprisk::SelectionConfig sc;
      sc.base = sel_flags.base_measure(cfg);
      sc.sampler = sel_flags.sampler(cfg, sc.base, sel_seed);
      sc.chains = sel_flags.num_chains(cfg);
      sc.patience = cfg.value("patience", 1);
      sc.report_parametric = cfg.value("report_parametric", false);
      double near_tie = cfg.value("near_tie", 2.0);
      if (cfg.contains("c0")) {
        const auto& c0 = cfg["c0"];
        if (c0.contains("gamma_grid")) sc.c0.gamma_grid = c0["gamma_grid"].get<std::vector<double>>();
        sc.c0.max_steps = c0.value("max_steps", sc.c0.max_steps);
        sc.c0.decomposability_check =
            c0.value("decomposability_check", sc.c0.decomposability_check);
      }
      if (o_patience->count()) sc.patience = sel_patience;
      if (o_grid->count()) sc.c0.gamma_grid = parse_doubles(sel_grid, "--gamma-grid");
      if (o_steps->count()) sc.c0.max_steps = sel_steps;
      if (o_tie->count()) near_tie = sel_near_tie;
      if (sel_parametric) sc.report_parametric = true;

      const auto run = dprisk::run_two_stage(table, sc);
      std::vector<dprisk::ModelScore> all = run.scores;
      for (auto s : run.parametric) {
        s.candidate = false;
        all.push_back(s);
      }
      const auto ranking = dprisk::rank_models(all, run.truth, near_tie);
      for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
      ensure_dir(sel_dir);
      dprisk::io::write_file(join(sel_dir, "selection.json"),
                             dprisk::io::to_json(run, ranking).dump(2) + "\n");
      const auto text = dprisk::io::selection_table(run, ranking);
      dprisk::io::write_file(join(sel_dir, "selection.txt"), text);
      std::cout << text;
      std::cout << run.chosen_spec << "\n";
    } else if (rep->parsed()) {
      std::cout << render_report(dprisk::io::read_json_file(rep_in));
    }
  } catch (const dprisk::DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const dprisk::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const dprisk::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
