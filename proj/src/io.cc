#include "dprisk/io.hh"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dprisk/errors.hh"

namespace dprisk::io {

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("bad integer '" + s + "' in " + what);
  }
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("bad number '" + s + "' in " + what);
  }
}

Json stats_json(const std::vector<double>& v) {
  Json j;
  if (v.empty()) return j;
  double s = 0.0;
  double lo = v.front();
  double hi = v.front();
  for (double x : v) {
    s += x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  j["mean"] = s / static_cast<double>(v.size());
  j["min"] = lo;
  j["max"] = hi;
  return j;
}

Json score_json(const ModelScore& s) {
  Json j;
  j["label"] = s.label;
  j["spec"] = s.spec_id;
  j["nonparametric"] = s.nonparametric;
  j["candidate"] = s.candidate;
  j["c1"] = s.c1;
  j["waic_u"] = s.waic_u;
  j["p_waic_u"] = s.p_waic_u;
  j["tau1_hat"] = s.tau1_hat;
  j["tau2_hat"] = s.tau2_hat;
  j["tau1_median"] = s.tau1_median;
  j["tau2_median"] = s.tau2_median;
  j["tau1_ci95"] = {s.tau1_lo95, s.tau1_hi95};
  j["tau2_ci95"] = {s.tau2_lo95, s.tau2_hi95};
  j["acceptance_rate"] = s.acceptance_rate;
  j["mean_clusters"] = s.mean_clusters;
  return j;
}

Json se_json(const SeDecomposition& s) {
  return Json{{"se", s.se}, {"V_w", s.within}, {"D_b", s.between}, {"C_b", s.codeviance}};
}

Json quantiles_json(const std::vector<QuantileRow>& q) {
  Json a = Json::array();
  for (const auto& r : q) a.push_back(Json{{"level", r.level}, {"value", r.value}});
  return a;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
  if (!out) throw InputError("write failed for " + path);
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw InputError("invalid JSON in " + path + ": " + e.what());
  }
}

Json table_metadata(const ContingencyTable& table) {
  Json j;
  j["format"] = kTableFormat;
  j["pi"] = table.sampling_fraction();
  j["num_cells"] = table.num_cells();
  j["has_population"] = table.has_population();
  j["sample_size"] = table.sample_size();
  if (table.has_population()) j["population_size"] = table.population_size();
  Json vars = Json::array();
  for (const auto& v : table.variables()) {
    vars.push_back(Json{{"name", v.name}, {"levels", v.levels}});
  }
  j["variables"] = vars;
  return j;
}

void write_table_csv(const ContingencyTable& table, std::ostream& out) {
  const bool pop = table.has_population();
  const bool zeros = table.has_structural_zeros();
  for (const auto& v : table.variables()) out << v.name << ',';
  out << 'f';
  if (pop) out << ",F";
  if (zeros) out << ",structural_zero";
  out << '\n';
  for (std::size_t k = 0; k < table.num_cells(); ++k) {
    const bool sz = table.is_structural_zero(k);
    if (table.f(k) == 0 && !(pop && table.F(k) > 0) && !sz) continue;
    for (int i : table.multi_index(k)) out << i << ',';
    out << table.f(k);
    if (pop) out << ',' << table.F(k);
    if (zeros) out << ',' << (sz ? 1 : 0);
    out << '\n';
  }
}

void write_table(const ContingencyTable& table, const std::string& prefix) {
  std::ostringstream csv;
  write_table_csv(table, csv);
  write_file(prefix + ".csv", csv.str());
  write_file(prefix + ".json", table_metadata(table).dump(2) + "\n");
}

ContingencyTable read_table_streams(const Json& metadata, std::istream& csv) {
  if (metadata.value("format", "") != kTableFormat) {
    throw InputError("table metadata has an unknown format tag");
  }
  std::vector<KeyVariable> vars;
  for (const auto& v : metadata.at("variables")) {
    vars.push_back({v.at("name").get<std::string>(),
                    v.at("levels").get<std::vector<std::string>>()});
  }
  ContingencyTable table(vars, metadata.at("pi").get<double>());
  if (metadata.value("has_population", false)) table.enable_population();

  std::string line;
  if (!std::getline(csv, line)) throw InputError("table CSV is empty");
  const auto header = split(line, ',');
  const std::size_t nv = vars.size();
  if (header.size() < nv + 1) throw InputError("table CSV header too short");
  for (std::size_t v = 0; v < nv; ++v) {
    if (header[v] != vars[v].name) {
      throw InputError("table CSV column " + std::to_string(v + 1) + " is '" +
                       header[v] + "', expected '" + vars[v].name + "'");
    }
  }
  int col_F = -1;
  int col_z = -1;
  for (std::size_t c = nv + 1; c < header.size(); ++c) {
    if (header[c] == "F") col_F = static_cast<int>(c);
    else if (header[c] == "structural_zero") col_z = static_cast<int>(c);
    else throw InputError("unknown table CSV column '" + header[c] + "'");
  }
  if (col_F >= 0 && !table.has_population()) table.enable_population();

  std::size_t row = 0;
  std::vector<int> idx(nv);
  while (std::getline(csv, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line, ',');
    const std::string where = "table row " + std::to_string(row);
    if (fields.size() != header.size()) throw InputError(where + ": wrong field count");
    for (std::size_t v = 0; v < nv; ++v) {
      const auto i = parse_int(fields[v], where);
      if (i < 0 || i >= static_cast<std::int64_t>(vars[v].num_levels())) {
        throw InputError(where + ": level index out of range for " + vars[v].name);
      }
      idx[v] = static_cast<int>(i);
    }
    const auto k = table.cell_index(idx);
    table.set_f(k, parse_int(fields[nv], where));
    if (col_F >= 0) table.set_F(k, parse_int(fields[static_cast<std::size_t>(col_F)], where));
    if (col_z >= 0 && parse_int(fields[static_cast<std::size_t>(col_z)], where) != 0) {
      table.set_structural_zero(k, true);
    }
  }
  table.validate();
  return table;
}

ContingencyTable read_table(const std::string& prefix) {
  const auto meta = read_json_file(prefix + ".json");
  std::ifstream csv(prefix + ".csv", std::ios::binary);
  if (!csv) throw InputError("cannot open " + prefix + ".csv");
  return read_table_streams(meta, csv);
}

void apply_structural_zero_mask(ContingencyTable& table, std::istream& in) {
  const auto data = read_microdata(in);
  const auto& vars = table.variables();
  std::vector<std::size_t> col(vars.size());
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto it = std::find(data.header.begin(), data.header.end(), vars[v].name);
    if (it == data.header.end()) {
      throw InputError("mask file lacks column " + vars[v].name);
    }
    col[v] = static_cast<std::size_t>(it - data.header.begin());
  }
  std::vector<int> idx(vars.size());
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    for (std::size_t v = 0; v < vars.size(); ++v) {
      const int i = vars[v].level_index(data.rows[r][col[v]]);
      if (i < 0) {
        throw InputError("mask row " + std::to_string(r + 1) + ": unknown level '" +
                         data.rows[r][col[v]] + "' for " + vars[v].name);
      }
      idx[v] = i;
    }
    const auto k = table.cell_index(idx);
    if (table.f(k) != 0) {
      throw InputError("mask row " + std::to_string(r + 1) +
                       ": structural zero has a nonzero sample count");
    }
    if (table.has_population() && table.F(k) != 0) table.set_F(k, 0);
    table.set_structural_zero(k, true);
  }
}

Json to_json(const SamplerConfig& c) {
  Json j;
  j["burn_in"] = c.burn_in;
  j["H"] = c.H;
  j["thin"] = c.thin;
  j["epsilon"] = c.epsilon;
  j["epsilon_adapt_target"] = c.epsilon_adapt_target;
  j["adapt_epsilon"] = c.adapt_epsilon;
  j["m_prior_shape"] = c.m_prior_shape;
  j["m_prior_rate"] = c.m_prior_rate;
  j["m_init"] = c.m_init;
  j["fixed_m"] = c.fixed_m ? Json(*c.fixed_m) : Json(nullptr);
  j["beta_prior_var"] = c.beta_prior_var;
  j["aux_components"] = c.aux_components;
  j["re_step"] = c.re_step;
  j["update_beta"] = c.update_beta;
  j["update_partition"] = c.update_partition;
  j["update_base_hyper"] = c.update_base_hyper;
  j["empirical_bayes"] = c.empirical_bayes;
  j["track_all_cells"] = c.track_all_cells;
  j["seed"] = c.seed;
  return j;
}

void apply_json(SamplerConfig& c, const Json& j) {
  if (!j.is_object()) throw InputError("sampler config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "burn_in") c.burn_in = v.get<int>();
      else if (key == "H") c.H = v.get<int>();
      else if (key == "thin") c.thin = v.get<int>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "epsilon_adapt_target") c.epsilon_adapt_target = v.get<double>();
      else if (key == "adapt_epsilon") c.adapt_epsilon = v.get<bool>();
      else if (key == "m_prior_shape") c.m_prior_shape = v.get<double>();
      else if (key == "m_prior_rate") c.m_prior_rate = v.get<double>();
      else if (key == "m_init") c.m_init = v.get<double>();
      else if (key == "fixed_m") {
        if (v.is_null()) c.fixed_m.reset(); else c.fixed_m = v.get<double>();
      }
      else if (key == "beta_prior_var") c.beta_prior_var = v.get<double>();
      else if (key == "aux_components") c.aux_components = v.get<int>();
      else if (key == "re_step") c.re_step = v.get<double>();
      else if (key == "update_beta") c.update_beta = v.get<bool>();
      else if (key == "update_partition") c.update_partition = v.get<bool>();
      else if (key == "update_base_hyper") c.update_base_hyper = v.get<bool>();
      else if (key == "empirical_bayes") c.empirical_bayes = v.get<bool>();
      else if (key == "track_all_cells") c.track_all_cells = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw InputError("unknown sampler config key '" + key + "'");
    }
  } catch (const Json::type_error& e) {
    throw InputError(std::string("sampler config: ") + e.what());
  }
}

Json to_json(const MLFit& fit, const ModelSpec& spec) {
  Json j;
  j["spec"] = spec.to_string();
  j["q"] = spec.num_params();
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["loglik"] = fit.loglik;
  j["gradient_max_norm"] = fit.gradient_max_norm;
  if (!fit.diagnostic.empty()) j["diagnostic"] = fit.diagnostic;
  j["beta_hat"] = std::vector<double>(fit.beta_hat.data(),
                                      fit.beta_hat.data() + fit.beta_hat.size());
  return j;
}

Json to_json(const C0PathResult& path) {
  Json j;
  j["base_loglik"] = path.base_loglik;
  Json steps = Json::array();
  for (const auto& s : path.steps) {
    steps.push_back(Json{{"term", s.term}, {"gamma", s.gamma}, {"c0", s.c0},
                         {"d", s.d}, {"loglik", s.loglik}});
  }
  j["steps"] = steps;
  Json specs = Json::array();
  for (const auto& s : path.candidate_specs) specs.push_back(s.to_string());
  j["candidate_specs"] = specs;
  j["warnings"] = path.warnings;
  return j;
}

void write_draws_csv(const PosteriorDraws& draws, std::ostream& out) {
  for (std::size_t c = 0; c < draws.cells.size(); ++c) {
    out << (c ? "," : "") << "cell_" << draws.cells[c];
  }
  out << '\n';
  for (Eigen::Index h = 0; h < draws.lambda.rows(); ++h) {
    for (Eigen::Index c = 0; c < draws.lambda.cols(); ++c) {
      out << (c ? "," : "") << format_double(draws.lambda(h, c));
    }
    out << '\n';
  }
}

PosteriorDraws read_draws_csv(std::istream& in) {
  PosteriorDraws d;
  std::string line;
  if (!std::getline(in, line)) throw InputError("draws file is empty");
  for (const auto& name : split(line, ',')) {
    if (name.rfind("cell_", 0) != 0) throw InputError("bad draws column '" + name + "'");
    d.cells.push_back(static_cast<std::size_t>(parse_int(name.substr(5), "draws header")));
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != d.cells.size()) {
      throw InputError("draws row " + std::to_string(rows.size() + 1) + ": wrong field count");
    }
    std::vector<double> r;
    for (const auto& s : f) r.push_back(parse_double(s, "draws"));
    rows.push_back(std::move(r));
  }
  d.lambda.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(d.cells.size()));
  for (std::size_t h = 0; h < rows.size(); ++h) {
    for (std::size_t c = 0; c < d.cells.size(); ++c) {
      d.lambda(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(c)) = rows[h][c];
    }
  }
  return d;
}

Json diagnostics_json(const PosteriorDraws& d) {
  Json j;
  j["spec"] = d.spec;
  j["base"] = d.base;
  j["pi"] = d.pi;
  j["draws"] = d.num_draws();
  j["tracked_cells"] = d.cells.size();
  j["acceptance_rate"] = d.acceptance_rate;
  j["final_epsilon"] = d.final_epsilon;
  std::vector<double> c(d.c_trace.begin(), d.c_trace.end());
  j["clusters"] = stats_json(c);
  j["m"] = stats_json(d.m_trace);
  if (d.beta_trace.rows() > 0) {
    const Eigen::VectorXd mean = d.beta_trace.colwise().mean().transpose();
    j["beta_mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
  }
  return j;
}

void write_lambda_mean_csv(const PosteriorDraws& draws,
                           const ContingencyTable& table, std::ostream& out) {
  for (const auto& v : table.variables()) out << v.name << ',';
  out << "f,lambda_mean\n";
  for (std::size_t r = 0; r < draws.all_cells.size(); ++r) {
    const auto k = draws.all_cells[r];
    for (int i : table.multi_index(k)) out << i << ',';
    out << table.f(k) << ',' << format_double(draws.lambda_mean[r]) << '\n';
  }
}

Json to_json(const RiskReport& r) {
  Json j;
  j["sample_uniques"] = r.sample_uniques;
  j["tau1_star"] = r.tau1_star;
  j["tau2_star"] = r.tau2_star;
  j["tau1_star_median"] = r.tau1_star_median;
  j["tau2_star_median"] = r.tau2_star_median;
  j["tau1_sim"] = r.tau1_sim;
  j["tau2_sim"] = r.tau2_sim;
  j["tau1_quantiles"] = quantiles_json(r.tau1_quantiles);
  j["tau2_quantiles"] = quantiles_json(r.tau2_quantiles);
  j["tau1_se"] = se_json(r.tau1_se);
  j["tau2_se"] = se_json(r.tau2_se);
  if (r.truth) {
    const double t1 = static_cast<double>(r.truth->tau1);
    j["truth"] = Json{{"tau1", r.truth->tau1}, {"tau2", r.truth->tau2}};
    j["errors"] = Json{{"tau1_star", r.tau1_star - t1},
                       {"tau2_star", r.tau2_star - r.truth->tau2},
                       {"tau1_sim", r.tau1_sim - t1},
                       {"tau2_sim", r.tau2_sim - r.truth->tau2}};
  }
  return j;
}

void write_per_cell_csv(const RiskReport& report, const ContingencyTable& table,
                        std::ostream& out) {
  out << "cell";
  for (const auto& v : table.variables()) out << ',' << v.name;
  out << ",tau1_star,tau2_star,tau1_sd,tau2_sd,lambda_mean";
  if (table.has_population()) out << ",F";
  out << '\n';
  for (const auto& row : report.per_cell) {
    out << row.cell;
    for (int i : row.index) out << ',' << i;
    out << ',' << format_double(row.tau1) << ',' << format_double(row.tau2) << ','
        << format_double(row.tau1_sd) << ',' << format_double(row.tau2_sd) << ','
        << format_double(row.lambda_mean);
    if (table.has_population()) out << ',' << table.F(row.cell);
    out << '\n';
  }
}

void write_quantiles_csv(const RiskReport& report, std::ostream& out) {
  out << "measure,level,value\n";
  for (const auto& q : report.tau1_quantiles) {
    out << "tau1," << format_double(q.level) << ',' << format_double(q.value) << '\n';
  }
  for (const auto& q : report.tau2_quantiles) {
    out << "tau2," << format_double(q.level) << ',' << format_double(q.value) << '\n';
  }
}

Json to_json(const SelectionRun& run, const std::vector<RankingRow>& ranking) {
  Json j;
  j["chosen_spec"] = run.chosen_spec;
  j["stop_reason"] = run.stop_reason;
  if (run.truth) j["truth"] = Json{{"tau1", run.truth->tau1}, {"tau2", run.truth->tau2}};
  j["path"] = to_json(run.path);
  Json c = Json::array();
  for (const auto& s : run.scores) c.push_back(score_json(s));
  j["candidates"] = c;
  Json p = Json::array();
  for (const auto& s : run.parametric) {
    auto js = score_json(s);
    js["candidate"] = false;
    p.push_back(js);
  }
  j["parametric"] = p;
  Json rk = Json::array();
  for (const auto& r : ranking) {
    Json row{{"label", r.label}, {"candidate", r.candidate}, {"c1_rank", r.c1_rank},
             {"waic_rank", r.waic_rank}, {"near_tie", r.near_tie}};
    if (r.true_error) row["true_tau1_error"] = *r.true_error;
    if (r.error_rank) row["error_rank"] = *r.error_rank;
    rk.push_back(row);
  }
  j["ranking"] = rk;
  j["warnings"] = run.warnings;
  return j;
}

std::string selection_table(const SelectionRun& run,
                            const std::vector<RankingRow>& ranking) {
  std::vector<const ModelScore*> all;
  for (const auto& s : run.scores) all.push_back(&s);
  for (const auto& s : run.parametric) all.push_back(&s);

  std::ostringstream out;
  out << std::fixed;
  if (run.truth) {
    out << "true tau1 = " << run.truth->tau1 << ", true tau2 = " << std::setprecision(1)
        << run.truth->tau2 << "\n";
  }
  out << std::left << std::setw(28) << "model" << std::right << std::setw(10) << "tau1"
      << std::setw(10) << "tau2" << std::setw(12) << "C1" << std::setw(12) << "WAIC_U";
  if (run.truth) out << std::setw(7) << "r.err";
  out << std::setw(7) << "r.C1" << std::setw(7) << "r.WAIC" << "\n";
  for (std::size_t i = 0; i < all.size() && i < ranking.size(); ++i) {
    const auto& s = *all[i];
    const auto& r = ranking[i];
    std::string label = s.label;
    if (!s.candidate) label += " (ref)";
    if (i == run.chosen) label += " *";
    out << std::left << std::setw(28) << label << std::right << std::setprecision(1)
        << std::setw(10) << s.tau1_hat << std::setw(10) << s.tau2_hat
        << std::setprecision(2) << std::setw(12) << s.c1 << std::setw(12) << s.waic_u;
    if (run.truth) out << std::setw(7) << (r.error_rank ? *r.error_rank : 0);
    out << std::setw(7) << r.c1_rank << std::setw(7) << r.waic_rank;
    if (r.near_tie) out << "  ~";
    out << "\n";
  }
  out << "chosen: NP+" << run.chosen_spec << "\n";
  out << "stop: " << run.stop_reason << "\n";
  return out.str();
}

}  // namespace dprisk::io
