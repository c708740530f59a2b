#include "dprisk/table.hh"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dprisk/errors.hh"
#include "dprisk/random.hh"

namespace dprisk {

namespace {

std::vector<std::string> split(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delimiter)) out.push_back(field);
  if (!line.empty() && line.back() == delimiter) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

int KeyVariable::level_index(const std::string& label) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

void validate_variables(const std::vector<KeyVariable>& variables) {
  if (variables.empty()) throw InputError("at least one key variable required");
  std::set<std::string> names;
  for (const auto& v : variables) {
    if (v.name.empty()) throw InputError("key variable with empty name");
    if (!names.insert(v.name).second) {
      throw InputError("duplicate key variable '" + v.name + "'");
    }
    if (v.levels.size() < 2) {
      throw InputError("variable '" + v.name + "' needs at least 2 levels");
    }
    std::set<std::string> labels(v.levels.begin(), v.levels.end());
    if (labels.size() != v.levels.size()) {
      throw InputError("variable '" + v.name + "' has duplicate level labels");
    }
  }
}

std::vector<KeyVariable> parse_variable_declarations(const std::string& text) {
  std::vector<KeyVariable> out;
  for (const auto& raw : split(text, ',')) {
    const std::string item = trim(raw);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw InputError("bad variable declaration '" + item +
                       "' (expected NAME:n or NAME:a|b)");
    }
    KeyVariable v;
    v.name = trim(item.substr(0, colon));
    const std::string rest = trim(item.substr(colon + 1));
    const bool numeric =
        !rest.empty() && std::all_of(rest.begin(), rest.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c));
        });
    if (numeric) {
      const long n = std::stol(rest);
      for (long i = 0; i < n; ++i) v.levels.push_back(std::to_string(i));
    } else {
      for (const auto& label : split(rest, '|')) v.levels.push_back(trim(label));
    }
    out.push_back(std::move(v));
  }
  validate_variables(out);
  return out;
}

std::size_t cross_classified_size(const std::vector<KeyVariable>& variables) {
  std::size_t k = 1;
  for (const auto& v : variables) {
    if (v.num_levels() != 0 &&
        k > std::numeric_limits<std::size_t>::max() / v.num_levels()) {
      throw InputError("cross-classification too large");
    }
    k *= v.num_levels();
  }
  return k;
}

ContingencyTable::ContingencyTable(std::vector<KeyVariable> variables,
                                   double pi)
    : variables_(std::move(variables)) {
  validate_variables(variables_);
  set_sampling_fraction(pi);
  const std::size_t K = cross_classified_size(variables_);
  strides_.assign(variables_.size(), 1);
  for (std::size_t i = variables_.size(); i-- > 1;) {
    strides_[i - 1] = strides_[i] * variables_[i].num_levels();
  }
  f_.assign(K, 0);
  zero_mask_.assign(K, 0);
}

std::size_t ContingencyTable::num_active_cells() const {
  return f_.size() - static_cast<std::size_t>(
                         std::count(zero_mask_.begin(), zero_mask_.end(), 1));
}

void ContingencyTable::set_sampling_fraction(double pi) {
  if (!(pi > 0.0 && pi <= 1.0)) {
    throw InputError("sampling fraction must lie in (0, 1]");
  }
  pi_ = pi;
}

void ContingencyTable::set_f(std::size_t k, std::int64_t value) {
  if (value < 0) throw InputError("negative sample frequency");
  f_.at(k) = value;
}

void ContingencyTable::set_F(std::size_t k, std::int64_t value) {
  if (value < 0) throw InputError("negative population frequency");
  enable_population();
  F_.at(k) = value;
}

void ContingencyTable::enable_population() {
  if (F_.empty()) F_.assign(f_.size(), 0);
}

void ContingencyTable::set_structural_zero(std::size_t k, bool value) {
  zero_mask_.at(k) = value ? 1 : 0;
}

bool ContingencyTable::has_structural_zeros() const {
  return std::find(zero_mask_.begin(), zero_mask_.end(), 1) != zero_mask_.end();
}

std::vector<int> ContingencyTable::multi_index(std::size_t k) const {
  std::vector<int> idx(variables_.size());
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    idx[i] = static_cast<int>(k / strides_[i]);
    k %= strides_[i];
  }
  return idx;
}

std::size_t ContingencyTable::cell_index(std::span<const int> index) const {
  if (index.size() != variables_.size()) {
    throw InputError("multi-index has wrong arity");
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 ||
        static_cast<std::size_t>(index[i]) >= variables_[i].num_levels()) {
      throw InputError("level index out of range for variable '" +
                       variables_[i].name + "'");
    }
    k += strides_[i] * static_cast<std::size_t>(index[i]);
  }
  return k;
}

CellRecord ContingencyTable::cell(std::size_t k) const {
  CellRecord r;
  r.index = multi_index(k);
  r.f = f_.at(k);
  if (has_population()) r.F = F_[k];
  r.structural_zero = is_structural_zero(k);
  return r;
}

std::int64_t ContingencyTable::sample_size() const {
  std::int64_t n = 0;
  for (std::size_t k = 0; k < f_.size(); ++k) {
    if (!zero_mask_[k]) n += f_[k];
  }
  return n;
}

std::int64_t ContingencyTable::population_size() const {
  std::int64_t n = 0;
  for (std::size_t k = 0; k < F_.size(); ++k) {
    if (!zero_mask_[k]) n += F_[k];
  }
  return n;
}

std::vector<std::size_t> ContingencyTable::active_cells() const {
  std::vector<std::size_t> out;
  out.reserve(num_active_cells());
  for (std::size_t k = 0; k < f_.size(); ++k) {
    if (!zero_mask_[k]) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> ContingencyTable::sample_uniques() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < f_.size(); ++k) {
    if (!zero_mask_[k] && f_[k] == 1) out.push_back(k);
  }
  return out;
}

void ContingencyTable::validate() const {
  for (std::size_t k = 0; k < f_.size(); ++k) {
    if (f_[k] < 0) throw InputError("negative sample frequency");
    if (zero_mask_[k] && f_[k] != 0) {
      throw InputError("structural-zero cell " + std::to_string(k) +
                       " has a nonzero sample frequency");
    }
    if (has_population()) {
      if (zero_mask_[k] && F_[k] != 0) {
        throw InputError("structural-zero cell " + std::to_string(k) +
                         " has a nonzero population frequency");
      }
      if (F_[k] < f_[k]) {
        throw InputError("cell " + std::to_string(k) +
                         " has sample frequency above population frequency");
      }
    }
  }
}

Microdata read_microdata(std::istream& in, char delimiter) {
  Microdata data;
  std::string line;
  if (!std::getline(in, line)) throw InputError("microdata input is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (delimiter == 0) {
    delimiter = line.find('\t') != std::string::npos ? '\t' : ',';
  }
  for (auto& h : split(line, delimiter)) data.header.push_back(trim(h));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, delimiter);
    if (fields.size() != data.header.size()) {
      throw InputError("row " + std::to_string(row) + ": expected " +
                       std::to_string(data.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    for (auto& f : fields) f = trim(f);
    data.rows.push_back(std::move(fields));
  }
  if (data.rows.empty()) throw InputError("microdata has no records");
  return data;
}

namespace {

std::vector<std::size_t> column_positions(const Microdata& data,
                                          const std::vector<std::string>& names) {
  std::vector<std::size_t> pos;
  for (const auto& name : names) {
    auto it = std::find(data.header.begin(), data.header.end(), name);
    if (it == data.header.end()) {
      throw InputError("variable '" + name + "' not found in microdata header");
    }
    pos.push_back(static_cast<std::size_t>(it - data.header.begin()));
  }
  return pos;
}

}  // namespace

std::vector<KeyVariable> infer_variables(const Microdata& data,
                                         const std::vector<std::string>& names) {
  const auto pos = column_positions(data, names);
  std::vector<KeyVariable> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::set<std::string> labels;
    for (const auto& r : data.rows) labels.insert(r[pos[i]]);
    out.push_back({names[i], {labels.begin(), labels.end()}});
  }
  validate_variables(out);
  return out;
}

ContingencyTable tabulate(const Microdata& data,
                          const std::vector<KeyVariable>& variables,
                          double pi) {
  if (data.rows.empty()) throw InputError("microdata has no records");
  std::vector<std::string> names;
  for (const auto& v : variables) names.push_back(v.name);
  const auto pos = column_positions(data, names);

  std::vector<std::unordered_map<std::string, int>> lookup(variables.size());
  for (std::size_t i = 0; i < variables.size(); ++i) {
    for (std::size_t l = 0; l < variables[i].levels.size(); ++l) {
      lookup[i][variables[i].levels[l]] = static_cast<int>(l);
    }
  }

  ContingencyTable table(variables, pi);
  std::vector<int> idx(variables.size());
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    for (std::size_t i = 0; i < variables.size(); ++i) {
      const auto& label = data.rows[r][pos[i]];
      auto it = lookup[i].find(label);
      if (it == lookup[i].end()) {
        throw InputError("row " + std::to_string(r + 1) + ": unknown level '" +
                         label + "' for variable '" + variables[i].name + "'");
      }
      idx[i] = it->second;
    }
    const std::size_t k = table.cell_index(idx);
    table.set_f(k, table.f(k) + 1);
  }
  return table;
}

ContingencyTable marginalize(const ContingencyTable& table,
                             const std::vector<std::size_t>& keep) {
  std::vector<KeyVariable> vars;
  for (auto i : keep) vars.push_back(table.variables().at(i));
  ContingencyTable out(vars, table.sampling_fraction());
  if (table.has_population()) out.enable_population();

  // A reduced cell is structural only when every parent cell is.
  std::vector<unsigned char> any_active(out.num_cells(), 0);
  std::vector<int> reduced(keep.size());
  for (std::size_t k = 0; k < table.num_cells(); ++k) {
    const auto idx = table.multi_index(k);
    for (std::size_t i = 0; i < keep.size(); ++i) reduced[i] = idx[keep[i]];
    const std::size_t j = out.cell_index(reduced);
    if (table.is_structural_zero(k)) continue;
    any_active[j] = 1;
    out.set_f(j, out.f(j) + table.f(k));
    if (table.has_population()) out.set_F(j, out.F(j) + table.F(k));
  }
  for (std::size_t j = 0; j < out.num_cells(); ++j) {
    out.set_structural_zero(j, any_active[j] == 0);
  }
  return out;
}

ContingencyTable draw_sample(const ContingencyTable& population, double pi,
                             std::uint64_t seed) {
  if (!(pi > 0.0 && pi <= 1.0)) {
    throw InputError("sampling fraction must lie in (0, 1]");
  }
  if (!population.has_population()) {
    throw InputError("draw_sample needs population frequencies F");
  }
  ContingencyTable sample = population;
  sample.set_sampling_fraction(pi);

  const std::int64_t N = population.population_size();
  const std::int64_t n = std::llround(pi * static_cast<double>(N));
  Rng rng(seed);
  // Selection sampling over the unit-level expansion.
  std::int64_t seen = 0;
  std::int64_t chosen = 0;
  for (std::size_t k = 0; k < population.num_cells(); ++k) {
    std::int64_t fk = 0;
    if (!population.is_structural_zero(k)) {
      for (std::int64_t u = 0; u < population.F(k); ++u) {
        const double need = static_cast<double>(n - chosen);
        const double left = static_cast<double>(N - seen);
        if (need > 0.0 && uniform01(rng) * left < need) {
          ++fk;
          ++chosen;
        }
        ++seen;
      }
    }
    sample.set_f(k, fk);
  }
  return sample;
}

TrueRisks true_risks(const ContingencyTable& table) {
  TrueRisks out;
  for (std::size_t k = 0; k < table.num_cells(); ++k) {
    if (table.is_structural_zero(k) || table.f(k) != 1) continue;
    if (!table.has_population() || table.F(k) < 1) {
      throw InputError("sample-unique cell " + std::to_string(k) +
                       " lacks a population frequency");
    }
    if (table.F(k) == 1) ++out.tau1;
    out.tau2 += 1.0 / static_cast<double>(table.F(k));
  }
  return out;
}

}  // namespace dprisk
