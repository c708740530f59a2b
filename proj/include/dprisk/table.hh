#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dprisk {

struct KeyVariable {
  std::string name;
  std::vector<std::string> levels;

  std::size_t num_levels() const { return levels.size(); }
  // -1 when the label is not a level of this variable.
  int level_index(const std::string& label) const;
};

// Throws InputError on duplicate names, duplicate labels or fewer than two
// levels.
void validate_variables(const std::vector<KeyVariable>& variables);

// Parses `NAME:n` (levels "0".."n-1") or `NAME:a|b|c` items separated by
// commas, e.g. "AGE:12,SEX:M|F".
std::vector<KeyVariable> parse_variable_declarations(const std::string& text);

struct CellRecord {
  std::vector<int> index;
  std::int64_t f = 0;
  std::optional<std::int64_t> F;
  bool structural_zero = false;
};

// Dense table over the full cross-classification, cells in row-major order of
// the declared variables (last variable varies fastest). Structural-zero cells
// stay addressable but are excluded from every likelihood and risk sum.
class ContingencyTable {
 public:
  ContingencyTable() = default;
  explicit ContingencyTable(std::vector<KeyVariable> variables,
                            double pi = 1.0);

  const std::vector<KeyVariable>& variables() const { return variables_; }
  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_cells() const { return f_.size(); }
  std::size_t num_active_cells() const;

  double sampling_fraction() const { return pi_; }
  void set_sampling_fraction(double pi);

  std::int64_t f(std::size_t k) const { return f_[k]; }
  void set_f(std::size_t k, std::int64_t value);
  const std::vector<std::int64_t>& sample_counts() const { return f_; }

  bool has_population() const { return !F_.empty(); }
  std::int64_t F(std::size_t k) const { return F_[k]; }
  void set_F(std::size_t k, std::int64_t value);
  const std::vector<std::int64_t>& population_counts() const { return F_; }
  // Allocates population counts (all zero) if absent.
  void enable_population();

  bool is_structural_zero(std::size_t k) const { return zero_mask_[k] != 0; }
  void set_structural_zero(std::size_t k, bool value);
  bool has_structural_zeros() const;

  std::vector<int> multi_index(std::size_t k) const;
  std::size_t cell_index(std::span<const int> index) const;
  CellRecord cell(std::size_t k) const;

  std::int64_t sample_size() const;
  std::int64_t population_size() const;

  // Non-structural cells in cell order.
  std::vector<std::size_t> active_cells() const;
  // Non-structural cells with f == 1.
  std::vector<std::size_t> sample_uniques() const;

  // Checks counts, masks and (when present) f <= F. Throws InputError.
  void validate() const;

 private:
  std::vector<KeyVariable> variables_;
  std::vector<std::size_t> strides_;
  double pi_ = 1.0;
  std::vector<std::int64_t> f_;
  std::vector<std::int64_t> F_;
  std::vector<unsigned char> zero_mask_;
};

// Product of level counts; throws InputError if it overflows size_t.
std::size_t cross_classified_size(const std::vector<KeyVariable>& variables);

struct Microdata {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Header row plus one record per row. `delimiter` 0 sniffs tab vs comma from
// the header line.
Microdata read_microdata(std::istream& in, char delimiter = 0);

// Levels in sorted label order for each named column.
std::vector<KeyVariable> infer_variables(const Microdata& data,
                                         const std::vector<std::string>& names);

// Cross-classifies records. Row numbers in errors are 1-based data rows
// (the header is row 0).
ContingencyTable tabulate(const Microdata& data,
                          const std::vector<KeyVariable>& variables,
                          double pi = 1.0);

// Sums counts over the variables not in `keep` (given as positions, kept in
// the given order). A reduced cell is structural only if all its parents are.
ContingencyTable marginalize(const ContingencyTable& table,
                             const std::vector<std::size_t>& keep);

// Simple random sample without replacement of round(pi * N) units from the
// unit-level expansion of the population counts.
ContingencyTable draw_sample(const ContingencyTable& population, double pi,
                             std::uint64_t seed);

struct TrueRisks {
  std::int64_t tau1 = 0;
  double tau2 = 0.0;
};

TrueRisks true_risks(const ContingencyTable& table);

}  // namespace dprisk
