#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dprisk/table.hh"

namespace dprisk {

// Main effects of every variable plus a set of two-way interactions, in
// treatment coding with each variable's first level as reference.
//
// Interactions are stored by variable position in the order they were added
// (or written), so the shorthand `I + A*B + C*D` round-trips exactly.
class ModelSpec {
 public:
  using Pair = std::pair<std::size_t, std::size_t>;

  ModelSpec() = default;
  explicit ModelSpec(std::vector<KeyVariable> variables);

  // Parses `I`, `I + A*B`, `I + A*B + C*D`. Variable names must be declared.
  static ModelSpec parse(const std::string& shorthand,
                         std::vector<KeyVariable> variables);

  const std::vector<KeyVariable>& variables() const { return variables_; }
  const std::vector<Pair>& interactions() const { return interactions_; }

  bool has_interaction(std::size_t u, std::size_t v) const;
  // Throws InputError on unknown positions, u == v or duplicates.
  void add_interaction(std::size_t u, std::size_t v);
  ModelSpec with_interaction(std::size_t u, std::size_t v) const;

  std::size_t num_params() const;
  // Parameters of the independence model on the same variables.
  std::size_t independence_params() const;

  // Column offset of variable v's main-effect block.
  std::size_t main_offset(std::size_t v) const;
  // Column offset of the i-th interaction block.
  std::size_t interaction_offset(std::size_t i) const;

  std::string to_string() const;

  friend bool operator==(const ModelSpec& a, const ModelSpec& b);

 private:
  std::vector<KeyVariable> variables_;
  std::vector<Pair> interactions_;
};

// Dense coefficient-aligned design row for a cell multi-index.
std::vector<double> design_row(const ModelSpec& spec,
                               const std::vector<int>& cell_index);

// Sparse design restricted to the table's non-structural cells. All nonzero
// entries of a treatment-coded design are 1, so each row is just the list of
// its active columns.
class DesignMatrix {
 public:
  DesignMatrix(const ModelSpec& spec, const ContingencyTable& table);

  std::size_t rows() const { return cells_.size(); }
  std::size_t cols() const { return cols_; }
  // Table cell index of row r.
  std::size_t cell(std::size_t r) const { return cells_[r]; }
  const std::vector<std::size_t>& cells() const { return cells_; }

  // Active columns of row r (ascending).
  const std::int32_t* row_begin(std::size_t r) const {
    return cols_idx_.data() + offsets_[r];
  }
  const std::int32_t* row_end(std::size_t r) const {
    return cols_idx_.data() + offsets_[r + 1];
  }

  double dot(std::size_t r, const double* beta) const {
    double s = 0.0;
    for (auto p = row_begin(r); p != row_end(r); ++p) s += beta[*p];
    return s;
  }

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> cells_;
  std::vector<std::size_t> offsets_;
  std::vector<std::int32_t> cols_idx_;
};

// True if the graph on variables with one edge per interaction is chordal.
bool interaction_graph_is_chordal(const ModelSpec& spec);

}  // namespace dprisk
