#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/dpmcmc.hh"
#include "dprisk/model_spec.hh"
#include "dprisk/oracle.hh"
#include "dprisk/table.hh"

namespace testutil {

// One variable with `levels` levels named "0".."levels-1".
inline std::vector<dprisk::KeyVariable> single_var(int levels,
                                                   const std::string& name = "A") {
  return dprisk::parse_variable_declarations(name + ":" + std::to_string(levels));
}

inline dprisk::ContingencyTable table_from_counts(
    const std::vector<dprisk::KeyVariable>& vars,
    const std::vector<std::int64_t>& f, double pi) {
  dprisk::ContingencyTable t(vars, pi);
  for (std::size_t k = 0; k < f.size(); ++k) t.set_f(k, f[k]);
  return t;
}

// A table whose only active cell has count f: one binary variable with the
// second level declared structural.
inline dprisk::ContingencyTable one_cell_table(std::int64_t f, double pi) {
  dprisk::ContingencyTable t(single_var(2), pi);
  t.set_f(0, f);
  t.set_structural_zero(1, true);
  return t;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Total-variation distance between an empirical law over restricted growth
// strings and the enumerated one.
inline double tv_distance(const std::map<std::vector<int>, double>& empirical,
                          const dprisk::oracle::PartitionPosterior& exact) {
  double tv = 0.0;
  double seen = 0.0;
  for (std::size_t i = 0; i < exact.partitions.size(); ++i) {
    const auto it = empirical.find(exact.partitions[i]);
    const double p = it == empirical.end() ? 0.0 : it->second;
    seen += p;
    tv += std::abs(p - exact.probabilities[i]);
  }
  tv += 1.0 - seen;  // mass on labelings outside the enumeration
  return 0.5 * tv;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Standard error of the mean of an autocorrelated series by batch means.
inline double batch_se(const std::vector<double>& v, std::size_t batches = 50) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += v[i];
    means.push_back(s / static_cast<double>(len));
  }
  return std::sqrt(var_of(means) / static_cast<double>(batches));
}

}  // namespace testutil
