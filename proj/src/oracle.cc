#include "dprisk/oracle.hh"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dprisk/errors.hh"
#include "dprisk/random.hh"

namespace dprisk::oracle {

std::uint64_t bell_number(int n) {
  if (n < 0) throw InputError("Bell number of a negative count");
  std::vector<std::uint64_t> bell{1};
  for (int k = 0; k < n; ++k) {
    // B_{k+1} = sum_s C(k, s) B_s
    std::uint64_t next = 0;
    std::uint64_t binom = 1;
    for (int s = 0; s <= k; ++s) {
      next += binom * bell[static_cast<std::size_t>(s)];
      binom = binom * static_cast<std::uint64_t>(k - s) / static_cast<std::uint64_t>(s + 1);
    }
    bell.push_back(next);
  }
  return bell[static_cast<std::size_t>(n)];
}

namespace {

void grow(std::vector<int>& cur, int max_label, int n,
          std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n) {
    out.push_back(cur);
    return;
  }
  for (int l = 0; l <= max_label + 1; ++l) {
    cur.push_back(l);
    grow(cur, std::max(max_label, l), n, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> enumerate_partitions(int n) {
  if (n < 1 || n > kMaxEnumerationItems) {
    throw InputError("partition enumeration supports 1..9 items");
  }
  std::vector<std::vector<int>> out;
  std::vector<int> cur{0};
  grow(cur, 0, n, out);
  return out;
}

long double log_ewens_weight(std::span<const int> labels, long double m) {
  if (!(m > 0.0L)) throw InputError("Ewens weight needs m > 0");
  const int c = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> sizes(static_cast<std::size_t>(c), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  const auto n = static_cast<long double>(labels.size());
  long double out = std::lgammal(m) + static_cast<long double>(c) * std::log(m) -
                    std::lgammal(m + n);
  for (int s : sizes) out += std::lgammal(static_cast<long double>(s));
  return out;
}

double ewens_weight(std::span<const int> labels, double m) {
  return static_cast<double>(std::exp(log_ewens_weight(labels, m)));
}

long double log_cluster_marginal(std::span<const double> counts,
                                 std::span<const double> exposures,
                                 const GammaBase& base) {
  long double sf = 0.0L;
  long double st = 0.0L;
  long double out = 0.0L;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const long double f = counts[i];
    const long double t = exposures[i];
    out += f * std::log(t) - std::lgammal(f + 1.0L);
    sf += f;
    st += t;
  }
  const long double a = base.a;
  const long double b = base.b;
  out += a * std::log(b) - std::lgammal(a) + std::lgammal(a + sf) -
         (a + sf) * std::log(b + st);
  return out;
}

namespace {

long double log_sum_exp(const std::vector<long double>& v) {
  const long double mx = *std::max_element(v.begin(), v.end());
  long double s = 0.0L;
  for (auto x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

PartitionPosterior partition_posterior(const ContingencyTable& table,
                                       const ModelSpec& spec,
                                       const Eigen::VectorXd& beta, double m,
                                       const GammaBase& base) {
  const auto cells = table.active_cells();
  const int n = static_cast<int>(cells.size());
  std::vector<double> counts;
  std::vector<double> exposures;
  for (auto k : cells) {
    const auto w = design_row(spec, table.multi_index(k));
    long double eta = 0.0L;
    for (std::size_t c = 0; c < w.size(); ++c) eta += w[c] * beta[static_cast<Eigen::Index>(c)];
    counts.push_back(static_cast<double>(table.f(k)));
    exposures.push_back(static_cast<double>(table.sampling_fraction() * std::exp(eta)));
  }

  PartitionPosterior out;
  out.partitions = enumerate_partitions(n);
  for (const auto& labels : out.partitions) {
    long double term = log_ewens_weight(labels, m);
    const int c = *std::max_element(labels.begin(), labels.end()) + 1;
    for (int j = 0; j < c; ++j) {
      std::vector<double> cf;
      std::vector<double> ce;
      for (int i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] == j) {
          cf.push_back(counts[static_cast<std::size_t>(i)]);
          ce.push_back(exposures[static_cast<std::size_t>(i)]);
        }
      }
      term += log_cluster_marginal(cf, ce, base);
    }
    out.log_terms.push_back(term);
  }
  out.log_total = log_sum_exp(out.log_terms);
  for (auto t : out.log_terms) {
    out.probabilities.push_back(static_cast<double>(std::exp(t - out.log_total)));
  }
  return out;
}

long double exact_marginal_likelihood(const ContingencyTable& table,
                                      const ModelSpec& spec,
                                      const Eigen::VectorXd& beta, double m,
                                      const GammaBase& base) {
  if (table.num_active_cells() > 8) {
    throw InputError("exact marginal likelihood supports at most 8 cells");
  }
  return partition_posterior(table, spec, beta, m, base).log_total;
}

double Posterior1D::cdf_at(double v) const {
  if (v <= x.front()) return 0.0;
  if (v >= x.back()) return 1.0;
  const auto it = std::upper_bound(x.begin(), x.end(), v);
  const auto i = static_cast<std::size_t>(it - x.begin()) - 1;
  // Exact integral of the linear density interpolant on [x_i, v].
  const double h = v - x[i];
  const double slope = (density[i + 1] - density[i]) / (x[i + 1] - x[i]);
  return cdf[i] + h * density[i] + 0.5 * slope * h * h;
}

double Posterior1D::expect(const std::function<double(double)>& g) const {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    s += 0.5 * (x[i + 1] - x[i]) * (g(x[i]) * density[i] + g(x[i + 1]) * density[i + 1]);
  }
  return s;
}

double Posterior1D::quantile(double p) const {
  if (p <= 0.0) return x.front();
  if (p >= 1.0) return x.back();
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), p);
  const auto i = static_cast<std::size_t>(it - cdf.begin());
  if (i == 0) return x.front();
  // Invert the piecewise-quadratic CDF on [x_{i-1}, x_i] by bisection.
  double lo = x[i - 1];
  double hi = x[i];
  for (int it2 = 0; it2 < 60; ++it2) {
    const double mid = 0.5 * (lo + hi);
    if (cdf_at(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

Posterior1D quadrature_posterior_1d(const std::function<double(double)>& loglik,
                                    const std::function<double(double)>& logprior,
                                    const QuadratureGrid& grid) {
  if (grid.points < 3 || !(grid.hi > grid.lo)) {
    throw InputError("quadrature grid needs hi > lo and >= 3 points");
  }
  Posterior1D out;
  const std::size_t n = grid.points;
  out.x.resize(n);
  std::vector<long double> logd(n);
  long double mx = -std::numeric_limits<long double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    out.x[i] = grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) /
                             static_cast<double>(n - 1);
    const double v = loglik(out.x[i]) + logprior(out.x[i]);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NumericError("non-finite integrand in quadrature at x = " +
                         std::to_string(out.x[i]));
    }
    logd[i] = v;
    mx = std::max(mx, logd[i]);
  }
  if (!std::isfinite(static_cast<double>(mx))) {
    throw NumericError("integrand vanishes on the whole grid");
  }
  std::vector<long double> d(n);
  long double z = 0.0L;
  for (std::size_t i = 0; i < n; ++i) d[i] = std::exp(logd[i] - mx);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    z += 0.5L * (out.x[i + 1] - out.x[i]) * (d[i] + d[i + 1]);
  }
  out.density.resize(n);
  out.cdf.assign(n, 0.0);
  long double acc = 0.0L;
  long double m1 = 0.0L;
  long double m2 = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    out.density[i] = static_cast<double>(d[i] / z);
    if (i > 0) {
      const long double h = out.x[i] - out.x[i - 1];
      acc += 0.5L * h * (d[i - 1] + d[i]) / z;
      m1 += 0.5L * h * (out.x[i - 1] * d[i - 1] + out.x[i] * d[i]) / z;
      m2 += 0.5L * h *
            (out.x[i - 1] * out.x[i - 1] * d[i - 1] + out.x[i] * out.x[i] * d[i]) / z;
    }
    out.cdf[i] = static_cast<double>(acc);
  }
  out.mean = static_cast<double>(m1);
  out.variance = static_cast<double>(m2 - m1 * m1);
  return out;
}

McRisk mc_risk_oracle(double lambda, double pi, std::size_t draws,
                      std::uint64_t seed) {
  if (draws < 2) throw InputError("need at least two draws");
  Rng rng(seed);
  const double mu = (1.0 - pi) * lambda;
  std::poisson_distribution<long> pois(mu > 0.0 ? mu : 1e-300);
  long double s1 = 0, s1sq = 0, s2 = 0, s2sq = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const long y = mu > 0.0 ? pois(rng) : 0;
    const long double a = y == 0 ? 1.0L : 0.0L;
    const long double b = 1.0L / (1.0L + static_cast<long double>(y));
    s1 += a;
    s1sq += a * a;
    s2 += b;
    s2sq += b * b;
  }
  const long double n = static_cast<long double>(draws);
  McRisk out;
  out.tau1 = static_cast<double>(s1 / n);
  out.tau2 = static_cast<double>(s2 / n);
  const long double v1 = (s1sq / n - (s1 / n) * (s1 / n)) * n / (n - 1);
  const long double v2 = (s2sq / n - (s2 / n) * (s2 / n)) * n / (n - 1);
  out.tau1_se = static_cast<double>(std::sqrt(std::max(v1, 0.0L) / n));
  out.tau2_se = static_cast<double>(std::sqrt(std::max(v2, 0.0L) / n));
  return out;
}

double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InputError("KS distance of an empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / n - F,
                             F - static_cast<double>(i) / n));
  }
  return d;
}

double log_mass_conditional(double m, std::size_t c, std::size_t n,
                            double shape, double rate) {
  if (!(m > 0.0)) return -std::numeric_limits<double>::infinity();
  return (shape - 1.0 + static_cast<double>(c)) * std::log(m) - rate * m +
         std::lgamma(m) - std::lgamma(m + static_cast<double>(n));
}

}  // namespace dprisk::oracle
