#include "dprisk/population.hh"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dprisk/errors.hh"

namespace dprisk {

namespace {

double draw_effect(const RandomEffectLaw& law, Rng& rng) {
  switch (law.kind) {
    case RandomEffectLaw::Kind::kGamma:
      return std::log(gamma_rate(rng, law.shape, law.rate));
    case RandomEffectLaw::Kind::kNormal:
      return law.mean + law.sd * std_normal(rng);
    case RandomEffectLaw::Kind::kNone:
      break;
  }
  return 0.0;
}

}  // namespace

std::vector<double> population_rates(const ModelSpec& spec,
                                     const Eigen::VectorXd& beta,
                                     const RandomEffectLaw& law,
                                     double n_target, Rng& rng,
                                     const std::vector<unsigned char>& structural) {
  if (!(n_target > 0.0)) throw InputError("target population size must be > 0");
  if (static_cast<std::size_t>(beta.size()) != spec.num_params()) {
    throw InputError("coefficient vector has length " +
                     std::to_string(beta.size()) + ", model needs " +
                     std::to_string(spec.num_params()));
  }
  const ContingencyTable shape(spec.variables());
  const std::size_t K = shape.num_cells();
  if (!structural.empty() && structural.size() != K) {
    throw InputError("structural-zero mask has wrong length");
  }

  std::vector<double> log_rate(K, -std::numeric_limits<double>::infinity());
  // Polya-urn state for DP effects: distinct values and their counts.
  std::vector<double> atoms;
  std::vector<double> atom_counts;
  double assigned = 0.0;
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    if (!structural.empty() && structural[k]) continue;
    const auto row = design_row(spec, shape.multi_index(k));
    double eta = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) eta += row[c] * beta[c];

    double phi = 0.0;
    if (law.kind != RandomEffectLaw::Kind::kNone) {
      if (law.mass > 0.0) {
        const double u = uniform01(rng) * (assigned + law.mass);
        if (u < assigned) {
          double acc = 0.0;
          std::size_t j = 0;
          for (; j + 1 < atoms.size(); ++j) {
            acc += atom_counts[j];
            if (u < acc) break;
          }
          phi = atoms[j];
          atom_counts[j] += 1.0;
        } else {
          phi = draw_effect(law, rng);
          atoms.push_back(phi);
          atom_counts.push_back(1.0);
        }
        assigned += 1.0;
      } else {
        phi = draw_effect(law, rng);
      }
    }
    log_rate[k] = eta + phi;
    if (!std::isfinite(log_rate[k])) {
      throw NumericError("non-finite rate in cell " + std::to_string(k));
    }
    max_log = std::max(max_log, log_rate[k]);
  }

  std::vector<double> lambda(K, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (std::isfinite(log_rate[k])) {
      lambda[k] = std::exp(log_rate[k] - max_log);
      total += lambda[k];
    }
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericError("population rates do not sum to a positive finite value");
  }
  for (auto& l : lambda) l *= n_target / total;
  return lambda;
}

GeneratedPopulation generate_population(const ModelSpec& spec,
                                        const Eigen::VectorXd& beta,
                                        const RandomEffectLaw& law,
                                        double n_target, std::uint64_t seed,
                                        const std::vector<unsigned char>& structural) {
  Rng rng(seed);
  GeneratedPopulation out{ContingencyTable(spec.variables(), 1.0), {}};
  out.lambda = population_rates(spec, beta, law, n_target, rng, structural);
  out.table.enable_population();
  for (std::size_t k = 0; k < out.lambda.size(); ++k) {
    if (!structural.empty() && structural[k]) {
      out.table.set_structural_zero(k, true);
      continue;
    }
    const auto F = poisson_draw(rng, out.lambda[k]);
    out.table.set_F(k, F);
    out.table.set_f(k, F);
  }
  return out;
}

}  // namespace dprisk
