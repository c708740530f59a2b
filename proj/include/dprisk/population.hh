#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dprisk/model_spec.hh"
#include "dprisk/random.hh"
#include "dprisk/table.hh"

namespace dprisk {

// Law of the cell random effects phi_k used to synthesize populations.
struct RandomEffectLaw {
  enum class Kind { kNone, kGamma, kNormal };
  Kind kind = Kind::kNone;
  // kGamma: exp(phi) ~ Gamma(shape, rate).
  double shape = 1.0;
  double rate = 1.0;
  // kNormal: phi ~ N(mean, sd^2).
  double mean = 0.0;
  double sd = 1.0;
  // When > 0, phi_k are iid from G ~ DP(mass, base) (Polya urn over cells),
  // so cells share effect values; otherwise iid from the base law itself.
  double mass = 0.0;
};

// Per-cell rates lambda_k = exp(w_k' beta + phi_k), rescaled so that the
// non-structural rates sum to n_target. Structural cells get 0. Throws
// NumericError on non-finite rates.
std::vector<double> population_rates(const ModelSpec& spec,
                                     const Eigen::VectorXd& beta,
                                     const RandomEffectLaw& law,
                                     double n_target, Rng& rng,
                                     const std::vector<unsigned char>& structural = {});

struct GeneratedPopulation {
  ContingencyTable table;  // F drawn, f = F, pi = 1
  std::vector<double> lambda;
};

// F_k ~ Poisson(lambda_k) independently.
GeneratedPopulation generate_population(const ModelSpec& spec,
                                        const Eigen::VectorXd& beta,
                                        const RandomEffectLaw& law,
                                        double n_target, std::uint64_t seed,
                                        const std::vector<unsigned char>& structural = {});

}  // namespace dprisk
