#include "dprisk/dpmcmc.hh"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "dprisk/errors.hh"

namespace dprisk {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// log of a Gamma(shape, rate) draw, stable for small shapes.
double log_gamma_draw(Rng& rng, double shape, double rate) {
  if (shape >= 1.0) return std::log(gamma_rate(rng, shape, rate));
  const double g = gamma_rate(rng, shape + 1.0, rate);
  return std::log(g) + std::log(uniform01(rng)) / shape;
}

// log of the Gamma-Poisson predictive of count f with exposure t under
// Gamma(A, B), dropping the factor t^f / f! that is common to every cluster.
double log_predictive(double f, double t, double A, double B) {
  double out = A * std::log(B) - (A + f) * std::log(B + t);
  if (f < 32.0) {
    for (int i = 0; i < static_cast<int>(f); ++i) out += std::log(A + i);
  } else {
    out += std::lgamma(A + f) - std::lgamma(A);
  }
  return out;
}

// Samples an index with probabilities proportional to exp(logw).
std::size_t sample_log_weights(const std::vector<double>& logw, Rng& rng) {
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double w : logw) total += std::exp(w - mx);
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    u -= std::exp(logw[i] - mx);
    if (u < 0.0) return i;
  }
  return logw.size() - 1;
}

}  // namespace

void validate_base(const BaseMeasure& base) {
  std::visit(overloaded{
                 [](const NoRandomEffects&) {},
                 [](const GammaBase& g) {
                   if (!(g.a > 0.0 && g.b > 0.0)) {
                     throw InputError("Gamma base needs a > 0 and b > 0");
                   }
                 },
                 [](const GaussianBase& g) {
                   if (!(g.var0 > 0.0 && g.shape > 0.0 && g.scale > 0.0)) {
                     throw InputError(
                         "Gaussian base hyperprior parameters must be > 0");
                   }
                 },
             },
             base);
}

std::string base_name(const BaseMeasure& base) {
  return std::visit(overloaded{
                        [](const NoRandomEffects&) { return std::string("none"); },
                        [](const GammaBase&) { return std::string("gamma"); },
                        [](const GaussianBase&) { return std::string("gaussian"); },
                    },
                    base);
}

void SamplerConfig::validate() const {
  if (burn_in < 0) throw InputError("burn_in must be >= 0");
  if (H < 1) throw InputError("H must be >= 1");
  if (thin < 1) throw InputError("thin must be >= 1");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be > 0");
  if (!(epsilon_adapt_target > 0.0 && epsilon_adapt_target < 1.0)) {
    throw InputError("epsilon_adapt_target must lie in (0, 1)");
  }
  if (!(m_prior_shape > 0.0 && m_prior_rate > 0.0)) {
    throw InputError("m prior parameters must be > 0");
  }
  if (!(m_init > 0.0)) throw InputError("m_init must be > 0");
  if (fixed_m && !(*fixed_m > 0.0)) throw InputError("fixed m must be > 0");
  if (!(beta_prior_var > 0.0)) throw InputError("beta_prior_var must be > 0");
  if (aux_components < 1) throw InputError("aux_components must be >= 1");
  if (!(re_step > 0.0)) throw InputError("re_step must be > 0");
}

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(std::size_t items) : label_(items, -1) {}

int Partition::new_cluster() {
  int slot;
  if (!free_.empty()) {
    slot = free_.back();
    free_.pop_back();
  } else {
    slot = static_cast<int>(size_.size());
    size_.push_back(0);
    position_.push_back(-1);
  }
  size_[slot] = 0;
  position_[slot] = static_cast<int>(active_.size());
  active_.push_back(slot);
  return slot;
}

void Partition::assign(std::size_t i, int slot) {
  label_[i] = slot;
  ++size_[slot];
}

bool Partition::remove(std::size_t i) {
  const int slot = label_[i];
  label_[i] = -1;
  if (--size_[slot] == 0) {
    release(slot);
    return true;
  }
  return false;
}

void Partition::release(int slot) {
  const int pos = position_[slot];
  const int last = active_.back();
  active_[pos] = last;
  position_[last] = pos;
  active_.pop_back();
  position_[slot] = -1;
  free_.push_back(slot);
}

std::vector<int> Partition::canonical_labels() const {
  std::vector<int> remap(size_.size(), -1);
  std::vector<int> out(label_.size());
  int next = 0;
  for (std::size_t i = 0; i < label_.size(); ++i) {
    auto& r = remap[static_cast<std::size_t>(label_[i])];
    if (r < 0) r = next++;
    out[i] = r;
  }
  return out;
}

double DPState::effect(std::size_t r) const {
  if (partition.items() == 0) return 0.0;
  return phi[static_cast<std::size_t>(partition.cluster_of(r))];
}

// ---------------------------------------------------------------------------
// Context

ChainContext::ChainContext(const ContingencyTable& table, const ModelSpec& spec)
    : table_(&table), design_(spec, table), likelihood_(table, design_) {}

std::vector<double> ChainContext::fixed_rates(const Eigen::VectorXd& beta) const {
  std::vector<double> t(design_.rows());
  const double p = pi();
  for (std::size_t r = 0; r < t.size(); ++r) {
    t[r] = p * std::exp(design_.dot(r, beta.data()));
  }
  return t;
}

// ---------------------------------------------------------------------------
// beta | rest

SmmalaTerms smmala_terms(const ChainContext& ctx, const Eigen::VectorXd& beta,
                         std::span<const double> offset, double prior_var) {
  auto lt = ctx.likelihood().evaluate(beta, offset, true);
  SmmalaTerms out;
  out.log_target = lt.loglik - 0.5 * beta.squaredNorm() / prior_var;
  out.gradient = lt.gradient - beta / prior_var;
  out.metric = std::move(lt.fisher);
  out.metric.diagonal().array() += 1.0 / prior_var;
  return out;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_metric(const Eigen::MatrixXd& metric) {
  Eigen::LLT<Eigen::MatrixXd> llt(metric);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd jittered = metric;
  jittered.diagonal().array() += 1e-10;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw NumericError("SMMALA metric tensor is not positive definite");
  }
  return llt;
}

// log N(x | mean, eps^2 M^{-1}) up to the shared (2 pi)^{-q/2} constant.
double log_proposal(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& metric,
                    const Eigen::LLT<Eigen::MatrixXd>& llt, double eps) {
  const Eigen::VectorXd d = x - mean;
  const double quad = d.dot(metric * d) / (eps * eps);
  const double log_det = llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * quad + log_det - static_cast<double>(x.size()) * std::log(eps);
}

}  // namespace

SmmalaResult smmala_update(DPState& state, const ChainContext& ctx,
                           const SamplerConfig& config, double epsilon,
                           Rng& rng) {
  std::vector<double> offset(ctx.items());
  for (std::size_t r = 0; r < offset.size(); ++r) offset[r] = state.effect(r);

  const double v = config.beta_prior_var;
  const double e2 = epsilon * epsilon;
  const auto cur = smmala_terms(ctx, state.beta, offset, v);
  const auto cur_llt = factor_metric(cur.metric);
  const Eigen::VectorXd cur_mean =
      state.beta + 0.5 * e2 * cur_llt.solve(cur.gradient);

  Eigen::VectorXd z(state.beta.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  const Eigen::VectorXd proposal =
      cur_mean + epsilon * cur_llt.matrixU().solve(z);

  SmmalaResult res;
  if (!proposal.allFinite()) return res;
  const auto prop = smmala_terms(ctx, proposal, offset, v);
  if (!std::isfinite(prop.log_target) || !prop.gradient.allFinite()) return res;
  Eigen::LLT<Eigen::MatrixXd> prop_llt(prop.metric);
  if (prop_llt.info() != Eigen::Success) return res;
  const Eigen::VectorXd prop_mean =
      proposal + 0.5 * e2 * prop_llt.solve(prop.gradient);

  const double log_ratio =
      prop.log_target + log_proposal(state.beta, prop_mean, prop.metric, prop_llt, epsilon) -
      cur.log_target - log_proposal(proposal, cur_mean, cur.metric, cur_llt, epsilon);
  res.accept_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
  if (std::log(uniform01(rng)) < log_ratio) {
    state.beta = proposal;
    res.accepted = true;
  }
  return res;
}

// ---------------------------------------------------------------------------
// partition | rest

void neal3_update(DPState& state, const ChainContext& ctx,
                  const GammaBase& base, Rng& rng) {
  const auto t = ctx.fixed_rates(state.beta);
  auto& part = state.partition;
  const std::size_t n = ctx.items();

  std::vector<double> sf(part.slots(), 0.0);
  std::vector<double> st(part.slots(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto j = static_cast<std::size_t>(part.cluster_of(r));
    sf[j] += ctx.count(r);
    st[j] += t[r];
  }

  const double log_m = std::log(state.m);
  std::vector<double> logw;
  std::vector<int> slot_of;
  for (std::size_t r = 0; r < n; ++r) {
    const double f = ctx.count(r);
    const auto old = static_cast<std::size_t>(part.cluster_of(r));
    sf[old] -= f;
    st[old] -= t[r];
    if (part.remove(r)) {
      sf[old] = 0.0;
      st[old] = 0.0;
    }

    logw.clear();
    slot_of.clear();
    for (int j : part.active()) {
      const auto js = static_cast<std::size_t>(j);
      logw.push_back(std::log(static_cast<double>(part.size(j))) +
                     log_predictive(f, t[r], base.a + sf[js], base.b + st[js]));
      slot_of.push_back(j);
    }
    logw.push_back(log_m + log_predictive(f, t[r], base.a, base.b));
    slot_of.push_back(-1);

    int j = slot_of[sample_log_weights(logw, rng)];
    if (j < 0) {
      j = part.new_cluster();
      if (static_cast<std::size_t>(j) >= sf.size()) {
        sf.resize(static_cast<std::size_t>(j) + 1, 0.0);
        st.resize(static_cast<std::size_t>(j) + 1, 0.0);
      }
      sf[static_cast<std::size_t>(j)] = 0.0;
      st[static_cast<std::size_t>(j)] = 0.0;
    }
    part.assign(r, j);
    sf[static_cast<std::size_t>(j)] += f;
    st[static_cast<std::size_t>(j)] += t[r];
  }

  // Fresh sums for the conjugate draws.
  std::fill(sf.begin(), sf.end(), 0.0);
  std::fill(st.begin(), st.end(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto j = static_cast<std::size_t>(part.cluster_of(r));
    sf[j] += ctx.count(r);
    st[j] += t[r];
  }
  state.phi.resize(part.slots(), 0.0);
  for (int j : part.active()) {
    const auto js = static_cast<std::size_t>(j);
    state.phi[js] = log_gamma_draw(rng, base.a + sf[js], base.b + st[js]);
  }
}

Neal5Stats neal5_update(DPState& state, const ChainContext& ctx,
                        const GaussianBase& base, const SamplerConfig& config,
                        double re_step, Rng& rng) {
  const auto t = ctx.fixed_rates(state.beta);
  auto& part = state.partition;
  const std::size_t n = ctx.items();
  const double others_plus_m = static_cast<double>(n - 1) + state.m;
  const double sd = std::sqrt(state.sigma2);

  auto cell_ll = [&](std::size_t r, double phi) {
    return ctx.count(r) * phi - t[r] * std::exp(phi);
  };

  for (std::size_t r = 0; r < n; ++r) {
    for (int rep = 0; rep < config.aux_components; ++rep) {
      const int cur = part.cluster_of(r);
      const double u = uniform01(rng) * others_plus_m;
      int cand = -1;
      double cand_phi;
      if (u < static_cast<double>(n - 1)) {
        auto other = static_cast<std::size_t>(u);
        if (other >= n - 1) other = n - 2;
        if (other >= r) ++other;
        cand = part.cluster_of(other);
        if (cand == cur) continue;
        cand_phi = state.phi[static_cast<std::size_t>(cand)];
      } else {
        cand_phi = state.alpha + sd * std_normal(rng);
      }
      const double log_acc =
          cell_ll(r, cand_phi) - cell_ll(r, state.phi[static_cast<std::size_t>(cur)]);
      if (!(std::log(uniform01(rng)) < log_acc)) continue;
      part.remove(r);
      if (cand < 0) {
        cand = part.new_cluster();
        state.phi.resize(part.slots(), 0.0);
        state.phi[static_cast<std::size_t>(cand)] = cand_phi;
      }
      part.assign(r, cand);
    }
  }

  std::vector<double> sf(part.slots(), 0.0);
  std::vector<double> st(part.slots(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto j = static_cast<std::size_t>(part.cluster_of(r));
    sf[j] += ctx.count(r);
    st[j] += t[r];
  }

  Neal5Stats stats;
  const double inv2s2 = 0.5 / state.sigma2;
  for (int j : part.active()) {
    const auto js = static_cast<std::size_t>(j);
    const double phi = state.phi[js];
    const double prop = phi + re_step * std_normal(rng);
    const double log_acc = sf[js] * (prop - phi) -
                           st[js] * (std::exp(prop) - std::exp(phi)) -
                           inv2s2 * ((prop - state.alpha) * (prop - state.alpha) -
                                     (phi - state.alpha) * (phi - state.alpha));
    ++stats.value_proposals;
    if (std::log(uniform01(rng)) < log_acc) {
      state.phi[js] = prop;
      ++stats.value_accepts;
    }
  }

  if (config.update_base_hyper) {
    const double c = static_cast<double>(part.num_clusters());
    double sum_phi = 0.0;
    for (int j : part.active()) sum_phi += state.phi[static_cast<std::size_t>(j)];
    const double post_var = 1.0 / (1.0 / base.var0 + c / state.sigma2);
    const double post_mean =
        post_var * (base.mean0 / base.var0 + sum_phi / state.sigma2);
    state.alpha = post_mean + std::sqrt(post_var) * std_normal(rng);
    double ss = 0.0;
    for (int j : part.active()) {
      const double d = state.phi[static_cast<std::size_t>(j)] - state.alpha;
      ss += d * d;
    }
    state.sigma2 = 1.0 / gamma_rate(rng, base.shape + 0.5 * c, base.scale + 0.5 * ss);
  }
  return stats;
}

double escobar_west_update(double m, std::size_t c, std::size_t k,
                           double prior_shape, double prior_rate, Rng& rng) {
  const double eta = beta_draw(rng, m + 1.0, static_cast<double>(k));
  const double rate = prior_rate - std::log(eta);
  const double cd = static_cast<double>(c);
  const double odds = (prior_shape + cd - 1.0) / (static_cast<double>(k) * rate);
  const double weight = odds / (1.0 + odds);
  const double shape =
      uniform01(rng) < weight ? prior_shape + cd : prior_shape + cd - 1.0;
  return gamma_rate(rng, shape, rate);
}

// ---------------------------------------------------------------------------
// Driver

int PosteriorDraws::column_of(std::size_t k) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), k);
  if (it == cells.end() || *it != k) return -1;
  return static_cast<int>(it - cells.begin());
}

DPState initial_state(const ChainContext& ctx, const BaseMeasure& base,
                      const SamplerConfig& config,
                      const Eigen::VectorXd& init_beta) {
  const auto q = static_cast<Eigen::Index>(ctx.design().cols());
  DPState s;
  if (init_beta.size() > 0) {
    if (init_beta.size() != q) {
      throw InputError("initial beta has length " +
                       std::to_string(init_beta.size()) + ", model needs " +
                       std::to_string(q));
    }
    s.beta = init_beta;
  } else {
    s.beta = Eigen::VectorXd::Zero(q);
    const double n = static_cast<double>(ctx.table().sample_size());
    const double denom = ctx.pi() * static_cast<double>(ctx.items());
    s.beta[0] = std::log(std::max(n, 0.5) / denom);
  }
  s.m = config.fixed_m.value_or(config.m_init);
  if (std::holds_alternative<NoRandomEffects>(base)) return s;

  s.partition = Partition(ctx.items());
  const int slot = s.partition.new_cluster();
  for (std::size_t r = 0; r < ctx.items(); ++r) s.partition.assign(r, slot);
  s.phi.assign(s.partition.slots(), 0.0);
  if (const auto* g = std::get_if<GaussianBase>(&base)) {
    s.alpha = g->mean0;
    s.sigma2 = g->scale / (g->shape + 1.0);
  }
  return s;
}

namespace {

void check_finite(const DPState& s, int iteration, const char* component) {
  auto fail = [&](const std::string& what) {
    std::ostringstream msg;
    msg << "non-finite state at iteration " << iteration << " after "
        << component << " update: " << what << " (clusters="
        << s.num_clusters() << ", m=" << s.m << ")";
    throw NumericError(msg.str());
  };
  if (!s.beta.allFinite()) fail("beta");
  for (int j : s.partition.active()) {
    if (!std::isfinite(s.phi[static_cast<std::size_t>(j)])) fail("cluster value");
  }
  if (!(std::isfinite(s.m) && s.m > 0.0)) fail("mass parameter");
}

}  // namespace

PosteriorDraws run_chain(const ContingencyTable& table, const ModelSpec& spec,
                         const BaseMeasure& base, const SamplerConfig& config,
                         const Eigen::VectorXd& init_beta) {
  config.validate();
  validate_base(base);
  table.validate();
  const ChainContext ctx(table, spec);
  if (ctx.items() == 0) throw DegenerateInputError("table has no active cells");
  Rng rng(config.seed);
  DPState state = initial_state(ctx, base, config, init_beta);
  const bool has_effects = !std::holds_alternative<NoRandomEffects>(base);

  PosteriorDraws draws;
  draws.pi = table.sampling_fraction();
  draws.base = base_name(base);
  draws.spec = spec.to_string();
  draws.all_cells = ctx.design().cells();
  std::vector<std::size_t> tracked_rows;
  for (std::size_t r = 0; r < ctx.items(); ++r) {
    const auto k = ctx.design().cell(r);
    if (config.track_all_cells || table.f(k) == 1) {
      tracked_rows.push_back(r);
      draws.cells.push_back(k);
    }
  }
  const auto H = static_cast<Eigen::Index>(config.H);
  draws.lambda.resize(H, static_cast<Eigen::Index>(tracked_rows.size()));
  draws.beta_trace.resize(H, state.beta.size());
  draws.lambda_mean.assign(ctx.items(), 0.0);

  double log_eps = std::log(config.epsilon);
  double log_re_step = std::log(config.re_step);
  double accept_sum = 0.0;
  long accept_count = 0;
  const int total = config.burn_in + config.H * config.thin;
  const bool update_m = has_effects && !config.fixed_m;
  const bool update_beta = config.update_beta && !config.empirical_bayes;
  Eigen::Index stored = 0;

  for (int it = 0; it < total; ++it) {
    const bool burning = it < config.burn_in;
    const double gain = std::pow(static_cast<double>(it) + 1.0, -0.6);
    if (has_effects && config.update_partition) {
      if (const auto* g = std::get_if<GammaBase>(&base)) {
        neal3_update(state, ctx, *g, rng);
      } else if (const auto* g5 = std::get_if<GaussianBase>(&base)) {
        const auto st = neal5_update(state, ctx, *g5, config,
                                     std::exp(log_re_step), rng);
        if (burning && st.value_proposals > 0) {
          const double rate = static_cast<double>(st.value_accepts) /
                              static_cast<double>(st.value_proposals);
          log_re_step += gain * (rate - 0.44);
        }
      }
      check_finite(state, it, "partition");
    }
    if (update_beta) {
      const auto res = smmala_update(state, ctx, config, std::exp(log_eps), rng);
      if (burning) {
        if (config.adapt_epsilon) {
          log_eps += gain * (res.accept_prob - config.epsilon_adapt_target);
        }
      } else {
        accept_sum += res.accepted ? 1.0 : 0.0;
        ++accept_count;
      }
      check_finite(state, it, "beta");
    }
    if (update_m) {
      state.m = escobar_west_update(state.m, state.num_clusters(), ctx.items(),
                                    config.m_prior_shape, config.m_prior_rate,
                                    rng);
      check_finite(state, it, "mass");
    }

    if (burning || (it - config.burn_in) % config.thin != config.thin - 1) continue;
    for (std::size_t c = 0; c < tracked_rows.size(); ++c) {
      const auto r = tracked_rows[c];
      draws.lambda(stored, static_cast<Eigen::Index>(c)) =
          std::exp(ctx.design().dot(r, state.beta.data()) + state.effect(r));
    }
    for (std::size_t r = 0; r < ctx.items(); ++r) {
      const double l = std::exp(ctx.design().dot(r, state.beta.data()) + state.effect(r));
      if (!std::isfinite(l) || !(l > 0.0)) {
        std::ostringstream msg;
        msg << "rate of cell " << ctx.design().cell(r)
            << " is not finite-positive at iteration " << it;
        throw NumericError(msg.str());
      }
      draws.lambda_mean[r] += l;
    }
    draws.beta_trace.row(stored) = state.beta.transpose();
    if (has_effects) draws.c_trace.push_back(static_cast<int>(state.num_clusters()));
    draws.m_trace.push_back(state.m);
    ++stored;
  }
  for (auto& l : draws.lambda_mean) l /= static_cast<double>(config.H);
  draws.acceptance_rate =
      accept_count > 0 ? accept_sum / static_cast<double>(accept_count) : 1.0;
  draws.final_epsilon = std::exp(log_eps);
  return draws;
}

PosteriorDraws run_chains(const ContingencyTable& table, const ModelSpec& spec,
                          const BaseMeasure& base, const SamplerConfig& config,
                          int chains, const Eigen::VectorXd& init_beta) {
  if (chains < 1) throw InputError("need at least one chain");
  if (chains == 1) return run_chain(table, spec, base, config, init_beta);

  std::vector<std::future<PosteriorDraws>> jobs;
  for (int c = 0; c < chains; ++c) {
    SamplerConfig cc = config;
    cc.seed = substream(config.seed, static_cast<std::uint64_t>(c))();
    jobs.push_back(std::async(std::launch::async, [&, cc] {
      return run_chain(table, spec, base, cc, init_beta);
    }));
  }
  std::vector<PosteriorDraws> parts;
  for (auto& j : jobs) parts.push_back(j.get());

  PosteriorDraws out = parts.front();
  const auto H = out.lambda.rows();
  out.lambda.resize(H * chains, out.lambda.cols());
  out.beta_trace.resize(H * chains, out.beta_trace.cols());
  out.c_trace.clear();
  out.m_trace.clear();
  std::fill(out.lambda_mean.begin(), out.lambda_mean.end(), 0.0);
  double acc = 0.0;
  for (int c = 0; c < chains; ++c) {
    const auto& p = parts[static_cast<std::size_t>(c)];
    out.lambda.middleRows(H * c, H) = p.lambda;
    out.beta_trace.middleRows(H * c, H) = p.beta_trace;
    out.c_trace.insert(out.c_trace.end(), p.c_trace.begin(), p.c_trace.end());
    out.m_trace.insert(out.m_trace.end(), p.m_trace.begin(), p.m_trace.end());
    for (std::size_t r = 0; r < out.lambda_mean.size(); ++r) {
      out.lambda_mean[r] += p.lambda_mean[r] / chains;
    }
    acc += p.acceptance_rate / chains;
  }
  out.acceptance_rate = acc;
  return out;
}

}  // namespace dprisk
