#pragma once

#include "lanmdp/common.hpp"
#include "lanmdp/model.hpp"

#include <json.hpp>

#include <functional>
#include <span>
#include <vector>

namespace lanmdp {

/// Short-run Langevin settings.
///
/// The step size decays quadratically from step_init (k = 0) to step_final (k = K-1).
/// Each realized update, gradient step plus injected noise, is clipped to clip_norm.
/// With inference_double the chain keeps running at step_final for another K steps.
struct LangevinConfig {
  int n_steps = 20;
  double step_init = 1.0;
  double step_final = 1.0;
  double noise_scale = 1.0;
  double clip_norm = 1.0;
  bool inference_double = false;

  int total_steps() const { return inference_double ? 2 * n_steps : n_steps; }
  void validate() const;
};

nlohmann::json langevin_to_json(const LangevinConfig& cfg);
/// Missing keys keep the values of `base`; unknown keys are rejected.
LangevinConfig langevin_from_json(const nlohmann::json& doc, LangevinConfig base = {});

double step_size(int k, const LangevinConfig& cfg);

using GradFn = std::function<Vec(const Vec&)>;

/// Observer for every realized (post-clip) update; used by tests to audit clipping.
using UpdateObserver = std::function<void(int step, const Vec& update)>;

Vec langevin_chain(const GradFn& grad_log_density, Vec init, const LangevinConfig& cfg,
                   Rng& rng, const UpdateObserver& observer = {});

/// Overdispersed chain start: uniform in [-1, 1]^dim.
Vec initial_action(int dim, Rng& rng);

std::vector<Vec> sample_prior(const EnergyPolicy& policy, const Context& ctx,
                              const LangevinConfig& cfg, std::size_t n, Rng& rng);

/// Langevin on f(a; ctx) + log p(next | ctx.current(), a).
Vec sample_posterior_mcmc(const EnergyPolicy& policy, const GaussianTransition& trans,
                          const Context& ctx, const Vec& next_state,
                          const LangevinConfig& cfg, Rng& rng);

struct WeightedActions {
  std::vector<Vec> actions;
  std::vector<double> weights;  // non-negative, sum to one
};

/// Softmax of log-weights with max subtraction. Throws NumericalError when every
/// entry is -inf or any entry is NaN.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// Self-normalized weights p(next | state, a_i) / sum_j p(next | state, a_j) for the given
/// candidate actions. Throws NumericalError, reporting the smallest residual, if every
/// likelihood underflows.
WeightedActions weight_by_transition(const GaussianTransition& trans, const Vec& state,
                                     const Vec& next_state, std::vector<Vec> actions);

/// Prior samples reweighted by the transition likelihood of the observed next state.
WeightedActions importance_posterior(const EnergyPolicy& policy, const GaussianTransition& trans,
                                     const Context& ctx, const Vec& next_state,
                                     const LangevinConfig& cfg, std::size_t n, Rng& rng);

/// Stable sort by ensemble disagreement at (ctx.current(), a), keep ceil(keep_fraction * n).
std::vector<Vec> filter_by_disagreement(const TransitionEnsemble& ens, const Context& ctx,
                                        std::vector<Vec> candidates, double keep_fraction);

}  // namespace lanmdp
