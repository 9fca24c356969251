#include "lanmdp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lanmdp {

void LangevinConfig::validate() const {
  require(n_steps >= 1, "langevin n_steps must be at least 1");
  require(step_init > 0.0 && step_final > 0.0, "langevin step sizes must be positive");
  require(step_final <= step_init, "langevin step_final must not exceed step_init");
  require(noise_scale >= 0.0, "langevin noise_scale must be non-negative");
  require(clip_norm > 0.0, "langevin clip_norm must be positive");
}

nlohmann::json langevin_to_json(const LangevinConfig& cfg) {
  return {{"n_steps", cfg.n_steps},         {"step_init", cfg.step_init},
          {"step_final", cfg.step_final},   {"noise_scale", cfg.noise_scale},
          {"clip_norm", cfg.clip_norm},     {"inference_double", cfg.inference_double}};
}

LangevinConfig langevin_from_json(const nlohmann::json& doc, LangevinConfig base) {
  if (!doc.is_object()) throw ValidationError("sampler configuration must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "n_steps") base.n_steps = value.get<int>();
      else if (key == "step_init") base.step_init = value.get<double>();
      else if (key == "step_final") base.step_final = value.get<double>();
      else if (key == "noise_scale") base.noise_scale = value.get<double>();
      else if (key == "clip_norm") base.clip_norm = value.get<double>();
      else if (key == "inference_double") base.inference_double = value.get<bool>();
      else throw ValidationError("unknown sampler key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad sampler configuration: ") + e.what());
  }
  base.validate();
  return base;
}

double step_size(int k, const LangevinConfig& cfg) {
  if (k < 0 || k >= cfg.total_steps()) {
    throw std::out_of_range("langevin step index " + std::to_string(k) + " outside [0, " +
                            std::to_string(cfg.total_steps()) + ")");
  }
  if (cfg.n_steps == 1 || k >= cfg.n_steps - 1) {
    return cfg.n_steps == 1 ? cfg.step_init : cfg.step_final;
  }
  const double frac = 1.0 - static_cast<double>(k) / static_cast<double>(cfg.n_steps - 1);
  return cfg.step_final + (cfg.step_init - cfg.step_final) * frac * frac;
}

Vec langevin_chain(const GradFn& grad_log_density, Vec init, const LangevinConfig& cfg, Rng& rng,
                   const UpdateObserver& observer) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec a = std::move(init);
  Vec noise(a.size());
  const int total = cfg.total_steps();
  for (int k = 0; k < total; ++k) {
    const double s = step_size(k, cfg);
    const Vec g = grad_log_density(a);
    if (!g.allFinite()) {
      throw NumericalError("non-finite gradient at langevin step " + std::to_string(k));
    }
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = normal(rng);
    Vec update = s * g + cfg.noise_scale * std::sqrt(2.0 * s) * noise;
    const double norm = update.norm();
    if (norm > cfg.clip_norm) update *= cfg.clip_norm / norm;
    if (observer) observer(k, update);
    a += update;
  }
  return a;
}

Vec initial_action(int dim, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vec a(dim);
  for (int i = 0; i < dim; ++i) a[i] = unif(rng);
  return a;
}

std::vector<Vec> sample_prior(const EnergyPolicy& policy, const Context& ctx,
                              const LangevinConfig& cfg, std::size_t n, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(n);
  // Flattened context is reused; only the action tail changes inside the chain.
  Vec input = policy_input(policy, ctx, Vec::Zero(policy.action_dim));
  const Eigen::Index tail = policy.input_dim() - policy.action_dim;
  Vec grad;
  const GradFn grad_fn = [&](const Vec& a) -> Vec {
    input.segment(tail, policy.action_dim) = a;
    nn::scalar_value_and_input_grad(policy.net, input, grad);
    return grad.tail(policy.action_dim);
  };
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(langevin_chain(grad_fn, initial_action(policy.action_dim, rng), cfg, rng));
  }
  return out;
}

Vec sample_posterior_mcmc(const EnergyPolicy& policy, const GaussianTransition& trans,
                          const Context& ctx, const Vec& next_state, const LangevinConfig& cfg,
                          Rng& rng) {
  const Vec& state = ctx.current();
  const GradFn grad_fn = [&](const Vec& a) -> Vec {
    return energy_action_grad(policy, ctx, a) +
           transition_logprob_grads(trans, state, a, next_state).action;
  };
  return langevin_chain(grad_fn, initial_action(policy.action_dim, rng), cfg, rng);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  require(!log_weights.empty(), "no log-weights to normalize");
  double max_lw = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (std::isnan(lw)) throw NumericalError("NaN log-weight");
    max_lw = std::max(max_lw, lw);
  }
  if (!std::isfinite(max_lw)) {
    throw NumericalError(max_lw > 0 ? "infinite log-weight" : "all importance weights are zero");
  }
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - max_lw);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

WeightedActions weight_by_transition(const GaussianTransition& trans, const Vec& state,
                                     const Vec& next_state, std::vector<Vec> actions) {
  require(!actions.empty(), "no candidate actions to weight");
  std::vector<double> log_w;
  log_w.reserve(actions.size());
  for (const Vec& a : actions) log_w.push_back(transition_logprob(trans, state, a, next_state));
  // Raw weights exp(log_w) all below the smallest normal double count as underflow.
  const double best = *std::max_element(log_w.begin(), log_w.end());
  if (!(best >= std::log(std::numeric_limits<double>::min()))) {
    double min_resid = std::numeric_limits<double>::infinity();
    for (const Vec& a : actions) {
      min_resid = std::min(min_resid, (next_state - transition_mean(trans, state, a)).norm());
    }
    throw NumericalError("observed transition unexplainable by the model (min residual " +
                         std::to_string(min_resid) + ")");
  }
  WeightedActions out;
  out.weights = normalize_log_weights(log_w);
  out.actions = std::move(actions);
  return out;
}

WeightedActions importance_posterior(const EnergyPolicy& policy, const GaussianTransition& trans,
                                     const Context& ctx, const Vec& next_state,
                                     const LangevinConfig& cfg, std::size_t n, Rng& rng) {
  require(n >= 2, "importance posterior needs at least two samples");
  return weight_by_transition(trans, ctx.current(), next_state,
                              sample_prior(policy, ctx, cfg, n, rng));
}

std::vector<Vec> filter_by_disagreement(const TransitionEnsemble& ens, const Context& ctx,
                                        std::vector<Vec> candidates, double keep_fraction) {
  if (candidates.empty()) throw std::invalid_argument("no candidate actions to filter");
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must lie in (0, 1]");
  const std::size_t n = candidates.size();
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = ensemble_disagreement(ens, ctx.current(), candidates[i]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-12)));
  std::vector<Vec> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(std::move(candidates[order[i]]));
  return out;
}

}  // namespace lanmdp
