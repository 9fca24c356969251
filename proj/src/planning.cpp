#include "lanmdp/planning.hpp"

#include <iomanip>
#include <sstream>

namespace lanmdp {

namespace {

// Window of policy.context_len states ending at seq[end], with seq[0] repeated for padding.
Context window(const std::vector<Vec>& seq, std::size_t end, int length) {
  return make_context(std::span<const Vec>(seq.data(), end + 1), end, length);
}

}  // namespace

Trajectory execute_policy(const EnergyPolicy& policy, const StepFn& env_step, const Vec& s0,
                          int horizon, const LangevinConfig& cfg, Rng& rng) {
  require(horizon >= 0, "horizon must be non-negative");
  require(s0.size() == policy.state_dim, "initial state has the wrong dimension");
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.states.push_back(s0);
  for (int t = 0; t < horizon; ++t) {
    const Context ctx = window(traj.states, static_cast<std::size_t>(t), policy.context_len);
    Vec a = sample_prior(policy, ctx, cfg, 1, rng).front();
    traj.states.push_back(env_step(traj.states.back(), a));
    traj.actions.push_back(std::move(a));
  }
  return traj;
}

PlanObjective plan_objective(const EnergyPolicy& policy, const GaussianTransition& trans,
                             const Context& ctx, const Vec& goal, const Vec& flat_actions) {
  const int ad = policy.action_dim;
  const int sd = policy.state_dim;
  const int L = policy.context_len;
  require(ctx.length() == static_cast<std::size_t>(L), "planning context has the wrong length");
  require(goal.size() == sd, "goal has the wrong dimension");
  require(flat_actions.size() > 0 && flat_actions.size() % ad == 0,
          "flattened action sequence must be a positive multiple of action_dim");
  const auto n = static_cast<std::size_t>(flat_actions.size() / ad);
  auto action = [&](std::size_t k) -> Vec {
    return flat_actions.segment(static_cast<Eigen::Index>(k) * ad, ad);
  };

  // seq = context states followed by predicted p_1 .. p_{n-1}; p_0 is ctx.current().
  const std::size_t base = ctx.length() - 1;
  std::vector<Vec> seq = ctx.states;
  for (std::size_t k = 0; k + 1 < n; ++k) seq.push_back(transition_mean(trans, seq.back(), action(k)));

  PlanObjective out;
  out.grad = Vec::Zero(flat_actions.size());
  std::vector<Vec> lambda(n, Vec::Zero(sd));  // d value / d p_k for k >= 1

  for (std::size_t k = 0; k < n; ++k) {
    const Context c = window(seq, base + k, L);
    const EnergyGrads eg = energy_grads(policy, c, action(k));
    out.value += eg.value;
    out.grad.segment(static_cast<Eigen::Index>(k) * ad, ad) += eg.action;
    for (int i = 0; i < L; ++i) {
      // Window slot i holds seq[base + k - (L - 1 - i)], clamped at 0 by padding.
      const long pos = static_cast<long>(base + k) - (L - 1 - i);
      const long m = pos - static_cast<long>(base);  // predicted-state index
      if (m >= 1) lambda[static_cast<std::size_t>(m)] += eg.context.segment(i * sd, sd);
    }
  }

  const Vec& last = seq[base + n - 1];
  const TransitionGrads tg = transition_logprob_grads(trans, last, action(n - 1), goal);
  out.value += tg.value;
  out.grad.segment(static_cast<Eigen::Index>(n - 1) * ad, ad) += tg.action;
  if (n >= 2) lambda[n - 1] += tg.state;

  // p_k = g(p_{k-1}, a_{k-1}): pull each completed adjoint back one step.
  for (std::size_t k = n - 1; k >= 1; --k) {
    Vec x(sd + ad);
    x << seq[base + k - 1], action(k - 1);
    const Vec gx = nn::input_gradient(trans.net, x, lambda[k]);
    if (k >= 2) lambda[k - 1] += gx.head(sd);
    out.grad.segment(static_cast<Eigen::Index>(k - 1) * ad, ad) += gx.tail(ad);
  }

  for (std::size_t k = 1; k < n; ++k) out.predicted_states.push_back(seq[base + k]);
  out.predicted_states.push_back(transition_mean(trans, last, action(n - 1)));
  return out;
}

Plan plan_goal(const EnergyPolicy& policy, const GaussianTransition& trans, const Context& ctx,
               const Vec& goal, int steps_to_go, const LangevinConfig& cfg, Rng& rng,
               const PlanOptions& options) {
  require(steps_to_go >= 1, "steps_to_go must be at least 1");
  require(goal.size() == policy.state_dim, "goal has the wrong dimension");
  const int ad = policy.action_dim;
  Vec init(static_cast<Eigen::Index>(steps_to_go) * ad);
  if (options.prior_init) {
    std::vector<Vec> seq = ctx.states;
    for (int k = 0; k < steps_to_go; ++k) {
      const Context c = window(seq, seq.size() - 1, policy.context_len);
      const Vec a = sample_prior(policy, c, options.init_sampler, 1, rng).front();
      init.segment(static_cast<Eigen::Index>(k) * ad, ad) = a;
      seq.push_back(transition_mean(trans, seq.back(), a));
    }
  } else {
    init = initial_action(steps_to_go * ad, rng);
  }

  const GradFn grad_fn = [&](const Vec& flat) -> Vec {
    return plan_objective(policy, trans, ctx, goal, flat).grad;
  };
  const Vec flat = langevin_chain(grad_fn, std::move(init), cfg, rng);

  const PlanObjective final_obj = plan_objective(policy, trans, ctx, goal, flat);
  Plan plan;
  for (int k = 0; k < steps_to_go; ++k) plan.actions.push_back(flat.segment(static_cast<Eigen::Index>(k) * ad, ad));
  plan.predicted_states = final_obj.predicted_states;
  plan.goal = goal;
  plan.residual_to_goal = (plan.predicted_states.back() - goal).norm();
  plan.objective = final_obj.value;
  return plan;
}

std::string plan_to_csv(const Plan& plan) {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto ad = plan.actions.empty() ? 0 : plan.actions.front().size();
  const auto sd = plan.goal.size();
  out << "step";
  for (Eigen::Index i = 0; i < ad; ++i) out << ",action_" << i;
  for (Eigen::Index i = 0; i < sd; ++i) out << ",pred_state_" << i;
  out << '\n';
  for (std::size_t k = 0; k < plan.actions.size(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < ad; ++i) out << ',' << plan.actions[k][i];
    for (Eigen::Index i = 0; i < sd; ++i) out << ',' << plan.predicted_states[k][i];
    out << '\n';
  }
  return out.str();
}

nlohmann::json plan_summary(const Plan& plan) {
  return {{"steps", plan.actions.size()},
          {"goal", std::vector<double>(plan.goal.data(), plan.goal.data() + plan.goal.size())},
          {"residual_to_goal", plan.residual_to_goal},
          {"objective", plan.objective}};
}

}  // namespace lanmdp
