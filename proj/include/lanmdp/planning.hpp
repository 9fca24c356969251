#pragma once

#include "lanmdp/common.hpp"
#include "lanmdp/model.hpp"
#include "lanmdp/sampling.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace lanmdp {

/// Real-environment transition s' = step(s, a).
using StepFn = std::function<Vec(const Vec&, const Vec&)>;

/// Model-free execution: one prior sample per step from the rolling L-window context.
/// The window before t = L-1 is padded with s0.
Trajectory execute_policy(const EnergyPolicy& policy, const StepFn& env_step, const Vec& s0,
                          int horizon, const LangevinConfig& cfg, Rng& rng);

struct Plan {
  std::vector<Vec> actions;           // a_t .. a_{T-1}
  std::vector<Vec> predicted_states;  // mean rollout s_{t+1} .. s_T
  Vec goal;
  double residual_to_goal = 0.0;      // ||s_T - goal||
  double objective = 0.0;             // final value of the planning objective
};

struct PlanOptions {
  bool prior_init = true;      // autoregressive prior samples; uniform [-1, 1] otherwise
  LangevinConfig init_sampler;  // used for the prior initialization
};

/// Objective and its gradient for a flattened action sequence (steps * action_dim):
/// sum_k f(a_k; ctx_k) + log p(goal | s_{T-1}, a_{T-1}) along the mean rollout from ctx.
struct PlanObjective {
  double value = 0.0;
  Vec grad;                           // d value / d actions, flattened
  std::vector<Vec> predicted_states;  // s_{t+1} .. s_T (mean)
};

PlanObjective plan_objective(const EnergyPolicy& policy, const GaussianTransition& trans,
                             const Context& ctx, const Vec& goal, const Vec& flat_actions);

/// Goal-conditioned planning: Langevin over the whole action sequence on plan_objective.
Plan plan_goal(const EnergyPolicy& policy, const GaussianTransition& trans, const Context& ctx,
               const Vec& goal, int steps_to_go, const LangevinConfig& cfg, Rng& rng,
               const PlanOptions& options = {});

/// Rows "step,action_0..,pred_state_0.." with a header line.
std::string plan_to_csv(const Plan& plan);
nlohmann::json plan_summary(const Plan& plan);

}  // namespace lanmdp
