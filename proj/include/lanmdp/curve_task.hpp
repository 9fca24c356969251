#pragma once

#include "lanmdp/envs.hpp"
#include "lanmdp/training.hpp"

#include <vector>

// Glue between the curve environment and the generic training / planning code.
namespace lanmdp::curve {

/// n demos drawn sequentially from one stream seeded with `seed`.
std::vector<CurveTrajectory> generate_demos(const CurveEnvConfig& cfg, std::size_t n, double min_a,
                                            std::uint64_t seed);

std::vector<std::vector<Vec>> state_sequences(const std::vector<CurveTrajectory>& trajs);

/// Demos with their recovered dy actions, for behavior cloning.
std::vector<Trajectory> with_actions(const std::vector<CurveTrajectory>& trajs);

CurveTrajectory to_curve(const Trajectory& traj);

/// Exact curve dynamics as a linear Gaussian transition: (x, y) + (h, dy).
GaussianTransition implanted_transition(const CurveEnvConfig& cfg, double sigma);

TrainEnvironment make_environment(const CurveEnvConfig& cfg,
                                  const std::vector<CurveTrajectory>& demos, double sigma);

/// Training defaults for the curve task at context length L.
TrainConfig curve_profile(int context_len);

struct PolicyEvaluation {
  std::vector<CurveTrajectory> rollouts;
  RolloutEvaluation metrics;
};

/// n_rollouts prior-sampled rollouts; rollout i starts at starts[i % starts.size()].
PolicyEvaluation evaluate_policy(const CurveEnvConfig& cfg, const EnergyPolicy& policy,
                                 const std::vector<Vec>& starts, int n_rollouts,
                                 const LangevinConfig& sampler, Rng& rng);

PolicyEvaluation evaluate_bc(const CurveEnvConfig& cfg, const BcPolicy& policy,
                             const std::vector<Vec>& starts, int n_rollouts, double noise, Rng& rng);

TaskEvaluator make_evaluator(const CurveEnvConfig& cfg, std::vector<Vec> starts, int n_rollouts,
                             LangevinConfig sampler);

std::vector<Vec> start_states(const std::vector<CurveTrajectory>& trajs);

/// Goal-planning sampler: the goal density makes the sequence objective stiff
/// (curvature ~ steps / sigma^2), so steps are far below the policy sampler's.
LangevinConfig plan_profile();

struct GoalPlan {
  Plan plan;
  CurveTrajectory path;       // prefix followed by the predicted states
  CubicFit fit;
  CurveTrajectory reference;  // shortest path from the prefix's last state
  CubicFit reference_fit;
};

/// Plans from `prefix` (at least one state) to `goal` at the end of the horizon.
GoalPlan plan_to_goal(const CurveEnvConfig& cfg, const EnergyPolicy& policy,
                      const GaussianTransition& trans, const std::vector<Vec>& prefix,
                      const Vec& goal, const LangevinConfig& sampler,
                      const LangevinConfig& init_sampler, Rng& rng);

}  // namespace lanmdp::curve
