#include "lanmdp/curve_task.hpp"

namespace lanmdp::curve {

std::vector<CurveTrajectory> generate_demos(const CurveEnvConfig& cfg, std::size_t n, double min_a,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CurveTrajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_cubic_demo(cfg, min_a, rng).trajectory);
  return out;
}

std::vector<std::vector<Vec>> state_sequences(const std::vector<CurveTrajectory>& trajs) {
  std::vector<std::vector<Vec>> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(t.points);
  return out;
}

std::vector<Trajectory> with_actions(const std::vector<CurveTrajectory>& trajs) {
  std::vector<Trajectory> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(Trajectory{t.points, recover_actions(t)});
  return out;
}

CurveTrajectory to_curve(const Trajectory& traj) {
  CurveTrajectory c;
  c.points = traj.states;
  return c;
}

GaussianTransition implanted_transition(const CurveEnvConfig& cfg, double sigma) {
  const Mat A = Mat::Identity(2, 2);
  Mat B(2, 1);
  B << 0.0, 1.0;
  Vec c(2);
  c << cfg.h, 0.0;
  return make_linear_transition(A, B, c, sigma);
}

std::vector<Vec> start_states(const std::vector<CurveTrajectory>& trajs) {
  std::vector<Vec> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(t.points.front());
  return out;
}

TrainEnvironment make_environment(const CurveEnvConfig& cfg,
                                  const std::vector<CurveTrajectory>& demos, double sigma) {
  TrainEnvironment env;
  env.state_dim = 2;
  env.action_dim = 1;
  env.horizon = cfg.horizon();
  env.step = [cfg](const Vec& s, const Vec& a) { return env_step(cfg, s, a); };
  env.start_states = start_states(demos);
  env.implanted = implanted_transition(cfg, sigma);
  return env;
}

TrainConfig curve_profile(int context_len) {
  TrainConfig cfg;
  cfg.context_len = context_len;
  cfg.policy_hidden.clear();  // 4 * L, one hidden layer
  cfg.iterations = 3000;
  cfg.lr_policy = 2e-4;
  cfg.batch_size = 64;
  cfg.n_samples = 4;
  // Step size 1 makes noise_scale a temperature; at 1 the 0.1-scale actions are unresolvable.
  cfg.sampler = LangevinConfig{20, 1.0, 1.0, 0.03, 1.0, false};
  cfg.eval_sampler = LangevinConfig{20, 1.0, 1.0, 0.03, 1.0, true};
  cfg.energy_output_init_scale = 0.0;
  cfg.w_beta = 0.0;
  cfg.prefill_transitions = 2000;
  return cfg;
}

PolicyEvaluation evaluate_policy(const CurveEnvConfig& cfg, const EnergyPolicy& policy,
                                 const std::vector<Vec>& starts, int n_rollouts,
                                 const LangevinConfig& sampler, Rng& rng) {
  require(!starts.empty() && n_rollouts >= 1, "evaluation needs start states and rollouts");
  const StepFn step = [&cfg](const Vec& s, const Vec& a) { return env_step(cfg, s, a); };
  PolicyEvaluation out;
  for (int i = 0; i < n_rollouts; ++i) {
    const Vec& s0 = starts[static_cast<std::size_t>(i) % starts.size()];
    out.rollouts.push_back(to_curve(execute_policy(policy, step, s0, cfg.horizon(), sampler, rng)));
  }
  out.metrics = evaluate_rollouts(out.rollouts);
  return out;
}

PolicyEvaluation evaluate_bc(const CurveEnvConfig& cfg, const BcPolicy& policy,
                             const std::vector<Vec>& starts, int n_rollouts, double noise, Rng& rng) {
  require(!starts.empty() && n_rollouts >= 1, "evaluation needs start states and rollouts");
  const StepFn step = [&cfg](const Vec& s, const Vec& a) { return env_step(cfg, s, a); };
  PolicyEvaluation out;
  for (int i = 0; i < n_rollouts; ++i) {
    const Vec& s0 = starts[static_cast<std::size_t>(i) % starts.size()];
    out.rollouts.push_back(to_curve(execute_bc(policy, step, s0, cfg.horizon(), noise, rng)));
  }
  out.metrics = evaluate_rollouts(out.rollouts);
  return out;
}

TaskEvaluator make_evaluator(const CurveEnvConfig& cfg, std::vector<Vec> starts, int n_rollouts,
                             LangevinConfig sampler) {
  return [cfg, starts = std::move(starts), n_rollouts, sampler](const EnergyPolicy& policy, Rng& rng) {
    const PolicyEvaluation ev = evaluate_policy(cfg, policy, starts, n_rollouts, sampler, rng);
    return std::make_pair(std::optional<double>(ev.metrics.acceptance_rate), ev.metrics.mean_residual);
  };
}

LangevinConfig plan_profile() { return LangevinConfig{100, 2e-4, 2e-4, 0.1, 1.0, true}; }

GoalPlan plan_to_goal(const CurveEnvConfig& cfg, const EnergyPolicy& policy,
                      const GaussianTransition& trans, const std::vector<Vec>& prefix,
                      const Vec& goal, const LangevinConfig& sampler,
                      const LangevinConfig& init_sampler, Rng& rng) {
  require(!prefix.empty(), "planning needs at least one prefix state");
  const int steps = cfg.horizon() - static_cast<int>(prefix.size() - 1);
  require(steps >= 1, "prefix already spans the horizon");
  const Context ctx = make_context(std::span<const Vec>(prefix), prefix.size() - 1, policy.context_len);
  PlanOptions options;
  options.init_sampler = init_sampler;
  GoalPlan out;
  out.plan = plan_goal(policy, trans, ctx, goal, steps, sampler, rng, options);
  out.path.points = prefix;
  for (const Vec& s : out.plan.predicted_states) out.path.points.push_back(s);
  out.fit = cubic_fit(out.path);
  out.reference = shortest_path_reference(cfg, prefix, goal, steps);
  out.reference_fit = cubic_fit(out.reference);
  return out;
}

}  // namespace lanmdp::curve
