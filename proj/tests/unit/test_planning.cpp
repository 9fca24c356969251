#include <doctest.h>

#include "lanmdp/planning.hpp"

#include <cmath>
#include <sstream>

using namespace lanmdp;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// f = -(swish(u) + swish(-u)) = -u tanh(u / 2) with u = a - target, target = w . ctx + b.
// A smooth single well at the target action.
EnergyPolicy well_policy(int context_len, const Vec& ctx_weights, double offset) {
  EnergyPolicy pol = make_energy_policy(1, 1, context_len, {2}, 0);
  Mat w(2, context_len + 1);
  w.leftCols(context_len) = -ctx_weights.transpose().replicate(2, 1);
  w.col(context_len).setOnes();
  w.row(1) *= -1.0;
  pol.net.weights[0] = w;
  pol.net.biases[0] = vec({-offset, offset});
  pol.net.weights[1] = Mat::Constant(1, 2, -1.0);
  pol.net.biases[1].setZero();
  return pol;
}

EnergyPolicy flat_policy(int state_dim, int action_dim, int context_len) {
  EnergyPolicy pol = make_energy_policy(state_dim, action_dim, context_len, {4}, 0);
  for (auto& w : pol.net.weights) w.setZero();
  return pol;
}

// s' = s + a
GaussianTransition additive(double sigma) {
  return make_linear_transition(Mat::Identity(1, 1), Mat::Identity(1, 1), Vec::Zero(1), sigma);
}

const LangevinConfig kDescend{200, 0.5, 0.5, 0.0, 10.0, false};

}  // namespace

TEST_CASE("execute_policy: empty horizon, analytic rollouts, determinism") {
  const StepFn step = [](const Vec& s, const Vec& a) { return Vec(s + a); };
  Rng rng(0);
  const EnergyPolicy constant = well_policy(1, vec({0.0}), 0.3);
  const Trajectory none = execute_policy(constant, step, vec({0.2}), 0, kDescend, rng);
  CHECK(none.states.size() == 1);
  CHECK(none.actions.empty());

  const Trajectory line = execute_policy(constant, step, vec({0.2}), 6, kDescend, rng);
  REQUIRE(line.states.size() == 7);
  for (int t = 0; t <= 6; ++t) CHECK(line.states[static_cast<std::size_t>(t)][0] == doctest::Approx(0.2 + 0.3 * t).epsilon(1e-6));

  // L = 1 with target a = s: only the current state enters, so s doubles every step.
  const Trajectory dbl = execute_policy(well_policy(1, vec({1.0}), 0.0), step, vec({0.1}), 3, kDescend, rng);
  for (int t = 0; t <= 3; ++t) CHECK(dbl.states[static_cast<std::size_t>(t)][0] == doctest::Approx(0.1 * std::pow(2.0, t)).epsilon(1e-6));

  // L = 2 with target a = s_t - s_{t-1} + 0.1; the window is padded with s_0 at t = 0.
  const Trajectory acc = execute_policy(well_policy(2, vec({-1.0, 1.0}), 0.1), step, vec({0.0}), 4, kDescend, rng);
  double s = 0.0, prev = 0.0;
  for (int t = 0; t < 4; ++t) {
    const double a = s - prev + 0.1;
    prev = s;
    s += a;
    CHECK(acc.states[static_cast<std::size_t>(t) + 1][0] == doctest::Approx(s).epsilon(1e-6));
  }

  const EnergyPolicy rnd = make_energy_policy(1, 1, 2, {8}, 3);
  const LangevinConfig noisy{20, 0.1, 0.1, 1.0, 1.0, false};
  Rng r1(4), r2(4);
  const Trajectory x = execute_policy(rnd, step, vec({0.0}), 5, noisy, r1);
  const Trajectory y = execute_policy(rnd, step, vec({0.0}), 5, noisy, r2);
  for (std::size_t t = 0; t < x.states.size(); ++t) CHECK(x.states[t] == y.states[t]);
  CHECK_THROWS(execute_policy(rnd, step, vec({0.0, 1.0}), 2, noisy, r1));
}

TEST_CASE("one step, flat prior: plan sits at the grid maximizer of the transition density") {
  const EnergyPolicy pol = flat_policy(1, 1, 1);
  const GaussianTransition tr = additive(0.05);
  const Context ctx{{vec({0.2})}};
  const Vec goal = vec({-0.13});
  double best_a = 0.0, best = -1e300;
  for (int i = 0; i <= 4000; ++i) {
    const double a = -1.0 + i * 5e-4;
    const double lp = transition_logprob(tr, ctx.current(), vec({a}), goal);
    if (lp > best) {
      best = lp;
      best_a = a;
    }
  }
  Rng rng(5);
  const Plan plan = plan_goal(pol, tr, ctx, goal, 1, LangevinConfig{200, 1e-3, 1e-3, 0.1, 1.0, true}, rng);
  REQUIRE(plan.actions.size() == 1);
  CHECK(std::abs(plan.actions[0][0] - best_a) < 1e-2);
}

TEST_CASE("goal at the prior rollout endpoint: the initialization is already on target") {
  const EnergyPolicy pol = well_policy(1, vec({0.0}), 0.05);
  const GaussianTransition tr = additive(0.05);
  const Context ctx{{vec({0.1})}};
  const Vec goal = vec({0.1 + 5 * 0.05});
  PlanOptions opts;
  opts.init_sampler = kDescend;
  Rng rng(6);
  const Plan plan = plan_goal(pol, tr, ctx, goal, 5, LangevinConfig{50, 1e-4, 1e-4, 0.0, 1.0, false}, rng, opts);
  CHECK(plan.residual_to_goal < 1e-4);
  for (const Vec& a : plan.actions) CHECK(a[0] == doctest::Approx(0.05).epsilon(1e-3));
}

TEST_CASE("plan invariants: predicted states follow the mean rollout") {
  const EnergyPolicy pol = make_energy_policy(2, 1, 3, {8}, 7);
  const GaussianTransition tr = make_gaussian_transition(2, 1, {6}, 0.05, 8);
  const Context ctx{{vec({0, 0}), vec({0.1, 0.2}), vec({0.2, 0.1})}};
  Rng rng(9);
  const Plan plan = plan_goal(pol, tr, ctx, vec({0.5, 0.5}), 4, LangevinConfig{20, 1e-3, 1e-3, 0.1, 1.0, false}, rng);
  REQUIRE(plan.actions.size() == 4);
  REQUIRE(plan.predicted_states.size() == 4);
  Vec s = ctx.current();
  for (std::size_t k = 0; k < 4; ++k) {
    s = transition_mean(tr, s, plan.actions[k]);
    CHECK(s.isApprox(plan.predicted_states[k], 1e-12));
  }
  CHECK(plan.residual_to_goal == doctest::Approx((s - plan.goal).norm()));

  CHECK_THROWS(plan_goal(pol, tr, ctx, vec({0.5, 0.5}), 0, LangevinConfig{}, rng));
  CHECK_THROWS(plan_goal(pol, tr, ctx, vec({0.5}), 2, LangevinConfig{}, rng));
}

TEST_CASE("objective is non-decreasing along a noiseless chain with a small step") {
  const EnergyPolicy pol = well_policy(1, vec({0.0}), 0.1);
  const GaussianTransition tr = additive(0.05);
  const Context ctx{{vec({0.0})}};
  const Vec goal = vec({0.6});
  double prev = -1e300;
  for (int k = 1; k <= 30; ++k) {
    Rng rng(10);
    const Plan p = plan_goal(pol, tr, ctx, goal, 4, LangevinConfig{k, 5e-4, 5e-4, 0.0, 1.0, false}, rng);
    CHECK(p.objective >= prev - 1e-12);
    prev = p.objective;
  }
}

TEST_CASE("plan objective gradient through time matches finite differences") {
  Rng rng(11);
  std::uniform_int_distribution<int> dim(1, 3), len(1, 3), steps(1, 5);
  std::normal_distribution<double> g(0.0, 0.5);
  constexpr double eps = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const int sd = dim(rng), ad = dim(rng), L = len(rng), T = steps(rng);
    const EnergyPolicy pol = make_energy_policy(sd, ad, L, {8}, 100 + static_cast<std::uint64_t>(trial));
    const GaussianTransition tr = make_gaussian_transition(sd, ad, {8, 8}, 0.3, 200 + static_cast<std::uint64_t>(trial));
    Context ctx;
    for (int i = 0; i < L; ++i) {
      Vec s(sd);
      for (int j = 0; j < sd; ++j) s[j] = g(rng);
      ctx.states.push_back(s);
    }
    Vec goal(sd), flat(T * ad);
    for (int j = 0; j < sd; ++j) goal[j] = g(rng);
    for (int j = 0; j < T * ad; ++j) flat[j] = g(rng);
    const PlanObjective obj = plan_objective(pol, tr, ctx, goal, flat);
    Vec fd(flat.size());
    for (Eigen::Index j = 0; j < flat.size(); ++j) {
      Vec up = flat, down = flat;
      up[j] += eps;
      down[j] -= eps;
      fd[j] = (plan_objective(pol, tr, ctx, goal, up).value - plan_objective(pol, tr, ctx, goal, down).value) / (2 * eps);
    }
    CHECK((obj.grad - fd).norm() <= 1e-4 * std::max(fd.norm(), 1e-8));
  }
}

TEST_CASE("plan export") {
  Plan plan;
  plan.actions = {vec({0.1}), vec({-0.2})};
  plan.predicted_states = {vec({0.1, 0.3}), vec({0.2, 0.1})};
  plan.goal = vec({0.2, 0.0});
  plan.residual_to_goal = 0.1;
  const std::string csv = plan_to_csv(plan);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,action_0,pred_state_0,pred_state_1");
  std::getline(in, line);
  CHECK(line.rfind("0,0.1", 0) == 0);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  const nlohmann::json s = plan_summary(plan);
  CHECK(s["steps"] == 2);
  CHECK(s["residual_to_goal"] == 0.1);
}
