#pragma once

#include "lanmdp/common.hpp"
#include "lanmdp/nn.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <vector>

namespace lanmdp {

/// The L most recent states, oldest first. The last entry is the current state.
struct Context {
  std::vector<Vec> states;

  const Vec& current() const { return states.back(); }
  std::size_t length() const { return states.size(); }
};

/// Window of `length` states ending at index t of `history`; indices before 0 repeat
/// history[0].
Context make_context(std::span<const Vec> history, std::size_t t, int length);

/// Context-conditioned negative energy f(a; s_{t-L+1..t}). The induced policy is
/// p(a | ctx) proportional to exp(f); its normalizer is never formed.
struct EnergyPolicy {
  nn::Mlp net;
  int context_len = 1;
  int state_dim = 1;
  int action_dim = 1;
  double l2_energy_coef = 0.0;

  int input_dim() const { return context_len * state_dim + action_dim; }
};

/// Single-hidden-stack swish network with input width L*state_dim + action_dim.
EnergyPolicy make_energy_policy(int state_dim, int action_dim, int context_len,
                                const std::vector<int>& hidden, std::uint64_t seed,
                                double l2_energy_coef = 0.0);

/// Flattened network input for (ctx, action).
Vec policy_input(const EnergyPolicy& policy, const Context& ctx, const Vec& action);

double energy(const EnergyPolicy& policy, const Context& ctx, const Vec& action);

struct EnergyGrads {
  double value = 0.0;
  Vec action;
  Vec context;  // gradient with respect to the flattened context, oldest state first
  nn::Mlp params;
};

EnergyGrads energy_grads(const EnergyPolicy& policy, const Context& ctx, const Vec& action);

/// d f / d action only.
Vec energy_action_grad(const EnergyPolicy& policy, const Context& ctx, const Vec& action);

/// s' ~ N(g(s, a), sigma^2 I) with a fixed, non-learned sigma.
struct GaussianTransition {
  nn::Mlp net;
  int state_dim = 1;
  int action_dim = 1;
  double sigma = 0.05;
};

GaussianTransition make_gaussian_transition(int state_dim, int action_dim,
                                            const std::vector<int>& hidden, double sigma,
                                            std::uint64_t seed);

/// Exact linear transition s' = A s + B a + c written as a single linear layer.
GaussianTransition make_linear_transition(const Mat& state_matrix, const Mat& action_matrix,
                                          const Vec& offset, double sigma);

Vec transition_mean(const GaussianTransition& trans, const Vec& state, const Vec& action);

double transition_logprob(const GaussianTransition& trans, const Vec& state, const Vec& action,
                          const Vec& next_state);

struct TransitionGrads {
  double value = 0.0;
  Vec action;
  Vec state;
  nn::Mlp params;
};

/// Gradients of log N(next | g(s, a), sigma^2): mlp backward with cotangent (next - g) / sigma^2.
TransitionGrads transition_logprob_grads(const GaussianTransition& trans, const Vec& state,
                                         const Vec& action, const Vec& next_state);

/// Two transition models trained on the same data from different seeds.
struct TransitionEnsemble {
  std::array<GaussianTransition, 2> members;

  const GaussianTransition& primary() const { return members[0]; }
};

/// Euclidean distance between the two member means at (state, action).
double ensemble_disagreement(const TransitionEnsemble& ens, const Vec& state, const Vec& action);

struct Trajectory {
  std::vector<Vec> states;   // s_0 .. s_T
  std::vector<Vec> actions;  // a_0 .. a_{T-1}
};

/// Sum over t of f(a_t; ctx_t) + log p(s_{t+1} | s_t, a_t). The policy normalizers are
/// omitted, so values are only comparable for a fixed policy.
double trajectory_log_joint(const EnergyPolicy& policy, const GaussianTransition& trans,
                            const Trajectory& traj);

/// Everything needed to reload a trained model: policy, transition ensemble, their seeds
/// and the configuration that produced them.
struct ModelBundle {
  EnergyPolicy policy;
  TransitionEnsemble ensemble;
  std::uint64_t policy_seed = 0;
  std::array<std::uint64_t, 2> transition_seeds{0, 0};
  nlohmann::json config = nlohmann::json::object();
};

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& doc);
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

}  // namespace lanmdp
