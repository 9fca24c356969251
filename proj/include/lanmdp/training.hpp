#pragma once

#include "lanmdp/common.hpp"
#include "lanmdp/model.hpp"
#include "lanmdp/nn.hpp"
#include "lanmdp/planning.hpp"
#include "lanmdp/sampling.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lanmdp {

struct DemoSegment {
  Context ctx;
  Vec next_state;
};

struct DemoDataset {
  std::vector<std::vector<Vec>> trajectories;  // state sequences s_0 .. s_T
  std::vector<DemoSegment> segments;
};

/// One segment per transition t in [0, T-1]; windows before t = L-1 repeat s_0.
std::vector<DemoSegment> segment_demos(const std::vector<std::vector<Vec>>& trajs, int context_len);
DemoDataset make_dataset(std::vector<std::vector<Vec>> trajs, int context_len);

struct TransitionSample {
  Vec state;
  Vec action;
  Vec next_state;
};

/// Fixed-capacity FIFO of self-interaction transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(TransitionSample t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  /// i = 0 is the oldest surviving entry.
  const TransitionSample& operator[](std::size_t i) const;
  /// m indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // position of the oldest entry once full
  std::vector<TransitionSample> data_;
};

enum class PosteriorMode { mcmc, importance };

std::string posterior_mode_name(PosteriorMode mode);
PosteriorMode posterior_mode_from_name(const std::string& name);

struct TrainConfig {
  // model
  int context_len = 4;
  std::vector<int> policy_hidden;  // empty -> one layer of width 4 * context_len
  std::vector<int> transition_hidden{32, 32};
  double sigma = 0.05;
  double l2_energy_coef = 0.0;
  double energy_output_init_scale = 1.0;  // multiplies the initial output-layer weights
  bool implanted_transition = false;  // use TrainEnvironment::implanted instead of learning

  // optimization
  int iterations = 3000;
  double lr_policy = 1e-4;
  double lr_transition = 1e-3;
  int batch_size = 64;
  double w_beta = 0.0;
  PosteriorMode posterior_mode = PosteriorMode::importance;
  int n_samples = 4;
  LangevinConfig sampler;  // prior / posterior chains during training
  bool ensemble_filter = false;
  double keep_fraction = 0.5;

  // self-interaction
  int prefill_transitions = 2000;
  std::size_t replay_capacity = 100000;
  int pretrain_steps = 2000;
  int transition_batch = 64;
  int rollout_interval = 100;
  int rollouts_per_collection = 10;
  int transition_steps_per_collection = 50;

  // evaluation
  int eval_interval = 100;
  int eval_rollouts = 200;
  LangevinConfig eval_sampler{20, 1.0, 1.0, 0.1, 1.0, true};

  std::uint64_t seed = 0;

  std::vector<int> resolved_policy_hidden() const;
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

/// Environment hooks the training loop needs.
struct TrainEnvironment {
  int state_dim = 1;
  int action_dim = 1;
  int horizon = 1;                    // rollout length in steps
  StepFn step;
  std::vector<Vec> start_states;      // rollouts start from one of these
  std::optional<GaussianTransition> implanted;  // analytic transition, when available
};

/// Gradient of a minimizer-style loss for the policy over a minibatch.
struct PolicyGradResult {
  nn::Mlp grad;
  double surrogate = 0.0;   // batch mean of (posterior mean f - prior mean f)
  std::size_t used = 0;     // segments contributing
  std::size_t skipped = 0;  // segments dropped because every importance weight underflowed
  std::vector<TransitionSample> posterior_actions;  // one posterior draw per used segment
};

PolicyGradResult policy_grad(const EnergyPolicy& policy, const TransitionEnsemble& ens,
                             std::span<const DemoSegment> batch, const TrainConfig& cfg, Rng& rng);

/// Ascent direction of w_beta * mean demo log p + (1 - w_beta) * mean replay log p,
/// negated for a minimizer. An empty side hands its weight to the other.
nn::Mlp transition_grad(const GaussianTransition& trans,
                        std::span<const TransitionSample> demo_batch,
                        std::span<const TransitionSample> replay_batch, double w_beta);

/// Runs the prior policy from random start states, pushing every transition.
std::vector<Trajectory> collect_rollouts(const EnergyPolicy& policy, const TrainEnvironment& env,
                                         ReplayBuffer& replay, int n_episodes,
                                         const LangevinConfig& cfg, Rng& rng);

/// Independent minibatch NLL fits of each member; member i shuffles with seeds[i].
void pretrain_transition(TransitionEnsemble& ens, const ReplayBuffer& replay, int steps, double lr,
                         int batch_size, std::array<std::uint64_t, 2> seeds);

/// Mean negative log-likelihood over the given transitions.
double transition_nll(const GaussianTransition& trans, std::span<const TransitionSample> data);

struct MetricsRow {
  int step = 0;
  std::optional<double> acceptance_rate;
  std::optional<double> mean_residual;
  double policy_loss = 0.0;
  double transition_nll = 0.0;
  std::size_t buffer_size = 0;
};

struct MetricsLog {
  nlohmann::json config = nlohmann::json::object();
  std::vector<MetricsRow> rows;

  /// CSV with a leading "# config: ..." comment line, then the column header.
  std::string to_csv() const;
};

/// Task metrics for the current policy: (acceptance rate, mean residual).
using TaskEvaluator = std::function<std::pair<std::optional<double>, std::optional<double>>(
    const EnergyPolicy&, Rng&)>;

struct TrainResult {
  ModelBundle bundle;
  MetricsLog log;
  std::size_t skipped_segments = 0;
};

/// Raised when parameters go non-finite; carries the last checkpoint with finite weights.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, int step, std::shared_ptr<const TrainResult> checkpoint)
      : NumericalError(what), step_(step), checkpoint_(std::move(checkpoint)) {}
  int step() const { return step_; }
  const TrainResult& checkpoint() const { return *checkpoint_; }

 private:
  int step_;
  std::shared_ptr<const TrainResult> checkpoint_;
};

TrainResult train(const TrainConfig& cfg, const DemoDataset& demos, const TrainEnvironment& env,
                  const TaskEvaluator& evaluator = {});

/// Behavior-cloning baseline: Gaussian policy with an MLP mean of ctx and a fixed scale.
struct BcPolicy {
  nn::Mlp net;
  int context_len = 1;
  int state_dim = 1;
  int action_dim = 1;
  double scale = 1.0;
};

struct BcConfig {
  int context_len = 1;
  std::vector<int> hidden;  // empty -> one layer of width 4 * context_len
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

/// Mean-squared-error fit of ctx -> action on demos that carry actions.
BcPolicy train_bc(const std::vector<Trajectory>& demos, const BcConfig& cfg);

Vec bc_mean(const BcPolicy& policy, const Context& ctx);

/// Rollout of the BC policy; actions are mean + noise * scale * N(0, I).
Trajectory execute_bc(const BcPolicy& policy, const StepFn& env_step, const Vec& s0, int horizon,
                      double noise, Rng& rng);

}  // namespace lanmdp
