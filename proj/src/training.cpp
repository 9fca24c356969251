#include "lanmdp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace lanmdp {

std::vector<DemoSegment> segment_demos(const std::vector<std::vector<Vec>>& trajs, int context_len) {
  require(context_len >= 1, "context length must be at least 1");
  std::vector<DemoSegment> out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& states = trajs[i];
    if (states.size() < 2) {
      throw std::invalid_argument("demo trajectory " + std::to_string(i) + " has fewer than 2 states");
    }
    for (std::size_t t = 0; t + 1 < states.size(); ++t) {
      out.push_back(DemoSegment{make_context(states, t, context_len), states[t + 1]});
    }
  }
  return out;
}

DemoDataset make_dataset(std::vector<std::vector<Vec>> trajs, int context_len) {
  DemoDataset ds;
  ds.segments = segment_demos(trajs, context_len);
  ds.trajectories = std::move(trajs);
  return ds;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "replay capacity must be positive");
}

void ReplayBuffer::push(TransitionSample t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const TransitionSample& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t m, Rng& rng) const {
  if (data_.empty()) throw std::invalid_argument("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx(m);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::string posterior_mode_name(PosteriorMode mode) {
  return mode == PosteriorMode::mcmc ? "mcmc" : "importance";
}

PosteriorMode posterior_mode_from_name(const std::string& name) {
  if (name == "mcmc") return PosteriorMode::mcmc;
  if (name == "importance") return PosteriorMode::importance;
  throw std::invalid_argument("unknown posterior mode '" + name + "' (expected mcmc or importance)");
}

std::vector<int> TrainConfig::resolved_policy_hidden() const {
  return policy_hidden.empty() ? std::vector<int>{4 * context_len} : policy_hidden;
}

void TrainConfig::validate() const {
  require(context_len >= 1, "context_len must be at least 1");
  require(sigma > 0.0, "sigma must be positive");
  require(l2_energy_coef >= 0.0, "l2_energy_coef must be non-negative");
  require(energy_output_init_scale >= 0.0, "energy_output_init_scale must be non-negative");
  require(iterations >= 0, "iterations must be non-negative");
  require(lr_policy > 0.0 && lr_transition > 0.0, "learning rates must be positive");
  require(batch_size >= 1 && transition_batch >= 1, "batch sizes must be positive");
  require(w_beta >= 0.0 && w_beta <= 1.0, "w_beta must lie in [0, 1]");
  require(n_samples >= 2, "n_samples must be at least 2");
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must lie in (0, 1]");
  require(prefill_transitions >= 0 && pretrain_steps >= 0, "prefill and pretrain counts must be non-negative");
  require(replay_capacity >= 1, "replay_capacity must be positive");
  require(rollout_interval >= 1 && eval_interval >= 1, "intervals must be positive");
  require(rollouts_per_collection >= 0 && transition_steps_per_collection >= 0,
          "rollout and transition step counts must be non-negative");
  require(eval_rollouts >= 1, "eval_rollouts must be positive");
  for (int h : policy_hidden) require(h >= 1, "policy hidden widths must be positive");
  for (int h : transition_hidden) require(h >= 1, "transition hidden widths must be positive");
  sampler.validate();
  eval_sampler.validate();
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"context_len", cfg.context_len},
          {"policy_hidden", cfg.resolved_policy_hidden()},
          {"transition_hidden", cfg.transition_hidden},
          {"sigma", cfg.sigma},
          {"l2_energy_coef", cfg.l2_energy_coef},
          {"energy_output_init_scale", cfg.energy_output_init_scale},
          {"implanted_transition", cfg.implanted_transition},
          {"iterations", cfg.iterations},
          {"lr_policy", cfg.lr_policy},
          {"lr_transition", cfg.lr_transition},
          {"batch_size", cfg.batch_size},
          {"w_beta", cfg.w_beta},
          {"posterior_mode", posterior_mode_name(cfg.posterior_mode)},
          {"n_samples", cfg.n_samples},
          {"sampler", langevin_to_json(cfg.sampler)},
          {"ensemble_filter", cfg.ensemble_filter},
          {"keep_fraction", cfg.keep_fraction},
          {"prefill_transitions", cfg.prefill_transitions},
          {"replay_capacity", cfg.replay_capacity},
          {"pretrain_steps", cfg.pretrain_steps},
          {"transition_batch", cfg.transition_batch},
          {"rollout_interval", cfg.rollout_interval},
          {"rollouts_per_collection", cfg.rollouts_per_collection},
          {"transition_steps_per_collection", cfg.transition_steps_per_collection},
          {"eval_interval", cfg.eval_interval},
          {"eval_rollouts", cfg.eval_rollouts},
          {"eval_sampler", langevin_to_json(cfg.eval_sampler)},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig cfg) {
  if (!doc.is_object()) throw ValidationError("training configuration must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "context_len") cfg.context_len = v.get<int>();
      else if (key == "policy_hidden") cfg.policy_hidden = v.get<std::vector<int>>();
      else if (key == "transition_hidden") cfg.transition_hidden = v.get<std::vector<int>>();
      else if (key == "sigma") cfg.sigma = v.get<double>();
      else if (key == "l2_energy_coef") cfg.l2_energy_coef = v.get<double>();
      else if (key == "energy_output_init_scale") cfg.energy_output_init_scale = v.get<double>();
      else if (key == "implanted_transition") cfg.implanted_transition = v.get<bool>();
      else if (key == "iterations") cfg.iterations = v.get<int>();
      else if (key == "lr_policy") cfg.lr_policy = v.get<double>();
      else if (key == "lr_transition") cfg.lr_transition = v.get<double>();
      else if (key == "batch_size") cfg.batch_size = v.get<int>();
      else if (key == "w_beta") cfg.w_beta = v.get<double>();
      else if (key == "posterior_mode") cfg.posterior_mode = posterior_mode_from_name(v.get<std::string>());
      else if (key == "n_samples") cfg.n_samples = v.get<int>();
      else if (key == "sampler") cfg.sampler = langevin_from_json(v, cfg.sampler);
      else if (key == "ensemble_filter") cfg.ensemble_filter = v.get<bool>();
      else if (key == "keep_fraction") cfg.keep_fraction = v.get<double>();
      else if (key == "prefill_transitions") cfg.prefill_transitions = v.get<int>();
      else if (key == "replay_capacity") cfg.replay_capacity = v.get<std::size_t>();
      else if (key == "pretrain_steps") cfg.pretrain_steps = v.get<int>();
      else if (key == "transition_batch") cfg.transition_batch = v.get<int>();
      else if (key == "rollout_interval") cfg.rollout_interval = v.get<int>();
      else if (key == "rollouts_per_collection") cfg.rollouts_per_collection = v.get<int>();
      else if (key == "transition_steps_per_collection") cfg.transition_steps_per_collection = v.get<int>();
      else if (key == "eval_interval") cfg.eval_interval = v.get<int>();
      else if (key == "eval_rollouts") cfg.eval_rollouts = v.get<int>();
      else if (key == "eval_sampler") cfg.eval_sampler = langevin_from_json(v, cfg.eval_sampler);
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else throw ValidationError("unknown training key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad training configuration: ") + e.what());
  }
  // The default policy width follows context_len unless set explicitly.
  if (!doc.contains("policy_hidden")) cfg.policy_hidden.clear();
  cfg.validate();
  return cfg;
}

PolicyGradResult policy_grad(const EnergyPolicy& policy, const TransitionEnsemble& ens,
                             std::span<const DemoSegment> batch, const TrainConfig& cfg, Rng& rng) {
  require(!batch.empty(), "policy gradient needs a non-empty batch");
  const auto n = static_cast<std::size_t>(cfg.n_samples);
  const double coef = policy.l2_energy_coef;
  PolicyGradResult res;
  res.grad = policy.net.zeros_like();

  for (const DemoSegment& seg : batch) {
    const Vec& state = seg.ctx.current();
    std::vector<Vec> prior = sample_prior(policy, seg.ctx, cfg.sampler, n, rng);
    std::vector<Vec> post_actions;
    std::vector<double> post_w;
    bool shared = false;  // posterior weights index the prior samples themselves

    if (cfg.posterior_mode == PosteriorMode::importance) {
      std::vector<Vec> cands =
          cfg.ensemble_filter ? filter_by_disagreement(ens, seg.ctx, prior, cfg.keep_fraction) : prior;
      WeightedActions wa;
      try {
        wa = weight_by_transition(ens.primary(), state, seg.next_state, std::move(cands));
      } catch (const NumericalError&) {
        ++res.skipped;
        continue;
      }
      shared = !cfg.ensemble_filter;
      post_actions = std::move(wa.actions);
      post_w = std::move(wa.weights);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        post_actions.push_back(sample_posterior_mcmc(policy, ens.primary(), seg.ctx, seg.next_state,
                                                     cfg.sampler, rng));
      }
      post_w.assign(n, 1.0 / static_cast<double>(n));
    }

    // Minimizer direction: +prior term, -posterior term, + d/dalpha coef * f^2 on both.
    const double inv_n = 1.0 / static_cast<double>(n);
    double post_f = 0.0;
    double prior_f = 0.0;
    if (shared) {
      for (std::size_t i = 0; i < n; ++i) {
        const EnergyGrads eg = energy_grads(policy, seg.ctx, prior[i]);
        const double c = (inv_n - post_w[i]) + 2.0 * coef * eg.value * (inv_n + post_w[i]);
        res.grad.add_scaled(eg.params, c);
        post_f += post_w[i] * eg.value;
        prior_f += inv_n * eg.value;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const EnergyGrads eg = energy_grads(policy, seg.ctx, prior[i]);
        res.grad.add_scaled(eg.params, inv_n * (1.0 + 2.0 * coef * eg.value));
        prior_f += inv_n * eg.value;
      }
      for (std::size_t i = 0; i < post_actions.size(); ++i) {
        const EnergyGrads eg = energy_grads(policy, seg.ctx, post_actions[i]);
        res.grad.add_scaled(eg.params, post_w[i] * (-1.0 + 2.0 * coef * eg.value));
        post_f += post_w[i] * eg.value;
      }
    }
    res.surrogate += post_f - prior_f;

    std::discrete_distribution<std::size_t> pick(post_w.begin(), post_w.end());
    res.posterior_actions.push_back(TransitionSample{state, post_actions[pick(rng)], seg.next_state});
    ++res.used;
  }
  if (res.used > 0) {
    res.grad.scale(1.0 / static_cast<double>(res.used));
    res.surrogate /= static_cast<double>(res.used);
  }
  return res;
}

nn::Mlp transition_grad(const GaussianTransition& trans,
                        std::span<const TransitionSample> demo_batch,
                        std::span<const TransitionSample> replay_batch, double w_beta) {
  require(w_beta >= 0.0 && w_beta <= 1.0, "w_beta must lie in [0, 1]");
  if (demo_batch.empty() && replay_batch.empty()) {
    throw std::invalid_argument("transition gradient needs demo or replay data");
  }
  double w_demo = w_beta;
  double w_replay = 1.0 - w_beta;
  if (demo_batch.empty()) {
    w_demo = 0.0;
    w_replay = 1.0;
  } else if (replay_batch.empty()) {
    w_demo = 1.0;
    w_replay = 0.0;
  }
  nn::Mlp grad = trans.net.zeros_like();
  auto accumulate = [&](std::span<const TransitionSample> data, double weight) {
    if (data.empty() || weight == 0.0) return;
    const double c = -weight / static_cast<double>(data.size());
    for (const TransitionSample& t : data) {
      grad.add_scaled(transition_logprob_grads(trans, t.state, t.action, t.next_state).params, c);
    }
  };
  accumulate(demo_batch, w_demo);
  accumulate(replay_batch, w_replay);
  return grad;
}

std::vector<Trajectory> collect_rollouts(const EnergyPolicy& policy, const TrainEnvironment& env,
                                         ReplayBuffer& replay, int n_episodes,
                                         const LangevinConfig& cfg, Rng& rng) {
  require(n_episodes >= 0, "episode count must be non-negative");
  std::vector<Trajectory> out;
  if (n_episodes == 0) return out;
  require(!env.start_states.empty(), "environment has no start states");
  std::uniform_int_distribution<std::size_t> pick(0, env.start_states.size() - 1);
  for (int e = 0; e < n_episodes; ++e) {
    Trajectory traj = execute_policy(policy, env.step, env.start_states[pick(rng)], env.horizon, cfg, rng);
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      replay.push(TransitionSample{traj.states[t], traj.actions[t], traj.states[t + 1]});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

namespace {

std::vector<TransitionSample> gather(const ReplayBuffer& replay, const std::vector<std::size_t>& idx) {
  std::vector<TransitionSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(replay[i]);
  return out;
}

}  // namespace

void pretrain_transition(TransitionEnsemble& ens, const ReplayBuffer& replay, int steps, double lr,
                         int batch_size, std::array<std::uint64_t, 2> seeds) {
  require(steps >= 0, "pretrain steps must be non-negative");
  if (replay.empty()) throw std::invalid_argument("cannot pretrain the transition on an empty buffer");
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    GaussianTransition& member = ens.members[m];
    nn::AdamState opt(member.net, nn::AdamConfig{lr});
    Rng rng(seeds[m]);
    for (int s = 0; s < steps; ++s) {
      const auto batch = gather(replay, replay.sample_indices(static_cast<std::size_t>(batch_size), rng));
      nn::optim_step(opt, member.net, transition_grad(member, {}, batch, 0.0));
    }
  }
}

double transition_nll(const GaussianTransition& trans, std::span<const TransitionSample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const TransitionSample& t : data) total -= transition_logprob(trans, t.state, t.action, t.next_state);
  return total / static_cast<double>(data.size());
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string MetricsLog::to_csv() const {
  std::ostringstream out;
  out << "# config: " << config.dump() << '\n';
  out << "step,acceptance_rate,mean_residual,policy_loss,transition_nll,buffer_size\n";
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << (r.acceptance_rate ? format_number(*r.acceptance_rate) : "") << ','
        << (r.mean_residual ? format_number(*r.mean_residual) : "") << ','
        << format_number(r.policy_loss) << ',' << format_number(r.transition_nll) << ','
        << r.buffer_size << '\n';
  }
  return out.str();
}

TrainResult train(const TrainConfig& cfg, const DemoDataset& demos, const TrainEnvironment& env,
                  const TaskEvaluator& evaluator) {
  cfg.validate();
  if (demos.segments.empty()) throw std::invalid_argument("training needs at least one demo segment");
  require(env.step != nullptr, "environment step function missing");
  require(env.horizon >= 1, "environment horizon must be positive");
  const int sd = env.state_dim;
  const int ad = env.action_dim;
  require(demos.segments.front().next_state.size() == sd, "demo states do not match environment state_dim");

  TrainResult result;
  ModelBundle& bundle = result.bundle;
  bundle.config = train_config_to_json(cfg);
  bundle.policy_seed = mix_seed(cfg.seed, 1);
  bundle.transition_seeds = {mix_seed(cfg.seed, 2), mix_seed(cfg.seed, 3)};
  bundle.policy = make_energy_policy(sd, ad, cfg.context_len, cfg.resolved_policy_hidden(),
                                     bundle.policy_seed, cfg.l2_energy_coef);
  EnergyPolicy& policy = bundle.policy;
  policy.net.weights.back() *= cfg.energy_output_init_scale;
  TransitionEnsemble& ens = bundle.ensemble;
  if (cfg.implanted_transition) {
    if (!env.implanted) throw std::invalid_argument("environment offers no implanted transition");
    ens.members = {*env.implanted, *env.implanted};
  } else {
    for (std::size_t m = 0; m < 2; ++m) {
      ens.members[m] = make_gaussian_transition(sd, ad, cfg.transition_hidden, cfg.sigma,
                                                bundle.transition_seeds[m]);
    }
  }

  ReplayBuffer replay(cfg.replay_capacity);
  {
    // Random-policy prefill: uniform actions in [-1, 1] from demo-like start states.
    Rng prefill_rng(mix_seed(cfg.seed, 4));
    require(!env.start_states.empty() || cfg.prefill_transitions == 0, "environment has no start states");
    std::uniform_int_distribution<std::size_t> pick(0, env.start_states.empty() ? 0 : env.start_states.size() - 1);
    int pushed = 0;
    while (pushed < cfg.prefill_transitions) {
      Vec s = env.start_states[pick(prefill_rng)];
      for (int t = 0; t < env.horizon && pushed < cfg.prefill_transitions; ++t, ++pushed) {
        Vec a = initial_action(ad, prefill_rng);
        Vec next = env.step(s, a);
        replay.push(TransitionSample{s, std::move(a), next});
        s = std::move(next);
      }
    }
  }
  if (!cfg.implanted_transition && cfg.pretrain_steps > 0) {
    pretrain_transition(ens, replay, cfg.pretrain_steps, cfg.lr_transition, cfg.transition_batch,
                        {mix_seed(cfg.seed, 5), mix_seed(cfg.seed, 6)});
  }

  MetricsLog& log = result.log;
  log.config = bundle.config;
  nn::AdamState policy_opt(policy.net, nn::AdamConfig{cfg.lr_policy});
  std::array<nn::AdamState, 2> trans_opt{nn::AdamState(ens.members[0].net, nn::AdamConfig{cfg.lr_transition}),
                                         nn::AdamState(ens.members[1].net, nn::AdamConfig{cfg.lr_transition})};
  Rng rng(mix_seed(cfg.seed, 7));
  std::array<Rng, 2> trans_rng{Rng(mix_seed(cfg.seed, 8)), Rng(mix_seed(cfg.seed, 9))};
  std::uniform_int_distribution<std::size_t> pick_segment(0, demos.segments.size() - 1);

  auto record = [&](int step, double loss) {
    MetricsRow row;
    row.step = step;
    row.policy_loss = loss;
    if (evaluator) {
      // Evaluation draws from its own stream so it never perturbs the training sequence.
      Rng eval_rng(mix_seed(cfg.seed, 1'000'000 + static_cast<std::uint64_t>(step)));
      std::tie(row.acceptance_rate, row.mean_residual) = evaluator(policy, eval_rng);
    }
    const std::size_t n_hold = std::min<std::size_t>(replay.size(), 1000);
    std::vector<TransitionSample> hold;
    hold.reserve(n_hold);
    for (std::size_t i = replay.size() - n_hold; i < replay.size(); ++i) hold.push_back(replay[i]);
    row.transition_nll = transition_nll(ens.primary(), hold);
    row.buffer_size = replay.size();
    log.rows.push_back(row);
  };

  record(0, 0.0);
  auto last_good = std::make_shared<TrainResult>(result);
  std::vector<TransitionSample> demo_post;
  double loss_sum = 0.0;
  int loss_count = 0;

  auto diverged = [&](int step, const std::string& why) {
    throw TrainingDiverged("training diverged at iteration " + std::to_string(step) + ": " + why, step,
                           last_good);
  };

  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<DemoSegment> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(demos.segments[pick_segment(rng)]);

    PolicyGradResult pg;
    try {
      pg = policy_grad(policy, ens, batch, cfg, rng);
      if (pg.used > 0) nn::optim_step(policy_opt, policy.net, pg.grad);
    } catch (const NumericalError& e) {
      diverged(it, e.what());
    }
    if (!policy.net.all_finite()) diverged(it, "non-finite policy parameters");
    result.skipped_segments += pg.skipped;
    if (pg.used > 0) {
      loss_sum += -pg.surrogate;
      ++loss_count;
      demo_post = std::move(pg.posterior_actions);
    }

    if (!cfg.implanted_transition && it % cfg.rollout_interval == 0) {
      collect_rollouts(policy, env, replay, cfg.rollouts_per_collection, cfg.sampler, rng);
      const std::span<const TransitionSample> demo_term =
          cfg.w_beta > 0.0 ? std::span<const TransitionSample>(demo_post) : std::span<const TransitionSample>();
      for (int s = 0; s < cfg.transition_steps_per_collection; ++s) {
        for (std::size_t m = 0; m < 2; ++m) {
          const auto rb = gather(replay, replay.sample_indices(static_cast<std::size_t>(cfg.transition_batch),
                                                               trans_rng[m]));
          try {
            nn::optim_step(trans_opt[m], ens.members[m].net,
                           transition_grad(ens.members[m], demo_term, rb, cfg.w_beta));
          } catch (const NumericalError& e) {
            diverged(it, e.what());
          }
          if (!ens.members[m].net.all_finite()) diverged(it, "non-finite transition parameters");
        }
      }
    }

    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      record(it, loss_count > 0 ? loss_sum / loss_count : 0.0);
      loss_sum = 0.0;
      loss_count = 0;
      last_good = std::make_shared<TrainResult>(result);
    }
  }
  return result;
}

namespace {

Vec flatten_context(const Context& ctx, int state_dim) {
  Vec x(static_cast<Eigen::Index>(ctx.length()) * state_dim);
  for (std::size_t i = 0; i < ctx.length(); ++i) x.segment(static_cast<Eigen::Index>(i) * state_dim, state_dim) = ctx.states[i];
  return x;
}

}  // namespace

BcPolicy train_bc(const std::vector<Trajectory>& demos, const BcConfig& cfg) {
  require(cfg.context_len >= 1, "context length must be at least 1");
  require(cfg.epochs >= 0 && cfg.batch_size >= 1 && cfg.lr > 0.0, "invalid BC schedule");
  if (demos.empty()) throw std::invalid_argument("behavior cloning needs demos");
  std::vector<Vec> inputs;
  std::vector<Vec> targets;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const Trajectory& d = demos[i];
    if (d.states.size() < 2 || d.actions.size() + 1 != d.states.size()) {
      throw ValidationError("demo " + std::to_string(i) + " lacks recoverable actions");
    }
    for (std::size_t t = 0; t < d.actions.size(); ++t) {
      inputs.push_back(flatten_context(make_context(d.states, t, cfg.context_len),
                                       static_cast<int>(d.states[0].size())));
      targets.push_back(d.actions[t]);
    }
  }
  BcPolicy bc;
  bc.context_len = cfg.context_len;
  bc.state_dim = static_cast<int>(demos[0].states[0].size());
  bc.action_dim = static_cast<int>(demos[0].actions[0].size());
  std::vector<int> dims{cfg.context_len * bc.state_dim};
  const std::vector<int> hidden = cfg.hidden.empty() ? std::vector<int>{4 * cfg.context_len} : cfg.hidden;
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(bc.action_dim);
  bc.net = nn::mlp_init(dims, nn::Activation::swish, mix_seed(cfg.seed, 1));

  nn::AdamState opt(bc.net, nn::AdamConfig{cfg.lr});
  Rng rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      nn::Mlp grad = bc.net.zeros_like();
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Vec& x = inputs[order[k]];
        const Vec resid = nn::forward(bc.net, x) - targets[order[k]];
        grad.add_scaled(nn::backward(bc.net, x, resid).params, inv);
      }
      nn::optim_step(opt, bc.net, grad);
    }
  }
  return bc;
}

Vec bc_mean(const BcPolicy& policy, const Context& ctx) {
  require(ctx.length() == static_cast<std::size_t>(policy.context_len), "BC context has the wrong length");
  return nn::forward(policy.net, flatten_context(ctx, policy.state_dim));
}

Trajectory execute_bc(const BcPolicy& policy, const StepFn& env_step, const Vec& s0, int horizon,
                      double noise, Rng& rng) {
  require(horizon >= 0, "horizon must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory traj;
  traj.states.push_back(s0);
  for (int t = 0; t < horizon; ++t) {
    Vec a = bc_mean(policy, make_context(traj.states, static_cast<std::size_t>(t), policy.context_len));
    if (noise > 0.0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise * policy.scale * normal(rng);
    }
    traj.states.push_back(env_step(traj.states.back(), a));
    traj.actions.push_back(std::move(a));
  }
  return traj;
}

}  // namespace lanmdp
