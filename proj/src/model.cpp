#include "lanmdp/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

namespace lanmdp {

namespace {

void check_dim(const Vec& v, int expected, const char* what) {
  if (v.size() != expected) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(v.size()) +
                                " entries, expected " + std::to_string(expected));
  }
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

Context make_context(std::span<const Vec> history, std::size_t t, int length) {
  require(length >= 1, "context length must be at least 1");
  require(t < history.size(), "context end index beyond history");
  Context ctx;
  ctx.states.reserve(static_cast<std::size_t>(length));
  for (int k = length - 1; k >= 0; --k) {
    const auto back = static_cast<std::size_t>(k);
    ctx.states.push_back(back > t ? history[0] : history[t - back]);
  }
  return ctx;
}

EnergyPolicy make_energy_policy(int state_dim, int action_dim, int context_len,
                                const std::vector<int>& hidden, std::uint64_t seed,
                                double l2_energy_coef) {
  require(state_dim >= 1 && action_dim >= 1, "state and action dims must be positive");
  require(context_len >= 1, "context length must be at least 1");
  require(l2_energy_coef >= 0.0, "energy regularizer must be non-negative");
  std::vector<int> dims{context_len * state_dim + action_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  EnergyPolicy policy;
  policy.net = nn::mlp_init(std::move(dims), nn::Activation::swish, seed);
  policy.context_len = context_len;
  policy.state_dim = state_dim;
  policy.action_dim = action_dim;
  policy.l2_energy_coef = l2_energy_coef;
  return policy;
}

Vec policy_input(const EnergyPolicy& policy, const Context& ctx, const Vec& action) {
  if (ctx.length() != static_cast<std::size_t>(policy.context_len)) {
    throw std::invalid_argument("context has " + std::to_string(ctx.length()) +
                                " states, policy expects " +
                                std::to_string(policy.context_len));
  }
  check_dim(action, policy.action_dim, "action");
  Vec x(policy.input_dim());
  Eigen::Index off = 0;
  for (const Vec& s : ctx.states) {
    check_dim(s, policy.state_dim, "context state");
    x.segment(off, policy.state_dim) = s;
    off += policy.state_dim;
  }
  x.segment(off, policy.action_dim) = action;
  return x;
}

double energy(const EnergyPolicy& policy, const Context& ctx, const Vec& action) {
  return nn::forward(policy.net, policy_input(policy, ctx, action))[0];
}

EnergyGrads energy_grads(const EnergyPolicy& policy, const Context& ctx, const Vec& action) {
  const Vec x = policy_input(policy, ctx, action);
  nn::MlpGrad g = nn::backward(policy.net, x, Vec::Ones(1));
  EnergyGrads out;
  out.value = nn::forward(policy.net, x)[0];
  const Eigen::Index ctx_width = policy.context_len * policy.state_dim;
  out.context = g.input.head(ctx_width);
  out.action = g.input.tail(policy.action_dim);
  out.params = std::move(g.params);
  return out;
}

Vec energy_action_grad(const EnergyPolicy& policy, const Context& ctx, const Vec& action) {
  Vec grad;
  nn::scalar_value_and_input_grad(policy.net, policy_input(policy, ctx, action), grad);
  return grad.tail(policy.action_dim);
}

GaussianTransition make_gaussian_transition(int state_dim, int action_dim,
                                            const std::vector<int>& hidden, double sigma,
                                            std::uint64_t seed) {
  require(state_dim >= 1 && action_dim >= 1, "state and action dims must be positive");
  require(sigma > 0.0, "transition sigma must be positive");
  std::vector<int> dims{state_dim + action_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(state_dim);
  GaussianTransition trans;
  trans.net = nn::mlp_init(std::move(dims), nn::Activation::leaky_relu, seed);
  trans.state_dim = state_dim;
  trans.action_dim = action_dim;
  trans.sigma = sigma;
  return trans;
}

GaussianTransition make_linear_transition(const Mat& state_matrix, const Mat& action_matrix,
                                          const Vec& offset, double sigma) {
  require(sigma > 0.0, "transition sigma must be positive");
  const auto sd = static_cast<int>(state_matrix.rows());
  const auto ad = static_cast<int>(action_matrix.cols());
  require(state_matrix.cols() == sd && action_matrix.rows() == sd && offset.size() == sd,
          "linear transition blocks have inconsistent shapes");
  GaussianTransition trans;
  trans.state_dim = sd;
  trans.action_dim = ad;
  trans.sigma = sigma;
  trans.net.layer_dims = {sd + ad, sd};
  trans.net.activation = nn::Activation::leaky_relu;
  Mat w(sd, sd + ad);
  w << state_matrix, action_matrix;
  trans.net.weights.push_back(std::move(w));
  trans.net.biases.push_back(offset);
  return trans;
}

Vec transition_mean(const GaussianTransition& trans, const Vec& state, const Vec& action) {
  check_dim(state, trans.state_dim, "state");
  check_dim(action, trans.action_dim, "action");
  return nn::forward(trans.net, concat(state, action));
}

double transition_logprob(const GaussianTransition& trans, const Vec& state, const Vec& action,
                          const Vec& next_state) {
  check_dim(next_state, trans.state_dim, "next state");
  const Vec resid = next_state - transition_mean(trans, state, action);
  const double var = trans.sigma * trans.sigma;
  return -0.5 * trans.state_dim * std::log(2.0 * std::numbers::pi * var) -
         resid.squaredNorm() / (2.0 * var);
}

TransitionGrads transition_logprob_grads(const GaussianTransition& trans, const Vec& state,
                                         const Vec& action, const Vec& next_state) {
  check_dim(state, trans.state_dim, "state");
  check_dim(action, trans.action_dim, "action");
  check_dim(next_state, trans.state_dim, "next state");
  const Vec x = concat(state, action);
  const Vec mean = nn::forward(trans.net, x);
  const double var = trans.sigma * trans.sigma;
  const Vec resid = next_state - mean;
  nn::MlpGrad g = nn::backward(trans.net, x, resid / var);
  TransitionGrads out;
  out.value = -0.5 * trans.state_dim * std::log(2.0 * std::numbers::pi * var) -
              resid.squaredNorm() / (2.0 * var);
  out.state = g.input.head(trans.state_dim);
  out.action = g.input.tail(trans.action_dim);
  out.params = std::move(g.params);
  return out;
}

double ensemble_disagreement(const TransitionEnsemble& ens, const Vec& state, const Vec& action) {
  return (transition_mean(ens.members[0], state, action) -
          transition_mean(ens.members[1], state, action))
      .norm();
}

double trajectory_log_joint(const EnergyPolicy& policy, const GaussianTransition& trans,
                            const Trajectory& traj) {
  if (traj.states.empty()) throw std::invalid_argument("trajectory has no states");
  if (traj.actions.size() + 1 != traj.states.size()) {
    throw std::invalid_argument("trajectory needs exactly one action per transition");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const Context ctx = make_context(traj.states, t, policy.context_len);
    total += energy(policy, ctx, traj.actions[t]);
    total += transition_logprob(trans, traj.states[t], traj.actions[t], traj.states[t + 1]);
  }
  return total;
}

namespace {

nlohmann::json transition_to_json(const GaussianTransition& trans) {
  return {{"net", nn::to_json(trans.net)},
          {"state_dim", trans.state_dim},
          {"action_dim", trans.action_dim},
          {"sigma", trans.sigma}};
}

GaussianTransition transition_from_json(const nlohmann::json& doc) {
  GaussianTransition trans;
  trans.net = nn::mlp_from_json(doc.at("net"));
  trans.state_dim = doc.at("state_dim").get<int>();
  trans.action_dim = doc.at("action_dim").get<int>();
  trans.sigma = doc.at("sigma").get<double>();
  if (trans.sigma <= 0.0) throw ValidationError("transition sigma must be positive");
  if (trans.net.input_dim() != trans.state_dim + trans.action_dim ||
      trans.net.output_dim() != trans.state_dim) {
    throw ValidationError("transition network shape does not match its state/action dims");
  }
  return trans;
}

}  // namespace

nlohmann::json bundle_to_json(const ModelBundle& bundle) {
  const EnergyPolicy& p = bundle.policy;
  return {{"format", "lanmdp.model"},
          {"version", 1},
          {"state_dim", p.state_dim},
          {"action_dim", p.action_dim},
          {"context_len", p.context_len},
          {"l2_energy_coef", p.l2_energy_coef},
          {"sigma", bundle.ensemble.primary().sigma},
          {"seeds", {{"policy", bundle.policy_seed}, {"transition", bundle.transition_seeds}}},
          {"policy", nn::to_json(p.net)},
          {"transition", {transition_to_json(bundle.ensemble.members[0]),
                          transition_to_json(bundle.ensemble.members[1])}},
          {"config", bundle.config}};
}

ModelBundle bundle_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string()) != "lanmdp.model") {
      throw ValidationError("not a model bundle (format must be \"lanmdp.model\")");
    }
    if (doc.value("version", 0) != 1) throw ValidationError("unsupported model bundle version");
    ModelBundle b;
    b.policy.net = nn::mlp_from_json(doc.at("policy"));
    b.policy.state_dim = doc.at("state_dim").get<int>();
    b.policy.action_dim = doc.at("action_dim").get<int>();
    b.policy.context_len = doc.at("context_len").get<int>();
    b.policy.l2_energy_coef = doc.value("l2_energy_coef", 0.0);
    if (b.policy.net.input_dim() != b.policy.input_dim() || b.policy.net.output_dim() != 1) {
      throw ValidationError("policy network shape does not match context_len/state_dim/action_dim");
    }
    const auto& trans = doc.at("transition");
    if (!trans.is_array() || trans.size() != 2) {
      throw ValidationError("model bundle must hold exactly two transition members");
    }
    for (std::size_t i = 0; i < 2; ++i) {
      b.ensemble.members[i] = transition_from_json(trans[i]);
      if (b.ensemble.members[i].state_dim != b.policy.state_dim ||
          b.ensemble.members[i].action_dim != b.policy.action_dim) {
        throw ValidationError("transition member dims disagree with the policy");
      }
    }
    if (doc.contains("seeds")) {
      b.policy_seed = doc["seeds"].value("policy", std::uint64_t{0});
      if (doc["seeds"].contains("transition")) {
        b.transition_seeds = doc["seeds"]["transition"].get<std::array<std::uint64_t, 2>>();
      }
    }
    b.config = doc.value("config", nlohmann::json::object());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model bundle: ") + e.what());
  }
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << bundle_to_json(bundle).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model bundle '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return bundle_from_json(doc);
}

}  // namespace lanmdp
