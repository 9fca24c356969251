#include "lanmdp/oracle.hpp"

#include "lanmdp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace lanmdp::tabular {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t ipow(std::size_t base, int exp) {
  std::size_t out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

double log_sum_exp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  double z = 0.0;
  for (double x : xs) z += std::exp(x - m);
  return m + std::log(z);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

void check_sequence(const TabularNmdp& tab, std::span<const int> seq) {
  require(!seq.empty(), "state sequence must contain s_0");
  require(static_cast<int>(seq.size()) <= tab.horizon + 1, "state sequence longer than horizon + 1");
  for (int s : seq) require(s >= 0 && s < tab.n_states, "state index out of range");
}

void check_compatible(const TabularNmdp& a, const TabularNmdp& b) {
  require(a.n_states == b.n_states && a.n_actions == b.n_actions && a.horizon == b.horizon,
          "model and teacher must share state, action and horizon sizes");
}

// Prior and transition likelihood of every action at each step of seq.
struct StepTables {
  std::vector<std::vector<double>> prior;
  std::vector<std::vector<double>> lik;
  std::vector<std::size_t> ctx;
};

StepTables step_tables(const TabularNmdp& tab, std::span<const int> seq) {
  StepTables st;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const std::size_t c = tab.contexts.index(seq.subspan(0, t + 1));
    st.ctx.push_back(c);
    st.prior.push_back(tab.policy(c));
    std::vector<double> lik(static_cast<std::size_t>(tab.n_actions));
    for (int a = 0; a < tab.n_actions; ++a) lik[static_cast<std::size_t>(a)] = tab.p(seq[t], a, seq[t + 1]);
    st.lik.push_back(std::move(lik));
  }
  return st;
}

// Calls fn(code, digits) for every action sequence of the given length, a_0 most significant.
void for_each_action_seq(int n_actions, std::size_t len,
                         const std::function<void(std::size_t, const std::vector<int>&)>& fn) {
  const std::size_t total = ipow(static_cast<std::size_t>(n_actions), static_cast<int>(len));
  std::vector<int> digits(len, 0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rem = code;
    for (std::size_t t = len; t-- > 0;) {
      digits[t] = static_cast<int>(rem % static_cast<std::size_t>(n_actions));
      rem /= static_cast<std::size_t>(n_actions);
    }
    fn(code, digits);
  }
}

// Teacher next-state conditional and model log-rewards, indexed by context (length 1..T).
struct ValueTables {
  const TabularNmdp* model;
  std::vector<double> demo_next;  // [ctx][s']
  std::vector<double> reward;     // [ctx][s']
  std::vector<double> entropy;    // [ctx] entropy of the model policy
};

ValueTables value_tables(const TabularNmdp& model, const TabularNmdp& teacher) {
  check_compatible(model, teacher);
  ValueTables vt{&model, next_state_conditional(teacher), next_state_conditional(model), {}};
  for (double& r : vt.reward) r = safe_log(r);
  vt.entropy.resize(model.num_contexts());
  for (std::size_t c = 0; c < model.num_contexts(); ++c) {
    double h = 0.0;
    for (double p : model.policy(c)) {
      if (p > 0.0) h -= p * std::log(p);
    }
    vt.entropy[c] = h;
  }
  return vt;
}

struct PathSums {
  double reward = 0.0;          // E[sum of rewards from ctx to the horizon]
  double future_entropy = 0.0;  // E[sum of policy entropies at strict descendants of ctx]
};

// Forward enumeration of every complete teacher continuation of ctx.
PathSums path_sums(const ValueTables& vt, const SequenceIndex& ctx_index, int horizon,
                   std::span<const int> ctx) {
  const int n_states = vt.model->n_states;
  const int len = static_cast<int>(ctx.size());
  const int remaining = horizon + 1 - len;
  PathSums out;
  if (remaining <= 0) return out;
  const std::size_t total = ipow(static_cast<std::size_t>(n_states), remaining);
  std::vector<int> seq(ctx.begin(), ctx.end());
  seq.resize(static_cast<std::size_t>(horizon + 1));
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rem = code;
    for (int k = horizon; k >= len; --k) {
      seq[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(n_states));
      rem /= static_cast<std::size_t>(n_states);
    }
    double prob = 1.0;
    double rsum = 0.0;
    double hsum = 0.0;
    for (int k = len - 1; k < horizon; ++k) {
      const std::size_t c = ctx_index.index(std::span<const int>(seq).subspan(0, static_cast<std::size_t>(k) + 1));
      const int s_next = seq[static_cast<std::size_t>(k) + 1];
      const double p = vt.demo_next[c * static_cast<std::size_t>(n_states) + static_cast<std::size_t>(s_next)];
      prob *= p;
      if (prob == 0.0) break;
      rsum += vt.reward[c * static_cast<std::size_t>(n_states) + static_cast<std::size_t>(s_next)];
      if (k > len - 1) hsum += vt.entropy[c];
    }
    if (prob == 0.0) continue;
    if (!std::isfinite(rsum)) {
      throw ValidationError("teacher continuation has zero probability under the model");
    }
    out.reward += prob * rsum;
    out.future_entropy += prob * hsum;
  }
  return out;
}

// Backward value table over lengths 1..T+1 with an optional per-context entropy penalty.
std::vector<double> backward_values(const ValueTables& vt, const SequenceIndex& index, int horizon,
                                    double entropy_coef) {
  const auto n_states = static_cast<std::size_t>(vt.model->n_states);
  std::vector<double> V(index.size(), 0.0);
  for (int len = horizon; len >= 1; --len) {
    for (std::size_t c = index.begin_of_length(len); c < index.end_of_length(len); ++c) {
      double v = 0.0;
      for (std::size_t s = 0; s < n_states; ++s) {
        const double p = vt.demo_next[c * n_states + s];
        if (p == 0.0) continue;
        const double r = vt.reward[c * n_states + s];
        if (!std::isfinite(r)) {
          std::ostringstream msg;
          msg << "teacher next state " << s << " at context " << c
              << " has zero probability under the model";
          throw ValidationError(msg.str());
        }
        v += p * (r + V[index.child(c, len, static_cast<int>(s))]);
      }
      V[c] = v - entropy_coef * vt.entropy[c];
    }
  }
  return V;
}

}  // namespace

SequenceIndex::SequenceIndex(int n_states, int max_len) : n_states_(n_states), max_len_(max_len) {
  require(n_states >= 1 && max_len >= 1, "sequence index needs positive sizes");
  offsets_.assign(1, 0);
  for (int len = 1; len <= max_len; ++len) {
    offsets_.push_back(offsets_.back() + ipow(static_cast<std::size_t>(n_states), len));
  }
}

std::size_t SequenceIndex::index(std::span<const int> seq) const {
  require(!seq.empty() && static_cast<int>(seq.size()) <= max_len_,
          "sequence length outside the indexed range");
  std::size_t local = 0;
  for (int s : seq) {
    require(s >= 0 && s < n_states_, "state index out of range");
    local = local * static_cast<std::size_t>(n_states_) + static_cast<std::size_t>(s);
  }
  return offsets_[seq.size() - 1] + local;
}

std::size_t SequenceIndex::child(std::size_t parent_index, int parent_len, int next_state) const {
  const std::size_t local = parent_index - offsets_[static_cast<std::size_t>(parent_len - 1)];
  return offsets_[static_cast<std::size_t>(parent_len)] +
         local * static_cast<std::size_t>(n_states_) + static_cast<std::size_t>(next_state);
}

int SequenceIndex::length_of(std::size_t index) const {
  require(index < size(), "sequence index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  return static_cast<int>(it - offsets_.begin());
}

StateSeq SequenceIndex::sequence(std::size_t index) const {
  const int len = length_of(index);
  std::size_t local = index - offsets_[static_cast<std::size_t>(len - 1)];
  StateSeq seq(static_cast<std::size_t>(len));
  for (int k = len - 1; k >= 0; --k) {
    seq[static_cast<std::size_t>(k)] = static_cast<int>(local % static_cast<std::size_t>(n_states_));
    local /= static_cast<std::size_t>(n_states_);
  }
  return seq;
}

TabularNmdp::TabularNmdp(int s, int a, int t) : n_states(s), n_actions(a), horizon(t) {
  require(s >= 1 && s <= kMaxStates, "n_states must lie in [1, 8]");
  require(a >= 1 && a <= kMaxActions, "n_actions must lie in [1, 8]");
  require(t >= 1 && t <= kMaxHorizon, "horizon must lie in [1, 4]");
  contexts = SequenceIndex(s, t);
  transition.assign(static_cast<std::size_t>(s * a * s), 0.0);
  initial.assign(static_cast<std::size_t>(s), 0.0);
  policy_logits.assign(contexts.size() * static_cast<std::size_t>(a), 0.0);
}

std::vector<double> TabularNmdp::policy(std::size_t ctx) const {
  return softmax(std::span<const double>(policy_logits).subspan(ctx * static_cast<std::size_t>(n_actions),
                                                                static_cast<std::size_t>(n_actions)));
}

void TabularNmdp::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (n_states < 1 || n_states > kMaxStates) fail("n_states must lie in [1, 8]");
  if (n_actions < 1 || n_actions > kMaxActions) fail("n_actions must lie in [1, 8]");
  if (horizon < 1 || horizon > kMaxHorizon) fail("horizon must lie in [1, 4]");
  const auto S = static_cast<std::size_t>(n_states);
  const auto A = static_cast<std::size_t>(n_actions);
  if (transition.size() != S * A * S) fail("transition table has the wrong size");
  if (initial.size() != S) fail("initial distribution has the wrong size");
  if (policy_logits.size() != contexts.size() * A) fail("policy_logits has the wrong size");
  constexpr double kTol = 1e-9;
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double p_val = p(s, a, s2);
        if (!std::isfinite(p_val) || p_val < 0.0) {
          fail("transition(s=" + std::to_string(s) + ", a=" + std::to_string(a) +
               ") has a negative or non-finite entry");
        }
        total += p_val;
      }
      if (std::abs(total - 1.0) > kTol) {
        std::ostringstream msg;
        msg << "transition row (s=" << s << ", a=" << a << ") sums to " << total;
        fail(msg.str());
      }
    }
  }
  double init_total = 0.0;
  for (double p_val : initial) {
    if (!std::isfinite(p_val) || p_val < 0.0) fail("initial distribution has a negative entry");
    init_total += p_val;
  }
  if (std::abs(init_total - 1.0) > kTol) {
    std::ostringstream msg;
    msg << "initial distribution sums to " << init_total;
    fail(msg.str());
  }
  for (double l : policy_logits) {
    if (!std::isfinite(l)) fail("policy_logits contains a non-finite value");
  }
}

TabularNmdp random_instance(int n_states, int n_actions, int horizon, std::uint64_t seed,
                            double logit_scale) {
  TabularNmdp tab(n_states, n_actions, horizon);
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);  // normalized -> flat Dirichlet
  std::normal_distribution<double> normal(0.0, logit_scale);
  auto dirichlet_row = [&](double* row, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      row[i] = expo(rng) + 1e-12;
      total += row[i];
    }
    for (int i = 0; i < n; ++i) row[i] /= total;
  };
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) dirichlet_row(&tab.p(s, a, 0), n_states);
  }
  dirichlet_row(tab.initial.data(), n_states);
  for (double& l : tab.policy_logits) l = normal(rng);
  return tab;
}

nlohmann::json instance_to_json(const TabularNmdp& tab) {
  nlohmann::json trans = nlohmann::json::array();
  for (int s = 0; s < tab.n_states; ++s) {
    nlohmann::json by_action = nlohmann::json::array();
    for (int a = 0; a < tab.n_actions; ++a) {
      std::vector<double> row(static_cast<std::size_t>(tab.n_states));
      for (int s2 = 0; s2 < tab.n_states; ++s2) row[static_cast<std::size_t>(s2)] = tab.p(s, a, s2);
      by_action.push_back(row);
    }
    trans.push_back(std::move(by_action));
  }
  nlohmann::json logits = nlohmann::json::array();
  for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
    logits.push_back(std::vector<double>(
        tab.policy_logits.begin() + static_cast<std::ptrdiff_t>(c * static_cast<std::size_t>(tab.n_actions)),
        tab.policy_logits.begin() + static_cast<std::ptrdiff_t>((c + 1) * static_cast<std::size_t>(tab.n_actions))));
  }
  return {{"format", "lanmdp.tabular"}, {"version", 1},
          {"n_states", tab.n_states},   {"n_actions", tab.n_actions},
          {"horizon", tab.horizon},     {"transition", std::move(trans)},
          {"initial", tab.initial},     {"policy_logits", std::move(logits)}};
}

TabularNmdp instance_from_json(const nlohmann::json& doc) {
  TabularNmdp tab;
  try {
    if (doc.value("format", std::string()) != "lanmdp.tabular") {
      throw ValidationError("not a tabular instance (format must be \"lanmdp.tabular\")");
    }
    if (doc.value("version", 0) != 1) throw ValidationError("unsupported tabular instance version");
    const int S = doc.at("n_states").get<int>();
    const int A = doc.at("n_actions").get<int>();
    const int T = doc.at("horizon").get<int>();
    if (S < 1 || S > TabularNmdp::kMaxStates || A < 1 || A > TabularNmdp::kMaxActions || T < 1 ||
        T > TabularNmdp::kMaxHorizon) {
      throw ValidationError("instance sizes outside n_states<=8, n_actions<=8, horizon<=4");
    }
    tab = TabularNmdp(S, A, T);
    const auto& trans = doc.at("transition");
    if (trans.size() != static_cast<std::size_t>(S)) throw ValidationError("transition must have n_states blocks");
    for (int s = 0; s < S; ++s) {
      const auto& block = trans[static_cast<std::size_t>(s)];
      if (block.size() != static_cast<std::size_t>(A)) {
        throw ValidationError("transition[" + std::to_string(s) + "] must have n_actions rows");
      }
      for (int a = 0; a < A; ++a) {
        const auto row = block[static_cast<std::size_t>(a)].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(S)) {
          throw ValidationError("transition[" + std::to_string(s) + "][" + std::to_string(a) +
                                "] must have n_states entries");
        }
        for (int s2 = 0; s2 < S; ++s2) tab.p(s, a, s2) = row[static_cast<std::size_t>(s2)];
      }
    }
    tab.initial = doc.at("initial").get<std::vector<double>>();
    const auto& logits = doc.at("policy_logits");
    if (logits.size() != tab.num_contexts()) {
      throw ValidationError("policy_logits must have one row per context (" +
                            std::to_string(tab.num_contexts()) + ")");
    }
    for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
      const auto row = logits[c].get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(A)) {
        throw ValidationError("policy_logits[" + std::to_string(c) + "] must have n_actions entries");
      }
      for (int a = 0; a < A; ++a) tab.logit(c, a) = row[static_cast<std::size_t>(a)];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tabular instance: ") + e.what());
  }
  tab.validate();
  return tab;
}

double exact_log_marginal(const TabularNmdp& tab, std::span<const int> seq) {
  check_sequence(tab, seq);
  const double log_init = safe_log(tab.initial[static_cast<std::size_t>(seq[0])]);
  if (seq.size() == 1) return log_init;
  const StepTables st = step_tables(tab, seq);
  double total = 0.0;
  for_each_action_seq(tab.n_actions, seq.size() - 1, [&](std::size_t, const std::vector<int>& acts) {
    double prod = 1.0;
    for (std::size_t t = 0; t < acts.size(); ++t) {
      const auto a = static_cast<std::size_t>(acts[t]);
      prod *= st.prior[t][a] * st.lik[t][a];
    }
    total += prod;
  });
  if (total <= 0.0 || log_init == kNegInf) return kNegInf;
  return log_init + std::log(total);
}

PosteriorTables exact_posterior(const TabularNmdp& tab, std::span<const int> seq) {
  check_sequence(tab, seq);
  require(seq.size() >= 2, "posterior needs at least one transition");
  const StepTables st = step_tables(tab, seq);
  const std::size_t steps = seq.size() - 1;
  const auto A = static_cast<std::size_t>(tab.n_actions);
  PosteriorTables post;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> row(A);
    double z = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      row[a] = st.prior[t][a] * st.lik[t][a];
      z += row[a];
    }
    if (z <= 0.0) {
      throw ValidationError("state sequence has zero probability (transition " + std::to_string(t) +
                            " is impossible under every action)");
    }
    for (double& x : row) x /= z;
    post.per_step.push_back(std::move(row));
  }
  post.joint.assign(ipow(A, static_cast<int>(steps)), 0.0);
  double z = 0.0;
  for_each_action_seq(tab.n_actions, steps, [&](std::size_t code, const std::vector<int>& acts) {
    double prod = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const auto a = static_cast<std::size_t>(acts[t]);
      prod *= st.prior[t][a] * st.lik[t][a];
    }
    post.joint[code] = prod;
    z += prod;
  });
  for (double& x : post.joint) x /= z;
  post.joint_marginals.assign(steps, std::vector<double>(A, 0.0));
  for_each_action_seq(tab.n_actions, steps, [&](std::size_t code, const std::vector<int>& acts) {
    for (std::size_t t = 0; t < steps; ++t) {
      post.joint_marginals[t][static_cast<std::size_t>(acts[t])] += post.joint[code];
    }
  });
  return post;
}

double factorization_deviation(const PosteriorTables& post) {
  const std::size_t steps = post.per_step.size();
  const int A = static_cast<int>(post.per_step.front().size());
  double worst = 0.0;
  for_each_action_seq(A, steps, [&](std::size_t code, const std::vector<int>& acts) {
    double prod = 1.0;
    for (std::size_t t = 0; t < steps; ++t) prod *= post.per_step[t][static_cast<std::size_t>(acts[t])];
    worst = std::max(worst, std::abs(post.joint[code] - prod));
  });
  return worst;
}

std::vector<double> exact_policy_gradient(const TabularNmdp& tab, std::span<const int> seq) {
  std::vector<double> grad(tab.policy_logits.size(), 0.0);
  if (seq.size() < 2) return grad;
  const PosteriorTables post = exact_posterior(tab, seq);
  const auto A = static_cast<std::size_t>(tab.n_actions);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const std::size_t c = tab.contexts.index(seq.subspan(0, t + 1));
    const std::vector<double> prior = tab.policy(c);
    for (std::size_t a = 0; a < A; ++a) grad[c * A + a] += post.joint_marginals[t][a] - prior[a];
  }
  return grad;
}

std::vector<double> finite_difference_policy_gradient(const TabularNmdp& tab,
                                                      std::span<const int> seq, double eps) {
  require(eps > 0.0, "finite-difference step must be positive");
  std::vector<double> grad(tab.policy_logits.size(), 0.0);
  TabularNmdp work = tab;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const std::size_t c = tab.contexts.index(seq.subspan(0, t + 1));
    for (int a = 0; a < tab.n_actions; ++a) {
      const double orig = work.logit(c, a);
      work.logit(c, a) = orig + eps;
      const double up = exact_log_marginal(work, seq);
      work.logit(c, a) = orig - eps;
      const double down = exact_log_marginal(work, seq);
      work.logit(c, a) = orig;
      grad[c * static_cast<std::size_t>(tab.n_actions) + static_cast<std::size_t>(a)] =
          (up - down) / (2.0 * eps);
    }
  }
  return grad;
}

double importance_identity_check(const TabularNmdp& tab, std::span<const int> seq) {
  const PosteriorTables post = exact_posterior(tab, seq);
  double worst = 0.0;
  for (std::size_t t = 0; t < post.per_step.size(); ++t) {
    for (std::size_t a = 0; a < post.per_step[t].size(); ++a) {
      worst = std::max(worst, std::abs(post.per_step[t][a] - post.joint_marginals[t][a]));
    }
  }
  return worst;
}

namespace {

// n prior draws at step t with their self-normalized transition weights.
std::pair<std::vector<int>, std::vector<double>> weighted_prior_draws(const TabularNmdp& tab,
                                                                      std::span<const int> seq,
                                                                      std::size_t t, std::size_t n,
                                                                      Rng& rng) {
  const std::size_t c = tab.contexts.index(seq.subspan(0, t + 1));
  const std::vector<double> prior = tab.policy(c);
  std::discrete_distribution<int> draw(prior.begin(), prior.end());
  std::vector<int> acts(n);
  std::vector<double> log_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    acts[i] = draw(rng);
    log_w[i] = safe_log(tab.p(seq[t], acts[i], seq[t + 1]));
  }
  return {std::move(acts), normalize_log_weights(log_w)};
}

}  // namespace

std::vector<double> importance_posterior_estimate(const TabularNmdp& tab,
                                                  std::span<const int> seq, int t,
                                                  std::size_t n, Rng& rng) {
  check_sequence(tab, seq);
  require(t >= 0 && static_cast<std::size_t>(t) + 1 < seq.size(), "step index outside sequence");
  require(n >= 1, "need at least one prior draw");
  const auto [acts, w] = weighted_prior_draws(tab, seq, static_cast<std::size_t>(t), n, rng);
  std::vector<double> hist(static_cast<std::size_t>(tab.n_actions), 0.0);
  for (std::size_t i = 0; i < n; ++i) hist[static_cast<std::size_t>(acts[i])] += w[i];
  return hist;
}

std::vector<double> sampled_policy_gradient(const TabularNmdp& tab, std::span<const int> seq,
                                            std::size_t n, Rng& rng) {
  check_sequence(tab, seq);
  require(n >= 1, "need at least one prior draw");
  std::vector<double> grad(tab.policy_logits.size(), 0.0);
  const auto A = static_cast<std::size_t>(tab.n_actions);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const std::size_t c = tab.contexts.index(seq.subspan(0, t + 1));
    const auto [acts, w] = weighted_prior_draws(tab, seq, t, n, rng);
    const double uniform = 1.0 / static_cast<double>(n);
    // The same draws serve the posterior term (weights w_i) and the prior term (1/n each).
    for (std::size_t i = 0; i < n; ++i) grad[c * A + static_cast<std::size_t>(acts[i])] += w[i] - uniform;
  }
  return grad;
}

std::vector<double> next_state_conditional(const TabularNmdp& tab) {
  const auto S = static_cast<std::size_t>(tab.n_states);
  std::vector<double> out(tab.num_contexts() * S, 0.0);
  for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
    const int s_t = tab.contexts.sequence(c).back();
    const std::vector<double> pi = tab.policy(c);
    for (int a = 0; a < tab.n_actions; ++a) {
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        out[c * S + s2] += pi[static_cast<std::size_t>(a)] * tab.p(s_t, a, static_cast<int>(s2));
      }
    }
  }
  return out;
}

std::vector<double> sequence_distribution(const TabularNmdp& tab) {
  const auto S = static_cast<std::size_t>(tab.n_states);
  const std::vector<double> cond = next_state_conditional(tab);
  std::vector<double> probs = tab.initial;
  for (int len = 1; len <= tab.horizon; ++len) {
    const std::size_t base = tab.contexts.begin_of_length(len);
    std::vector<double> next(probs.size() * S);
    for (std::size_t local = 0; local < probs.size(); ++local) {
      for (std::size_t s2 = 0; s2 < S; ++s2) next[local * S + s2] = probs[local] * cond[(base + local) * S + s2];
    }
    probs = std::move(next);
  }
  return probs;
}

double sequence_tv(const TabularNmdp& a, const TabularNmdp& b) {
  check_compatible(a, b);
  const std::vector<double> pa = sequence_distribution(a);
  const std::vector<double> pb = sequence_distribution(b);
  double tv = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) tv += std::abs(pa[i] - pb[i]);
  return 0.5 * tv;
}

SoftValues soft_values(const TabularNmdp& model, const TabularNmdp& teacher) {
  const ValueTables vt = value_tables(model, teacher);
  SoftValues out;
  out.index = SequenceIndex(model.n_states, model.horizon + 1);
  out.V = backward_values(vt, out.index, model.horizon, 0.0);
  const auto A = static_cast<std::size_t>(model.n_actions);
  out.Q.resize(model.num_contexts() * A);
  for (std::size_t c = 0; c < model.num_contexts(); ++c) {
    const std::vector<double> pi = model.policy(c);
    // sum_s' p*(s'|ctx) [r + log p_alpha(a|ctx) + V(ctx, s')] = V(ctx) + log p_alpha(a|ctx)
    for (std::size_t a = 0; a < A; ++a) out.Q[c * A + a] = out.V[c] + safe_log(pi[a]);
  }
  out.reward = vt.reward;
  out.demo_next = vt.demo_next;
  return out;
}

double value_by_path_sum(const TabularNmdp& model, const TabularNmdp& teacher,
                         std::span<const int> ctx) {
  check_sequence(model, ctx);
  const ValueTables vt = value_tables(model, teacher);
  return path_sums(vt, model.contexts, model.horizon, ctx).reward;
}

TheoremReport theorem_identities(const TabularNmdp& model, const TabularNmdp& teacher) {
  const ValueTables vt = value_tables(model, teacher);
  const ValueTables vt_star = value_tables(teacher, teacher);
  const SequenceIndex index(model.n_states, model.horizon + 1);
  const std::vector<double> V_star = backward_values(vt_star, index, model.horizon, 0.0);
  const std::vector<double> V_model = backward_values(vt, index, model.horizon, 0.0);
  // Entropy-augmented backup: W(ctx) = E_pi[Q(a; ctx)] with Q carrying log pi.
  const std::vector<double> W = backward_values(vt, index, model.horizon, 1.0);
  const auto S = static_cast<std::size_t>(model.n_states);
  const auto A = static_cast<std::size_t>(model.n_actions);

  TheoremReport rep;
  for (std::size_t c = 0; c < model.num_contexts(); ++c) {
    const int len = index.length_of(c);
    const StateSeq ctx = index.sequence(c);
    const std::vector<double> pi = model.policy(c);

    // Q(a; ctx) built from the model's reward and log-policy on top of V* of the teacher.
    double backup = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double p = vt.demo_next[c * S + s];
      if (p > 0.0) backup += p * (vt.reward[c * S + s] + V_star[index.child(c, len, static_cast<int>(s))]);
    }
    for (std::size_t a = 0; a < A; ++a) {
      const double log_pi = safe_log(pi[a]);
      const double q = backup + log_pi;
      rep.q_minus_v_deviation = std::max(rep.q_minus_v_deviation, std::abs(q - V_star[c] - log_pi));
    }

    const PathSums ps = path_sums(vt, model.contexts, model.horizon, ctx);
    rep.value_path_sum_deviation = std::max(rep.value_path_sum_deviation, std::abs(V_model[c] - ps.reward));
    const double rhs = ps.reward - vt.entropy[c] - ps.future_entropy;
    rep.entropy_decomposition_deviation = std::max(rep.entropy_decomposition_deviation, std::abs(W[c] - rhs));
  }
  return rep;
}

SoftQResult soft_q_iteration(const TabularNmdp& model, const TabularNmdp& teacher, int iterations,
                             double tol) {
  require(iterations >= 1, "soft-Q iteration needs at least one sweep");
  const ValueTables vt = value_tables(model, teacher);
  const SequenceIndex index(model.n_states, model.horizon + 1);
  const auto S = static_cast<std::size_t>(model.n_states);
  const auto A = static_cast<std::size_t>(model.n_actions);
  const std::size_t n_ctx = model.num_contexts();

  std::vector<double> log_pi(n_ctx * A);
  for (std::size_t c = 0; c < n_ctx; ++c) {
    const std::vector<double> pi = model.policy(c);
    for (std::size_t a = 0; a < A; ++a) log_pi[c * A + a] = safe_log(pi[a]);
  }

  SoftQResult res;
  res.Q.assign(n_ctx * A, 0.0);
  std::vector<double> v_soft(index.size(), 0.0);
  std::vector<double> q_next(n_ctx * A);
  for (int sweep = 1; sweep <= iterations; ++sweep) {
    for (std::size_t c = 0; c < n_ctx; ++c) {
      v_soft[c] = log_sum_exp(std::span<const double>(res.Q).subspan(c * A, A));
    }
    for (std::size_t c = 0; c < n_ctx; ++c) {
      const int len = index.length_of(c);
      double backup = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double p = vt.demo_next[c * S + s];
        if (p > 0.0) backup += p * (vt.reward[c * S + s] + v_soft[index.child(c, len, static_cast<int>(s))]);
      }
      for (std::size_t a = 0; a < A; ++a) q_next[c * A + a] = backup + log_pi[c * A + a];
    }
    double change = 0.0;
    for (std::size_t i = 0; i < q_next.size(); ++i) change = std::max(change, std::abs(q_next[i] - res.Q[i]));
    res.Q.swap(q_next);
    res.sweeps = sweep;
    res.last_change = change;
    if (!std::isfinite(change)) throw NumericalError("soft-Q iteration produced a non-finite table");
    if (change < tol) break;
  }
  res.policy.resize(n_ctx * A);
  for (std::size_t c = 0; c < n_ctx; ++c) {
    const std::vector<double> p = softmax(std::span<const double>(res.Q).subspan(c * A, A));
    std::copy(p.begin(), p.end(), res.policy.begin() + static_cast<std::ptrdiff_t>(c * A));
  }
  return res;
}

TabularNmdp fit_policy_by_marginal_likelihood(const TabularNmdp& init, const TabularNmdp& teacher,
                                              int iterations, double learning_rate) {
  check_compatible(init, teacher);
  require(iterations >= 0 && learning_rate > 0.0, "invalid fitting schedule");
  const SequenceIndex full(init.n_states, init.horizon + 1);
  const std::vector<double> target = sequence_distribution(teacher);
  const std::size_t base = full.begin_of_length(init.horizon + 1);
  TabularNmdp model = init;
  std::vector<double> grad(model.policy_logits.size());
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (target[i] == 0.0) continue;
      const StateSeq seq = full.sequence(base + i);
      const std::vector<double> g = exact_policy_gradient(model, seq);
      for (std::size_t k = 0; k < g.size(); ++k) grad[k] += target[i] * g[k];
    }
    for (std::size_t k = 0; k < grad.size(); ++k) model.policy_logits[k] += learning_rate * grad[k];
  }
  return model;
}

std::vector<CheckResult> run_identity_suite(const TabularNmdp& tab, std::uint64_t seed) {
  tab.validate();
  // Sequences to test: all full-length ones when few, otherwise draws from the model.
  const SequenceIndex full(tab.n_states, tab.horizon + 1);
  const std::vector<double> probs = sequence_distribution(tab);
  const std::size_t base = full.begin_of_length(tab.horizon + 1);
  std::vector<StateSeq> seqs;
  constexpr std::size_t kEnumerateCap = 64;
  constexpr std::size_t kSampled = 16;
  if (probs.size() <= kEnumerateCap) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) seqs.push_back(full.sequence(base + i));
    }
  } else {
    Rng rng(seed);
    std::discrete_distribution<std::size_t> draw(probs.begin(), probs.end());
    for (std::size_t k = 0; k < kSampled; ++k) seqs.push_back(full.sequence(base + draw(rng)));
  }

  double fact = 0.0;
  double imp = 0.0;
  double grad_rel = 0.0;
  constexpr std::size_t kFdSequences = 8;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const PosteriorTables post = exact_posterior(tab, seqs[k]);
    fact = std::max(fact, factorization_deviation(post));
    imp = std::max(imp, importance_identity_check(tab, seqs[k]));
    if (k < kFdSequences) {
      const std::vector<double> exact = exact_policy_gradient(tab, seqs[k]);
      const std::vector<double> fd = finite_difference_policy_gradient(tab, seqs[k]);
      double diff = 0.0;
      double norm = 0.0;
      for (std::size_t i = 0; i < exact.size(); ++i) {
        diff += (exact[i] - fd[i]) * (exact[i] - fd[i]);
        norm += exact[i] * exact[i];
      }
      // Relative error, falling back to absolute when the gradient itself vanishes.
      grad_rel = std::max(grad_rel, std::sqrt(diff) / std::max(std::sqrt(norm), 1e-3));
    }
  }

  const TheoremReport thm = theorem_identities(tab, tab);
  const SoftQResult sq = soft_q_iteration(tab, tab, 10 * (tab.horizon + 1));
  const SoftQResult sq_extra = soft_q_iteration(tab, tab, tab.horizon + 2, 0.0);
  double tv = 0.0;
  const auto A = static_cast<std::size_t>(tab.n_actions);
  for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
    const std::vector<double> pi = tab.policy(c);
    double d = 0.0;
    for (std::size_t a = 0; a < A; ++a) d += std::abs(sq.policy[c * A + a] - pi[a]);
    tv = std::max(tv, 0.5 * d);
  }

  auto check = [](std::string name, double dev, double tol) {
    return CheckResult{std::move(name), dev, tol, dev <= tol};
  };
  return {
      check("posterior_factorization", fact, 1e-12),
      check("importance_identity", imp, 1e-12),
      check("policy_gradient_vs_finite_difference", grad_rel, 1e-6),
      check("value_backward_vs_path_sum", thm.value_path_sum_deviation, 1e-10),
      check("q_minus_v_equals_log_policy", thm.q_minus_v_deviation, 1e-10),
      check("entropy_decomposition", thm.entropy_decomposition_deviation, 1e-10),
      check("soft_q_converges_within_horizon_plus_one",
            sq.sweeps <= tab.horizon + 1 ? sq.last_change : std::numeric_limits<double>::infinity(), 1e-10),
      check("soft_q_idempotent", sq_extra.last_change, 1e-12),
      check("soft_q_recovers_policy_tv", tv, 1e-8),
  };
}

}  // namespace lanmdp::tabular
