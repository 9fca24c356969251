#pragma once

#include "lanmdp/common.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

// Exact enumeration on small finite models. Everything here is brute force by intent:
// the tables are tiny and every quantity is computed by summing over all action or
// state sequences, so results serve as ground truth for the sampling-based code.
namespace lanmdp::tabular {

using StateSeq = std::vector<int>;

/// Bijection between state sequences of length 1..max_len and [0, size()).
/// Sequences are grouped by length; within a length s_0 is the most significant digit.
class SequenceIndex {
 public:
  SequenceIndex() = default;
  SequenceIndex(int n_states, int max_len);

  std::size_t size() const { return offsets_.back(); }
  std::size_t index(std::span<const int> seq) const;
  /// Index of seq extended by one more state.
  std::size_t child(std::size_t parent_index, int parent_len, int next_state) const;
  StateSeq sequence(std::size_t index) const;
  int length_of(std::size_t index) const;
  /// All sequences of exactly this length, in index order.
  std::size_t begin_of_length(int len) const { return offsets_[static_cast<std::size_t>(len - 1)]; }
  std::size_t end_of_length(int len) const { return offsets_[static_cast<std::size_t>(len)]; }

 private:
  int n_states_ = 0;
  int max_len_ = 0;
  std::vector<std::size_t> offsets_{0};
};

/// Finite non-Markov decision process with a history-conditioned tabular policy.
/// policy_logits play the role of the negative energy f(a; s_{0:t}) for every
/// context s_{0:t}, t = 0..horizon-1.
struct TabularNmdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
  std::vector<double> transition;     // [s][a][s'] row-major
  std::vector<double> initial;        // [s]
  std::vector<double> policy_logits;  // [context][a]
  SequenceIndex contexts;             // sequences of length 1..horizon

  static constexpr int kMaxStates = 8;
  static constexpr int kMaxActions = 8;
  static constexpr int kMaxHorizon = 4;

  TabularNmdp() = default;
  TabularNmdp(int n_states, int n_actions, int horizon);

  double p(int s, int a, int s_next) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s_next];
  }
  double& p(int s, int a, int s_next) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s_next];
  }
  double& logit(std::size_t ctx, int a) { return policy_logits[ctx * n_actions + a]; }
  double logit(std::size_t ctx, int a) const { return policy_logits[ctx * n_actions + a]; }

  std::vector<double> policy(std::size_t ctx) const;  // softmax of the context's logits
  std::size_t num_contexts() const { return contexts.size(); }

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

TabularNmdp random_instance(int n_states, int n_actions, int horizon, std::uint64_t seed,
                            double logit_scale = 1.0);

nlohmann::json instance_to_json(const TabularNmdp& tab);
TabularNmdp instance_from_json(const nlohmann::json& doc);

/// log p(s_{0:T}) by summing the joint over every action sequence. -inf for impossible
/// sequences.
double exact_log_marginal(const TabularNmdp& tab, std::span<const int> seq);

struct PosteriorTables {
  std::vector<std::vector<double>> per_step;  // [t][a] = p(a_t | s_{0:t+1}), closed form
  std::vector<double> joint;                  // p(a_{0:T-1} | s_{0:T}), a_0 most significant
  std::vector<std::vector<double>> joint_marginals;  // [t][a] marginals of joint
};

/// Throws ValidationError for a zero-probability sequence.
PosteriorTables exact_posterior(const TabularNmdp& tab, std::span<const int> seq);

/// max over action sequences |joint - prod_t per_step|.
double factorization_deviation(const PosteriorTables& post);

/// Exact d log p(seq) / d logits: posterior expectation minus prior expectation of the
/// logit indicator, summed over the steps visiting each context.
std::vector<double> exact_policy_gradient(const TabularNmdp& tab, std::span<const int> seq);

/// Central finite differences of exact_log_marginal. Only contexts along seq are perturbed;
/// every other entry is left at zero since the marginal does not depend on it.
std::vector<double> finite_difference_policy_gradient(const TabularNmdp& tab,
                                                      std::span<const int> seq,
                                                      double eps = 1e-5);

/// max |p(a_t | s_{0:t+1}) computed as prior * likelihood / normaliser - joint marginal|.
double importance_identity_check(const TabularNmdp& tab, std::span<const int> seq);

/// Self-normalized importance estimate of p(a_t | s_{0:t+1}) from n categorical prior draws.
std::vector<double> importance_posterior_estimate(const TabularNmdp& tab,
                                                  std::span<const int> seq, int t,
                                                  std::size_t n, Rng& rng);

/// Shared-sample estimate of the policy gradient: per step, n prior draws, weights from
/// the transition likelihood; the logit indicator plays the role of d f / d alpha.
std::vector<double> sampled_policy_gradient(const TabularNmdp& tab, std::span<const int> seq,
                                            std::size_t n, Rng& rng);

/// Exact conditional p(s_{t+1} | s_{0:t}) of a model, over all contexts.
std::vector<double> next_state_conditional(const TabularNmdp& tab);

/// Probability of every full-length state sequence (length horizon+1), in SequenceIndex order.
std::vector<double> sequence_distribution(const TabularNmdp& tab);

double sequence_tv(const TabularNmdp& a, const TabularNmdp& b);

struct SoftValues {
  SequenceIndex index;          // sequences of length 1..horizon+1
  std::vector<double> V;        // [seq]; zero on length horizon+1
  std::vector<double> Q;        // [context][a] over contexts of length 1..horizon
  std::vector<double> reward;   // [context][s'] = r_alpha(s', ctx)
  std::vector<double> demo_next;  // [context][s'] = p*(s' | ctx)
};

/// Backward induction of V and Q under the teacher's p*(s' | s_{0:t}) with rewards
/// r_alpha(s', ctx) = log sum_a p_alpha(a | ctx) p(s' | s_t, a) from `model`.
SoftValues soft_values(const TabularNmdp& model, const TabularNmdp& teacher);

/// V(ctx) from the path-sum definition: expected accumulated reward over all teacher
/// continuations of ctx.
double value_by_path_sum(const TabularNmdp& model, const TabularNmdp& teacher,
                         std::span<const int> ctx);

struct TheoremReport {
  double q_minus_v_deviation = 0.0;       // max |Q - V* - log p_alpha|
  double entropy_decomposition_deviation = 0.0;
  double value_path_sum_deviation = 0.0;  // backward induction vs path sum
};

TheoremReport theorem_identities(const TabularNmdp& model, const TabularNmdp& teacher);

struct SoftQResult {
  std::vector<double> Q;       // [context][a]
  std::vector<double> policy;  // [context][a] softmax(Q)
  int sweeps = 0;
  double last_change = 0.0;
};

/// Synchronous soft-Q sweeps from Q = 0 until the table moves by less than tol or the
/// iteration budget is spent.
SoftQResult soft_q_iteration(const TabularNmdp& model, const TabularNmdp& teacher, int iterations,
                             double tol = 1e-10);

/// Gradient ascent on E_{p*}[log p_theta(s_{0:T})] over the policy logits of `init`.
TabularNmdp fit_policy_by_marginal_likelihood(const TabularNmdp& init, const TabularNmdp& teacher,
                                              int iterations, double learning_rate);

struct CheckResult {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Every exact identity on one instance (the instance is its own teacher).
std::vector<CheckResult> run_identity_suite(const TabularNmdp& tab, std::uint64_t seed = 0);

}  // namespace lanmdp::tabular
