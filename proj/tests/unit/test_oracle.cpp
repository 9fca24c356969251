#include <doctest.h>

#include "lanmdp/oracle.hpp"

#include <cmath>
#include <limits>

using namespace lanmdp;
using namespace lanmdp::tabular;

namespace {

// s' = (s + a) mod S, uniform initial, zero logits.
TabularNmdp shift_instance(int S, int A, int T) {
  TabularNmdp tab(S, A, T);
  std::fill(tab.transition.begin(), tab.transition.end(), 0.0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) tab.p(s, a, (s + a) % S) = 1.0;
  }
  std::fill(tab.initial.begin(), tab.initial.end(), 1.0 / S);
  std::fill(tab.policy_logits.begin(), tab.policy_logits.end(), 0.0);
  return tab;
}

// Transition ignores the action.
TabularNmdp action_free(int S, int A, int T, std::uint64_t seed) {
  TabularNmdp tab = random_instance(S, A, T, seed);
  for (int s = 0; s < S; ++s) {
    for (int a = 1; a < A; ++a) {
      for (int s2 = 0; s2 < S; ++s2) tab.p(s, a, s2) = tab.p(s, 0, s2);
    }
  }
  return tab;
}

double softmax_at(const TabularNmdp& tab, std::size_t ctx, int a) { return tab.policy(ctx)[static_cast<std::size_t>(a)]; }

}  // namespace

TEST_CASE("sequence index is a bijection grouped by length") {
  const SequenceIndex idx(3, 3);
  CHECK(idx.size() == 3 + 9 + 27);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const StateSeq s = idx.sequence(i);
    CHECK(idx.index(s) == i);
    CHECK(idx.length_of(i) == static_cast<int>(s.size()));
    if (s.size() < 3) {
      StateSeq ext = s;
      ext.push_back(2);
      CHECK(idx.child(i, static_cast<int>(s.size()), 2) == idx.index(ext));
    }
  }
  CHECK(idx.begin_of_length(2) == 3);
  CHECK(idx.end_of_length(2) == 12);
}

TEST_CASE("instance validation and json round trip") {
  const TabularNmdp tab = random_instance(3, 2, 2, 1);
  CHECK_NOTHROW(tab.validate());
  const TabularNmdp back = instance_from_json(instance_to_json(tab));
  CHECK(back.transition == tab.transition);
  CHECK(back.policy_logits == tab.policy_logits);

  TabularNmdp bad = tab;
  bad.p(1, 0, 0) += 0.1;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("s=1, a=0"), ValidationError);
  nlohmann::json doc = instance_to_json(tab);
  doc["n_states"] = 9;
  CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  CHECK_THROWS_AS(instance_from_json(nlohmann::json{{"format", "other"}}), ValidationError);
}

TEST_CASE("exact_log_marginal: trivial cases") {
  const TabularNmdp tab = random_instance(3, 2, 2, 4);
  const int s0[] = {1};
  CHECK(exact_log_marginal(tab, s0) == doctest::Approx(std::log(tab.initial[1])));

  const TabularNmdp det = shift_instance(3, 1, 3);
  const int ok[] = {0, 0, 0, 0};
  CHECK(exact_log_marginal(det, ok) == doctest::Approx(std::log(1.0 / 3)));
  const int impossible[] = {0, 1};
  CHECK(exact_log_marginal(det, impossible) == -std::numeric_limits<double>::infinity());

  const int too_long[] = {0, 1, 2, 0};
  CHECK_THROWS(exact_log_marginal(tab, too_long));
}

TEST_CASE("exact_log_marginal matches nested loops in reversed order") {
  const TabularNmdp tab = random_instance(3, 2, 2, 9);
  const int seq[] = {2, 0, 1};
  const std::size_t c0 = tab.contexts.index(std::span<const int>(seq, 1));
  const std::size_t c1 = tab.contexts.index(std::span<const int>(seq, 2));
  double total = 0.0;
  for (int a1 = 1; a1 >= 0; --a1) {
    for (int a0 = 1; a0 >= 0; --a0) {
      total += softmax_at(tab, c0, a0) * tab.p(2, a0, 0) * softmax_at(tab, c1, a1) * tab.p(0, a1, 1);
    }
  }
  CHECK(exact_log_marginal(tab, seq) == doctest::Approx(std::log(tab.initial[2] * total)).epsilon(1e-13));
}

TEST_CASE("exact_posterior: point masses, ties and factorization") {
  const TabularNmdp det = shift_instance(4, 3, 3);
  const int seq[] = {0, 2, 3, 3};
  const PosteriorTables p = exact_posterior(det, seq);
  CHECK(p.per_step[0] == std::vector<double>{0, 0, 1});
  CHECK(p.per_step[1] == std::vector<double>{0, 1, 0});
  CHECK(p.per_step[2] == std::vector<double>{1, 0, 0});

  TabularNmdp tie(2, 2, 1);
  std::fill(tie.transition.begin(), tie.transition.end(), 0.5);
  std::fill(tie.initial.begin(), tie.initial.end(), 0.5);
  std::fill(tie.policy_logits.begin(), tie.policy_logits.end(), 0.0);
  const int one[] = {0, 1};
  CHECK(exact_posterior(tie, one).per_step[0] == std::vector<double>{0.5, 0.5});

  const int dead[] = {0, 0, 3};
  CHECK_THROWS_AS(exact_posterior(det, dead), ValidationError);

  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const TabularNmdp tab = random_instance(2 + i % 4, 2 + i % 3, 1 + i % 4, 100 + i);
    StateSeq s(static_cast<std::size_t>(tab.horizon + 1));
    for (int& x : s) x = static_cast<int>(rng() % static_cast<std::uint64_t>(tab.n_states));
    CHECK(factorization_deviation(exact_posterior(tab, s)) < 1e-12);
  }
}

TEST_CASE("exact_policy_gradient: zero for action-free transitions, softmax identity, finite differences") {
  const TabularNmdp free = action_free(3, 3, 3, 5);
  const int seq[] = {1, 0, 2, 2};
  for (double g : exact_policy_gradient(free, seq)) CHECK(std::abs(g) < 1e-14);

  const TabularNmdp tab = random_instance(3, 2, 3, 6);
  const std::vector<double> grad = exact_policy_gradient(tab, seq);
  const PosteriorTables post = exact_posterior(tab, seq);
  for (std::size_t t = 0; t < 3; ++t) {
    const std::size_t ctx = tab.contexts.index(std::span<const int>(seq, t + 1));
    const auto prior = tab.policy(ctx);
    for (int a = 0; a < 2; ++a) {
      CHECK(grad[ctx * 2 + static_cast<std::size_t>(a)] ==
            doctest::Approx(post.per_step[t][static_cast<std::size_t>(a)] - prior[static_cast<std::size_t>(a)]).epsilon(1e-12));
    }
  }

  const std::vector<double> fd = finite_difference_policy_gradient(tab, seq);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    num += (grad[i] - fd[i]) * (grad[i] - fd[i]);
    den += grad[i] * grad[i];
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("importance identity and the sampled estimators") {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const TabularNmdp tab = random_instance(2 + i % 7, 2 + i % 5, 1 + i % 4, 200 + i);
    StateSeq s(static_cast<std::size_t>(tab.horizon + 1));
    for (int& x : s) x = static_cast<int>(rng() % static_cast<std::uint64_t>(tab.n_states));
    CHECK(importance_identity_check(tab, s) < 1e-12);
  }

  const TabularNmdp free = action_free(3, 4, 2, 13);
  const int seq[] = {0, 2, 1};
  const PosteriorTables post = exact_posterior(free, seq);
  const auto prior = free.policy(free.contexts.index(std::span<const int>(seq, 2)));
  for (int a = 0; a < 4; ++a) CHECK(post.per_step[1][static_cast<std::size_t>(a)] == doctest::Approx(prior[static_cast<std::size_t>(a)]));

  const TabularNmdp tab = random_instance(3, 3, 2, 14);
  const PosteriorTables exact = exact_posterior(tab, seq);
  auto tv = [&](std::size_t n) {
    Rng r(15);
    const auto est = importance_posterior_estimate(tab, seq, 1, n, r);
    double d = 0.0;
    for (std::size_t a = 0; a < 3; ++a) d += 0.5 * std::abs(est[a] - exact.per_step[1][a]);
    return d;
  };
  const double small = tv(1000), large = tv(100000);
  CHECK(large < 0.02);
  CHECK(large < small + 1e-3);

  Rng r(16);
  const auto est = sampled_policy_gradient(tab, seq, 100000, r);
  const auto g = exact_policy_gradient(tab, seq);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    num += (est[i] - g[i]) * (est[i] - g[i]);
    den += g[i] * g[i];
  }
  CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("energy shift on one context leaves posterior, policy and marginal unchanged") {
  const TabularNmdp tab = random_instance(3, 3, 3, 17);
  TabularNmdp shifted = tab;
  const int seq[] = {2, 1, 0, 1};
  const std::size_t ctx = tab.contexts.index(std::span<const int>(seq, 2));
  for (int a = 0; a < 3; ++a) shifted.logit(ctx, a) += 4.2;
  CHECK(exact_log_marginal(shifted, seq) == doctest::Approx(exact_log_marginal(tab, seq)).epsilon(1e-13));
  const auto p0 = exact_posterior(tab, seq), p1 = exact_posterior(shifted, seq);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t a = 0; a < 3; ++a) CHECK(p1.per_step[t][a] == doctest::Approx(p0.per_step[t][a]).epsilon(1e-13));
  }
  const auto g0 = exact_policy_gradient(tab, seq), g1 = exact_policy_gradient(shifted, seq);
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(std::abs(g0[i] - g1[i]) < 1e-13);
}

TEST_CASE("sequence distribution sums to one; conditionals are normalized") {
  const TabularNmdp tab = random_instance(4, 3, 3, 18);
  const auto dist = sequence_distribution(tab);
  double total = 0.0;
  for (double p : dist) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(sequence_tv(tab, tab) == 0.0);
  const auto cond = next_state_conditional(tab);
  REQUIRE(cond.size() == tab.num_contexts() * 4);
  for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
    double row = 0.0;
    for (std::size_t s = 0; s < 4; ++s) row += cond[c * 4 + s];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("soft values: deterministic chain, horizon one, path sums") {
  const TabularNmdp det = shift_instance(3, 1, 3);
  const SoftValues sv = soft_values(det, det);
  for (double r : sv.reward) CHECK((r == 0.0 || r == -std::numeric_limits<double>::infinity()));
  for (double v : sv.V) CHECK(v == 0.0);

  const TabularNmdp model = random_instance(3, 2, 1, 19), teacher = random_instance(3, 2, 1, 20);
  const SoftValues h1 = soft_values(model, teacher);
  for (int s0 = 0; s0 < 3; ++s0) {
    double v = 0.0;
    for (int s1 = 0; s1 < 3; ++s1) v += h1.demo_next[static_cast<std::size_t>(s0) * 3 + static_cast<std::size_t>(s1)] *
                                       h1.reward[static_cast<std::size_t>(s0) * 3 + static_cast<std::size_t>(s1)];
    CHECK(h1.V[static_cast<std::size_t>(s0)] == doctest::Approx(v).epsilon(1e-13));
  }

  const TabularNmdp m = random_instance(3, 3, 3, 21), te = random_instance(3, 3, 3, 22);
  const SoftValues deep = soft_values(m, te);
  for (std::size_t i = 0; i < deep.index.size(); ++i) {
    const StateSeq ctx = deep.index.sequence(i);
    CHECK(std::abs(deep.V[i] - value_by_path_sum(m, te, ctx)) < 1e-10);
  }

  // Teacher puts mass where the model cannot go.
  const TabularNmdp narrow = shift_instance(3, 1, 2);
  CHECK_THROWS_AS(soft_values(narrow, random_instance(3, 1, 2, 23)), ValidationError);
}

TEST_CASE("theorem identities") {
  const TabularNmdp tab = random_instance(4, 3, 3, 24);
  const TheoremReport r = theorem_identities(tab, tab);
  CHECK(r.q_minus_v_deviation < 1e-10);
  CHECK(r.entropy_decomposition_deviation < 1e-10);
  CHECK(r.value_path_sum_deviation < 1e-10);

  // Uniform optimal policy over k actions: Q* - V* = -log k.
  TabularNmdp uni = random_instance(3, 4, 2, 25);
  std::fill(uni.policy_logits.begin(), uni.policy_logits.end(), 0.0);
  const SoftValues sv = soft_values(uni, uni);
  for (std::size_t c = 0; c < uni.num_contexts(); ++c) {
    for (std::size_t a = 0; a < 4; ++a) CHECK(sv.Q[c * 4 + a] - sv.V[c] == doctest::Approx(-std::log(4.0)).epsilon(1e-10));
  }

  // Horizon one: E_p[Q] = V - H(p).
  const TabularNmdp one = random_instance(3, 3, 1, 26);
  const SoftValues s1 = soft_values(one, one);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto p = one.policy(c);
    double eq = 0.0, h = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      eq += p[a] * s1.Q[c * 3 + a];
      h -= p[a] * std::log(p[a]);
    }
    CHECK(eq == doctest::Approx(s1.V[c] - h).epsilon(1e-12));
  }
}

TEST_CASE("soft Q iteration converges, is idempotent and agrees with soft values") {
  const TabularNmdp tab = random_instance(3, 3, 3, 27);
  const SoftQResult q = soft_q_iteration(tab, tab, 50);
  CHECK(q.last_change < 1e-10);
  CHECK(q.sweeps <= tab.horizon + 2);
  const SoftQResult again = soft_q_iteration(tab, tab, q.sweeps + 1);
  for (std::size_t i = 0; i < q.Q.size(); ++i) CHECK(std::abs(again.Q[i] - q.Q[i]) < 1e-12);

  // Induced policy recovers the teacher's.
  for (std::size_t c = 0; c < tab.num_contexts(); ++c) {
    const auto p = tab.policy(c);
    double tv = 0.0;
    for (std::size_t a = 0; a < 3; ++a) tv += 0.5 * std::abs(q.policy[c * 3 + a] - p[a]);
    CHECK(tv < 1e-8);
  }

  // Horizon one: soft V is log-sum-exp of Q.
  const TabularNmdp one = random_instance(2, 3, 1, 28);
  const SoftQResult q1 = soft_q_iteration(one, one, 10);
  for (std::size_t c = 0; c < 2; ++c) {
    double z = 0.0;
    for (std::size_t a = 0; a < 3; ++a) z += std::exp(q1.Q[c * 3 + a]);
    const auto p = one.policy(c);
    for (std::size_t a = 0; a < 3; ++a) CHECK(q1.policy[c * 3 + a] == doctest::Approx(std::exp(q1.Q[c * 3 + a]) / z));
    CHECK(q1.policy[c * 3] == doctest::Approx(p[0]).epsilon(1e-8));
  }
}

TEST_CASE("marginal likelihood fit matches the teacher and satisfies identity (i)") {
  const TabularNmdp teacher = random_instance(3, 2, 2, 7);
  TabularNmdp init = teacher;
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& l : init.policy_logits) l = g(rng);
  const TabularNmdp fit = fit_policy_by_marginal_likelihood(init, teacher, 20000, 2.0);
  CHECK(sequence_tv(fit, teacher) < 1e-4);
  CHECK(theorem_identities(fit, teacher).q_minus_v_deviation < 1e-6);
}

TEST_CASE("identity suite passes on random instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const CheckResult& c : run_identity_suite(random_instance(3, 2, 3, 300 + seed), seed)) {
      INFO(c.name << " deviation " << c.deviation);
      CHECK(c.passed);
    }
  }
}
