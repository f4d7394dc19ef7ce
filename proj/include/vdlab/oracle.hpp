#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "vdlab/decpomdp.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/utility_store.hpp"

namespace vdlab {

/// Dense joint action-value table Q(s, u) for an enumerable env.
struct JointQTable {
  std::int64_t n_states = 0;
  std::int64_t n_joint_actions = 0;
  std::vector<double> q;  // row-major [state][joint]

  double value(StateId s, std::int64_t joint) const {
    return q[static_cast<std::size_t>(s * n_joint_actions + joint)];
  }
  double& value(StateId s, std::int64_t joint) {
    return q[static_cast<std::size_t>(s * n_joint_actions + joint)];
  }
  double max(StateId s) const {
    double best = value(s, 0);
    for (std::int64_t j = 1; j < n_joint_actions; ++j)
      best = std::max(best, value(s, j));
    return best;
  }
  std::vector<std::int64_t> argmax_set(StateId s, double tol = 1e-9) const {
    const double best = max(s);
    std::vector<std::int64_t> out;
    for (std::int64_t j = 0; j < n_joint_actions; ++j)
      if (value(s, j) >= best - tol) out.push_back(j);
    return out;
  }
};

/// Exact optimal joint action-values by value iteration, run until the
/// sup-norm change drops below tol. Terminal states carry value 0.
inline JointQTable exact_q(const DecPomdp& env, double gamma, double tol = 1e-10,
                           std::int64_t cap = kDefaultEnumerationCap) {
  const Enumeration en = enumerate_env(env, cap);
  JointQTable table;
  table.n_states = env.n_states();
  table.n_joint_actions = static_cast<std::int64_t>(en.joint_actions.size());
  table.q.assign(static_cast<std::size_t>(table.n_states * table.n_joint_actions), 0.0);

  // cache rewards and transitions
  std::vector<double> rewards(table.q.size(), 0.0);
  std::vector<std::vector<std::pair<StateId, double>>> rows(table.q.size());
  for (StateId s = 0; s < table.n_states; ++s) {
    if (env.terminal(s)) continue;
    for (std::int64_t j = 0; j < table.n_joint_actions; ++j) {
      const auto& u = en.joint_actions[static_cast<std::size_t>(j)];
      const std::size_t idx = static_cast<std::size_t>(s * table.n_joint_actions + j);
      rewards[idx] = env.reward(s, u);
      rows[idx] = env.transition(s, u);
    }
  }

  std::vector<double> state_value(static_cast<std::size_t>(table.n_states), 0.0);
  double delta = tol + 1.0;
  while (delta > tol) {
    delta = 0.0;
    for (StateId s = 0; s < table.n_states; ++s) {
      if (env.terminal(s)) continue;
      for (std::int64_t j = 0; j < table.n_joint_actions; ++j) {
        const std::size_t idx = static_cast<std::size_t>(s * table.n_joint_actions + j);
        double next = 0.0;
        for (const auto& [ns, p] : rows[idx])
          if (!env.terminal(ns)) next += p * state_value[static_cast<std::size_t>(ns)];
        const double updated = rewards[idx] + gamma * next;
        delta = std::max(delta, std::abs(updated - table.value(s, j)));
        table.value(s, j) = updated;
      }
      state_value[static_cast<std::size_t>(s)] = table.max(s);
    }
  }
  return table;
}

/// Deterministic per-agent greedy policy over global states.
struct ExpertPolicy {
  std::vector<std::vector<ActionId>> action;  // [agent][state]

  int n_agents() const { return static_cast<int>(action.size()); }

  ActionId at(int agent, StateId s) const {
    return action[static_cast<std::size_t>(agent)][static_cast<std::size_t>(s)];
  }

  /// P(u|s) for one agent: 1 at its greedy action, 0 elsewhere.
  double prob(int agent, StateId s, ActionId u) const {
    return at(agent, s) == u ? 1.0 : 0.0;
  }

  static ExpertPolicy from_stores(const std::vector<UtilityStore>& stores,
                                  std::int64_t n_states) {
    ExpertPolicy p;
    p.action.resize(stores.size());
    for (std::size_t i = 0; i < stores.size(); ++i) {
      p.action[i].resize(static_cast<std::size_t>(n_states));
      for (StateId s = 0; s < n_states; ++s)
        p.action[i][static_cast<std::size_t>(s)] = stores[i].greedy(s);
    }
    return p;
  }
};

struct LocalPolicy {
  // per agent: observation id -> action
  std::vector<std::map<ObsId, ActionId>> by_agent;
};

struct LossyCertificate {
  bool lossy = false;
  std::vector<AliasWitness> witness_state_pairs;
  LocalPolicy best_local_policy;
  std::vector<StateId> mismatch_states;  // under the best local policy
  std::int64_t policies_enumerated = 0;
  std::vector<StateId> states_considered;
};

struct CertifyOptions {
  bool restrict_to_reachable = true;
  double tie_tol = 1e-9;
  std::int64_t policy_cap = 2'000'000;
  std::int64_t enumeration_cap = kDefaultEnumerationCap;
};

namespace detail {

/// Shared enumeration core: finds the deterministic observation-
/// conditioned local policy minimizing the number of states where the
/// induced joint action is not in the per-state acceptable set.
inline LossyCertificate certify_against(
    const DecPomdp& env,
    const std::function<bool(StateId, const JointAction&)>& acceptable,
    const CertifyOptions& opt) {
  LossyCertificate cert;
  std::vector<StateId> states;
  if (opt.restrict_to_reachable) {
    states = reachable_states(env);
  } else {
    for (StateId s = 0; s < env.n_states(); ++s) states.push_back(s);
  }
  // decision states only; terminal states have no action choice
  std::vector<StateId> decision_states;
  for (StateId s : states)
    if (!env.terminal(s)) decision_states.push_back(s);
  cert.states_considered = decision_states;

  const int n = env.n_agents();
  // observation vocabularies per agent over the considered states
  std::vector<std::vector<ObsId>> vocab(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (StateId s : decision_states) vocab[static_cast<std::size_t>(i)].push_back(env.observe(s, i));
    auto& v = vocab[static_cast<std::size_t>(i)];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  // Single agent: the best policy decomposes over observations, so each
  // observation independently takes the action with the fewest mismatches
  // in its group. This is exact and avoids the exponential enumeration.
  if (n == 1) {
    const auto& v = vocab[0];
    std::vector<ActionId> best_action(v.size(), 0);
    std::vector<std::int64_t> best_miss(v.size(), 0);
    std::vector<std::vector<StateId>> group_states(v.size());
    for (StateId s : decision_states) {
      const std::size_t k = static_cast<std::size_t>(
          std::lower_bound(v.begin(), v.end(), env.observe(s, 0)) - v.begin());
      group_states[k].push_back(s);
    }
    JointAction joint(1);
    for (std::size_t k = 0; k < v.size(); ++k) {
      std::int64_t best = -1;
      for (ActionId a = 0; a < env.n_actions(); ++a) {
        joint[0] = a;
        std::int64_t miss = 0;
        for (StateId s : group_states[k])
          if (!acceptable(s, joint)) ++miss;
        if (best < 0 || miss < best) {
          best = miss;
          best_action[k] = a;
        }
      }
      best_miss[k] = best;
    }
    cert.best_local_policy.by_agent.resize(1);
    for (std::size_t k = 0; k < v.size(); ++k) {
      cert.best_local_policy.by_agent[0][v[k]] = best_action[k];
      joint[0] = best_action[k];
      for (StateId s : group_states[k])
        if (!acceptable(s, joint)) cert.mismatch_states.push_back(s);
    }
    std::sort(cert.mismatch_states.begin(), cert.mismatch_states.end());
    cert.lossy = !cert.mismatch_states.empty();
    double log_policies = static_cast<double>(v.size()) *
                          std::log(static_cast<double>(env.n_actions()));
    cert.policies_enumerated =
        log_policies > 62 * std::log(2.0)
            ? std::numeric_limits<std::int64_t>::max()
            : static_cast<std::int64_t>(std::llround(
                  std::pow(static_cast<double>(env.n_actions()),
                           static_cast<double>(v.size()))));
    for (const AliasWitness& w : detect_insufficient_observation(env, opt.enumeration_cap)) {
      const bool a_considered =
          std::binary_search(decision_states.begin(), decision_states.end(), w.state_a);
      const bool b_considered =
          std::binary_search(decision_states.begin(), decision_states.end(), w.state_b);
      if (a_considered && b_considered) cert.witness_state_pairs.push_back(w);
    }
    return cert;
  }

  double log_policies = 0.0;
  for (int i = 0; i < n; ++i)
    log_policies += static_cast<double>(vocab[static_cast<std::size_t>(i)].size()) *
                    std::log(static_cast<double>(env.n_actions()));
  if (log_policies > std::log(static_cast<double>(opt.policy_cap)))
    throw CapabilityError(
        "certify_lossy: local policy space exceeds cap; consider restricting "
        "to reachable states");

  // flat per-agent policy index -> obs->action assignment via mixed radix
  std::vector<std::size_t> assignment_size(static_cast<std::size_t>(n));
  std::int64_t total_policies = 1;
  for (int i = 0; i < n; ++i) {
    std::int64_t count = 1;
    for (std::size_t k = 0; k < vocab[static_cast<std::size_t>(i)].size(); ++k)
      count *= env.n_actions();
    assignment_size[static_cast<std::size_t>(i)] = static_cast<std::size_t>(count);
    total_policies *= count;
  }
  cert.policies_enumerated = total_policies;

  // precompute observation indices per (state, agent)
  std::vector<std::vector<int>> obs_index(decision_states.size(),
                                          std::vector<int>(static_cast<std::size_t>(n)));
  for (std::size_t si = 0; si < decision_states.size(); ++si) {
    for (int i = 0; i < n; ++i) {
      const auto& v = vocab[static_cast<std::size_t>(i)];
      const ObsId o = env.observe(decision_states[si], i);
      obs_index[si][static_cast<std::size_t>(i)] =
          static_cast<int>(std::lower_bound(v.begin(), v.end(), o) - v.begin());
    }
  }

  std::vector<std::vector<ActionId>> current(static_cast<std::size_t>(n));
  std::int64_t best_mismatch = -1;
  std::vector<std::vector<ActionId>> best_assignment;
  std::vector<StateId> best_mismatch_states;

  std::vector<std::int64_t> policy_index(static_cast<std::size_t>(n), 0);
  JointAction joint(static_cast<std::size_t>(n));
  bool done = false;
  while (!done) {
    // materialize per-agent obs->action tables for this policy index
    for (int i = 0; i < n; ++i) {
      auto& tab = current[static_cast<std::size_t>(i)];
      tab.assign(vocab[static_cast<std::size_t>(i)].size(), 0);
      std::int64_t rem = policy_index[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < tab.size(); ++k) {
        tab[k] = static_cast<ActionId>(rem % env.n_actions());
        rem /= env.n_actions();
      }
    }
    std::vector<StateId> mismatches;
    for (std::size_t si = 0; si < decision_states.size(); ++si) {
      for (int i = 0; i < n; ++i)
        joint[static_cast<std::size_t>(i)] =
            current[static_cast<std::size_t>(i)]
                   [static_cast<std::size_t>(obs_index[si][static_cast<std::size_t>(i)])];
      if (!acceptable(decision_states[si], joint)) mismatches.push_back(decision_states[si]);
    }
    if (best_mismatch < 0 || static_cast<std::int64_t>(mismatches.size()) < best_mismatch) {
      best_mismatch = static_cast<std::int64_t>(mismatches.size());
      best_assignment = current;
      best_mismatch_states = mismatches;
      if (best_mismatch == 0) break;  // lossless witness found
    }
    // odometer increment
    done = true;
    for (int i = 0; i < n; ++i) {
      if (++policy_index[static_cast<std::size_t>(i)] <
          static_cast<std::int64_t>(assignment_size[static_cast<std::size_t>(i)])) {
        done = false;
        break;
      }
      policy_index[static_cast<std::size_t>(i)] = 0;
    }
  }

  cert.lossy = best_mismatch > 0;
  cert.mismatch_states = best_mismatch_states;
  cert.best_local_policy.by_agent.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (std::size_t k = 0; k < vocab[static_cast<std::size_t>(i)].size(); ++k)
      cert.best_local_policy.by_agent[static_cast<std::size_t>(i)]
          [vocab[static_cast<std::size_t>(i)][k]] =
          best_assignment[static_cast<std::size_t>(i)][k];

  // alias witnesses among the considered states
  std::vector<char> considered(static_cast<std::size_t>(env.n_states()), 0);
  for (StateId s : decision_states) considered[static_cast<std::size_t>(s)] = 1;
  for (const AliasWitness& w : detect_insufficient_observation(env, opt.enumeration_cap))
    if (considered[static_cast<std::size_t>(w.state_a)] &&
        considered[static_cast<std::size_t>(w.state_b)])
      cert.witness_state_pairs.push_back(w);
  return cert;
}

}  // namespace detail

/// Certifies whether any deterministic observation-conditioned local
/// policy reproduces the joint greedy action of Q_tot at every considered
/// state. An empty mismatch set for the best policy means the
/// decomposition is lossless.
inline LossyCertificate certify_lossy(const DecPomdp& env, const JointQTable& q_tot,
                                      CertifyOptions opt = {}) {
  if (q_tot.n_states != env.n_states())
    throw InputError("certify_lossy: table/env state count mismatch");
  // precompute acceptable joint sets
  std::vector<std::vector<std::int64_t>> acceptable_sets(
      static_cast<std::size_t>(env.n_states()));
  for (StateId s = 0; s < env.n_states(); ++s)
    if (!env.terminal(s)) acceptable_sets[static_cast<std::size_t>(s)] = q_tot.argmax_set(s, opt.tie_tol);
  auto acceptable = [&](StateId s, const JointAction& u) {
    const std::int64_t j = encode_joint_action(env, u);
    const auto& set = acceptable_sets[static_cast<std::size_t>(s)];
    return std::binary_search(set.begin(), set.end(), j);
  };
  return detail::certify_against(env, acceptable, opt);
}

/// Same enumeration with a trained expert's per-state joint action as the
/// target: certifies whether local policies can reproduce the expert.
inline LossyCertificate certify_lossy_vs_expert(const DecPomdp& env,
                                                const ExpertPolicy& expert,
                                                CertifyOptions opt = {}) {
  auto acceptable = [&](StateId s, const JointAction& u) {
    for (int i = 0; i < env.n_agents(); ++i)
      if (expert.at(i, s) != u[static_cast<std::size_t>(i)]) return false;
    return true;
  };
  return detail::certify_against(env, acceptable, opt);
}

/// Global states carrying the same local observation, with sample
/// multiplicities; the empirical posterior P(s|obs) is multiplicity / k.
struct AliasSampleSet {
  ObsId obs = 0;
  std::vector<std::pair<StateId, int>> samples;  // (state, multiplicity)

  int k() const {
    int total = 0;
    for (const auto& [s, m] : samples) total += m;
    return total;
  }
  double occupancy(std::size_t index) const {
    return static_cast<double>(samples[index].second) / static_cast<double>(k());
  }
};

struct PenaltyMatrix {
  std::vector<std::vector<double>> lambda;  // lambda[chosen][expert]

  static PenaltyMatrix zero_one(int n_actions) {
    PenaltyMatrix p;
    p.lambda.assign(static_cast<std::size_t>(n_actions),
                    std::vector<double>(static_cast<std::size_t>(n_actions), 1.0));
    for (int i = 0; i < n_actions; ++i)
      p.lambda[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0.0;
    return p;
  }

  static PenaltyMatrix zero(int n_actions) {
    PenaltyMatrix p;
    p.lambda.assign(static_cast<std::size_t>(n_actions),
                    std::vector<double>(static_cast<std::size_t>(n_actions), 0.0));
    return p;
  }
};

/// Expected penalty of playing `chosen` under the posterior over the
/// aliased states: sum over expert actions and states of
/// lambda[chosen][expert] * P(expert action | s) * P(s | obs).
inline double bayes_expected_loss(const ExpertPolicy& expert, int agent,
                                  const AliasSampleSet& alias,
                                  const PenaltyMatrix& penalty, ActionId chosen) {
  const int k = alias.k();
  if (k < 1) throw InputError("bayes_expected_loss: empty sample set");
  double risk = 0.0;
  for (const auto& [s, m] : alias.samples) {
    const ActionId expert_action = expert.at(agent, s);
    risk += (static_cast<double>(m) / k) *
            penalty.lambda[static_cast<std::size_t>(chosen)]
                          [static_cast<std::size_t>(expert_action)];
  }
  return risk;
}

/// Closed-form optimal local action-values after imitation: the
/// occupancy-weighted expert vote q(obs, u) = (1/k) sum_s m_s P(u|s).
/// With the 0-1 penalty its argmax minimizes the expected loss, and
/// R(u) = 1 - q(u) exactly.
inline std::vector<double> bayes_optimal_local(const ExpertPolicy& expert, int agent,
                                               const AliasSampleSet& alias,
                                               int n_actions) {
  const int k = alias.k();
  if (k < 1) throw InputError("bayes_optimal_local: empty sample set");
  std::vector<double> q(static_cast<std::size_t>(n_actions), 0.0);
  for (const auto& [s, m] : alias.samples)
    q[static_cast<std::size_t>(expert.at(agent, s))] += static_cast<double>(m) / k;
  return q;
}

/// Per-step error series and their discounted totals. The accumulated
/// total compounds every step's decomposition error through the Bellman
/// recursion; the separated total discounts only the non-decomposition
/// errors and adds a single decomposition term at the query step.
struct ErrorBreakdown {
  std::vector<double> error_dec;
  std::vector<double> error_other;
  double gamma = 0.0;
  double accumulated_total = 0.0;          // sum gamma^(i-t) [dec(i)+other(i)]
  double separated_total = 0.0;            // sum gamma^(i-t) other(i) + dec(t)
  double accumulated_recursion = 0.0;      // simulated step recursion
  double separated_recursion = 0.0;
  std::vector<double> measured;            // empirical Q* - Qhat per step
  double measured_total = 0.0;             // measured at the query step
};

/// Synthetic mode: closed forms plus the literal step-by-step recursion
///   Error(i) = dec(i) + other(i) + gamma * Error(i+1)
/// and its separated counterpart, for cross-checking the arithmetic.
inline ErrorBreakdown error_breakdown_synthetic(std::vector<double> error_dec,
                                                std::vector<double> error_other,
                                                double gamma) {
  if (error_dec.size() != error_other.size())
    throw InputError("error_breakdown: schedule lengths differ");
  if (error_dec.empty()) throw InputError("error_breakdown: empty schedules");
  ErrorBreakdown out;
  out.gamma = gamma;
  const std::size_t n = error_dec.size();
  double acc = 0.0, sep_other = 0.0, discount = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += discount * (error_dec[i] + error_other[i]);
    sep_other += discount * error_other[i];
    discount *= gamma;
  }
  out.accumulated_total = acc;
  out.separated_total = sep_other + error_dec[0];

  double recursion = 0.0;
  for (std::size_t i = n; i-- > 0;)
    recursion = error_dec[i] + error_other[i] + gamma * recursion;
  out.accumulated_recursion = recursion;

  double upper = 0.0;
  for (std::size_t i = n; i-- > 0;) upper = error_other[i] + gamma * upper;
  out.separated_recursion = upper + error_dec[0];

  out.error_dec = std::move(error_dec);
  out.error_other = std::move(error_other);
  return out;
}

struct TraceStep {
  StateId state = 0;
  JointAction joint_action;
  double reward = 0.0;
};

/// Empirical mode: measures Q*(s_i, u_i) - Qhat(s_i, u_i) along a rollout
/// trace and attributes the per-step one-step Bellman residual of Qhat to
/// the "other" series (no decomposition split is observable for a trained
/// joint value). On a deterministic trace the discounted residual sum
/// telescopes to the measured gap at the query step.
inline ErrorBreakdown error_breakdown_empirical(
    const DecPomdp& env, const std::function<double(StateId, const JointAction&)>& q_hat,
    const JointQTable& exact, const std::vector<TraceStep>& trace, double gamma) {
  if (trace.empty()) throw InputError("error_breakdown: empty trace");
  if (static_cast<int>(trace.size()) > env.horizon())
    throw InputError("error_breakdown: trace longer than the env horizon");
  std::vector<double> e_other;
  std::vector<double> measured;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& step = trace[i];
    const std::int64_t joint = encode_joint_action(env, step.joint_action);
    measured.push_back(exact.value(step.state, joint) - q_hat(step.state, step.joint_action));
    double bootstrap = 0.0;
    if (i + 1 < trace.size()) {
      const StateId ns = trace[i + 1].state;
      if (!env.terminal(ns)) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < exact.n_joint_actions; ++j)
          best = std::max(best, q_hat(ns, decode_joint_action(env, j)));
        bootstrap = best;
      }
    }
    const double residual = step.reward + gamma * bootstrap - q_hat(step.state, step.joint_action);
    e_other.push_back(residual);
  }
  ErrorBreakdown out = error_breakdown_synthetic(
      std::vector<double>(trace.size(), 0.0), std::move(e_other), gamma);
  out.measured = std::move(measured);
  out.measured_total = out.measured.front();
  return out;
}

}  // namespace vdlab
