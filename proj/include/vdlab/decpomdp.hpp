#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vdlab/errors.hpp"
#include "vdlab/rng.hpp"

namespace vdlab {

using StateId = std::int64_t;
using ObsId = std::int64_t;
using ActionId = int;
using JointAction = std::vector<ActionId>;

struct StepResult {
  StateId next_state = 0;
  double reward = 0.0;
  bool terminal = false;
};

/// Which policy generated a transition during rollout. Imitation in the
/// DAgger trainer asserts on this tag.
enum class BehaviorSource { learner, expert };

struct Transition {
  StateId state = 0;
  StateId next_state = 0;
  JointAction joint_action;
  double reward = 0.0;
  std::vector<ObsId> observations;
  std::vector<ObsId> next_observations;
  // Per-agent learner input ids (history-encoded observations). Equal to
  // the raw observation ids when the history window is 1.
  std::vector<std::int64_t> inputs;
  std::vector<std::int64_t> next_inputs;
  bool terminal = false;
  BehaviorSource behavior = BehaviorSource::learner;
};

struct Episode {
  std::vector<Transition> transitions;
  double ret = 0.0;  // discounted return from t=0
  bool won = false;
};

/// Bounded action-observation history for one agent. Oldest entries are
/// evicted first. With window=1 the history reduces to the latest
/// observation id.
class History {
 public:
  struct Entry {
    ObsId obs = 0;
    ActionId action = -1;  // -1 before the first action is taken
  };

  History(int agent_id, int window) : agent_(agent_id), window_(window) {
    if (window < 1) throw InputError("History: window must be >= 1");
  }

  int agent() const { return agent_; }
  int window() const { return window_; }
  const std::deque<Entry>& entries() const { return entries_; }

  void push_observation(ObsId obs) {
    entries_.push_back(Entry{obs, -1});
    while (static_cast<int>(entries_.size()) > window_) entries_.pop_front();
  }

  void record_action(ActionId a) {
    if (!entries_.empty()) entries_.back().action = a;
  }

  void reset() { entries_.clear(); }

  /// Dense id over the (obs, action, ..., obs) window, radix-encoded.
  /// Slots before the first observation use a reserved "blank" symbol so
  /// early-episode histories stay distinct from full windows.
  std::int64_t encode(std::int64_t n_obs, int n_actions) const {
    const std::int64_t obs_radix = n_obs + 1;      // +1 for blank
    const std::int64_t act_radix = n_actions + 1;  // +1 for blank/none
    std::int64_t id = 0;
    const int missing = window_ - static_cast<int>(entries_.size());
    for (int slot = 0; slot < window_; ++slot) {
      std::int64_t obs_code = 0, act_code = 0;
      if (slot >= missing) {
        const Entry& e = entries_[static_cast<std::size_t>(slot - missing)];
        obs_code = e.obs + 1;
        act_code = e.action + 1;
      }
      if (slot + 1 == window_) {
        id = id * obs_radix + obs_code;  // newest slot: observation only
      } else {
        id = (id * obs_radix + obs_code) * act_radix + act_code;
      }
    }
    return id;
  }

  /// Size of the encode() id space for given obs/action counts and window.
  static std::int64_t id_space(std::int64_t n_obs, int n_actions, int window) {
    std::int64_t size = n_obs + 1;
    for (int i = 1; i < window; ++i) size *= (n_obs + 1) * (n_actions + 1);
    return size;
  }

 private:
  int agent_;
  int window_;
  std::deque<Entry> entries_;
};

/// A decentralized POMDP: finite states, per-agent actions, a shared
/// reward, stochastic transitions and a per-agent observation function.
/// Instances are immutable specifications; episode state lives with the
/// rollout code.
class DecPomdp {
 public:
  virtual ~DecPomdp() = default;

  virtual std::string name() const = 0;
  virtual int n_agents() const = 0;
  virtual int n_actions() const = 0;
  virtual std::int64_t n_states() const = 0;
  virtual std::int64_t n_observations() const = 0;
  virtual double discount() const = 0;
  virtual int horizon() const = 0;

  /// Pure function of (state, agent).
  virtual ObsId observe(StateId state, int agent) const = 0;

  virtual double reward(StateId state, const JointAction& u) const = 0;

  /// Sparse transition row P(.|state, u); probabilities sum to 1.
  virtual std::vector<std::pair<StateId, double>> transition(
      StateId state, const JointAction& u) const = 0;

  virtual bool terminal(StateId state) const = 0;

  /// Environment-defined success flag for a terminal state.
  virtual bool won(StateId state) const { return false; }

  virtual std::vector<std::pair<StateId, double>> initial_distribution() const = 0;

  /// True when states are dense ids 0..n_states-1 and transition() is
  /// available for all of them.
  virtual bool tabular() const { return true; }

  /// Feature encoding of the global state for function approximators and
  /// state-conditioned mixing. Defaults to a one-hot of the state id.
  virtual int state_feature_dim() const {
    return static_cast<int>(n_states());
  }
  virtual void state_features(StateId state, std::vector<double>& out) const {
    out.assign(static_cast<std::size_t>(state_feature_dim()), 0.0);
    out[static_cast<std::size_t>(state)] = 1.0;
  }

  StateId sample_initial(Rng& rng) const {
    const auto dist = initial_distribution();
    double x = rng.uniform();
    for (const auto& [s, p] : dist) {
      x -= p;
      if (x < 0) return s;
    }
    return dist.back().first;
  }

  void check_state(StateId s) const {
    if (s < 0 || (tabular() && s >= n_states()))
      throw InputError(name() + ": invalid state id " + std::to_string(s));
  }

  void check_joint_action(const JointAction& u) const {
    if (static_cast<int>(u.size()) != n_agents())
      throw InputError(name() + ": joint action arity mismatch");
    for (ActionId a : u)
      if (a < 0 || a >= n_actions())
        throw InputError(name() + ": invalid action id " + std::to_string(a));
  }

  /// Sample one environment step. Deterministic given the rng state.
  virtual StepResult step(StateId state, const JointAction& u, Rng& rng) const {
    check_state(state);
    check_joint_action(u);
    const auto row = transition(state, u);
    double x = rng.uniform();
    StateId next = row.back().first;
    for (const auto& [s, p] : row) {
      x -= p;
      if (x < 0) {
        next = s;
        break;
      }
    }
    return StepResult{next, reward(state, u), terminal(next)};
  }
};

/// Total number of joint actions |U|^n, or -1 on overflow.
inline std::int64_t joint_action_count(const DecPomdp& env) {
  std::int64_t total = 1;
  for (int i = 0; i < env.n_agents(); ++i) {
    if (total > (std::int64_t{1} << 40)) return -1;
    total *= env.n_actions();
  }
  return total;
}

inline JointAction decode_joint_action(const DecPomdp& env, std::int64_t index) {
  JointAction u(static_cast<std::size_t>(env.n_agents()));
  for (int i = env.n_agents() - 1; i >= 0; --i) {
    u[static_cast<std::size_t>(i)] = static_cast<ActionId>(index % env.n_actions());
    index /= env.n_actions();
  }
  return u;
}

inline std::int64_t encode_joint_action(const DecPomdp& env, const JointAction& u) {
  std::int64_t index = 0;
  for (ActionId a : u) index = index * env.n_actions() + a;
  return index;
}

struct Enumeration {
  std::vector<StateId> states;
  std::vector<JointAction> joint_actions;
};

constexpr std::int64_t kDefaultEnumerationCap = 10'000'000;

inline bool enumerable(const DecPomdp& env, std::int64_t cap = kDefaultEnumerationCap) {
  if (!env.tabular()) return false;
  const std::int64_t joints = joint_action_count(env);
  if (joints < 0) return false;
  return env.n_states() <= cap / std::max<std::int64_t>(joints, 1) ||
         env.n_states() * joints <= cap;
}

/// Complete listings of states and joint actions in ascending-id order.
inline Enumeration enumerate_env(const DecPomdp& env,
                                 std::int64_t cap = kDefaultEnumerationCap) {
  if (!enumerable(env, cap))
    throw CapabilityError(env.name() + ": not enumerable within cap " +
                          std::to_string(cap));
  Enumeration out;
  out.states.reserve(static_cast<std::size_t>(env.n_states()));
  for (StateId s = 0; s < env.n_states(); ++s) out.states.push_back(s);
  const std::int64_t joints = joint_action_count(env);
  out.joint_actions.reserve(static_cast<std::size_t>(joints));
  for (std::int64_t j = 0; j < joints; ++j)
    out.joint_actions.push_back(decode_joint_action(env, j));
  return out;
}

struct AliasWitness {
  int agent = 0;
  StateId state_a = 0;
  StateId state_b = 0;
};

/// Every (agent, state pair) where the global state differs but the
/// agent's observation does not. Empty iff each agent's observation map
/// is injective over states.
inline std::vector<AliasWitness> detect_insufficient_observation(
    const DecPomdp& env, std::int64_t cap = kDefaultEnumerationCap) {
  if (!env.tabular() || env.n_states() > cap)
    throw CapabilityError(env.name() + ": not enumerable within cap " +
                          std::to_string(cap));
  std::vector<AliasWitness> witnesses;
  const std::int64_t n = env.n_states();
  for (int agent = 0; agent < env.n_agents(); ++agent) {
    // bucket states by observation id
    std::vector<std::pair<ObsId, StateId>> keyed;
    keyed.reserve(static_cast<std::size_t>(n));
    for (StateId s = 0; s < n; ++s) keyed.emplace_back(env.observe(s, agent), s);
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      for (std::size_t j = i + 1;
           j < keyed.size() && keyed[j].first == keyed[i].first; ++j) {
        witnesses.push_back(AliasWitness{agent, keyed[i].second, keyed[j].second});
      }
    }
  }
  return witnesses;
}

/// States reachable from the initial distribution under any joint action.
inline std::vector<StateId> reachable_states(const DecPomdp& env) {
  if (!env.tabular())
    throw CapabilityError(env.name() + ": reachability needs a tabular env");
  std::vector<char> seen(static_cast<std::size_t>(env.n_states()), 0);
  std::vector<StateId> frontier;
  for (const auto& [s, p] : env.initial_distribution()) {
    if (p > 0 && !seen[static_cast<std::size_t>(s)]) {
      seen[static_cast<std::size_t>(s)] = 1;
      frontier.push_back(s);
    }
  }
  const std::int64_t joints = joint_action_count(env);
  while (!frontier.empty()) {
    const StateId s = frontier.back();
    frontier.pop_back();
    if (env.terminal(s)) continue;
    for (std::int64_t j = 0; j < joints; ++j) {
      const JointAction u = decode_joint_action(env, j);
      for (const auto& [ns, p] : env.transition(s, u)) {
        if (p > 0 && !seen[static_cast<std::size_t>(ns)]) {
          seen[static_cast<std::size_t>(ns)] = 1;
          frontier.push_back(ns);
        }
      }
    }
  }
  std::vector<StateId> out;
  for (StateId s = 0; s < env.n_states(); ++s)
    if (seen[static_cast<std::size_t>(s)]) out.push_back(s);
  return out;
}

}  // namespace vdlab
