#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vdlab/decpomdp.hpp"

namespace vdlab {

/// Repeated cooperative matrix game over a deterministic cycle of states.
/// Every agent receives one constant observation, so any state change is
/// invisible locally; with state-dependent payoffs this is the canonical
/// construction for a lossy value decomposition. An optional fully
/// observable variant exposes the state id instead.
class MatrixGame final : public DecPomdp {
 public:
  struct Options {
    double gamma = 0.99;
    bool fully_observable = false;
    // Visiting order of states; the episode ends after the cycle.
    std::vector<int> state_cycle;  // empty = 0,1,...,n_states-1
  };

  MatrixGame(int n_agents, int n_actions, std::vector<std::vector<double>> payoffs)
      : MatrixGame(n_agents, n_actions, std::move(payoffs), Options{}) {}

  /// payoffs[s][joint_index] with joint_index encoding (u1,...,un) in
  /// row-major order over n_agents digits of base n_actions.
  MatrixGame(int n_agents, int n_actions,
             std::vector<std::vector<double>> payoffs, Options opt)
      : n_agents_(n_agents),
        n_actions_(n_actions),
        payoffs_(std::move(payoffs)),
        opt_(std::move(opt)) {
    if (n_agents_ < 1 || n_actions_ < 1) throw InputError("MatrixGame: bad arity");
    std::int64_t joints = 1;
    for (int i = 0; i < n_agents_; ++i) joints *= n_actions_;
    if (payoffs_.empty()) throw InputError("MatrixGame: no payoff tables");
    for (const auto& table : payoffs_)
      if (static_cast<std::int64_t>(table.size()) != joints)
        throw InputError("MatrixGame: ragged payoff table");
    if (opt_.state_cycle.empty()) {
      for (int s = 0; s < static_cast<int>(payoffs_.size()); ++s)
        opt_.state_cycle.push_back(s);
    }
    for (int s : opt_.state_cycle)
      if (s < 0 || s >= static_cast<int>(payoffs_.size()))
        throw InputError("MatrixGame: state_cycle entry out of range");
  }

  std::string name() const override { return "matrix_game"; }
  int n_agents() const override { return n_agents_; }
  int n_actions() const override { return n_actions_; }

  /// States are (payoff state, cycle position) pairs plus one terminal
  /// state, so the cycle is part of the dynamics.
  std::int64_t n_states() const override {
    return static_cast<std::int64_t>(opt_.state_cycle.size()) + 1;
  }
  std::int64_t n_observations() const override {
    return opt_.fully_observable ? n_states() : 1;
  }
  double discount() const override { return opt_.gamma; }
  int horizon() const override { return static_cast<int>(opt_.state_cycle.size()); }

  int payoff_state(StateId s) const {
    return opt_.state_cycle[static_cast<std::size_t>(s)];
  }

  ObsId observe(StateId state, int agent) const override {
    check_state(state);
    if (agent < 0 || agent >= n_agents_) throw InputError("MatrixGame: bad agent");
    return opt_.fully_observable ? state : 0;
  }

  bool terminal(StateId state) const override { return state == n_states() - 1; }

  double reward(StateId state, const JointAction& u) const override {
    check_state(state);
    check_joint_action(u);
    if (terminal(state)) return 0.0;
    const auto& table = payoffs_[static_cast<std::size_t>(payoff_state(state))];
    return table[static_cast<std::size_t>(encode_joint_action(*this, u))];
  }

  std::vector<std::pair<StateId, double>> transition(
      StateId state, const JointAction& u) const override {
    check_state(state);
    check_joint_action(u);
    if (terminal(state)) return {{state, 1.0}};
    return {{state + 1, 1.0}};
  }

  std::vector<std::pair<StateId, double>> initial_distribution() const override {
    return {{0, 1.0}};
  }

 private:
  int n_agents_;
  int n_actions_;
  std::vector<std::vector<double>> payoffs_;
  Options opt_;
};

inline std::shared_ptr<MatrixGame> make_matrix_game(
    int n_agents, int n_actions, std::vector<std::vector<double>> payoffs,
    MatrixGame::Options opt = {}) {
  return std::make_shared<MatrixGame>(n_agents, n_actions, std::move(payoffs),
                                      std::move(opt));
}

/// The two-state construction where the optimal joint action flips from
/// (0,0) to (1,1) while both agents observe a constant symbol. No pair of
/// observation-conditioned policies is optimal in both states.
inline std::shared_ptr<MatrixGame> make_two_state_alias_game(
    bool fully_observable = false, double gamma = 0.99) {
  std::vector<std::vector<double>> payoffs = {
      {1.0, 0.0, 0.0, 0.2},   // state 0: (0,0) best
      {0.2, 0.0, 0.0, 1.0},   // state 1: (1,1) best
  };
  MatrixGame::Options opt;
  opt.gamma = gamma;
  opt.fully_observable = fully_observable;
  opt.state_cycle = {0, 1};
  return make_matrix_game(2, 2, std::move(payoffs), std::move(opt));
}

}  // namespace vdlab
