#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vdlab/decpomdp.hpp"

namespace vdlab {

/// Single-agent gridworld over a character layout. 'S' start, 'F' frozen
/// (safe), 'H' hole (terminal, reward 0), 'G' goal (terminal, reward 1).
/// Moves are deterministic unless slip_prob > 0, in which case the action
/// slips to one of the two perpendicular directions with equal chance.
/// The observation of a cell is the id of its alias group, so any
/// partition of the cells defines the degree of partial observability.
class FrozenLake final : public DecPomdp {
 public:
  // Action ids: 0 up, 1 down, 2 left, 3 right.
  static constexpr int kUp = 0, kDown = 1, kLeft = 2, kRight = 3;

  struct Options {
    std::vector<std::vector<int>> alias_groups;  // partition of cell ids; empty = identity
    double gamma = 0.99;
    int horizon = 100;
    double slip_prob = 0.0;
    // Optional non-degenerate start distribution over cell ids. Empty
    // means "start at the S cell".
    std::vector<std::pair<int, double>> start_distribution;
  };

  explicit FrozenLake(const std::string& layout) : FrozenLake(layout, Options{}) {}

  FrozenLake(const std::string& layout, Options opt) : opt_(std::move(opt)) {
    parse_layout(layout);
    build_aliasing();
    validate_starts();
    if (opt_.gamma < 0.0 || opt_.gamma >= 1.0)
      throw InputError("FrozenLake: discount must be in [0,1)");
  }

  std::string name() const override { return "frozen_lake"; }
  int n_agents() const override { return 1; }
  int n_actions() const override { return 4; }
  std::int64_t n_states() const override { return static_cast<std::int64_t>(cells_.size()); }
  std::int64_t n_observations() const override { return n_groups_; }
  double discount() const override { return opt_.gamma; }
  int horizon() const override { return opt_.horizon; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  char cell(StateId s) const { return cells_[static_cast<std::size_t>(s)]; }
  int cell_id(int row, int col) const { return row * cols_ + col; }

  ObsId observe(StateId state, int agent) const override {
    check_state(state);
    if (agent != 0) throw InputError("FrozenLake: single-agent env");
    return group_of_[static_cast<std::size_t>(state)];
  }

  bool terminal(StateId state) const override {
    const char c = cells_[static_cast<std::size_t>(state)];
    return c == 'H' || c == 'G';
  }

  bool won(StateId state) const override {
    return cells_[static_cast<std::size_t>(state)] == 'G';
  }

  double reward(StateId state, const JointAction& u) const override {
    check_state(state);
    check_joint_action(u);
    if (terminal(state)) return 0.0;
    double r = 0.0;
    for (const auto& [ns, p] : transition(state, u))
      if (cells_[static_cast<std::size_t>(ns)] == 'G') r += p;
    return r;
  }

  std::vector<std::pair<StateId, double>> transition(
      StateId state, const JointAction& u) const override {
    check_state(state);
    check_joint_action(u);
    if (terminal(state)) return {{state, 1.0}};
    const ActionId a = u[0];
    if (opt_.slip_prob == 0.0) return {{move(state, a), 1.0}};
    const auto [l, r] = perpendicular(a);
    std::vector<std::pair<StateId, double>> row;
    row.emplace_back(move(state, a), 1.0 - opt_.slip_prob);
    row.emplace_back(move(state, l), opt_.slip_prob / 2.0);
    row.emplace_back(move(state, r), opt_.slip_prob / 2.0);
    return row;
  }

  std::vector<std::pair<StateId, double>> initial_distribution() const override {
    if (!opt_.start_distribution.empty()) {
      std::vector<std::pair<StateId, double>> dist;
      for (const auto& [cell, p] : opt_.start_distribution)
        dist.emplace_back(static_cast<StateId>(cell), p);
      return dist;
    }
    return {{static_cast<StateId>(start_cell_), 1.0}};
  }

 private:
  StateId move(StateId s, ActionId a) const {
    int row = static_cast<int>(s) / cols_;
    int col = static_cast<int>(s) % cols_;
    switch (a) {
      case kUp: row -= 1; break;
      case kDown: row += 1; break;
      case kLeft: col -= 1; break;
      case kRight: col += 1; break;
      default: throw InputError("FrozenLake: invalid action");
    }
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_) return s;  // bounce
    return static_cast<StateId>(cell_id(row, col));
  }

  static std::pair<ActionId, ActionId> perpendicular(ActionId a) {
    if (a == kUp || a == kDown) return {kLeft, kRight};
    return {kUp, kDown};
  }

  void parse_layout(const std::string& layout) {
    std::vector<std::string> row_strs;
    std::string current;
    for (char c : layout) {
      if (c == '/' || c == '\n') {
        if (!current.empty()) row_strs.push_back(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) row_strs.push_back(current);
    if (row_strs.empty()) throw InputError("FrozenLake: empty layout");
    rows_ = static_cast<int>(row_strs.size());
    cols_ = static_cast<int>(row_strs[0].size());
    int n_start = 0, n_goal = 0;
    for (int r = 0; r < rows_; ++r) {
      if (static_cast<int>(row_strs[static_cast<std::size_t>(r)].size()) != cols_)
        throw InputError("FrozenLake: ragged layout at row " + std::to_string(r));
      for (int c = 0; c < cols_; ++c) {
        const char ch = row_strs[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (ch != 'S' && ch != 'F' && ch != 'H' && ch != 'G')
          throw InputError("FrozenLake: bad cell '" + std::string(1, ch) +
                           "' at row " + std::to_string(r) + " col " + std::to_string(c));
        if (ch == 'S') {
          ++n_start;
          start_cell_ = cell_id(r, c);
        }
        if (ch == 'G') ++n_goal;
        cells_.push_back(ch);
      }
    }
    if (n_start != 1) throw InputError("FrozenLake: layout needs exactly one S");
    if (n_goal != 1) throw InputError("FrozenLake: layout needs exactly one G");
  }

  void build_aliasing() {
    const int n = static_cast<int>(cells_.size());
    group_of_.assign(static_cast<std::size_t>(n), -1);
    if (opt_.alias_groups.empty()) {
      for (int i = 0; i < n; ++i) group_of_[static_cast<std::size_t>(i)] = i;
      n_groups_ = n;
      return;
    }
    int gid = 0;
    for (const auto& group : opt_.alias_groups) {
      for (int cell : group) {
        if (cell < 0 || cell >= n)
          throw InputError("FrozenLake: alias group cell out of range: " +
                           std::to_string(cell));
        if (group_of_[static_cast<std::size_t>(cell)] != -1)
          throw InputError("FrozenLake: cell in two alias groups: " +
                           std::to_string(cell));
        group_of_[static_cast<std::size_t>(cell)] = gid;
      }
      ++gid;
    }
    for (int i = 0; i < n; ++i)
      if (group_of_[static_cast<std::size_t>(i)] == -1)
        throw InputError("FrozenLake: alias groups must partition all cells; missing " +
                         std::to_string(i));
    n_groups_ = gid;
  }

  void validate_starts() {
    double total = 0.0;
    for (const auto& [cell, p] : opt_.start_distribution) {
      if (cell < 0 || cell >= static_cast<int>(cells_.size()))
        throw InputError("FrozenLake: start cell out of range");
      if (cells_[static_cast<std::size_t>(cell)] == 'H' ||
          cells_[static_cast<std::size_t>(cell)] == 'G')
        throw InputError("FrozenLake: start cell must not be terminal");
      if (p < 0) throw InputError("FrozenLake: negative start probability");
      total += p;
    }
    if (!opt_.start_distribution.empty() && std::abs(total - 1.0) > 1e-9)
      throw InputError("FrozenLake: start distribution must sum to 1");
  }

  Options opt_;
  std::vector<char> cells_;
  std::vector<ObsId> group_of_;
  int rows_ = 0, cols_ = 0;
  int start_cell_ = 0;
  std::int64_t n_groups_ = 0;
};

/// Convenience used throughout the tests: the classic 4x4 layout.
inline constexpr const char* kFrozenLake4x4 = "SFFF/FHFH/FFFH/HFFG";

inline std::shared_ptr<FrozenLake> make_aliased_frozenlake(
    const std::string& layout, FrozenLake::Options opt = {}) {
  return std::make_shared<FrozenLake>(layout, std::move(opt));
}

}  // namespace vdlab
