#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "vdlab/decpomdp.hpp"

namespace vdlab {

/// Team skirmish on a small grid: n controlled allies vs scripted
/// opponents. Melee combat (attack range 1), deterministic opponent
/// script, shared reward = damage dealt - damage taken, +10 on
/// eliminating all opponents. The only stochasticity is the initial
/// enemy spawn pattern.
///
/// Observations encode the agent's own attributes (position, health,
/// whether an attack is currently available) plus any enemy within
/// Chebyshev distance sight_radius; sight_radius 0 reveals own
/// attributes only. States are bit-packed unit tuples, so the env is
/// not tabular and exhaustive oracles reject it.
class GridSkirmish final : public DecPomdp {
 public:
  static constexpr int kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kAttack = 4, kNoop = 5;

  struct Config {
    int width = 5;
    int height = 5;
    int n_allies = 3;
    int n_enemies = 3;
    int ally_hp = 3;
    int enemy_hp = 3;
    int sight_radius = 0;
    double gamma = 0.99;
    int horizon = 60;
    double win_bonus = 10.0;
  };

  explicit GridSkirmish(Config cfg) : cfg_(cfg) {
    if (cfg_.width <= 0 || cfg_.height <= 0)
      throw InputError("GridSkirmish: zero-area map");
    if (cfg_.n_allies < 1 || cfg_.n_enemies < 1)
      throw InputError("GridSkirmish: team sizes must be >= 1");
    if (cfg_.sight_radius < 0)
      throw InputError("GridSkirmish: sight_radius must be >= 0");
    if (cfg_.width * cfg_.height > 64)
      throw InputError("GridSkirmish: at most 64 cells supported");
    if (cfg_.ally_hp > 3 || cfg_.enemy_hp > 3 || cfg_.ally_hp < 1 || cfg_.enemy_hp < 1)
      throw InputError("GridSkirmish: hp must be in [1,3]");
    if (cfg_.n_allies + cfg_.n_enemies > 7)
      throw InputError("GridSkirmish: at most 7 units supported");
    build_spawns();
  }

  const Config& config() const { return cfg_; }

  std::string name() const override { return "grid_skirmish"; }
  int n_agents() const override { return cfg_.n_allies; }
  int n_actions() const override { return 6; }
  std::int64_t n_states() const override {
    return std::int64_t{1} << (8 * (cfg_.n_allies + cfg_.n_enemies));
  }
  std::int64_t n_observations() const override {
    const std::int64_t own = own_code_space();
    std::int64_t enemy_cfg = 1;
    for (int e = 0; e < cfg_.n_enemies; ++e) enemy_cfg *= enemy_slot_space();
    return own * enemy_cfg;
  }
  double discount() const override { return cfg_.gamma; }
  int horizon() const override { return cfg_.horizon; }
  bool tabular() const override { return false; }

  // ---- unit tuple packing ------------------------------------------------

  struct Unit {
    int pos = 0;  // cell index, y*width+x
    int hp = 0;   // 0 = dead
  };
  using Units = std::vector<Unit>;  // allies first, then enemies

  Units unpack(StateId s) const {
    const int total = cfg_.n_allies + cfg_.n_enemies;
    Units units(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
      const auto byte = static_cast<int>((static_cast<std::uint64_t>(s) >> (8 * i)) & 0xFF);
      units[static_cast<std::size_t>(i)].pos = byte & 0x3F;
      units[static_cast<std::size_t>(i)].hp = (byte >> 6) & 0x3;
    }
    return units;
  }

  StateId pack(const Units& units) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      const Unit& u = units[i];
      const int pos = u.hp > 0 ? u.pos : 0;  // canonical position for the dead
      s |= (static_cast<std::uint64_t>((u.hp << 6) | pos)) << (8 * i);
    }
    return static_cast<StateId>(s);
  }

  // ---- DecPomdp surface ---------------------------------------------------

  ObsId observe(StateId state, int agent) const override {
    if (agent < 0 || agent >= cfg_.n_allies) throw InputError("GridSkirmish: bad agent");
    const Units units = unpack(state);
    const Unit& self = units[static_cast<std::size_t>(agent)];
    if (self.hp <= 0) return 0;  // reserved id for a dead agent
    std::int64_t own = 1 + (static_cast<std::int64_t>(self.pos) * (max_hp() + 1) + self.hp) * 2 +
                       (attack_available(units, agent) ? 1 : 0);
    std::int64_t id = own;
    for (int e = 0; e < cfg_.n_enemies; ++e) {
      const Unit& foe = units[static_cast<std::size_t>(cfg_.n_allies + e)];
      std::int64_t code = 0;
      if (foe.hp > 0 && cfg_.sight_radius > 0 &&
          chebyshev(self.pos, foe.pos) <= cfg_.sight_radius) {
        const int r = cfg_.sight_radius;
        const int dx = x_of(foe.pos) - x_of(self.pos) + r;
        const int dy = y_of(foe.pos) - y_of(self.pos) + r;
        code = 1 + (static_cast<std::int64_t>(dy) * (2 * r + 1) + dx) * max_hp() +
               (foe.hp - 1);
      }
      id = id * enemy_slot_space() + code;
    }
    return id;
  }

  bool terminal(StateId state) const override {
    const Units units = unpack(state);
    return team_dead(units, false) || team_dead(units, true);
  }

  bool won(StateId state) const override {
    const Units units = unpack(state);
    return team_dead(units, /*enemies=*/true) && !team_dead(units, false);
  }

  double reward(StateId state, const JointAction& u) const override {
    double r = 0.0;
    simulate(state, u, &r);
    return r;
  }

  std::vector<std::pair<StateId, double>> transition(
      StateId state, const JointAction& u) const override {
    double r = 0.0;
    return {{simulate(state, u, &r), 1.0}};
  }

  StepResult step(StateId state, const JointAction& u, Rng& rng) const override {
    (void)rng;  // dynamics are deterministic
    check_joint_action(u);
    double r = 0.0;
    const StateId next = simulate(state, u, &r);
    return StepResult{next, r, terminal(next)};
  }

  std::vector<std::pair<StateId, double>> initial_distribution() const override {
    std::vector<std::pair<StateId, double>> dist;
    const double p = 1.0 / static_cast<double>(spawns_.size());
    for (StateId s : spawns_) dist.emplace_back(s, p);
    return dist;
  }

  // ---- state features for approximators ----------------------------------

  int state_feature_dim() const override {
    return 4 * (cfg_.n_allies + cfg_.n_enemies) + cfg_.n_allies;
  }

  void state_features(StateId state, std::vector<double>& out) const override {
    const Units units = unpack(state);
    out.assign(static_cast<std::size_t>(state_feature_dim()), 0.0);
    std::size_t k = 0;
    for (const Unit& u : units) {
      out[k++] = static_cast<double>(x_of(u.pos)) / cfg_.width;
      out[k++] = static_cast<double>(y_of(u.pos)) / cfg_.height;
      out[k++] = static_cast<double>(u.hp) / max_hp();
      out[k++] = u.hp > 0 ? 1.0 : 0.0;
    }
    for (int a = 0; a < cfg_.n_allies; ++a)
      out[k++] = attack_available(units, a) ? 1.0 : 0.0;
  }

 private:
  int x_of(int pos) const { return pos % cfg_.width; }
  int y_of(int pos) const { return pos / cfg_.width; }
  int max_hp() const { return std::max(cfg_.ally_hp, cfg_.enemy_hp); }
  std::int64_t own_code_space() const {
    return 1 + static_cast<std::int64_t>(cfg_.width * cfg_.height) * (max_hp() + 1) * 2;
  }
  std::int64_t enemy_slot_space() const {
    if (cfg_.sight_radius == 0) return 1;
    const int r = cfg_.sight_radius;
    return 1 + static_cast<std::int64_t>((2 * r + 1) * (2 * r + 1)) * max_hp();
  }

  int chebyshev(int a, int b) const {
    return std::max(std::abs(x_of(a) - x_of(b)), std::abs(y_of(a) - y_of(b)));
  }

  bool attack_available(const Units& units, int agent) const {
    const Unit& self = units[static_cast<std::size_t>(agent)];
    if (self.hp <= 0) return false;
    for (int e = 0; e < cfg_.n_enemies; ++e) {
      const Unit& foe = units[static_cast<std::size_t>(cfg_.n_allies + e)];
      if (foe.hp > 0 && chebyshev(self.pos, foe.pos) <= 1) return true;
    }
    return false;
  }

  bool team_dead(const Units& units, bool enemies) const {
    const int begin = enemies ? cfg_.n_allies : 0;
    const int count = enemies ? cfg_.n_enemies : cfg_.n_allies;
    for (int i = begin; i < begin + count; ++i)
      if (units[static_cast<std::size_t>(i)].hp > 0) return false;
    return true;
  }

  bool occupied(const Units& units, int pos) const {
    for (const Unit& u : units)
      if (u.hp > 0 && u.pos == pos) return true;
    return false;
  }

  int moved(int pos, int action) const {
    int x = x_of(pos), y = y_of(pos);
    switch (action) {
      case kUp: y -= 1; break;
      case kDown: y += 1; break;
      case kLeft: x -= 1; break;
      case kRight: x += 1; break;
      default: return pos;
    }
    if (x < 0 || x >= cfg_.width || y < 0 || y >= cfg_.height) return pos;
    return y * cfg_.width + x;
  }

  /// Nearest living unit of the other team; ties broken by unit index.
  int nearest_opponent(const Units& units, int from_pos, bool opponent_is_enemy) const {
    const int begin = opponent_is_enemy ? cfg_.n_allies : 0;
    const int count = opponent_is_enemy ? cfg_.n_enemies : cfg_.n_allies;
    int best = -1, best_d = 1 << 20;
    for (int i = begin; i < begin + count; ++i) {
      const Unit& u = units[static_cast<std::size_t>(i)];
      if (u.hp <= 0) continue;
      const int d = chebyshev(from_pos, u.pos);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  /// One full turn: ally moves and attacks in index order, then scripted
  /// enemies. Returns the packed successor; *reward_out receives the
  /// shared reward for the turn.
  StateId simulate(StateId state, const JointAction& actions, double* reward_out) const {
    check_joint_action(actions);
    Units units = unpack(state);
    double reward = 0.0;
    if (terminal(state)) {
      *reward_out = 0.0;
      return state;
    }

    // Ally phase.
    for (int a = 0; a < cfg_.n_allies; ++a) {
      Unit& self = units[static_cast<std::size_t>(a)];
      if (self.hp <= 0) continue;
      const int act = actions[static_cast<std::size_t>(a)];
      if (act == kAttack) {
        const int target = nearest_opponent(units, self.pos, /*enemy=*/true);
        if (target >= 0 &&
            chebyshev(self.pos, units[static_cast<std::size_t>(target)].pos) <= 1) {
          units[static_cast<std::size_t>(target)].hp -= 1;
          reward += 1.0;
        }
      } else if (act != kNoop) {
        const int dst = moved(self.pos, act);
        if (dst != self.pos && !occupied(units, dst)) self.pos = dst;
      }
    }

    if (team_dead(units, /*enemies=*/true)) {
      reward += cfg_.win_bonus;
      *reward_out = reward;
      return pack(units);
    }

    // Enemy phase: attack if adjacent, otherwise close in on the nearest
    // ally along the longer axis.
    for (int e = 0; e < cfg_.n_enemies; ++e) {
      Unit& self = units[static_cast<std::size_t>(cfg_.n_allies + e)];
      if (self.hp <= 0) continue;
      const int target = nearest_opponent(units, self.pos, /*enemy=*/false);
      if (target < 0) break;
      Unit& victim = units[static_cast<std::size_t>(target)];
      if (chebyshev(self.pos, victim.pos) <= 1) {
        victim.hp -= 1;
        reward -= 1.0;
        continue;
      }
      const int dx = x_of(victim.pos) - x_of(self.pos);
      const int dy = y_of(victim.pos) - y_of(self.pos);
      int first = std::abs(dx) >= std::abs(dy) ? (dx > 0 ? kRight : kLeft)
                                               : (dy > 0 ? kDown : kUp);
      int second = std::abs(dx) >= std::abs(dy) ? (dy > 0 ? kDown : (dy < 0 ? kUp : kNoop))
                                                : (dx > 0 ? kRight : (dx < 0 ? kLeft : kNoop));
      int dst = moved(self.pos, first);
      if (dst == self.pos || occupied(units, dst)) {
        if (second != kNoop) {
          dst = moved(self.pos, second);
          if (dst != self.pos && !occupied(units, dst)) self.pos = dst;
        }
      } else {
        self.pos = dst;
      }
    }

    *reward_out = reward;
    return pack(units);
  }

  void build_spawns() {
    // Allies line up along the left edge; enemies appear in one of four
    // corner-ish formations on the right half. The spawn pattern is the
    // hidden information a sight-0 agent cannot see.
    Units base(static_cast<std::size_t>(cfg_.n_allies + cfg_.n_enemies));
    for (int a = 0; a < cfg_.n_allies; ++a) {
      const int y = (a * cfg_.height) / cfg_.n_allies + (cfg_.height / cfg_.n_allies) / 2;
      base[static_cast<std::size_t>(a)] =
          Unit{std::min(y, cfg_.height - 1) * cfg_.width + 0, cfg_.ally_hp};
    }
    const int ex = cfg_.width - 1;
    std::vector<std::vector<int>> formations = {
        {0},                       // top right
        {cfg_.height - 1},         // bottom right
        {cfg_.height / 2},         // middle right
        {0, cfg_.height - 1},      // split
    };
    for (const auto& rows : formations) {
      Units units = base;
      for (int e = 0; e < cfg_.n_enemies; ++e) {
        const int anchor = rows[static_cast<std::size_t>(e) % rows.size()];
        int y = anchor;
        int x = ex;
        // stack additional units next to the anchor, staying in bounds
        const int slot = e / static_cast<int>(rows.size());
        y = std::clamp(anchor + (anchor == 0 ? slot : -slot), 0, cfg_.height - 1);
        Unit candidate{y * cfg_.width + x, cfg_.enemy_hp};
        while (occupied_by(units, candidate.pos)) {
          x -= 1;
          if (x < 0) throw InputError("GridSkirmish: spawn overflow");
          candidate.pos = y * cfg_.width + x;
        }
        units[static_cast<std::size_t>(cfg_.n_allies + e)] = candidate;
      }
      spawns_.push_back(pack(units));
    }
  }

  bool occupied_by(const Units& units, int pos) const {
    for (const Unit& u : units)
      if (u.hp > 0 && u.pos == pos) return true;
    return false;
  }

  Config cfg_;
  std::vector<StateId> spawns_;
};

inline std::shared_ptr<GridSkirmish> make_grid_skirmish(GridSkirmish::Config cfg) {
  return std::make_shared<GridSkirmish>(cfg);
}

}  // namespace vdlab
