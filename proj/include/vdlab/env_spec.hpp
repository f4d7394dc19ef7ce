#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdlab/decpomdp.hpp"
#include "vdlab/envs/frozen_lake.hpp"
#include "vdlab/envs/grid_skirmish.hpp"
#include "vdlab/envs/matrix_game.hpp"
#include "vdlab/errors.hpp"

namespace vdlab {

using nlohmann::json;

/// Builds an environment from its JSON spec:
///   {"type": "frozen_lake", "layout": "SFFF/...", "alias_groups": [[..],..],
///    "gamma"?, "horizon"?, "slip_prob"?, "start_distribution"?: [[cell,p],..]}
///   {"type": "matrix_game", "n_agents", "n_actions", "payoffs": [[..],..],
///    "state_cycle"?, "fully_observable"?, "gamma"?}
///   {"type": "grid_skirmish", "skirmish": {"width","height","allies","enemies",
///    "sight_radius", "ally_hp"?, "enemy_hp"?, "horizon"?, "gamma"?, "win_bonus"?,
///    "seed"?}}
inline std::shared_ptr<DecPomdp> build_env(const json& spec) {
  if (!spec.contains("type"))
    throw ConfigError("env spec: missing field 'type'");
  const std::string type = spec.at("type").get<std::string>();
  try {
    if (type == "frozen_lake") {
      FrozenLake::Options opt;
      if (spec.contains("alias_groups"))
        opt.alias_groups = spec.at("alias_groups").get<std::vector<std::vector<int>>>();
      if (spec.contains("gamma")) opt.gamma = spec.at("gamma").get<double>();
      if (spec.contains("horizon")) opt.horizon = spec.at("horizon").get<int>();
      if (spec.contains("slip_prob")) opt.slip_prob = spec.at("slip_prob").get<double>();
      if (spec.contains("start_distribution"))
        for (const auto& entry : spec.at("start_distribution"))
          opt.start_distribution.emplace_back(entry.at(0).get<int>(),
                                              entry.at(1).get<double>());
      return make_aliased_frozenlake(spec.at("layout").get<std::string>(), std::move(opt));
    }
    if (type == "matrix_game") {
      MatrixGame::Options opt;
      if (spec.contains("gamma")) opt.gamma = spec.at("gamma").get<double>();
      if (spec.contains("fully_observable"))
        opt.fully_observable = spec.at("fully_observable").get<bool>();
      if (spec.contains("state_cycle"))
        opt.state_cycle = spec.at("state_cycle").get<std::vector<int>>();
      return make_matrix_game(spec.at("n_agents").get<int>(),
                              spec.at("n_actions").get<int>(),
                              spec.at("payoffs").get<std::vector<std::vector<double>>>(),
                              std::move(opt));
    }
    if (type == "grid_skirmish") {
      const json& sk = spec.at("skirmish");
      GridSkirmish::Config cfg;
      cfg.width = sk.at("width").get<int>();
      cfg.height = sk.at("height").get<int>();
      cfg.n_allies = sk.at("allies").get<int>();
      cfg.n_enemies = sk.at("enemies").get<int>();
      if (sk.contains("sight_radius")) cfg.sight_radius = sk.at("sight_radius").get<int>();
      if (sk.contains("ally_hp")) cfg.ally_hp = sk.at("ally_hp").get<int>();
      if (sk.contains("enemy_hp")) cfg.enemy_hp = sk.at("enemy_hp").get<int>();
      if (sk.contains("horizon")) cfg.horizon = sk.at("horizon").get<int>();
      if (sk.contains("gamma")) cfg.gamma = sk.at("gamma").get<double>();
      if (sk.contains("win_bonus")) cfg.win_bonus = sk.at("win_bonus").get<double>();
      return make_grid_skirmish(cfg);
    }
  } catch (const json::exception& e) {
    throw ConfigError("env spec (" + type + "): " + e.what());
  }
  throw ConfigError("env spec: unknown type '" + type + "'");
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::shared_ptr<DecPomdp> load_env(const std::string& path) {
  return build_env(load_json_file(path));
}

}  // namespace vdlab
