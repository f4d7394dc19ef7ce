#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdlab/decpomdp.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/mixer.hpp"
#include "vdlab/rng.hpp"
#include "vdlab/utility_store.hpp"

namespace vdlab {

using nlohmann::json;

/// Checkpoints are versioned JSON dumps of {kind, dims, parameters,
/// version}. Tabular parameters round-trip bit-exactly (the JSON writer
/// emits shortest-round-trip doubles).

inline json store_to_json(const UtilityStore& store) {
  json j;
  j["kind"] = store.kind() == StoreKind::tabular ? "tabular" : "perceptron";
  j["n_actions"] = store.n_actions();
  j["version"] = store.version();
  if (store.kind() == StoreKind::tabular) {
    j["n_inputs"] = store.n_inputs();
  } else {
    j["input_dim"] = store.input_dim();
    j["hidden_dim"] = store.hidden_dim();
    j["one_hot_input"] = store.one_hot_input();
  }
  j["parameters"] = store.raw_parameters();
  return j;
}

/// Rebuilds a store from its checkpoint. Perceptron stores over raw
/// feature inputs need the feature encoder back from the caller (it is
/// derived from the environment and not serializable).
inline UtilityStore store_from_json(const json& j,
                                    const InputEncoder* feature_encoder = nullptr) {
  const std::string kind = j.at("kind").get<std::string>();
  const int n_actions = j.at("n_actions").get<int>();
  UtilityStore store = [&] {
    if (kind == "tabular")
      return UtilityStore::make_tabular(j.at("n_inputs").get<std::int64_t>(), n_actions);
    if (kind != "perceptron") throw ConfigError("checkpoint: unknown store kind " + kind);
    const int input_dim = j.at("input_dim").get<int>();
    const int hidden = j.at("hidden_dim").get<int>();
    InputEncoder enc;
    if (j.at("one_hot_input").get<bool>()) {
      enc = InputEncoder::one_hot(input_dim);
    } else {
      if (!feature_encoder)
        throw ConfigError("checkpoint: feature-input store needs an encoder");
      if (feature_encoder->dim != input_dim)
        throw ConfigError("checkpoint: encoder dim mismatch");
      enc = *feature_encoder;
    }
    Rng dummy(0);
    return UtilityStore::make_perceptron(std::move(enc), hidden, n_actions, dummy);
  }();
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != store.raw_parameters().size())
    throw ConfigError("checkpoint: parameter count mismatch");
  store.raw_parameters() = params;
  store.set_version(j.at("version").get<std::uint64_t>());
  return store;
}

inline json mixer_to_json(const Mixer& mixer) {
  json j;
  j["kind"] = mixer.kind() == MixerKind::additive ? "additive" : "monotonic";
  j["n_agents"] = mixer.n_agents();
  if (mixer.kind() == MixerKind::monotonic) {
    j["state_dim"] = mixer.state_dim();
    j["embed_dim"] = mixer.embed_dim();
    j["hyper_hidden"] = mixer.hyper_hidden();
    j["parameters"] = mixer.params();
  }
  return j;
}

inline Mixer mixer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const int n_agents = j.at("n_agents").get<int>();
  if (kind == "additive") return Mixer::make_additive(n_agents);
  if (kind != "monotonic") throw ConfigError("checkpoint: unknown mixer kind " + kind);
  Rng dummy(0);
  Mixer m = Mixer::make_monotonic(n_agents, j.at("state_dim").get<int>(), dummy,
                                  j.at("embed_dim").get<int>(),
                                  j.at("hyper_hidden").get<int>());
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != m.params().size())
    throw ConfigError("checkpoint: mixer parameter count mismatch");
  m.params() = params;
  return m;
}

/// Whole-run checkpoint: per-agent policy (learner) stores, the expert
/// stores when present, and the mixer.
inline json checkpoint_to_json(const std::vector<UtilityStore>& learners,
                               const std::vector<UtilityStore>& experts,
                               const Mixer& mixer) {
  json j;
  j["learners"] = json::array();
  for (const auto& s : learners) j["learners"].push_back(store_to_json(s));
  j["experts"] = json::array();
  for (const auto& s : experts) j["experts"].push_back(store_to_json(s));
  j["mixer"] = mixer_to_json(mixer);
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace vdlab
