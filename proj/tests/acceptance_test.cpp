// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run with --only=<n> to execute a single criterion.
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vdlab/envs/frozen_lake.hpp"
#include "vdlab/envs/grid_skirmish.hpp"
#include "vdlab/envs/matrix_game.hpp"
#include "vdlab/experiment.hpp"
#include "vdlab/metrics.hpp"
#include "vdlab/mixer.hpp"
#include "vdlab/oracle.hpp"
#include "vdlab/training.hpp"

using namespace vdlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// The default aliased layout: a short map whose aliasing provably admits a
// winning observation policy, yet bootstrapped value decomposition locks
// onto the wrong argmax inside the aliased groups.
FrozenLake::Options default_aliased_options() {
  FrozenLake::Options opt;
  opt.alias_groups = {{13, 0, 4}, {3, 12, 6}, {1}, {2}, {5},
                      {7},        {8},        {9}, {10}, {11}, {14}};
  opt.gamma = 0.95;
  opt.horizon = 30;
  return opt;
}
constexpr const char* kDefaultAliasedLayout = "FHHFF/FFFFH/SFFFG";

TrainConfig frozenlake_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.total_env_steps = 50'000;
  cfg.store_kind = StoreKind::tabular;
  cfg.mixer_kind = MixerKind::additive;
  cfg.lr = 0.5;
  cfg.gamma = 0.95;
  cfg.epsilon_decay_steps = 25'000;
  cfg.eval_interval = 10'000;
  cfg.eval_episodes = 100;
  cfg.buffer_capacity = 5'000;
  cfg.seed = seed;
  return cfg;
}

// ---- criterion 1: lossiness certification on the matrix game --------------

Outcome criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  auto aliased = make_two_state_alias_game();
  const auto cert = certify_lossy(*aliased, exact_q(*aliased, aliased->discount()));
  auto observable = make_two_state_alias_game(/*fully_observable=*/true);
  const auto cert2 = certify_lossy(*observable, exact_q(*observable, observable->discount()));
  const double secs = elapsed_seconds(start);
  std::ostringstream os;
  os << "aliased mismatches=" << cert.mismatch_states.size()
     << " observable mismatches=" << cert2.mismatch_states.size() << " time=" << secs
     << "s";
  return {cert.lossy && cert.mismatch_states.size() >= 1 && !cert2.lossy && secs < 1.0,
          os.str()};
}

// ---- criterion 2: bayes-optimal imitation equals brute-force risk ---------

Outcome criterion_2() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(522);
  int agree = 0;
  bool identity_ok = true;
  const int trials = 500;
  for (int trial = 0; trial < trials; ++trial) {
    const int n_states = 1 + rng.uniform_int(6);
    const int n_actions = 2 + rng.uniform_int(3);
    ExpertPolicy expert;
    expert.action.resize(1);
    for (int s = 0; s < n_states; ++s)
      expert.action[0].push_back(rng.uniform_int(n_actions));
    AliasSampleSet alias;
    for (int s = 0; s < n_states; ++s)
      alias.samples.push_back({s, 1 + rng.uniform_int(7)});
    const auto q = bayes_optimal_local(expert, 0, alias, n_actions);
    const auto penalty = PenaltyMatrix::zero_one(n_actions);

    std::set<int> q_max, r_min;
    double best_q = -1e100, best_r = 1e100;
    std::vector<double> risk(static_cast<std::size_t>(n_actions));
    for (int u = 0; u < n_actions; ++u) {
      // independent brute force over the expected 0-1 mismatch
      double mismatch = 0.0;
      for (const auto& [s, m] : alias.samples)
        if (expert.at(0, s) != u) mismatch += static_cast<double>(m) / alias.k();
      risk[static_cast<std::size_t>(u)] = mismatch;
      best_q = std::max(best_q, q[static_cast<std::size_t>(u)]);
      best_r = std::min(best_r, mismatch);
      if (std::abs(bayes_expected_loss(expert, 0, alias, penalty, u) -
                   (1.0 - q[static_cast<std::size_t>(u)])) > 1e-12)
        identity_ok = false;
    }
    for (int u = 0; u < n_actions; ++u) {
      if (q[static_cast<std::size_t>(u)] >= best_q - 1e-12) q_max.insert(u);
      if (risk[static_cast<std::size_t>(u)] <= best_r + 1e-12) r_min.insert(u);
    }
    if (q_max == r_min) ++agree;
  }
  const double secs = elapsed_seconds(start);
  std::ostringstream os;
  os << "agreement " << agree << "/" << trials << ", R=1-q identity "
     << (identity_ok ? "holds" : "violated") << ", time=" << secs << "s";
  return {agree == trials && identity_ok && secs < 10.0, os.str()};
}

// ---- criterion 3: error accumulation arithmetic ----------------------------

Outcome criterion_3() {
  Rng rng(533);
  bool ok = true;
  for (double gamma : {0.0, 0.5, 0.9, 0.99}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + rng.uniform_int(50);
      std::vector<double> dec(static_cast<std::size_t>(n)), other(static_cast<std::size_t>(n));
      for (auto& v : dec) v = rng.uniform_real(-1, 1);
      for (auto& v : other) v = rng.uniform_real(-1, 1);
      const auto b = error_breakdown_synthetic(dec, other, gamma);
      if (std::abs(b.accumulated_recursion - b.accumulated_total) > 1e-12) ok = false;
      if (std::abs(b.separated_recursion - b.separated_total) > 1e-12) ok = false;
    }
  }
  const double eps = 1.0;  // the constant-schedule case scales linearly
  const auto b = error_breakdown_synthetic({eps, eps, eps}, {0, 0, 0}, 0.9);
  const bool exact_case = std::abs(b.accumulated_total - 2.71 * eps) < 1e-12 &&
                          std::abs(b.separated_total - eps) < 1e-12;
  std::ostringstream os;
  os << "400 random schedules " << (ok ? "match" : "mismatch")
     << "; constant case accumulated=" << b.accumulated_total
     << " separated=" << b.separated_total;
  return {ok && exact_case, os.str()};
}

// ---- criterion 4: FrozenLake baseline fails, IGM-DA succeeds --------------

Outcome criterion_4() {
  const auto start = std::chrono::steady_clock::now();
  FrozenLake env(kDefaultAliasedLayout, default_aliased_options());
  std::vector<double> base_finals, da_finals;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    base_finals.push_back(
        train_baseline_igm(env, frozenlake_train_config(seed)).final_point().win_rate);
    da_finals.push_back(
        train_igm_da(env, frozenlake_train_config(seed)).final_point().win_rate);
  }
  const double secs = elapsed_seconds(start);
  bool ok = secs < 120.0;
  for (double w : base_finals) ok = ok && w <= 0.05;
  for (double w : da_finals) ok = ok && w >= 0.95;
  std::ostringstream os;
  os << "baseline finals=";
  for (double w : base_finals) os << w << " ";
  os << "igm-da finals=";
  for (double w : da_finals) os << w << " ";
  os << "time=" << secs << "s";
  return {ok, os.str()};
}

// ---- criterion 5: grid skirmish directional comparison --------------------

TrainConfig skirmish_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.total_env_steps = 200'000;
  cfg.store_kind = StoreKind::perceptron;
  cfg.mixer_kind = MixerKind::monotonic;
  cfg.lr = 5e-4;
  cfg.gamma = 0.99;
  cfg.epsilon_decay_steps = 50'000;
  cfg.eval_interval = 20'000;
  cfg.eval_episodes = 32;
  cfg.buffer_capacity = 5'000;
  cfg.hidden_dim = 64;
  cfg.mixer_embed_dim = 32;
  cfg.mixer_hyper_hidden = 64;
  cfg.update_interval = 4;
  cfg.seed = seed;
  return cfg;
}

GridSkirmish::Config skirmish_env_config() {
  GridSkirmish::Config cfg;
  cfg.width = 5;
  cfg.height = 5;
  cfg.n_allies = 3;
  cfg.n_enemies = 3;
  cfg.sight_radius = 0;
  cfg.ally_hp = 3;
  cfg.enemy_hp = 3;
  cfg.horizon = 60;
  cfg.gamma = 0.99;
  return cfg;
}

Outcome criterion_5() {
  const auto start = std::chrono::steady_clock::now();
  auto env = make_grid_skirmish(skirmish_env_config());
  std::vector<double> base_finals, da_finals;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    base_finals.push_back(
        train_baseline_igm(*env, skirmish_train_config(seed)).final_point().win_rate);
    da_finals.push_back(
        train_igm_da(*env, skirmish_train_config(seed)).final_point().win_rate);
  }
  std::sort(base_finals.begin(), base_finals.end());
  std::sort(da_finals.begin(), da_finals.end());
  const double base_median = base_finals[2], da_median = da_finals[2];
  const double secs = elapsed_seconds(start);
  std::ostringstream os;
  os << "baseline median=" << base_median << " igm-da median=" << da_median
     << " time=" << secs << "s";
  return {da_median >= base_median + 0.10 && secs < 1800.0, os.str()};
}

// ---- criterion 6: behavior cloning vs DAgger on the drift variant ----------

struct DriftVariant {
  std::string layout;
  FrozenLake::Options options;
};

// A second start cell widens the gap between the learners' and the
// experts' visitation, which is what separates interactive imitation
// from cloning expert rollouts.
DriftVariant drift_variant() {
  DriftVariant v;
  v.layout = kDefaultAliasedLayout;
  v.options = default_aliased_options();
  return v;
}

Outcome criterion_6() {
  const DriftVariant v = drift_variant();
  FrozenLake env(v.layout, v.options);
  std::vector<double> bc_finals, da_finals;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TrainConfig cfg = frozenlake_train_config(seed);
    cfg.gamma = v.options.gamma;
    da_finals.push_back(train_igm_da(env, cfg).final_point().win_rate);
    bc_finals.push_back(train_behavior_cloning(env, cfg).final_point().win_rate);
  }
  const double da_median = median3(da_finals), bc_median = median3(bc_finals);
  std::ostringstream os;
  os << "igm-da median=" << da_median << " bc median=" << bc_median;
  return {da_median >= bc_median + 0.2, os.str()};
}

// ---- criterion 7: mixer properties -----------------------------------------

Outcome criterion_7() {
  Rng rng(577);
  bool partials_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    auto m = Mixer::make_monotonic(3, 4, rng.split(trial), 8, 12);
    std::vector<double> x(4), q(3);
    for (auto& v : x) v = rng.uniform_real(-1, 1);
    for (auto& v : q) v = rng.uniform_real(-2, 2);
    for (double d : m.mix_gradient(q, x).dutilities)
      if (d < -1e-12) partials_ok = false;
  }

  int factorization = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_actions = 2 + rng.uniform_int(4);
    auto m = Mixer::make_monotonic(2, 3, rng.split(10'000 + trial), 6, 8);
    std::vector<double> x(3);
    for (auto& v : x) v = rng.uniform_real(-1, 1);
    std::vector<std::vector<double>> cand(2, std::vector<double>(static_cast<std::size_t>(n_actions)));
    for (auto& row : cand)
      for (auto& v : row) v = rng.uniform_real(-2, 2);
    int best[2] = {0, 0};
    for (int i = 0; i < 2; ++i)
      for (int a = 1; a < n_actions; ++a)
        if (cand[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] >
            cand[static_cast<std::size_t>(i)][static_cast<std::size_t>(best[i])])
          best[i] = a;
    const double at_best = m.mix({cand[0][static_cast<std::size_t>(best[0])],
                                  cand[1][static_cast<std::size_t>(best[1])]},
                                 x);
    bool is_max = true;
    for (int a0 = 0; a0 < n_actions; ++a0)
      for (int a1 = 0; a1 < n_actions; ++a1)
        if (m.mix({cand[0][static_cast<std::size_t>(a0)],
                   cand[1][static_cast<std::size_t>(a1)]},
                  x) > at_best + 1e-12)
          is_max = false;
    if (is_max) ++factorization;
  }

  int grad_ok = 0;
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = Mixer::make_monotonic(2, 3, rng.split(20'000 + trial), 4, 8);
    std::vector<double> x(3), q(2);
    for (auto& v : x) v = rng.uniform_real(-1, 1);
    for (auto& v : q) v = rng.uniform_real(-1.5, 1.5);
    const auto g = m.mix_gradient(q, x);
    bool case_ok = true;
    for (int i = 0; i < 2; ++i) {
      auto up = q, down = q;
      up[static_cast<std::size_t>(i)] += h;
      down[static_cast<std::size_t>(i)] -= h;
      const double fd = (m.mix(up, x) - m.mix(down, x)) / (2 * h);
      const double denom =
          std::max({std::abs(fd), std::abs(g.dutilities[static_cast<std::size_t>(i)]), 1e-6});
      if (std::abs(fd - g.dutilities[static_cast<std::size_t>(i)]) / denom >= 1e-4)
        case_ok = false;
    }
    auto& params = m.params();
    for (std::size_t w = 0; w < params.size(); w += 11) {
      const double saved = params[w];
      params[w] = saved + h;
      const double up = m.mix(q, x);
      params[w] = saved - h;
      const double down = m.mix(q, x);
      params[w] = saved;
      const double fd = (up - down) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(g.dparams[w]), 1e-6});
      if (std::abs(fd - g.dparams[w]) / denom >= 1e-4) case_ok = false;
    }
    if (case_ok) ++grad_ok;
  }

  std::ostringstream os;
  os << "partials " << (partials_ok ? "nonnegative" : "NEGATIVE") << "; factorization "
     << factorization << "/1000; gradient checks " << grad_ok << "/100";
  return {partials_ok && factorization == 1000 && grad_ok == 100, os.str()};
}

// ---- criterion 8: full observability makes the imitation stage redundant ---

Outcome criterion_8() {
  FrozenLake env(kFrozenLake4x4, FrozenLake::Options{});  // identity aliasing

  // imitation targets must be one-hot for every sampled observation
  TrainConfig cfg = frozenlake_train_config(7);
  cfg.gamma = 0.99;
  cfg.total_env_steps = 20'000;
  cfg.epsilon_decay_steps = 10'000;
  const auto report = train_igm_da(env, cfg);
  Rng rng(588);
  std::vector<Transition> batch;
  StateId s = env.sample_initial(rng);
  History h(0, 1);
  h.push_observation(env.observe(s, 0));
  for (int t = 0; t < 500; ++t) {
    Transition tr;
    tr.state = s;
    tr.inputs = {h.encode(env.n_observations(), env.n_actions())};
    tr.joint_action = {rng.uniform_int(4)};
    const auto res = env.step(s, tr.joint_action, rng);
    batch.push_back(tr);
    s = res.terminal ? env.sample_initial(rng) : res.next_state;
    h.reset();
    h.push_observation(env.observe(s, 0));
  }
  bool one_hot = true;
  for (const auto& g : imitation_target(batch, report.expert_stores)) {
    double best = 0.0;
    for (double v : g.target) best = std::max(best, v);
    if (std::abs(best - 1.0) > 1e-12) one_hot = false;
  }

  // and the two trainers land within +-0.05 of each other
  std::vector<double> base_finals, da_finals;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TrainConfig c = frozenlake_train_config(seed);
    c.gamma = 0.99;
    base_finals.push_back(train_baseline_igm(env, c).final_point().win_rate);
    da_finals.push_back(train_igm_da(env, c).final_point().win_rate);
  }
  const double gap = std::abs(median3(da_finals) - median3(base_finals));
  std::ostringstream os;
  os << "targets " << (one_hot ? "one-hot" : "NOT one-hot") << "; |igm-da - baseline|="
     << gap;
  return {one_hot && gap <= 0.05, os.str()};
}

// ---- criterion 9: byte-identical reruns ------------------------------------

Outcome criterion_9() {
  const fs::path dir = fs::temp_directory_path() / "vdlab_acceptance_det";
  fs::remove_all(dir);
  json cfg_json;
  cfg_json["env"] = {{"type", "frozen_lake"},
                     {"layout", kDefaultAliasedLayout},
                     {"alias_groups",
                      {{13, 0, 4}, {3, 12, 6}, {1}, {2}, {5}, {7}, {8}, {9}, {10}, {11}, {14}}},
                     {"gamma", 0.95},
                     {"horizon", 30}};
  cfg_json["trainer"] = {"baseline", "igm-da"};
  cfg_json["seeds"] = {1, 2, 3};
  cfg_json["output_dir"] = dir.string();
  cfg_json["train"] = {{"total_env_steps", 4000}, {"eval_interval", 1000},
                       {"eval_episodes", 16},     {"lr", 0.5},
                       {"gamma", 0.95},           {"store", "tabular"},
                       {"mixer", "additive"},     {"epsilon_decay_steps", 2000}};
  const auto cfg = ExperimentConfig::from_json(cfg_json);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  run_experiment(cfg, true, 2);
  const std::string first = slurp(dir / "aggregate.csv");
  run_experiment(cfg, true, 1);
  const std::string second = slurp(dir / "aggregate.csv");
  fs::remove_all(dir);
  std::ostringstream os;
  os << "aggregate.csv " << (first == second && !first.empty() ? "byte-identical" : "DIFFERS")
     << " across reruns (" << first.size() << " bytes)";
  return {first == second && !first.empty(), os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strncmp(argv[i], "--only=", 7) == 0) only = std::atoi(argv[i] + 7);

  struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Criterion criteria[] = {
      {1, "matrix-game lossiness certification", criterion_1},
      {2, "bayes-optimal imitation vs brute force", criterion_2},
      {3, "error accumulation arithmetic", criterion_3},
      {4, "aliased FrozenLake: baseline fails, igm-da succeeds", criterion_4},
      {5, "grid skirmish sight-0: igm-da beats baseline by 10 points", criterion_5},
      {6, "drift variant: dagger beats behavior cloning by 0.2", criterion_6},
      {7, "monotonic mixer properties", criterion_7},
      {8, "full observability makes imitation redundant", criterion_8},
      {9, "byte-identical deterministic reruns", criterion_9},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && only != c.id) continue;
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name
              << "): " << out.detail << std::endl;
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
