#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vdlab/decpomdp.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/mixer.hpp"
#include "vdlab/oracle.hpp"
#include "vdlab/replay_buffer.hpp"
#include "vdlab/rng.hpp"
#include "vdlab/utility_store.hpp"

namespace vdlab {

enum class TrainerKind { baseline_igm, igm_da, behavior_cloning };

inline std::string trainer_name(TrainerKind k) {
  switch (k) {
    case TrainerKind::baseline_igm: return "baseline";
    case TrainerKind::igm_da: return "igm-da";
    case TrainerKind::behavior_cloning: return "bc";
  }
  return "?";
}

struct TrainConfig {
  std::int64_t total_env_steps = 50'000;
  int batch_size = 32;
  int buffer_capacity = 5'000;
  double lr = 5e-4;  // both the value-decomposition and the imitation part
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  std::int64_t epsilon_decay_steps = 50'000;
  bool allow_epsilon_below_floor = false;
  int target_update_interval = 200;  // in updates
  double gamma = 0.99;
  std::uint64_t seed = 0;
  MixerKind mixer_kind = MixerKind::monotonic;
  StoreKind store_kind = StoreKind::tabular;
  int imitation_batches_per_rl_update = 1;
  int history_window = 1;
  int hidden_dim = 64;        // perceptron stores
  int mixer_embed_dim = 32;
  int mixer_hyper_hidden = 64;
  std::int64_t eval_interval = 5'000;
  int eval_episodes = 32;
  int update_interval = 1;  // env steps between learning updates

  void validate() const {
    if (total_env_steps <= 0) throw ConfigError("total_env_steps must be > 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be > 0");
    if (buffer_capacity < batch_size) throw ConfigError("buffer smaller than batch");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0,1)");
    if (epsilon_end < 0.1 - 1e-12 && !allow_epsilon_below_floor)
      throw ConfigError(
          "epsilon floor is 0.1; set allow_epsilon_below_floor to override");
    if (epsilon_start < epsilon_end) throw ConfigError("epsilon_start < epsilon_end");
    if (epsilon_start > 1.0 || epsilon_end < 0.0)
      throw ConfigError("epsilon schedule outside [0,1]");
    if (history_window < 1 || history_window > 4)
      throw ConfigError("history_window must be in [1,4]");
    if (update_interval < 1) throw ConfigError("update_interval must be >= 1");
    if (eval_interval <= 0) throw ConfigError("eval_interval must be > 0");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    if (lr <= 0) throw ConfigError("lr must be > 0");
  }

  double epsilon_at(std::int64_t env_step) const {
    if (env_step >= epsilon_decay_steps) return epsilon_end;
    const double frac = static_cast<double>(env_step) /
                        static_cast<double>(epsilon_decay_steps);
    return epsilon_start + frac * (epsilon_end - epsilon_start);
  }
};

struct EvalPoint {
  std::int64_t env_steps = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;
  double rl_loss = 0.0;
  double imitation_loss = 0.0;
};

struct TrainReport {
  TrainerKind kind = TrainerKind::baseline_igm;
  std::vector<EvalPoint> points;
  std::vector<UtilityStore> policy_stores;   // what greedy evaluation uses
  std::vector<UtilityStore> expert_stores;   // empty for the baseline
  std::shared_ptr<Mixer> mixer;
  bool diverged = false;
  std::string divergence_message;

  const EvalPoint& final_point() const {
    if (points.empty()) throw InputError("TrainReport: no evaluation points");
    return points.back();
  }
};

/// One-hot expert action distributions at a global state, one row per
/// agent. Rows are exact indicator vectors by construction.
inline std::vector<std::vector<double>> expert_greedy(
    const std::vector<UtilityStore>& experts, StateId state) {
  std::vector<std::vector<double>> rows;
  rows.reserve(experts.size());
  for (const auto& store : experts) {
    std::vector<double> row(static_cast<std::size_t>(store.n_actions()), 0.0);
    row[static_cast<std::size_t>(store.greedy(state))] = 1.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Imitation regression targets grouped by (agent, learner input id):
/// for each group with k member transitions, target(u) is the mean of
/// the experts' one-hot action probabilities at the member global states.
/// Targets over u sum to 1 per group.
struct ImitationGroup {
  int agent = 0;
  std::int64_t input = 0;
  int k = 0;
  std::vector<double> target;  // per action
};

inline std::vector<ImitationGroup> imitation_target(
    const std::vector<Transition>& batch, const std::vector<UtilityStore>& experts) {
  if (batch.empty()) return {};
  const int n_agents = static_cast<int>(experts.size());
  const int n_actions = experts.front().n_actions();
  std::map<std::pair<int, std::int64_t>, ImitationGroup> groups;
  for (const Transition& t : batch) {
    for (int i = 0; i < n_agents; ++i) {
      const std::int64_t input = t.inputs[static_cast<std::size_t>(i)];
      auto& g = groups[{i, input}];
      if (g.target.empty()) {
        g.agent = i;
        g.input = input;
        g.target.assign(static_cast<std::size_t>(n_actions), 0.0);
      }
      g.k += 1;
      g.target[static_cast<std::size_t>(
          experts[static_cast<std::size_t>(i)].greedy(t.state))] += 1.0;
    }
  }
  std::vector<ImitationGroup> out;
  out.reserve(groups.size());
  for (auto& [key, g] : groups) {
    for (double& v : g.target) v /= static_cast<double>(g.k);
    out.push_back(std::move(g));
  }
  return out;  // map order: sorted by (agent, input), deterministic
}

/// One supervised step of every learner toward its imitation targets,
/// regressing the full action distribution of each group. Returns the
/// mean squared loss before the step.
inline double imitation_step(std::vector<UtilityStore>& learners,
                             const std::vector<ImitationGroup>& groups, double lr) {
  if (groups.empty()) return 0.0;
  const int n_actions = learners.front().n_actions();
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t i = 0; i < learners.size(); ++i) {
    std::vector<TargetSample> samples;
    for (const ImitationGroup& g : groups) {
      if (g.agent != static_cast<int>(i)) continue;
      for (int a = 0; a < n_actions; ++a)
        samples.push_back(TargetSample{g.input, a,
                                       g.target[static_cast<std::size_t>(a)]});
    }
    if (samples.empty()) continue;
    loss_sum += learners[i].gradient_step(samples, lr) *
                static_cast<double>(samples.size());
    loss_count += samples.size();
  }
  return loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
}

namespace detail {

struct AgentIo {
  std::vector<History> histories;
  std::vector<ObsId> observations;
  std::vector<std::int64_t> inputs;

  void reset(const DecPomdp& env, StateId s, int window) {
    histories.clear();
    for (int i = 0; i < env.n_agents(); ++i)
      histories.emplace_back(i, window);
    refresh(env, s);
  }

  void refresh(const DecPomdp& env, StateId s) {
    observations.resize(static_cast<std::size_t>(env.n_agents()));
    inputs.resize(static_cast<std::size_t>(env.n_agents()));
    for (int i = 0; i < env.n_agents(); ++i) {
      const ObsId o = env.observe(s, i);
      observations[static_cast<std::size_t>(i)] = o;
      histories[static_cast<std::size_t>(i)].push_observation(o);
      inputs[static_cast<std::size_t>(i)] = histories[static_cast<std::size_t>(i)].encode(
          env.n_observations(), env.n_actions());
    }
  }

  void record_actions(const JointAction& u) {
    for (std::size_t i = 0; i < histories.size(); ++i)
      histories[i].record_action(u[i]);
  }
};

}  // namespace detail

/// Greedy rollouts of the given policy stores (learner-input convention):
/// returns the fraction of episodes flagged won and the mean discounted
/// return.
inline std::pair<double, double> evaluate(const std::vector<UtilityStore>& policy,
                                          const DecPomdp& env, int n_episodes,
                                          Rng rng, int history_window = 1) {
  if (n_episodes < 1) throw InputError("evaluate: n_episodes must be >= 1");
  int wins = 0;
  double return_sum = 0.0;
  detail::AgentIo io;
  for (int ep = 0; ep < n_episodes; ++ep) {
    StateId s = env.sample_initial(rng);
    io.reset(env, s, history_window);
    double discount = 1.0, ep_return = 0.0;
    for (int t = 0; t < env.horizon(); ++t) {
      JointAction u(static_cast<std::size_t>(env.n_agents()));
      for (int i = 0; i < env.n_agents(); ++i)
        u[static_cast<std::size_t>(i)] =
            policy[static_cast<std::size_t>(i)].greedy(io.inputs[static_cast<std::size_t>(i)]);
      io.record_actions(u);
      const StepResult res = env.step(s, u, rng);
      ep_return += discount * res.reward;
      discount *= env.discount();
      s = res.next_state;
      if (res.terminal) break;
      io.refresh(env, s);
    }
    if (env.won(s)) ++wins;
    return_sum += ep_return;
  }
  return {static_cast<double>(wins) / n_episodes, return_sum / n_episodes};
}

namespace detail {

/// Shared trainer for all three paradigms. The Bellman loop runs either
/// on learner histories (baseline) or on global states (expert loop of
/// the DAgger and cloning variants); the imitation loop distils the
/// experts into the learners from the same sampled batches.
class Trainer {
 public:
  Trainer(const DecPomdp& env, TrainConfig cfg, TrainerKind kind)
      : env_(env), cfg_(cfg), kind_(kind) {
    cfg_.validate();
    const Rng root(cfg_.seed);
    init_rng_ = root.split(1);
    env_rng_ = root.split(2);
    action_rng_ = root.split(3);
    buffer_rng_ = root.split(4);
    eval_base_ = root.split(5);

    const std::int64_t learner_inputs =
        History::id_space(env.n_observations(), env.n_actions(), cfg_.history_window);
    learner_stores_ = make_stores(learner_inputs, /*global_state=*/false);
    learner_targets_ = learner_stores_;
    if (kind_ != TrainerKind::baseline_igm) {
      expert_stores_ = make_stores(env.n_states(), /*global_state=*/true);
      expert_targets_ = expert_stores_;
    }
    mixer_ = make_mixer();
    target_mixer_ = std::make_shared<Mixer>(*mixer_);
    buffer_ = std::make_unique<ReplayBuffer>(static_cast<std::size_t>(cfg_.buffer_capacity));
  }

  TrainReport run() {
    TrainReport report;
    report.kind = kind_;
    report.mixer = mixer_;
    std::int64_t step = 0;
    int eval_index = 0;
    double last_rl_loss = 0.0, last_imitation_loss = 0.0;
    try {
      StateId state = env_.sample_initial(env_rng_);
      io_.reset(env_, state, cfg_.history_window);
      int t_in_episode = 0;
      while (step < cfg_.total_env_steps) {
        const double eps = cfg_.epsilon_at(step);
        const JointAction u = select_actions(state, eps);
        io_.record_actions(u);
        const StepResult res = env_.step(state, u, env_rng_);

        Transition tr;
        tr.state = state;
        tr.next_state = res.next_state;
        tr.joint_action = u;
        tr.reward = res.reward;
        tr.observations = io_.observations;
        tr.inputs = io_.inputs;
        tr.terminal = res.terminal;
        tr.behavior = kind_ == TrainerKind::behavior_cloning ? BehaviorSource::expert
                                                             : BehaviorSource::learner;
        if (!res.terminal) {
          io_.refresh(env_, res.next_state);
          tr.next_observations = io_.observations;
          tr.next_inputs = io_.inputs;
        } else {
          tr.next_observations.assign(static_cast<std::size_t>(env_.n_agents()), 0);
          tr.next_inputs.assign(static_cast<std::size_t>(env_.n_agents()), 0);
        }
        buffer_->push(std::move(tr));

        state = res.next_state;
        ++step;
        ++t_in_episode;
        if (res.terminal || t_in_episode >= env_.horizon()) {
          state = env_.sample_initial(env_rng_);
          io_.reset(env_, state, cfg_.history_window);
          t_in_episode = 0;
        }

        if (step % cfg_.update_interval == 0 &&
            buffer_->ready(static_cast<std::size_t>(cfg_.batch_size))) {
          const auto batch =
              buffer_->sample(static_cast<std::size_t>(cfg_.batch_size), buffer_rng_);
          last_rl_loss = rl_update(batch);
          if (kind_ != TrainerKind::baseline_igm) {
            for (int r = 0; r < cfg_.imitation_batches_per_rl_update; ++r) {
              const auto& imitation_batch =
                  r == 0 ? batch
                         : buffer_->sample(static_cast<std::size_t>(cfg_.batch_size),
                                           buffer_rng_);
              last_imitation_loss = imitation_update(imitation_batch);
            }
          }
          ++updates_;
          if (updates_ % cfg_.target_update_interval == 0) sync_targets();
        }

        if (step % cfg_.eval_interval == 0 || step == cfg_.total_env_steps) {
          const auto [win, ret] =
              evaluate(learner_stores_, env_, cfg_.eval_episodes,
                       eval_base_.split(static_cast<std::uint64_t>(eval_index)),
                       cfg_.history_window);
          report.points.push_back(
              EvalPoint{step, win, ret, last_rl_loss, last_imitation_loss});
          ++eval_index;
        }
      }
    } catch (const DivergenceError& e) {
      report.diverged = true;
      report.divergence_message = e.what();
    }
    report.policy_stores = learner_stores_;
    report.expert_stores = expert_stores_;
    return report;
  }

 private:
  std::vector<UtilityStore> make_stores(std::int64_t n_inputs, bool global_state) {
    std::vector<UtilityStore> stores;
    for (int i = 0; i < env_.n_agents(); ++i) {
      if (cfg_.store_kind == StoreKind::tabular) {
        if (global_state && !env_.tabular())
          throw ConfigError(
              "tabular expert stores need a tabular env; use perceptron stores");
        stores.push_back(UtilityStore::make_tabular(n_inputs, env_.n_actions()));
      } else {
        InputEncoder enc;
        if (global_state) {
          enc = InputEncoder::features(
              env_.state_feature_dim(),
              [this](std::int64_t s, std::vector<double>& out) {
                env_.state_features(static_cast<StateId>(s), out);
              });
        } else {
          enc = InputEncoder::one_hot(n_inputs);
        }
        stores.push_back(UtilityStore::make_perceptron(
            std::move(enc), cfg_.hidden_dim, env_.n_actions(),
            init_rng_.split(static_cast<std::uint64_t>(
                (global_state ? 100 : 200) + i))));
      }
    }
    return stores;
  }

  std::shared_ptr<Mixer> make_mixer() {
    if (cfg_.mixer_kind == MixerKind::additive)
      return std::make_shared<Mixer>(Mixer::make_additive(env_.n_agents()));
    return std::make_shared<Mixer>(Mixer::make_monotonic(
        env_.n_agents(), env_.state_feature_dim(), init_rng_.split(999),
        cfg_.mixer_embed_dim, cfg_.mixer_hyper_hidden));
  }

  JointAction select_actions(StateId state, double eps) {
    JointAction u(static_cast<std::size_t>(env_.n_agents()));
    const bool expert_behavior = kind_ == TrainerKind::behavior_cloning;
    for (int i = 0; i < env_.n_agents(); ++i) {
      const auto& store = expert_behavior ? expert_stores_[static_cast<std::size_t>(i)]
                                          : learner_stores_[static_cast<std::size_t>(i)];
      const std::int64_t input =
          expert_behavior ? state : io_.inputs[static_cast<std::size_t>(i)];
      u[static_cast<std::size_t>(i)] = store.epsilon_greedy(input, eps, action_rng_);
    }
    return u;
  }

  /// Squared TD error of the mixed joint value against the bootstrapped
  /// target, with gradients chained into the trained stores and mixer.
  double rl_update(const std::vector<Transition>& batch) {
    const bool expert_loop = kind_ != TrainerKind::baseline_igm;
    auto& online = expert_loop ? expert_stores_ : learner_stores_;
    auto& targets = expert_loop ? expert_targets_ : learner_targets_;
    const InputMode mode = expert_loop ? InputMode::global_state : InputMode::history;

    auto features = [this](StateId s, std::vector<double>& out) {
      env_.state_features(s, out);
    };
    const TdTargetBatch tgt =
        td_target(batch, online, targets, *target_mixer_, cfg_.gamma, mode, features);

    const int n = env_.n_agents();
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<QGradSample>> store_grads(static_cast<std::size_t>(n));
    std::vector<double> mixer_grad;
    if (mixer_->kind() == MixerKind::monotonic)
      mixer_grad.assign(mixer_->params().size(), 0.0);

    double loss = 0.0;
    std::vector<double> utilities(static_cast<std::size_t>(n));
    std::vector<double> feats;
    std::vector<double> dutil;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Transition& t = batch[b];
      for (int i = 0; i < n; ++i) {
        const std::int64_t input =
            expert_loop ? t.state : t.inputs[static_cast<std::size_t>(i)];
        utilities[static_cast<std::size_t>(i)] =
            online[static_cast<std::size_t>(i)].q_value(
                input, t.joint_action[static_cast<std::size_t>(i)]);
      }
      env_.state_features(t.state, feats);
      const double q_tot = mixer_->mix(utilities, feats);
      const double err = q_tot - tgt.targets[b];
      loss += err * err;
      const double upstream = 2.0 * err * inv;
      mixer_->backward_into(utilities, feats, upstream, dutil,
                            mixer_->kind() == MixerKind::monotonic ? &mixer_grad
                                                                   : nullptr);
      for (int i = 0; i < n; ++i) {
        const std::int64_t input =
            expert_loop ? t.state : t.inputs[static_cast<std::size_t>(i)];
        // dutil already carries the upstream dL/dQ factor
        store_grads[static_cast<std::size_t>(i)].push_back(QGradSample{
            input, t.joint_action[static_cast<std::size_t>(i)],
            dutil[static_cast<std::size_t>(i)]});
      }
    }
    for (int i = 0; i < n; ++i)
      online[static_cast<std::size_t>(i)].apply_q_gradients(
          store_grads[static_cast<std::size_t>(i)], cfg_.lr);
    if (mixer_->kind() == MixerKind::monotonic)
      mixer_->apply_gradient(mixer_grad, cfg_.lr);
    if (!std::isfinite(loss)) throw DivergenceError("rl_update: non-finite loss");
    return loss * inv;
  }

  double imitation_update(const std::vector<Transition>& batch) {
    if (kind_ == TrainerKind::igm_da) {
      for (const Transition& t : batch)
        if (t.behavior != BehaviorSource::learner)
          throw ConfigError(
              "igm-da imitation consumed a transition not generated by the "
              "learner policy");
    }
    const auto groups = imitation_target(batch, expert_stores_);
    return imitation_step(learner_stores_, groups, cfg_.lr);
  }

  void sync_targets() {
    for (std::size_t i = 0; i < learner_stores_.size(); ++i)
      learner_targets_[i].copy_parameters_from(learner_stores_[i]);
    for (std::size_t i = 0; i < expert_stores_.size(); ++i)
      expert_targets_[i].copy_parameters_from(expert_stores_[i]);
    target_mixer_->copy_parameters_from(*mixer_);
  }

  const DecPomdp& env_;
  TrainConfig cfg_;
  TrainerKind kind_;
  Rng init_rng_, env_rng_, action_rng_, buffer_rng_, eval_base_;
  std::vector<UtilityStore> learner_stores_, learner_targets_;
  std::vector<UtilityStore> expert_stores_, expert_targets_;
  std::shared_ptr<Mixer> mixer_, target_mixer_;
  std::unique_ptr<ReplayBuffer> buffer_;
  AgentIo io_;
  std::int64_t updates_ = 0;
};

}  // namespace detail

/// Value decomposition trained end-to-end on learner observations: the
/// Bellman targets themselves pass through the aliased inputs.
inline TrainReport train_baseline_igm(const DecPomdp& env, const TrainConfig& cfg) {
  return detail::Trainer(env, cfg, TrainerKind::baseline_igm).run();
}

/// Two-loop training: experts and mixer run Bellman iteration purely on
/// the global state, learners imitate the experts on the learner-visited
/// batch (interactive imitation), and rollouts follow the learners.
inline TrainReport train_igm_da(const DecPomdp& env, const TrainConfig& cfg) {
  return detail::Trainer(env, cfg, TrainerKind::igm_da).run();
}

/// Like train_igm_da but rollouts follow the experts, so the learners are
/// never corrected on their own trajectory distribution.
inline TrainReport train_behavior_cloning(const DecPomdp& env, const TrainConfig& cfg) {
  return detail::Trainer(env, cfg, TrainerKind::behavior_cloning).run();
}

}  // namespace vdlab
