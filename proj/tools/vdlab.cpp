#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vdlab/checkpoint.hpp"
#include "vdlab/env_spec.hpp"
#include "vdlab/experiment.hpp"
#include "vdlab/metrics.hpp"
#include "vdlab/oracle.hpp"
#include "vdlab/svg.hpp"
#include "vdlab/training.hpp"

namespace {

using vdlab::json;

json certificate_to_json(const vdlab::LossyCertificate& cert) {
  json j;
  j["lossy"] = cert.lossy;
  j["mismatch_count"] = cert.mismatch_states.size();
  j["mismatch_states"] = cert.mismatch_states;
  j["policies_enumerated"] = cert.policies_enumerated;
  j["states_considered"] = cert.states_considered;
  j["witnesses"] = json::array();
  for (const auto& w : cert.witness_state_pairs)
    j["witnesses"].push_back({{"agent", w.agent},
                              {"state_a", w.state_a},
                              {"state_b", w.state_b}});
  j["best_local_policy"] = json::array();
  for (std::size_t i = 0; i < cert.best_local_policy.by_agent.size(); ++i) {
    json agent_policy;
    agent_policy["agent"] = i;
    json mapping = json::object();
    for (const auto& [obs, action] : cert.best_local_policy.by_agent[i])
      mapping[std::to_string(obs)] = action;
    agent_policy["policy"] = mapping;
    j["best_local_policy"].push_back(agent_policy);
  }
  return j;
}

int cmd_run(const std::string& config_path, bool force, std::int64_t seed_override,
            int workers) {
  auto cfg = vdlab::ExperimentConfig::from_json(vdlab::load_json_file(config_path));
  if (seed_override >= 0)
    cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
  if (workers <= 0) workers = vdlab::worker_count_from_env();
  vdlab::run_experiment(cfg, force, workers);
  std::cout << "wrote " << cfg.output_dir << "\n";
  return 0;
}

int cmd_certify(const std::string& env_path, bool all_states, const std::string& out) {
  const auto env = vdlab::load_env(env_path);
  const auto q = vdlab::exact_q(*env, env->discount());
  vdlab::CertifyOptions opt;
  opt.restrict_to_reachable = !all_states;
  const auto cert = vdlab::certify_lossy(*env, q, opt);
  const json j = certificate_to_json(cert);
  std::cout << (cert.lossy ? "LOSSY" : "LOSSLESS") << ": best local policy misses "
            << cert.mismatch_states.size() << " of " << cert.states_considered.size()
            << " states (" << cert.policies_enumerated << " policies enumerated)\n";
  if (!out.empty()) vdlab::write_json_file(out, j);
  else std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_bayes(const std::string& env_path, const std::string& ckpt_path, int episodes,
              double epsilon, std::uint64_t seed, const std::string& out) {
  const auto env = vdlab::load_env(env_path);
  const json ckpt = vdlab::load_json_file(ckpt_path);
  vdlab::InputEncoder feat = vdlab::InputEncoder::features(
      env->state_feature_dim(), [env](std::int64_t s, std::vector<double>& v) {
        env->state_features(static_cast<vdlab::StateId>(s), v);
      });
  std::vector<vdlab::UtilityStore> experts;
  for (const auto& js : ckpt.at("experts"))
    experts.push_back(vdlab::store_from_json(js, &feat));
  if (experts.empty()) throw vdlab::ConfigError("checkpoint has no expert stores");
  const auto expert_policy = vdlab::ExpertPolicy::from_stores(experts, env->n_states());

  // Occupancy from epsilon-greedy expert rollouts, grouped by (agent, obs).
  vdlab::Rng rng(seed);
  std::map<std::pair<int, vdlab::ObsId>, std::map<vdlab::StateId, int>> visits;
  for (int ep = 0; ep < episodes; ++ep) {
    vdlab::StateId s = env->sample_initial(rng);
    for (int t = 0; t < env->horizon(); ++t) {
      vdlab::JointAction u(static_cast<std::size_t>(env->n_agents()));
      for (int i = 0; i < env->n_agents(); ++i) {
        visits[{i, env->observe(s, i)}][s] += 1;
        u[static_cast<std::size_t>(i)] =
            experts[static_cast<std::size_t>(i)].epsilon_greedy(s, epsilon, rng);
      }
      const auto res = env->step(s, u, rng);
      s = res.next_state;
      if (res.terminal) break;
    }
  }

  const auto penalty = vdlab::PenaltyMatrix::zero_one(env->n_actions());
  json report;
  report["groups"] = json::array();
  for (const auto& [key, states] : visits) {
    const auto& [agent, obs] = key;
    vdlab::AliasSampleSet alias;
    alias.obs = obs;
    for (const auto& [state, count] : states) alias.samples.emplace_back(state, count);
    const auto q = vdlab::bayes_optimal_local(expert_policy, agent, alias,
                                              env->n_actions());
    int argmax_q = 0;
    int argmin_r = 0;
    double best_r = vdlab::bayes_expected_loss(expert_policy, agent, alias, penalty, 0);
    for (int a = 1; a < env->n_actions(); ++a) {
      if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(argmax_q)])
        argmax_q = a;
      const double r = vdlab::bayes_expected_loss(expert_policy, agent, alias, penalty, a);
      if (r < best_r) {
        best_r = r;
        argmin_r = a;
      }
    }
    json g;
    g["agent"] = agent;
    g["observation"] = obs;
    g["k"] = alias.k();
    g["q"] = q;
    g["argmax_q"] = argmax_q;
    g["argmin_expected_loss"] = argmin_r;
    g["consistent"] = argmax_q == argmin_r;
    report["groups"].push_back(g);
  }
  std::cout << "bayes-optimal local action-values over " << report["groups"].size()
            << " (agent, observation) groups\n";
  if (!out.empty()) vdlab::write_json_file(out, report);
  else std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_errors(const std::string& spec_path, const std::string& out) {
  const json spec = vdlab::load_json_file(spec_path);
  const std::string mode = spec.value("mode", "synthetic");
  json report;
  if (mode == "synthetic") {
    const auto breakdown = vdlab::error_breakdown_synthetic(
        spec.at("error_dec").get<std::vector<double>>(),
        spec.at("error_other").get<std::vector<double>>(),
        spec.at("gamma").get<double>());
    report["gamma"] = breakdown.gamma;
    report["accumulated_total"] = breakdown.accumulated_total;
    report["separated_total"] = breakdown.separated_total;
    report["accumulated_recursion"] = breakdown.accumulated_recursion;
    report["separated_recursion"] = breakdown.separated_recursion;
  } else if (mode == "empirical") {
    const auto env = vdlab::build_env(spec.at("env"));
    const json ckpt = vdlab::load_json_file(spec.at("checkpoint").get<std::string>());
    vdlab::InputEncoder feat = vdlab::InputEncoder::features(
        env->state_feature_dim(), [env](std::int64_t s, std::vector<double>& v) {
          env->state_features(static_cast<vdlab::StateId>(s), v);
        });
    std::vector<vdlab::UtilityStore> experts;
    for (const auto& js : ckpt.at("experts"))
      experts.push_back(vdlab::store_from_json(js, &feat));
    if (experts.empty())
      throw vdlab::ConfigError("empirical mode needs expert stores in the checkpoint");
    vdlab::Mixer mixer = vdlab::mixer_from_json(ckpt.at("mixer"));

    auto q_hat = [&](vdlab::StateId s, const vdlab::JointAction& u) {
      std::vector<double> utilities(static_cast<std::size_t>(env->n_agents()));
      for (int i = 0; i < env->n_agents(); ++i)
        utilities[static_cast<std::size_t>(i)] =
            experts[static_cast<std::size_t>(i)].q_value(s, u[static_cast<std::size_t>(i)]);
      std::vector<double> feats;
      env->state_features(s, feats);
      return mixer.mix(utilities, feats);
    };

    // greedy expert trace
    vdlab::Rng rng(spec.value("seed", 0));
    std::vector<vdlab::TraceStep> trace;
    vdlab::StateId s = env->sample_initial(rng);
    for (int t = 0; t < env->horizon(); ++t) {
      vdlab::TraceStep step;
      step.state = s;
      step.joint_action.resize(static_cast<std::size_t>(env->n_agents()));
      for (int i = 0; i < env->n_agents(); ++i)
        step.joint_action[static_cast<std::size_t>(i)] =
            experts[static_cast<std::size_t>(i)].greedy(s);
      const auto res = env->step(s, step.joint_action, rng);
      step.reward = res.reward;
      trace.push_back(step);
      s = res.next_state;
      if (res.terminal) break;
    }
    const auto exact = vdlab::exact_q(*env, env->discount());
    const auto breakdown =
        vdlab::error_breakdown_empirical(*env, q_hat, exact, trace, env->discount());
    report["gamma"] = breakdown.gamma;
    report["measured"] = breakdown.measured;
    report["measured_total"] = breakdown.measured_total;
    report["accumulated_total"] = breakdown.accumulated_total;
    report["separated_total"] = breakdown.separated_total;
    report["error_other"] = breakdown.error_other;
  } else {
    throw vdlab::ConfigError("errors: unknown mode '" + mode + "'");
  }
  std::cout << report.dump(2) << "\n";
  if (!out.empty()) vdlab::write_json_file(out, report);
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out) {
  auto series = vdlab::read_aggregate_csv(csv_path);
  for (auto& c : series) {
    std::vector<double> med, lo, hi;
    for (const auto& p : c.points) {
      med.push_back(p.median);
      lo.push_back(p.lo);
      hi.push_back(p.hi);
    }
    const auto sm = vdlab::smooth(med, 5), sl = vdlab::smooth(lo, 5),
               sh = vdlab::smooth(hi, 5);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      c.points[i].median = sm[i];
      c.points[i].lo = sl[i];
      c.points[i].hi = sh[i];
    }
  }
  std::ofstream file(out);
  if (!file) throw vdlab::ConfigError("cannot write " + out);
  file << vdlab::render_curves_svg(series);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-decomposition laboratory"};
  app.require_subcommand(1);

  std::string config_path, env_path, ckpt_path, spec_path, csv_path;
  std::string out_path;
  bool force = false, all_states = false;
  std::int64_t seed_override = -1;
  int workers = 0, episodes = 200;
  double epsilon = 0.1;
  std::uint64_t bayes_seed = 0;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment JSON")->required();
  run->add_flag("--force", force, "overwrite an existing output_dir");
  run->add_option("--seed", seed_override, "run a single seed instead of the config's");
  run->add_option("--workers", workers, "worker thread count (default: VDLAB_WORKERS or hw)");

  auto* certify = app.add_subcommand("certify", "certify lossiness of an env's exact Q");
  certify->add_option("env", env_path, "environment JSON")->required();
  certify->add_flag("--all-states", all_states, "consider unreachable states too");
  certify->add_option("--out", out_path, "write the certificate JSON here");

  auto* bayes = app.add_subcommand("bayes", "bayes-optimal local values of a trained expert");
  bayes->add_option("env", env_path, "environment JSON")->required();
  bayes->add_option("checkpoint", ckpt_path, "checkpoint JSON with expert stores")->required();
  bayes->add_option("--episodes", episodes, "occupancy-sampling episodes");
  bayes->add_option("--epsilon", epsilon, "behavior exploration rate");
  bayes->add_option("--seed", bayes_seed, "sampling seed");
  bayes->add_option("--out", out_path, "write the report JSON here");

  auto* errors = app.add_subcommand("errors", "error accumulation breakdown");
  errors->add_option("spec", spec_path, "breakdown spec JSON")->required();
  errors->add_option("--out", out_path, "write the report JSON here");

  auto* plot = app.add_subcommand("plot", "render an aggregate CSV to SVG");
  plot->add_option("csv", csv_path, "aggregate CSV")->required();
  plot->add_option("--out", out_path, "output SVG path")->default_val("curves.svg");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, force, seed_override, workers);
    if (certify->parsed()) return cmd_certify(env_path, all_states, out_path);
    if (bayes->parsed())
      return cmd_bayes(env_path, ckpt_path, episodes, epsilon, bayes_seed, out_path);
    if (errors->parsed()) return cmd_errors(spec_path, out_path);
    if (plot->parsed()) return cmd_plot(csv_path, out_path);
  } catch (const vdlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const vdlab::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
