#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vdlab/checkpoint.hpp"
#include "vdlab/env_spec.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/metrics.hpp"
#include "vdlab/svg.hpp"
#include "vdlab/training.hpp"

namespace vdlab {

struct ExperimentConfig {
  json env_spec;
  std::vector<TrainerKind> trainers;
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;

  static TrainerKind parse_trainer(const std::string& name) {
    if (name == "baseline") return TrainerKind::baseline_igm;
    if (name == "igm-da") return TrainerKind::igm_da;
    if (name == "bc") return TrainerKind::behavior_cloning;
    throw ConfigError("field 'trainer': unknown trainer name '" + name +
                      "' (expected baseline | igm-da | bc)");
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig cfg;
    if (!j.contains("env")) throw ConfigError("field 'env': missing");
    cfg.env_spec = j.at("env");
    if (!j.contains("trainer")) throw ConfigError("field 'trainer': missing");
    if (j.at("trainer").is_array()) {
      for (const auto& t : j.at("trainer"))
        cfg.trainers.push_back(parse_trainer(t.get<std::string>()));
    } else {
      cfg.trainers.push_back(parse_trainer(j.at("trainer").get<std::string>()));
    }
    if (!j.contains("seeds")) throw ConfigError("field 'seeds': missing");
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("field 'seeds': must be nonempty");
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() !=
        cfg.seeds.size())
      throw ConfigError("field 'seeds': must be distinct");
    if (!j.contains("output_dir")) throw ConfigError("field 'output_dir': missing");
    cfg.output_dir = j.at("output_dir").get<std::string>();

    const json t = j.value("train", json::object());
    TrainConfig& tc = cfg.train;
    tc.total_env_steps = t.value("total_env_steps", tc.total_env_steps);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.buffer_capacity = t.value("buffer_capacity", tc.buffer_capacity);
    tc.lr = t.value("lr", tc.lr);
    tc.epsilon_start = t.value("epsilon_start", tc.epsilon_start);
    tc.epsilon_end = t.value("epsilon_end", tc.epsilon_end);
    tc.epsilon_decay_steps = t.value("epsilon_decay_steps", tc.epsilon_decay_steps);
    tc.allow_epsilon_below_floor =
        t.value("allow_epsilon_below_floor", tc.allow_epsilon_below_floor);
    tc.target_update_interval = t.value("target_update_interval", tc.target_update_interval);
    tc.gamma = t.value("gamma", tc.gamma);
    tc.imitation_batches_per_rl_update =
        t.value("imitation_batches_per_rl_update", tc.imitation_batches_per_rl_update);
    tc.history_window = t.value("history_window", tc.history_window);
    tc.hidden_dim = t.value("hidden_dim", tc.hidden_dim);
    tc.mixer_embed_dim = t.value("mixer_embed_dim", tc.mixer_embed_dim);
    tc.mixer_hyper_hidden = t.value("mixer_hyper_hidden", tc.mixer_hyper_hidden);
    tc.eval_interval = t.value("eval_interval", tc.eval_interval);
    tc.eval_episodes = t.value("eval_episodes", tc.eval_episodes);
    tc.update_interval = t.value("update_interval", tc.update_interval);
    if (t.contains("mixer")) {
      const std::string m = t.at("mixer").get<std::string>();
      if (m == "additive") tc.mixer_kind = MixerKind::additive;
      else if (m == "monotonic") tc.mixer_kind = MixerKind::monotonic;
      else throw ConfigError("field 'train.mixer': unknown kind '" + m + "'");
    }
    if (t.contains("store")) {
      const std::string s = t.at("store").get<std::string>();
      if (s == "tabular") tc.store_kind = StoreKind::tabular;
      else if (s == "perceptron") tc.store_kind = StoreKind::perceptron;
      else throw ConfigError("field 'train.store': unknown kind '" + s + "'");
    }
    tc.validate();
    build_env(cfg.env_spec);  // validate the env spec eagerly
    return cfg;
  }
};

struct RunResult {
  TrainerKind trainer = TrainerKind::baseline_igm;
  std::uint64_t seed = 0;
  TrainReport report;
};

inline TrainReport run_single(const ExperimentConfig& cfg, TrainerKind kind,
                              std::uint64_t seed) {
  const auto env = build_env(cfg.env_spec);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  switch (kind) {
    case TrainerKind::baseline_igm: return train_baseline_igm(*env, tc);
    case TrainerKind::igm_da: return train_igm_da(*env, tc);
    case TrainerKind::behavior_cloning: return train_behavior_cloning(*env, tc);
  }
  throw ConfigError("run_single: bad trainer kind");
}

inline int worker_count_from_env() {
  if (const char* v = std::getenv("VDLAB_WORKERS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Runs every (trainer, seed) combination, writes one CSV per run, an
/// aggregate CSV with cross-seed percentile stats, an SVG of the curves
/// and a machine-readable summary. Divergent runs are recorded and do
/// not stop the others.
inline void run_experiment(const ExperimentConfig& cfg, bool force = false,
                           int workers = worker_count_from_env()) {
  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.output_dir);
  if (fs::exists(out_dir) && !force)
    throw ConfigError("output_dir '" + cfg.output_dir +
                      "' already exists; pass --force to overwrite");
  fs::create_directories(out_dir);

  std::vector<std::pair<TrainerKind, std::uint64_t>> jobs;
  for (TrainerKind t : cfg.trainers)
    for (std::uint64_t seed : cfg.seeds) jobs.emplace_back(t, seed);
  std::vector<RunResult> results(jobs.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      RunResult r;
      r.trainer = jobs[i].first;
      r.seed = jobs[i].second;
      r.report = run_single(cfg, jobs[i].first, jobs[i].second);
      results[i] = std::move(r);
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  // per-run CSVs
  for (const RunResult& r : results) {
    const std::string name =
        trainer_name(r.trainer) + "_seed" + std::to_string(r.seed) + ".csv";
    std::ofstream out(out_dir / name);
    out << "env_steps,win_rate,mean_return,rl_loss,imitation_loss\n";
    for (const EvalPoint& p : r.report.points)
      out << p.env_steps << "," << format_metric(p.win_rate) << ","
          << format_metric(p.mean_return) << "," << format_metric(p.rl_loss) << ","
          << format_metric(p.imitation_loss) << "\n";
  }

  // aggregate CSV: cross-seed percentiles per trainer and eval point
  std::ofstream agg(out_dir / "aggregate.csv");
  agg << "trainer,env_steps,median,p25,p75,n_seeds\n";
  std::vector<CurveSeries> curves;
  for (TrainerKind t : cfg.trainers) {
    std::vector<std::vector<std::pair<std::int64_t, double>>> runs;
    for (const RunResult& r : results)
      if (r.trainer == t && !r.report.points.empty()) {
        std::vector<std::pair<std::int64_t, double>> series;
        for (const EvalPoint& p : r.report.points)
          series.emplace_back(p.env_steps, p.win_rate);
        runs.push_back(std::move(series));
      }
    if (runs.empty()) continue;
    std::vector<BandPoint> band;
    if (runs.size() == 1) {
      for (const auto& [step, v] : runs[0]) band.push_back(BandPoint{step, v, v, v});
    } else {
      band = percentile_band(runs);
    }
    for (const BandPoint& p : band)
      agg << trainer_name(t) << "," << p.env_steps << "," << format_metric(p.median)
          << "," << format_metric(p.lo) << "," << format_metric(p.hi) << ","
          << runs.size() << "\n";
    curves.push_back(CurveSeries{trainer_name(t), std::move(band)});
  }
  agg.close();

  // smoothed curves
  for (CurveSeries& c : curves) {
    std::vector<double> med, lo, hi;
    for (const auto& p : c.points) {
      med.push_back(p.median);
      lo.push_back(p.lo);
      hi.push_back(p.hi);
    }
    const auto sm = smooth(med, 5), sl = smooth(lo, 5), sh = smooth(hi, 5);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      c.points[i].median = sm[i];
      c.points[i].lo = sl[i];
      c.points[i].hi = sh[i];
    }
  }
  {
    std::ofstream svg(out_dir / "curves.svg");
    svg << render_curves_svg(curves);
  }

  // summary + final checkpoints
  json summary;
  summary["runs"] = json::array();
  for (const RunResult& r : results) {
    json run;
    run["trainer"] = trainer_name(r.trainer);
    run["seed"] = r.seed;
    run["status"] = r.report.diverged ? "diverged" : "ok";
    if (r.report.diverged) run["message"] = r.report.divergence_message;
    if (!r.report.points.empty()) {
      run["final_win_rate"] = r.report.final_point().win_rate;
      run["final_mean_return"] = r.report.final_point().mean_return;
    }
    const std::string ckpt_name =
        trainer_name(r.trainer) + "_seed" + std::to_string(r.seed) + ".ckpt.json";
    write_json_file((out_dir / ckpt_name).string(),
                    checkpoint_to_json(r.report.policy_stores, r.report.expert_stores,
                                       *r.report.mixer));
    run["checkpoint"] = ckpt_name;
    summary["runs"].push_back(run);
  }
  write_json_file((out_dir / "summary.json").string(), summary);
}

/// Reads an aggregate CSV back into curve series (schema:
/// trainer,env_steps,median,p25,p75,n_seeds).
inline std::vector<CurveSeries> read_aggregate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw ConfigError(path + ": empty file");
  if (header != "trainer,env_steps,median,p25,p75,n_seeds")
    throw ConfigError(path + ": unexpected columns '" + header + "'");
  std::vector<CurveSeries> series;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 6) throw ConfigError(path + ": malformed row '" + line + "'");
    BandPoint p;
    p.env_steps = std::stoll(fields[1]);
    p.median = std::stod(fields[2]);
    p.lo = std::stod(fields[3]);
    p.hi = std::stod(fields[4]);
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const CurveSeries& c) { return c.label == fields[0]; });
    if (it == series.end()) {
      series.push_back(CurveSeries{fields[0], {}});
      it = series.end() - 1;
    }
    it->points.push_back(p);
  }
  if (series.empty()) throw ConfigError(path + ": no data rows");
  return series;
}

}  // namespace vdlab
