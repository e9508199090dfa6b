#pragma once

// Experiment harness: reproducible pretrain -> RL -> eval pipelines, ablation
// arms, the rollout cost bench, and all file emission. Every artifact except
// the timing CSVs is a pure function of (config, seed).

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseworld/config.hpp"
#include "poseworld/flowmodel.hpp"
#include "poseworld/io.hpp"
#include "poseworld/nftopt.hpp"
#include "poseworld/reward.hpp"
#include "poseworld/rollout.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

// ----------------------------------------------------------------------------
// Deterministic text formatting

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%" PRId64, v);
  return buf;
}

inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

// ----------------------------------------------------------------------------
// Held-out case generation
//
// Prompts and evaluation cases are (scene, action sequence) pairs with no
// ground-truth clips. A candidate is accepted only if the noiseless oracle
// trajectory it induces stays inside the world bounds without touching the
// pitch clamp, mirroring the dataset's regeneration rule.

inline PromptCase make_case(const WorldConfig& wcfg, ActionMode mode, int n_clips,
                            double switch_prob, std::uint64_t seed, std::string_view tag,
                            std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  const double deg = kPi / 180.0;
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng(mix64(derive_seed(seed, tag, a, b, c) ^ mix64(attempt + 1)));
    PromptCase pc;
    pc.ctx.scene_id = derive_seed(seed, tag, a, b, c) ^ attempt;
    const double b0 = wcfg.world_bound * wcfg.init_pos_frac;
    pc.ctx.initial_pose.position = {rng.uniform(-b0, b0), rng.uniform(-b0, b0),
                                    rng.uniform(-b0, b0)};
    pc.ctx.initial_pose.yaw = wrap_angle(rng.uniform(-kPi, kPi));
    pc.ctx.initial_pose.pitch = rng.uniform(-wcfg.init_pitch_max, wcfg.init_pitch_max);
    pc.ctx.step_scale = rng.uniform(wcfg.step_scale_min, wcfg.step_scale_max);
    pc.ctx.rot_step = rng.uniform(wcfg.rot_step_min_deg * deg, wcfg.rot_step_max_deg * deg);
    pc.actions = sample_action_sequence(mode, n_clips, switch_prob, rng);
    Rng sim_rng(0);
    const auto oracle =
        gen_trajectory(pc.ctx, pc.actions, wcfg.frames_per_clip, JitterConfig{0.0}, sim_rng);
    if (detail::trajectory_in_bounds(oracle, wcfg.world_bound)) return pc;
  }
  throw std::runtime_error("make_case: no in-bounds case found");
}

// ----------------------------------------------------------------------------
// Pretraining stage

struct PretrainOutputs {
  PolicyParams params;
  std::vector<double> loss_curve;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::filesystem::path dataset_file;
};

inline PretrainOutputs run_pretrain(const ExperimentConfig& cfg, bool export_jsonl = false) {
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  Dataset dataset;
  if (cfg.dataset_path.empty()) {
    dataset = make_dataset(cfg.worldsim, derive_seed(cfg.seed, "pretrain.data"));
  } else {
    dataset = load_dataset(cfg.dataset_path);
  }

  PretrainOutputs result;
  result.dataset_file = out / "dataset.wcds";
  save_dataset(result.dataset_file, dataset);
  if (export_jsonl) export_dataset_jsonl(out / "dataset.jsonl", dataset);

  const PolicyParams init = init_params(cfg.arch(), derive_seed(cfg.seed, "init"));
  PretrainResult trained =
      pretrain(init, dataset, cfg.flowmodel.pretrain, derive_seed(cfg.seed, "pretrain"));
  result.params = std::move(trained.params);
  result.loss_curve = std::move(trained.loss_curve);

  std::string csv = "step,loss\n";
  for (std::size_t s = 0; s < result.loss_curve.size(); ++s)
    csv += fmt(static_cast<std::int64_t>(s)) + "," + fmt(result.loss_curve[s]) + "\n";
  result.loss_csv = out / "pretrain_loss.csv";
  io::write_text_atomic(result.loss_csv, csv);

  result.checkpoint = out / "base.wcpm";
  save_checkpoint(result.checkpoint, result.params);
  return result;
}

// ----------------------------------------------------------------------------
// Probe evaluation (fixed case set, fixed noise, reused across iterations)

struct ProbeResult {
  double acc_action = 0.0;
  double acc_rot = 0.0;
  double acc_trans = 0.0;
  double vq = 0.0;
};

inline ProbeResult probe_eval(const PolicyParams& params, const ExperimentConfig& cfg,
                              const std::vector<PromptCase>& cases) {
  ProbeResult agg;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Rng gen_rng = derive_rng(cfg.seed, "probe.gen", i);
    const auto clips = generate_sequence(params, cases[i].ctx, cases[i].actions, gen_rng,
                                         cfg.rollout.sampling_steps);
    Rng est_rng = derive_rng(cfg.seed, "probe.est", i);
    const auto ev =
        eval_sequence(clips, cases[i].actions, cfg.reward, cfg.estimator, cases[i].ctx, est_rng);
    agg.acc_action += ev.aggregate.acc_action;
    agg.acc_rot += ev.aggregate.acc_rot;
    agg.acc_trans += ev.aggregate.acc_trans;
    agg.vq += ev.aggregate.vq;
  }
  const double n = static_cast<double>(cases.size());
  agg.acc_action /= n;
  agg.acc_rot /= n;
  agg.acc_trans /= n;
  agg.vq /= n;
  return agg;
}

// ----------------------------------------------------------------------------
// RL stage

struct RlOutputs {
  PolicyParams params;
  std::vector<IterationMetrics> metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  std::filesystem::path probe_csv;
  std::filesystem::path timings_csv;
  ProbeResult probe_initial;
  ProbeResult probe_final;
  double mean_iteration_ms = 0.0;
};

inline RlOutputs run_rl(const ExperimentConfig& cfg, const PolicyParams& base) {
  const ArchConfig arch = cfg.arch();
  if (!(base.arch == arch))
    throw std::invalid_argument("run_rl: base checkpoint architecture does not match config");
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  const TrainConfig& tcfg = cfg.nftopt.train;
  tcfg.validate();

  // training prompt pool and fixed probe set (combined actions, mid horizon)
  std::vector<PromptCase> pool;
  pool.reserve(static_cast<std::size_t>(cfg.nftopt.prompt_pool));
  for (int i = 0; i < cfg.nftopt.prompt_pool; ++i)
    pool.push_back(make_case(cfg.worldsim, ActionMode::kCombined, tcfg.max_clips,
                             cfg.worldsim.switch_prob, cfg.seed, "rl.prompt",
                             static_cast<std::uint64_t>(i)));
  std::vector<PromptCase> probe_cases;
  for (int i = 0; i < cfg.nftopt.probe_cases; ++i)
    probe_cases.push_back(make_case(cfg.worldsim, ActionMode::kCombined, tcfg.max_clips,
                                    cfg.worldsim.switch_prob, cfg.seed, "probe.case",
                                    static_cast<std::uint64_t>(i)));

  TrainState state;
  state.theta = base;
  state.theta_old = base;
  state.seed = derive_seed(cfg.seed, "rl");

  RlOutputs outputs;
  std::string metrics_csv = "k,n,mean_s_if,mean_s_vq,loss,grad_norm,eta\n";
  std::string probe_csv = "k,acc_action,acc_rot,acc_trans,vq\n";
  std::string timings_csv = "k,wall_ms\n";

  auto probe_row = [&](std::int64_t k, const ProbeResult& p) {
    probe_csv += fmt(k) + "," + fmt(p.acc_action) + "," + fmt(p.acc_rot) + "," +
                 fmt(p.acc_trans) + "," + fmt(p.vq) + "\n";
  };
  outputs.probe_initial = probe_eval(state.theta, cfg, probe_cases);
  probe_row(0, outputs.probe_initial);

  double total_ms = 0.0;
  for (std::int64_t k = 0; k < tcfg.total_iterations; ++k) {
    std::vector<PromptCase> batch;
    Rng batch_rng = derive_rng(state.seed, "rl.batch", static_cast<std::uint64_t>(k));
    for (int g = 0; g < tcfg.groups_per_step; ++g)
      batch.push_back(pool[batch_rng.below(pool.size())]);

    const auto start = std::chrono::steady_clock::now();
    const IterationMetrics m = train_iteration(state, batch, tcfg, cfg.reward, cfg.estimator);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    total_ms += ms;

    outputs.metrics.push_back(m);
    metrics_csv += fmt(m.k) + "," + fmt(m.n) + "," + fmt(m.mean_s_if) + "," + fmt(m.mean_s_vq) +
                   "," + fmt(m.loss) + "," + fmt(m.grad_norm) + "," + fmt(m.eta) + "\n";
    timings_csv += fmt(m.k) + "," + fmt(ms) + "\n";

    if (cfg.nftopt.probe_every > 0 && (k + 1) % cfg.nftopt.probe_every == 0 &&
        k + 1 < tcfg.total_iterations)
      probe_row(k + 1, probe_eval(state.theta, cfg, probe_cases));
    if (cfg.nftopt.checkpoint_every > 0 && (k + 1) % cfg.nftopt.checkpoint_every == 0 &&
        k + 1 < tcfg.total_iterations) {
      char name[48];
      std::snprintf(name, sizeof(name), "rl_ckpt_%06lld.wcpm", static_cast<long long>(k + 1));
      save_checkpoint(out / name, state.theta);
    }
  }

  outputs.probe_final = tcfg.total_iterations > 0 ? probe_eval(state.theta, cfg, probe_cases)
                                                  : outputs.probe_initial;
  if (tcfg.total_iterations > 0) probe_row(tcfg.total_iterations, outputs.probe_final);

  outputs.params = state.theta;
  outputs.checkpoint = out / "rl_final.wcpm";
  save_checkpoint(outputs.checkpoint, state.theta);
  outputs.metrics_csv = out / "metrics.csv";
  io::write_text_atomic(outputs.metrics_csv, metrics_csv);
  outputs.probe_csv = out / "probe.csv";
  io::write_text_atomic(outputs.probe_csv, probe_csv);
  outputs.timings_csv = out / "timings.csv";
  io::write_text_atomic(outputs.timings_csv, timings_csv);
  outputs.mean_iteration_ms =
      tcfg.total_iterations > 0 ? total_ms / tcfg.total_iterations : 0.0;
  return outputs;
}

// ----------------------------------------------------------------------------
// Evaluation stage

struct EvalCaseRow {
  std::uint64_t scene_id = 0;
  int horizon_clips = 0;
  std::string mode;
  double acc_action = 0.0, acc_rot = 0.0, acc_trans = 0.0, vq = 0.0;
};

struct EvalCell {
  int horizon_clips = 0;
  std::string horizon_label;
  std::string mode;
  int count = 0;
  double acc_action = 0.0, acc_rot = 0.0, acc_trans = 0.0, vq = 0.0;
  double hw_acc = 0.0, hw_vq = 0.0;  // bootstrap 95% half-widths
};

struct EvalReport {
  int frames_per_clip = 0;
  std::vector<EvalCell> cells;
  std::vector<EvalCaseRow> rows;

  const EvalCell& cell(int horizon_clips, const std::string& mode) const {
    for (const auto& c : cells)
      if (c.horizon_clips == horizon_clips && c.mode == mode) return c;
    throw std::out_of_range("no such eval cell");
  }
};

inline std::string horizon_label(std::size_t index, int clips) {
  switch (index) {
    case 0: return "short";
    case 1: return "mid";
    case 2: return "long";
    default: return "h" + std::to_string(clips);
  }
}

// Held-out evaluation: cases, generation noise, and estimator draws depend
// only on (config, seed), so two checkpoints are always compared on exactly
// the same inputs.
inline EvalReport run_eval(const ExperimentConfig& cfg, const PolicyParams& params) {
  const ArchConfig arch = cfg.arch();
  if (!(params.arch == arch))
    throw std::invalid_argument("run_eval: checkpoint architecture does not match config");
  EvalReport report;
  report.frames_per_clip = cfg.worldsim.frames_per_clip;
  for (std::size_t hi = 0; hi < cfg.eval.horizons.size(); ++hi) {
    const int horizon = cfg.eval.horizons[hi];
    for (std::size_t mi = 0; mi < cfg.eval.modes.size(); ++mi) {
      const ActionMode mode = cfg.eval.modes[mi];
      const std::string mode_name = cfgdetail::mode_name(mode);
      std::vector<double> accs, vqs;
      EvalCell cell;
      cell.horizon_clips = horizon;
      cell.horizon_label = horizon_label(hi, horizon);
      cell.mode = mode_name;
      for (int c = 0; c < cfg.eval.cases_per_cell; ++c) {
        const PromptCase pc =
            make_case(cfg.worldsim, mode, horizon, cfg.eval.switch_prob, cfg.seed, "eval.case",
                      hi, mi, static_cast<std::uint64_t>(c));
        Rng gen_rng = derive_rng(cfg.seed, "eval.gen", hi, mi, static_cast<std::uint64_t>(c));
        const auto clips =
            generate_sequence(params, pc.ctx, pc.actions, gen_rng, cfg.rollout.sampling_steps);
        Rng est_rng = derive_rng(cfg.seed, "eval.est", hi, mi, static_cast<std::uint64_t>(c));
        const auto ev = eval_sequence(clips, pc.actions, cfg.reward, cfg.estimator, pc.ctx, est_rng);
        EvalCaseRow row;
        row.scene_id = pc.ctx.scene_id;
        row.horizon_clips = horizon;
        row.mode = mode_name;
        row.acc_action = ev.aggregate.acc_action;
        row.acc_rot = ev.aggregate.acc_rot;
        row.acc_trans = ev.aggregate.acc_trans;
        row.vq = ev.aggregate.vq;
        report.rows.push_back(row);
        cell.acc_action += row.acc_action;
        cell.acc_rot += row.acc_rot;
        cell.acc_trans += row.acc_trans;
        cell.vq += row.vq;
        accs.push_back(row.acc_action);
        vqs.push_back(row.vq);
      }
      cell.count = cfg.eval.cases_per_cell;
      const double n = static_cast<double>(cell.count);
      cell.acc_action /= n;
      cell.acc_rot /= n;
      cell.acc_trans /= n;
      cell.vq /= n;

      // bootstrap half-widths (1.96 x std of resampled means)
      Rng boot = derive_rng(cfg.seed, "eval.boot", hi, mi);
      auto half_width = [&](const std::vector<double>& xs) {
        double sum = 0.0, sumsq = 0.0;
        for (int r = 0; r < cfg.eval.bootstrap_resamples; ++r) {
          double m = 0.0;
          for (std::size_t s = 0; s < xs.size(); ++s) m += xs[boot.below(xs.size())];
          m /= static_cast<double>(xs.size());
          sum += m;
          sumsq += m * m;
        }
        const double rn = static_cast<double>(cfg.eval.bootstrap_resamples);
        const double var = std::max(0.0, sumsq / rn - (sum / rn) * (sum / rn));
        return 1.96 * std::sqrt(var);
      };
      cell.hw_acc = half_width(accs);
      cell.hw_vq = half_width(vqs);
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

inline void write_eval_outputs(const EvalReport& report, const std::filesystem::path& dir,
                               const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::string csv = "scene_id,horizon,action_mode,acc_action,acc_rot,acc_trans,vq\n";
  for (const auto& r : report.rows)
    csv += fmt(r.scene_id) + "," + fmt(r.horizon_clips) + "," + r.mode + "," +
           fmt(r.acc_action) + "," + fmt(r.acc_rot) + "," + fmt(r.acc_trans) + "," + fmt(r.vq) +
           "\n";
  io::write_text_atomic(dir / (stem + "_cases.csv"), csv);

  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"horizon_clips", c.horizon_clips},
                     {"horizon_frames", c.horizon_clips * report.frames_per_clip},
                     {"horizon", c.horizon_label},
                     {"mode", c.mode},
                     {"count", c.count},
                     {"acc_action", c.acc_action},
                     {"acc_rot", c.acc_rot},
                     {"acc_trans", c.acc_trans},
                     {"vq", c.vq},
                     {"acc_action_hw95", c.hw_acc},
                     {"vq_hw95", c.hw_vq}});
  }
  const nlohmann::json j = {
      {"note", "horizons are desk-scale clip counts; frames = clips x frames_per_clip"},
      {"frames_per_clip", report.frames_per_clip},
      {"cells", cells}};
  io::write_text_atomic(dir / (stem + "_report.json"), j.dump(2) + "\n");
}

// ----------------------------------------------------------------------------
// Ablation arms

inline void apply_ablation_arm(TrainConfig& tcfg, const std::string& arm) {
  if (arm == "dual") return;
  if (arm == "if-only") {
    tcfg.lambda = 1.0;
  } else if (arm == "vq-only") {
    tcfg.lambda = 0.0;
  } else if (arm == "sample-level") {
    tcfg.strategy = RolloutStrategy::kSampleLevel;
  } else if (arm == "no-subsample") {
    tcfg.timestep_fraction = 1.0;
  } else if (arm == "no-best-of-n") {
    tcfg.k_top = tcfg.group_size / 2;
    tcfg.k_bot = tcfg.group_size - tcfg.k_top;
  } else {
    throw std::invalid_argument("unknown ablation arm '" + arm + "'");
  }
}

struct AblationOutputs {
  std::string arm;
  EvalReport base_report;
  EvalReport trained_report;
  RlOutputs rl;
};

inline AblationOutputs run_ablation(const ExperimentConfig& cfg, const std::string& arm,
                                    const PolicyParams& base) {
  ExperimentConfig arm_cfg = cfg;
  apply_ablation_arm(arm_cfg.nftopt.train, arm);
  arm_cfg.out_dir = (std::filesystem::path(cfg.out_dir) / ("ablate_" + arm)).string();
  AblationOutputs out;
  out.arm = arm;
  out.rl = run_rl(arm_cfg, base);
  out.base_report = run_eval(arm_cfg, base);
  out.trained_report = run_eval(arm_cfg, out.rl.params);
  write_eval_outputs(out.base_report, arm_cfg.out_dir, "eval_base");
  write_eval_outputs(out.trained_report, arm_cfg.out_dir, "eval_trained");
  return out;
}

// ----------------------------------------------------------------------------
// Plot data emission: wide metrics CSV -> tidy long format

struct PlotsData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> wide_rows;
  std::string long_csv;
  nlohmann::json records;
};

inline PlotsData emit_plots_data(const std::filesystem::path& metrics_csv) {
  std::ifstream in(metrics_csv);
  if (!in) throw std::runtime_error("cannot open metrics file: " + metrics_csv.string());
  PlotsData out;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics file is empty");
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const auto comma = line.find(',', pos);
    out.header.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.header.empty() || out.header[0] != "k")
    throw std::runtime_error("malformed metrics header");

  out.long_csv = "k,metric,value\n";
  out.records = nlohmann::json::array();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t p = 0;
    while (p <= line.size()) {
      const auto comma = line.find(',', p);
      const std::string tok = line.substr(p, comma == std::string::npos ? comma : comma - p);
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::runtime_error("malformed metrics value '" + tok + "'");
      }
      if (comma == std::string::npos) break;
      p = comma + 1;
    }
    if (row.size() != out.header.size()) throw std::runtime_error("ragged metrics row");
    nlohmann::json rec;
    for (std::size_t c = 0; c < row.size(); ++c) rec[out.header[c]] = row[c];
    out.records.push_back(rec);
    for (std::size_t c = 1; c < row.size(); ++c)
      out.long_csv += fmt(row[0]) + "," + out.header[c] + "," + fmt(row[c]) + "\n";
    out.wide_rows.push_back(std::move(row));
  }
  return out;
}

inline void write_plots_data(const PlotsData& data, const std::filesystem::path& dir,
                             const std::string& stem) {
  std::filesystem::create_directories(dir);
  io::write_text_atomic(dir / (stem + ".csv"), data.long_csv);
  io::write_text_atomic(dir / (stem + ".json"), data.records.dump(2) + "\n");
}

// ----------------------------------------------------------------------------
// Rollout bench

struct BenchRow {
  std::string strategy;
  int n_clips = 0, group = 0, steps = 0, target = 0;
  std::uint64_t predicted = 0, measured = 0;
  double wall_ms = 0.0;
};

inline std::vector<BenchRow> rollout_bench(const ExperimentConfig& cfg,
                                           const std::vector<int>& n_grid,
                                           const std::vector<int>& g_grid,
                                           const std::vector<int>& t_grid) {
  const PolicyParams params = init_params(cfg.arch(), derive_seed(cfg.seed, "bench.init"));
  std::vector<BenchRow> rows;
  for (int n : n_grid) {
    const PromptCase pc = make_case(cfg.worldsim, ActionMode::kCombined, n,
                                    cfg.worldsim.switch_prob, cfg.seed, "bench.case",
                                    static_cast<std::uint64_t>(n));
    for (int g : g_grid) {
      for (int t : t_grid) {
        {
          CostLedger ledger;
          const auto start = std::chrono::steady_clock::now();
          const std::vector<ActionToken> pre(pc.actions.begin(), pc.actions.end() - 1);
          Rng prefix_rng = derive_rng(cfg.seed, "bench.prefix", static_cast<std::uint64_t>(n),
                                      static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t));
          auto prefix = gen_prefix(params, pc.ctx, pre, prefix_rng, t, &ledger);
          rollout_group(params, pc.ctx, pc.actions, std::move(prefix), g,
                        derive_seed(cfg.seed, "bench.group", static_cast<std::uint64_t>(n),
                                    static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t)),
                        t, &ledger);
          const auto report = cost_report(ledger);
          BenchRow row;
          row.strategy = "clip";
          row.n_clips = n;
          row.group = g;
          row.steps = t;
          row.target = n;
          row.predicted = static_cast<std::uint64_t>((n - 1 + g) * t);
          row.measured = report.total_evals;
          row.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
          rows.push_back(std::move(row));
        }
        {
          CostLedger ledger;
          const auto start = std::chrono::steady_clock::now();
          sample_level_rollout(params, pc.ctx, pc.actions, g,
                               derive_seed(cfg.seed, "bench.sl", static_cast<std::uint64_t>(n),
                                           static_cast<std::uint64_t>(g),
                                           static_cast<std::uint64_t>(t)),
                               t, &ledger);
          const auto report = cost_report(ledger);
          BenchRow row;
          row.strategy = "sample";
          row.n_clips = n;
          row.group = g;
          row.steps = t;
          row.target = n;
          row.predicted = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(g) *
                          static_cast<std::uint64_t>(t);
          row.measured = report.total_evals;
          row.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  std::string csv = "strategy,N,G,T,n,predicted_evals,measured_evals,wall_ms\n";
  for (const auto& r : rows)
    csv += r.strategy + "," + fmt(r.n_clips) + "," + fmt(r.group) + "," + fmt(r.steps) + "," +
           fmt(r.target) + "," + fmt(r.predicted) + "," + fmt(r.measured) + "," + fmt(r.wall_ms) +
           "\n";
  io::write_text_atomic(path, csv);
}

}  // namespace poseworld
