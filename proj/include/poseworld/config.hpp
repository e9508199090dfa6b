#pragma once

// Experiment configuration: nested sections mirroring each module's config,
// loaded from JSON with strict key checking (unknown keys are an error) and
// defaults printable via the CLI.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseworld/flowmodel.hpp"
#include "poseworld/nftopt.hpp"
#include "poseworld/reward.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

struct FlowModelSection {
  std::vector<int> hidden = {64, 64};
  int time_freqs = 4;
  PretrainConfig pretrain;
};

struct RolloutSection {
  int sampling_steps = 40;
};

struct NftSection {
  TrainConfig train;
  int prompt_pool = 64;
  int probe_every = 100;
  int probe_cases = 32;
  int checkpoint_every = 200;
};

struct EvalSection {
  std::vector<int> horizons = {4, 8, 12};  // clips; short / mid / long
  std::vector<ActionMode> modes = {ActionMode::kBasic, ActionMode::kCombined};
  int cases_per_cell = 24;
  double switch_prob = 0.3;
  int bootstrap_resamples = 1000;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  WorldConfig worldsim;
  std::string dataset_path;  // empty: build the dataset; set: load it
  FlowModelSection flowmodel;
  RolloutSection rollout;
  RewardConfig reward;
  EstimatorConfig estimator;
  NftSection nftopt;
  EvalSection eval;

  ArchConfig arch() const {
    ArchConfig a;
    a.clip_dim = clip_dim(worldsim.frames_per_clip);
    a.hidden = flowmodel.hidden;
    a.time_freqs = flowmodel.time_freqs;
    return a;
  }
};

namespace cfgdetail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw std::invalid_argument("unknown config key '" + section + "." + item.key() + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_range(const nlohmann::json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2)
    throw std::invalid_argument(std::string("config key '") + key + "' must be [lo, hi]");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

inline ActionMode parse_mode(const std::string& s) {
  if (s == "basic") return ActionMode::kBasic;
  if (s == "combined") return ActionMode::kCombined;
  throw std::invalid_argument("unknown action mode '" + s + "'");
}

inline std::string mode_name(ActionMode m) {
  return m == ActionMode::kBasic ? "basic" : "combined";
}

}  // namespace cfgdetail

inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  using namespace cfgdetail;
  check_keys(j, {"seed", "out_dir", "worldsim", "dataset_path", "flowmodel", "rollout", "reward",
                 "nftopt", "eval"},
             "<root>");
  read(j, "seed", cfg.seed);
  read(j, "out_dir", cfg.out_dir);
  read(j, "dataset_path", cfg.dataset_path);

  if (j.contains("worldsim")) {
    const auto& w = j.at("worldsim");
    check_keys(w,
               {"entries", "clips_per_entry", "frames_per_clip", "action_mode", "switch_prob",
                "corruption_rate", "step_scale_range", "rot_step_range_deg", "jitter_sigma_rel",
                "world_bound", "init_pos_frac", "init_pitch_max"},
               "worldsim");
    read(w, "entries", cfg.worldsim.entries);
    read(w, "clips_per_entry", cfg.worldsim.clips_per_entry);
    read(w, "frames_per_clip", cfg.worldsim.frames_per_clip);
    if (w.contains("action_mode"))
      cfg.worldsim.action_mode = parse_mode(w.at("action_mode").get<std::string>());
    read(w, "switch_prob", cfg.worldsim.switch_prob);
    read(w, "corruption_rate", cfg.worldsim.corruption_rate);
    read_range(w, "step_scale_range", cfg.worldsim.step_scale_min, cfg.worldsim.step_scale_max);
    read_range(w, "rot_step_range_deg", cfg.worldsim.rot_step_min_deg, cfg.worldsim.rot_step_max_deg);
    read(w, "jitter_sigma_rel", cfg.worldsim.jitter.sigma_rel);
    read(w, "world_bound", cfg.worldsim.world_bound);
    read(w, "init_pos_frac", cfg.worldsim.init_pos_frac);
    read(w, "init_pitch_max", cfg.worldsim.init_pitch_max);
  }

  if (j.contains("flowmodel")) {
    const auto& f = j.at("flowmodel");
    check_keys(f,
               {"hidden", "time_freqs", "pretrain_steps", "pretrain_batch", "pretrain_lr",
                "pretrain_lr_final", "pretrain_grad_clip"},
               "flowmodel");
    read(f, "hidden", cfg.flowmodel.hidden);
    read(f, "time_freqs", cfg.flowmodel.time_freqs);
    read(f, "pretrain_steps", cfg.flowmodel.pretrain.steps);
    read(f, "pretrain_batch", cfg.flowmodel.pretrain.batch_size);
    read(f, "pretrain_lr", cfg.flowmodel.pretrain.lr);
    read(f, "pretrain_lr_final", cfg.flowmodel.pretrain.lr_final);
    read(f, "pretrain_grad_clip", cfg.flowmodel.pretrain.grad_clip);
  }

  if (j.contains("rollout")) {
    const auto& r = j.at("rollout");
    check_keys(r, {"sampling_steps"}, "rollout");
    read(r, "sampling_steps", cfg.rollout.sampling_steps);
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r,
               {"tau_rot_deg", "tau_trans", "frame_interval", "kappa1", "kappa2", "kappa3",
                "speed_cap", "world_bound", "estimator"},
               "reward");
    if (r.contains("tau_rot_deg")) cfg.reward.tau_rot = r.at("tau_rot_deg").get<double>() * kPi / 180.0;
    read(r, "tau_trans", cfg.reward.tau_trans);
    read(r, "frame_interval", cfg.reward.frame_interval);
    read(r, "kappa1", cfg.reward.kappa1);
    read(r, "kappa2", cfg.reward.kappa2);
    read(r, "kappa3", cfg.reward.kappa3);
    read(r, "speed_cap", cfg.reward.speed_cap);
    read(r, "world_bound", cfg.reward.world_bound);
    if (r.contains("estimator")) {
      const auto& e = r.at("estimator");
      check_keys(e, {"rot_noise_deg", "trans_noise", "scale_range", "seed"}, "reward.estimator");
      if (e.contains("rot_noise_deg"))
        cfg.estimator.rot_noise = e.at("rot_noise_deg").get<double>() * kPi / 180.0;
      read(e, "trans_noise", cfg.estimator.trans_noise);
      read_range(e, "scale_range", cfg.estimator.scale_min, cfg.estimator.scale_max);
      read(e, "seed", cfg.estimator.seed);
    }
  }

  if (j.contains("nftopt")) {
    const auto& n = j.at("nftopt");
    check_keys(n,
               {"lambda", "z", "beta", "group_size", "groups_per_step", "timestep_fraction",
                "k_top", "k_bot", "max_clips", "lr", "grad_clip", "ema_start", "ema_end",
                "ema_horizon", "total_iterations", "std_floor", "strategy", "reuse_rollout_noise", "prompt_pool",
                "probe_every", "probe_cases", "checkpoint_every"},
               "nftopt");
    TrainConfig& t = cfg.nftopt.train;
    read(n, "lambda", t.lambda);
    read(n, "z", t.z_norm);
    read(n, "beta", t.beta);
    read(n, "group_size", t.group_size);
    read(n, "groups_per_step", t.groups_per_step);
    read(n, "timestep_fraction", t.timestep_fraction);
    read(n, "k_top", t.k_top);
    read(n, "k_bot", t.k_bot);
    read(n, "max_clips", t.max_clips);
    read(n, "lr", t.lr);
    read(n, "grad_clip", t.grad_clip);
    read(n, "ema_start", t.ema_start);
    read(n, "ema_end", t.ema_end);
    read(n, "ema_horizon", t.ema_horizon);
    read(n, "total_iterations", t.total_iterations);
    read(n, "std_floor", t.std_floor);
    if (n.contains("strategy")) {
      const auto s = n.at("strategy").get<std::string>();
      if (s == "clip")
        t.strategy = RolloutStrategy::kClipLevel;
      else if (s == "sample")
        t.strategy = RolloutStrategy::kSampleLevel;
      else
        throw std::invalid_argument("unknown rollout strategy '" + s + "'");
    }
    read(n, "reuse_rollout_noise", t.reuse_rollout_noise);
    read(n, "prompt_pool", cfg.nftopt.prompt_pool);
    read(n, "probe_every", cfg.nftopt.probe_every);
    read(n, "probe_cases", cfg.nftopt.probe_cases);
    read(n, "checkpoint_every", cfg.nftopt.checkpoint_every);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"horizons", "modes", "cases_per_cell", "switch_prob", "bootstrap_resamples"},
               "eval");
    read(e, "horizons", cfg.eval.horizons);
    if (e.contains("modes")) {
      cfg.eval.modes.clear();
      for (const auto& m : e.at("modes")) cfg.eval.modes.push_back(parse_mode(m.get<std::string>()));
    }
    read(e, "cases_per_cell", cfg.eval.cases_per_cell);
    read(e, "switch_prob", cfg.eval.switch_prob);
    read(e, "bootstrap_resamples", cfg.eval.bootstrap_resamples);
  }

  cfg.reward.validate();
  cfg.nftopt.train.sampling_steps = cfg.rollout.sampling_steps;
  cfg.nftopt.train.validate();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  nlohmann::json j;
  in >> j;
  ExperimentConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using cfgdetail::mode_name;
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["dataset_path"] = cfg.dataset_path;
  j["worldsim"] = {
      {"entries", cfg.worldsim.entries},
      {"clips_per_entry", cfg.worldsim.clips_per_entry},
      {"frames_per_clip", cfg.worldsim.frames_per_clip},
      {"action_mode", mode_name(cfg.worldsim.action_mode)},
      {"switch_prob", cfg.worldsim.switch_prob},
      {"corruption_rate", cfg.worldsim.corruption_rate},
      {"step_scale_range", {cfg.worldsim.step_scale_min, cfg.worldsim.step_scale_max}},
      {"rot_step_range_deg", {cfg.worldsim.rot_step_min_deg, cfg.worldsim.rot_step_max_deg}},
      {"jitter_sigma_rel", cfg.worldsim.jitter.sigma_rel},
      {"world_bound", cfg.worldsim.world_bound},
      {"init_pos_frac", cfg.worldsim.init_pos_frac},
      {"init_pitch_max", cfg.worldsim.init_pitch_max},
  };
  j["flowmodel"] = {
      {"hidden", cfg.flowmodel.hidden},
      {"time_freqs", cfg.flowmodel.time_freqs},
      {"pretrain_steps", cfg.flowmodel.pretrain.steps},
      {"pretrain_batch", cfg.flowmodel.pretrain.batch_size},
      {"pretrain_lr", cfg.flowmodel.pretrain.lr},
      {"pretrain_lr_final", cfg.flowmodel.pretrain.lr_final},
      {"pretrain_grad_clip", cfg.flowmodel.pretrain.grad_clip},
  };
  j["rollout"] = {{"sampling_steps", cfg.rollout.sampling_steps}};
  j["reward"] = {
      {"tau_rot_deg", cfg.reward.tau_rot * 180.0 / kPi},
      {"tau_trans", cfg.reward.tau_trans},
      {"frame_interval", cfg.reward.frame_interval},
      {"kappa1", cfg.reward.kappa1},
      {"kappa2", cfg.reward.kappa2},
      {"kappa3", cfg.reward.kappa3},
      {"speed_cap", cfg.reward.speed_cap},
      {"world_bound", cfg.reward.world_bound},
      {"estimator",
       {{"rot_noise_deg", cfg.estimator.rot_noise * 180.0 / kPi},
        {"trans_noise", cfg.estimator.trans_noise},
        {"scale_range", {cfg.estimator.scale_min, cfg.estimator.scale_max}},
        {"seed", cfg.estimator.seed}}},
  };
  const TrainConfig& t = cfg.nftopt.train;
  j["nftopt"] = {
      {"lambda", t.lambda},
      {"z", t.z_norm},
      {"beta", t.beta},
      {"group_size", t.group_size},
      {"groups_per_step", t.groups_per_step},
      {"timestep_fraction", t.timestep_fraction},
      {"k_top", t.k_top},
      {"k_bot", t.k_bot},
      {"max_clips", t.max_clips},
      {"lr", t.lr},
      {"grad_clip", t.grad_clip},
      {"ema_start", t.ema_start},
      {"ema_end", t.ema_end},
      {"ema_horizon", t.ema_horizon},
      {"total_iterations", t.total_iterations},
      {"std_floor", t.std_floor},
      {"strategy", t.strategy == RolloutStrategy::kClipLevel ? "clip" : "sample"},
      {"reuse_rollout_noise", t.reuse_rollout_noise},
      {"prompt_pool", cfg.nftopt.prompt_pool},
      {"probe_every", cfg.nftopt.probe_every},
      {"probe_cases", cfg.nftopt.probe_cases},
      {"checkpoint_every", cfg.nftopt.checkpoint_every},
  };
  nlohmann::json modes = nlohmann::json::array();
  for (ActionMode m : cfg.eval.modes) modes.push_back(mode_name(m));
  j["eval"] = {
      {"horizons", cfg.eval.horizons},
      {"modes", modes},
      {"cases_per_cell", cfg.eval.cases_per_cell},
      {"switch_prob", cfg.eval.switch_prob},
      {"bootstrap_resamples", cfg.eval.bootstrap_resamples},
  };
  return j;
}

}  // namespace poseworld
