#pragma once

// Rollout generation for RL training.
//
// Clip-level strategy: the prefix x_{1:n-1} is generated once with the old
// policy and shared; G candidate clips are then sampled for the target index
// from independent noises. The sequence-level baseline (G full sequences) is
// kept for the ablation harness. A cost ledger counts actual velocity-field
// evaluations next to their closed-form predictions, so the O(N+G) vs O(N*G)
// accounting is measured, not assumed.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseworld/flowmodel.hpp"
#include "poseworld/rng.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

enum class Phase : int { kPrefix = 0, kCandidates = 1, kTrain = 2, kEval = 3 };
inline constexpr int kPhaseCount = 4;
inline constexpr const char* kPhaseNames[kPhaseCount] = {"prefix", "candidates", "train", "eval"};

// Counters are atomic so concurrent group processing stays safe; within one
// run they are monotone non-decreasing.
struct CostLedger {
  std::array<std::atomic<std::uint64_t>, kPhaseCount> measured{};
  std::array<std::atomic<std::uint64_t>, kPhaseCount> predicted{};
  std::array<std::atomic<std::uint64_t>, kPhaseCount> prediction_events{};
  std::array<std::atomic<std::uint64_t>, kPhaseCount> wall_us{};
  std::atomic<std::uint64_t> clips_sampled{0};

  EvalCounter* counter(Phase p) { return &measured[static_cast<std::size_t>(p)]; }

  void predict(Phase p, std::uint64_t evals) {
    predicted[static_cast<std::size_t>(p)].fetch_add(evals, std::memory_order_relaxed);
    prediction_events[static_cast<std::size_t>(p)].fetch_add(1, std::memory_order_relaxed);
  }

  void add_wall(Phase p, std::uint64_t us) {
    wall_us[static_cast<std::size_t>(p)].fetch_add(us, std::memory_order_relaxed);
  }

  void add_clips(std::uint64_t n) { clips_sampled.fetch_add(n, std::memory_order_relaxed); }

  std::uint64_t total_measured() const {
    std::uint64_t t = 0;
    for (const auto& c : measured) t += c.load(std::memory_order_relaxed);
    return t;
  }
};

class PhaseTimer {
 public:
  PhaseTimer(CostLedger* ledger, Phase phase) : ledger_(ledger), phase_(phase) {
    if (ledger_) start_ = std::chrono::steady_clock::now();
  }
  ~PhaseTimer() {
    if (!ledger_) return;
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
    ledger_->add_wall(phase_, static_cast<std::uint64_t>(us));
  }

 private:
  CostLedger* ledger_;
  Phase phase_;
  std::chrono::steady_clock::time_point start_;
};

struct RolloutCandidate {
  ClipVec noise;  // initial standard-normal draw, kept for the training stage
  ClipVec z;      // sampled clip vector
};

struct RolloutGroup {
  SceneContext ctx;
  std::vector<ActionToken> actions;  // a_{1:n}
  std::vector<Clip> prefix;          // x_{1:n-1}
  int target_index = 1;              // n, 1-based
  Pose context_pose;                 // prefix endpoint shared by every candidate
  std::vector<RolloutCandidate> candidates;
  std::vector<double> s_if, s_vq;
  std::vector<double> a_if, a_vq;
  std::vector<double> optimality;

  const ActionToken& target_action() const { return actions.back(); }
};

// Shared prefix for one group: n-1 clips generated with the (EMA) old policy.
inline std::vector<Clip> gen_prefix(const PolicyParams& params_old, const SceneContext& ctx,
                                    const std::vector<ActionToken>& prefix_actions, Rng& rng,
                                    int steps, CostLedger* ledger = nullptr) {
  PhaseTimer timer(ledger, Phase::kPrefix);
  if (ledger) {
    ledger->predict(Phase::kPrefix,
                    static_cast<std::uint64_t>(prefix_actions.size()) * static_cast<std::uint64_t>(steps));
    ledger->add_clips(prefix_actions.size());
  }
  if (prefix_actions.empty()) return {};
  return generate_sequence(params_old, ctx, prefix_actions, rng, steps,
                           ledger ? ledger->counter(Phase::kPrefix) : nullptr);
}

// G candidate clips against a shared prefix. Candidate noises come from
// counter-based streams keyed by (group_seed, candidate index), so adding
// candidates never perturbs existing ones.
inline RolloutGroup rollout_group(const PolicyParams& params_old, const SceneContext& ctx,
                                  const std::vector<ActionToken>& actions,
                                  std::vector<Clip> prefix, int group_size,
                                  std::uint64_t group_seed, int steps,
                                  CostLedger* ledger = nullptr) {
  if (group_size < 2)
    throw std::invalid_argument("rollout_group: group statistics need G >= 2");
  if (actions.empty()) throw std::invalid_argument("rollout_group: empty action sequence");
  PhaseTimer timer(ledger, Phase::kCandidates);
  if (ledger) {
    ledger->predict(Phase::kCandidates,
                    static_cast<std::uint64_t>(group_size) * static_cast<std::uint64_t>(steps));
    ledger->add_clips(static_cast<std::uint64_t>(group_size));
  }
  RolloutGroup group;
  group.ctx = ctx;
  group.actions = actions;
  group.prefix = std::move(prefix);
  group.target_index = static_cast<int>(actions.size());
  group.context_pose =
      group.prefix.empty() ? ctx.initial_pose : group.prefix.back().frames.back();
  const GenerationInput input = make_input(group.context_pose, group.target_action(), ctx);
  group.candidates.reserve(static_cast<std::size_t>(group_size));
  EvalCounter* counter = ledger ? ledger->counter(Phase::kCandidates) : nullptr;
  for (int i = 0; i < group_size; ++i) {
    RolloutCandidate cand;
    Rng noise_rng = derive_rng(group_seed, "cand", static_cast<std::uint64_t>(i));
    cand.noise = noise_rng.normal_vec(static_cast<std::size_t>(params_old.arch.clip_dim));
    cand.z = sample_clip(params_old, input, cand.noise, steps, counter);
    group.candidates.push_back(std::move(cand));
  }
  return group;
}

// LLM-style baseline: G fully independent autoregressive sequences.
inline std::vector<std::vector<Clip>> sample_level_rollout(const PolicyParams& params_old,
                                                           const SceneContext& ctx,
                                                           const std::vector<ActionToken>& actions,
                                                           int group_size, std::uint64_t seed,
                                                           int steps,
                                                           CostLedger* ledger = nullptr) {
  if (group_size < 1) throw std::invalid_argument("sample_level_rollout: G must be >= 1");
  PhaseTimer timer(ledger, Phase::kCandidates);
  if (ledger) {
    ledger->predict(Phase::kCandidates, static_cast<std::uint64_t>(actions.size()) *
                                            static_cast<std::uint64_t>(group_size) *
                                            static_cast<std::uint64_t>(steps));
    ledger->add_clips(static_cast<std::uint64_t>(actions.size()) *
                      static_cast<std::uint64_t>(group_size));
  }
  EvalCounter* counter = ledger ? ledger->counter(Phase::kCandidates) : nullptr;
  std::vector<std::vector<Clip>> sequences;
  sequences.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    Rng rng = derive_rng(seed, "seq", static_cast<std::uint64_t>(i));
    sequences.push_back(generate_sequence(params_old, ctx, actions, rng, steps, counter));
  }
  return sequences;
}

// ----------------------------------------------------------------------------
// Reporting

struct PhaseCost {
  std::string phase;
  std::uint64_t measured = 0;
  std::uint64_t predicted = 0;
  bool has_prediction = false;
  double wall_ms = 0.0;
};

struct CostReport {
  std::vector<PhaseCost> phases;
  std::uint64_t total_evals = 0;
  std::uint64_t clips_sampled = 0;
};

// Snapshot of the ledger. A phase with recorded predictions whose measured
// count disagrees indicates broken accounting and raises an error.
inline CostReport cost_report(const CostLedger& ledger) {
  CostReport report;
  for (int p = 0; p < kPhaseCount; ++p) {
    PhaseCost cost;
    cost.phase = kPhaseNames[p];
    cost.measured = ledger.measured[static_cast<std::size_t>(p)].load(std::memory_order_relaxed);
    cost.predicted = ledger.predicted[static_cast<std::size_t>(p)].load(std::memory_order_relaxed);
    cost.has_prediction =
        ledger.prediction_events[static_cast<std::size_t>(p)].load(std::memory_order_relaxed) > 0;
    cost.wall_ms =
        static_cast<double>(ledger.wall_us[static_cast<std::size_t>(p)].load(std::memory_order_relaxed)) /
        1000.0;
    if (cost.has_prediction && cost.measured != cost.predicted)
      throw std::runtime_error("cost_report: measured evaluations (" +
                               std::to_string(cost.measured) + ") disagree with prediction (" +
                               std::to_string(cost.predicted) + ") in phase " + cost.phase);
    report.total_evals += cost.measured;
    report.phases.push_back(std::move(cost));
  }
  report.clips_sampled = ledger.clips_sampled.load(std::memory_order_relaxed);
  return report;
}

inline nlohmann::json cost_report_to_json(const CostReport& r) {
  nlohmann::json phases = nlohmann::json::array();
  for (const PhaseCost& p : r.phases) {
    phases.push_back({{"phase", p.phase},
                      {"measured", p.measured},
                      {"predicted", p.predicted},
                      {"has_prediction", p.has_prediction},
                      {"wall_ms", p.wall_ms}});
  }
  return nlohmann::json{
      {"phases", phases}, {"total_evals", r.total_evals}, {"clips_sampled", r.clips_sampled}};
}

inline CostReport cost_report_from_json(const nlohmann::json& j) {
  CostReport r;
  for (const auto& p : j.at("phases")) {
    PhaseCost c;
    c.phase = p.at("phase").get<std::string>();
    c.measured = p.at("measured").get<std::uint64_t>();
    c.predicted = p.at("predicted").get<std::uint64_t>();
    c.has_prediction = p.at("has_prediction").get<bool>();
    c.wall_ms = p.at("wall_ms").get<double>();
    r.phases.push_back(std::move(c));
  }
  r.total_evals = j.at("total_evals").get<std::uint64_t>();
  r.clips_sampled = j.at("clips_sampled").get<std::uint64_t>();
  return r;
}

}  // namespace poseworld
