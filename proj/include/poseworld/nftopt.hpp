#pragma once

// Negative-aware fine-tuning: group-normalized advantages, per-candidate
// optimality probabilities, the implicit positive/negative velocity loss,
// EMA-tracked old policy, Best-of-N candidate selection, timestep
// subsampling, and the progressive clip-index curriculum, composed into one
// training iteration.
//
// Every random draw inside an iteration comes from a stream derived from
// (state.seed, tag, iteration, group, candidate, timestep); the tags are
// listed next to their use. This is what allows the straight-line reference
// implementation in the tests to replay an iteration exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poseworld/flowmodel.hpp"
#include "poseworld/reward.hpp"
#include "poseworld/rng.hpp"
#include "poseworld/rollout.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

enum class RolloutStrategy { kClipLevel, kSampleLevel };

struct TrainConfig {
  double lambda = 2.0 / 3.0;  // IF/VQ trade-off
  double z_norm = 2.0;        // advantage normalizer
  double beta = 1.0;          // NFT mixing
  int group_size = 16;        // G
  int groups_per_step = 8;
  int sampling_steps = 40;  // T
  double timestep_fraction = 0.5;
  int k_top = 3;
  int k_bot = 3;
  int max_clips = 8;  // N, curriculum horizon
  double lr = 5e-4;
  double grad_clip = 30.0;
  double ema_start = 0.4;
  double ema_end = 0.8;
  int ema_horizon = 2000;  // anneal span in iterations; 0 means total_iterations
  int total_iterations = 1400;
  double std_floor = 1e-6;
  RolloutStrategy strategy = RolloutStrategy::kClipLevel;
  bool reuse_rollout_noise = false;  // reuse candidate noises as the loss eps

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
    if (z_norm <= 0.0) throw std::invalid_argument("z_norm must be > 0");
    if (beta <= 0.0) throw std::invalid_argument("beta must be > 0");
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (k_top + k_bot < 2 || k_top + k_bot > group_size)
      throw std::invalid_argument("k_top + k_bot must be in [2, G]");
    if (timestep_fraction <= 0.0 || timestep_fraction > 1.0)
      throw std::invalid_argument("timestep_fraction must be in (0, 1]");
    if (sampling_steps < 1) throw std::invalid_argument("sampling_steps must be >= 1");
    if (max_clips < 1) throw std::invalid_argument("max_clips must be >= 1");
    if (total_iterations < 0) throw std::invalid_argument("total_iterations must be >= 0");
  }
};

struct TrainState {
  PolicyParams theta;
  PolicyParams theta_old;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
};

struct IterationMetrics {
  std::int64_t k = 0;
  int n = 1;
  double mean_s_if = 0.0;
  double mean_s_vq = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // after per-term normalization, before clipping
  double eta = 0.0;
};

// ----------------------------------------------------------------------------
// Building blocks

// Group-normalized advantages with a population standard deviation and a
// floor for degenerate (constant-score) groups.
inline std::vector<double> group_advantages(std::span<const double> scores, double std_floor) {
  if (scores.size() < 2) throw std::invalid_argument("group_advantages: need at least 2 scores");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= n;
  const double denom = std::max(std::sqrt(var), std_floor);
  std::vector<double> adv(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) adv[i] = (scores[i] - mean) / denom;
  return adv;
}

inline double combined_advantage(double a_if, double a_vq, double lambda) {
  return lambda * a_if + (1.0 - lambda) * a_vq;
}

// r = 1/2 + 1/2 clip[(lambda a_IF + (1-lambda) a_VQ)/Z, -1, 1]
inline double optimality_prob(double a_if, double a_vq, double lambda, double z_norm) {
  if (!std::isfinite(a_if) || !std::isfinite(a_vq))
    throw std::invalid_argument("optimality_prob: non-finite advantage");
  const double u = combined_advantage(a_if, a_vq, lambda) / z_norm;
  return 0.5 + 0.5 * std::clamp(u, -1.0, 1.0);
}

// Indices of the k_top highest and k_bot lowest values. Candidates are ranked
// by (value desc, index asc); the selection is the head and tail of that
// ranking, returned as a sorted index list.
inline std::vector<int> select_best_of_n(std::span<const double> values, int k_top, int k_bot) {
  const int g = static_cast<int>(values.size());
  if (k_top < 0 || k_bot < 0 || k_top + k_bot > g)
    throw std::invalid_argument("select_best_of_n: k_top + k_bot must be <= G");
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)])
      return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<int> selected;
  selected.reserve(static_cast<std::size_t>(k_top + k_bot));
  for (int i = 0; i < k_top; ++i) selected.push_back(order[static_cast<std::size_t>(i)]);
  for (int i = 0; i < k_bot; ++i) selected.push_back(order[static_cast<std::size_t>(g - k_bot + i)]);
  std::sort(selected.begin(), selected.end());
  return selected;
}

// Uniform sample (without replacement) of ceil(fraction*T) indices into the
// sampler's time grid t_i = 1 - i/T. Returned sorted ascending.
inline std::vector<int> subsample_timesteps(int steps, double fraction, Rng& rng) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("subsample_timesteps: fraction must be in (0, 1]");
  const int m = static_cast<int>(std::ceil(fraction * steps));
  std::vector<int> pool(static_cast<std::size_t>(steps));
  std::iota(pool.begin(), pool.end(), 0);
  for (int j = 0; j < m; ++j) {
    const int pick = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(steps - j)));
    std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

// r ||v+ - v||^2 + (1-r) ||v- - v||^2 with
//   v+ = (1-beta) v_old + beta v_theta,  v- = (1+beta) v_old - beta v_theta.
inline double nft_residual_loss(std::span<const double> v_old, std::span<const double> v_theta,
                                std::span<const double> v, double r, double beta) {
  if (v_old.size() != v_theta.size() || v_old.size() != v.size())
    throw std::invalid_argument("nft_residual_loss: dim mismatch");
  double pos = 0.0, neg = 0.0;
  for (std::size_t d = 0; d < v.size(); ++d) {
    const double vp = (1.0 - beta) * v_old[d] + beta * v_theta[d] - v[d];
    const double vn = (1.0 + beta) * v_old[d] - beta * v_theta[d] - v[d];
    pos += vp * vp;
    neg += vn * vn;
  }
  return r * pos + (1.0 - r) * neg;
}

struct NftTerms {
  SquaredErrorTerm positive;
  SquaredErrorTerm negative;
};

// The two squared-error terms the NFT loss decomposes into. theta_old enters
// only through the frozen v_old evaluation, so gradients flow through theta
// alone:
//   positive: r        * || beta*v_theta + ((1-beta) v_old - v) ||^2
//   negative: (1 - r)  * || -beta*v_theta + ((1+beta) v_old - v) ||^2
inline NftTerms build_nft_terms(const PolicyParams& theta_old, const ClipVec& x,
                                GenerationInput input, double r, double t, const ClipVec& eps,
                                double beta, EvalCounter* counter = nullptr) {
  if (r < 0.0 || r > 1.0) throw std::invalid_argument("nft loss: r outside [0,1]");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("nft loss: t outside [0,1]");
  if (x.size() != eps.size()) throw std::invalid_argument("nft loss: dim mismatch");
  input.t = t;
  ClipVec z_t(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) z_t[d] = (1.0 - t) * x[d] + t * eps[d];
  const ClipVec v_old = velocity(theta_old, z_t, input, counter);
  NftTerms terms;
  terms.positive.z = z_t;
  terms.positive.input = input;
  terms.positive.coeff = beta;
  terms.positive.weight = r;
  terms.positive.offset.resize(x.size());
  terms.negative.z = std::move(z_t);
  terms.negative.input = input;
  terms.negative.coeff = -beta;
  terms.negative.weight = 1.0 - r;
  terms.negative.offset.resize(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double v = x[d] - eps[d];
    terms.positive.offset[d] = (1.0 - beta) * v_old[d] - v;
    terms.negative.offset[d] = (1.0 + beta) * v_old[d] - v;
  }
  return terms;
}

inline double nft_loss(const PolicyParams& theta, const PolicyParams& theta_old, const ClipVec& x,
                       const GenerationInput& input, double r, double t, const ClipVec& eps,
                       double beta, EvalCounter* counter = nullptr) {
  const NftTerms terms = build_nft_terms(theta_old, x, input, r, t, eps, beta, counter);
  GenerationInput in = input;
  in.t = t;
  const ClipVec v_theta = velocity(theta, terms.positive.z, in, counter);
  ClipVec v_old(x.size()), v(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    v[d] = x[d] - eps[d];
    // recover v_old from the positive offset: offset = (1-beta) v_old - v
    v_old[d] = beta == 1.0 ? terms.negative.offset[d] / 2.0 + v[d] / 2.0
                           : (terms.positive.offset[d] + v[d]) / (1.0 - beta);
  }
  return nft_residual_loss(v_old, v_theta, v, r, beta);
}

inline PolicyParams ema_update(const PolicyParams& theta_old, const PolicyParams& theta,
                               double eta) {
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("ema_update: eta outside [0,1]");
  if (!(theta_old.arch == theta.arch) || theta_old.values.size() != theta.values.size())
    throw std::invalid_argument("ema_update: parameter shape mismatch");
  PolicyParams out = theta_old;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = eta * theta_old.values[i] + (1.0 - eta) * theta.values[i];
  return out;
}

// Progressive curriculum: n = (k mod N) + 1.
inline int target_clip_index(std::int64_t k, int max_clips) {
  if (k < 0 || max_clips < 1) throw std::invalid_argument("target_clip_index: bad arguments");
  return static_cast<int>(k % max_clips) + 1;
}

// Linear anneal of the EMA factor over a fixed horizon (by default the full
// 2000-iteration training budget, so shorter runs traverse the same schedule
// prefix instead of a compressed one).
inline double ema_eta_at(const TrainConfig& cfg, std::int64_t k) {
  const int horizon = cfg.ema_horizon > 0 ? cfg.ema_horizon : cfg.total_iterations;
  if (horizon <= 1) return cfg.ema_start;
  const double f = std::min(1.0, static_cast<double>(k) / (horizon - 1));
  return cfg.ema_start + (cfg.ema_end - cfg.ema_start) * f;
}

struct PromptCase {
  SceneContext ctx;
  std::vector<ActionToken> actions;
};

// ----------------------------------------------------------------------------
// One training iteration

// Executes one full iteration: curriculum index, clip-level rollouts with the
// EMA old policy, reward scoring, per-dimension advantages, optimality
// probabilities, Best-of-N selection, timestep subsampling, accumulated NFT
// gradient (normalized by the number of (i, t) terms), one clipped gradient
// step, and the EMA old-policy update.
inline IterationMetrics train_iteration(TrainState& state, std::span<const PromptCase> batch,
                                        const TrainConfig& cfg, const RewardConfig& rcfg,
                                        const EstimatorConfig& est,
                                        CostLedger* ledger = nullptr) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("train_iteration: empty batch");
  const std::int64_t k = state.iteration;
  const int n = target_clip_index(k, cfg.max_clips);
  const std::size_t dim = static_cast<std::size_t>(state.theta.arch.clip_dim);

  Rng tsub_rng = derive_rng(state.seed, "nft.tsub", static_cast<std::uint64_t>(k));
  const std::vector<int> t_indices =
      subsample_timesteps(cfg.sampling_steps, cfg.timestep_fraction, tsub_rng);

  std::vector<SquaredErrorTerm> terms;
  double sum_s_if = 0.0, sum_s_vq = 0.0;
  std::size_t score_count = 0;
  std::size_t pair_count = 0;
  EvalCounter* train_counter = ledger ? ledger->counter(Phase::kTrain) : nullptr;

  for (std::size_t g = 0; g < batch.size(); ++g) {
    const PromptCase& prompt = batch[g];
    if (cfg.strategy == RolloutStrategy::kClipLevel) {
      if (static_cast<int>(prompt.actions.size()) < n)
        throw std::invalid_argument("train_iteration: prompt shorter than target index");
      const std::vector<ActionToken> prefix_actions(prompt.actions.begin(),
                                                    prompt.actions.begin() + (n - 1));
      const std::vector<ActionToken> actions(prompt.actions.begin(), prompt.actions.begin() + n);
      Rng prefix_rng = derive_rng(state.seed, "rollout.prefix", static_cast<std::uint64_t>(k), g);
      std::vector<Clip> prefix = gen_prefix(state.theta_old, prompt.ctx, prefix_actions,
                                            prefix_rng, cfg.sampling_steps, ledger);
      RolloutGroup group = rollout_group(
          state.theta_old, prompt.ctx, actions, std::move(prefix), cfg.group_size,
          derive_seed(state.seed, "rollout.group", static_cast<std::uint64_t>(k), g),
          cfg.sampling_steps, ledger);

      group.s_if.resize(group.candidates.size());
      group.s_vq.resize(group.candidates.size());
      std::vector<Clip> decoded(group.candidates.size());
      for (std::size_t i = 0; i < group.candidates.size(); ++i) {
        decoded[i] = decode_clip(group.candidates[i].z, group.context_pose, prompt.ctx);
        Rng reward_rng =
            derive_rng(state.seed, "reward.if", static_cast<std::uint64_t>(k), g, i);
        group.s_if[i] =
            if_score(decoded[i], group.target_action(), rcfg, est, prompt.ctx, reward_rng).s_if;
        group.s_vq[i] = vq_score(decoded[i], rcfg, prompt.ctx);
        sum_s_if += group.s_if[i];
        sum_s_vq += group.s_vq[i];
        ++score_count;
      }
      group.a_if = group_advantages(group.s_if, cfg.std_floor);
      group.a_vq = group_advantages(group.s_vq, cfg.std_floor);
      std::vector<double> combined(group.candidates.size());
      group.optimality.resize(group.candidates.size());
      for (std::size_t i = 0; i < group.candidates.size(); ++i) {
        combined[i] = combined_advantage(group.a_if[i], group.a_vq[i], cfg.lambda);
        group.optimality[i] = optimality_prob(group.a_if[i], group.a_vq[i], cfg.lambda, cfg.z_norm);
      }
      const std::vector<int> selected = select_best_of_n(combined, cfg.k_top, cfg.k_bot);

      const GenerationInput base_input =
          make_input(group.context_pose, group.target_action(), prompt.ctx);
      PhaseTimer timer(ledger, Phase::kTrain);
      for (int i : selected) {
        const std::size_t ci = static_cast<std::size_t>(i);
        for (int ti : t_indices) {
          const double t = grid_time(ti, cfg.sampling_steps);
          ClipVec eps;
          if (cfg.reuse_rollout_noise) {
            eps = group.candidates[ci].noise;
          } else {
            eps = derive_rng(state.seed, "nft.eps", static_cast<std::uint64_t>(k), g,
                             static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(ti))
                      .normal_vec(dim);
          }
          NftTerms nft = build_nft_terms(state.theta_old, group.candidates[ci].z, base_input,
                                         group.optimality[ci], t, eps, cfg.beta, train_counter);
          terms.push_back(std::move(nft.positive));
          terms.push_back(std::move(nft.negative));
          ++pair_count;
        }
      }
    } else {
      // Sequence-level baseline: one aggregate score per full sequence,
      // broadcast to every clip of the selected sequences.
      const std::uint64_t sl_seed =
          derive_seed(state.seed, "rollout.sl", static_cast<std::uint64_t>(k), g);
      const std::vector<std::vector<Clip>> sequences =
          sample_level_rollout(state.theta_old, prompt.ctx, prompt.actions, cfg.group_size,
                               sl_seed, cfg.sampling_steps, ledger);
      std::vector<double> s_if(sequences.size()), s_vq(sequences.size());
      for (std::size_t i = 0; i < sequences.size(); ++i) {
        Rng reward_rng =
            derive_rng(state.seed, "reward.sl", static_cast<std::uint64_t>(k), g, i);
        const SequenceEvaluation ev =
            eval_sequence(sequences[i], prompt.actions, rcfg, est, prompt.ctx, reward_rng);
        s_if[i] = ev.aggregate.acc_action;
        s_vq[i] = ev.aggregate.vq;
        sum_s_if += s_if[i];
        sum_s_vq += s_vq[i];
        ++score_count;
      }
      const std::vector<double> a_if = group_advantages(s_if, cfg.std_floor);
      const std::vector<double> a_vq = group_advantages(s_vq, cfg.std_floor);
      std::vector<double> combined(sequences.size());
      std::vector<double> opt(sequences.size());
      for (std::size_t i = 0; i < sequences.size(); ++i) {
        combined[i] = combined_advantage(a_if[i], a_vq[i], cfg.lambda);
        opt[i] = optimality_prob(a_if[i], a_vq[i], cfg.lambda, cfg.z_norm);
      }
      const std::vector<int> selected = select_best_of_n(combined, cfg.k_top, cfg.k_bot);

      PhaseTimer timer(ledger, Phase::kTrain);
      for (int i : selected) {
        const std::size_t si = static_cast<std::size_t>(i);
        const std::uint64_t eps_root =
            derive_seed(state.seed, "nft.eps.sl", static_cast<std::uint64_t>(k), g,
                        static_cast<std::uint64_t>(i));
        for (std::size_t c = 0; c < sequences[si].size(); ++c) {
          const Clip& clip = sequences[si][c];
          const ClipVec x = encode_clip(clip, prompt.ctx);
          const GenerationInput input = make_input(clip.start, prompt.actions[c], prompt.ctx);
          for (int ti : t_indices) {
            const double t = grid_time(ti, cfg.sampling_steps);
            ClipVec eps = derive_rng(eps_root, "t", c, static_cast<std::uint64_t>(ti))
                              .normal_vec(dim);
            NftTerms nft = build_nft_terms(state.theta_old, x, input, opt[si], t, eps, cfg.beta,
                                           train_counter);
            terms.push_back(std::move(nft.positive));
            terms.push_back(std::move(nft.negative));
            ++pair_count;
          }
        }
      }
    }
  }

  IterationMetrics metrics;
  metrics.k = k;
  metrics.n = cfg.strategy == RolloutStrategy::kClipLevel ? n : cfg.max_clips;
  metrics.mean_s_if = sum_s_if / static_cast<double>(score_count);
  metrics.mean_s_vq = sum_s_vq / static_cast<double>(score_count);

  {
    PhaseTimer timer(ledger, Phase::kTrain);
    GradResult gr = grad(state.theta, terms, train_counter);
    if (!std::isfinite(gr.loss))
      throw std::runtime_error("train_iteration: non-finite loss at iteration " +
                               std::to_string(k) + " (n=" + std::to_string(n) + ")");
    const double scale = 1.0 / static_cast<double>(pair_count);
    metrics.loss = gr.loss * scale;
    for (double& v : gr.grad) v *= scale;
    metrics.grad_norm = detail::clip_gradient(gr.grad, cfg.grad_clip);
    for (std::size_t i = 0; i < state.theta.values.size(); ++i)
      state.theta.values[i] -= cfg.lr * gr.grad[i];
  }

  metrics.eta = ema_eta_at(cfg, k);
  state.theta_old = ema_update(state.theta_old, state.theta, metrics.eta);
  state.iteration = k + 1;
  return metrics;
}

}  // namespace poseworld
