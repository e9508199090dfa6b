#pragma once

// Straight-line reference implementation of one training iteration, used to
// cross-check train_iteration at minimal scale. It recomputes advantages,
// optimality probabilities, Best-of-N selection, timestep subsampling, the
// NFT loss, and the parameter/EMA updates inline with naive formulas, and
// differentiates the loss by central finite differences rather than
// backpropagation. Model primitives (velocity, sample_clip, rewards) are the
// library's own; everything the optimizer composes on top of them is
// re-derived here.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "poseworld/nftopt.hpp"

namespace poseworld::testing {

struct ReferenceResult {
  double loss = 0.0;
  PolicyParams theta;
  PolicyParams theta_old;
};

inline ReferenceResult reference_train_iteration(const TrainState& state,
                                                 std::span<const PromptCase> batch,
                                                 const TrainConfig& cfg, const RewardConfig& rcfg,
                                                 const EstimatorConfig& est) {
  const std::int64_t k = state.iteration;
  const int n = static_cast<int>(k % cfg.max_clips) + 1;
  const std::size_t dim = static_cast<std::size_t>(state.theta.arch.clip_dim);

  // timestep subset: same partial Fisher-Yates draw, re-derived inline
  Rng tsub_rng = derive_rng(state.seed, "nft.tsub", static_cast<std::uint64_t>(k));
  const int m = static_cast<int>(std::ceil(cfg.timestep_fraction * cfg.sampling_steps));
  std::vector<int> pool(static_cast<std::size_t>(cfg.sampling_steps));
  std::iota(pool.begin(), pool.end(), 0);
  for (int j = 0; j < m; ++j) {
    const int pick =
        j + static_cast<int>(tsub_rng.below(static_cast<std::uint64_t>(cfg.sampling_steps - j)));
    std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());

  // One precomputed loss term: everything except v_theta is frozen.
  struct RefTerm {
    ClipVec z_t;
    GenerationInput input;
    ClipVec v_old;
    ClipVec v;
    double r = 0.5;
  };
  std::vector<RefTerm> ref_terms;

  for (std::size_t g = 0; g < batch.size(); ++g) {
    const PromptCase& prompt = batch[g];
    const std::vector<ActionToken> prefix_actions(prompt.actions.begin(),
                                                  prompt.actions.begin() + (n - 1));
    Rng prefix_rng = derive_rng(state.seed, "rollout.prefix", static_cast<std::uint64_t>(k), g);
    std::vector<Clip> prefix;
    if (!prefix_actions.empty())
      prefix = generate_sequence(state.theta_old, prompt.ctx, prefix_actions, prefix_rng,
                                 cfg.sampling_steps);
    const Pose context_pose = prefix.empty() ? prompt.ctx.initial_pose : prefix.back().frames.back();
    const ActionToken action = prompt.actions[static_cast<std::size_t>(n - 1)];
    const GenerationInput base_input = make_input(context_pose, action, prompt.ctx);

    const std::uint64_t group_seed =
        derive_seed(state.seed, "rollout.group", static_cast<std::uint64_t>(k), g);
    std::vector<ClipVec> noises, zs;
    for (int i = 0; i < cfg.group_size; ++i) {
      Rng noise_rng = derive_rng(group_seed, "cand", static_cast<std::uint64_t>(i));
      noises.push_back(noise_rng.normal_vec(dim));
      zs.push_back(sample_clip(state.theta_old, base_input, noises.back(), cfg.sampling_steps));
    }

    std::vector<double> s_if(zs.size()), s_vq(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const Clip clip = decode_clip(zs[i], context_pose, prompt.ctx);
      Rng reward_rng = derive_rng(state.seed, "reward.if", static_cast<std::uint64_t>(k), g, i);
      s_if[i] = if_score(clip, action, rcfg, est, prompt.ctx, reward_rng).s_if;
      s_vq[i] = vq_score(clip, rcfg, prompt.ctx);
    }

    // advantages, naive two-pass, population std with floor
    auto advantages = [&](const std::vector<double>& s) {
      double mean = 0.0;
      for (double v : s) mean += v;
      mean /= static_cast<double>(s.size());
      double var = 0.0;
      for (double v : s) var += (v - mean) * (v - mean);
      var /= static_cast<double>(s.size());
      const double denom = std::max(std::sqrt(var), cfg.std_floor);
      std::vector<double> a(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) a[i] = (s[i] - mean) / denom;
      return a;
    };
    const std::vector<double> a_if = advantages(s_if);
    const std::vector<double> a_vq = advantages(s_vq);
    std::vector<double> combined(zs.size()), r(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
      combined[i] = cfg.lambda * a_if[i] + (1.0 - cfg.lambda) * a_vq[i];
      double u = combined[i] / cfg.z_norm;
      u = u < -1.0 ? -1.0 : (u > 1.0 ? 1.0 : u);
      r[i] = 0.5 + 0.5 * u;
    }

    // Best-of-N: full sort by (value desc, index asc), head + tail
    std::vector<int> order(zs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (combined[static_cast<std::size_t>(a)] != combined[static_cast<std::size_t>(b)])
        return combined[static_cast<std::size_t>(a)] > combined[static_cast<std::size_t>(b)];
      return a < b;
    });
    std::vector<int> selected;
    for (int i = 0; i < cfg.k_top; ++i) selected.push_back(order[static_cast<std::size_t>(i)]);
    for (int i = 0; i < cfg.k_bot; ++i)
      selected.push_back(order[zs.size() - static_cast<std::size_t>(cfg.k_bot) +
                               static_cast<std::size_t>(i)]);
    std::sort(selected.begin(), selected.end());

    for (int i : selected) {
      const std::size_t ci = static_cast<std::size_t>(i);
      for (int ti : pool) {
        const double t = 1.0 - static_cast<double>(ti) / cfg.sampling_steps;
        ClipVec eps;
        if (cfg.reuse_rollout_noise) {
          eps = noises[ci];
        } else {
          eps = derive_rng(state.seed, "nft.eps", static_cast<std::uint64_t>(k), g,
                           static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(ti))
                    .normal_vec(dim);
        }
        RefTerm term;
        term.z_t.resize(dim);
        term.v.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
          term.z_t[d] = (1.0 - t) * zs[ci][d] + t * eps[d];
          term.v[d] = zs[ci][d] - eps[d];
        }
        term.input = base_input;
        term.input.t = t;
        term.v_old = velocity(state.theta_old, term.z_t, term.input);
        term.r = r[ci];
        ref_terms.push_back(std::move(term));
      }
    }
  }

  const double scale = 1.0 / static_cast<double>(ref_terms.size());
  auto loss_at = [&](const PolicyParams& theta) {
    double total = 0.0;
    for (const RefTerm& term : ref_terms) {
      const ClipVec v_theta = velocity(theta, term.z_t, term.input);
      double pos = 0.0, neg = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double vp =
            (1.0 - cfg.beta) * term.v_old[d] + cfg.beta * v_theta[d] - term.v[d];
        const double vn =
            (1.0 + cfg.beta) * term.v_old[d] - cfg.beta * v_theta[d] - term.v[d];
        pos += vp * vp;
        neg += vn * vn;
      }
      total += term.r * pos + (1.0 - term.r) * neg;
    }
    return total * scale;
  };

  ReferenceResult out;
  out.loss = loss_at(state.theta);

  // finite-difference gradient of the normalized loss
  PolicyParams theta = state.theta;
  std::vector<double> grad(theta.values.size());
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    const double save = theta.values[i];
    const double h = 1e-5 * std::max(1.0, std::abs(save));
    theta.values[i] = save + h;
    const double lp = loss_at(theta);
    theta.values[i] = save - h;
    const double lm = loss_at(theta);
    theta.values[i] = save;
    grad[i] = (lp - lm) / (2.0 * h);
  }
  double norm = 0.0;
  for (double v : grad) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > cfg.grad_clip && norm > 0.0)
    for (double& v : grad) v *= cfg.grad_clip / norm;
  out.theta = state.theta;
  for (std::size_t i = 0; i < grad.size(); ++i) out.theta.values[i] -= cfg.lr * grad[i];

  const int horizon = cfg.ema_horizon > 0 ? cfg.ema_horizon : cfg.total_iterations;
  double eta = cfg.ema_start;
  if (horizon > 1)
    eta += (cfg.ema_end - cfg.ema_start) *
           std::min(1.0, static_cast<double>(k) / (horizon - 1));
  out.theta_old = state.theta_old;
  for (std::size_t i = 0; i < out.theta_old.values.size(); ++i)
    out.theta_old.values[i] = eta * state.theta_old.values[i] + (1.0 - eta) * out.theta.values[i];
  return out;
}

}  // namespace poseworld::testing
