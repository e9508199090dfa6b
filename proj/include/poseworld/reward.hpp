#pragma once

// Reward functions for generated clips.
//
// Interaction-following: estimate per-interval relative camera motion (with
// configurable estimator noise and a per-scene translation scale ambiguity),
// threshold-classify it back into the discrete action space, and score the
// match against the conditioned action. Rotation uses a single threshold;
// translation is correct if the classified set matches under ANY of the
// configured thresholds, which is what makes the score robust to the unknown
// per-scene scale.
//
// Visual quality: an analytic smoothness/bounds proxy in [0, 1], maximized by
// smooth in-bounds motion (including standing still).

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "poseworld/rng.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

struct EstimatorConfig {
  double rot_noise = 0.1 * kPi / 180.0;  // radians, additive per interval
  double trans_noise = 0.002;            // world units, additive per axis
  double scale_min = 0.7;                // per-scene multiplicative scale on translations
  double scale_max = 1.4;
  std::uint64_t seed = 7;  // roots the per-scene scale draw
};

struct RewardConfig {
  double tau_rot = 1.0 * kPi / 180.0;
  std::vector<double> tau_trans = {0.01, 0.02, 0.03, 0.04, 0.05};
  int frame_interval = 4;
  double kappa1 = 0.4;   // smoothness weight
  double kappa2 = 10.0;  // out-of-bounds weight
  double kappa3 = 0.4;   // excess-speed weight
  double speed_cap = 1.5;  // step units per frame; one action step per frame is 1.0
  double world_bound = 10.0;

  void validate() const {
    if (tau_rot <= 0.0) throw std::invalid_argument("tau_rot must be > 0");
    if (tau_trans.empty()) throw std::invalid_argument("tau_trans must be nonempty");
    for (std::size_t i = 1; i < tau_trans.size(); ++i)
      if (tau_trans[i] <= tau_trans[i - 1])
        throw std::invalid_argument("tau_trans must be strictly increasing");
    if (frame_interval < 1) throw std::invalid_argument("frame_interval must be >= 1");
  }
};

struct IntervalTrace {
  bool rot_ok = false;
  bool trans_ok = false;
  std::uint8_t rot_classified = 0;  // rotate bits
};

struct RewardBreakdown {
  double s_if = 0.0;
  double rot_acc = 0.0;
  double trans_acc = 0.0;
  std::optional<double> s_vq;
  std::vector<IntervalTrace> trace;
};

// Relative motion over one sampled interval: rotation deltas plus the
// translation expressed in the camera frame of the interval's first pose.
struct RelativePose {
  double dyaw = 0.0;
  double dpitch = 0.0;
  Vec3 d_cam;
};

namespace detail {

// Poses entering evaluation: the chaining pose, then every frame_interval-th
// frame. With F frames this yields floor(F / interval) intervals.
inline std::vector<Pose> sampled_poses(const Clip& clip, int interval) {
  if (interval < 1) throw std::invalid_argument("frame_interval must be >= 1");
  if (static_cast<std::size_t>(interval) > clip.frames.size())
    throw std::invalid_argument("frame_interval exceeds clip length");
  std::vector<Pose> poses;
  poses.push_back(clip.start);
  for (std::size_t k = static_cast<std::size_t>(interval); k <= clip.frames.size();
       k += static_cast<std::size_t>(interval))
    poses.push_back(clip.frames[k - 1]);
  return poses;
}

inline double scene_scale(const EstimatorConfig& est, std::uint64_t scene_id) {
  return derive_rng(est.seed, "est.scale", scene_id).uniform(est.scale_min, est.scale_max);
}

}  // namespace detail

// True relative motion per sampled interval, degraded by additive Gaussian
// noise and one per-scene multiplicative translation scale (the stand-in for
// scale ambiguity in camera-trajectory estimation). estimate = scale * true + noise.
inline std::vector<RelativePose> estimate_relative_poses(const Clip& clip, int interval,
                                                         const EstimatorConfig& est,
                                                         const SceneContext& ctx, Rng& rng) {
  const std::vector<Pose> poses = detail::sampled_poses(clip, interval);
  const double scale = detail::scene_scale(est, ctx.scene_id);
  std::vector<RelativePose> rels;
  rels.reserve(poses.size() - 1);
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    const Pose& a = poses[i];
    const Pose& b = poses[i + 1];
    RelativePose rel;
    rel.dyaw = wrap_angle(b.yaw - a.yaw);
    rel.dpitch = b.pitch - a.pitch;
    const CameraBasis basis = camera_basis(a.yaw, a.pitch);
    const Vec3 d = b.position - a.position;
    rel.d_cam = {d.dot(basis.right) * scale, d.dot(basis.up) * scale,
                 d.dot(basis.forward) * scale};
    if (est.rot_noise > 0.0) {
      rel.dyaw += est.rot_noise * rng.normal();
      rel.dpitch += est.rot_noise * rng.normal();
    }
    if (est.trans_noise > 0.0) {
      rel.d_cam.x += est.trans_noise * rng.normal();
      rel.d_cam.y += est.trans_noise * rng.normal();
      rel.d_cam.z += est.trans_noise * rng.normal();
    }
    rels.push_back(rel);
  }
  return rels;
}

// Maps estimated relative motion back to the discrete action space. Vertical
// camera-frame displacement has no corresponding action and is ignored.
inline ActionToken classify_motion(const RelativePose& rel, const RewardConfig& cfg,
                                   double tau_trans) {
  ActionToken t;
  if (std::abs(rel.dyaw) >= cfg.tau_rot) t.bits |= rel.dyaw < 0.0 ? kRotRight : kRotLeft;
  if (std::abs(rel.dpitch) >= cfg.tau_rot) t.bits |= rel.dpitch > 0.0 ? kRotUp : kRotDown;
  if (std::abs(rel.d_cam.z) >= tau_trans) t.bits |= rel.d_cam.z > 0.0 ? kMoveForward : kMoveBackward;
  if (std::abs(rel.d_cam.x) >= tau_trans) t.bits |= rel.d_cam.x > 0.0 ? kMoveRight : kMoveLeft;
  return t;
}

// Interaction-following score. Per interval, the rotation set must match
// exactly under tau_rot, and the translation set must match exactly under at
// least one threshold from tau_trans. s_if is the mean of the two accuracies.
inline RewardBreakdown if_score(const Clip& clip, const ActionToken& action,
                                const RewardConfig& cfg, const EstimatorConfig& est,
                                const SceneContext& ctx, Rng& rng) {
  const std::vector<RelativePose> rels =
      estimate_relative_poses(clip, cfg.frame_interval, est, ctx, rng);
  RewardBreakdown out;
  out.trace.reserve(rels.size());
  int rot_hits = 0, trans_hits = 0;
  for (const RelativePose& rel : rels) {
    IntervalTrace tr;
    const ActionToken rot_cls = classify_motion(rel, cfg, cfg.tau_trans.front());
    tr.rot_classified = rot_cls.rotate_bits();
    tr.rot_ok = rot_cls.rotate_bits() == action.rotate_bits();
    for (double tau : cfg.tau_trans) {
      if (classify_motion(rel, cfg, tau).translate_bits() == action.translate_bits()) {
        tr.trans_ok = true;
        break;
      }
    }
    rot_hits += tr.rot_ok ? 1 : 0;
    trans_hits += tr.trans_ok ? 1 : 0;
    out.trace.push_back(tr);
  }
  const double n = static_cast<double>(rels.size());
  out.rot_acc = rot_hits / n;
  out.trans_acc = trans_hits / n;
  out.s_if = 0.5 * (out.rot_acc + out.trans_acc);
  return out;
}

// Visual-quality proxy: s_vq = exp(-kappa1*J - kappa2*B - kappa3*V) where J
// is the mean squared second difference of the sampled pose sequence in
// step-normalized units, B the mean out-of-bounds excess, and V the mean
// squared per-frame speed beyond speed_cap (the world never moves more than
// one step unit per frame, so any real trajectory has V = 0). Depends only on
// pose differences plus bounds, so it is invariant under rigid in-bounds
// translation, and it is maximal for smooth in-cap motion -- including
// standing still.
inline double vq_score(const Clip& clip, const RewardConfig& cfg, const SceneContext& ctx) {
  const std::vector<Pose> poses = detail::sampled_poses(clip, cfg.frame_interval);
  const std::size_t m = poses.size();

  // Normalized components: positions in step units, angles in rot-step units.
  // Yaw is unwrapped so the second difference never sees a 2*pi seam.
  std::vector<std::array<double, 5>> v(m);
  double yaw_acc = poses[0].yaw;
  for (std::size_t k = 0; k < m; ++k) {
    if (k > 0) yaw_acc += wrap_angle(poses[k].yaw - poses[k - 1].yaw);
    v[k] = {poses[k].position.x / ctx.step_scale, poses[k].position.y / ctx.step_scale,
            poses[k].position.z / ctx.step_scale, yaw_acc / ctx.rot_step,
            poses[k].pitch / ctx.rot_step};
  }

  double jerk = 0.0;
  std::size_t terms = 0;
  for (std::size_t k = 1; k + 1 < m; ++k) {
    for (int c = 0; c < 5; ++c) {
      const double d2 = v[k + 1][static_cast<std::size_t>(c)] - 2.0 * v[k][static_cast<std::size_t>(c)] +
                        v[k - 1][static_cast<std::size_t>(c)];
      jerk += d2 * d2;
      ++terms;
    }
  }
  const double j_term = terms > 0 ? jerk / static_cast<double>(terms) : 0.0;

  double excess = 0.0;
  for (const Pose& p : poses) {
    excess += std::max(0.0, std::abs(p.position.x) - cfg.world_bound);
    excess += std::max(0.0, std::abs(p.position.y) - cfg.world_bound);
    excess += std::max(0.0, std::abs(p.position.z) - cfg.world_bound);
  }
  const double b_term = excess / static_cast<double>(m);

  double speed = 0.0;
  std::size_t speed_terms = 0;
  const double frames_per_interval = static_cast<double>(cfg.frame_interval);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    for (int c = 0; c < 5; ++c) {
      const double rate = (v[k + 1][static_cast<std::size_t>(c)] - v[k][static_cast<std::size_t>(c)]) /
                          frames_per_interval;
      const double over = std::max(0.0, std::abs(rate) - cfg.speed_cap);
      speed += over * over;
      ++speed_terms;
    }
  }
  const double v_term = speed_terms > 0 ? speed / static_cast<double>(speed_terms) : 0.0;

  return std::exp(-cfg.kappa1 * j_term - cfg.kappa2 * b_term - cfg.kappa3 * v_term);
}

struct SequenceAggregate {
  double acc_action = 0.0;
  double acc_rot = 0.0;
  double acc_trans = 0.0;
  double vq = 0.0;
};

struct SequenceEvaluation {
  std::vector<RewardBreakdown> per_clip;
  SequenceAggregate aggregate;
};

// Scores every clip of a generated sequence against its action condition and
// aggregates; this is both the RL reward source and the evaluation metric.
inline SequenceEvaluation eval_sequence(const std::vector<Clip>& clips,
                                        const std::vector<ActionToken>& actions,
                                        const RewardConfig& cfg, const EstimatorConfig& est,
                                        const SceneContext& ctx, Rng& rng) {
  if (clips.size() != actions.size())
    throw std::invalid_argument("eval_sequence: clips/actions length mismatch");
  SequenceEvaluation out;
  out.per_clip.reserve(clips.size());
  for (std::size_t n = 0; n < clips.size(); ++n) {
    RewardBreakdown bd = if_score(clips[n], actions[n], cfg, est, ctx, rng);
    bd.s_vq = vq_score(clips[n], cfg, ctx);
    out.aggregate.acc_action += bd.s_if;
    out.aggregate.acc_rot += bd.rot_acc;
    out.aggregate.acc_trans += bd.trans_acc;
    out.aggregate.vq += *bd.s_vq;
    out.per_clip.push_back(std::move(bd));
  }
  const double n = static_cast<double>(clips.size());
  out.aggregate.acc_action /= n;
  out.aggregate.acc_rot /= n;
  out.aggregate.acc_trans /= n;
  out.aggregate.vq /= n;
  return out;
}

}  // namespace poseworld
