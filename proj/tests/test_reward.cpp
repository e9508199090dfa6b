#include "poseworld/reward.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace pw = poseworld;

namespace {

pw::EstimatorConfig noiseless(double scale = 1.0) {
  pw::EstimatorConfig est;
  est.rot_noise = 0.0;
  est.trans_noise = 0.0;
  est.scale_min = est.scale_max = scale;
  return est;
}

pw::SceneContext scene(double step = 0.02, double rot_deg = 2.0) {
  pw::SceneContext ctx;
  ctx.scene_id = 7;
  ctx.step_scale = step;
  ctx.rot_step = rot_deg * pw::kPi / 180.0;
  return ctx;
}

// Straight line along +z: frame k at (k+1)*step per frame.
pw::Clip forward_clip(int frames, double step_per_frame, pw::Pose start = {}) {
  pw::Clip clip;
  clip.start = start;
  for (int k = 1; k <= frames; ++k) {
    pw::Pose p = start;
    p.position.z += step_per_frame * k;
    clip.frames.push_back(p);
  }
  return clip;
}

pw::Clip static_clip(int frames, pw::Pose start = {}) {
  pw::Clip clip;
  clip.start = start;
  clip.frames.assign(static_cast<std::size_t>(frames), start);
  return clip;
}

TEST(Estimator, ZeroNoiseUnitScaleIsExact) {
  const auto ctx = scene();
  const auto est = noiseless();
  const auto clip = forward_clip(8, 0.02);
  pw::Rng rng(1);
  const auto rels = pw::estimate_relative_poses(clip, 4, est, ctx, rng);
  ASSERT_EQ(rels.size(), 2u);
  for (const auto& r : rels) {
    EXPECT_NEAR(r.d_cam.z, 0.08, 1e-14);
    EXPECT_NEAR(r.d_cam.x, 0.0, 1e-14);
    EXPECT_NEAR(r.d_cam.y, 0.0, 1e-14);
    EXPECT_EQ(r.dyaw, 0.0);
    EXPECT_EQ(r.dpitch, 0.0);
  }
}

TEST(Estimator, StaticClipIsZeroUnderAnyScale) {
  const auto ctx = scene();
  const auto clip = static_clip(8);
  for (double s : {0.3, 1.0, 2.5}) {
    pw::Rng rng(1);
    const auto rels = pw::estimate_relative_poses(clip, 4, noiseless(s), ctx, rng);
    for (const auto& r : rels) {
      EXPECT_EQ(r.d_cam.x, 0.0);
      EXPECT_EQ(r.d_cam.y, 0.0);
      EXPECT_EQ(r.d_cam.z, 0.0);
    }
  }
}

TEST(Estimator, ScaleHalvesDisplacement) {
  const auto ctx = scene(0.0075);
  const auto clip = forward_clip(8, 0.0075);  // 0.03 per 4-frame interval
  pw::Rng rng(1);
  const auto rels = pw::estimate_relative_poses(clip, 4, noiseless(0.5), ctx, rng);
  for (const auto& r : rels) EXPECT_NEAR(r.d_cam.z, 0.015, 1e-14);
}

TEST(Classify, RotationThreshold) {
  const pw::RewardConfig cfg;  // tau_rot = 1 degree
  pw::RelativePose rel;
  rel.dyaw = -2.0 * pw::kPi / 180.0;  // rotate-right convention: yaw decreasing
  auto t = pw::classify_motion(rel, cfg, 0.01);
  EXPECT_EQ(t.bits, pw::kRotRight);
  rel.dyaw = 0.5 * pw::kPi / 180.0;
  t = pw::classify_motion(rel, cfg, 0.01);
  EXPECT_TRUE(t.empty());
}

TEST(Classify, TranslationThreshold) {
  const pw::RewardConfig cfg;
  pw::RelativePose rel;
  rel.d_cam.z = 0.015;
  EXPECT_EQ(pw::classify_motion(rel, cfg, 0.01).bits, pw::kMoveForward);
  EXPECT_TRUE(pw::classify_motion(rel, cfg, 0.02).empty());
  rel.d_cam.z = 0.0;
  rel.d_cam.x = -0.03;
  EXPECT_EQ(pw::classify_motion(rel, cfg, 0.02).bits, pw::kMoveLeft);
}

TEST(IfScore, GroundTruthScoresOne) {
  const auto ctx = scene();
  pw::Rng gen(4);
  const auto clips = pw::gen_trajectory(ctx, {pw::ActionToken{pw::kMoveForward | pw::kRotLeft}},
                                        8, pw::JitterConfig{0.0}, gen);
  pw::Rng rng(1);
  const auto bd = pw::if_score(clips[0], pw::ActionToken{pw::kMoveForward | pw::kRotLeft},
                               pw::RewardConfig{}, noiseless(), ctx, rng);
  EXPECT_EQ(bd.s_if, 1.0);
  EXPECT_EQ(bd.rot_acc, 1.0);
  EXPECT_EQ(bd.trans_acc, 1.0);
}

// Rotation right on both intervals, translation only on the first:
// rot_acc = 1, trans_acc = 0.5, s_if = 0.75.
TEST(IfScore, AveragingRule) {
  const auto ctx = scene();
  pw::Clip clip;
  clip.start = {};
  for (int k = 1; k <= 8; ++k) {
    pw::Pose p;
    p.position.z = k <= 4 ? 0.02 * k : 0.08;  // stops moving after frame 4
    clip.frames.push_back(p);
  }
  pw::Rng rng(1);
  const auto bd = pw::if_score(clip, pw::ActionToken{pw::kMoveForward}, pw::RewardConfig{},
                               noiseless(), ctx, rng);
  EXPECT_EQ(bd.rot_acc, 1.0);
  EXPECT_EQ(bd.trans_acc, 0.5);
  EXPECT_EQ(bd.s_if, 0.75);
}

// Estimated displacement 0.015/interval: wrong under tau=0.03 alone but
// correct under tau=0.01, so the multi-threshold rule accepts it.
TEST(IfScore, MultiThresholdAbsorbsSceneScale) {
  const auto ctx = scene(0.0075);
  const auto clip = forward_clip(8, 0.0075);
  pw::RewardConfig cfg;
  pw::Rng rng(1);
  auto bd = pw::if_score(clip, pw::ActionToken{pw::kMoveForward}, cfg, noiseless(0.5), ctx, rng);
  EXPECT_EQ(bd.trans_acc, 1.0);
  cfg.tau_trans = {0.03};
  pw::Rng rng2(1);
  bd = pw::if_score(clip, pw::ActionToken{pw::kMoveForward}, cfg, noiseless(0.5), ctx, rng2);
  EXPECT_EQ(bd.trans_acc, 0.0);
}

TEST(IfScore, BelowThresholdScoresZeroOnMovedAxis) {
  const auto ctx = scene(0.001);
  const auto clip = forward_clip(8, 0.001);  // 0.004/interval < tau_min = 0.01
  pw::Rng rng(1);
  const auto bd = pw::if_score(clip, pw::ActionToken{pw::kMoveForward}, pw::RewardConfig{},
                               noiseless(), ctx, rng);
  EXPECT_EQ(bd.trans_acc, 0.0);
  EXPECT_EQ(bd.rot_acc, 1.0);  // both rotate sets empty
  EXPECT_EQ(bd.s_if, 0.5);
}

TEST(VqScore, StaticClipScoresOne) {
  const auto ctx = scene();
  EXPECT_EQ(pw::vq_score(static_clip(8), pw::RewardConfig{}, ctx), 1.0);
}

TEST(VqScore, ConstantVelocityScoresOne) {
  const auto ctx = scene();
  pw::RewardConfig cfg;
  cfg.frame_interval = 1;
  EXPECT_NEAR(pw::vq_score(forward_clip(8, 0.02), cfg, ctx), 1.0, 1e-12);
}

// Alternating +-step zigzag at dense sampling; J recomputed by hand.
TEST(VqScore, ZigzagMatchesScalarOracle) {
  const auto ctx = scene(0.02);
  pw::RewardConfig cfg;
  cfg.frame_interval = 1;
  cfg.kappa1 = 1.0;
  pw::Clip clip;
  clip.start = {};
  for (int k = 1; k <= 8; ++k) {
    pw::Pose p;
    p.position.z = (k % 2 == 1) ? 0.02 : 0.0;
    clip.frames.push_back(p);
  }
  // normalized z sequence: 0,1,0,1,0,1,0,1,0 -> every interior second
  // difference is +-2 on one of five components
  double jerk = 0.0;
  int terms = 0;
  std::vector<double> z = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  for (std::size_t k = 1; k + 1 < z.size(); ++k) {
    const double d2 = z[k + 1] - 2 * z[k] + z[k - 1];
    jerk += d2 * d2;
    terms += 5;  // the other four components contribute zero
  }
  const double expected = std::exp(-jerk / terms);
  EXPECT_NEAR(pw::vq_score(clip, cfg, ctx), expected, 1e-12);
}

TEST(VqScore, OutOfBoundsPenalized) {
  const auto ctx = scene();
  pw::RewardConfig cfg;
  pw::Pose far;
  far.position.x = 10.5;  // 0.5 beyond the bound
  const auto clip = static_clip(8, far);
  EXPECT_NEAR(pw::vq_score(clip, cfg, ctx), std::exp(-cfg.kappa2 * 0.5), 1e-12);
}

TEST(VqScore, RigidTranslationInvariant) {
  const auto ctx = scene();
  pw::Rng rng(9);
  pw::RewardConfig cfg;
  cfg.frame_interval = 1;
  for (int trial = 0; trial < 20; ++trial) {
    pw::Clip clip;
    clip.start.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    pw::Pose p = clip.start;
    for (int k = 0; k < 8; ++k) {
      p.position.x += 0.02 * rng.normal();
      p.position.z += 0.02 * rng.normal();
      p.yaw = pw::wrap_angle(p.yaw + 0.01 * rng.normal());
      clip.frames.push_back(p);
    }
    const double base = pw::vq_score(clip, cfg, ctx);
    pw::Clip shifted = clip;
    const pw::Vec3 offset{2.0, -1.5, 3.0};
    shifted.start.position += offset;
    for (auto& f : shifted.frames) f.position += offset;
    EXPECT_NEAR(pw::vq_score(shifted, cfg, ctx), base, 1e-12);
  }
}

TEST(RewardInvariants, ScoresStayInUnitInterval) {
  const auto ctx = scene();
  pw::Rng rng(33);
  pw::EstimatorConfig est;  // default noisy estimator
  for (int trial = 0; trial < 100; ++trial) {
    pw::Clip clip;
    clip.start.position = {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};
    clip.start.yaw = rng.uniform(-3, 3);
    clip.start.pitch = rng.uniform(-1.4, 1.4);
    pw::Pose p = clip.start;
    for (int k = 0; k < 8; ++k) {
      p.position.x += 0.1 * rng.normal();
      p.position.y += 0.1 * rng.normal();
      p.position.z += 0.1 * rng.normal();
      p.yaw = pw::wrap_angle(p.yaw + 0.2 * rng.normal());
      p.pitch = std::clamp(p.pitch + 0.2 * rng.normal(), -pw::kPi / 2, pw::kPi / 2);
      clip.frames.push_back(p);
    }
    const auto& space = pw::combined_tokens();
    const auto action = space[rng.below(space.size())];
    const auto bd = pw::if_score(clip, action, pw::RewardConfig{}, est, ctx, rng);
    EXPECT_GE(bd.s_if, 0.0);
    EXPECT_LE(bd.s_if, 1.0);
    EXPECT_GE(bd.rot_acc, 0.0);
    EXPECT_LE(bd.rot_acc, 1.0);
    EXPECT_GE(bd.trans_acc, 0.0);
    EXPECT_LE(bd.trans_acc, 1.0);
    EXPECT_DOUBLE_EQ(bd.s_if, 0.5 * (bd.rot_acc + bd.trans_acc));
    const double vq = pw::vq_score(clip, pw::RewardConfig{}, ctx);
    EXPECT_GE(vq, 0.0);
    EXPECT_LE(vq, 1.0);
  }
}

// Adding a threshold to the list never decreases trans_acc.
TEST(RewardInvariants, MultiThresholdMonotone) {
  const auto ctx = scene();
  pw::Rng rng(55);
  const auto est = noiseless();  // same estimates under both configs
  for (int trial = 0; trial < 50; ++trial) {
    pw::Clip clip;
    pw::Pose p = clip.start;
    for (int k = 0; k < 8; ++k) {
      p.position.x += 0.03 * rng.normal();
      p.position.z += 0.03 * rng.normal();
      clip.frames.push_back(p);
    }
    const auto& space = pw::combined_tokens();
    const auto action = space[rng.below(space.size())];
    pw::RewardConfig base;
    base.tau_trans = {0.01, 0.03, 0.05};
    pw::RewardConfig extended = base;
    const double extra = rng.uniform(0.015, 0.045);
    extended.tau_trans.push_back(extra);
    std::sort(extended.tau_trans.begin(), extended.tau_trans.end());
    pw::Rng r1(trial), r2(trial);
    const auto a = pw::if_score(clip, action, base, est, ctx, r1);
    const auto b = pw::if_score(clip, action, extended, est, ctx, r2);
    EXPECT_GE(b.trans_acc, a.trans_acc);
  }
}

// For noiseless straight-line motion, trans_acc is invariant to any per-scene
// scale within [tau_min/d, tau_max/d].
TEST(RewardInvariants, ScaleRobustRange) {
  const auto ctx = scene(0.02);
  const auto clip = forward_clip(8, 0.02);
  const double d = 0.08;  // per-interval displacement
  const pw::RewardConfig cfg;
  for (double s : {cfg.tau_trans.front() / d, 0.3, 0.5, cfg.tau_trans.back() / d}) {
    pw::Rng rng(1);
    const auto bd =
        pw::if_score(clip, pw::ActionToken{pw::kMoveForward}, cfg, noiseless(s), ctx, rng);
    EXPECT_EQ(bd.trans_acc, 1.0) << "scale " << s;
  }
}

TEST(EvalSequence, AggregatesAreMeans) {
  const auto ctx = scene();
  pw::Rng gen(4);
  const auto actions = std::vector<pw::ActionToken>{pw::ActionToken{pw::kMoveForward},
                                                    pw::ActionToken{pw::kRotRight},
                                                    pw::ActionToken{pw::kMoveLeft}};
  const auto clips = pw::gen_trajectory(ctx, actions, 8, pw::JitterConfig{0.0}, gen);
  pw::Rng rng(2);
  const auto ev = pw::eval_sequence(clips, actions, pw::RewardConfig{}, noiseless(), ctx, rng);
  EXPECT_EQ(ev.aggregate.acc_action, 1.0);
  double mean_if = 0.0, mean_vq = 0.0;
  for (const auto& bd : ev.per_clip) {
    mean_if += bd.s_if;
    mean_vq += *bd.s_vq;
  }
  mean_if /= static_cast<double>(ev.per_clip.size());
  mean_vq /= static_cast<double>(ev.per_clip.size());
  EXPECT_NEAR(ev.aggregate.acc_action, mean_if, 1e-12);
  EXPECT_NEAR(ev.aggregate.vq, mean_vq, 1e-12);
}

TEST(EvalSequence, HalfWrongScoresHalf) {
  const auto ctx = scene();
  pw::Rng gen(4);
  const auto actions = std::vector<pw::ActionToken>{pw::ActionToken{pw::kMoveForward},
                                                    pw::ActionToken{pw::kMoveForward}};
  auto clips = pw::gen_trajectory(ctx, actions, 8, pw::JitterConfig{0.0}, gen);
  // score the second clip against a fully wrong condition
  const auto scored_actions = std::vector<pw::ActionToken>{
      pw::ActionToken{pw::kMoveForward}, pw::ActionToken{pw::kMoveBackward | pw::kRotLeft}};
  pw::Rng rng(2);
  const auto ev =
      pw::eval_sequence(clips, scored_actions, pw::RewardConfig{}, noiseless(), ctx, rng);
  EXPECT_EQ(ev.per_clip[0].s_if, 1.0);
  EXPECT_EQ(ev.per_clip[1].s_if, 0.0);
  EXPECT_EQ(ev.aggregate.acc_action, 0.5);
}

TEST(EvalSequence, LengthMismatchRejected) {
  const auto ctx = scene();
  pw::Rng gen(4), rng(5);
  const auto clips = pw::gen_trajectory(ctx, {pw::ActionToken{pw::kMoveForward}}, 8,
                                        pw::JitterConfig{0.0}, gen);
  EXPECT_THROW(pw::eval_sequence(clips, {}, pw::RewardConfig{}, noiseless(), ctx, rng),
               std::invalid_argument);
}

TEST(RewardConfigValidation, RejectsBadThresholds) {
  pw::RewardConfig cfg;
  cfg.tau_trans = {};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.tau_trans = {0.02, 0.01};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = pw::RewardConfig{};
  EXPECT_NO_THROW(cfg.validate());
}

}  // namespace
