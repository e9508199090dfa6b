#include "poseworld/rollout.hpp"

#include <gtest/gtest.h>

#include "oracle_utils.hpp"

namespace pw = poseworld;
namespace pwt = poseworld::testing;

namespace {

struct RolloutFixture {
  pw::ArchConfig arch;
  pw::PolicyParams params;
  pw::SceneContext ctx;
  std::vector<pw::ActionToken> actions;

  explicit RolloutFixture(int frames = 2, int n = 4) {
    arch = pw::ArchConfig{.clip_dim = pw::clip_dim(frames), .hidden = {6, 6}, .time_freqs = 2};
    pw::Rng rng(123);
    params = pwt::random_params(arch, rng);
    ctx.scene_id = 9;
    ctx.initial_pose.yaw = 0.2;
    actions.assign(static_cast<std::size_t>(n), pw::ActionToken{pw::kMoveForward});
    actions.back() = pw::ActionToken{pw::kRotLeft};
  }
};

TEST(GenPrefix, EmptyWhenTargetIsFirstClip) {
  RolloutFixture fx;
  pw::CostLedger ledger;
  pw::Rng rng(1);
  const auto prefix = pw::gen_prefix(fx.params, fx.ctx, {}, rng, 5, &ledger);
  EXPECT_TRUE(prefix.empty());
  EXPECT_EQ(ledger.measured[0].load(), 0u);
  const auto report = pw::cost_report(ledger);
  EXPECT_EQ(report.total_evals, 0u);
}

TEST(GenPrefix, SeededRegenerationIsIdentical) {
  RolloutFixture fx;
  const std::vector<pw::ActionToken> pre(fx.actions.begin(), fx.actions.begin() + 3);
  pw::Rng a(7), b(7);
  const auto pa = pw::gen_prefix(fx.params, fx.ctx, pre, a, 6);
  const auto pb = pw::gen_prefix(fx.params, fx.ctx, pre, b, 6);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t n = 0; n < pa.size(); ++n)
    for (std::size_t k = 0; k < pa[n].frames.size(); ++k) {
      EXPECT_EQ(pa[n].frames[k].position.x, pb[n].frames[k].position.x);
      EXPECT_EQ(pa[n].frames[k].yaw, pb[n].frames[k].yaw);
    }
}

TEST(GenPrefix, LedgerCountsExactly) {
  RolloutFixture fx;
  const int t_steps = 7;
  for (int n : {1, 2, 4}) {
    pw::CostLedger ledger;
    pw::Rng rng(2);
    const std::vector<pw::ActionToken> pre(fx.actions.begin(), fx.actions.begin() + (n - 1));
    pw::gen_prefix(fx.params, fx.ctx, pre, rng, t_steps, &ledger);
    EXPECT_EQ(ledger.measured[0].load(), static_cast<std::uint64_t>((n - 1) * t_steps));
    EXPECT_NO_THROW(pw::cost_report(ledger));
  }
}

TEST(RolloutGroup, CandidatesShareContextBitwise) {
  RolloutFixture fx;
  pw::Rng rng(3);
  const std::vector<pw::ActionToken> pre(fx.actions.begin(), fx.actions.begin() + 2);
  auto prefix = pw::gen_prefix(fx.params, fx.ctx, pre, rng, 4);
  const std::vector<pw::ActionToken> upto(fx.actions.begin(), fx.actions.begin() + 3);
  const auto group =
      pw::rollout_group(fx.params, fx.ctx, upto, std::move(prefix), 6, 99, 4);
  EXPECT_EQ(group.target_index, 3);
  const pw::Pose endpoint = group.prefix.back().frames.back();
  EXPECT_EQ(group.context_pose.position.x, endpoint.position.x);
  EXPECT_EQ(group.context_pose.yaw, endpoint.yaw);
  // every candidate decodes from the same absolute start pose
  for (const auto& cand : group.candidates) {
    const auto clip = pw::decode_clip(cand.z, group.context_pose, fx.ctx);
    EXPECT_EQ(clip.start.position.x, endpoint.position.x);
    EXPECT_EQ(clip.start.yaw, endpoint.yaw);
  }
}

TEST(RolloutGroup, LedgerMatchesClosedFormAtPaperScale) {
  RolloutFixture fx(1, 1);
  pw::CostLedger ledger;
  const auto group = pw::rollout_group(fx.params, fx.ctx, {fx.actions[0]}, {}, 16, 5, 40, &ledger);
  EXPECT_EQ(group.candidates.size(), 16u);
  EXPECT_EQ(ledger.measured[1].load(), 640u);  // G * T = 16 * 40
  EXPECT_NO_THROW(pw::cost_report(ledger));
}

TEST(RolloutGroup, DistinctNoisesAcrossCandidates) {
  RolloutFixture fx;
  const auto group = pw::rollout_group(fx.params, fx.ctx, {fx.actions[0]}, {}, 8, 31, 3);
  for (std::size_t i = 0; i < group.candidates.size(); ++i)
    for (std::size_t j = i + 1; j < group.candidates.size(); ++j)
      EXPECT_NE(group.candidates[i].noise, group.candidates[j].noise);
}

// Adding candidates must not perturb existing ones (counter-based noise).
TEST(RolloutGroup, CandidateNoisesAreCounterStable) {
  RolloutFixture fx;
  const auto small = pw::rollout_group(fx.params, fx.ctx, {fx.actions[0]}, {}, 4, 77, 3);
  const auto large = pw::rollout_group(fx.params, fx.ctx, {fx.actions[0]}, {}, 8, 77, 3);
  for (std::size_t i = 0; i < small.candidates.size(); ++i) {
    EXPECT_EQ(small.candidates[i].noise, large.candidates[i].noise);
    EXPECT_EQ(small.candidates[i].z, large.candidates[i].z);
  }
}

TEST(RolloutGroup, RejectsTooSmallGroups) {
  RolloutFixture fx;
  EXPECT_THROW(pw::rollout_group(fx.params, fx.ctx, {fx.actions[0]}, {}, 1, 1, 3),
               std::invalid_argument);
}

TEST(SampleLevel, LedgerCountsFullSequences) {
  RolloutFixture fx(1, 3);
  pw::CostLedger ledger;
  const auto seqs = pw::sample_level_rollout(fx.params, fx.ctx, fx.actions, 5, 8, 6, &ledger);
  EXPECT_EQ(seqs.size(), 5u);
  for (const auto& s : seqs) EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(ledger.measured[1].load(), static_cast<std::uint64_t>(3 * 5 * 6));
  EXPECT_NO_THROW(pw::cost_report(ledger));
}

TEST(SampleLevel, DegeneratesToSingleClip) {
  RolloutFixture fx(1, 1);
  pw::CostLedger ledger;
  const auto seqs =
      pw::sample_level_rollout(fx.params, fx.ctx, {fx.actions[0]}, 1, 12, 4, &ledger);
  ASSERT_EQ(seqs.size(), 1u);
  ASSERT_EQ(seqs[0].size(), 1u);
  EXPECT_EQ(ledger.measured[1].load(), 4u);
  // identical to a direct sample_clip with the same derived stream
  pw::Rng rng = pw::derive_rng(12, "seq", 0);
  const auto noise = rng.normal_vec(static_cast<std::size_t>(fx.arch.clip_dim));
  const auto input = pw::make_input(fx.ctx.initial_pose, fx.actions[0], fx.ctx);
  const auto z = pw::sample_clip(fx.params, input, noise, 4);
  const auto clip = pw::decode_clip(z, fx.ctx.initial_pose, fx.ctx);
  EXPECT_EQ(seqs[0][0].frames.back().position.z, clip.frames.back().position.z);
}

// Closed-form sweep: clip-level at n = N costs ((N-1)+G)*T; sample-level
// costs N*G*T. The N=16, G=16, T=40 corner is the 10240 vs 1240 case.
TEST(Complexity, MeasuredCountsEqualClosedForms) {
  RolloutFixture fx(1, 16);
  for (int n_clips : {2, 4, 16}) {
    for (int g : {2, 16}) {
      for (int t_steps : {10, 40}) {
        const std::vector<pw::ActionToken> acts(fx.actions.begin(),
                                                fx.actions.begin() + n_clips);
        pw::CostLedger clip_ledger;
        pw::Rng prefix_rng(4);
        const std::vector<pw::ActionToken> pre(acts.begin(), acts.end() - 1);
        auto prefix =
            pw::gen_prefix(fx.params, fx.ctx, pre, prefix_rng, t_steps, &clip_ledger);
        pw::rollout_group(fx.params, fx.ctx, acts, std::move(prefix), g, 3, t_steps,
                          &clip_ledger);
        const auto total = clip_ledger.measured[0].load() + clip_ledger.measured[1].load();
        EXPECT_EQ(total, static_cast<std::uint64_t>(((n_clips - 1) + g) * t_steps));

        pw::CostLedger sample_ledger;
        pw::sample_level_rollout(fx.params, fx.ctx, acts, g, 3, t_steps, &sample_ledger);
        EXPECT_EQ(sample_ledger.measured[1].load(),
                  static_cast<std::uint64_t>(n_clips * g * t_steps));
      }
    }
  }
  // the worst-case ratio the clip-level strategy buys at paper scale
  EXPECT_EQ((16 - 1 + 16) * 40, 1240);
  EXPECT_EQ(16 * 16 * 40, 10240);
}

TEST(CostReport, FreshLedgerIsAllZeros) {
  pw::CostLedger ledger;
  const auto report = pw::cost_report(ledger);
  EXPECT_EQ(report.total_evals, 0u);
  EXPECT_EQ(report.clips_sampled, 0u);
  for (const auto& p : report.phases) {
    EXPECT_EQ(p.measured, 0u);
    EXPECT_FALSE(p.has_prediction);
  }
}

TEST(CostReport, MismatchIsAnError) {
  pw::CostLedger ledger;
  ledger.predict(pw::Phase::kPrefix, 100);  // promised but never performed
  EXPECT_THROW(pw::cost_report(ledger), std::runtime_error);
}

TEST(CostReport, JsonRoundTrip) {
  RolloutFixture fx(1, 2);
  pw::CostLedger ledger;
  pw::Rng rng(5);
  auto prefix = pw::gen_prefix(fx.params, fx.ctx, {fx.actions[0]}, rng, 3, &ledger);
  pw::rollout_group(fx.params, fx.ctx, fx.actions, std::move(prefix), 4, 2, 3, &ledger);
  const auto report = pw::cost_report(ledger);
  const auto j = pw::cost_report_to_json(report);
  const auto back = pw::cost_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.total_evals, report.total_evals);
  EXPECT_EQ(back.clips_sampled, report.clips_sampled);
  ASSERT_EQ(back.phases.size(), report.phases.size());
  for (std::size_t i = 0; i < report.phases.size(); ++i) {
    EXPECT_EQ(back.phases[i].phase, report.phases[i].phase);
    EXPECT_EQ(back.phases[i].measured, report.phases[i].measured);
    EXPECT_EQ(back.phases[i].predicted, report.phases[i].predicted);
  }
}

}  // namespace
