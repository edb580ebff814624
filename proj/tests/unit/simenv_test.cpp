#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "arm/simenv.hpp"

using namespace arm;
using namespace arm::sim;

namespace {

std::vector<double> gt_of(const Episode& ep) {
  std::vector<double> out;
  for (const auto& f : ep.frames) out.push_back(*f.gt_progress);
  return out;
}

}  // namespace

TEST(Reset, StartsAtZeroProgress) {
  SimConfig c;
  auto s = reset(c, 7);
  EXPECT_EQ(s.gt_progress(c), 0.0);
  EXPECT_FALSE(s.done);
  EXPECT_EQ(s.stage_index, 0);
}

TEST(Reset, DeterministicPerSeed) {
  SimConfig c;
  EXPECT_EQ(reset(c, 7), reset(c, 7));
  EXPECT_NE(reset(c, 7).rng, reset(c, 8).rng);
}

TEST(Reset, RejectsInvalidConfig) {
  SimConfig c;
  c.advance_delta = 0.0;
  EXPECT_THROW(reset(c, 1), ConfigError);
  c = SimConfig{};
  c.stagnate_prob = 1.5;
  EXPECT_THROW(reset(c, 1), ConfigError);
  c = SimConfig{};
  c.d_vis = 0;
  EXPECT_THROW(reset(c, 1), ConfigError);
}

TEST(Step, AdvanceFromZero) {
  SimConfig c;
  auto r = step(c, reset(c, 7), Action::advance);
  // 0.0125 / 8
  EXPECT_NEAR(r.gt_progress, 0.0015625, 1e-15);
}

TEST(Step, NoopAndClampedRetreat) {
  SimConfig c;
  auto s = reset(c, 1);
  EXPECT_EQ(step(c, s, Action::retreat).gt_progress, 0.0);
  s = step(c, s, Action::advance).state;
  const double before = s.gt_progress(c);
  EXPECT_EQ(step(c, s, Action::noop).gt_progress, before);
}

TEST(Step, RollsOverAndBackAcrossStages) {
  SimConfig c;
  auto s = reset(c, 1);
  for (int i = 0; i < c.ticks_per_stage(); ++i) s = step(c, s, Action::advance).state;
  EXPECT_EQ(s.stage_index, 1);
  EXPECT_EQ(s.sub_progress, 0.0);
  s = step(c, s, Action::retreat).state;
  EXPECT_EQ(s.stage_index, 0);
  EXPECT_EQ(s.ticks, c.ticks_per_stage() - 1);
}

TEST(Step, DoneStateRejectsFurtherSteps) {
  SimConfig c;
  c.max_steps = 2;
  auto s = reset(c, 1);
  s = step(c, s, Action::noop).state;
  s = step(c, s, Action::noop).state;
  EXPECT_TRUE(s.done);
  EXPECT_THROW(step(c, s, Action::advance), UsageError);
}

TEST(GenEpisode, ExpertReachesCompletion) {
  SimConfig c;
  auto ep = gen_episode(c, Source::expert, 3);
  EXPECT_EQ(*ep.frames.back().gt_progress, 1.0);
  EXPECT_EQ(ep.outcome, Outcome::success);
  auto gt = gt_of(ep);
  EXPECT_TRUE(std::is_sorted(gt.begin(), gt.end()));
}

TEST(GenEpisode, ErrorRecoveryRegressesThenSucceeds) {
  SimConfig c;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto ep = gen_episode(c, Source::error_recovery, seed);
    auto gt = gt_of(ep);
    EXPECT_EQ(ep.outcome, Outcome::success);
    // Longest contiguous decrease.
    double deepest = 0.0;
    std::size_t i = 0;
    while (i + 1 < gt.size()) {
      std::size_t j = i;
      while (j + 1 < gt.size() && gt[j + 1] < gt[j]) ++j;
      deepest = std::max(deepest, gt[i] - gt[j]);
      i = j == i ? i + 1 : j;
    }
    EXPECT_GE(deepest, c.regress_depth - 1e-12);
  }
}

TEST(GenEpisode, FailureStaysBelowThreshold) {
  SimConfig c;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto ep = gen_episode(c, Source::failure, seed);
    EXPECT_EQ(ep.outcome, Outcome::failure);
    auto gt = gt_of(ep);
    EXPECT_LT(*std::max_element(gt.begin(), gt.end()), 1.0 - kDoneEpsilon);
    EXPECT_LE(gt.back(), 0.8);
  }
}

TEST(GenEpisode, SluggishSucceedsWithNoopRuns) {
  SimConfig c;
  auto ep = gen_episode(c, Source::sluggish, 5);
  EXPECT_EQ(ep.outcome, Outcome::success);
  int noops = 0;
  for (const auto& f : ep.frames) noops += f.action == Action::noop ? 1 : 0;
  EXPECT_GT(noops, c.hold_steps + 1);
  auto gt = gt_of(ep);
  EXPECT_TRUE(std::is_sorted(gt.begin(), gt.end()));
}

TEST(GenEpisode, FragmentIsPrefixFree) {
  SimConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto ep = gen_episode(c, Source::dagger_fragment, seed);
    EXPECT_EQ(ep.outcome, Outcome::unknown);
    auto gt = gt_of(ep);
    EXPECT_GT(gt.front(), 0.0);
    EXPECT_LT(*std::max_element(gt.begin(), gt.end()), 1.0 - kDoneEpsilon);
    bool decreased = false;
    for (std::size_t t = 0; t + 1 < gt.size(); ++t) decreased |= gt[t + 1] < gt[t];
    EXPECT_TRUE(decreased);
  }
}

TEST(GenEpisode, RecordedActionsReproduceProgress) {
  SimConfig c;
  for (auto kind : {Source::expert, Source::sluggish, Source::error_recovery, Source::failure}) {
    auto ep = gen_episode(c, kind, 11);
    auto s = reset(c, 11);
    for (std::size_t t = 0; t + 1 < ep.frames.size() && !s.done; ++t) {
      EXPECT_EQ(s.gt_progress(c), *ep.frames[t].gt_progress);
      s = step(c, s, ep.frames[t].action).state;
    }
  }
}

TEST(GenEpisode, SingleActionDynamicsBound) {
  SimConfig c;
  for (auto kind : {Source::expert, Source::sluggish, Source::error_recovery, Source::failure,
                    Source::dagger_fragment}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto gt = gt_of(gen_episode(c, kind, seed));
      for (std::size_t t = 0; t + 1 < gt.size(); ++t) {
        EXPECT_LE(std::abs(gt[t + 1] - gt[t]), c.advance_delta + 1e-15);
      }
    }
  }
}

TEST(GenDataset, CountsAndTags) {
  SimConfig c;
  DatasetSpec spec;
  spec.expert = 80;
  spec.dagger_fragment = 16;
  spec.seed = 3;
  auto ds = gen_dataset(c, spec);
  ASSERT_EQ(ds.size(), 96u);
  EXPECT_EQ(std::count_if(ds.begin(), ds.end(),
                          [](const Episode& e) { return e.source == Source::expert; }),
            80);
}

TEST(GenDataset, ScaledExpertFragmentMix) {
  // 809:163 scaled by 1/10, rounded
  DatasetSpec spec;
  spec.expert = static_cast<int>(std::lround(809 / 10.0));
  spec.dagger_fragment = static_cast<int>(std::lround(163 / 10.0));
  EXPECT_EQ(spec.expert, 81);
  EXPECT_EQ(spec.dagger_fragment, 16);
  SimConfig c;
  EXPECT_EQ(gen_dataset(c, spec).size(), 97u);
}

TEST(GenDataset, DeterministicAcrossCalls) {
  SimConfig c;
  DatasetSpec spec;
  spec.expert = 3;
  spec.sluggish = 2;
  spec.error_recovery = 2;
  spec.failure = 2;
  spec.dagger_fragment = 2;
  spec.seed = 99;
  EXPECT_EQ(gen_dataset(c, spec), gen_dataset(c, spec));
  spec.seed = 100;
  auto other = gen_dataset(c, spec);
  spec.seed = 99;
  EXPECT_NE(gen_dataset(c, spec), other);
}

TEST(Observer, ProprioLayout) {
  SimConfig c;
  Observer obs(c);
  auto s = reset(c, 1);
  s = step(c, s, Action::advance).state;
  auto p = obs.proprio(s);
  ASSERT_EQ(p.size(), 13u);
  EXPECT_EQ(p[0], 1.0f);
  EXPECT_FLOAT_EQ(p[8], 0.0125f);
  EXPECT_EQ(p[9], 1.0f);
  EXPECT_EQ(obs.vis_feat(s), obs.vis_feat(s));
  EXPECT_EQ(obs.vis_feat(s).size(), 32u);
}

TEST(Render, EmptyAndFullBars) {
  SimConfig c;
  auto s = reset(c, 1);
  auto empty = render_frame(c, s, 64);
  EXPECT_EQ(std::count(empty.pixels.begin(), empty.pixels.end(), 255), 0);
  s.stage_index = c.num_stages - 1;
  s.sub_progress = 1.0;
  auto full = render_frame(c, s, 64);
  EXPECT_EQ(std::count(full.pixels.begin(), full.pixels.end(), 48), 0);
  EXPECT_GT(std::count(full.pixels.begin(), full.pixels.end(), 255), 0);
  EXPECT_EQ(render_frame(c, s, 64), full);
  EXPECT_THROW(render_frame(c, s, 16), DomainError);
}

TEST(Render, StateFromProprioRoundTrip) {
  SimConfig c;
  Observer obs(c);
  auto ep = gen_episode(c, Source::error_recovery, 4);
  for (const auto& f : ep.frames) {
    auto s = state_from_proprio(c, f.proprio);
    EXPECT_NEAR(s.gt_progress(c), *f.gt_progress, 1e-7);
  }
}
