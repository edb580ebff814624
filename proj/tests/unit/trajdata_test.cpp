#include <gtest/gtest.h>

#include <filesystem>

#include "arm/binio.hpp"
#include "arm/trajdata.hpp"

using namespace arm;
using namespace arm::data;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

sim::Episode episode_of_length(int L) {
  sim::Episode ep;
  ep.id = "len" + std::to_string(L);
  for (int t = 0; t < L; ++t) {
    sim::Frame f;
    f.t = t;
    f.vis_feat = {static_cast<float>(t)};
    f.proprio = {0.0f};
    f.gt_progress = L > 1 ? static_cast<double>(t) / (L - 1) : 1.0;
    ep.frames.push_back(f);
  }
  return ep;
}

}  // namespace

TEST(EpisodeStore, WriteReadRoundTrip) {
  TempDir dir("arm_store_rt");
  sim::SimConfig c;
  sim::DatasetSpec spec{2, 1, 1, 1, 1, 7};
  auto eps = sim::gen_dataset(c, spec);
  eps[0].frames[5].gt_progress.reset();
  {
    EpisodeStore store(dir.path.string());
    for (const auto& ep : eps) store.write_episode(ep);
    EXPECT_THROW(store.write_episode(eps[0]), ConflictError);
  }
  EpisodeStore store(dir.path.string());
  ASSERT_EQ(store.size(), eps.size());
  for (const auto& ep : eps) {
    auto back = store.read_episode(ep.id);
    EXPECT_EQ(back, storage_rounded(ep));
    EXPECT_EQ(back, store.read_episode(ep.id));
    // Stored bytes are a fixed point of decode/encode.
    EXPECT_EQ(encode_frames(back),
              io::read_file((dir.path / (ep.id + ".bin")).string()));
  }
  EXPECT_FALSE(store.read_episode(eps[0].id).frames[5].gt_progress.has_value());
  EXPECT_THROW(store.read_episode("missing"), NotFoundError);
}

TEST(EpisodeStore, ManifestCounts) {
  TempDir dir("arm_store_count");
  sim::SimConfig c;
  sim::DatasetSpec spec;
  spec.expert = 80;
  spec.dagger_fragment = 16;
  EpisodeStore store(dir.path.string());
  for (const auto& ep : sim::gen_dataset(c, spec)) store.write_episode(ep);
  EXPECT_EQ(EpisodeStore(dir.path.string()).size(), 96u);
}

TEST(WindowSamples, ReferenceTilings) {
  // 23 subsampled frames at k=1
  auto w = window_samples(episode_of_length(23), 5, 1);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_EQ(w.back().real_count(), 3);
  EXPECT_EQ(w.back().frame_indices, (std::vector<int>{20, 21, 22, 22, 22}));
  auto one = window_samples(episode_of_length(5), 5, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].real_count(), 5);
  auto degenerate = window_samples(episode_of_length(1), 5, 3);
  ASSERT_EQ(degenerate.size(), 1u);
  EXPECT_EQ(degenerate[0].real_count(), 1);
  EXPECT_EQ(degenerate[0].frame_indices, (std::vector<int>(5, 0)));
  EXPECT_THROW(window_samples(episode_of_length(5), 1, 1), ConfigError);
  EXPECT_THROW(window_samples(episode_of_length(5), 5, 0), ConfigError);
}

TEST(WindowSamples, StrideSubsampling) {
  auto w = window_samples(episode_of_length(20), 3, 4);
  // subsampled frames 0,4,8,12,16
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].frame_indices, (std::vector<int>{0, 4, 8}));
  EXPECT_EQ(w[1].frame_indices, (std::vector<int>{12, 16, 16}));
  EXPECT_FALSE(w[0].has_lead);
  EXPECT_TRUE(w[1].has_lead);
}

TEST(WindowSamples, TilingCoversEachFrameOnce) {
  for (int L = 1; L <= 60; ++L) {
    for (int W = 2; W <= 8; ++W) {
      for (int k : {1, 3}) {
        auto ep = episode_of_length(L);
        auto tiles = window_samples(ep, W, k);
        std::vector<int> seen;
        for (const auto& w : tiles) {
          bool padded = false;
          for (std::size_t i = 0; i < w.pad_mask.size(); ++i) {
            if (padded) EXPECT_TRUE(w.pad_mask[i]);
            padded = w.pad_mask[i];
            if (!w.pad_mask[i]) seen.push_back(w.frame_indices[i]);
            if (i > 0) EXPECT_GE(w.frame_indices[i], w.frame_indices[i - 1]);
          }
        }
        const int t_sub = subsampled_length(L, k);
        ASSERT_EQ(static_cast<int>(seen.size()), t_sub);
        for (int i = 0; i < t_sub; ++i) EXPECT_EQ(seen[static_cast<std::size_t>(i)], i * k);
      }
    }
  }
}

TEST(AttachLabels, FillsTargetsWithPrecedence) {
  TempDir dir("arm_store_labels");
  EpisodeStore store(dir.path.string());
  auto ep = episode_of_length(17);
  store.write_episode(ep);
  std::vector<lab::TriStateLabel> labels;
  for (int t = 0; t + 4 < 17; t += 4) labels.push_back({ep.id, t, t + 4, 1, "oracle", 0});
  labels.push_back({ep.id, 4, 8, -1, "human:h", 3});
  auto index = build_label_index(labels, store, 4);
  auto tiles = window_samples(ep, 5, 4);
  ASSERT_EQ(tiles.size(), 1u);
  attach_labels(tiles[0], ep, index, 1e-3);
  EXPECT_EQ(tiles[0].interval_targets, (std::vector<int>{1, -1, 1, 1}));
  EXPECT_EQ(tiles[0].completion_targets, (std::vector<int>{0, 0, 0, 0, 1}));

  labels.push_back({ep.id, 0, 3, 1, "oracle", 0});
  EXPECT_THROW(build_label_index(labels, store, 4), ValidationError);
  labels.back() = {"nope", 0, 4, 1, "oracle", 0};
  EXPECT_THROW(build_label_index(labels, store, 4), ValidationError);
  labels.back() = {ep.id, 16, 20, 1, "oracle", 0};
  EXPECT_THROW(build_label_index(labels, store, 4), ValidationError);
}

TEST(AttachLabels, PaddedAndUnlabeledIntervals) {
  TempDir dir("arm_store_pad");
  EpisodeStore store(dir.path.string());
  auto ep = episode_of_length(10);
  store.write_episode(ep);
  auto index = build_label_index({{ep.id, 0, 3, 0, "oracle", 0}}, store, 3);
  auto tiles = window_samples(ep, 3, 3);
  ASSERT_EQ(tiles.size(), 2u);
  for (auto& w : tiles) attach_labels(w, ep, index, 1e-3);
  EXPECT_EQ(tiles[0].interval_targets, (std::vector<int>{0, kUnlabeled}));
  EXPECT_EQ(tiles[1].interval_targets, (std::vector<int>{kUnlabeled, kUnlabeled}));
  EXPECT_EQ(tiles[1].completion_targets, (std::vector<int>{1, -1, -1}));
  EXPECT_EQ(tiles[1].lead_target, kUnlabeled);
}
