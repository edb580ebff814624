#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "arm/awbc.hpp"
#include "arm/checkpoint.hpp"

using namespace arm;
using namespace arm::awbc;

TEST(Gains, ReferenceExample) {
  // 400 frames, P rises 0.50 -> 0.55 over the chunk starting at 8.
  std::vector<double> p(400, 0.5);
  for (std::size_t t = 16; t < p.size(); ++t) p[t] = 0.55;
  auto r = gains(p, 8, 500.0);
  EXPECT_FALSE(r.single_chunk_fallback);
  EXPECT_EQ(r.gains.size(), 50u);
  EXPECT_NEAR(r.gains[1].dG, 0.04, 1e-12);
  EXPECT_EQ(r.gains[1].t, 8);
  EXPECT_DOUBLE_EQ(r.gains[0].dG, 0.0);
}

TEST(Gains, UnitScaleFlatAndFallback) {
  std::vector<double> p{0.0, 0.1, 0.3, 0.35, 0.5};
  auto r = gains(p, 2, 5.0);
  ASSERT_EQ(r.gains.size(), 3u);
  EXPECT_DOUBLE_EQ(r.gains[0].dG, 0.3);
  EXPECT_DOUBLE_EQ(r.gains[1].dG, 0.5 - 0.3);
  EXPECT_DOUBLE_EQ(r.gains[2].dG, 0.0);  // last chunk ends at the last frame
  std::vector<double> flat(30, 0.4);
  for (const auto& g : gains(flat, 8, 20.0).gains) EXPECT_EQ(g.dG, 0.0);
  auto one = gains(p, 9, 5.0);
  EXPECT_TRUE(one.single_chunk_fallback);
  ASSERT_EQ(one.gains.size(), 1u);
  EXPECT_DOUBLE_EQ(one.gains[0].dG, 0.5);
  EXPECT_THROW(gains(p, 2, 0.0), ValidationError);
}

TEST(Gains, DuplicatingFramesPreservesChunkGains) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(static_cast<std::size_t>(20 + trial * 3));
    for (auto& x : p) x = u(rng);
    std::vector<double> dup;
    for (double x : p) {
      dup.push_back(x);
      dup.push_back(x);
    }
    const double L_bar = 37.0;
    auto a = gains(p, 4, L_bar).gains;
    auto b = gains(dup, 8, 2 * L_bar).gains;
    ASSERT_EQ(a.size(), b.size());
    // The last chunk clips at different frames in the two versions.
    for (std::size_t i = 0; i + 1 < a.size(); ++i) EXPECT_NEAR(a[i].dG, b[i].dG, 1e-12);
  }
}

TEST(Weights, StatisticalExamples) {
  const std::vector<double> g{0.1, 0.2, 0.3, 0.4, 0.5};
  auto b = weights_statistical(g);
  EXPECT_NEAR(b.mu, 0.3, 1e-15);
  EXPECT_NEAR(b.sigma, std::sqrt(0.02), 1e-15);
  EXPECT_NEAR(b.w[2], 0.5, 1e-5);
  // Independent evaluation with the bounds 0.3 +- 0.2828.
  const double s = std::sqrt(0.02);
  EXPECT_NEAR(b.w[4], (0.5 - (0.3 - 2 * s)) / (4 * s + 1e-6), 1e-12);
  EXPECT_NEAR(b.w[4], 0.8536, 1e-4);
  EXPECT_NEAR(b.w[0], 0.1464, 1e-4);
  EXPECT_THROW(weights_statistical(std::vector<double>{}), ValidationError);
  auto same = weights_statistical(std::vector<double>(7, 0.2));
  for (double w : same.w) EXPECT_EQ(w, 0.5);
}

TEST(Weights, StatisticalProperties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> size(2, 128);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> g(static_cast<std::size_t>(size(rng)));
    for (auto& x : g) x = u(rng);
    auto b = weights_statistical(g);
    std::vector<double> shifted(g), scaled(g);
    for (auto& x : shifted) x += 0.75;
    for (auto& x : scaled) x *= 0.2;
    auto bs = weights_statistical(shifted);
    auto bk = weights_statistical(scaled);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_GE(b.w[i], 0.0);
      EXPECT_LE(b.w[i], 1.0);
      if (g[i] <= b.lower) EXPECT_EQ(b.w[i], 0.0);
      EXPECT_NEAR(bs.w[i], b.w[i], 1e-12);
      EXPECT_NEAR(bk.w[i], b.w[i], 1e-3);
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (g[i] >= g[j]) EXPECT_GE(b.w[i], b.w[j]);
      }
    }
  }
}

TEST(Weights, Threshold) {
  auto w = weights_threshold(std::vector<double>{0.02, -0.03, 0.005, 0.01, 0.0});
  EXPECT_EQ(w, (std::vector<double>{1, 0, 0, 0, 0}));
}

TEST(Weights, ModeNames) {
  EXPECT_EQ(mode_from_string("threshold"), Mode::threshold);
  EXPECT_EQ(to_string(Mode::none), "none");
  EXPECT_THROW(mode_from_string("awr"), ConfigError);
}

namespace {

struct LossFixture {
  PolicyConfig config;
  ParameterSet<double> params;
  Tensor<double> x;
  std::vector<int> targets;

  LossFixture() {
    config.hidden = {6};
    config.H = 3;
    params = init_policy(config, 5, 2);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    std::vector<double> v(4 * 5);
    for (auto& e : v) e = n(rng);
    x = Tensor<double>::from({4, 5}, v);
    targets = {0, 1, 2, 2, 1, 0, 1, 1, -1, 0, 2, 1};
  }
  double loss(std::vector<double> w) {
    params.zero_grad();
    auto l = awbc_loss(params, config, x, targets, w);
    l.backward();
    return l.item();
  }
};

double grad_norm(const ParameterSet<double>& ps) {
  double s = 0.0;
  for (const auto& [name, t] : ps) {
    for (double g : t.grad()) s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace

TEST(AwbcLoss, WeightingBehaviour) {
  LossFixture f;
  EXPECT_EQ(f.loss({0, 0, 0, 0}), 0.0);
  EXPECT_EQ(grad_norm(f.params), 0.0);
  const double bc = f.loss({1, 1, 1, 1});
  EXPECT_GT(bc, 0.0);
  const std::vector<double> w{0.3, 0.9, 0.0, 0.5};
  const double once = f.loss(w);
  std::vector<double> twice(w);
  for (auto& e : twice) e *= 2;
  EXPECT_NEAR(f.loss(twice), 2 * once, 1e-12);
  EXPECT_THROW(f.loss({1, 1}), ValidationError);
}

TEST(AwbcLoss, ZeroWeightSamplesGiveNoGradient) {
  LossFixture f;
  f.loss({0.7, 0.0, 0.4, 0.0});
  std::vector<std::vector<double>> g1;
  for (const auto& [n, t] : f.params) g1.emplace_back(t.grad().begin(), t.grad().end());
  // Changing the targets of zero-weight samples changes nothing.
  for (int h = 0; h < 3; ++h) {
    f.targets[3 + static_cast<std::size_t>(h)] = (f.targets[3 + static_cast<std::size_t>(h)] + 1) % 3;
    f.targets[9 + static_cast<std::size_t>(h)] = 0;
  }
  f.loss({0.7, 0.0, 0.4, 0.0});
  std::size_t i = 0;
  for (const auto& [n, t] : f.params) {
    ASSERT_TRUE(std::equal(t.grad().begin(), t.grad().end(), g1[i++].begin())) << n;
  }
}

TEST(Policy, FeaturesDropLastAction) {
  std::vector<float> vis{1, 2};
  std::vector<float> pro{0, 1, 0, 0.5f, 1, 0, 0, 0.33f};  // S = 3
  auto f = policy_features(vis, pro, 3);
  EXPECT_EQ(f, (std::vector<float>{1, 2, 0, 1, 0, 0.5f, 0.33f}));
  EXPECT_EQ(static_cast<int>(f.size()), feature_dim(2, 3));
}

TEST(Policy, ExpertBcSucceedsAndIsDeterministic) {
  sim::SimConfig env;
  auto eps = sim::gen_dataset(env, {20, 0, 0, 0, 0, 3});
  double L_bar = 0;
  for (const auto& e : eps) L_bar += e.length();
  L_bar /= static_cast<double>(eps.size());
  std::vector<Chunk> chunks;
  for (const auto& e : eps) {
    std::vector<double> p;
    for (const auto& fr : e.frames) p.push_back(std::min(1.0, *fr.gt_progress));
    auto c = episode_chunks(e, p, 8, L_bar, env.num_stages);
    chunks.insert(chunks.end(), c.begin(), c.end());
  }
  PolicyConfig pc;
  pc.mode = Mode::none;
  pc.epochs = 3;
  pc.seed = 1;
  auto a = train_policy(pc, chunks);
  auto b = train_policy(pc, chunks);
  EXPECT_EQ(tc::encode_checkpoint("", a.params), tc::encode_checkpoint("", b.params));
  auto ev = eval_policy(a.params, pc, env, 20, 42);
  EXPECT_GE(ev.success_rate, 0.95);
  auto ev2 = eval_policy(a.params, pc, env, 20, 42);
  EXPECT_EQ(ev.mean_steps, ev2.mean_steps);

  const auto path = (std::filesystem::temp_directory_path() / "arm_policy_rt.ckpt").string();
  save_policy(path, pc, feature_dim(env.d_vis, env.num_stages), a.params);
  auto loaded = load_policy(path);
  EXPECT_EQ(loaded.config.H, 8);
  EXPECT_EQ(eval_policy(loaded.params, loaded.config, env, 5, 42).successes,
            eval_policy(a.params, pc, env, 5, 42).successes);
  std::filesystem::remove(path);
}

TEST(Policy, BaselineControllers) {
  sim::SimConfig env;
  auto expert = eval_controller([](const sim::SimState&, std::mt19937_64&) {
    return sim::Action::advance;
  }, env, 10, 1);
  EXPECT_EQ(expert.success_rate, 1.0);
  auto random = eval_controller([](const sim::SimState&, std::mt19937_64& rng) {
    return static_cast<sim::Action>(rng() % 3);
  }, env, 10, 1);
  EXPECT_LE(random.success_rate, 0.1);
}
