#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "arm/nn.hpp"
#include "arm/simenv.hpp"

namespace arm::awbc {

using tc::ParameterSet;
using tc::Tensor;

struct Gain {
  int t = 0;      // chunk start frame
  double dG = 0.0;
};

struct GainResult {
  std::vector<Gain> gains;
  bool single_chunk_fallback = false;  // H >= L_seq
};

// dG_t = (P_{t+H} - P_t) L_seq / L_bar over chunks tiling the episode; the
// final partial chunk ends at the last frame.
GainResult gains(std::span<const double> progress, int H, double L_bar);

struct WeightBatch {
  std::vector<double> w;
  double mu = 0.0;
  double sigma = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// clamp((dG - (mu - 2 sigma)) / (4 sigma + eps), 0, 1) with population
// sigma; uniform 0.5 when sigma < 1e-9. ValidationError on an empty batch.
WeightBatch weights_statistical(std::span<const double> gains, double eps = 1e-6);

// 1 if dG > 0.01, else 0.
std::vector<double> weights_threshold(std::span<const double> gains);

enum class Mode { none, statistical, threshold };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct PolicyConfig {
  std::vector<int> hidden{128, 128};
  int H = 8;
  int epochs = 30;
  int batch = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double clip = 1.0;
  double eps = 1e-6;
  Mode mode = Mode::statistical;
  // Statistics over the minibatch (default) or over the whole dataset.
  bool global_stats = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Vision features, stage one-hot, sub progress and stage fraction; the
// last-action slots of proprio are left out.
std::vector<float> policy_features(std::span<const float> vis, std::span<const float> proprio,
                                   int num_stages);
int feature_dim(int d_vis, int num_stages);

ParameterSet<double> init_policy(const PolicyConfig& config, int in_dim, std::uint64_t seed);

// Logits {batch, H * 3}.
template <typename T>
Tensor<T> policy_logits(const ParameterSet<T>& params, const PolicyConfig& config,
                        const Tensor<T>& features);

// mean_b w_b * sum_h -log pi(a_{b,h} | s_b); targets {batch * H}, -1 ignored.
// Weights carry no gradient. ValidationError when sizes disagree.
Tensor<double> awbc_loss(const ParameterSet<double>& params, const PolicyConfig& config,
                         const Tensor<double>& features, std::span<const int> targets,
                         std::span<const double> weights);

struct Chunk {
  std::vector<float> features;
  std::vector<int> actions;  // H entries, -1 past the episode end
  double gain = 0.0;
};

// Chunks tiling one episode, with gains from its full-rate progress curve.
std::vector<Chunk> episode_chunks(const sim::Episode& ep, std::span<const double> progress,
                                  int H, double L_bar, int num_stages);

struct PolicyTrace {
  std::int64_t step;
  double loss;
  double mean_weight;
};

struct PolicyResult {
  ParameterSet<double> params;
  std::vector<PolicyTrace> trace;
};

// TrainingError on a non-finite loss.
PolicyResult train_policy(const PolicyConfig& config, const std::vector<Chunk>& chunks);

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;  // over successes; 0 when none
};

// Greedy chunked rollouts from reset(seed_i), seed_i derived from base_seed.
EvalResult eval_policy(const ParameterSet<double>& params, const PolicyConfig& config,
                       const sim::SimConfig& env, int n, std::uint64_t base_seed);

// Per-step controller rollouts (random and scripted baselines).
using Controller = std::function<sim::Action(const sim::SimState&, std::mt19937_64&)>;
EvalResult eval_controller(const Controller& controller, const sim::SimConfig& env, int n,
                           std::uint64_t base_seed);

std::string policy_metadata(const PolicyConfig& config, int in_dim);
void save_policy(const std::string& path, const PolicyConfig& config, int in_dim,
                 const ParameterSet<double>& params);
struct LoadedPolicy {
  PolicyConfig config;
  int in_dim = 0;
  ParameterSet<double> params;
};
LoadedPolicy load_policy(const std::string& path);

}  // namespace arm::awbc
