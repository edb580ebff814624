#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arm/nn.hpp"
#include "arm/optim.hpp"
#include "arm/simenv.hpp"
#include "arm/trajdata.hpp"

namespace arm::model {

using tc::ParameterSet;
using tc::Tensor;

struct ArmConfig {
  int W = 5;
  int k = 8;
  int d = 64;
  int layers = 2;
  int heads = 4;
  double lambda_int = 1.0;
  double lambda_succ = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 2.0;
  double completion_eps = 1e-3;
  double prob_floor = 1e-7;
  double ln_eps = 1e-5;
  int d_vis = 32;
  int d_state = 13;
  int vocab = 1;

  void validate() const;
};

// Fresh parameters, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ParameterSet<double> init_params(const ArmConfig& config, std::uint64_t seed);

// Frames of a batch of windows, row-major, one row per (window, slot).
template <typename T>
struct WindowInputs {
  std::size_t windows = 0;
  std::vector<T> vis;
  std::vector<T> proprio;
  std::vector<std::int64_t> instruction;
};

template <typename T>
WindowInputs<T> gather_inputs(const ArmConfig& config,
                              const std::vector<const sim::Episode*>& episodes,
                              const std::vector<std::vector<int>>& frame_indices);

// Forward pieces of the reward model over rows grouped into windows of W.
template <typename T>
class ArmNet {
 public:
  ArmNet(const ArmConfig& config, const ParameterSet<T>& params);

  // x_i = proj_v(v_i) + proj_s(s_i) + embed(g) + pos_i; {windows*W, d}.
  Tensor<T> fuse(const WindowInputs<T>& in) const;
  // Causal pre-LN transformer stack; identity with zero layers.
  Tensor<T> encode(const Tensor<T>& x, std::size_t windows) const;
  // MLP_int(concat(h_left, h_right)); {pairs, 3}.
  Tensor<T> interval_logits(const Tensor<T>& hidden, std::span<const std::size_t> left,
                            std::span<const std::size_t> right) const;
  // sigmoid(MLP_succ(h_i)); {rows, 1}.
  Tensor<T> completion_probs(const Tensor<T>& hidden) const;

  Tensor<T> hidden(const WindowInputs<T>& in) const { return encode(fuse(in), in.windows); }
  const ArmConfig& config() const { return config_; }

 private:
  const Tensor<T>& p(const std::string& name) const { return params_->get(name); }
  tc::Linear<T> lin(const std::string& prefix) const { return tc::bind_linear(*params_, prefix); }

  ArmConfig config_;
  const ParameterSet<T>* params_;
};

// Interval pairs and completion targets for a batch. Interval targets are
// class ids 0..2 (y + 1) or -1 when unlabeled; completion targets are 0/1 or
// -1 when padded or unknown.
struct BatchTargets {
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<int> interval;
  std::vector<int> completion;
};

// Pairs within each window (slot i to i+1), then one pair joining window
// j-1's last slot to window j's first slot wherever window j directly
// continues window j-1 in the same episode.
BatchTargets batch_targets(const std::vector<data::WindowSample>& windows, int W);

// True when b's first frame is k after a's last real frame in one episode.
bool continues(const data::WindowSample& a, const data::WindowSample& b);

struct LossParts {
  Tensor<double> total;
  Tensor<double> interval;
  Tensor<double> completion;
};

// L_ARM = lambda_int L_int + lambda_succ L_succ. L_int is the class-weighted
// mean cross-entropy over labeled pairs, L_succ the mean focal loss over
// frames with a known target. ValidationError when nothing is supervised.
LossParts arm_loss(const ArmNet<double>& net, const Tensor<double>& hidden,
                   const BatchTargets& targets, const std::array<double, 3>& class_weights);

// Inverse-frequency weights N / (3 n_c), capped at `cap`.
std::array<double, 3> class_weights(const data::LabelIndex& index, double cap = 10.0);

struct TrainOptions {
  int epochs = 6;
  int batch = 64;  // adjacent-window pairs per step
  double lr = 5e-5;
  double weight_decay = 1e-3;
  double warmup_frac = 0.05;
  double clip = 0.0;  // 0 disables clipping
  std::uint64_t seed = 0;
};

struct TraceRow {
  std::int64_t step;
  double total;
  double interval;
  double completion;
};

struct TrainResult {
  ParameterSet<double> params;
  std::vector<TraceRow> trace;
};

// Trains on pairs of adjacent stride-k windows whose first frame is a
// multiple of k. ValidationError without labels; TrainingError on a
// non-finite loss.
TrainResult train(const ArmConfig& config, const TrainOptions& options,
                  const std::vector<sim::Episode>& episodes, const data::LabelIndex& labels);

std::string trace_csv(const std::vector<TraceRow>& trace);

// Checkpoint metadata carries the config; ValidationError on mismatch with
// an expected config or on malformed metadata.
std::string config_to_json(const ArmConfig& config);
ArmConfig config_from_json(const std::string& text);
void save_model(const std::string& path, const ArmConfig& config,
                const ParameterSet<double>& params);

struct LoadedModel {
  ArmConfig config;
  ParameterSet<double> params;
  std::string checkpoint_id;  // FNV-1a of the checkpoint bytes
};
LoadedModel load_model(const std::string& path);
LoadedModel model_from_params(const ArmConfig& config, ParameterSet<double> params);

// Float inference over a loaded checkpoint. Not copyable: the network
// refers to the owned parameters.
class Inference {
 public:
  explicit Inference(const LoadedModel& model);
  Inference(const Inference&) = delete;
  Inference& operator=(const Inference&) = delete;

  struct Outputs {
    std::vector<std::array<float, 3>> interval_probs;  // windows * (W-1)
    std::vector<float> completion;                      // windows * W
    std::vector<float> hidden;                          // windows * W * d
  };
  // One forward pass over all windows.
  Outputs infer_windows(const std::vector<const sim::Episode*>& episodes,
                        const std::vector<std::vector<int>>& frame_indices) const;
  // Interval head on explicit hidden-state pairs, m rows of d each.
  std::vector<std::array<float, 3>> pair_probs(std::span<const float> left,
                                               std::span<const float> right) const;

  const ArmConfig& config() const { return config_; }

 private:
  ArmConfig config_;
  ParameterSet<float> params_;
  ArmNet<float> net_;
};

// Per-subsampled-frame predictions for one episode.
struct EpisodeScores {
  int t_sub = 0;
  std::vector<int> deltas;                       // t_sub - 1 entries in {-1,0,1}
  std::vector<std::array<float, 3>> delta_probs; // t_sub - 1
  std::vector<float> completion;                 // t_sub
  int passes = 0;
};

// Non-overlapping tiles inferred in batches of up to `batch` windows
// (0 = all at once); padded predictions are dropped and each boundary
// interval is read from the adjacent tiles' hidden states.
EpisodeScores infer_episode_mimo(const Inference& inf, const sim::Episode& ep,
                                 std::size_t batch = 0);

// Window slid by one subsampled step; each pass after the first keeps only
// its final-position outputs. max(1, T_sub - W + 1) passes, one window each.
EpisodeScores infer_episode_miso(const Inference& inf, const sim::Episode& ep);

// Model labels for every stride-k interval whose max softmax prob >= tau,
// annotated model:<checkpoint_id>.
std::vector<lab::TriStateLabel> pseudo_label(const Inference& inf, const std::string& checkpoint_id,
                                             const std::vector<sim::Episode>& episodes,
                                             double tau, std::int64_t timestamp);

int mimo_passes(int t_sub, int W);
int miso_passes(int t_sub, int W);

}  // namespace arm::model
