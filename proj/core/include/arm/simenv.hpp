#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "arm/errors.hpp"

namespace arm::sim {

enum class Action : int { advance = 0, retreat = 1, noop = 2 };
inline constexpr int kNumActions = 3;

enum class Source { expert, sluggish, error_recovery, failure, dagger_fragment };
enum class Outcome { success, failure, unknown };

std::string to_string(Action a);
std::string to_string(Source s);
std::string to_string(Outcome o);
Source source_from_string(const std::string& s);
Outcome outcome_from_string(const std::string& s);

inline constexpr double kDoneEpsilon = 1e-3;

struct SimConfig {
  int num_stages = 8;
  int max_steps = 1000;
  double advance_delta = 0.0125;
  // Probability of an extra regression at each further hard stage
  // (error_recovery demonstrator).
  double regress_prob = 0.3;
  // Minimum depth of a regression event, in global progress units.
  double regress_depth = 0.05;
  // Per-step probability of starting a hesitation run (sluggish).
  double stagnate_prob = 0.02;
  int d_vis = 32;
  int d_state = 13;
  double noise_std = 0.1;
  std::uint64_t projection_seed = 1234;
  // Stages holding the task's bottlenecks: hesitations, regressions and
  // failure stalls are placed here.
  std::vector<int> hard_stages{2, 4};
  // Noop frames appended after success so the terminal state is observed
  // across a full subsampling stride.
  int hold_steps = 16;

  // ConfigError on invalid fields.
  void validate() const;
  int ticks_per_stage() const;
};

struct SimState {
  int stage_index = 0;
  double sub_progress = 0.0;
  int ticks = 0;
  int step_count = 0;
  std::mt19937_64 rng;
  bool done = false;
  bool succeeded = false;
  std::optional<Action> last_action;
  std::vector<double> obs_noise;

  double gt_progress(const SimConfig& config) const;
  friend bool operator==(const SimState&, const SimState&) = default;
};

SimState reset(const SimConfig& config, std::uint64_t seed);

struct StepResult {
  SimState state;
  double gt_progress;
};
// UsageError when the state is done.
StepResult step(const SimConfig& config, const SimState& state, Action action);

// Fixed seeded projection of [stage one-hot, sub_progress] into d_vis.
class Observer {
 public:
  explicit Observer(const SimConfig& config);
  std::vector<float> vis_feat(const SimState& s) const;
  std::vector<float> proprio(const SimState& s) const;

 private:
  SimConfig config_;
  std::vector<double> projection_;  // d_vis x (S + 1), row-major
};

struct Frame {
  int t = 0;
  std::vector<float> vis_feat;
  std::vector<float> proprio;
  Action action = Action::noop;
  std::optional<double> gt_progress;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Episode {
  std::string id;
  int instruction_id = 0;
  std::vector<Frame> frames;
  Source source = Source::expert;
  Outcome outcome = Outcome::unknown;
  int length() const { return static_cast<int>(frames.size()); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

Episode gen_episode(const SimConfig& config, Source kind, std::uint64_t seed);

struct DatasetSpec {
  int expert = 0;
  int sluggish = 0;
  int error_recovery = 0;
  int failure = 0;
  int dagger_fragment = 0;
  std::uint64_t seed = 0;
  int count(Source s) const;
};

// Per-episode seed from (base seed, kind, index).
std::uint64_t episode_seed(std::uint64_t base, Source kind, int index);
std::string episode_id(const std::string& prefix, Source kind, int index);

std::vector<Episode> gen_dataset(const SimConfig& config, const DatasetSpec& spec,
                                 const std::string& id_prefix = "ep");

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // grayscale, row-major
  friend bool operator==(const Image&, const Image&) = default;
};

// One horizontal bar per stage, filled left to right by its progress.
Image render_frame(const SimConfig& config, const SimState& state, int size);

// Recovers stage and sub progress from a stored proprio vector.
SimState state_from_proprio(const SimConfig& config, const std::vector<float>& proprio);

}  // namespace arm::sim
