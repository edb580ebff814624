#include "arm/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace arm::sim {

std::string to_string(Action a) {
  switch (a) {
    case Action::advance: return "advance";
    case Action::retreat: return "retreat";
    case Action::noop: return "noop";
  }
  return "?";
}

std::string to_string(Source s) {
  switch (s) {
    case Source::expert: return "expert";
    case Source::sluggish: return "sluggish";
    case Source::error_recovery: return "error_recovery";
    case Source::failure: return "failure";
    case Source::dagger_fragment: return "dagger_fragment";
  }
  return "?";
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::unknown: return "unknown";
  }
  return "?";
}

Source source_from_string(const std::string& s) {
  for (auto k : {Source::expert, Source::sluggish, Source::error_recovery,
                 Source::failure, Source::dagger_fragment}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown episode source '" + s + "'");
}

Outcome outcome_from_string(const std::string& s) {
  for (auto o : {Outcome::success, Outcome::failure, Outcome::unknown}) {
    if (to_string(o) == s) return o;
  }
  throw ValidationError("unknown outcome '" + s + "'");
}

void SimConfig::validate() const {
  if (num_stages < 1) throw ConfigError("sim.num_stages must be >= 1");
  if (max_steps < 1) throw ConfigError("sim.max_steps must be >= 1");
  if (!(advance_delta > 0.0) || advance_delta > 1.0) {
    throw ConfigError("sim.advance_delta must be in (0, 1]");
  }
  if (regress_prob < 0.0 || regress_prob > 1.0) {
    throw ConfigError("sim.regress_prob must be in [0, 1]");
  }
  if (stagnate_prob < 0.0 || stagnate_prob > 1.0) {
    throw ConfigError("sim.stagnate_prob must be in [0, 1]");
  }
  if (regress_depth < 0.0 || regress_depth > 1.0) {
    throw ConfigError("sim.regress_depth must be in [0, 1]");
  }
  if (d_vis < 1) throw ConfigError("sim.d_vis must be >= 1");
  if (d_state != num_stages + 5) {
    throw ConfigError("sim.d_state must equal num_stages + 5 (got " +
                      std::to_string(d_state) + ")");
  }
  if (noise_std < 0.0) throw ConfigError("sim.noise_std must be >= 0");
  if (hold_steps < 0) throw ConfigError("sim.hold_steps must be >= 0");
  if (hard_stages.empty()) throw ConfigError("sim.hard_stages must be nonempty");
  for (int h : hard_stages) {
    if (h < 0 || h >= num_stages) {
      throw ConfigError("sim.hard_stages entry " + std::to_string(h) +
                        " out of range");
    }
  }
}

int SimConfig::ticks_per_stage() const {
  return static_cast<int>(std::ceil(1.0 / advance_delta - 1e-9));
}

double SimState::gt_progress(const SimConfig& config) const {
  return (stage_index + sub_progress) / config.num_stages;
}

namespace {

void draw_noise(const SimConfig& config, SimState& s) {
  s.obs_noise.resize(static_cast<std::size_t>(config.d_vis));
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : s.obs_noise) v = config.noise_std * n(s.rng);
}

void sync_sub(const SimConfig& config, SimState& s) {
  s.sub_progress = std::min(1.0, s.ticks * config.advance_delta);
}

int global_tick(const SimConfig& config, const SimState& s) {
  return s.stage_index * config.ticks_per_stage() + s.ticks;
}

int final_tick(const SimConfig& config) {
  return config.num_stages * config.ticks_per_stage();
}

}  // namespace

SimState reset(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  SimState s;
  s.rng.seed(seed);
  draw_noise(config, s);
  return s;
}

StepResult step(const SimConfig& config, const SimState& state, Action action) {
  if (state.done) throw UsageError("step called on a finished episode");
  SimState s = state;
  const int tps = config.ticks_per_stage();
  switch (action) {
    case Action::advance:
      ++s.ticks;
      if (s.ticks >= tps) {
        if (s.stage_index == config.num_stages - 1) {
          s.ticks = tps;
          s.succeeded = true;
        } else {
          ++s.stage_index;
          s.ticks = 0;
        }
      }
      break;
    case Action::retreat:
      if (s.ticks > 0) {
        --s.ticks;
      } else if (s.stage_index > 0) {
        --s.stage_index;
        s.ticks = tps - 1;
      }
      break;
    case Action::noop:
      break;
  }
  sync_sub(config, s);
  ++s.step_count;
  s.last_action = action;
  s.done = s.succeeded || s.step_count >= config.max_steps;
  draw_noise(config, s);
  const double gt = s.gt_progress(config);
  return {std::move(s), gt};
}

Observer::Observer(const SimConfig& config) : config_(config) {
  config.validate();
  const auto cols = static_cast<std::size_t>(config.num_stages + 1);
  projection_.resize(static_cast<std::size_t>(config.d_vis) * cols);
  std::mt19937_64 rng(config.projection_seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : projection_) v = n(rng);
}

std::vector<float> Observer::vis_feat(const SimState& s) const {
  const auto cols = static_cast<std::size_t>(config_.num_stages + 1);
  const auto stage = static_cast<std::size_t>(s.stage_index);
  std::vector<float> out(static_cast<std::size_t>(config_.d_vis));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = projection_.data() + i * cols;
    double v = row[stage] + row[cols - 1] * s.sub_progress;
    if (i < s.obs_noise.size()) v += s.obs_noise[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

std::vector<float> Observer::proprio(const SimState& s) const {
  const int S = config_.num_stages;
  std::vector<float> out(static_cast<std::size_t>(config_.d_state), 0.0f);
  out[static_cast<std::size_t>(s.stage_index)] = 1.0f;
  out[static_cast<std::size_t>(S)] = static_cast<float>(s.sub_progress);
  if (s.last_action) {
    out[static_cast<std::size_t>(S + 1 + static_cast<int>(*s.last_action))] = 1.0f;
  }
  out[static_cast<std::size_t>(S + 4)] = static_cast<float>(s.stage_index) / S;
  return out;
}

namespace {

class Recorder {
 public:
  Recorder(const SimConfig& config, SimState start)
      : config_(config), observer_(config), state_(std::move(start)) {}

  const SimState& state() const { return state_; }
  bool done() const { return state_.done; }
  int tick() const { return global_tick(config_, state_); }

  void act(Action a) {
    if (state_.done) return;
    frames_.push_back(frame(a));
    state_ = step(config_, state_, a).state;
  }
  void repeat(Action a, int n) {
    for (int i = 0; i < n && !state_.done; ++i) act(a);
  }
  // Advances until the global tick reaches target (or the episode ends).
  void advance_to(int target) {
    while (!state_.done && tick() < target) act(Action::advance);
  }

  Episode finish(std::string id, Source source, bool hold) {
    frames_.push_back(frame(Action::noop));
    if (hold && state_.succeeded) {
      for (int i = 0; i < config_.hold_steps; ++i) frames_.push_back(frame(Action::noop));
    }
    Episode ep;
    ep.id = std::move(id);
    ep.source = source;
    ep.frames = std::move(frames_);
    for (std::size_t i = 0; i < ep.frames.size(); ++i) ep.frames[i].t = static_cast<int>(i);
    if (source == Source::dagger_fragment) {
      ep.outcome = Outcome::unknown;
    } else {
      ep.outcome = *ep.frames.back().gt_progress >= 1.0 - kDoneEpsilon ? Outcome::success
                                                                         : Outcome::failure;
    }
    return ep;
  }

 private:
  Frame frame(Action a) const {
    Frame f;
    f.vis_feat = observer_.vis_feat(state_);
    f.proprio = observer_.proprio(state_);
    f.action = a;
    f.gt_progress = state_.gt_progress(config_);
    return f;
  }

  const SimConfig& config_;
  Observer observer_;
  SimState state_;
  std::vector<Frame> frames_;
};

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

int pick_hard_stage(const SimConfig& c, std::mt19937_64& rng) {
  return c.hard_stages[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<int>(c.hard_stages.size()) - 1))];
}

bool is_hard(const SimConfig& c, int stage) {
  return std::find(c.hard_stages.begin(), c.hard_stages.end(), stage) != c.hard_stages.end();
}

int regress_ticks(const SimConfig& c) {
  return static_cast<int>(
      std::ceil(c.regress_depth * c.num_stages * c.ticks_per_stage() - 1e-9));
}

void run_expert(Recorder& r) {
  while (!r.done()) r.act(Action::advance);
}

void run_sluggish(const SimConfig& c, Recorder& r, std::mt19937_64& rng) {
  const int tps = c.ticks_per_stage();
  const int end = final_tick(c);
  std::vector<bool> hesitated(static_cast<std::size_t>(c.num_stages), false);
  while (!r.done()) {
    const auto& s = r.state();
    // Keep enough budget to finish.
    const int slack = c.max_steps - s.step_count - (end - r.tick()) - tps / 4;
    int run = 0;
    if (s.ticks == 0 && is_hard(c, s.stage_index) &&
        !hesitated[static_cast<std::size_t>(s.stage_index)]) {
      hesitated[static_cast<std::size_t>(s.stage_index)] = true;
      run = uniform_int(rng, tps / 4, (3 * tps) / 4);
    } else if (bernoulli(rng, c.stagnate_prob)) {
      run = uniform_int(rng, 4, 16);
    }
    run = std::min(run, std::max(0, slack));
    if (run > 0) {
      r.repeat(Action::noop, run);
    }
    r.act(Action::advance);
  }
}

void run_error_recovery(const SimConfig& c, Recorder& r, std::mt19937_64& rng) {
  const int tps = c.ticks_per_stage();
  const int depth = std::max(1, regress_ticks(c));
  const int primary = pick_hard_stage(c, rng);
  std::vector<int> points;
  for (int h : c.hard_stages) {
    if (h == primary || bernoulli(rng, c.regress_prob)) {
      const int lo = static_cast<int>(0.3 * tps);
      const int hi = std::max(lo, static_cast<int>(0.8 * tps));
      points.push_back(h * tps + uniform_int(rng, lo, hi));
    }
  }
  std::sort(points.begin(), points.end());
  for (int p : points) {
    r.advance_to(p);
    r.repeat(Action::retreat, depth + uniform_int(rng, 0, 8));
    r.repeat(Action::noop, uniform_int(rng, 0, 4));
  }
  run_expert(r);
}

void run_failure(const SimConfig& c, Recorder& r, std::mt19937_64& rng) {
  const int tps = c.ticks_per_stage();
  const int h = pick_hard_stage(c, rng);
  int bottleneck = h * tps + tps / 2 + uniform_int(rng, -tps / 20, tps / 20);
  const int ceiling = static_cast<int>(std::floor(0.8 * final_tick(c))) - 1;
  bottleneck = std::clamp(bottleneck, 0, std::max(0, ceiling));
  r.advance_to(bottleneck);
  while (!r.done()) {
    if (bernoulli(rng, 0.85)) {
      r.repeat(Action::noop, uniform_int(rng, 4, 24));
    } else {
      const int d = uniform_int(rng, 1, 6);
      r.repeat(Action::retreat, d);
      r.advance_to(bottleneck);
    }
  }
}

Episode run_fragment(const SimConfig& c, std::uint64_t seed, std::mt19937_64& rng,
                     std::string id) {
  const int tps = c.ticks_per_stage();
  SimState start = reset(c, seed);
  start.stage_index = uniform_int(rng, std::min(1, c.num_stages - 1), std::max(0, c.num_stages - 2));
  start.ticks = uniform_int(rng, 0, tps - 1);
  if (start.stage_index == 0 && start.ticks == 0) start.ticks = 1;
  sync_sub(c, start);
  Recorder r(c, std::move(start));
  // Stop short of the terminal state.
  const int limit = final_tick(c) - static_cast<int>(std::ceil(kDoneEpsilon * final_tick(c))) - 1;
  auto advance_n = [&](int n) {
    for (int i = 0; i < n && !r.done() && r.tick() < limit; ++i) r.act(Action::advance);
  };
  advance_n(uniform_int(rng, 8, 40));
  r.repeat(Action::retreat, uniform_int(rng, 16, 40));
  r.repeat(Action::noop, uniform_int(rng, 0, 4));
  advance_n(uniform_int(rng, 40, 100));
  return r.finish(std::move(id), Source::dagger_fragment, false);
}

}  // namespace

Episode gen_episode(const SimConfig& config, Source kind, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  const std::string id = to_string(kind) + "-" + std::to_string(seed);
  if (kind == Source::dagger_fragment) return run_fragment(config, seed, rng, id);
  Recorder r(config, reset(config, seed));
  switch (kind) {
    case Source::expert: run_expert(r); break;
    case Source::sluggish: run_sluggish(config, r, rng); break;
    case Source::error_recovery: run_error_recovery(config, r, rng); break;
    case Source::failure: run_failure(config, r, rng); break;
    case Source::dagger_fragment: break;
  }
  return r.finish(id, kind, true);
}

int DatasetSpec::count(Source s) const {
  switch (s) {
    case Source::expert: return expert;
    case Source::sluggish: return sluggish;
    case Source::error_recovery: return error_recovery;
    case Source::failure: return failure;
    case Source::dagger_fragment: return dagger_fragment;
  }
  return 0;
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t episode_seed(std::uint64_t base, Source kind, int index) {
  const auto k = static_cast<std::uint64_t>(static_cast<int>(kind) + 1);
  return splitmix64(base ^ splitmix64((k << 32) | static_cast<std::uint32_t>(index)));
}

std::string episode_id(const std::string& prefix, Source kind, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return prefix + "-" + to_string(kind) + "-" + buf;
}

std::vector<Episode> gen_dataset(const SimConfig& config, const DatasetSpec& spec,
                                 const std::string& id_prefix) {
  std::vector<Episode> out;
  for (auto kind : {Source::expert, Source::sluggish, Source::error_recovery,
                    Source::failure, Source::dagger_fragment}) {
    const int n = spec.count(kind);
    if (n < 0) throw ConfigError("dataset counts must be >= 0");
    for (int i = 0; i < n; ++i) {
      Episode ep = gen_episode(config, kind, episode_seed(spec.seed, kind, i));
      ep.id = episode_id(id_prefix, kind, i);
      out.push_back(std::move(ep));
    }
  }
  return out;
}

Image render_frame(const SimConfig& config, const SimState& state, int size) {
  if (size < 32) throw DomainError("render size must be >= 32");
  Image img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size), 0)};
  const int S = config.num_stages;
  const int margin = size / 16;
  const int inner = size - 2 * margin;
  for (int y = 0; y < size; ++y) {
    const int band = y * S / size;
    const int band_top = band * size / S;
    const int band_h = (band + 1) * size / S - band_top;
    const int pad = std::max(1, band_h / 5);
    if (y < band_top + pad || y >= band_top + band_h - pad) continue;
    double fill = 0.0;
    if (band < state.stage_index) fill = 1.0;
    if (band == state.stage_index) fill = state.sub_progress;
    const int filled = static_cast<int>(std::lround(fill * inner));
    for (int x = margin; x < size - margin; ++x) {
      img.pixels[static_cast<std::size_t>(y * size + x)] = x - margin < filled ? 255 : 48;
    }
  }
  return img;
}

SimState state_from_proprio(const SimConfig& config, const std::vector<float>& proprio) {
  if (static_cast<int>(proprio.size()) != config.d_state) {
    throw ShapeError("proprio length " + std::to_string(proprio.size()) +
                     " does not match d_state " + std::to_string(config.d_state));
  }
  SimState s;
  const int S = config.num_stages;
  s.stage_index = static_cast<int>(
      std::max_element(proprio.begin(), proprio.begin() + S) - proprio.begin());
  s.sub_progress = std::clamp(static_cast<double>(proprio[static_cast<std::size_t>(S)]), 0.0, 1.0);
  s.ticks = static_cast<int>(std::lround(s.sub_progress / config.advance_delta));
  s.succeeded = s.stage_index == S - 1 && s.sub_progress >= 1.0;
  s.done = s.succeeded;
  return s;
}

}  // namespace arm::sim
