#include "arm/awbc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arm/checkpoint.hpp"
#include "arm/ops.hpp"
#include "arm/optim.hpp"
#include "json.hpp"

namespace arm::awbc {

using namespace arm::tc;

GainResult gains(std::span<const double> progress, int H, double L_bar) {
  if (H < 1) throw ConfigError("action horizon H must be >= 1");
  if (!(L_bar > 0.0)) throw ValidationError("mean episode length must be > 0");
  const int L = static_cast<int>(progress.size());
  if (L < 1) throw ValidationError("progress curve is empty");
  GainResult r;
  const double scale = static_cast<double>(L) / L_bar;
  if (H >= L) {
    r.single_chunk_fallback = true;
    r.gains.push_back({0, (progress[static_cast<std::size_t>(L - 1)] - progress[0]) * scale});
    return r;
  }
  for (int t = 0; t < L; t += H) {
    const int end = std::min(t + H, L - 1);
    r.gains.push_back(
        {t, (progress[static_cast<std::size_t>(end)] - progress[static_cast<std::size_t>(t)]) * scale});
  }
  return r;
}

WeightBatch weights_statistical(std::span<const double> g, double eps) {
  if (g.empty()) throw ValidationError("weights_statistical needs a nonempty batch");
  if (!(eps > 0.0)) throw ValidationError("weights_statistical needs eps > 0");
  WeightBatch b;
  const double n = static_cast<double>(g.size());
  b.mu = std::accumulate(g.begin(), g.end(), 0.0) / n;
  double var = 0.0;
  for (double x : g) var += (x - b.mu) * (x - b.mu);
  b.sigma = std::sqrt(var / n);
  b.lower = b.mu - 2.0 * b.sigma;
  b.upper = b.mu + 2.0 * b.sigma;
  b.w.resize(g.size());
  if (b.sigma < 1e-9) {
    std::fill(b.w.begin(), b.w.end(), 0.5);
    return b;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    b.w[i] = std::clamp((g[i] - b.lower) / (b.upper - b.lower + eps), 0.0, 1.0);
  }
  return b;
}

std::vector<double> weights_threshold(std::span<const double> g) {
  std::vector<double> w(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) w[i] = g[i] > 0.01 ? 1.0 : 0.0;
  return w;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::none: return "none";
    case Mode::statistical: return "statistical";
    case Mode::threshold: return "threshold";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (auto m : {Mode::none, Mode::statistical, Mode::threshold}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown weighting mode '" + s + "' (none, statistical, threshold)");
}

void PolicyConfig::validate() const {
  if (H < 1) throw ConfigError("awbc.H must be >= 1");
  if (epochs < 1 || batch < 1) throw ConfigError("awbc.epochs and awbc.batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("awbc.lr must be > 0");
  if (!(eps > 0.0)) throw ConfigError("awbc.eps must be > 0");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("awbc.hidden sizes must be >= 1");
  }
}

int feature_dim(int d_vis, int num_stages) { return d_vis + num_stages + 2; }

std::vector<float> policy_features(std::span<const float> vis, std::span<const float> proprio,
                                   int S) {
  if (static_cast<int>(proprio.size()) != S + 5) {
    throw ShapeError("proprio length does not match the stage count");
  }
  std::vector<float> f(vis.begin(), vis.end());
  f.insert(f.end(), proprio.begin(), proprio.begin() + S + 1);
  f.push_back(proprio[static_cast<std::size_t>(S + 4)]);
  return f;
}

ParameterSet<double> init_policy(const PolicyConfig& c, int in_dim, std::uint64_t seed) {
  c.validate();
  ParameterSet<double> ps;
  Initializer init(seed);
  auto in = static_cast<std::size_t>(in_dim);
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    const auto out = static_cast<std::size_t>(c.hidden[i]);
    init_linear(ps, init, "fc" + std::to_string(i), in, out);
    in = out;
  }
  init_linear(ps, init, "out", in, static_cast<std::size_t>(3 * c.H));
  return ps;
}

template <typename T>
Tensor<T> policy_logits(const ParameterSet<T>& params, const PolicyConfig& c,
                        const Tensor<T>& x) {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    h = relu(bind_linear(params, "fc" + std::to_string(i))(h));
  }
  return bind_linear(params, "out")(h);
}

template Tensor<float> policy_logits(const ParameterSet<float>&, const PolicyConfig&,
                                     const Tensor<float>&);
template Tensor<double> policy_logits(const ParameterSet<double>&, const PolicyConfig&,
                                      const Tensor<double>&);

Tensor<double> awbc_loss(const ParameterSet<double>& params, const PolicyConfig& c,
                         const Tensor<double>& x, std::span<const int> targets,
                         std::span<const double> weights) {
  const std::size_t B = x.rows();
  const auto H = static_cast<std::size_t>(c.H);
  if (weights.size() != B) {
    throw ValidationError("awbc_loss: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(B) + " samples");
  }
  if (targets.size() != B * H) throw ValidationError("awbc_loss: target count mismatch");
  auto logits = reshape(policy_logits(params, c, x), {B * H, 3});
  std::vector<double> row_w(B * H);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) row_w[b * H + h] = weights[b] / static_cast<double>(B);
  }
  return weighted_sum(nll_rows(logits, targets), std::span<const double>(row_w));
}

std::vector<Chunk> episode_chunks(const sim::Episode& ep, std::span<const double> progress,
                                  int H, double L_bar, int S) {
  if (static_cast<int>(progress.size()) != ep.length()) {
    throw ValidationError("progress curve length does not match episode '" + ep.id + "'");
  }
  const auto g = gains(progress, H, L_bar);
  std::vector<Chunk> out;
  for (const auto& gain : g.gains) {
    Chunk c;
    const auto& f = ep.frames[static_cast<std::size_t>(gain.t)];
    c.features = policy_features(f.vis_feat, f.proprio, S);
    for (int h = 0; h < H; ++h) {
      const int t = gain.t + h;
      // The last frame carries no transition.
      c.actions.push_back(t < ep.length() - 1
                              ? static_cast<int>(ep.frames[static_cast<std::size_t>(t)].action)
                              : -1);
    }
    c.gain = gain.dG;
    out.push_back(std::move(c));
  }
  return out;
}

PolicyResult train_policy(const PolicyConfig& c, const std::vector<Chunk>& chunks) {
  c.validate();
  if (chunks.empty()) throw ValidationError("train-policy needs at least one chunk");
  const int in_dim = static_cast<int>(chunks.front().features.size());
  const auto H = static_cast<std::size_t>(c.H);
  std::vector<double> all_gains;
  for (const auto& ch : chunks) all_gains.push_back(ch.gain);
  std::vector<double> fixed_w;
  if (c.mode == Mode::threshold) fixed_w = weights_threshold(all_gains);
  if (c.mode == Mode::statistical && c.global_stats) {
    fixed_w = weights_statistical(all_gains, c.eps).w;
  }

  PolicyResult r;
  r.params = init_policy(c, in_dim, c.seed);
  AdamW adam(r.params, {.lr = c.lr, .weight_decay = c.weight_decay});
  std::vector<std::size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(c.seed ^ 0x5EED5EEDULL);
  const auto B = static_cast<std::size_t>(c.batch);
  const auto per_epoch = static_cast<std::int64_t>((chunks.size() + B - 1) / B);
  const std::int64_t total = per_epoch * c.epochs;
  const auto warmup = std::max<std::int64_t>(1, total / 20);
  std::int64_t step = 0;
  for (int e = 0; e < c.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
      const std::size_t b1 = std::min(order.size(), b0 + B);
      const std::size_t n = b1 - b0;
      std::vector<double> x;
      x.reserve(n * static_cast<std::size_t>(in_dim));
      std::vector<int> targets;
      std::vector<double> g, w;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& ch = chunks[order[i]];
        x.insert(x.end(), ch.features.begin(), ch.features.end());
        targets.insert(targets.end(), ch.actions.begin(), ch.actions.end());
        g.push_back(ch.gain);
        if (!fixed_w.empty()) w.push_back(fixed_w[order[i]]);
      }
      if (c.mode == Mode::none) w.assign(n, 1.0);
      if (c.mode == Mode::statistical && !c.global_stats) w = weights_statistical(g, c.eps).w;
      if (targets.size() != n * H) throw ValidationError("chunk action count differs from H");
      auto feats = Tensor<double>::from({n, static_cast<std::size_t>(in_dim)}, std::move(x));
      r.params.zero_grad();
      auto loss = awbc_loss(r.params, c, feats, targets, w);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite policy loss at step " + std::to_string(step));
      }
      loss.backward();
      if (c.clip > 0.0) clip_grad_norm(r.params, c.clip);
      adam.step(r.params, cosine_lr(c.lr, step, total, warmup));
      r.trace.push_back(
          {step, lv, std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n)});
      ++step;
    }
  }
  return r;
}

namespace {

template <typename Act>
EvalResult rollouts(const sim::SimConfig& env, int n, std::uint64_t base_seed, Act&& act) {
  if (n < 1) throw ValidationError("evaluation needs at least one episode");
  EvalResult r;
  r.episodes = n;
  double steps = 0.0;
  for (int i = 0; i < n; ++i) {
    auto s = sim::reset(env, sim::episode_seed(base_seed, sim::Source::expert, i));
    act(s);
    if (s.succeeded) {
      ++r.successes;
      steps += s.step_count;
    }
  }
  r.success_rate = static_cast<double>(r.successes) / n;
  r.mean_steps = r.successes ? steps / r.successes : 0.0;
  return r;
}

}  // namespace

EvalResult eval_policy(const ParameterSet<double>& params, const PolicyConfig& c,
                       const sim::SimConfig& env, int n, std::uint64_t base_seed) {
  const auto fparams = params.cast_to<float>();
  const sim::Observer obs(env);
  NoGradGuard guard;
  return rollouts(env, n, base_seed, [&](sim::SimState& s) {
    while (!s.done) {
      const auto f = policy_features(obs.vis_feat(s), obs.proprio(s), env.num_stages);
      auto x = Tensor<float>::from({1, f.size()}, f);
      const auto logits = policy_logits(fparams, c, x);
      const float* z = logits.data().data();
      for (int h = 0; h < c.H && !s.done; ++h) {
        const float* zh = z + 3 * h;
        const int a = static_cast<int>(std::max_element(zh, zh + 3) - zh);
        s = sim::step(env, s, static_cast<sim::Action>(a)).state;
      }
    }
  });
}

EvalResult eval_controller(const Controller& controller, const sim::SimConfig& env, int n,
                           std::uint64_t base_seed) {
  std::mt19937_64 rng(base_seed ^ 0xC0FFEEULL);
  return rollouts(env, n, base_seed, [&](sim::SimState& s) {
    while (!s.done) s = sim::step(env, s, controller(s, rng)).state;
  });
}

std::string policy_metadata(const PolicyConfig& c, int in_dim) {
  nlohmann::ordered_json j;
  j["hidden"] = c.hidden;
  j["H"] = c.H;
  j["mode"] = to_string(c.mode);
  j["in_dim"] = in_dim;
  return j.dump();
}

void save_policy(const std::string& path, const PolicyConfig& c, int in_dim,
                 const ParameterSet<double>& params) {
  save_checkpoint(path, policy_metadata(c, in_dim), params);
}

LoadedPolicy load_policy(const std::string& path) {
  auto ck = load_checkpoint(path);
  LoadedPolicy p;
  try {
    const auto j = nlohmann::json::parse(ck.metadata);
    p.config.hidden = j.at("hidden").get<std::vector<int>>();
    p.config.H = j.at("H").get<int>();
    p.config.mode = mode_from_string(j.at("mode").get<std::string>());
    p.in_dim = j.at("in_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed policy checkpoint metadata: ") + e.what());
  }
  p.params = std::move(ck.params);
  if (!p.params.contains("out.weight") ||
      p.params.get("out.weight").cols() != static_cast<std::size_t>(3 * p.config.H)) {
    throw ValidationError("policy checkpoint does not match its metadata");
  }
  return p;
}

}  // namespace arm::awbc
