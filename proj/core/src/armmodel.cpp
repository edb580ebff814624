#include "arm/armmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "arm/binio.hpp"
#include "arm/checkpoint.hpp"
#include "arm/ops.hpp"
#include "json.hpp"

namespace arm::model {

using namespace arm::tc;

void ArmConfig::validate() const {
  if (W < 2) throw ConfigError("arm.W must be >= 2");
  if (k < 1) throw ConfigError("arm.k must be >= 1");
  if (d < 1 || heads < 1 || d % heads != 0) {
    throw ConfigError("arm.d must be a positive multiple of arm.heads");
  }
  if (layers < 0) throw ConfigError("arm.layers must be >= 0");
  if (lambda_int < 0.0 || lambda_succ < 0.0) throw ConfigError("arm loss weights must be >= 0");
  if (!(completion_eps > 0.0 && completion_eps < 1.0)) {
    throw ConfigError("arm.completion_eps must be in (0, 1)");
  }
  if (!(prob_floor > 0.0 && prob_floor < 0.5)) throw ConfigError("arm.prob_floor must be in (0, 0.5)");
  if (!(ln_eps > 0.0)) throw ConfigError("arm.ln_eps must be > 0");
  if (d_vis < 1 || d_state < 1 || vocab < 1) throw ConfigError("arm input dims must be >= 1");
}

ParameterSet<double> init_params(const ArmConfig& c, std::uint64_t seed) {
  c.validate();
  ParameterSet<double> ps;
  Initializer init(seed);
  const auto d = static_cast<std::size_t>(c.d);
  init_linear(ps, init, "proj_v.0", static_cast<std::size_t>(c.d_vis), d);
  init_linear(ps, init, "proj_v.1", d, d);
  init_linear(ps, init, "proj_s.0", static_cast<std::size_t>(c.d_state), d);
  init_linear(ps, init, "proj_s.1", d, d);
  ps.add("embed", init.uniform({static_cast<std::size_t>(c.vocab), d}, d));
  ps.add("pos", init.uniform({static_cast<std::size_t>(c.W), d}, d));
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    ps.add(p + "ln1.gamma", init.constant({1, d}, 1.0));
    ps.add(p + "ln1.beta", init.constant({1, d}, 0.0));
    for (const char* n : {"attn.q", "attn.k", "attn.v", "attn.o"}) init_linear(ps, init, p + n, d, d);
    ps.add(p + "ln2.gamma", init.constant({1, d}, 1.0));
    ps.add(p + "ln2.beta", init.constant({1, d}, 0.0));
    init_linear(ps, init, p + "ffn.0", d, 4 * d);
    init_linear(ps, init, p + "ffn.1", 4 * d, d);
  }
  init_linear(ps, init, "int.0", 2 * d, d);
  init_linear(ps, init, "int.1", d, 3);
  init_linear(ps, init, "succ.0", d, d);
  init_linear(ps, init, "succ.1", d, 1);
  return ps;
}

template <typename T>
WindowInputs<T> gather_inputs(const ArmConfig& c, const std::vector<const sim::Episode*>& episodes,
                              const std::vector<std::vector<int>>& frame_indices) {
  if (episodes.size() != frame_indices.size()) {
    throw ShapeError("gather_inputs: episode and window counts differ");
  }
  WindowInputs<T> in;
  in.windows = episodes.size();
  const std::size_t rows = in.windows * static_cast<std::size_t>(c.W);
  in.vis.reserve(rows * static_cast<std::size_t>(c.d_vis));
  in.proprio.reserve(rows * static_cast<std::size_t>(c.d_state));
  in.instruction.reserve(rows);
  for (std::size_t j = 0; j < episodes.size(); ++j) {
    const auto& ep = *episodes[j];
    if (static_cast<int>(frame_indices[j].size()) != c.W) {
      throw ShapeError("window has " + std::to_string(frame_indices[j].size()) +
                       " frames, expected W=" + std::to_string(c.W));
    }
    for (int t : frame_indices[j]) {
      const auto& f = ep.frames.at(static_cast<std::size_t>(t));
      if (static_cast<int>(f.vis_feat.size()) != c.d_vis ||
          static_cast<int>(f.proprio.size()) != c.d_state) {
        throw ShapeError("episode '" + ep.id + "' frame dims do not match the model");
      }
      in.vis.insert(in.vis.end(), f.vis_feat.begin(), f.vis_feat.end());
      in.proprio.insert(in.proprio.end(), f.proprio.begin(), f.proprio.end());
      in.instruction.push_back(ep.instruction_id);
    }
  }
  return in;
}

template <typename T>
ArmNet<T>::ArmNet(const ArmConfig& config, const ParameterSet<T>& params)
    : config_(config), params_(&params) {
  config_.validate();
  for (const char* n : {"proj_v.0.weight", "proj_s.0.weight", "embed", "pos", "int.0.weight",
                        "succ.1.weight"}) {
    if (!params.contains(n)) throw ValidationError(std::string("parameters lack '") + n + "'");
  }
  const auto& pv = params.get("proj_v.0.weight");
  const auto& ps = params.get("proj_s.0.weight");
  const auto& pos = params.get("pos");
  if (pv.rows() != static_cast<std::size_t>(config_.d_vis) ||
      ps.rows() != static_cast<std::size_t>(config_.d_state) ||
      pos.rows() != static_cast<std::size_t>(config_.W) ||
      pos.cols() != static_cast<std::size_t>(config_.d) ||
      params.contains("layer" + std::to_string(config_.layers) + ".ln1.gamma") ||
      (config_.layers > 0 &&
       !params.contains("layer" + std::to_string(config_.layers - 1) + ".ln1.gamma"))) {
    throw ValidationError("checkpoint parameters do not match the model config");
  }
}

template <typename T>
Tensor<T> ArmNet<T>::fuse(const WindowInputs<T>& in) const {
  const std::size_t rows = in.windows * static_cast<std::size_t>(config_.W);
  auto v = Tensor<T>::from({rows, static_cast<std::size_t>(config_.d_vis)}, in.vis);
  auto s = Tensor<T>::from({rows, static_cast<std::size_t>(config_.d_state)}, in.proprio);
  auto pv = lin("proj_v.1")(gelu(lin("proj_v.0")(v)));
  auto ps = lin("proj_s.1")(gelu(lin("proj_s.0")(s)));
  auto g = embedding(p("embed"), std::span<const std::int64_t>(in.instruction));
  return add(add(add(pv, ps), g), tile_rows(p("pos"), in.windows));
}

template <typename T>
Tensor<T> ArmNet<T>::encode(const Tensor<T>& x, std::size_t windows) const {
  if (x.rows() != windows * static_cast<std::size_t>(config_.W)) {
    throw ShapeError("encode expects " + std::to_string(windows * config_.W) + " rows, got " +
                     std::to_string(x.rows()));
  }
  const T eps = static_cast<T>(config_.ln_eps);
  Tensor<T> h = x;
  for (int l = 0; l < config_.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    auto a = layer_norm(h, p(pre + "ln1.gamma"), p(pre + "ln1.beta"), eps);
    auto att = causal_attention(lin(pre + "attn.q")(a), lin(pre + "attn.k")(a),
                                lin(pre + "attn.v")(a), windows,
                                static_cast<std::size_t>(config_.W),
                                static_cast<std::size_t>(config_.heads));
    h = add(h, lin(pre + "attn.o")(att));
    auto b = layer_norm(h, p(pre + "ln2.gamma"), p(pre + "ln2.beta"), eps);
    h = add(h, lin(pre + "ffn.1")(gelu(lin(pre + "ffn.0")(b))));
  }
  return h;
}

template <typename T>
Tensor<T> ArmNet<T>::interval_logits(const Tensor<T>& hidden, std::span<const std::size_t> left,
                                     std::span<const std::size_t> right) const {
  auto cat = concat_cols(gather_rows(hidden, left), gather_rows(hidden, right));
  return lin("int.1")(gelu(lin("int.0")(cat)));
}

template <typename T>
Tensor<T> ArmNet<T>::completion_probs(const Tensor<T>& hidden) const {
  return sigmoid(lin("succ.1")(gelu(lin("succ.0")(hidden))));
}

template class ArmNet<float>;
template class ArmNet<double>;
template WindowInputs<float> gather_inputs(const ArmConfig&, const std::vector<const sim::Episode*>&,
                                           const std::vector<std::vector<int>>&);
template WindowInputs<double> gather_inputs(const ArmConfig&,
                                            const std::vector<const sim::Episode*>&,
                                            const std::vector<std::vector<int>>&);

bool continues(const data::WindowSample& a, const data::WindowSample& b) {
  if (a.episode_id != b.episode_id || a.pad_mask.empty() || a.pad_mask.back()) return false;
  return b.frame_indices.front() - b.stride == a.frame_indices.back();
}

BatchTargets batch_targets(const std::vector<data::WindowSample>& windows, int W) {
  BatchTargets t;
  auto cls = [](int y) { return y == data::kUnlabeled ? -1 : y + 1; };
  const auto w = static_cast<std::size_t>(W);
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const auto& win = windows[j];
    for (std::size_t i = 0; i + 1 < w; ++i) {
      t.left.push_back(j * w + i);
      t.right.push_back(j * w + i + 1);
      t.interval.push_back(cls(win.interval_targets[i]));
    }
    for (std::size_t i = 0; i < w; ++i) t.completion.push_back(win.completion_targets[i]);
  }
  for (std::size_t j = 1; j < windows.size(); ++j) {
    if (!continues(windows[j - 1], windows[j])) continue;
    t.left.push_back(j * w - 1);
    t.right.push_back(j * w);
    t.interval.push_back(cls(windows[j].lead_target));
  }
  return t;
}

LossParts arm_loss(const ArmNet<double>& net, const Tensor<double>& hidden,
                   const BatchTargets& targets, const std::array<double, 3>& cw) {
  const auto& c = net.config();
  std::vector<double> iw(targets.interval.size(), 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < iw.size(); ++i) {
    const int y = targets.interval[i];
    if (y >= 0) {
      iw[i] = cw[static_cast<std::size_t>(y)];
      denom += iw[i];
    }
  }
  std::size_t n_succ = 0;
  for (int y : targets.completion) n_succ += y >= 0 ? 1 : 0;
  if (denom <= 0.0 && n_succ == 0) {
    throw ValidationError("batch has no supervised interval or completion target");
  }
  Tensor<double> l_int = Tensor<double>::scalar(0.0);
  if (denom > 0.0) {
    for (auto& v : iw) v /= denom;
    auto logits = net.interval_logits(hidden, targets.left, targets.right);
    l_int = weighted_sum(nll_rows(logits, std::span<const int>(targets.interval)),
                         std::span<const double>(iw));
  }
  Tensor<double> l_succ = Tensor<double>::scalar(0.0);
  if (n_succ > 0) {
    auto probs = net.completion_probs(hidden);
    auto f = focal_rows(probs, std::span<const int>(targets.completion), c.focal_gamma,
                        c.focal_alpha, c.prob_floor);
    l_succ = scale(sum(f), 1.0 / static_cast<double>(n_succ));
  }
  auto total = add(scale(l_int, c.lambda_int), scale(l_succ, c.lambda_succ));
  return {total, l_int, l_succ};
}

std::array<double, 3> class_weights(const data::LabelIndex& index, double cap) {
  std::array<double, 3> n{0, 0, 0};
  for (const auto& [key, y] : index) n[static_cast<std::size_t>(y + 1)] += 1.0;
  const double total = n[0] + n[1] + n[2];
  std::array<double, 3> w{};
  for (std::size_t c = 0; c < 3; ++c) {
    w[c] = n[c] > 0.0 ? std::min(cap, total / (3.0 * n[c])) : cap;
  }
  return w;
}

TrainResult train(const ArmConfig& config, const TrainOptions& opt,
                  const std::vector<sim::Episode>& episodes, const data::LabelIndex& labels) {
  config.validate();
  if (labels.empty()) throw ValidationError("train-arm needs at least one interval label");
  if (opt.epochs < 1 || opt.batch < 1) throw ConfigError("epochs and batch must be >= 1");
  const int W = config.W, k = config.k;
  struct Start {
    std::size_t episode;
    int frame;
  };
  std::vector<Start> pool;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const int L = episodes[e].length();
    for (int s = 0; s < L && (s == 0 || s + W * k <= L - 1); s += k) pool.push_back({e, s});
  }
  if (pool.empty()) throw ValidationError("no training windows");
  const auto cw = class_weights(labels);

  TrainResult result;
  result.params = init_params(config, opt.seed);
  ArmNet<double> net(config, result.params);
  AdamW adam(result.params, {.lr = opt.lr, .weight_decay = opt.weight_decay});
  std::mt19937_64 rng(opt.seed ^ 0xA5A5A5A5ULL);
  const auto steps_per_epoch =
      static_cast<std::int64_t>((pool.size() + static_cast<std::size_t>(opt.batch) - 1) /
                                static_cast<std::size_t>(opt.batch));
  const std::int64_t total_steps = steps_per_epoch * opt.epochs;
  const auto warmup = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(opt.warmup_frac * static_cast<double>(total_steps))));

  std::int64_t step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t b0 = 0; b0 < pool.size(); b0 += static_cast<std::size_t>(opt.batch)) {
      const std::size_t b1 = std::min(pool.size(), b0 + static_cast<std::size_t>(opt.batch));
      std::vector<data::WindowSample> windows;
      std::vector<const sim::Episode*> eps;
      std::vector<std::vector<int>> frames;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& ep = episodes[pool[i].episode];
        const int s = pool[i].frame;
        const int s2 = s + W * k <= ep.length() - 1 ? s + W * k : s;
        for (int start : {s, s2}) {
          auto w = data::make_window(ep, start, W, k);
          data::attach_labels(w, ep, labels, config.completion_eps);
          eps.push_back(&ep);
          frames.push_back(w.frame_indices);
          windows.push_back(std::move(w));
        }
      }
      const auto targets = batch_targets(windows, W);
      const auto in = gather_inputs<double>(config, eps, frames);
      result.params.zero_grad();
      auto hidden = net.hidden(in);
      auto loss = arm_loss(net, hidden, targets, cw);
      const double lt = loss.total.item();
      if (!std::isfinite(lt)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step));
      }
      loss.total.backward();
      if (opt.clip > 0.0) clip_grad_norm(result.params, opt.clip);
      adam.step(result.params, cosine_lr(opt.lr, step, total_steps, warmup));
      result.trace.push_back({step, lt, loss.interval.item(), loss.completion.item()});
      ++step;
    }
  }
  return result;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "step,L_ARM,L_int,L_succ\n";
  for (const auto& r : trace) {
    out << r.step << ',' << r.total << ',' << r.interval << ',' << r.completion << '\n';
  }
  return out.str();
}

namespace {
using ojson = nlohmann::ordered_json;

template <typename V>
void read_field(const ojson& j, const char* key, V& out) {
  if (!j.contains(key)) throw ValidationError(std::string("model config lacks '") + key + "'");
  out = j.at(key).get<V>();
}
}  // namespace

std::string config_to_json(const ArmConfig& c) {
  ojson j;
  j["W"] = c.W;
  j["k"] = c.k;
  j["d"] = c.d;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["lambda_int"] = c.lambda_int;
  j["lambda_succ"] = c.lambda_succ;
  j["focal_gamma"] = c.focal_gamma;
  j["focal_alpha"] = c.focal_alpha;
  j["completion_eps"] = c.completion_eps;
  j["prob_floor"] = c.prob_floor;
  j["ln_eps"] = c.ln_eps;
  j["d_vis"] = c.d_vis;
  j["d_state"] = c.d_state;
  j["vocab"] = c.vocab;
  return j.dump();
}

ArmConfig config_from_json(const std::string& text) {
  ArmConfig c;
  try {
    const auto j = ojson::parse(text);
    read_field(j, "W", c.W);
    read_field(j, "k", c.k);
    read_field(j, "d", c.d);
    read_field(j, "layers", c.layers);
    read_field(j, "heads", c.heads);
    read_field(j, "lambda_int", c.lambda_int);
    read_field(j, "lambda_succ", c.lambda_succ);
    read_field(j, "focal_gamma", c.focal_gamma);
    read_field(j, "focal_alpha", c.focal_alpha);
    read_field(j, "completion_eps", c.completion_eps);
    read_field(j, "prob_floor", c.prob_floor);
    read_field(j, "ln_eps", c.ln_eps);
    read_field(j, "d_vis", c.d_vis);
    read_field(j, "d_state", c.d_state);
    read_field(j, "vocab", c.vocab);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_model(const std::string& path, const ArmConfig& config,
                const ParameterSet<double>& params) {
  save_checkpoint(path, config_to_json(config), params);
}

LoadedModel load_model(const std::string& path) {
  const std::string bytes = io::read_file(path);
  auto ck = decode_checkpoint(bytes);
  LoadedModel m;
  m.config = config_from_json(ck.metadata);
  m.params = std::move(ck.params);
  m.checkpoint_id = io::fnv1a_hex(bytes);
  ArmNet<double> check(m.config, m.params);
  return m;
}

LoadedModel model_from_params(const ArmConfig& config, ParameterSet<double> params) {
  LoadedModel m;
  m.config = config;
  m.params = std::move(params);
  m.checkpoint_id = io::fnv1a_hex(encode_checkpoint(config_to_json(config), m.params));
  ArmNet<double> check(m.config, m.params);
  return m;
}

Inference::Inference(const LoadedModel& model)
    : config_(model.config),
      params_(model.params.cast_to<float>()),
      net_(config_, params_) {}

namespace {
std::array<float, 3> softmax3(const float* z) {
  const float mx = std::max({z[0], z[1], z[2]});
  std::array<float, 3> p{std::exp(z[0] - mx), std::exp(z[1] - mx), std::exp(z[2] - mx)};
  const float s = p[0] + p[1] + p[2];
  for (auto& v : p) v /= s;
  return p;
}
}  // namespace

Inference::Outputs Inference::infer_windows(const std::vector<const sim::Episode*>& episodes,
                                            const std::vector<std::vector<int>>& frames) const {
  NoGradGuard guard;
  Outputs out;
  if (episodes.empty()) return out;
  const auto in = gather_inputs<float>(config_, episodes, frames);
  auto hidden = net_.hidden(in);
  const auto w = static_cast<std::size_t>(config_.W);
  std::vector<std::size_t> left, right;
  for (std::size_t j = 0; j < in.windows; ++j) {
    for (std::size_t i = 0; i + 1 < w; ++i) {
      left.push_back(j * w + i);
      right.push_back(j * w + i + 1);
    }
  }
  auto logits = net_.interval_logits(hidden, left, right);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    out.interval_probs.push_back(softmax3(logits.data().data() + 3 * r));
  }
  auto probs = net_.completion_probs(hidden);
  out.completion.assign(probs.data().begin(), probs.data().end());
  out.hidden.assign(hidden.data().begin(), hidden.data().end());
  return out;
}

std::vector<std::array<float, 3>> Inference::pair_probs(std::span<const float> left,
                                                        std::span<const float> right) const {
  NoGradGuard guard;
  const auto d = static_cast<std::size_t>(config_.d);
  if (left.size() != right.size() || left.size() % d != 0) {
    throw ShapeError("pair_probs: mismatched hidden-state spans");
  }
  const std::size_t m = left.size() / d;
  std::vector<std::array<float, 3>> out;
  if (m == 0) return out;
  std::vector<float> stacked(left.begin(), left.end());
  stacked.insert(stacked.end(), right.begin(), right.end());
  auto h = Tensor<float>::from({2 * m, d}, std::move(stacked));
  std::vector<std::size_t> li(m), ri(m);
  std::iota(li.begin(), li.end(), 0);
  std::iota(ri.begin(), ri.end(), m);
  auto logits = net_.interval_logits(h, li, ri);
  for (std::size_t r = 0; r < m; ++r) out.push_back(softmax3(logits.data().data() + 3 * r));
  return out;
}

namespace {
int argmax_delta(const std::array<float, 3>& p) {
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(best)]) best = c;
  }
  return best - 1;
}

void push_delta(EpisodeScores& s, std::size_t at, const std::array<float, 3>& p) {
  s.delta_probs[at] = p;
  s.deltas[at] = argmax_delta(p);
}
}  // namespace

std::vector<lab::TriStateLabel> pseudo_label(const Inference& inf, const std::string& checkpoint_id,
                                             const std::vector<sim::Episode>& episodes,
                                             double tau, std::int64_t timestamp) {
  const int k = inf.config().k;
  std::vector<lab::TriStateLabel> out;
  for (const auto& ep : episodes) {
    const auto scores = infer_episode_mimo(inf, ep);
    for (std::size_t i = 0; i < scores.delta_probs.size(); ++i) {
      const auto& p = scores.delta_probs[i];
      if (*std::max_element(p.begin(), p.end()) < tau) continue;
      const int t_a = static_cast<int>(i) * k;
      out.push_back({ep.id, t_a, t_a + k, scores.deltas[i], lab::model_annotator(checkpoint_id),
                     timestamp});
    }
  }
  return out;
}

int mimo_passes(int t_sub, int W) { return data::tile_count(t_sub, W); }

int miso_passes(int t_sub, int W) {
  if (W < 2) throw ConfigError("window W must be >= 2");
  return std::max(1, t_sub - W + 1);
}

EpisodeScores infer_episode_mimo(const Inference& inf, const sim::Episode& ep, std::size_t batch) {
  const auto& c = inf.config();
  const auto tiles = data::window_samples(ep, c.W, c.k);
  EpisodeScores s;
  s.t_sub = data::subsampled_length(ep.length(), c.k);
  s.deltas.assign(static_cast<std::size_t>(std::max(0, s.t_sub - 1)), 0);
  s.delta_probs.assign(s.deltas.size(), {0.0f, 0.0f, 0.0f});
  s.completion.assign(static_cast<std::size_t>(s.t_sub), 0.0f);
  const auto w = static_cast<std::size_t>(c.W);
  const auto d = static_cast<std::size_t>(c.d);
  if (batch == 0) batch = tiles.size();
  std::vector<float> first_hidden, last_hidden;  // per tile
  for (std::size_t b0 = 0; b0 < tiles.size(); b0 += batch) {
    const std::size_t b1 = std::min(tiles.size(), b0 + batch);
    std::vector<const sim::Episode*> eps(b1 - b0, &ep);
    std::vector<std::vector<int>> frames;
    for (std::size_t j = b0; j < b1; ++j) frames.push_back(tiles[j].frame_indices);
    const auto out = inf.infer_windows(eps, frames);
    s.passes += static_cast<int>(b1 - b0);
    for (std::size_t j = b0; j < b1; ++j) {
      const std::size_t local = j - b0;
      const auto& tile = tiles[j];
      for (std::size_t i = 0; i < w; ++i) {
        if (tile.pad_mask[i]) continue;
        const std::size_t pos = j * w + i;
        s.completion[pos] = out.completion[local * w + i];
        if (i + 1 < w && !tile.pad_mask[i + 1]) {
          push_delta(s, pos, out.interval_probs[local * (w - 1) + i]);
        }
      }
      const float* h = out.hidden.data() + local * w * d;
      first_hidden.insert(first_hidden.end(), h, h + d);
      last_hidden.insert(last_hidden.end(), h + (w - 1) * d, h + w * d);
    }
  }
  if (tiles.size() > 1) {
    const std::size_t m = tiles.size() - 1;
    auto probs = inf.pair_probs(std::span<const float>(last_hidden.data(), m * d),
                                std::span<const float>(first_hidden.data() + d, m * d));
    for (std::size_t j = 1; j < tiles.size(); ++j) push_delta(s, j * w - 1, probs[j - 1]);
  }
  return s;
}

EpisodeScores infer_episode_miso(const Inference& inf, const sim::Episode& ep) {
  const auto& c = inf.config();
  EpisodeScores s;
  s.t_sub = data::subsampled_length(ep.length(), c.k);
  if (s.t_sub < 1) throw ValidationError("episode '" + ep.id + "' is empty");
  s.deltas.assign(static_cast<std::size_t>(s.t_sub - 1), 0);
  s.delta_probs.assign(s.deltas.size(), {0.0f, 0.0f, 0.0f});
  s.completion.assign(static_cast<std::size_t>(s.t_sub), 0.0f);
  const auto w = static_cast<std::size_t>(c.W);
  const int passes = miso_passes(s.t_sub, c.W);
  for (int j = 0; j < passes; ++j) {
    const auto win = data::make_window(ep, j * c.k, c.W, c.k);
    const auto out = inf.infer_windows({&ep}, {win.frame_indices});
    ++s.passes;
    const auto base = static_cast<std::size_t>(j);
    if (j == 0) {
      for (std::size_t i = 0; i < w; ++i) {
        if (win.pad_mask[i]) continue;
        s.completion[i] = out.completion[i];
        if (i + 1 < w && !win.pad_mask[i + 1]) push_delta(s, i, out.interval_probs[i]);
      }
    } else {
      s.completion[base + w - 1] = out.completion[w - 1];
      push_delta(s, base + w - 2, out.interval_probs[w - 2]);
    }
  }
  return s;
}

}  // namespace arm::model
