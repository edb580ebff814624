#include "arm/config.hpp"

#include <set>

#include "arm/binio.hpp"
#include "json.hpp"

namespace arm::cfg {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Reads known keys from one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("'" + path_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_spec(const json* j, const std::string& path, sim::DatasetSpec& s) {
  if (!j) return;
  Reader r(*j, path);
  r.get("expert", s.expert);
  r.get("sluggish", s.sluggish);
  r.get("error_recovery", s.error_recovery);
  r.get("failure", s.failure);
  r.get("dagger_fragment", s.dagger_fragment);
  r.finish();
}

ordered_json spec_json(const sim::DatasetSpec& s) {
  ordered_json j;
  j["expert"] = s.expert;
  j["sluggish"] = s.sluggish;
  j["error_recovery"] = s.error_recovery;
  j["failure"] = s.failure;
  j["dagger_fragment"] = s.dagger_fragment;
  return j;
}

void read_sim(const json& j, sim::SimConfig& c) {
  Reader r(j, "sim");
  r.get("num_stages", c.num_stages);
  r.get("max_steps", c.max_steps);
  r.get("advance_delta", c.advance_delta);
  r.get("regress_prob", c.regress_prob);
  r.get("regress_depth", c.regress_depth);
  r.get("stagnate_prob", c.stagnate_prob);
  r.get("d_vis", c.d_vis);
  r.get("d_state", c.d_state);
  r.get("noise_std", c.noise_std);
  r.get("projection_seed", c.projection_seed);
  r.get("hard_stages", c.hard_stages);
  r.get("hold_steps", c.hold_steps);
  r.finish();
}

void read_data(const json& j, DataConfig& c) {
  Reader r(j, "data");
  read_spec(r.child("train"), "data.train", c.train);
  read_spec(r.child("heldout"), "data.heldout", c.heldout);
  read_spec(r.child("policy"), "data.policy", c.policy);
  r.get("theta_stag", c.theta_stag);
  r.get("seed", c.seed);
  r.finish();
}

void read_arm(const json& j, ArmSection& c) {
  Reader r(j, "arm");
  auto& m = c.model;
  r.get("W", m.W);
  r.get("k", m.k);
  r.get("d", m.d);
  r.get("layers", m.layers);
  r.get("heads", m.heads);
  r.get("lambda_int", m.lambda_int);
  r.get("lambda_succ", m.lambda_succ);
  r.get("focal_gamma", m.focal_gamma);
  r.get("focal_alpha", m.focal_alpha);
  r.get("completion_eps", m.completion_eps);
  r.get("prob_floor", m.prob_floor);
  r.get("ln_eps", m.ln_eps);
  r.get("vocab", m.vocab);
  auto& t = c.train;
  r.get("epochs", t.epochs);
  r.get("batch", t.batch);
  r.get("lr", t.lr);
  r.get("weight_decay", t.weight_decay);
  r.get("warmup_frac", t.warmup_frac);
  r.get("clip", t.clip);
  r.get("pseudo_tau", c.pseudo_tau);
  r.get("use_pseudo_labels", c.use_pseudo_labels);
  r.finish();
}

void read_reconstruct(const json& j, ReconstructConfig& c) {
  Reader r(j, "reconstruct");
  r.get("tau_succ", c.tau_succ);
  r.get("batch", c.batch);
  r.finish();
}

void read_awbc(const json& j, AwbcSection& c) {
  Reader r(j, "awbc");
  auto& p = c.policy;
  r.get("hidden", p.hidden);
  r.get("H", p.H);
  r.get("epochs", p.epochs);
  r.get("batch", p.batch);
  r.get("lr", p.lr);
  r.get("weight_decay", p.weight_decay);
  r.get("clip", p.clip);
  r.get("eps", p.eps);
  std::string mode = awbc::to_string(p.mode);
  r.get("mode", mode);
  p.mode = awbc::mode_from_string(mode);
  r.get("global_stats", p.global_stats);
  r.get("eval_episodes", c.eval_episodes);
  r.get("eval_seed", c.eval_seed);
  r.finish();
}

void read_serve(const json& j, ServeConfig& c) {
  Reader r(j, "serve");
  r.get("host", c.host);
  r.get("port", c.port);
  r.get("lease_seconds", c.lease_seconds);
  r.get("ordering", c.ordering);
  r.get("split", c.split);
  r.get("static_dir", c.static_dir);
  r.get("pair_gap", c.pair_gap);
  r.finish();
}

void check_spec(const sim::DatasetSpec& s, const std::string& path) {
  for (int n : {s.expert, s.sluggish, s.error_recovery, s.failure, s.dagger_fragment}) {
    if (n < 0) throw ConfigError(path + " counts must be >= 0");
  }
}

}  // namespace

void RunConfig::resolve() {
  arm.model.d_vis = sim.d_vis;
  arm.model.d_state = sim.d_state;
  data.train.seed = mix(data.seed, 1);
  data.heldout.seed = mix(data.seed, 2);
  data.policy.seed = mix(data.seed, 3);
  arm.train.seed = mix(data.seed, 4);
  awbc.policy.seed = mix(data.seed, 5);
}

void RunConfig::validate() const {
  sim.validate();
  arm.model.validate();
  if (arm.train.epochs < 1 || arm.train.batch < 1) {
    throw ConfigError("arm.epochs and arm.batch must be >= 1");
  }
  if (!(arm.train.lr > 0.0)) throw ConfigError("arm.lr must be > 0");
  if (arm.train.warmup_frac < 0.0 || arm.train.warmup_frac > 1.0) {
    throw ConfigError("arm.warmup_frac must be in [0, 1]");
  }
  if (arm.pseudo_tau < 0.0 || arm.pseudo_tau > 1.0) {
    throw ConfigError("arm.pseudo_tau must be in [0, 1]");
  }
  if (!(data.theta_stag > 0.0)) throw ConfigError("data.theta_stag must be > 0");
  check_spec(data.train, "data.train");
  check_spec(data.heldout, "data.heldout");
  check_spec(data.policy, "data.policy");
  if (reconstruct.tau_succ < 0.0 || reconstruct.tau_succ > 1.0) {
    throw ConfigError("reconstruct.tau_succ must be in [0, 1]");
  }
  if (reconstruct.batch < 0) throw ConfigError("reconstruct.batch must be >= 0");
  awbc.policy.validate();
  if (awbc.eval_episodes < 1) throw ConfigError("awbc.eval_episodes must be >= 1");
  if (serve.port < 0 || serve.port > 65535) throw ConfigError("serve.port out of range");
  if (serve.lease_seconds < 1) throw ConfigError("serve.lease_seconds must be >= 1");
  if (serve.ordering != "round_robin" && serve.ordering != "sequential") {
    throw ConfigError("serve.ordering must be round_robin or sequential");
  }
  if (serve.split != "train" && serve.split != "heldout" && serve.split != "policy") {
    throw ConfigError("serve.split must be train, heldout or policy");
  }
  if (serve.pair_gap != 0 && serve.pair_gap != arm.model.k) {
    throw ConfigError("serve.pair_gap must be 0 or arm.k; train-arm only reads k-spaced labels");
  }
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "config");
  if (auto* s = r.child("sim")) read_sim(*s, c.sim);
  if (auto* s = r.child("data")) read_data(*s, c.data);
  if (auto* s = r.child("arm")) read_arm(*s, c.arm);
  if (auto* s = r.child("reconstruct")) read_reconstruct(*s, c.reconstruct);
  if (auto* s = r.child("awbc")) read_awbc(*s, c.awbc);
  if (auto* s = r.child("serve")) read_serve(*s, c.serve);
  r.finish();
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return config_from_json(io::read_file(path));
}

std::string config_to_json(const RunConfig& c) {
  ordered_json j;
  auto& s = j["sim"];
  s["num_stages"] = c.sim.num_stages;
  s["max_steps"] = c.sim.max_steps;
  s["advance_delta"] = c.sim.advance_delta;
  s["regress_prob"] = c.sim.regress_prob;
  s["regress_depth"] = c.sim.regress_depth;
  s["stagnate_prob"] = c.sim.stagnate_prob;
  s["d_vis"] = c.sim.d_vis;
  s["d_state"] = c.sim.d_state;
  s["noise_std"] = c.sim.noise_std;
  s["projection_seed"] = c.sim.projection_seed;
  s["hard_stages"] = c.sim.hard_stages;
  s["hold_steps"] = c.sim.hold_steps;

  auto& d = j["data"];
  d["train"] = spec_json(c.data.train);
  d["heldout"] = spec_json(c.data.heldout);
  d["policy"] = spec_json(c.data.policy);
  d["theta_stag"] = c.data.theta_stag;
  d["seed"] = c.data.seed;

  auto& a = j["arm"];
  const auto& m = c.arm.model;
  a["W"] = m.W;
  a["k"] = m.k;
  a["d"] = m.d;
  a["layers"] = m.layers;
  a["heads"] = m.heads;
  a["lambda_int"] = m.lambda_int;
  a["lambda_succ"] = m.lambda_succ;
  a["focal_gamma"] = m.focal_gamma;
  a["focal_alpha"] = m.focal_alpha;
  a["completion_eps"] = m.completion_eps;
  a["prob_floor"] = m.prob_floor;
  a["ln_eps"] = m.ln_eps;
  a["vocab"] = m.vocab;
  a["epochs"] = c.arm.train.epochs;
  a["batch"] = c.arm.train.batch;
  a["lr"] = c.arm.train.lr;
  a["weight_decay"] = c.arm.train.weight_decay;
  a["warmup_frac"] = c.arm.train.warmup_frac;
  a["clip"] = c.arm.train.clip;
  a["pseudo_tau"] = c.arm.pseudo_tau;
  a["use_pseudo_labels"] = c.arm.use_pseudo_labels;

  auto& r = j["reconstruct"];
  r["tau_succ"] = c.reconstruct.tau_succ;
  r["batch"] = c.reconstruct.batch;

  auto& w = j["awbc"];
  const auto& p = c.awbc.policy;
  w["hidden"] = p.hidden;
  w["H"] = p.H;
  w["epochs"] = p.epochs;
  w["batch"] = p.batch;
  w["lr"] = p.lr;
  w["weight_decay"] = p.weight_decay;
  w["clip"] = p.clip;
  w["eps"] = p.eps;
  w["mode"] = awbc::to_string(p.mode);
  w["global_stats"] = p.global_stats;
  w["eval_episodes"] = c.awbc.eval_episodes;
  w["eval_seed"] = c.awbc.eval_seed;

  auto& v = j["serve"];
  v["host"] = c.serve.host;
  v["port"] = c.serve.port;
  v["lease_seconds"] = c.serve.lease_seconds;
  v["ordering"] = c.serve.ordering;
  v["split"] = c.serve.split;
  v["static_dir"] = c.serve.static_dir;
  v["pair_gap"] = c.serve.pair_gap;
  return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
  return io::fnv1a_hex(config_to_json(config));
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.data.seed = seed;
  config.resolve();
}

}  // namespace arm::cfg
