#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "arm/annosvc.hpp"
#include "arm/armmodel.hpp"
#include "arm/awbc.hpp"
#include "arm/binio.hpp"
#include "arm/labeling.hpp"
#include "arm/reconstruct.hpp"
#include "arm/trajdata.hpp"
#include "json.hpp"

namespace arm::pipe {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* const kSplits[] = {"train", "heldout", "policy"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void require(const Run& run, const std::string& rel, const std::string& producer) {
  if (!fs::exists(run.path(rel))) {
    throw NotFoundError("missing '" + run.path(rel).string() + "'; run `arm " + producer +
                        "` first");
  }
}

void write_json(const Run& run, const std::string& rel, const ordered_json& j) {
  io::write_file(run.path(rel).string(), j.dump(2) + "\n");
}

json read_json(const Run& run, const std::string& rel, const std::string& producer) {
  require(run, rel, producer);
  return json::parse(io::read_file(run.path(rel).string()));
}

const sim::DatasetSpec& spec_of(const cfg::RunConfig& c, const std::string& split) {
  if (split == "train") return c.data.train;
  if (split == "heldout") return c.data.heldout;
  if (split == "policy") return c.data.policy;
  throw ConfigError("unknown split '" + split + "' (train, heldout, policy)");
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

std::vector<sim::Episode> load_split(const Run& run, const std::string& split) {
  spec_of(run.config(), split);
  require(run, split_dir(split) + "/manifest.jsonl", "gen-data");
  return data::EpisodeStore(run.path(split_dir(split)).string()).read_all();
}

std::vector<double> gt_curve(const sim::Episode& ep) {
  std::vector<double> p;
  p.reserve(ep.frames.size());
  for (const auto& f : ep.frames) {
    if (!f.gt_progress) throw ValidationError("episode '" + ep.id + "' lacks gt progress");
    p.push_back(std::clamp(*f.gt_progress, 0.0, 1.0));
  }
  return p;
}

double mean_length(const std::vector<sim::Episode>& eps) {
  double s = 0.0;
  for (const auto& e : eps) s += e.length();
  return eps.empty() ? 0.0 : s / static_cast<double>(eps.size());
}

struct StoredCurve {
  recon::ProgressCurve curve;
  std::vector<float> completion;
  std::vector<int> deltas;
};

std::map<std::string, StoredCurve> load_curves(const Run& run, const std::string& split) {
  const auto rel = "curves/" + split + ".jsonl";
  require(run, rel, "reconstruct");
  std::map<std::string, StoredCurve> out;
  std::istringstream in(io::read_file(run.path(rel).string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    StoredCurve s;
    s.curve.episode_id = j.at("episode_id");
    s.curve.stride = j.at("stride");
    s.curve.P = j.at("P").get<std::vector<double>>();
    s.curve.anchored = j.at("anchored");
    if (!j.at("anchor_index").is_null()) s.curve.anchor_index = j.at("anchor_index").get<int>();
    s.completion = j.at("completion").get<std::vector<float>>();
    s.deltas = j.at("deltas").get<std::vector<int>>();
    out[s.curve.episode_id] = std::move(s);
  }
  return out;
}

// Full-rate progress per policy episode from the chosen source.
std::vector<std::vector<double>> progress_of(const Run& run,
                                             const std::vector<sim::Episode>& eps,
                                             const std::string& curves) {
  std::vector<std::vector<double>> out;
  if (curves == "oracle") {
    for (const auto& e : eps) out.push_back(gt_curve(e));
    return out;
  }
  if (curves != "arm") throw ConfigError("curves must be 'arm' or 'oracle', got '" + curves + "'");
  const auto stored = load_curves(run, "policy");
  for (const auto& e : eps) {
    auto it = stored.find(e.id);
    if (it == stored.end()) {
      throw NotFoundError("no reconstructed curve for '" + e.id + "'; rerun `arm reconstruct`");
    }
    out.push_back(recon::upsample(it->second.curve, e.length()));
  }
  return out;
}

std::string curve_line(const recon::ProgressCurve& c, const model::EpisodeScores& s) {
  ordered_json j;
  j["episode_id"] = c.episode_id;
  j["stride"] = c.stride;
  j["anchored"] = c.anchored;
  j["anchor_index"] = c.anchor_index ? json(*c.anchor_index) : json(nullptr);
  j["P"] = c.P;
  j["completion"] = s.completion;
  j["deltas"] = s.deltas;
  return j.dump();
}

}  // namespace

Run::Run(cfg::RunConfig config, const fs::path& out_root) : config_(std::move(config)) {
  config_.resolve();
  config_.validate();
  dir_ = out_root / ("run-" + cfg::config_hash(config_));
  fs::create_directories(dir_);
  io::write_file(path("config.json").string(), cfg::config_to_json(config_));
}

void Run::log(const std::string& stage, const std::string& message) const {
  const auto line = "[" + stage + "] " + message;
  io::append_line(path("run.log").string(), line);
  if (!quiet) std::cerr << line << "\n";
}

std::string split_dir(const std::string& split) { return "data/" + split; }

std::string policy_name(awbc::Mode mode, const std::string& curves) {
  switch (mode) {
    case awbc::Mode::none: return "bc";
    case awbc::Mode::statistical: return "awbc-" + curves;
    case awbc::Mode::threshold: return "thr-" + curves;
  }
  return "policy";
}

void gen_data(const Run& run) {
  const auto& c = run.config();
  ordered_json m;
  for (const std::string split : kSplits) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = run.path(split_dir(split));
    fs::remove_all(dir);
    data::EpisodeStore store(dir.string());
    const auto eps = sim::gen_dataset(c.sim, spec_of(c, split), split);
    std::map<std::string, int> outcomes;
    std::size_t frames = 0;
    for (const auto& ep : eps) {
      store.write_episode(ep);
      outcomes[sim::to_string(ep.outcome)] += 1;
      frames += ep.frames.size();
    }
    auto& s = m[split];
    s["episodes"] = eps.size();
    s["frames"] = frames;
    s["mean_length"] = mean_length(eps);
    s["outcomes"] = outcomes;
    s["spec"] = spec_json(spec_of(c, split));
    run.log("gen-data", split + ": " + std::to_string(eps.size()) + " episodes, " +
                            std::to_string(frames) + " frames in " +
                            fmt("%.2f s", seconds_since(t0)));
  }
  write_json(run, "metrics/data.json", m);
}

void label_oracle(const Run& run) {
  const auto& c = run.config();
  const auto eps = load_split(run, "train");
  const auto path = run.path("labels.jsonl").string();
  std::vector<lab::TriStateLabel> out;
  for (const auto& l : lab::read_labels(path)) {
    if (lab::annotator_class(l.annotator) != lab::AnnotatorClass::oracle) out.push_back(l);
  }
  const auto kept = out.size();
  std::map<std::string, int> by_y;
  for (const auto& ep : eps) {
    for (const auto& l : lab::label_episode_oracle(ep, c.arm.model.k, c.data.theta_stag)) {
      by_y[std::to_string(l.y)] += 1;
      out.push_back(l);
    }
  }
  lab::write_labels(path, out);
  ordered_json m;
  m["episodes"] = eps.size();
  m["oracle_labels"] = out.size() - kept;
  m["other_labels_kept"] = kept;
  m["by_y"] = by_y;
  m["theta_stag"] = c.data.theta_stag;
  write_json(run, "metrics/labels.json", m);
  run.log("label-oracle", std::to_string(out.size() - kept) + " oracle labels, " +
                              std::to_string(kept) + " other labels kept");
}

void train_arm(const Run& run) {
  const auto& c = run.config();
  const auto t0 = std::chrono::steady_clock::now();
  require(run, split_dir("train") + "/manifest.jsonl", "gen-data");
  data::EpisodeStore store(run.path(split_dir("train")).string());
  const auto eps = store.read_all();
  require(run, "labels.jsonl", "label-oracle");
  auto labels = lab::read_labels(run.path("labels.jsonl").string());
  std::size_t pseudo = 0;
  if (c.arm.use_pseudo_labels) {
    require(run, "pseudo_labels.jsonl", "pseudo-label");
    for (const auto& l : lab::read_labels(run.path("pseudo_labels.jsonl").string())) {
      if (!store.contains(l.episode_id)) continue;
      labels.push_back(l);
      ++pseudo;
    }
  }
  const auto index = data::build_label_index(labels, store, c.arm.model.k);
  auto result = model::train(c.arm.model, c.arm.train, eps, index);
  const auto ckpt = run.path("arm/model.ckpt").string();
  model::save_model(ckpt, c.arm.model, result.params);
  io::write_file(run.path("arm/trace.csv").string(), model::trace_csv(result.trace));
  const auto loaded = model::load_model(ckpt);
  const auto cw = model::class_weights(index);
  ordered_json m;
  m["checkpoint_id"] = loaded.checkpoint_id;
  m["episodes"] = eps.size();
  m["labeled_intervals"] = index.size();
  m["pseudo_labels_used"] = pseudo;
  m["class_weights"] = cw;
  m["steps"] = result.trace.size();
  const auto& last = result.trace.back();
  m["final"] = {{"L_ARM", last.total}, {"L_int", last.interval}, {"L_succ", last.completion}};
  write_json(run, "metrics/train_arm.json", m);
  run.log("train-arm", std::to_string(result.trace.size()) + " steps, final L_ARM " +
                           fmt("%.5f", last.total) + ", " + fmt("%.1f s", seconds_since(t0)));
}

void pseudo_label(const Run& run, const std::string& split) {
  const auto& c = run.config();
  const auto eps = load_split(run, split);
  require(run, "arm/model.ckpt", "train-arm");
  const auto m = model::load_model(run.path("arm/model.ckpt").string());
  model::Inference inf(m);
  const auto labels = model::pseudo_label(inf, m.checkpoint_id, eps, c.arm.pseudo_tau, 0);
  lab::write_labels(run.path("pseudo_labels.jsonl").string(), labels);
  std::size_t intervals = 0, agree = 0, compared = 0;
  std::map<std::string, const sim::Episode*> by_id;
  for (const auto& e : eps) {
    by_id[e.id] = &e;
    intervals += static_cast<std::size_t>((e.length() - 1) / c.arm.model.k);
  }
  for (const auto& l : labels) {
    const auto& ep = *by_id.at(l.episode_id);
    const auto& a = ep.frames[static_cast<std::size_t>(l.t_a)].gt_progress;
    const auto& b = ep.frames[static_cast<std::size_t>(l.t_b)].gt_progress;
    if (!a || !b) continue;
    ++compared;
    agree += lab::oracle_tristate(std::clamp(*a, 0.0, 1.0), std::clamp(*b, 0.0, 1.0),
                                  c.data.theta_stag) == l.y;
  }
  ordered_json j;
  j["split"] = split;
  j["tau"] = c.arm.pseudo_tau;
  j["checkpoint_id"] = m.checkpoint_id;
  j["intervals"] = intervals;
  j["emitted"] = labels.size();
  j["coverage"] = intervals ? double(labels.size()) / double(intervals) : 0.0;
  j["oracle_agreement"] = compared ? double(agree) / double(compared) : 0.0;
  write_json(run, "metrics/pseudo_label.json", j);
  run.log("pseudo-label", std::to_string(labels.size()) + " of " + std::to_string(intervals) +
                              " intervals, agreement " +
                              fmt("%.4f", j["oracle_agreement"].get<double>()));
}

void reconstruct(const Run& run) {
  const auto& c = run.config();
  require(run, "arm/model.ckpt", "train-arm");
  const auto m = model::load_model(run.path("arm/model.ckpt").string());
  model::Inference inf(m);
  const int k = m.config.k;
  const double tau = c.reconstruct.tau_succ;
  ordered_json meta;
  for (const std::string split : {"heldout", "policy"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto eps = load_split(run, split);
    std::vector<model::EpisodeScores> scores;
    std::vector<recon::ProgressCurve> first;
    for (const auto& ep : eps) {
      scores.push_back(
          model::infer_episode_mimo(inf, ep, static_cast<std::size_t>(c.reconstruct.batch)));
      first.push_back(recon::curve_from_scores(scores.back(), ep.id, k, tau, 0.0));
    }
    double delta_bar = 0.0;
    int anchored = 0;
    for (const auto& cv : first) anchored += cv.anchored ? 1 : 0;
    if (anchored > 0) {
      delta_bar = recon::estimate_delta_bar(first);
    } else {
      double t = 0.0;
      for (const auto& s : scores) t += std::max(1, s.t_sub - 1);
      delta_bar = static_cast<double>(scores.size()) / t;
      run.log("reconstruct", split + ": no anchored episodes; delta_bar from mean length");
    }
    const auto dir = run.path("curves/" + split);
    fs::remove_all(dir);
    std::string lines;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const auto cv = recon::curve_from_scores(scores[i], eps[i].id, k, tau, delta_bar);
      lines += curve_line(cv, scores[i]) + "\n";
      io::write_file((dir / (eps[i].id + ".csv")).string(),
                     recon::curve_csv(cv, eps[i], scores[i].completion));
    }
    io::write_file(run.path("curves/" + split + ".jsonl").string(), lines);
    auto& s = meta[split];
    s["episodes"] = eps.size();
    s["anchored"] = anchored;
    s["delta_bar"] = delta_bar;
    run.log("reconstruct", split + ": " + std::to_string(eps.size()) + " curves, " +
                               std::to_string(anchored) + " anchored, " +
                               fmt("%.2f s", seconds_since(t0)));
  }
  meta["checkpoint_id"] = m.checkpoint_id;
  meta["tau_succ"] = tau;
  write_json(run, "metrics/reconstruct.json", meta);
}

void eval_reward(const Run& run) {
  const auto& c = run.config();
  const auto eps = load_split(run, "heldout");
  const auto curves = load_curves(run, "heldout");
  const int k = c.arm.model.k;
  std::size_t total = 0, correct = 0;
  std::array<std::array<int, 3>, 3> confusion{};
  std::vector<std::vector<float>> completion;
  std::vector<sim::Outcome> outcomes;
  double mse = 0.0, oracle_mse = 0.0;
  const double oracle_db =
      recon::oracle_delta_bar(eps, k, c.data.theta_stag, c.arm.model.completion_eps);
  for (const auto& ep : eps) {
    const auto& sc = curves.at(ep.id);
    const auto od = recon::oracle_deltas(ep, k, c.data.theta_stag);
    if (od.size() != sc.deltas.size()) {
      throw ValidationError("stored curve for '" + ep.id + "' does not match the episode");
    }
    for (std::size_t i = 0; i < od.size(); ++i) {
      ++total;
      correct += od[i] == sc.deltas[i] ? 1 : 0;
      confusion[static_cast<std::size_t>(od[i] + 1)][static_cast<std::size_t>(sc.deltas[i] + 1)]++;
    }
    completion.push_back(sc.completion);
    outcomes.push_back(ep.outcome);
    mse += recon::eval_mse(sc.curve, ep);
    const auto oc = recon::oracle_curve(ep, k, c.data.theta_stag, c.arm.model.completion_eps,
                                        oracle_db);
    oracle_mse += recon::eval_mse(oc, ep);
  }
  const auto sid = recon::eval_success_id(completion, outcomes, c.reconstruct.tau_succ);
  ordered_json m;
  m["episodes"] = eps.size();
  m["intervals"] = total;
  m["interval_accuracy"] = total ? double(correct) / double(total) : 0.0;
  m["confusion"] = confusion;
  m["se"] = {{"correct", sid.se_correct}, {"total", sid.se_total}, {"accuracy", sid.se_accuracy()}};
  m["fe"] = {{"correct", sid.fe_correct}, {"total", sid.fe_total}, {"accuracy", sid.fe_accuracy()}};
  m["mse"] = {{"arm", eps.empty() ? 0.0 : mse / double(eps.size())},
              {"oracle", eps.empty() ? 0.0 : oracle_mse / double(eps.size())}};
  m["tau_succ"] = c.reconstruct.tau_succ;
  write_json(run, "metrics/eval_reward.json", m);
  std::cout << "MSE " << fmt("%.6f", m["mse"]["arm"].get<double>()) << "  interval accuracy "
            << fmt("%.4f", m["interval_accuracy"].get<double>()) << "  SE " << sid.se_correct
            << "/" << sid.se_total << "  FE " << sid.fe_correct << "/" << sid.fe_total << "\n";
}

void weights(const Run& run, const std::string& curves) {
  const auto& c = run.config();
  const auto eps = load_split(run, "policy");
  const auto progress = progress_of(run, eps, curves);
  const double L_bar = mean_length(eps);
  const int H = c.awbc.policy.H;
  std::vector<std::pair<std::string, awbc::Gain>> rows;
  std::vector<double> g;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    for (const auto& gain : awbc::gains(progress[i], H, L_bar).gains) {
      rows.emplace_back(eps[i].id, gain);
      g.push_back(gain.dG);
    }
  }
  const auto stat = awbc::weights_statistical(g, c.awbc.policy.eps);
  const auto thr = awbc::weights_threshold(g);
  std::ostringstream out;
  out.precision(9);
  out << "episode_id,t,dG,w_statistical,w_threshold\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i].first << ',' << rows[i].second.t << ',' << rows[i].second.dG << ','
        << stat.w[i] << ',' << thr[i] << '\n';
  }
  io::write_file(run.path("weights/" + curves + ".csv").string(), out.str());
  std::size_t zero = 0;
  for (double w : stat.w) zero += w == 0.0 ? 1 : 0;
  ordered_json m;
  m["curves"] = curves;
  m["chunks"] = rows.size();
  m["L_bar"] = L_bar;
  m["mu"] = stat.mu;
  m["sigma"] = stat.sigma;
  m["zero_weight_fraction"] = rows.empty() ? 0.0 : double(zero) / double(rows.size());
  write_json(run, "metrics/weights_" + curves + ".json", m);
  run.log("weights", curves + ": " + std::to_string(rows.size()) + " chunks");
}

void train_policy(const Run& run, awbc::Mode mode, const std::string& curves) {
  const auto& c = run.config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto eps = load_split(run, "policy");
  const auto progress = progress_of(run, eps, curves);
  const double L_bar = mean_length(eps);
  auto pc = c.awbc.policy;
  pc.mode = mode;
  std::vector<awbc::Chunk> chunks;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    auto ch = awbc::episode_chunks(eps[i], progress[i], pc.H, L_bar, c.sim.num_stages);
    chunks.insert(chunks.end(), std::make_move_iterator(ch.begin()),
                  std::make_move_iterator(ch.end()));
  }
  auto result = awbc::train_policy(pc, chunks);
  const auto name = policy_name(mode, curves);
  const int in_dim = awbc::feature_dim(c.sim.d_vis, c.sim.num_stages);
  awbc::save_policy(run.path("policy/" + name + ".ckpt").string(), pc, in_dim, result.params);
  double mw = 0.0;
  for (const auto& t : result.trace) mw += t.mean_weight;
  ordered_json m;
  m["policy"] = name;
  m["mode"] = awbc::to_string(mode);
  m["curves"] = curves;
  m["chunks"] = chunks.size();
  m["steps"] = result.trace.size();
  m["final_loss"] = result.trace.back().loss;
  m["mean_weight"] = result.trace.empty() ? 0.0 : mw / double(result.trace.size());
  write_json(run, "metrics/train_policy_" + name + ".json", m);
  run.log("train-policy", name + ": " + std::to_string(result.trace.size()) + " steps, " +
                              fmt("%.1f s", seconds_since(t0)));
}

void eval_policy(const Run& run, const std::string& name) {
  const auto& c = run.config();
  const auto rel = "policy/" + name + ".ckpt";
  require(run, rel, "train-policy");
  const auto p = awbc::load_policy(run.path(rel).string());
  const auto r = awbc::eval_policy(p.params, p.config, c.sim, c.awbc.eval_episodes,
                                   c.awbc.eval_seed);
  ordered_json m;
  m["policy"] = name;
  m["mode"] = awbc::to_string(p.config.mode);
  m["success_rate"] = r.success_rate;
  m["successes"] = r.successes;
  m["episodes"] = r.episodes;
  m["mean_steps"] = r.mean_steps;
  m["seeds"] = {{"base", c.awbc.eval_seed}, {"count", c.awbc.eval_episodes}};
  m["dataset"] = spec_json(c.data.policy);
  write_json(run, "metrics/policy_" + name + ".json", m);
  std::cout << name << ": success " << fmt("%.3f", r.success_rate) << " ("
            << r.successes << "/" << r.episodes << "), mean steps "
            << fmt("%.1f", r.mean_steps) << "\n";
}

void bench_mimo(const Run& run, int frames, int repeats) {
  const auto& c = run.config();
  if (frames < 2 || repeats < 1) throw UsageError("bench-mimo needs frames >= 2, repeats >= 1");
  model::LoadedModel m;
  if (fs::exists(run.path("arm/model.ckpt"))) {
    m = model::load_model(run.path("arm/model.ckpt").string());
  } else {
    m = model::model_from_params(c.arm.model, model::init_params(c.arm.model, 1));
    run.log("bench-mimo", "no trained checkpoint; timing a freshly initialized model");
  }
  // Every frame is a model step.
  m.config.k = 1;
  model::Inference inf(m);
  sim::SimConfig env = c.sim;
  env.max_steps = std::max(env.max_steps, frames);
  auto ep = sim::gen_episode(env, sim::Source::sluggish, 1);
  while (ep.length() < frames) ep.frames.push_back(ep.frames.back());
  ep.frames.resize(static_cast<std::size_t>(frames));
  auto time_it = [&](auto&& f) {
    f();  // warm-up
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      f();
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  int mimo_passes = 0, miso_passes = 0;
  const double t_mimo = time_it([&] { mimo_passes = model::infer_episode_mimo(inf, ep, 1).passes; });
  const double t_batched = time_it([&] { model::infer_episode_mimo(inf, ep, 0); });
  const double t_miso = time_it([&] { miso_passes = model::infer_episode_miso(inf, ep).passes; });
  ordered_json j;
  j["frames"] = frames;
  j["t_sub"] = frames;
  j["W"] = m.config.W;
  j["passes"] = {{"mimo", mimo_passes}, {"miso", miso_passes}};
  j["pass_ratio"] = double(miso_passes) / double(mimo_passes);
  j["seconds"] = {{"mimo", t_mimo}, {"mimo_batched", t_batched}, {"miso", t_miso}};
  j["wall_ratio"] = t_miso / t_mimo;
  j["it_per_s"] = {{"mimo", 1.0 / t_mimo}, {"miso", 1.0 / t_miso}};
  write_json(run, "metrics/bench_mimo.json", j);
  std::cout << "passes MIMO " << mimo_passes << " MISO " << miso_passes << " (ratio "
            << fmt("%.2f", j["pass_ratio"].get<double>()) << "), wall-clock MIMO "
            << fmt("%.4f s", t_mimo) << " MISO " << fmt("%.4f s", t_miso) << " (speedup "
            << fmt("%.2fx", j["wall_ratio"].get<double>()) << ")\n";
}

void report(const Run& run) {
  const auto& c = run.config();
  const auto er = read_json(run, "metrics/eval_reward.json", "eval-reward");
  std::ostringstream md;
  ordered_json summary;
  summary["config_hash"] = cfg::config_hash(c);
  summary["reward_model"] = er;
  md << "# ARM run report\n\n";
  md << "Config hash `" << cfg::config_hash(c) << "`, data seed " << c.data.seed << ".\n\n";
  md << "## Reward model (held-out)\n\n";
  md << "| metric | value |\n|---|---|\n";
  md << "| reconstruction MSE, ARM | " << fmt("%.6f", er["mse"]["arm"].get<double>()) << " |\n";
  md << "| reconstruction MSE, oracle labels | "
     << fmt("%.6f", er["mse"]["oracle"].get<double>()) << " |\n";
  md << "| interval accuracy | " << fmt("%.2f%%", 100 * er["interval_accuracy"].get<double>())
     << " |\n";
  for (const char* key : {"se", "fe"}) {
    const auto& s = er[key];
    md << "| " << (std::string(key) == "se" ? "SE" : "FE") << " accuracy | "
       << fmt("%.1f", 100 * s["accuracy"].get<double>()) << " (" << s["correct"].get<int>()
       << "/" << s["total"].get<int>() << ") |\n";
  }

  std::vector<std::pair<std::string, std::string>> policies{
      {"bc", "BC"}, {"awbc-oracle", "AW-BC (oracle curves)"}, {"awbc-arm", "AW-BC (ARM curves)"},
      {"thr-oracle", "threshold (oracle curves)"}, {"thr-arm", "threshold (ARM curves)"}};
  bool header = false;
  for (const auto& [name, label] : policies) {
    const auto rel = "metrics/policy_" + name + ".json";
    if (!fs::exists(run.path(rel))) continue;
    const auto p = read_json(run, rel, "eval-policy");
    if (!header) {
      md << "\n## Policy (" << c.awbc.eval_episodes << " seeded episodes)\n\n";
      md << "| policy | success rate | mean steps to success |\n|---|---|---|\n";
      header = true;
    }
    md << "| " << label << " | " << fmt("%.1f%%", 100 * p["success_rate"].get<double>())
       << " | " << fmt("%.1f", p["mean_steps"].get<double>()) << " |\n";
    summary["policies"][name] = p;
  }

  md << "\n## Forward passes per episode (W = " << c.arm.model.W << ")\n\n";
  md << "| T_sub | MIMO | MISO | ratio |\n|---|---|---|---|\n";
  for (int t : {100, 200, 400, 800}) {
    const int a = model::mimo_passes(t, c.arm.model.W);
    const int b = model::miso_passes(t, c.arm.model.W);
    md << "| " << t << " | " << a << " | " << b << " | " << fmt("%.2f", double(b) / a) << " |\n";
  }
  if (fs::exists(run.path("metrics/bench_mimo.json"))) {
    const auto b = read_json(run, "metrics/bench_mimo.json", "bench-mimo");
    md << "\nMeasured on a " << b["frames"].get<int>()
       << "-frame episode (environment dependent): MIMO "
       << fmt("%.1f", b["it_per_s"]["mimo"].get<double>()) << " it/s, MISO "
       << fmt("%.1f", b["it_per_s"]["miso"].get<double>()) << " it/s, speedup "
       << fmt("%.2fx", b["wall_ratio"].get<double>()) << ".\n";
  }
  io::write_file(run.path("report.md").string(), md.str());
  write_json(run, "metrics/summary.json", summary);
  run.log("report", "wrote " + run.path("report.md").string());
}

void serve(const Run& run) {
  const auto& c = run.config();
  const auto split = c.serve.split;
  require(run, split_dir(split) + "/manifest.jsonl", "gen-data");
  data::EpisodeStore store(run.path(split_dir(split)).string());
  anno::ServiceOptions opt;
  opt.host = c.serve.host;
  opt.port = c.serve.port;
  opt.static_dir = c.serve.static_dir;
  opt.board.gap = c.serve.pair_gap > 0 ? c.serve.pair_gap : c.arm.model.k;
  opt.board.lease_seconds = c.serve.lease_seconds;
  opt.board.ordering = anno::ordering_from_string(c.serve.ordering);
  anno::Service svc(store, c.sim, run.path("labels.jsonl").string(), opt);
  run.log("serve", "listening on http://" + opt.host + ":" + std::to_string(opt.port));
  svc.run();
}

}  // namespace arm::pipe
