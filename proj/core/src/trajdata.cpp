#include "arm/trajdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "arm/binio.hpp"
#include "json.hpp"

namespace arm::data {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

EpisodeMeta meta_of(const sim::Episode& ep) {
  EpisodeMeta m;
  m.id = ep.id;
  m.instruction_id = ep.instruction_id;
  m.source = ep.source;
  m.outcome = ep.outcome;
  m.length = ep.length();
  if (!ep.frames.empty()) {
    m.d_vis = static_cast<int>(ep.frames.front().vis_feat.size());
    m.d_state = static_cast<int>(ep.frames.front().proprio.size());
  }
  return m;
}

namespace {

ojson meta_to_json(const EpisodeMeta& m) {
  ojson j;
  j["id"] = m.id;
  j["instruction_id"] = m.instruction_id;
  j["source"] = sim::to_string(m.source);
  j["outcome"] = sim::to_string(m.outcome);
  j["length"] = m.length;
  j["d_vis"] = m.d_vis;
  j["d_state"] = m.d_state;
  return j;
}

EpisodeMeta meta_from_json(const ojson& j) {
  EpisodeMeta m;
  m.id = j.at("id").get<std::string>();
  m.instruction_id = j.at("instruction_id").get<int>();
  m.source = sim::source_from_string(j.at("source").get<std::string>());
  m.outcome = sim::outcome_from_string(j.at("outcome").get<std::string>());
  m.length = j.at("length").get<int>();
  m.d_vis = j.at("d_vis").get<int>();
  m.d_state = j.at("d_state").get<int>();
  return m;
}

void check_id(const std::string& id) {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
    throw ValidationError("invalid episode id '" + id + "'");
  }
}

}  // namespace

std::string encode_frames(const sim::Episode& ep) {
  const auto meta = meta_of(ep);
  std::string out;
  out.reserve(ep.frames.size() * static_cast<std::size_t>(meta.d_vis + meta.d_state + 2) * 4);
  for (const auto& f : ep.frames) {
    if (static_cast<int>(f.vis_feat.size()) != meta.d_vis ||
        static_cast<int>(f.proprio.size()) != meta.d_state) {
      throw ShapeError("episode '" + ep.id + "' has frames of differing width");
    }
    for (float v : f.vis_feat) io::put_f32(out, v);
    for (float v : f.proprio) io::put_f32(out, v);
    io::put_f32(out, static_cast<float>(static_cast<int>(f.action)));
    io::put_f32(out, f.gt_progress ? static_cast<float>(*f.gt_progress)
                                   : std::numeric_limits<float>::quiet_NaN());
  }
  return out;
}

std::vector<sim::Frame> decode_frames(std::string_view bytes, const EpisodeMeta& meta) {
  const std::size_t row = static_cast<std::size_t>(meta.d_vis + meta.d_state + 2) * 4;
  if (bytes.size() != row * static_cast<std::size_t>(meta.length)) {
    throw StorageError("episode '" + meta.id + "' blob has " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(row * meta.length));
  }
  io::Reader r(bytes);
  std::vector<sim::Frame> frames(static_cast<std::size_t>(meta.length));
  for (int t = 0; t < meta.length; ++t) {
    auto& f = frames[static_cast<std::size_t>(t)];
    f.t = t;
    f.vis_feat.resize(static_cast<std::size_t>(meta.d_vis));
    for (auto& v : f.vis_feat) v = r.f32();
    f.proprio.resize(static_cast<std::size_t>(meta.d_state));
    for (auto& v : f.proprio) v = r.f32();
    const float a = r.f32();
    if (!(a == 0.0f || a == 1.0f || a == 2.0f)) {
      throw StorageError("episode '" + meta.id + "' has invalid action id");
    }
    f.action = static_cast<sim::Action>(static_cast<int>(a));
    const float gt = r.f32();
    if (!std::isnan(gt)) f.gt_progress = static_cast<double>(gt);
  }
  return frames;
}

sim::Episode storage_rounded(const sim::Episode& ep) {
  sim::Episode out = ep;
  for (auto& f : out.frames) {
    if (f.gt_progress) f.gt_progress = static_cast<double>(static_cast<float>(*f.gt_progress));
  }
  return out;
}

EpisodeStore::EpisodeStore(std::string root) : root_(std::move(root)) {
  const auto manifest = fs::path(root_) / "manifest.jsonl";
  if (!fs::exists(manifest)) return;
  std::ifstream in(manifest);
  if (!in) throw StorageError("cannot read '" + manifest.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpisodeMeta m;
    try {
      m = meta_from_json(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw StorageError("malformed manifest record in '" + manifest.string() + "': " + e.what());
    }
    index_[m.id] = metas_.size();
    metas_.push_back(std::move(m));
  }
}

void EpisodeStore::write_episode(const sim::Episode& ep) {
  check_id(ep.id);
  if (contains(ep.id)) throw ConflictError("episode '" + ep.id + "' already stored");
  const auto meta = meta_of(ep);
  io::write_file((fs::path(root_) / (ep.id + ".bin")).string(), encode_frames(ep));
  io::append_line((fs::path(root_) / "manifest.jsonl").string(), meta_to_json(meta).dump());
  index_[meta.id] = metas_.size();
  metas_.push_back(meta);
}

const EpisodeMeta& EpisodeStore::meta(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw NotFoundError("episode '" + id + "' not in store " + root_);
  return metas_[it->second];
}

sim::Episode EpisodeStore::read_episode(const std::string& id) const {
  const auto& m = meta(id);
  sim::Episode ep;
  ep.id = m.id;
  ep.instruction_id = m.instruction_id;
  ep.source = m.source;
  ep.outcome = m.outcome;
  ep.frames = decode_frames(io::read_file((fs::path(root_) / (id + ".bin")).string()), m);
  return ep;
}

std::vector<sim::Episode> EpisodeStore::read_all() const {
  std::vector<sim::Episode> out;
  out.reserve(metas_.size());
  for (const auto& m : metas_) out.push_back(read_episode(m.id));
  return out;
}

int WindowSample::real_count() const {
  int n = 0;
  for (bool p : pad_mask) n += p ? 0 : 1;
  return n;
}

int subsampled_length(int length, int k) {
  if (k < 1) throw ConfigError("stride k must be >= 1");
  if (length < 1) return 0;
  return (length - 1) / k + 1;
}

int tile_count(int t_sub, int W) {
  if (W < 2) throw ConfigError("window W must be >= 2");
  return (t_sub + W - 1) / W;
}

WindowSample make_window(const sim::Episode& ep, int start, int W, int k) {
  if (W < 2) throw ConfigError("window W must be >= 2");
  if (k < 1) throw ConfigError("stride k must be >= 1");
  const int L = ep.length();
  if (L < 1) throw ValidationError("episode '" + ep.id + "' is empty");
  if (start < 0 || start >= L) throw ValidationError("window start out of range");
  WindowSample w;
  w.episode_id = ep.id;
  w.stride = k;
  const int last = start + ((L - 1 - start) / k) * k;
  for (int i = 0; i < W; ++i) {
    const int t = start + i * k;
    const bool pad = t > last;
    w.frame_indices.push_back(pad ? last : t);
    w.pad_mask.push_back(pad);
  }
  w.interval_targets.assign(static_cast<std::size_t>(W - 1), kUnlabeled);
  w.completion_targets.assign(static_cast<std::size_t>(W), -1);
  w.has_lead = start - k >= 0;
  return w;
}

std::vector<WindowSample> window_samples(const sim::Episode& ep, int W, int k) {
  if (W < 2) throw ConfigError("window W must be >= 2");
  if (k < 1) throw ConfigError("stride k must be >= 1");
  const int t_sub = subsampled_length(ep.length(), k);
  if (t_sub < 1) throw ValidationError("episode '" + ep.id + "' is empty");
  std::vector<WindowSample> out;
  const int n = tile_count(t_sub, W);
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) out.push_back(make_window(ep, j * W * k, W, k));
  return out;
}

int completion_target(const sim::Episode& ep, int t, double eps) {
  const auto& gt = ep.frames[static_cast<std::size_t>(t)].gt_progress;
  if (!gt) return -1;
  return *gt >= 1.0 - eps ? 1 : 0;
}

LabelIndex build_label_index(const std::vector<lab::TriStateLabel>& labels,
                             const EpisodeStore& store, int k) {
  for (const auto& l : labels) {
    lab::validate(l);
    if (!store.contains(l.episode_id)) {
      throw ValidationError("label references unknown episode '" + l.episode_id + "'");
    }
    if (l.t_b - l.t_a != k) {
      throw ValidationError("label on '" + l.episode_id + "' spans " +
                            std::to_string(l.t_b - l.t_a) + " frames, expected k=" +
                            std::to_string(k));
    }
    if (l.t_b >= store.meta(l.episode_id).length) {
      throw ValidationError("label on '" + l.episode_id + "' references frame " +
                            std::to_string(l.t_b) + " past the episode end");
    }
  }
  LabelIndex index;
  for (const auto& [key, label] : lab::merge_labels(labels)) index[key] = label.y;
  return index;
}

void attach_labels(WindowSample& w, const sim::Episode& ep, const LabelIndex& index,
                   double eps) {
  auto lookup = [&](int t_a) {
    auto it = index.find({ep.id, t_a});
    return it == index.end() ? kUnlabeled : it->second;
  };
  const std::size_t W = w.frame_indices.size();
  for (std::size_t i = 0; i + 1 < W; ++i) {
    w.interval_targets[i] = w.pad_mask[i + 1] ? kUnlabeled : lookup(w.frame_indices[i]);
  }
  for (std::size_t i = 0; i < W; ++i) {
    w.completion_targets[i] = w.pad_mask[i] ? -1 : completion_target(ep, w.frame_indices[i], eps);
  }
  w.lead_target = w.has_lead ? lookup(w.frame_indices[0] - w.stride) : kUnlabeled;
}

}  // namespace arm::data
