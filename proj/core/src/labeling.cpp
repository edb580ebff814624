#include "arm/labeling.hpp"

#include <filesystem>
#include <fstream>

#include "arm/binio.hpp"
#include "json.hpp"

namespace arm::lab {

using ojson = nlohmann::ordered_json;

AnnotatorClass annotator_class(const std::string& annotator) {
  if (annotator == "oracle") return AnnotatorClass::oracle;
  if (annotator.rfind("human:", 0) == 0 && annotator.size() > 6) return AnnotatorClass::human;
  if (annotator.rfind("model:", 0) == 0 && annotator.size() > 6) return AnnotatorClass::model;
  throw ValidationError("unrecognised annotator tag '" + annotator + "'");
}

std::string human_annotator(const std::string& id) {
  if (id.empty()) throw ValidationError("annotator id must be nonempty");
  return "human:" + id;
}

std::string model_annotator(const std::string& checkpoint_id) {
  return "model:" + checkpoint_id;
}

void validate(const TriStateLabel& label) {
  if (label.y < -1 || label.y > 1) {
    throw ValidationError("label y must be -1, 0 or 1 (got " + std::to_string(label.y) + ")");
  }
  if (label.t_a < 0 || label.t_b <= label.t_a) {
    throw ValidationError("label requires 0 <= t_a < t_b");
  }
  if (label.episode_id.empty()) throw ValidationError("label episode_id is empty");
  annotator_class(label.annotator);
}

int oracle_tristate(double p_a, double p_b, double theta_stag) {
  if (!(p_a >= 0.0 && p_a <= 1.0 && p_b >= 0.0 && p_b <= 1.0)) {
    throw DomainError("oracle_tristate progress values must lie in [0, 1]");
  }
  if (!(theta_stag > 0.0)) throw DomainError("theta_stag must be > 0");
  const double d = p_b - p_a;
  if (d > theta_stag) return 1;
  if (d < -theta_stag) return -1;
  return 0;
}

std::vector<TriStateLabel> label_episode_oracle(const sim::Episode& ep, int k,
                                                double theta_stag) {
  if (k < 1) throw ConfigError("stride k must be >= 1");
  std::vector<TriStateLabel> out;
  for (int t = 0; t + k < ep.length(); t += k) {
    const auto& a = ep.frames[static_cast<std::size_t>(t)].gt_progress;
    const auto& b = ep.frames[static_cast<std::size_t>(t + k)].gt_progress;
    if (!a || !b) {
      throw ValidationError("episode '" + ep.id + "' lacks gt progress at frame " +
                            std::to_string(a ? t + k : t));
    }
    out.push_back({ep.id, t, t + k, oracle_tristate(*a, *b, theta_stag), "oracle", 0});
  }
  return out;
}

std::map<IntervalKey, TriStateLabel> merge_labels(const std::vector<TriStateLabel>& labels) {
  std::map<IntervalKey, TriStateLabel> out;
  for (const auto& l : labels) {
    IntervalKey key{l.episode_id, l.t_a};
    auto it = out.find(key);
    if (it == out.end()) {
      out.emplace(std::move(key), l);
      continue;
    }
    const auto cur = annotator_class(it->second.annotator);
    const auto cand = annotator_class(l.annotator);
    if (cand > cur || (cand == cur && l.timestamp >= it->second.timestamp)) {
      it->second = l;
    }
  }
  return out;
}

std::string to_json_line(const TriStateLabel& l) {
  ojson j;
  j["episode_id"] = l.episode_id;
  j["t_a"] = l.t_a;
  j["t_b"] = l.t_b;
  j["y"] = l.y;
  j["annotator"] = l.annotator;
  j["timestamp"] = l.timestamp;
  return j.dump();
}

TriStateLabel from_json_line(const std::string& line) {
  try {
    const auto j = ojson::parse(line);
    TriStateLabel l;
    l.episode_id = j.at("episode_id").get<std::string>();
    l.t_a = j.at("t_a").get<int>();
    l.t_b = j.at("t_b").get<int>();
    l.y = j.at("y").get<int>();
    l.annotator = j.at("annotator").get<std::string>();
    l.timestamp = j.at("timestamp").get<std::int64_t>();
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed label record: ") + e.what());
  }
}

std::vector<TriStateLabel> read_labels(const std::string& path) {
  std::vector<TriStateLabel> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  if (!in) throw StorageError("cannot read '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_json_line(line));
  }
  return out;
}

void write_labels(const std::string& path, const std::vector<TriStateLabel>& labels) {
  std::string body;
  for (const auto& l : labels) {
    body += to_json_line(l);
    body += '\n';
  }
  io::write_file(path, body);
}

void append_label(const std::string& path, const TriStateLabel& label) {
  io::append_line(path, to_json_line(label));
}

}  // namespace arm::lab
