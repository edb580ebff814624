#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "arm/errors.hpp"
#include "arm/simenv.hpp"

namespace arm::lab {

enum class AnnotatorClass { model = 0, oracle = 1, human = 2 };

struct TriStateLabel {
  std::string episode_id;
  int t_a = 0;
  int t_b = 0;
  int y = 0;
  std::string annotator;  // "oracle", "human:<id>", "model:<checkpoint-id>"
  std::int64_t timestamp = 0;  // ms since epoch; 0 for generated labels
  friend bool operator==(const TriStateLabel&, const TriStateLabel&) = default;
};

// ValidationError for an unrecognised annotator tag.
AnnotatorClass annotator_class(const std::string& annotator);
std::string human_annotator(const std::string& id);
std::string model_annotator(const std::string& checkpoint_id);
// ValidationError unless y in {-1,0,1}, t_a < t_b and the annotator is valid.
void validate(const TriStateLabel& label);

// +1 if P_b - P_a > theta, -1 if < -theta, else 0.
int oracle_tristate(double p_a, double p_b, double theta_stag);

// One oracle label per stride-k interval (t_a = 0, k, 2k, ...).
// ValidationError if any involved frame lacks gt progress.
std::vector<TriStateLabel> label_episode_oracle(const sim::Episode& ep, int k,
                                                double theta_stag);

// Key of an interval: (episode_id, t_a).
using IntervalKey = std::pair<std::string, int>;

// Precedence human > oracle > model; within a class the latest timestamp
// wins, ties going to the later entry in the input order.
std::map<IntervalKey, TriStateLabel> merge_labels(const std::vector<TriStateLabel>& labels);

std::string to_json_line(const TriStateLabel& label);
TriStateLabel from_json_line(const std::string& line);

// Missing file reads as an empty log.
std::vector<TriStateLabel> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<TriStateLabel>& labels);
void append_label(const std::string& path, const TriStateLabel& label);

}  // namespace arm::lab
