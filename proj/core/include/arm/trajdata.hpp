#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arm/labeling.hpp"
#include "arm/simenv.hpp"

namespace arm::data {

struct EpisodeMeta {
  std::string id;
  int instruction_id = 0;
  sim::Source source = sim::Source::expert;
  sim::Outcome outcome = sim::Outcome::unknown;
  int length = 0;
  int d_vis = 0;
  int d_state = 0;
};

EpisodeMeta meta_of(const sim::Episode& ep);

// Frame rows [vis | proprio | action | gt-or-NaN], little-endian float32.
std::string encode_frames(const sim::Episode& ep);
std::vector<sim::Frame> decode_frames(std::string_view bytes, const EpisodeMeta& meta);

// The episode as it reads back from storage: every real value rounded to
// float32.
sim::Episode storage_rounded(const sim::Episode& ep);

// Directory of <id>.bin blobs plus manifest.jsonl. Single writer.
class EpisodeStore {
 public:
  // Loads an existing manifest if present; the directory is created on the
  // first write.
  explicit EpisodeStore(std::string root);

  // ConflictError for a duplicate id, StorageError on I/O failure.
  void write_episode(const sim::Episode& ep);
  // NotFoundError for an unknown id.
  sim::Episode read_episode(const std::string& id) const;
  const EpisodeMeta& meta(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t size() const { return metas_.size(); }
  const std::vector<EpisodeMeta>& metas() const { return metas_; }
  std::vector<sim::Episode> read_all() const;
  const std::string& root() const { return root_; }

 private:
  std::string root_;
  std::vector<EpisodeMeta> metas_;
  std::map<std::string, std::size_t> index_;
};

inline constexpr int kUnlabeled = -2;

struct WindowSample {
  std::string episode_id;
  std::vector<int> frame_indices;      // W entries
  int stride = 1;
  std::vector<int> interval_targets;   // W-1 entries in {-1,0,1} or kUnlabeled
  std::vector<int> completion_targets; // W entries in {0,1}, -1 when unknown
  std::vector<bool> pad_mask;          // W entries
  // Interval from the frame k before frame_indices[0] into it, when that
  // frame exists. Lets adjacent tiles cover the boundary interval.
  int lead_target = kUnlabeled;
  bool has_lead = false;

  int real_count() const;
};

// Number of subsampled frames at stride k: floor((L-1)/k) + 1.
int subsampled_length(int length, int k);
int tile_count(int t_sub, int W);

// Causal W-frame window starting at frame `start`, spaced k apart; slots past
// the last reachable frame replicate it and are marked padded.
WindowSample make_window(const sim::Episode& ep, int start, int W, int k);

// Non-overlapping tiles of the stride-k subsampled timeline.
std::vector<WindowSample> window_samples(const sim::Episode& ep, int W, int k);

// Completion target of frame t: 1[gt >= 1 - eps]; -1 when gt is absent.
int completion_target(const sim::Episode& ep, int t, double eps);

// Effective interval labels keyed by (episode_id, t_a).
using LabelIndex = std::map<lab::IntervalKey, int>;

// Checks every label against the store (episode exists, frames in range,
// t_b - t_a = k) and merges by precedence. ValidationError otherwise.
LabelIndex build_label_index(const std::vector<lab::TriStateLabel>& labels,
                             const EpisodeStore& store, int k);

// Fills interval and lead targets from the index and completion targets
// from gt.
void attach_labels(WindowSample& w, const sim::Episode& ep, const LabelIndex& index,
                   double eps);

}  // namespace arm::data
