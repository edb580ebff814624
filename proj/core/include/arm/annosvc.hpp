#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arm/labeling.hpp"
#include "arm/simenv.hpp"
#include "arm/trajdata.hpp"

namespace arm::anno {

enum class TaskStatus { open, labeled };

struct Task {
  std::string task_id;  // "<episode_id>@<t_a>"
  std::string episode_id;
  int t_a = 0;
  int t_b = 0;
  TaskStatus status = TaskStatus::open;
};

enum class Ordering { round_robin, sequential };
Ordering ordering_from_string(const std::string& s);

// Milliseconds since the epoch; injectable for tests.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct BoardOptions {
  int gap = 8;
  int lease_seconds = 120;
  Ordering ordering = Ordering::round_robin;
};

struct Stats {
  int total = 0;
  int open = 0;
  int labeled = 0;
  int leased = 0;
  std::map<std::string, int> per_annotator;
  double labels_per_hour = 0.0;
};

// Task queue over every gap-spaced interval of a set of episodes. A task is
// labeled once it carries a human label; labels go to an append-only JSONL
// log. All members are serialized by one mutex.
class TaskBoard {
 public:
  TaskBoard(const std::vector<data::EpisodeMeta>& episodes, std::string labels_path,
            BoardOptions options, Clock clock = system_clock_ms);

  // Oldest open, unleased task in queue order, leased to `annotator`; the
  // annotator's own live lease is returned again. nullopt when none remain.
  std::optional<Task> next_task(const std::string& annotator);

  // LeaseError when the task is not leased to `annotator` or the lease
  // expired; ValidationError for y outside {-1,0,1} or an empty id;
  // NotFoundError for an unknown task. A repeat of an accepted submission
  // returns the stored label without writing.
  lab::TriStateLabel submit(const std::string& task_id, const std::string& annotator, int y);

  Stats stats() const;
  std::optional<Task> task(const std::string& task_id) const;

 private:
  struct Lease {
    std::string annotator;
    std::int64_t expires_ms;
  };
  void expire(std::int64_t now);

  std::string labels_path_;
  BoardOptions options_;
  Clock clock_;
  std::vector<Task> tasks_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, Lease> leases_;
  std::map<std::string, lab::TriStateLabel> accepted_;
  std::map<std::string, int> per_annotator_;
  std::vector<std::int64_t> label_times_;
  mutable std::mutex mu_;
};

// 8-bit grayscale PNG.
std::string encode_png(const sim::Image& image);

// Deterministic rendering of a stored frame; NotFoundError when the episode
// or frame does not exist.
std::string frame_png(const data::EpisodeStore& store, const sim::SimConfig& config,
                      const std::string& episode_id, int t, int size = 128);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string static_dir;  // UI bundle, optional
  BoardOptions board;
};

// HTTP front end: GET /api/tasks/next, POST /api/labels,
// GET /api/episodes/<id>/frames/<t>.png, GET /api/stats, static files at /.
class Service {
 public:
  Service(const data::EpisodeStore& store, sim::SimConfig config, std::string labels_path,
          ServiceOptions options, Clock clock = system_clock_ms);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  TaskBoard& board();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace arm::anno
