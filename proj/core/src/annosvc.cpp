#include "arm/annosvc.hpp"

#include <png.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace arm::anno {

using nlohmann::ordered_json;

Ordering ordering_from_string(const std::string& s) {
  if (s == "round_robin") return Ordering::round_robin;
  if (s == "sequential") return Ordering::sequential;
  throw ConfigError("unknown task ordering '" + s + "'");
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

std::string task_id_of(const std::string& episode_id, int t_a) {
  return episode_id + "@" + std::to_string(t_a);
}

}  // namespace

TaskBoard::TaskBoard(const std::vector<data::EpisodeMeta>& episodes, std::string labels_path,
                     BoardOptions options, Clock clock)
    : labels_path_(std::move(labels_path)), options_(options), clock_(std::move(clock)) {
  if (options_.gap < 1) throw ConfigError("annotation pair gap must be >= 1");
  if (options_.lease_seconds < 1) throw ConfigError("lease timeout must be >= 1 s");
  struct Slot {
    std::size_t j, e;
    Task task;
  };
  std::vector<Slot> slots;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& m = episodes[e];
    for (int t = 0, j = 0; t + options_.gap <= m.length - 1; t += options_.gap, ++j) {
      slots.push_back({static_cast<std::size_t>(j), e,
                       {task_id_of(m.id, t), m.id, t, t + options_.gap, TaskStatus::open}});
    }
  }
  if (options_.ordering == Ordering::round_robin) {
    std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
      return std::tie(a.j, a.e) < std::tie(b.j, b.e);
    });
  }
  for (auto& s : slots) {
    by_id_[s.task.task_id] = tasks_.size();
    tasks_.push_back(std::move(s.task));
  }
  for (const auto& l : lab::read_labels(labels_path_)) {
    if (lab::annotator_class(l.annotator) != lab::AnnotatorClass::human) continue;
    auto it = by_id_.find(task_id_of(l.episode_id, l.t_a));
    if (it == by_id_.end() || tasks_[it->second].t_b != l.t_b) continue;
    tasks_[it->second].status = TaskStatus::labeled;
    accepted_[it->first] = l;
    per_annotator_[l.annotator] += 1;
  }
}

void TaskBoard::expire(std::int64_t now) {
  for (auto it = leases_.begin(); it != leases_.end();) {
    it = it->second.expires_ms <= now ? leases_.erase(it) : std::next(it);
  }
}

std::optional<Task> TaskBoard::next_task(const std::string& annotator) {
  if (annotator.empty()) throw ValidationError("annotator id is required");
  std::lock_guard lock(mu_);
  const auto now = clock_();
  expire(now);
  const auto expires = now + std::int64_t{options_.lease_seconds} * 1000;
  for (auto& [id, lease] : leases_) {
    if (lease.annotator == annotator) {
      lease.expires_ms = expires;
      return tasks_[by_id_.at(id)];
    }
  }
  for (const auto& t : tasks_) {
    if (t.status == TaskStatus::open && !leases_.count(t.task_id)) {
      leases_[t.task_id] = {annotator, expires};
      return t;
    }
  }
  return std::nullopt;
}

lab::TriStateLabel TaskBoard::submit(const std::string& task_id, const std::string& annotator,
                                     int y) {
  if (annotator.empty()) throw ValidationError("annotator id is required");
  if (y < -1 || y > 1) throw ValidationError("y must be -1, 0 or 1, got " + std::to_string(y));
  std::lock_guard lock(mu_);
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) throw NotFoundError("unknown task '" + task_id + "'");
  auto& task = tasks_[it->second];
  const auto tag = lab::human_annotator(annotator);
  if (task.status == TaskStatus::labeled) {
    const auto& prev = accepted_.at(task_id);
    if (prev.annotator == tag && prev.y == y) return prev;
    throw LeaseError("task '" + task_id + "' is already labeled");
  }
  const auto now = clock_();
  expire(now);
  auto lease = leases_.find(task_id);
  if (lease == leases_.end() || lease->second.annotator != annotator) {
    throw LeaseError("task '" + task_id + "' is not leased to '" + annotator +
                     "' (expired or never taken)");
  }
  lab::TriStateLabel label{task.episode_id, task.t_a, task.t_b, y, tag, now};
  lab::append_label(labels_path_, label);
  leases_.erase(lease);
  task.status = TaskStatus::labeled;
  accepted_[task_id] = label;
  per_annotator_[tag] += 1;
  label_times_.push_back(now);
  return label;
}

Stats TaskBoard::stats() const {
  std::lock_guard lock(mu_);
  Stats s;
  s.total = static_cast<int>(tasks_.size());
  s.labeled = static_cast<int>(accepted_.size());
  s.open = s.total - s.labeled;
  const auto now = clock_();
  for (const auto& [id, lease] : leases_) s.leased += lease.expires_ms > now ? 1 : 0;
  s.per_annotator = per_annotator_;
  if (label_times_.size() >= 2) {
    const double hours = static_cast<double>(label_times_.back() - label_times_.front()) / 3.6e6;
    if (hours > 0) s.labels_per_hour = static_cast<double>(label_times_.size() - 1) / hours;
  }
  return s;
}

std::optional<Task> TaskBoard::task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) return std::nullopt;
  return tasks_[it->second];
}

std::string encode_png(const sim::Image& image) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw ValidationError("image buffer does not match its dimensions");
  }
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(image.width);
  p.height = static_cast<png_uint_32>(image.height);
  p.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw StorageError(std::string("png encode failed: ") + p.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw StorageError(std::string("png encode failed: ") + p.message);
  }
  out.resize(size);
  return out;
}

namespace {

std::string render_png(const sim::Episode& ep, const sim::SimConfig& config, int t, int size) {
  if (t < 0 || t >= ep.length()) {
    throw NotFoundError("episode '" + ep.id + "' has no frame " + std::to_string(t));
  }
  const auto state = sim::state_from_proprio(config, ep.frames[static_cast<std::size_t>(t)].proprio);
  return encode_png(sim::render_frame(config, state, size));
}

}  // namespace

std::string frame_png(const data::EpisodeStore& store, const sim::SimConfig& config,
                      const std::string& episode_id, int t, int size) {
  return render_png(store.read_episode(episode_id), config, t, size);
}

struct Service::Impl {
  const data::EpisodeStore& store;
  sim::SimConfig config;
  ServiceOptions options;
  TaskBoard board;
  httplib::Server server;
  std::thread thread;
  std::mutex cache_mu;
  std::map<std::string, std::shared_ptr<const sim::Episode>> cache;

  Impl(const data::EpisodeStore& s, sim::SimConfig c, std::string labels, ServiceOptions o,
       Clock clock)
      : store(s),
        config(std::move(c)),
        options(std::move(o)),
        board(s.metas(), std::move(labels), options.board, std::move(clock)) {}

  std::shared_ptr<const sim::Episode> episode(const std::string& id) {
    std::lock_guard lock(cache_mu);
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    auto ep = std::make_shared<const sim::Episode>(store.read_episode(id));
    cache.emplace(id, ep);
    return ep;
  }

  void routes();
};

namespace {

void send_error(httplib::Response& res, int status, const Error& e) {
  ordered_json j;
  j["error"] = e.what();
  j["category"] = e.category();
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

int status_of(const Error& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const LeaseError*>(&e)) return 409;
  if (dynamic_cast<const ValidationError*>(&e)) return 400;
  return 500;
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, status_of(e), e);
  }
}

ordered_json task_json(const Task& t, int gap) {
  ordered_json j;
  j["task_id"] = t.task_id;
  j["episode_id"] = t.episode_id;
  j["t_a"] = t.t_a;
  j["t_b"] = t.t_b;
  const auto base = "/api/episodes/" + t.episode_id + "/frames/";
  j["frame_a"] = base + std::to_string(t.t_a) + ".png";
  j["frame_b"] = base + std::to_string(t.t_b) + ".png";
  auto ctx = ordered_json::array();
  for (int s = t.t_a + 1; s < t.t_a + gap; ++s) ctx.push_back(base + std::to_string(s) + ".png");
  j["context"] = ctx;
  j["status"] = t.status == TaskStatus::open ? "open" : "labeled";
  return j;
}

std::string annotator_of(const httplib::Request& req) {
  if (req.has_param("annotator")) return req.get_param_value("annotator");
  return req.get_header_value("X-Annotator");
}

}  // namespace

void Service::Impl::routes() {
  server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto t = board.next_task(annotator_of(req));
      if (!t) {
        res.status = 204;
        return;
      }
      res.set_content(task_json(*t, options.board.gap).dump(), "application/json");
    });
  });

  server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
        auto annotator = body.contains("annotator") ? body.at("annotator").get<std::string>()
                                                    : req.get_header_value("X-Annotator");
        auto label = board.submit(body.at("task_id").get<std::string>(), annotator,
                                  body.at("y").get<int>());
        res.set_content(lab::to_json_line(label), "application/json");
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed label body: ") + e.what());
      }
    });
  });

  server.Get(R"(/api/episodes/([^/]+)/frames/(\d+)\.png)",
             [this](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const auto ep = episode(req.matches[1]);
                 const int t = std::stoi(req.matches[2]);
                 res.set_content(render_png(*ep, config, t, 128), "image/png");
               });
             });

  server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    const auto s = board.stats();
    ordered_json j;
    j["total"] = s.total;
    j["open"] = s.open;
    j["labeled"] = s.labeled;
    j["leased"] = s.leased;
    j["per_annotator"] = s.per_annotator;
    j["labels_per_hour"] = s.labels_per_hour;
    res.set_content(j.dump(), "application/json");
  });

  if (!options.static_dir.empty() && std::filesystem::is_directory(options.static_dir)) {
    server.set_mount_point("/", options.static_dir);
  }
}

Service::Service(const data::EpisodeStore& store, sim::SimConfig config, std::string labels_path,
                 ServiceOptions options, Clock clock)
    : impl_(std::make_unique<Impl>(store, std::move(config), std::move(labels_path),
                                   std::move(options), std::move(clock))) {
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::start() {
  auto& s = impl_->server;
  int port = impl_->options.port;
  if (port == 0) {
    port = s.bind_to_any_port(impl_->options.host);
  } else if (!s.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw StorageError("cannot bind " + impl_->options.host + ":" +
                       std::to_string(impl_->options.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::run() {
  if (!impl_->server.listen(impl_->options.host, impl_->options.port)) {
    throw StorageError("cannot listen on " + impl_->options.host + ":" +
                       std::to_string(impl_->options.port));
  }
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

TaskBoard& Service::board() { return impl_->board; }

}  // namespace arm::anno
