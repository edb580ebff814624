#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "arm/annosvc.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace arm;
using namespace arm::anno;

namespace {

struct Fixture {
  std::filesystem::path dir;
  std::string labels;
  std::vector<data::EpisodeMeta> metas;
  std::atomic<std::int64_t> now{1'000'000};

  explicit Fixture(const std::string& name)
      : dir(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    labels = (dir / "labels.jsonl").string();
    metas = {{"a", 0, sim::Source::expert, sim::Outcome::success, 25, 0},
             {"b", 0, sim::Source::expert, sim::Outcome::success, 17, 0}};
  }
  ~Fixture() { std::filesystem::remove_all(dir); }
  Clock clock() {
    return [this] { return now.load(); };
  }
  TaskBoard board(Ordering o = Ordering::round_robin) {
    return TaskBoard(metas, labels, {8, 120, o}, clock());
  }
};

}  // namespace

TEST(TaskBoard, RoundRobinAndSequentialOrder) {
  Fixture f("arm_board_order");
  // a: 3 intervals, b: 2 intervals.
  auto rr = f.board();
  std::vector<std::string> got;
  for (int i = 0; i < 5; ++i) got.push_back(rr.next_task("u" + std::to_string(i))->task_id);
  EXPECT_EQ(got, (std::vector<std::string>{"a@0", "b@0", "a@8", "b@8", "a@16"}));
  EXPECT_FALSE(rr.next_task("u9"));
  auto seq = f.board(Ordering::sequential);
  EXPECT_EQ(seq.next_task("x")->task_id, "a@0");
  EXPECT_EQ(seq.next_task("y")->task_id, "a@8");
}

TEST(TaskBoard, LeasesExpireAndAreExclusive) {
  Fixture f("arm_board_lease");
  auto b = f.board();
  auto t1 = b.next_task("alice");
  auto t2 = b.next_task("bob");
  ASSERT_TRUE(t1 && t2);
  EXPECT_NE(t1->task_id, t2->task_id);
  EXPECT_EQ(b.next_task("alice")->task_id, t1->task_id);  // same lease again
  EXPECT_THROW(b.submit(t1->task_id, "bob", 1), LeaseError);
  f.now += 121'000;
  EXPECT_THROW(b.submit(t1->task_id, "alice", 1), LeaseError);
  // The expired task returns to the pool, first in order.
  EXPECT_EQ(b.next_task("carol")->task_id, t1->task_id);
}

TEST(TaskBoard, SubmissionIdempotenceAndValidation) {
  Fixture f("arm_board_submit");
  auto b = f.board();
  auto t = *b.next_task("alice");
  EXPECT_THROW(b.submit(t.task_id, "alice", 2), ValidationError);
  EXPECT_THROW(b.submit("zz@0", "alice", 1), NotFoundError);
  auto l = b.submit(t.task_id, "alice", -1);
  EXPECT_EQ(l.annotator, "human:alice");
  EXPECT_EQ(l.t_b - l.t_a, 8);
  auto again = b.submit(t.task_id, "alice", -1);
  EXPECT_EQ(lab::to_json_line(again), lab::to_json_line(l));
  EXPECT_THROW(b.submit(t.task_id, "alice", 1), LeaseError);
  EXPECT_EQ(lab::read_labels(f.labels).size(), 1u);
  auto merged = lab::merge_labels(lab::read_labels(f.labels));
  EXPECT_EQ(merged.at({t.episode_id, t.t_a}).y, -1);
}

TEST(TaskBoard, StatsConserveAndReload) {
  Fixture f("arm_board_stats");
  {
    auto b = f.board();
    auto s0 = b.stats();
    EXPECT_EQ(s0.total, 5);
    EXPECT_EQ(s0.labeled, 0);
    for (int i = 0; i < 3; ++i) {
      auto t = *b.next_task("alice");
      f.now += 30'000;
      b.submit(t.task_id, "alice", 1);
      auto s = b.stats();
      EXPECT_EQ(s.open + s.labeled, s.total);
      EXPECT_EQ(s.labeled, i + 1);
    }
    auto s = b.stats();
    EXPECT_EQ(s.per_annotator.at("human:alice"), 3);
    EXPECT_NEAR(s.labels_per_hour, 120.0, 1e-9);
  }
  auto reloaded = f.board();
  EXPECT_EQ(reloaded.stats().labeled, 3);
  auto t = reloaded.next_task("bob");
  ASSERT_TRUE(t);
  EXPECT_EQ(reloaded.task(t->task_id)->status, TaskStatus::open);
}

TEST(Png, SignatureAndDeterminism) {
  sim::SimConfig c;
  auto s = sim::reset(c, 1);
  auto img = sim::render_frame(c, s, 64);
  auto a = encode_png(img);
  EXPECT_EQ(a.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(a, encode_png(img));
  img.pixels.pop_back();
  EXPECT_THROW(encode_png(img), ValidationError);
}

TEST(Service, HttpRoundTripWithConcurrentClients) {
  Fixture f("arm_service_http");
  sim::SimConfig c;
  data::EpisodeStore store((f.dir / "store").string());
  for (auto& ep : sim::gen_dataset(c, {2, 0, 0, 0, 0, 3})) store.write_episode(ep);
  ServiceOptions opt;
  opt.port = 0;
  Service svc(store, c, f.labels, opt, f.clock());
  const int port = svc.start();

  std::vector<std::string> ids(2);
  std::vector<std::thread> clients;
  for (int i = 0; i < 2; ++i) {
    clients.emplace_back([&, i] {
      httplib::Client cli("127.0.0.1", port);
      auto res = cli.Get("/api/tasks/next?annotator=w" + std::to_string(i));
      if (res && res->status == 200) {
        ids[static_cast<std::size_t>(i)] = nlohmann::json::parse(res->body).at("task_id");
      }
    });
  }
  for (auto& t : clients) t.join();
  ASSERT_FALSE(ids[0].empty());
  ASSERT_FALSE(ids[1].empty());
  EXPECT_NE(ids[0], ids[1]);

  httplib::Client cli("127.0.0.1", port);
  nlohmann::json body{{"task_id", ids[0]}, {"annotator", "w0"}, {"y", 1}};
  auto r = cli.Post("/api/labels", body.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body).at("annotator"), "human:w0");
  auto retry = cli.Post("/api/labels", body.dump(), "application/json");
  EXPECT_EQ(retry->status, 200);
  EXPECT_EQ(lab::read_labels(f.labels).size(), 1u);
  body["y"] = 2;
  body["task_id"] = ids[1];
  body["annotator"] = "w1";
  EXPECT_EQ(cli.Post("/api/labels", body.dump(), "application/json")->status, 400);

  const auto id = store.metas()[0].id;
  auto png1 = cli.Get("/api/episodes/" + id + "/frames/3.png");
  auto png2 = cli.Get("/api/episodes/" + id + "/frames/3.png");
  ASSERT_TRUE(png1 && png2);
  EXPECT_EQ(png1->status, 200);
  EXPECT_EQ(png1->get_header_value("Content-Type"), "image/png");
  EXPECT_FALSE(png1->body.empty());
  EXPECT_EQ(png1->body, png2->body);
  EXPECT_EQ(cli.Get("/api/episodes/nope/frames/0.png")->status, 404);
  EXPECT_EQ(cli.Get("/api/episodes/" + id + "/frames/99999.png")->status, 404);

  auto stats = nlohmann::json::parse(cli.Get("/api/stats")->body);
  EXPECT_EQ(stats.at("labeled"), 1);
  EXPECT_EQ(stats.at("open").get<int>() + 1, stats.at("total").get<int>());
  svc.stop();
}

TEST(Service, NoContentWhenEverythingIsLabeled) {
  Fixture f("arm_service_done");
  sim::SimConfig c;
  data::EpisodeStore store((f.dir / "store").string());
  auto ep = sim::gen_episode(c, sim::Source::expert, 1);
  ep.frames.resize(9);
  store.write_episode(ep);
  ServiceOptions opt;
  opt.port = 0;
  Service svc(store, c, f.labels, opt, f.clock());
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  auto t = nlohmann::json::parse(cli.Get("/api/tasks/next?annotator=z")->body);
  nlohmann::json body{{"task_id", t.at("task_id")}, {"annotator", "z"}, {"y", 0}};
  EXPECT_EQ(cli.Post("/api/labels", body.dump(), "application/json")->status, 200);
  EXPECT_EQ(cli.Get("/api/tasks/next?annotator=z")->status, 204);
}
