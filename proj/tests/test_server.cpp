#include <gtest/gtest.h>

#include <fstream>
#include <thread>
#include <unistd.h>

#include "cafl/server_http.hpp"
#include "cafl/synthetic.hpp"

using namespace cafl;
using namespace cafl::server;
using namespace std::chrono_literals;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cafl_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// One dataset "basin": a 20x20 valley with uniform roughness.
fs::path dataset_dir(const std::string& name, std::size_t n = 20) {
  const fs::path dir = scratch(name) / "datasets";
  fs::create_directories(dir);
  write_ascii_grid_file(synthetic::valley(n, n).elevation_layer(), (dir / "basin.asc").string());
  std::ofstream(dir / "basin.dataset.json") << R"({"id":"basin","dem":"basin.asc","roughness_const":0.035,"crs_label":"local"})";
  return dir;
}

nlohmann::json scenario(double duration = 1.0, double interval = 0.5) {
  return {{"dt", 0.1},
          {"duration", duration},
          {"snapshot_interval", interval},
          {"inlet_cells", {{{"row", 0}, {"col", 10}, {"mode", "hydrograph"}}}},
          {"hydrograph", {{0, 0.5}, {1000, 0.5}}}};
}

std::vector<std::string> collect(const JobService& svc, const std::string& id) {
  std::vector<std::string> out;
  EXPECT_TRUE(svc.subscribe(id, [&](const std::string& m) {
    out.push_back(m);
    return true;
  }));
  return out;
}

std::string submit_ok(JobService& svc, const nlohmann::json& cfg) {
  const auto r = svc.submit(cfg, "basin");
  EXPECT_TRUE(r.errors.empty()) << (r.errors.empty() ? "" : r.errors[0].field + ": " + r.errors[0].message);
  return r.job_id.value_or("");
}

}  // namespace

TEST(Registry, EmptyAndMissingDirectories) {
  EXPECT_TRUE(DatasetRegistry(scratch("empty")).list().empty());
  EXPECT_TRUE(DatasetRegistry("/definitely/not/here").list().empty());
}

TEST(Registry, ListsManifestsAndSkipsBrokenOnes) {
  const auto dir = dataset_dir("registry");
  std::ofstream(dir / "ghost.dataset.json") << R"({"id":"ghost","dem":"missing.asc"})";
  std::ofstream(dir / "junk.dataset.json") << "{not json";
  DatasetRegistry reg(dir);
  const auto all = reg.list();
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].id, "basin");
  EXPECT_EQ(all[0].header.ncols, 20u);
  EXPECT_EQ(dataset_json(all[0])["crs_label"], "local");
  const auto t = reg.terrain(all[0]);
  EXPECT_EQ(t->roughness[0], 0.035);
  EXPECT_EQ(reg.terrain(all[0]).get(), t.get());
}

TEST(Palette, EndpointsAndLength) {
  const auto p = default_palette();
  ASSERT_EQ(p.size(), 256u);
  EXPECT_EQ(p.front(), "#deebf7");
  EXPECT_EQ(p.back(), "#08306b");
}

TEST(MessageLogTest, ReadsBackInOrderAndEnds) {
  MessageLog log(scratch("log") / "s.ndjson");
  log.append("a");
  log.append("{\"b\":1}");
  log.append("end", true);
  log.append("ignored");
  EXPECT_EQ(log.count(), 3u);
  EXPECT_EQ(*log.read(1, 0ms), "{\"b\":1}");
  bool ended = false;
  EXPECT_FALSE(log.read(3, 10ms, &ended));
  EXPECT_TRUE(ended);
}

TEST(JobServiceTest, StreamIsHeaderFramesTerminal) {
  JobService svc({dataset_dir("stream"), scratch("stream_jobs"), 1});
  const std::string id = submit_ok(svc, scenario(1.0, 0.5));
  const auto msgs = collect(svc, id);
  ASSERT_EQ(msgs.size(), 1u + 3u + 1u);
  const auto header = nlohmann::json::parse(msgs.front());
  EXPECT_EQ(header["type"], "header");
  EXPECT_EQ(header["total_expected_frames"], 3);
  EXPECT_EQ(header["palette"].size(), 256u);
  EXPECT_EQ(header["dataset"]["id"], "basin");
  std::vector<std::string> steps;
  for (std::size_t k = 1; k <= 3; ++k) {
    const FloodFrame f = parse_frame(msgs[k]);
    EXPECT_EQ(f.information.at("job_id"), id);
    steps.push_back(f.information.at("step"));
  }
  EXPECT_EQ(steps, (std::vector<std::string>{"0", "5", "10"}));
  const auto term = nlohmann::json::parse(msgs.back());
  EXPECT_EQ(term["type"], "terminal");
  EXPECT_EQ(term["status"], "finished");
  EXPECT_EQ(term["frames_emitted"], 3);
  EXPECT_EQ(term["report"]["steps"], 10);

  const auto d = svc.status(id);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->status, JobStatus::finished);
  EXPECT_EQ(d->progress, 1.0);
  EXPECT_EQ(d->frames_emitted, 3u);
}

TEST(JobServiceTest, LateSubscriberGetsIdenticalBytes) {
  JobService svc({dataset_dir("replay"), scratch("replay_jobs"), 1});
  const std::string id = submit_ok(svc, scenario(2.0, 0.5));
  std::vector<std::string> early;
  std::thread t([&] { early = collect(svc, id); });
  ASSERT_TRUE(svc.wait(id, 30s));
  t.join();
  const auto late = collect(svc, id);
  EXPECT_EQ(early, late);
  EXPECT_EQ(late.size(), 1u + 5u + 1u);
}

TEST(JobServiceTest, ValidationErrorsNameTheField) {
  JobService svc({dataset_dir("invalid"), scratch("invalid_jobs"), 1});
  auto cfg = scenario();
  cfg["inlet_cells"].push_back({{"row", 99}, {"col", 0}});
  const auto r = svc.submit(cfg, "basin");
  EXPECT_FALSE(r.job_id);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].field, "inlet_cells[1]");

  const auto u = svc.submit(scenario(), "nowhere");
  EXPECT_TRUE(u.unknown_terrain);
  EXPECT_EQ(u.errors[0].field, "terrain_ref");

  const auto p = svc.submit({{"dt", "soon"}}, "basin");
  EXPECT_EQ(p.errors[0].field, "config");
}

TEST(JobServiceTest, InstabilityEndsAsFailedWithStep) {
  JobService svc({dataset_dir("unstable"), scratch("unstable_jobs"), 1});
  nlohmann::json cfg = {{"dt", 0.05},
                        {"duration", 200.0},
                        {"snapshot_interval", 1.0},
                        {"inlet_cells", {{{"row", 10}, {"col", 10}, {"mode", "hydrograph"}}}},
                        {"hydrograph", {{0, 200.0}, {1000, 200.0}}}};
  const std::string id = submit_ok(svc, cfg);
  const auto msgs = collect(svc, id);
  const auto term = nlohmann::json::parse(msgs.back());
  EXPECT_EQ(term["status"], "failed");
  ASSERT_TRUE(term.contains("failed_step"));
  EXPECT_GT(term["failed_step"].get<int>(), 0);
  EXPECT_NE(term["error_detail"].get<std::string>().find("Courant"), std::string::npos);
  const auto d = svc.status(id);
  EXPECT_EQ(d->status, JobStatus::failed);
  EXPECT_EQ(d->failed_step, term["failed_step"].get<std::size_t>());
}

TEST(JobServiceTest, FifoWithOneRunner) {
  JobService svc({dataset_dir("fifo", 60), scratch("fifo_jobs"), 1});
  std::vector<std::string> ids;
  for (int k = 0; k < 3; ++k) ids.push_back(submit_ok(svc, scenario(4.0, 1.0)));
  bool ok = true;
  for (;;) {
    std::vector<JobStatus> s;
    for (const auto& id : ids) s.push_back(svc.status(id)->status);
    int running = 0;
    for (auto x : s) running += x == JobStatus::running;
    if (running > 1) ok = false;
    for (std::size_t k = 1; k < s.size(); ++k)
      if (s[k] != JobStatus::queued && !is_terminal(s[k - 1])) ok = false;
    if (is_terminal(s.back())) break;
    std::this_thread::sleep_for(200us);
  }
  EXPECT_TRUE(ok);
  for (const auto& id : ids) EXPECT_EQ(svc.status(id)->status, JobStatus::finished);
}

TEST(JobServiceTest, CancelQueuedAndRunning) {
  JobService svc({dataset_dir("cancel", 80), scratch("cancel_jobs"), 1});
  const std::string a = submit_ok(svc, scenario(100000.0, 1000.0));
  const std::string b = submit_ok(svc, scenario());
  EXPECT_TRUE(svc.cancel(b));
  EXPECT_EQ(svc.status(b)->status, JobStatus::cancelled);
  const auto bm = collect(svc, b);
  ASSERT_EQ(bm.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(bm[1])["status"], "cancelled");

  while (svc.status(a)->status == JobStatus::queued) std::this_thread::sleep_for(1ms);
  EXPECT_TRUE(svc.cancel(a));
  const auto d = svc.wait(a, 30s);
  EXPECT_EQ(d->status, JobStatus::cancelled);
  EXPECT_LT(d->progress, 1.0);
  EXPECT_EQ(nlohmann::json::parse(collect(svc, a).back())["status"], "cancelled");

  EXPECT_FALSE(svc.cancel("job-999999"));
  EXPECT_FALSE(svc.status("job-999999"));
}

TEST(ServerConfigTest, RelativePathsAndLimits) {
  const auto c = server_config_from_json({{"port", 9000}, {"dataset_dir", "data"}, {"static_dir", "/srv/www"}}, "/etc/cafl");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.dataset_dir, fs::path("/etc/cafl/data"));
  EXPECT_EQ(c.static_dir, fs::path("/srv/www"));
  EXPECT_THROW(server_config_from_json({{"max_jobs", 0}}), ParseError);
  EXPECT_THROW(server_config_from_json({{"port", "x"}}), ParseError);
}

TEST(Http, EndpointsRoundTrip) {
  ServerConfig cfg;
  cfg.dataset_dir = dataset_dir("http");
  cfg.job_dir = scratch("http_jobs");
  HttpServer server(cfg);
  const int port = server.start_background();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  auto ds = cli.Get("/datasets");
  ASSERT_TRUE(ds);
  EXPECT_EQ(ds->status, 200);
  const auto list = nlohmann::json::parse(ds->body);
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0]["id"], "basin");
  EXPECT_EQ(list[0]["nrows"], 20);

  auto dem = cli.Get("/datasets/basin/dem");
  ASSERT_TRUE(dem);
  std::ifstream in(cfg.dataset_dir / "basin.asc");
  EXPECT_EQ(dem->body, std::string(std::istreambuf_iterator<char>(in), {}));
  EXPECT_EQ(cli.Get("/datasets/nope/dem")->status, 404);

  auto bad = cli.Post("/jobs", R"({"terrain_ref":"basin","config":{"dt":-1}})", "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(nlohmann::json::parse(bad->body)["errors"][0]["field"], "dt");
  EXPECT_EQ(cli.Post("/jobs", R"({"terrain_ref":"nope"})", "application/json")->status, 404);
  EXPECT_EQ(cli.Post("/jobs", "not json", "application/json")->status, 400);

  const nlohmann::json body = {{"terrain_ref", "basin"}, {"config", scenario(1.0, 0.5)}};
  auto sub = cli.Post("/jobs", body.dump(), "application/json");
  ASSERT_EQ(sub->status, 202);
  const auto job = nlohmann::json::parse(sub->body);
  EXPECT_EQ(job["status"], "queued");
  const std::string id = job["job_id"];

  auto stream = cli.Get("/jobs/" + id + "/frames");
  ASSERT_TRUE(stream);
  EXPECT_EQ(stream->status, 200);
  EXPECT_EQ(stream->get_header_value("Content-Type"), "application/x-ndjson");
  std::string expect;
  for (const auto& m : collect(server.service(), id)) expect += m + "\n";
  EXPECT_EQ(stream->body, expect);
  EXPECT_EQ(std::count(stream->body.begin(), stream->body.end(), '\n'), 5);

  auto st = cli.Get("/jobs/" + id);
  const auto d = nlohmann::json::parse(st->body);
  EXPECT_EQ(d["status"], "finished");
  EXPECT_EQ(d["progress"], 1.0);
  EXPECT_EQ(d["expected_frames"], 3);
  EXPECT_EQ(cli.Get("/jobs/job-424242")->status, 404);
  EXPECT_EQ(cli.Delete("/jobs/job-424242")->status, 404);
  EXPECT_EQ(cli.Delete("/jobs/" + id)->status, 200);
  server.stop();
}

TEST(Http, EmptyDatasetList) {
  ServerConfig cfg;
  cfg.dataset_dir = scratch("http_empty");
  cfg.job_dir = scratch("http_empty_jobs");
  HttpServer server(cfg);
  httplib::Client cli("127.0.0.1", server.start_background());
  auto r = cli.Get("/datasets");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->body, "[]");
}

TEST(Http, StaticMount) {
  ServerConfig cfg;
  cfg.dataset_dir = scratch("http_static");
  cfg.job_dir = scratch("http_static_jobs");
  cfg.static_dir = scratch("http_static_www");
  std::ofstream(cfg.static_dir / "index.html") << "<p>viewer</p>";
  HttpServer server(cfg);
  httplib::Client cli("127.0.0.1", server.start_background());
  auto r = cli.Get("/index.html");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->body, "<p>viewer</p>");
}
