#pragma once

// HTTP binding for JobService.
//
//   POST   /jobs              {"terrain_ref": id, "config": {...}} -> 202 {job_id, status}
//   GET    /jobs/:id          JobDescriptor
//   DELETE /jobs/:id          cancel, returns the descriptor
//   GET    /jobs/:id/frames   chunked NDJSON: header, frames, terminal
//   GET    /datasets          [{id, ncols, ...}]
//   GET    /datasets/:id/dem  the DEM as Esri ASCII text
//
// Errors are {"errors": [{"field", "message"}]} with 400 (validation) or 404.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "cafl/error.hpp"
#include "cafl/server.hpp"

namespace cafl::server {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path dataset_dir = "datasets";
  fs::path job_dir;
  unsigned max_jobs = 1;
  fs::path static_dir;  // served at / when set
};

// Relative paths resolve against `base` (the config file's directory).
inline ServerConfig server_config_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  ServerConfig c;
  auto path_of = [&](const char* key, fs::path& out) {
    if (!j.contains(key)) return;
    fs::path p = j.at(key).get<std::string>();
    out = p.is_relative() && !base.empty() ? base / p : p;
  };
  try {
    if (j.contains("host")) c.host = j.at("host").get<std::string>();
    if (j.contains("port")) c.port = j.at("port").get<int>();
    if (j.contains("max_jobs")) c.max_jobs = j.at("max_jobs").get<unsigned>();
    path_of("dataset_dir", c.dataset_dir);
    path_of("job_dir", c.job_dir);
    path_of("static_dir", c.static_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("server config: ") + e.what());
  }
  if (!j.contains("dataset_dir") && !base.empty()) c.dataset_dir = base / c.dataset_dir;
  if (c.max_jobs == 0) throw ParseError("server config: max_jobs must be >= 1");
  return c;
}

inline ServerConfig load_server_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open server config " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  return server_config_from_json(j, file.parent_path());
}

class HttpServer {
 public:
  explicit HttpServer(const ServerConfig& cfg)
      : cfg_(cfg), service_(ServiceOptions{cfg.dataset_dir, cfg.job_dir, cfg.max_jobs}) {
    routes();
  }
  ~HttpServer() { stop(); }
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  JobService& service() noexcept { return service_; }

  // Blocks until stop().
  bool listen() { return http_.listen(cfg_.host, cfg_.port); }

  // Binds an ephemeral port and serves on a background thread. Returns the port.
  int start_background() {
    const int port = http_.bind_to_any_port(cfg_.host);
    if (port < 0) throw Error("cannot bind " + cfg_.host);
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    return port;
  }

  void stop() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  using ojson = nlohmann::ordered_json;

  static void reply(httplib::Response& res, int code, const ojson& body) {
    res.status = code;
    res.set_content(body.dump(), "application/json");
  }
  static ojson errors_body(const std::vector<FieldIssue>& issues) {
    ojson arr = ojson::array();
    for (const auto& i : issues) arr.push_back({{"field", i.field}, {"message", i.message}});
    return {{"errors", std::move(arr)}};
  }
  static void not_found(httplib::Response& res, const std::string& field, const std::string& what) {
    reply(res, 404, errors_body({{field, what}}));
  }

  void routes() {
    http_.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        return reply(res, 400, errors_body({{"body", e.what()}}));
      }
      if (!body.is_object() || !body.contains("terrain_ref") || !body["terrain_ref"].is_string())
        return reply(res, 400, errors_body({{"terrain_ref", "required string"}}));
      const std::string ref = body["terrain_ref"].get<std::string>();
      nlohmann::json config = body.value("config", nlohmann::json::object());
      const SubmitResult r = service_.submit(config, ref);
      if (r.unknown_terrain) return reply(res, 404, errors_body(r.errors));
      if (!r.errors.empty()) return reply(res, 400, errors_body(r.errors));
      reply(res, 202, ojson{{"job_id", *r.job_id}, {"status", "queued"}});
    });

    http_.Get("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
      const auto d = service_.status(req.path_params.at("id"));
      if (!d) return not_found(res, "job_id", "unknown job");
      reply(res, 200, descriptor_json(*d));
    });

    http_.Delete("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      if (!service_.cancel(id)) return not_found(res, "job_id", "unknown job");
      reply(res, 200, descriptor_json(*service_.status(id)));
    });

    http_.Get("/jobs/:id/frames", [this](const httplib::Request& req, httplib::Response& res) {
      const MessageLog* log = service_.log_of(req.path_params.at("id"));
      if (!log) return not_found(res, "job_id", "unknown job");
      auto next = std::make_shared<std::size_t>(0);
      res.set_chunked_content_provider("application/x-ndjson", [log, next](std::size_t, httplib::DataSink& sink) {
        bool ended = false;
        auto msg = log->read(*next, std::chrono::milliseconds(250), &ended);
        if (msg) {
          msg->push_back('\n');
          if (!sink.write(msg->data(), msg->size())) return false;
          ++*next;
        } else if (ended) {
          sink.done();
        } else if (sink.is_writable && !sink.is_writable()) {
          return false;
        }
        return true;
      });
    });

    http_.Get("/datasets", [this](const httplib::Request&, httplib::Response& res) {
      ojson arr = ojson::array();
      for (const auto& d : service_.datasets().list()) arr.push_back(dataset_json(d));
      reply(res, 200, arr);
    });

    http_.Get("/datasets/:id/dem", [this](const httplib::Request& req, httplib::Response& res) {
      const auto d = service_.datasets().find(req.path_params.at("id"));
      if (!d) return not_found(res, "dataset", "unknown dataset");
      std::ifstream in(d->dem_path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      res.set_content(ss.str(), "text/plain");
    });

    if (!cfg_.static_dir.empty()) http_.set_mount_point("/", cfg_.static_dir.string());
  }

  ServerConfig cfg_;
  JobService service_;
  httplib::Server http_;
  std::thread thread_;
};

}  // namespace cafl::server
