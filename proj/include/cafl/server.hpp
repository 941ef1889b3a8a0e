#pragma once

// Job service behind the HTTP front end: a dataset registry read from a
// directory, a FIFO job queue run by a fixed number of runner threads, and a
// per-job message log on disk that every subscriber replays in order.
//
// Stream messages, one JSON document per line:
//   {"type":"header", ...}       terrain metadata, palette, expected frames
//   <FloodFrame document>        exactly as written by serialize_frame
//   {"type":"terminal", ...}     final status and run summary

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cafl/config.hpp"
#include "cafl/error.hpp"
#include "cafl/frames.hpp"
#include "cafl/raster_io.hpp"
#include "cafl/run.hpp"

namespace cafl::server {

namespace fs = std::filesystem;

struct Dataset {
  std::string id;
  GridHeader header;
  fs::path dem_path;
  std::optional<fs::path> roughness_path;
  double roughness_const = 0.03;
  std::string crs_label;
};

inline nlohmann::ordered_json dataset_json(const Dataset& d) {
  return {{"id", d.id},
          {"ncols", d.header.ncols},
          {"nrows", d.header.nrows},
          {"xllcorner", d.header.xllcorner},
          {"yllcorner", d.header.yllcorner},
          {"cellsize", d.header.cellsize},
          {"nodata_value", d.header.nodata_value},
          {"crs_label", d.crs_label}};
}

// Datasets are `<anything>.dataset.json` manifests in one directory:
//   {"id": "valley", "dem": "valley.asc", "roughness": "valley_n.asc"}
// or "roughness_const": 0.03 instead of a roughness raster. Paths are
// relative to the directory. The directory is rescanned on every lookup, so
// dropping files in registers a dataset.
class DatasetRegistry {
 public:
  explicit DatasetRegistry(fs::path dir) : dir_(std::move(dir)) {}

  std::vector<Dataset> list() const {
    std::vector<Dataset> out;
    std::error_code ec;
    if (dir_.empty() || !fs::is_directory(dir_, ec)) return out;
    std::vector<fs::path> manifests;
    for (const auto& e : fs::directory_iterator(dir_, ec)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.size() > 13 && name.ends_with(".dataset.json")) manifests.push_back(e.path());
    }
    std::sort(manifests.begin(), manifests.end());
    for (const auto& m : manifests) {
      try {
        out.push_back(read_manifest(m));
      } catch (const std::exception&) {
        // unreadable manifests are skipped
      }
    }
    return out;
  }

  std::optional<Dataset> find(const std::string& id) const {
    for (auto& d : list())
      if (d.id == id) return d;
    return std::nullopt;
  }

  // Loaded once per dataset id and cached.
  std::shared_ptr<const TerrainGrid> terrain(const Dataset& d) const {
    std::lock_guard lk(mu_);
    if (auto it = cache_.find(d.id); it != cache_.end()) return it->second;
    auto dem = read_ascii_grid_file(d.dem_path.string());
    TerrainGrid t = d.roughness_path ? make_terrain(dem, read_ascii_grid_file(d.roughness_path->string()), d.crs_label)
                                     : make_terrain(dem, d.roughness_const, d.crs_label);
    auto p = std::make_shared<const TerrainGrid>(std::move(t));
    cache_[d.id] = p;
    return p;
  }

 private:
  Dataset read_manifest(const fs::path& m) const {
    std::ifstream in(m);
    auto j = nlohmann::json::parse(in);
    Dataset d;
    d.id = j.at("id").get<std::string>();
    d.dem_path = dir_ / j.at("dem").get<std::string>();
    if (j.contains("roughness")) d.roughness_path = dir_ / j["roughness"].get<std::string>();
    d.roughness_const = j.value("roughness_const", 0.03);
    d.crs_label = j.value("crs_label", "");
    std::ifstream dem(d.dem_path);
    if (!dem) throw Error("missing DEM for dataset " + d.id);
    d.header = read_ascii_header(dem);
    return d;
  }

  fs::path dir_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const TerrainGrid>> cache_;
};

// Append-only message log backed by a file; readers block for new lines.
class MessageLog {
 public:
  explicit MessageLog(fs::path file) : file_(std::move(file)) {
    std::ofstream(file_, std::ios::trunc);
  }

  void append(const std::string& msg, bool terminal = false) {
    std::lock_guard lk(mu_);
    if (closed_) return;
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out.seekp(0, std::ios::end);
    offsets_.push_back(size_);
    out << msg << '\n';
    out.flush();
    size_ += msg.size() + 1;
    if (terminal) closed_ = true;
    cv_.notify_all();
  }

  std::size_t count() const {
    std::lock_guard lk(mu_);
    return offsets_.size();
  }
  bool closed() const {
    std::lock_guard lk(mu_);
    return closed_;
  }

  // Message k, waiting up to `timeout` for it. nullopt when the log ended
  // before k or the wait timed out; `ended` tells which.
  std::optional<std::string> read(std::size_t k, std::chrono::milliseconds timeout, bool* ended = nullptr) const {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return k < offsets_.size() || closed_; });
    if (ended) *ended = k >= offsets_.size() && closed_;
    if (k >= offsets_.size()) return std::nullopt;
    const std::uint64_t begin = offsets_[k];
    const std::uint64_t end = k + 1 < offsets_.size() ? offsets_[k + 1] : size_;
    lk.unlock();
    std::ifstream in(file_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(begin));
    std::string s(static_cast<std::size_t>(end - begin - 1), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
  }

 private:
  fs::path file_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<std::uint64_t> offsets_;
  std::uint64_t size_ = 0;
  bool closed_ = false;
};

enum class JobStatus { queued, running, finished, failed, cancelled };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::finished: return "finished";
    case JobStatus::failed: return "failed";
    case JobStatus::cancelled: return "cancelled";
  }
  return "queued";
}

inline bool is_terminal(JobStatus s) {
  return s == JobStatus::finished || s == JobStatus::failed || s == JobStatus::cancelled;
}

struct JobDescriptor {
  std::string job_id;
  SimConfig config;
  std::string terrain_ref;
  JobStatus status = JobStatus::queued;
  double progress = 0.0;
  std::size_t frames_emitted = 0;
  std::size_t expected_frames = 0;
  std::optional<std::string> error_detail;
  std::optional<std::size_t> failed_step;
};

inline nlohmann::ordered_json descriptor_json(const JobDescriptor& d) {
  nlohmann::ordered_json j;
  j["job_id"] = d.job_id;
  j["terrain_ref"] = d.terrain_ref;
  j["status"] = to_string(d.status);
  j["progress"] = d.progress;
  j["frames_emitted"] = d.frames_emitted;
  j["expected_frames"] = d.expected_frames;
  j["error_detail"] = d.error_detail ? nlohmann::ordered_json(*d.error_detail) : nullptr;
  j["failed_step"] = d.failed_step ? nlohmann::ordered_json(*d.failed_step) : nullptr;
  j["config"] = config_to_json(d.config);
  return j;
}

// 256-step blue ramp, light to dark with increasing depth.
inline std::vector<std::string> default_palette(std::size_t n = 256) {
  std::vector<std::string> out;
  const int a[3] = {222, 235, 247}, b[3] = {8, 48, 107};
  for (std::size_t k = 0; k < n; ++k) {
    const double w = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(a[0] + w * (b[0] - a[0]))),
                  static_cast<int>(std::lround(a[1] + w * (b[1] - a[1]))),
                  static_cast<int>(std::lround(a[2] + w * (b[2] - a[2]))));
    out.emplace_back(buf);
  }
  return out;
}

inline std::size_t expected_frame_count(const SimConfig& c) {
  const std::size_t steps = c.steps_total();
  const std::size_t every = c.snapshot_every();
  return (steps + every - 1) / every + 1;
}

struct SubmitResult {
  std::optional<std::string> job_id;
  std::vector<FieldIssue> errors;
  bool unknown_terrain = false;
};

struct ServiceOptions {
  fs::path dataset_dir;
  fs::path job_dir;
  unsigned max_parallel_jobs = 1;
};

class JobService {
 public:
  explicit JobService(ServiceOptions opt) : opt_(std::move(opt)), registry_(opt_.dataset_dir) {
    if (opt_.job_dir.empty()) opt_.job_dir = fs::temp_directory_path() / "cafl-jobs";
    fs::create_directories(opt_.job_dir);
    for (unsigned k = 0; k < std::max(1u, opt_.max_parallel_jobs); ++k)
      runners_.emplace_back([this] { runner_loop(); });
  }
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;
  ~JobService() {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
      for (auto& [id, job] : jobs_) job->cancel_requested = true;
    }
    cv_.notify_all();
    for (auto& t : runners_) t.join();
  }

  const DatasetRegistry& datasets() const noexcept { return registry_; }

  SubmitResult submit(const nlohmann::json& config_json, const std::string& terrain_ref) {
    SubmitResult res;
    auto ds = registry_.find(terrain_ref);
    if (!ds) {
      res.unknown_terrain = true;
      res.errors.push_back({"terrain_ref", "unknown dataset '" + terrain_ref + "'"});
      return res;
    }
    SimConfig cfg;
    try {
      cfg = config_from_json(config_json);
    } catch (const ParseError& e) {
      res.errors.push_back({"config", e.what()});
      return res;
    }
    std::shared_ptr<const TerrainGrid> terrain;
    try {
      terrain = registry_.terrain(*ds);
    } catch (const std::exception& e) {
      res.errors.push_back({"terrain_ref", std::string("dataset failed to load: ") + e.what()});
      return res;
    }
    res.errors = validate(cfg, *terrain);
    if (!res.errors.empty()) return res;

    auto job = std::make_shared<Job>();
    {
      std::lock_guard lk(mu_);
      char buf[32];
      std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(++next_id_));
      job->desc.job_id = buf;
    }
    job->desc.config = cfg;
    job->desc.terrain_ref = terrain_ref;
    job->desc.expected_frames = expected_frame_count(cfg);
    job->terrain = terrain;
    const fs::path dir = opt_.job_dir / job->desc.job_id;
    fs::remove_all(dir);
    fs::create_directories(dir);
    job->log = std::make_unique<MessageLog>(dir / "stream.ndjson");

    nlohmann::ordered_json header;
    header["type"] = "header";
    header["job_id"] = job->desc.job_id;
    header["dataset"] = dataset_json(*ds);
    header["palette"] = default_palette();
    header["total_expected_frames"] = job->desc.expected_frames;
    header["config"] = config_to_json(cfg);
    job->log->append(header.dump());

    {
      std::lock_guard lk(mu_);
      jobs_[job->desc.job_id] = job;
      queue_.push_back(job);
    }
    cv_.notify_all();
    res.job_id = job->desc.job_id;
    return res;
  }

  std::optional<JobDescriptor> status(const std::string& id) const {
    std::lock_guard lk(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second->desc;
  }

  // Cooperative: a running job stops before its next step. False for unknown ids.
  bool cancel(const std::string& id) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lk(mu_);
      auto it = jobs_.find(id);
      if (it == jobs_.end()) return false;
      job = it->second;
      job->cancel_requested = true;
      if (job->desc.status == JobStatus::queued) {
        job->desc.status = JobStatus::cancelled;
        queue_.erase(std::remove(queue_.begin(), queue_.end(), job), queue_.end());
      } else {
        return true;
      }
    }
    nlohmann::ordered_json t{{"type", "terminal"}, {"job_id", id}, {"status", "cancelled"}, {"frames_emitted", 0}};
    job->log->append(t.dump(), true);
    done_cv_.notify_all();
    return true;
  }

  // Delivers every message of the job in order, blocking until the terminal
  // message. `sink` returning false drops the subscriber. False for unknown ids.
  template <typename Sink>
  bool subscribe(const std::string& id, Sink&& sink) const {
    const MessageLog* log = log_of(id);
    if (!log) return false;
    for (std::size_t k = 0;; ++k) {
      bool ended = false;
      std::optional<std::string> msg;
      while (!(msg = log->read(k, std::chrono::milliseconds(200), &ended)) && !ended) {
      }
      if (!msg) return true;
      if (!sink(*msg)) return true;
    }
  }

  // Non-blocking read of message k for streaming front ends.
  const MessageLog* log_of(const std::string& id) const {
    std::lock_guard lk(mu_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second->log.get();
  }

  // Blocks until the job is terminal or `timeout` passes.
  std::optional<JobDescriptor> wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    auto job = it->second;
    done_cv_.wait_for(lk, timeout, [&] { return is_terminal(job->desc.status); });
    return job->desc;
  }

 private:
  struct Job {
    JobDescriptor desc;
    std::shared_ptr<const TerrainGrid> terrain;
    std::unique_ptr<MessageLog> log;
    std::atomic<bool> cancel_requested{false};
  };

  void runner_loop() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        job = queue_.front();
        queue_.pop_front();
        job->desc.status = JobStatus::running;
      }
      execute(*job);
    }
  }

  void set_terminal(Job& job, JobStatus s, const RunReport* rep) {
    nlohmann::ordered_json t;
    t["type"] = "terminal";
    t["job_id"] = job.desc.job_id;
    t["status"] = to_string(s);
    {
      std::lock_guard lk(mu_);
      job.desc.status = s;
      if (s == JobStatus::finished) job.desc.progress = 1.0;
      t["frames_emitted"] = job.desc.frames_emitted;
      if (job.desc.failed_step) t["failed_step"] = *job.desc.failed_step;
      if (job.desc.error_detail) t["error_detail"] = *job.desc.error_detail;
    }
    if (rep) t["report"] = report_to_json(*rep, false);
    job.log->append(t.dump(), true);
    done_cv_.notify_all();
  }

  void execute(Job& job) {
    RunSinks sinks;
    sinks.on_frame = [&](const FloodFrame& f, const FloodState&) {
      FloodFrame tagged = f;
      tagged.information["job_id"] = job.desc.job_id;
      job.log->append(serialize_frame(tagged));
      std::lock_guard lk(mu_);
      ++job.desc.frames_emitted;
    };
    sinks.on_progress = [&](std::size_t done, std::size_t total) {
      std::lock_guard lk(mu_);
      const double p = total ? static_cast<double>(done) / static_cast<double>(total) : 1.0;
      job.desc.progress = std::max(job.desc.progress, p);
    };
    sinks.cancelled = [&] { return job.cancel_requested.load(); };
    try {
      auto sim = make_simulation(*job.terrain, job.desc.config);
      const RunReport rep = run(*sim, sinks);
      set_terminal(job, rep.status == "cancelled" ? JobStatus::cancelled : JobStatus::finished, &rep);
    } catch (const RunAborted& e) {
      {
        std::lock_guard lk(mu_);
        job.desc.error_detail = e.what();
        job.desc.failed_step = e.step();
      }
      set_terminal(job, JobStatus::failed, &e.report());
    } catch (const InstabilityError& e) {
      {
        std::lock_guard lk(mu_);
        job.desc.error_detail = e.what();
        job.desc.failed_step = e.step();
      }
      set_terminal(job, JobStatus::failed, nullptr);
    } catch (const std::exception& e) {
      {
        std::lock_guard lk(mu_);
        job.desc.error_detail = e.what();
      }
      set_terminal(job, JobStatus::failed, nullptr);
    }
  }

  ServiceOptions opt_;
  DatasetRegistry registry_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  mutable std::condition_variable done_cv_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::vector<std::thread> runners_;
  std::uint64_t next_id_ = 0;
  bool stopping_ = false;
};

}  // namespace cafl::server
