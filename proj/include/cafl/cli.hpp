#pragma once

// Command-line front end. Exit codes: 0 success, 1 bad input or usage,
// 2 the simulation went unstable.
//
//   cafl run    --dem a.asc [--roughness n.asc | --roughness-const 0.03] [--config c.json] --out-dir d
//   cafl bench  --dem a.asc [--config c.json] --threads-list 1,2,4,8 --block-list 1000,70000 [--csv f]
//   cafl impact (--frames-dir d | --asc depth.asc) --features f.geojson [--threshold 0.05] --out-dir d
//   cafl frame  --asc depth.asc --dem a.asc [--out f.json]
//   cafl serve  [--config server.json] [--host h] [--port p]

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cafl/bench.hpp"
#include "cafl/config.hpp"
#include "cafl/features.hpp"
#include "cafl/frames.hpp"
#include "cafl/impact.hpp"
#include "cafl/raster_io.hpp"
#include "cafl/run.hpp"
#include "cafl/server_http.hpp"

namespace cafl::cli {

namespace fs = std::filesystem;

struct TerrainArgs {
  std::string dem;
  std::string roughness;
  std::optional<double> roughness_const;
  std::string crs_label;
};

struct ExecArgs {
  std::string config;
  std::optional<std::string> policy;
  std::optional<unsigned> threads;
  std::optional<std::size_t> block_size;
  std::optional<double> dt;
  std::optional<double> duration;
  std::optional<double> snapshot_interval;
};

inline void add_terrain_options(CLI::App& sub, TerrainArgs& a) {
  sub.add_option("--dem", a.dem, "DEM raster (Esri ASCII)")->required();
  auto* r = sub.add_option("--roughness", a.roughness, "Manning roughness raster aligned with the DEM");
  auto* rc = sub.add_option("--roughness-const", a.roughness_const, "uniform Manning roughness (default 0.03)");
  r->excludes(rc);
  sub.add_option("--crs-label", a.crs_label, "CRS label carried into frames");
}

inline void add_exec_options(CLI::App& sub, ExecArgs& a) {
  sub.add_option("--config", a.config, "simulation config JSON");
  sub.add_option("--policy", a.policy, "serial | static | dynamic");
  sub.add_option("--threads", a.threads, "worker threads");
  sub.add_option("--block-size", a.block_size, "cells per block (0 = auto-tune)");
  sub.add_option("--dt", a.dt, "time step (s)");
  sub.add_option("--duration", a.duration, "simulated time (s)");
  sub.add_option("--snapshot-interval", a.snapshot_interval, "time between frames (s)");
}

// Raster errors are prefixed with the flag that named the file.
inline RasterLayer read_flag_raster(const std::string& path, const char* flag) {
  try {
    return read_ascii_grid_file(path);
  } catch (const ParseError& e) {
    throw ParseError(std::string(flag) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(flag) + ": " + e.what());
  }
}

inline TerrainGrid load_terrain(const TerrainArgs& a) {
  const RasterLayer dem = read_flag_raster(a.dem, "--dem");
  if (!a.roughness.empty()) return make_terrain(dem, read_flag_raster(a.roughness, "--roughness"), a.crs_label);
  return make_terrain(dem, a.roughness_const.value_or(0.03), a.crs_label);
}

// Flags override the config file, which overrides the defaults.
inline SimConfig load_config(const ExecArgs& a) {
  SimConfig c = a.config.empty() ? SimConfig{} : load_config_file(a.config);
  if (a.policy) {
    auto p = parse_policy(*a.policy);
    if (!p) throw ParseError("--policy must be serial, static or dynamic");
    c.scheduling = *p;
  }
  if (a.threads) c.threads = *a.threads;
  if (a.block_size) c.block_size = *a.block_size;
  if (a.dt) c.dt = *a.dt;
  if (a.duration) c.duration = *a.duration;
  if (a.snapshot_interval) c.snapshot_interval = *a.snapshot_interval;
  return c;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ParseError(std::string(flag) + ": '" + tok + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ParseError(std::string(flag) + " is empty");
  return out;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

inline RasterLayer depth_layer(const FloodState& s, const TerrainGrid& t) {
  RasterLayer l{t.header, s.depth};
  for (std::size_t i = 0; i < l.values.size(); ++i)
    if (!t.valid(i)) l.values[i] = t.header.nodata_value;
  return l;
}

inline std::string asc_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "depth_%06zu.asc", step);
  return buf;
}

inline int run_command(const TerrainArgs& ta, const ExecArgs& ea, const std::string& out_dir, bool emit_asc,
                       std::ostream& out, std::ostream& err) {
  const TerrainGrid terrain = load_terrain(ta);
  const SimConfig cfg = load_config(ea);
  if (auto issues = validate(cfg, terrain); !issues.empty()) {
    for (const auto& i : issues) err << "error: " << i.field << ": " << i.message << '\n';
    return 1;
  }
  fs::create_directories(out_dir);
  auto sim = make_simulation(terrain, cfg);
  for (const auto& w : sim->warnings()) err << "warning: " << w << '\n';

  RunSinks sinks;
  sinks.on_frame = [&](const FloodFrame& f, const FloodState& s) {
    write_text(fs::path(out_dir) / frame_file_name(s.step), serialize_frame(f) + "\n");
    if (emit_asc) write_ascii_grid_file(depth_layer(s, terrain), (fs::path(out_dir) / asc_name(s.step)).string());
  };
  try {
    const RunReport rep = run(*sim, sinks);
    write_text(fs::path(out_dir) / "report.json", report_to_json(rep).dump(2) + "\n");
    out << rep.status << ": " << rep.steps << " steps, " << rep.frames_emitted << " frames, mass balance error "
        << detail::format_double(rep.mass_balance_error) << ", " << detail::format_double(rep.wall_seconds) << " s\n";
    return 0;
  } catch (const RunAborted& e) {
    write_text(fs::path(out_dir) / "report.json", report_to_json(e.report()).dump(2) + "\n");
    write_text(fs::path(out_dir) / "last_stable.json", serialize_frame(e.last_stable()) + "\n");
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

inline int bench_command(const TerrainArgs& ta, const ExecArgs& ea, const std::string& threads_list,
                         const std::string& block_list, std::size_t steps, std::size_t repeats,
                         const std::string& csv, std::ostream& out, std::ostream& err) {
  const TerrainGrid terrain = load_terrain(ta);
  const SimConfig cfg = load_config(ea);
  if (auto issues = validate(cfg, terrain); !issues.empty()) {
    for (const auto& i : issues) err << "error: " << i.field << ": " << i.message << '\n';
    return 1;
  }
  const auto threads = parse_list<unsigned>(threads_list, "--threads-list");
  const auto blocks = parse_list<std::size_t>(block_list, "--block-list");
  for (auto b : blocks)
    if (b == 0) throw ParseError("--block-list: block sizes must be >= 1");
  SweepOptions opt;
  opt.steps = steps;
  opt.repeats = repeats;
  SweepTable table;
  try {
    table = measure_speedup(terrain, cfg, threads, blocks, opt);
  } catch (const InstabilityError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  write_sweep_csv(table, out);
  if (!csv.empty()) {
    std::ofstream f(csv, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + csv);
    write_sweep_csv(table, f);
  }
  if (const SweepRow* b = table.best())
    out << "best: policy=" << to_string(b->policy) << " threads=" << b->threads << " block_size=" << b->block_size
        << " speedup=" << detail::format_double(b->speedup) << '\n';
  out << "hardware threads: " << std::thread::hardware_concurrency() << '\n';
  return 0;
}

// Per-cell maximum depth over every frame in a directory, on the grid the
// frames describe.
inline RasterLayer envelope_from_frames(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.starts_with("frame_") && n.ends_with(".json")) files.push_back(e.path());
  }
  if (files.empty()) throw Error("no frame files in " + dir.string());
  std::sort(files.begin(), files.end());
  RasterLayer env;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const FloodFrame f = parse_frame(ss.str());
    auto dim = [&](const char* key) -> std::size_t {
      auto it = f.information.find(key);
      if (it == f.information.end()) throw ParseError(p.string() + ": frame information lacks " + key);
      return std::stoull(it->second);
    };
    GridHeader h;
    h.nrows = dim("nrows");
    h.ncols = dim("ncols");
    h.xllcorner = f.xllcorner;
    h.yllcorner = f.yllcorner;
    h.cellsize = f.cellsize;
    if (env.values.empty()) {
      env.header = h;
      env.values.assign(h.cell_count(), 0.0);
    } else if (!env.header.aligned_with(h)) {
      throw Error(p.string() + ": frame grid differs from the first frame");
    }
    const auto g = frame_depth_grid(f, h.nrows, h.ncols);
    for (std::size_t i = 0; i < g.size(); ++i) env.values[i] = std::max(env.values[i], g[i]);
  }
  return env;
}

inline int impact_command(const std::string& frames_dir, const std::string& asc, const std::string& features,
                          double threshold, const std::string& out_dir, std::ostream& out) {
  const RasterLayer depth = !asc.empty() ? read_flag_raster(asc, "--asc") : envelope_from_frames(frames_dir);
  const FeatureSet fs = load_geojson_features_file(features);
  const ImpactReport rep = assess(depth.values, depth.header, fs, threshold);
  fs::create_directories(out_dir);
  {
    std::ofstream csv(fs::path(out_dir) / "impact.csv", std::ios::binary | std::ios::trunc);
    write_impact_csv(rep, csv);
  }
  write_text(fs::path(out_dir) / "impact.geojson", impact_geojson(rep, fs).dump(2) + "\n");
  for (const auto& [kind, s] : rep.summary) out << kind << ": " << s.affected << " of " << s.total << " affected\n";
  for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
  return 0;
}

inline int frame_command(const std::string& asc, const std::string& dem, double threshold, double time,
                         std::size_t step, const std::string& out_file, std::ostream& out) {
  const RasterLayer depth = read_flag_raster(asc, "--asc");
  const TerrainGrid t = make_terrain(read_flag_raster(dem, "--dem"), 0.03);
  if (!depth.header.aligned_with(t.header)) throw Error("depth raster is not aligned with the DEM");
  FloodState s(t.rows(), t.cols());
  for (std::size_t i = 0; i < s.depth.size(); ++i)
    s.depth[i] = depth.is_nodata(i) || !t.valid(i) ? 0.0 : std::max(0.0, depth.values[i]);
  s.time = time;
  s.step = step;
  const std::string text = serialize_frame(build_frame(s, t, threshold)) + "\n";
  if (out_file.empty()) out << text;
  else write_text(out_file, text);
  return 0;
}

namespace detail {
inline std::atomic<bool> stop_requested{false};
inline void on_signal(int) { stop_requested = true; }
}  // namespace detail

inline int serve_command(const std::string& config, const std::optional<std::string>& host,
                         const std::optional<int>& port, const std::optional<std::string>& datasets,
                         std::ostream& out) {
  server::ServerConfig cfg = config.empty() ? server::ServerConfig{} : server::load_server_config(config);
  if (host) cfg.host = *host;
  if (port) cfg.port = *port;
  if (datasets) cfg.dataset_dir = *datasets;
  server::HttpServer http(cfg);
  const int bound = cfg.port == 0 ? http.start_background() : cfg.port;
  std::signal(SIGINT, detail::on_signal);
  std::signal(SIGTERM, detail::on_signal);
  if (cfg.port != 0) {
    std::thread t([&] { http.listen(); });
    out << "listening on " << cfg.host << ':' << bound << std::endl;
    while (!detail::stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    http.stop();
    t.join();
    return 0;
  }
  out << "listening on " << cfg.host << ':' << bound << std::endl;
  while (!detail::stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  http.stop();
  return 0;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cellular-automaton flood simulation"};
  app.require_subcommand(1);

  TerrainArgs run_t, bench_t;
  ExecArgs run_e, bench_e;
  std::string out_dir;
  bool emit_asc = false;
  auto* run = app.add_subcommand("run", "simulate a scenario and write frames and a report");
  add_terrain_options(*run, run_t);
  add_exec_options(*run, run_e);
  run->add_option("--out-dir", out_dir, "output directory")->required();
  run->add_flag("--emit-asc", emit_asc, "also write each snapshot's depth raster");

  std::string threads_list = "1,2,4,8", block_list = "1000,10000,70000", csv;
  std::size_t bench_steps = 200, repeats = 1;
  auto* bench = app.add_subcommand("bench", "time the scheduling policies over thread counts and block sizes");
  add_terrain_options(*bench, bench_t);
  add_exec_options(*bench, bench_e);
  bench->add_option("--threads-list", threads_list, "comma-separated thread counts");
  bench->add_option("--block-list", block_list, "comma-separated block sizes for the dynamic policy");
  bench->add_option("--steps", bench_steps, "steps per timed run");
  bench->add_option("--repeats", repeats, "best of n timings");
  bench->add_option("--csv", csv, "write the table to this file");

  std::string frames_dir, impact_asc, features, impact_out;
  double threshold = 0.05;
  auto* impact = app.add_subcommand("impact", "assess flooded features");
  auto* fd = impact->add_option("--frames-dir", frames_dir, "directory of frame files (maximum depth is used)");
  auto* ia = impact->add_option("--asc", impact_asc, "depth raster");
  fd->excludes(ia);
  impact->add_option("--features", features, "GeoJSON FeatureCollection")->required();
  impact->add_option("--threshold", threshold, "depth (m) above which a feature is affected");
  impact->add_option("--out-dir", impact_out, "output directory")->required();

  std::string frame_asc, frame_dem, frame_out;
  double frame_thr = 1e-4, frame_time = 0.0;
  std::size_t frame_step = 0;
  auto* frame = app.add_subcommand("frame", "convert a depth raster to a frame document");
  frame->add_option("--asc", frame_asc, "depth raster")->required();
  frame->add_option("--dem", frame_dem, "DEM raster")->required();
  frame->add_option("--threshold", frame_thr, "wet threshold (m)");
  frame->add_option("--time", frame_time, "time stamp (s)");
  frame->add_option("--step", frame_step, "step number");
  frame->add_option("--out", frame_out, "output file (default stdout)");

  std::string serve_cfg;
  std::optional<std::string> serve_host, serve_datasets;
  std::optional<int> serve_port;
  auto* serve = app.add_subcommand("serve", "run the HTTP job service");
  serve->add_option("--config", serve_cfg, "server config JSON");
  serve->add_option("--host", serve_host, "bind address");
  serve->add_option("--port", serve_port, "port (0 picks a free one)");
  serve->add_option("--datasets", serve_datasets, "dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*run) return run_command(run_t, run_e, out_dir, emit_asc, out, err);
    if (*bench) return bench_command(bench_t, bench_e, threads_list, block_list, bench_steps, repeats, csv, out, err);
    if (*impact) {
      if (frames_dir.empty() && impact_asc.empty()) {
        err << "error: impact needs --frames-dir or --asc\n";
        return 1;
      }
      return impact_command(frames_dir, impact_asc, features, threshold, impact_out, out);
    }
    if (*frame) return frame_command(frame_asc, frame_dem, frame_thr, frame_time, frame_step, frame_out, out);
    if (*serve) return serve_command(serve_cfg, serve_host, serve_port, serve_datasets, out);
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) err << "error: " << i.field << ": " << i.message << '\n';
    return 1;
  } catch (const InstabilityError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace cafl::cli
