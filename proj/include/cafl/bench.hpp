#pragma once

// Thread-count and block-size sweeps. Each row times the step loop of the same
// scenario under one (policy, threads, block_size) setting and checks the final
// state bit-for-bit against the serial baseline.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cafl/ca_core.hpp"
#include "cafl/raster_io.hpp"

namespace cafl {

struct SweepRow {
  Policy policy = Policy::serial;
  unsigned threads = 1;
  std::size_t block_size = 0;
  double wall_seconds = 0.0;
  double speedup = 1.0;
  bool valid = true;
  std::vector<std::size_t> per_thread_blocks;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::size_t steps = 0;
  std::size_t cells = 0;
  double serial_seconds = 0.0;

  // Fastest valid non-serial row, else the serial row.
  const SweepRow* best() const {
    const SweepRow* b = nullptr;
    for (const auto& r : rows)
      if (r.valid && (!b || r.wall_seconds < b->wall_seconds)) b = &r;
    return b;
  }
};

// Reference values from the original study, for context in reports. They come
// from an 8-core/16-thread laptop and are not expected to reproduce elsewhere.
struct PaperReference {
  static constexpr double speedup_at_8_threads = 5.008;
  static constexpr double speedup_gain_8_to_20_threads = 0.718;
  static constexpr double time_fraction_at_20_threads = 0.1746;
  static constexpr double best_dynamic_speedup = 6.45;
  static constexpr std::size_t best_block_size = 70000;
};

// FNV-1a over the raw bytes of depth and both flux fields.
inline std::uint64_t state_fingerprint(const FloodState& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t k = 0; k < v.size() * sizeof(double); ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  };
  mix(s.depth);
  mix(s.flux_x);
  mix(s.flux_y);
  return h;
}

inline bool bitwise_equal(const FloodState& a, const FloodState& b) {
  auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return eq(a.depth, b.depth) && eq(a.flux_x, b.flux_x) && eq(a.flux_y, b.flux_y);
}

struct SweepOptions {
  std::size_t steps = 200;
  std::size_t repeats = 1;  // best-of-n timing
  bool include_static = true;
  bool include_dynamic = true;
};

namespace detail {

struct TimedRun {
  double seconds = 0.0;
  FloodState final_state;
  std::vector<std::size_t> per_thread_blocks;
};

inline TimedRun timed_run(const TerrainGrid& terrain, const SimConfig& cfg, const std::vector<double>* initial_depth,
                          std::size_t steps, std::size_t repeats) {
  TimedRun out;
  out.seconds = std::numeric_limits<double>::infinity();
  for (std::size_t rep = 0; rep < std::max<std::size_t>(1, repeats); ++rep) {
    Simulation sim(terrain, cfg);
    if (initial_depth) sim.set_depth(*initial_depth);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < steps; ++k) sim.step();
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (t < out.seconds) {
      out.seconds = t;
      out.final_state = sim.state();
      out.per_thread_blocks = sim.counters().per_thread_blocks;
    }
  }
  return out;
}

}  // namespace detail

// Sweep over thread counts (static rows use ceil(cells / threads) blocks, the
// classic static split; dynamic rows use each entry of block_list). A thread
// count of 1 is the serial baseline, whose speedup is 1 by definition.
inline SweepTable measure_speedup(const TerrainGrid& terrain, const SimConfig& base,
                                  const std::vector<unsigned>& thread_list,
                                  const std::vector<std::size_t>& block_list, const SweepOptions& opt = {},
                                  const std::vector<double>* initial_depth = nullptr) {
  SweepTable table;
  table.steps = opt.steps;
  SimConfig serial = base;
  serial.scheduling = Policy::serial;
  serial.threads = 1;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < terrain.elevation.size(); ++i) cells += terrain.valid(i) ? 1 : 0;
  table.cells = cells;
  serial.block_size = std::max<std::size_t>(1, cells);

  const auto baseline = detail::timed_run(terrain, serial, initial_depth, opt.steps, opt.repeats);
  table.serial_seconds = baseline.seconds;

  auto add_row = [&](Policy policy, unsigned threads, std::size_t block) {
    SimConfig c = base;
    c.scheduling = policy;
    c.threads = threads;
    c.block_size = block;
    const auto r = detail::timed_run(terrain, c, initial_depth, opt.steps, opt.repeats);
    SweepRow row;
    row.policy = policy;
    row.threads = threads;
    row.block_size = block;
    row.wall_seconds = r.seconds;
    row.speedup = baseline.seconds / r.seconds;
    row.valid = bitwise_equal(r.final_state, baseline.final_state);
    row.per_thread_blocks = r.per_thread_blocks;
    table.rows.push_back(row);
  };

  bool serial_listed = false;
  for (unsigned p : thread_list) {
    if (p <= 1) {
      if (serial_listed) continue;
      serial_listed = true;
      SweepRow row;
      row.policy = Policy::serial;
      row.threads = 1;
      row.block_size = serial.block_size;
      row.wall_seconds = baseline.seconds;
      row.speedup = 1.0;
      row.valid = true;
      row.per_thread_blocks = baseline.per_thread_blocks;
      table.rows.push_back(row);
      continue;
    }
    if (opt.include_static) add_row(Policy::static_blocks, p, std::max<std::size_t>(1, (cells + p - 1) / p));
    if (opt.include_dynamic)
      for (std::size_t b : block_list) add_row(Policy::dynamic, p, b);
  }
  return table;
}

inline void write_sweep_csv(const SweepTable& t, std::ostream& out) {
  out << "policy,threads,block_size,wall_seconds,speedup,valid\n";
  for (const auto& r : t.rows)
    out << to_string(r.policy) << ',' << r.threads << ',' << r.block_size << ',' << detail::format_double(r.wall_seconds)
        << ',' << detail::format_double(r.speedup) << ',' << (r.valid ? "true" : "false") << '\n';
}

}  // namespace cafl
